//! The HTTP chat backend against a local fake server.

mod common;

use std::time::{Duration, Instant};

use common::{closed_port_url, FakeChatServer, Reply};
use uuvlab::control::{AttitudeController, Channel, ControllerKind};
use uuvlab::env::TraceRow;
use uuvlab::eval::NullPolicy;
use uuvlab::tuner::{
    llm_decide, rule_decide, run_tuning, summarize, ControlLogSummary, DecisionSource, Direction, HttpBackend, Parameter,
    TuningScenario, DEFAULT_TARGET_MSE,
};

const VALID: &str = r#"{"channel":"yaw","parameter":"zeta1","direction":"increase","scale":1.5,"rationale":"slow yaw"}"#;
const OUT_OF_SET: &str = r#"{"channel":"yaw","parameter":"zeta1","direction":"increase","scale":3.0,"rationale":"big"}"#;

fn yaw_error_summary() -> ControlLogSummary {
    let rows: Vec<TraceRow> = (0..200)
        .map(|k| TraceRow { t: k as f64 * 0.01, ref_yaw: 0.3, ref_depth: 1.0, depth: 1.0, ..Default::default() })
        .collect();
    summarize(&rows, (0.0, 2.0), &AttitudeController::new(ControllerKind::ASSurface)).unwrap()
}

fn backend(url: &str, deadline: Duration) -> HttpBackend {
    HttpBackend::new(url, Some("test-key".into()), deadline)
}

#[test]
fn valid_decision_is_applied() {
    let server = FakeChatServer::start(vec![Reply::Content(VALID.into())]);
    let out = llm_decide(&yaw_error_summary(), &backend(&server.url, Duration::from_secs(5)), DEFAULT_TARGET_MSE);
    assert_eq!(out.source, DecisionSource::Backend);
    assert_eq!(out.decisions.len(), 1);
    let d = &out.decisions[0];
    assert_eq!((d.channel, d.parameter, d.direction, d.scale), (Channel::Yaw, Parameter::Zeta1, Direction::Increase, 1.5));
    let req = server.requests.lock().unwrap()[0].clone();
    assert!(req.contains("Bearer test-key"), "{req}");
    assert!(req.contains("\"messages\""));
}

#[test]
fn out_of_set_scale_is_retried_then_falls_back() {
    let server = FakeChatServer::start(vec![Reply::Content(OUT_OF_SET.into()), Reply::Content(OUT_OF_SET.into())]);
    let s = yaw_error_summary();
    let out = llm_decide(&s, &backend(&server.url, Duration::from_secs(5)), DEFAULT_TARGET_MSE);
    assert!(matches!(out.source, DecisionSource::Fallback { .. }), "{:?}", out.source);
    assert_eq!(out.decisions, rule_decide(&s, DEFAULT_TARGET_MSE));
    assert_eq!(server.request_count(), 2);
}

#[test]
fn retry_recovers_after_one_bad_reply() {
    let server = FakeChatServer::start(vec![Reply::Content("no json here".into()), Reply::Content(VALID.into())]);
    let out = llm_decide(&yaw_error_summary(), &backend(&server.url, Duration::from_secs(5)), DEFAULT_TARGET_MSE);
    assert_eq!(out.source, DecisionSource::Backend);
    assert_eq!(out.decisions[0].scale, 1.5);
}

#[test]
fn timeout_falls_back_within_the_deadline() {
    let server = FakeChatServer::start(vec![Reply::Hang(Duration::from_secs(3))]);
    let s = yaw_error_summary();
    let start = Instant::now();
    let out = llm_decide(&s, &backend(&server.url, Duration::from_millis(300)), DEFAULT_TARGET_MSE);
    assert!(start.elapsed() < Duration::from_secs(2), "took {:?}", start.elapsed());
    assert!(matches!(out.source, DecisionSource::Fallback { .. }));
    assert_eq!(out.decisions, rule_decide(&s, DEFAULT_TARGET_MSE));
}

#[test]
fn server_error_and_unreachable_endpoint_fall_back() {
    let s = yaw_error_summary();
    let server = FakeChatServer::start(vec![Reply::Status(500)]);
    let out = llm_decide(&s, &backend(&server.url, Duration::from_secs(5)), DEFAULT_TARGET_MSE);
    assert!(matches!(out.source, DecisionSource::Fallback { .. }));
    let out = llm_decide(&s, &backend(&closed_port_url(), Duration::from_secs(1)), DEFAULT_TARGET_MSE);
    assert!(matches!(out.source, DecisionSource::Fallback { .. }));
    assert_eq!(out.decisions, rule_decide(&s, DEFAULT_TARGET_MSE));
}

#[test]
fn tuning_run_survives_a_misbehaving_backend() {
    let server = FakeChatServer::start(vec![
        Reply::Content(VALID.into()),
        Reply::Content(OUT_OF_SET.into()),
        Reply::Content(OUT_OF_SET.into()),
        Reply::Hang(Duration::from_secs(2)),
    ]);
    let scenario = TuningScenario { window: 2.0, ..Default::default() };
    let b = backend(&server.url, Duration::from_millis(300));
    let t = run_tuning(&scenario, &NullPolicy, Some(&b), 3).unwrap();
    assert_eq!(t.rounds.len(), 4);
    assert_eq!(t.rounds[0].source, Some(DecisionSource::Backend));
    assert!(matches!(t.rounds[1].source, Some(DecisionSource::Fallback { .. })));
    assert!(matches!(t.rounds[2].source, Some(DecisionSource::Fallback { .. })));
    assert!(t.rounds.iter().all(|r| r.mse.iter().all(|m| m.is_finite())));
}
