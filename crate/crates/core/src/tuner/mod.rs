//! Runtime gain adaptation: windowed summaries of a control trace go in,
//! fuzzy-scaled gain adjustments come out.
//!
//! Decisions come from a deterministic rule table or from an external chat
//! backend whose replies are schema-checked before they touch a controller.

pub mod backend;
pub mod scenario;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{AttitudeController, Channel, ControllerKind};
use crate::env::TraceRow;
use crate::mathcore::wrap_angle;

pub use backend::{llm_decide, BackendError, ChatBackend, ChatMessage, DecisionSource, HttpBackend, LlmOutcome, MockBackend};
pub use scenario::{run_tuning, RoundRecord, TuningScenario, TuningTranscript};

/// The fuzzy scaling set; 1.0 is reserved for hold.
pub const SCALES: [f64; 5] = [2.0, 1.5, 1.0, 0.67, 0.5];
pub const ZETA_BOUNDS: (f64, f64) = (0.1, 50.0);
pub const ALPHA_BOUNDS: (f64, f64) = (0.0, 0.2);
pub const DEFAULT_TARGET_MSE: f64 = 0.02;
/// Derivative sign-flip rate above which a channel counts as oscillating.
pub const OSCILLATION_THRESHOLD: f64 = 0.25;
/// `|mean error| / mean |error|` above which the error counts as biased.
pub const BIAS_THRESHOLD: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum TunerError {
    #[error("no trace rows fall inside the window [{0}, {1}] s")]
    EmptyWindow(f64, f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AxisSummary {
    pub mse: f64,
    pub mean_abs_error: f64,
    /// Signed mean error; not part of the displayed triple but needed for
    /// the bias rule.
    pub mean_error: f64,
    /// Fraction of interior samples where the error derivative changes sign.
    pub oscillation_score: f64,
    pub saturation_fraction: f64,
    /// Mean adaptive compensation over the window. Its sign relative to
    /// `mean_error` tells whether the adaptive term fights the bias or holds it.
    #[serde(default)]
    pub mean_delta_u: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub zeta1: f64,
    pub zeta2: f64,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: usize,
    pub decisions: Vec<TuningDecision>,
    /// Per-channel mse of the window that followed the decisions.
    pub mse_after: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlLogSummary {
    pub controller: ControllerKind,
    pub window: (f64, f64),
    /// Indexed like [`Channel::ALL`].
    pub axes: [AxisSummary; 4],
    pub gains: [Gains; 4],
    pub history: Vec<HistoryEntry>,
}

impl ControlLogSummary {
    pub fn axis(&self, c: Channel) -> &AxisSummary {
        &self.axes[c.index()]
    }

    /// Plain-text rendering used as the chat prompt body.
    pub fn render(&self) -> String {
        let mut s = format!("controller: {}\nwindow: {:.2} s to {:.2} s\n", self.controller.name(), self.window.0, self.window.1);
        s.push_str("channel | mse (rad^2 or m^2) | mean |e| | mean e | oscillation | saturation | mean du | zeta1 | zeta2 | alpha\n");
        for c in Channel::ALL {
            let a = self.axis(c);
            let g = &self.gains[c.index()];
            s.push_str(&format!(
                "{} | {:.5} | {:.4} | {:+.4} | {:.3} | {:.3} | {:+.4} | {:.3} | {:.3} | {:.4}\n",
                c.name(),
                a.mse,
                a.mean_abs_error,
                a.mean_error,
                a.oscillation_score,
                a.saturation_fraction,
                a.mean_delta_u,
                g.zeta1,
                g.zeta2,
                g.alpha
            ));
        }
        if self.history.is_empty() {
            s.push_str("tuning history: none\n");
        } else {
            s.push_str("tuning history:\n");
            for h in &self.history {
                let ds: Vec<String> = h
                    .decisions
                    .iter()
                    .map(|d| format!("{} {} {} x{}", d.channel.name(), d.parameter.name(), d.direction.name(), d.scale))
                    .collect();
                s.push_str(&format!(
                    "  round {}: [{}] -> mse roll {:.5} pitch {:.5} yaw {:.5} depth {:.5}\n",
                    h.round,
                    ds.join(", "),
                    h.mse_after[0],
                    h.mse_after[1],
                    h.mse_after[2],
                    h.mse_after[3]
                ));
            }
        }
        s
    }
}

fn channel_errors(row: &TraceRow) -> [f64; 4] {
    [
        wrap_angle(row.ref_roll - row.roll),
        wrap_angle(row.ref_pitch - row.pitch),
        wrap_angle(row.ref_yaw - row.yaw),
        row.ref_depth - row.depth,
    ]
}

fn oscillation_score(e: &[f64]) -> f64 {
    if e.len() < 3 {
        return 0.0;
    }
    let d: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
    let flips = d.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    flips as f64 / (d.len() - 1) as f64
}

/// Per-channel statistics of the rows with `t` in `[window.0, window.1]`.
pub fn summarize(rows: &[TraceRow], window: (f64, f64), ctrl: &AttitudeController) -> Result<ControlLogSummary, TunerError> {
    let sel: Vec<&TraceRow> = rows.iter().filter(|r| r.t >= window.0 && r.t <= window.1).collect();
    if sel.is_empty() {
        return Err(TunerError::EmptyWindow(window.0, window.1));
    }
    let n = sel.len() as f64;
    let any_clamped: Vec<bool> = sel.iter().map(|r| r.commands.iter().any(|c| c.abs() >= 1.0)).collect();
    let mut axes: [AxisSummary; 4] = Default::default();
    for (k, axis) in axes.iter_mut().enumerate() {
        let e: Vec<f64> = sel.iter().map(|r| channel_errors(r)[k]).collect();
        axis.mse = e.iter().map(|v| v * v).sum::<f64>() / n;
        axis.mean_abs_error = e.iter().map(|v| v.abs()).sum::<f64>() / n;
        axis.mean_error = e.iter().sum::<f64>() / n;
        axis.oscillation_score = oscillation_score(&e);
        let saturated = sel.iter().zip(&any_clamped).filter(|(r, &c)| c || r.u[k].abs() >= 1.0).count();
        axis.saturation_fraction = saturated as f64 / n;
        axis.mean_delta_u = sel.iter().map(|r| r.delta_u[k]).sum::<f64>() / n;
    }
    let gains = Channel::ALL.map(|c| {
        let ch = ctrl.channel(c);
        Gains { zeta1: ch.zeta1, zeta2: ch.zeta2, alpha: ch.alpha }
    });
    Ok(ControlLogSummary { controller: ctrl.kind(), window, axes, gains, history: Vec::new() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parameter {
    #[serde(rename = "zeta1", alias = "ζ1")]
    Zeta1,
    #[serde(rename = "zeta2", alias = "ζ2")]
    Zeta2,
    #[serde(rename = "alpha", alias = "α")]
    Alpha,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Zeta1 => "zeta1",
            Parameter::Zeta2 => "zeta2",
            Parameter::Alpha => "alpha",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
    Hold,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::Increase => "increase",
            Direction::Decrease => "decrease",
            Direction::Hold => "hold",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningDecision {
    pub channel: Channel,
    pub parameter: Parameter,
    pub direction: Direction,
    pub scale: f64,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum DecisionError {
    #[error("scale {0} is not one of 2.0, 1.5, 1.0, 0.67, 0.5")]
    Scale(f64),
    #[error("hold requires scale 1.0, got {0}")]
    HoldScale(f64),
}

impl TuningDecision {
    pub fn hold(channel: Channel, rationale: &str) -> Self {
        TuningDecision { channel, parameter: Parameter::Zeta1, direction: Direction::Hold, scale: 1.0, rationale: rationale.into() }
    }

    pub fn validate(&self) -> Result<(), DecisionError> {
        if !SCALES.contains(&self.scale) {
            return Err(DecisionError::Scale(self.scale));
        }
        if self.direction == Direction::Hold && self.scale != 1.0 {
            return Err(DecisionError::HoldScale(self.scale));
        }
        Ok(())
    }

    /// Multiplicative change applied to the parameter. The scale's
    /// magnitude sets the step (0.5 and 2.0 are the same step) and the
    /// direction sets its sign.
    pub fn factor(&self) -> f64 {
        let step = self.scale.max(1.0 / self.scale);
        match self.direction {
            Direction::Increase => step,
            Direction::Decrease => 1.0 / step,
            Direction::Hold => 1.0,
        }
    }
}

/// Deterministic rule table, at most one decision per channel.
pub fn rule_decide(s: &ControlLogSummary, target_mse: f64) -> Vec<TuningDecision> {
    Channel::ALL
        .into_iter()
        .map(|c| {
            let a = s.axis(c);
            if a.mse <= target_mse {
                return TuningDecision::hold(c, "within target");
            }
            if a.oscillation_score > OSCILLATION_THRESHOLD {
                let scale = if a.oscillation_score > 2.0 * OSCILLATION_THRESHOLD { 2.0 } else { 1.5 };
                return TuningDecision {
                    channel: c,
                    parameter: Parameter::Zeta2,
                    direction: Direction::Increase,
                    scale,
                    rationale: format!("oscillation score {:.3} above {OSCILLATION_THRESHOLD}; add damping", a.oscillation_score),
                };
            }
            if a.mse > 4.0 * target_mse {
                return TuningDecision {
                    channel: c,
                    parameter: Parameter::Zeta1,
                    direction: Direction::Increase,
                    scale: 2.0,
                    rationale: format!("mse {:.5} far above target {target_mse}; stiffen", a.mse),
                };
            }
            let biased = a.mean_abs_error > 0.0 && a.mean_error.abs() / a.mean_abs_error > BIAS_THRESHOLD;
            // Only the adaptive law has an alpha that does anything.
            let adaptive = s.controller == ControllerKind::ASSurface && s.gains[c.index()].alpha > 0.0;
            if biased && adaptive {
                // With e·sign(u) driving it, the compensation can settle on
                // the wrong side of a disturbance and hold the error there.
                // Faster adaptation only helps when it already pushes back.
                return if a.mean_delta_u * a.mean_error > 0.0 {
                    TuningDecision {
                        channel: c,
                        parameter: Parameter::Alpha,
                        direction: Direction::Increase,
                        scale: 1.5,
                        rationale: format!("persistent one-sided error (mean {:+.4}) that the compensation opposes; faster adaptation", a.mean_error),
                    }
                } else {
                    TuningDecision {
                        channel: c,
                        parameter: Parameter::Alpha,
                        direction: Direction::Decrease,
                        scale: 0.67,
                        rationale: format!(
                            "persistent one-sided error (mean {:+.4}) held by compensation {:+.4}; slower adaptation",
                            a.mean_error, a.mean_delta_u
                        ),
                    }
                };
            }
            TuningDecision {
                channel: c,
                parameter: Parameter::Zeta1,
                direction: Direction::Increase,
                scale: 1.5,
                rationale: format!("mse {:.5} above target {target_mse} with low oscillation; stiffen", a.mse),
            }
        })
        .collect()
}

/// Applies one validated decision with the safe-bound clamps.
pub fn apply_decision(ctrl: &AttitudeController, d: &TuningDecision) -> AttitudeController {
    let mut next = ctrl.clone();
    if d.direction == Direction::Hold {
        return next;
    }
    let ch = next.channel_mut(d.channel);
    let f = d.factor();
    match d.parameter {
        Parameter::Zeta1 => ch.zeta1 = (ch.zeta1 * f).clamp(ZETA_BOUNDS.0, ZETA_BOUNDS.1),
        Parameter::Zeta2 => ch.zeta2 = (ch.zeta2 * f).clamp(ZETA_BOUNDS.0, ZETA_BOUNDS.1),
        Parameter::Alpha => ch.alpha = (ch.alpha * f).clamp(ALPHA_BOUNDS.0, ALPHA_BOUNDS.1),
    }
    next
}
