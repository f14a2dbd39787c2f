//! Command-line front end: `train`, `eval`, `tune` and `replay`.
//!
//! Every command writes into one output directory and finishes by writing
//! `manifest.json` there. CSV artifacts depend only on the config and seed.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::control::ControllerKind;
use crate::env::trace::{read_trace, write_trace, TraceError};
use crate::env::{DrLevel, TraceRow};
use crate::eval::{dr_generalization_protocol, evaluate_policy, ActionPolicy, MetricsReport, NullPolicy};
use crate::eval::write_generalization_csv;
use crate::plot::{compound_chart, tracking_chart, LineChart, Series};
use crate::ppo::{write_curve_csv, Checkpoint, PolicyParams, TrainError, Trainer};
use crate::tuner::{run_tuning, ChatBackend, HttpBackend, MockBackend, TuningTranscript};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

/// Replayed compound errors must match the logged ones this closely.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "uuvlab", version, about = "Underwater vehicle attitude-control lab")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Run directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write per-step CSV traces.
    #[arg(long, global = true)]
    pub trace: bool,
    /// Write SVG plots.
    #[arg(long, global = true)]
    pub plot: bool,
    /// Validate the config and exit.
    #[arg(long, global = true)]
    pub dry_run: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Rule,
    Http,
    Mock,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a PPO policy on top of the configured controller.
    Train,
    /// Evaluate the controller × task grid with and without trained policies.
    Eval {
        /// Trained checkpoint; repeat for several controllers.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Run the turbulence tuning scenario.
    Tune {
        /// Who decides the gain changes.
        #[arg(long, value_enum, default_value = "rule")]
        backend: BackendKind,
        /// Tuning rounds after the baseline window; overrides the config.
        #[arg(long)]
        rounds: Option<usize>,
        /// Policy flying the scenario if trained on its controller; zero action otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Recompute metrics and plots from a trace CSV.
    Replay {
        /// Trace CSV written by `eval --trace` or `tune --trace`.
        #[arg(value_name = "TRACE")]
        file: PathBuf,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime fault: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub started: String,
    pub finished: String,
    /// File names relative to the run directory.
    pub artifacts: Vec<String>,
    /// Effective config after command-line overrides.
    pub config: RunConfig,
}

/// Collects artifacts written into one directory.
struct RunDir {
    root: PathBuf,
    artifacts: Vec<String>,
}

impl RunDir {
    fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| runtime(format!("cannot create {}: {e}", root.display())))?;
        Ok(RunDir { root: root.to_path_buf(), artifacts: Vec::new() })
    }

    /// Writes via a temporary file and rename.
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        atomic_write(&path, bytes)?;
        self.artifacts.push(name.to_string());
        Ok(path)
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        f(&mut buf).map_err(runtime)?;
        self.write(name, &buf)
    }

    fn svg(&mut self, name: &str, chart: &LineChart) -> Result<PathBuf, CliError> {
        self.write(name, chart.render().as_bytes())
    }

    fn trace(&mut self, name: &str, rows: &[TraceRow]) -> Result<PathBuf, CliError> {
        self.csv(name, |b| write_trace(b, rows).map_err(|e| e.to_string()))
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("partial");
    let res = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    res.map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn timestamp() -> String {
    humantime::format_rfc3339_seconds(SystemTime::now()).to_string()
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    cfg.validate().map_err(|errs| CliError::Config(errs.join("; ")))?;
    Ok(cfg)
}

fn workers(g: &GlobalArgs) -> usize {
    g.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1)
}

/// What a successful command reports back.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub out_dir: Option<PathBuf>,
    pub message: String,
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let g = cli.global;
    let n = workers(&g);
    // The global pool can only be built once per process; later calls in
    // the same process keep the first size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    match cli.command {
        Command::Replay { file } => cmd_replay(&g, &file),
        command => {
            let mut cfg = load_config(&g)?;
            let name = match &command {
                Command::Train => "train",
                Command::Eval { .. } => "eval",
                Command::Tune { .. } => "tune",
                Command::Replay { .. } => unreachable!(),
            };
            match &command {
                Command::Eval { checkpoint } if !checkpoint.is_empty() => cfg.checkpoints = checkpoint.clone(),
                Command::Tune { checkpoint: Some(c), .. } => cfg.checkpoints = vec![c.clone()],
                _ => {}
            }
            if let Command::Tune { rounds: Some(r), .. } = &command {
                cfg.tuner.rounds = *r;
            }
            if let Command::Tune { backend: BackendKind::Mock, .. } = &command {
                if cfg.tuner.mock_script.is_none() {
                    return Err(CliError::Config("backend mock needs tuner.mock_script in the config".into()));
                }
            }
            // Checkpoints are inputs; a bad one is a config error and is
            // caught before any work or output.
            let policies = load_checkpoints(&cfg.checkpoints)?;
            if g.dry_run {
                return Ok(Outcome { out_dir: None, message: format!("config ok ({})", cfg.hash()) });
            }
            let started = timestamp();
            let mut dir = RunDir::create(&cfg.out)?;
            let message = match command {
                Command::Train => cmd_train(&g, &cfg, n, &mut dir)?,
                Command::Eval { .. } => cmd_eval(&g, &cfg, &policies, &mut dir)?,
                Command::Tune { backend, .. } => cmd_tune(&g, &cfg, &policies, backend, &mut dir)?,
                Command::Replay { .. } => unreachable!(),
            };
            let manifest = RunManifest {
                command: name.to_string(),
                config_hash: cfg.hash(),
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                seed: cfg.seed,
                started,
                finished: timestamp(),
                artifacts: dir.artifacts.clone(),
                config: cfg.clone(),
            };
            let text = serde_json::to_vec_pretty(&manifest).map_err(runtime)?;
            atomic_write(&dir.root.join("manifest.json"), &text)?;
            Ok(Outcome { out_dir: Some(dir.root), message })
        }
    }
}

/// A trained policy and the run it came from.
pub struct LoadedPolicy {
    pub path: PathBuf,
    pub controller: ControllerKind,
    pub level: DrLevel,
    pub params: PolicyParams,
}

fn load_checkpoints(paths: &[PathBuf]) -> Result<BTreeMap<ControllerKind, LoadedPolicy>, CliError> {
    let mut out: BTreeMap<ControllerKind, LoadedPolicy> = BTreeMap::new();
    for p in paths {
        let ck = Checkpoint::load(p).map_err(|e| CliError::Config(format!("checkpoint {}: {e}", p.display())))?;
        ck.params
            .check_architecture(&ck.ppo.hidden)
            .map_err(|e| CliError::Config(format!("checkpoint {}: architecture mismatch: {e}", p.display())))?;
        let kind = ck.env.controller.kind();
        if let Some(prev) = out.get(&kind) {
            return Err(CliError::Config(format!(
                "checkpoints {} and {} both hold {} policies",
                prev.path.display(),
                p.display(),
                kind.name()
            )));
        }
        out.insert(kind, LoadedPolicy { path: p.clone(), controller: kind, level: ck.env.randomization.level, params: ck.params });
    }
    Ok(out)
}

fn cmd_train(g: &GlobalArgs, cfg: &RunConfig, workers: usize, dir: &mut RunDir) -> Result<String, CliError> {
    let task = cfg.task.spec(cfg.task.train);
    let env = cfg.env_config(cfg.env.controller, task.clone());
    let mut trainer = Trainer::new(cfg.ppo.clone(), env.clone(), cfg.seed, workers).map_err(|e| match e {
        TrainError::Config(m) => CliError::Config(m),
        other => runtime(other),
    })?;
    let total = cfg.ppo.iterations();
    trainer
        .run(|t| {
            let Some(p) = t.curve().last() else { return Ok(()) };
            if p.iteration % 10 == 0 || p.iteration + 1 == total {
                log::info!(
                    "iter {}/{} steps {} reward {} faults {}",
                    p.iteration + 1,
                    total,
                    p.steps,
                    p.mean_reward.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into()),
                    p.faults
                );
            }
            Ok(())
        })
        .map_err(runtime)?;
    let ck = trainer.checkpoint();
    dir.csv("curve.csv", |b| write_curve_csv(b, &ck.curve).map_err(|e| e.to_string()))?;
    let ck_path = dir.root.join("checkpoint.json");
    ck.save(&ck_path).map_err(runtime)?;
    dir.artifacts.push("checkpoint.json".into());
    if g.plot {
        let pts: Vec<(f64, f64)> = ck.curve.iter().map(|p| (p.steps as f64, p.mean_reward.unwrap_or(f64::NAN))).collect();
        let chart = LineChart::new(format!("training reward ({})", cfg.env.controller.name()), "environment steps", "mean episode reward")
            .with(Series::new(cfg.env.controller.name(), pts));
        dir.svg("curve.svg", &chart)?;
    }
    if g.trace {
        let ev = evaluate_policy(&ck.params, &env, &task, &env.vehicle, 1);
        dir.trace("trace_train.csv", &ev.episodes[0].rows)?;
    }
    let last = ck.curve.last().and_then(|p| p.mean_reward);
    Ok(format!(
        "trained {} iterations ({} steps); final mean reward {}",
        ck.iteration,
        ck.steps,
        last.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into())
    ))
}

const METRIC_HEADER: [&str; 9] =
    ["controller", "task", "arm", "mse_roll", "mse_pitch", "mse_yaw", "mse_total", "compound_mean", "compound_std"];

fn metric_record(controller: &str, task: &str, arm: &str, r: &MetricsReport) -> Vec<String> {
    let mut rec = vec![controller.to_string(), task.to_string(), arm.to_string()];
    rec.extend(r.mse_per_axis.iter().map(|v| v.to_string()));
    rec.extend([r.mse_total, r.compound_mean, r.compound_std].iter().map(|v| v.to_string()));
    rec
}

fn write_metrics(buf: &mut Vec<u8>, rows: &[Vec<String>]) -> Result<(), String> {
    let mut w = csv::Writer::from_writer(buf);
    w.write_record(METRIC_HEADER).map_err(|e| e.to_string())?;
    for r in rows {
        w.write_record(r).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn plot_rows(dir: &mut RunDir, stem: &str, title: &str, rows: &[TraceRow]) -> Result<(), CliError> {
    for (axis, name) in ["roll", "pitch", "yaw"].iter().enumerate() {
        dir.svg(&format!("{stem}_{name}.svg"), &tracking_chart(title, rows, axis))?;
    }
    dir.svg(&format!("{stem}_compound.svg"), &compound_chart(&format!("{title}: compound error"), rows))?;
    Ok(())
}

fn cmd_eval(
    g: &GlobalArgs,
    cfg: &RunConfig,
    policies: &BTreeMap<ControllerKind, LoadedPolicy>,
    dir: &mut RunDir,
) -> Result<String, CliError> {
    let vehicle = cfg.vehicle_params();
    let mut table = Vec::new();
    for &kind in &cfg.task.controllers {
        for &tk in &cfg.task.eval {
            let task = cfg.task.spec(tk);
            let env = cfg.env_config(kind, task.clone());
            let mut arms: Vec<(&str, &dyn ActionPolicy)> = vec![("norl", &NullPolicy)];
            if let Some(p) = policies.get(&kind) {
                arms.push(("rl", &p.params));
            }
            for (arm, policy) in arms {
                let ev = evaluate_policy(policy, &env, &task, &vehicle, cfg.task.episodes);
                log::info!("{} {} {}: mse {:.5}", kind.name(), tk.name(), arm, ev.report.mse_total);
                table.push(metric_record(kind.name(), tk.name(), arm, &ev.report));
                let stem = format!("{}_{}_{}", kind.name(), tk.name(), arm);
                let rows: Vec<TraceRow> = ev.episodes.iter().flat_map(|e| e.rows.iter().cloned()).collect();
                if g.trace {
                    dir.trace(&format!("trace_{stem}.csv"), &rows)?;
                }
                if g.plot {
                    plot_rows(dir, &format!("plot_{stem}"), &format!("{} {} {}", kind.name(), tk.name(), arm), &ev.episodes[0].rows)?;
                }
            }
        }
    }
    dir.csv("metrics.csv", |b| write_metrics(b, &table))?;
    if cfg.task.buoyancy_shifts && !policies.is_empty() {
        let tasks: Vec<_> = cfg.task.eval.iter().map(|&k| cfg.task.spec(k)).collect();
        let mut gen = Vec::new();
        for p in policies.values() {
            let base = cfg.env_config(p.controller, tasks[0].clone());
            gen.extend(dr_generalization_protocol(&[(p.level, &p.params as &dyn ActionPolicy)], &base, &tasks, cfg.task.episodes));
        }
        dir.csv("generalization.csv", |b| write_generalization_csv(b, &gen).map_err(|e| e.to_string()))?;
    }
    Ok(format!("evaluated {} cells", table.len()))
}

fn cmd_tune(
    g: &GlobalArgs,
    cfg: &RunConfig,
    policies: &BTreeMap<ControllerKind, LoadedPolicy>,
    backend: BackendKind,
    dir: &mut RunDir,
) -> Result<String, CliError> {
    let scenario = &cfg.tuner.scenario;
    let deadline = Duration::from_secs_f64(scenario.deadline);
    let chat: Option<Box<dyn ChatBackend>> = match backend {
        BackendKind::Rule => None,
        BackendKind::Http => Some(Box::new(HttpBackend::from_env(deadline).map_err(|e| CliError::Config(e.to_string()))?)),
        BackendKind::Mock => {
            let path = cfg.tuner.mock_script.as_ref().expect("checked before the run");
            Some(Box::new(MockBackend::from_file(path).map_err(|e| CliError::Config(format!("{e:#}")))?))
        }
    };
    let policy: &dyn ActionPolicy = match policies.get(&scenario.controller) {
        Some(p) => &p.params,
        None => &NullPolicy,
    };
    let t: TuningTranscript = run_tuning(scenario, policy, chat.as_deref(), cfg.tuner.rounds).map_err(runtime)?;
    dir.csv("tuning.csv", |b| t.write_csv(b).map_err(|e| e.to_string()))?;
    dir.write("transcript.json", &serde_json::to_vec_pretty(&t).map_err(runtime)?)?;

    let before = scenario.run_window(&crate::control::AttitudeController::new(scenario.controller), policy);
    let after = scenario.run_window(&t.final_controller, policy);
    let kind = scenario.controller.name();
    let table = vec![
        metric_record(kind, "turbulence", "before", &MetricsReport::from_rows(&before)),
        metric_record(kind, "turbulence", "after", &MetricsReport::from_rows(&after)),
    ];
    dir.csv("metrics.csv", |b| write_metrics(b, &table))?;
    if g.trace {
        dir.trace("trace_before.csv", &before)?;
        dir.trace("trace_after.csv", &after)?;
    }
    if g.plot {
        plot_rows(dir, "plot_before", "before tuning", &before)?;
        plot_rows(dir, "plot_after", "after tuning", &after)?;
        let mut chart = LineChart::new("per-round mse", "round", "mse");
        for (k, name) in ["roll", "pitch", "yaw", "depth"].iter().enumerate() {
            chart = chart.with(Series::new(*name, t.rounds.iter().map(|r| (r.round as f64, r.mse[k])).collect()));
        }
        dir.svg("tuning_mse.svg", &chart)?;
    }
    let yaw = t.yaw_mse();
    Ok(format!(
        "{} rounds with {} backend; yaw mse {:.5} -> {:.5}",
        cfg.tuner.rounds,
        t.backend,
        yaw.first().copied().unwrap_or(f64::NAN),
        yaw.last().copied().unwrap_or(f64::NAN)
    ))
}

/// Largest gap between logged and recomputed compound errors.
pub fn replay_mismatch(rows: &[TraceRow], report: &MetricsReport) -> f64 {
    rows.iter().zip(&report.compound_series).map(|(r, (_, c))| (r.compound - c).abs()).fold(0.0, f64::max)
}

fn cmd_replay(g: &GlobalArgs, trace: &Path) -> Result<Outcome, CliError> {
    let file = std::fs::File::open(trace).map_err(|e| CliError::Config(format!("cannot read trace {}: {e}", trace.display())))?;
    let rows = read_trace(std::io::BufReader::new(file)).map_err(|e| match e {
        TraceError::Io(_) => runtime(format!("{}: {e}", trace.display())),
        other => CliError::Config(format!("{}: {other}", trace.display())),
    })?;
    let report = MetricsReport::from_rows(&rows);
    let gap = replay_mismatch(&rows, &report);
    if gap > REPLAY_TOLERANCE {
        return Err(runtime(format!("recomputed compound error differs from the log by {gap:e}")));
    }
    if g.dry_run {
        return Ok(Outcome { out_dir: None, message: format!("trace ok ({} rows)", rows.len()) });
    }
    let started = timestamp();
    let out = g.out.clone().unwrap_or_else(|| {
        let stem = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into());
        trace.with_file_name(format!("{stem}_replay"))
    });
    let mut dir = RunDir::create(&out)?;
    let table = vec![metric_record("replay", "replay", "replay", &report)];
    dir.csv("metrics.csv", |b| write_metrics(b, &table))?;
    plot_rows(&mut dir, "plot", "replay", &rows)?;
    let manifest = serde_json::json!({
        "command": "replay",
        "trace": trace.display().to_string(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "started": started,
        "finished": timestamp(),
        "artifacts": dir.artifacts,
    });
    atomic_write(&dir.root.join("manifest.json"), &serde_json::to_vec_pretty(&manifest).map_err(runtime)?)?;
    Ok(Outcome {
        out_dir: Some(dir.root),
        message: format!("{} rows; mse {:.6}; compound mean {:.6}", rows.len(), report.mse_total, report.compound_mean),
    })
}
