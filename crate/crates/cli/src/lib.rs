//! Commands behind the `f4tele` binary.
//!
//! Every command returns an [`Outcome`] carrying its exit code and text, so
//! tests can drive them without spawning a process. Exit codes: 0 success,
//! 1 I/O failure, 2 rejected config or plan, 3 unstable operating point,
//! 4 simulation and model disagree beyond the tolerance.

pub mod plan;
pub mod sweep;

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use f4tele::analytic::{
    expected_wait_high, expected_wait_low, mm1_oracle, HighWaitParams, LowWaitParams,
};
use f4tele::config::{load_config, ConfigFile, LoadError, ParseError};
use f4tele::model::{ConfigError, RackClass, ValidatedConfig, Violation};
use f4tele::scheduler::schedule_csv;
use f4tele::sim::{run_simulation, Mode, SimReport};
use f4tele::traffic::{flow_trace_csv, FlowSpec};
use thiserror::Error;

use crate::plan::{ExperimentPlan, PlanError};
use crate::sweep::{analysis_csv, analyze_config, is_stable, point_config, run_sweep};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

/// Default output directory when `--out-dir` is not given.
pub const OUT_DIR_ENV: &str = "F4TELE_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "f4tele-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Plan { path: String, source: PlanError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("unstable: {0}")]
    Unstable(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Parse { .. } | CliError::Plan { .. } | CliError::Config(_) => EXIT_CONFIG,
            CliError::Unstable(_) => EXIT_UNSTABLE,
        }
    }

    /// Human-readable lines for the error stream; violations one per line.
    pub fn report(&self) -> String {
        match self {
            CliError::Config(e) => {
                let mut s = String::from("error: configuration rejected\n");
                for v in e.violations() {
                    let _ = writeln!(s, "  violation: {v}");
                }
                s
            }
            CliError::Plan { path, source: PlanError::Invalid(v) } => {
                let mut s = format!("error: {path}: plan rejected\n");
                for x in v {
                    let _ = writeln!(s, "  violation: {x}");
                }
                s
            }
            other => format!("error: {other}\n"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn violation(field: &'static str, message: impl Into<String>) -> CliError {
    CliError::Config(ConfigError::Violations(vec![Violation::new(field, message)]))
}

/// Exit code plus the text destined for stdout and stderr.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// `--out-dir`, then the plan's `out_dir`, then `$F4TELE_OUT_DIR`, then
/// `f4tele-out`.
pub fn resolve_out_dir(flag: Option<&Path>, plan: Option<&Path>) -> PathBuf {
    flag.or(plan)
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn optional_out_dir(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
}

pub fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    load_config(path).map_err(|e| match e {
        LoadError::Io { path, source } => CliError::Io { path, source },
        LoadError::Parse(source) => CliError::Parse { path: path.display().to_string(), source },
    })
}

pub fn read_plan(path: &Path) -> Result<ExperimentPlan, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    ExperimentPlan::parse(&text).map_err(|source| CliError::Plan {
        path: path.display().to_string(),
        source,
    })
}

fn warnings(cfg: &ValidatedConfig) -> String {
    cfg.warnings().iter().map(|w| format!("warning: {w}\n")).collect()
}

fn check_duration(duration: f64) -> Result<(), CliError> {
    if duration.is_finite() && duration > 0.0 {
        Ok(())
    } else {
        Err(violation("duration", "must be finite and > 0"))
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))
}

fn flow_specs(report: &SimReport) -> Vec<FlowSpec> {
    report
        .per_flow
        .iter()
        .map(|f| FlowSpec {
            flow_id: f.flow_id,
            source_rack: f.rack,
            start_time: f.start_time,
            size: f.size,
            transport: f.transport,
        })
        .collect()
}

/// Runs one simulation and writes `sets.csv`, `flows.csv`, `summary.txt`,
/// `schedule.csv` and `flow_trace.csv`.
pub fn cmd_simulate(
    config: &Path,
    mode: Mode,
    seed: u64,
    duration: f64,
    out_dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    check_duration(duration)?;
    let cfg = read_config(config)?.build()?;
    let report = run_simulation(&cfg, mode, seed, duration);
    let dir = resolve_out_dir(out_dir, None);
    report.write_to_dir(&dir).map_err(io_err(&dir))?;
    write(&dir, "schedule.csv", &schedule_csv(cfg.schedule()))?;
    write(&dir, "flow_trace.csv", &flow_trace_csv(&flow_specs(&report)))?;
    Ok(Outcome {
        code: EXIT_OK,
        stdout: format!("{}output: {}\n", report.summary(), dir.display()),
        stderr: warnings(&cfg),
    })
}

/// Analytic rows for the config, or for every point of `plan` when given.
pub fn cmd_analyze(
    config: &Path,
    plan: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let base = read_config(config)?;
    let rows = match plan {
        None => vec![analyze_config(&base.build()?, None)],
        Some(p) => {
            let plan = read_plan(p)?;
            let mut rows = Vec::new();
            for point in sweep::plan_points(&plan) {
                let cfg = point_config(&base, &plan, &point)?.build()?;
                rows.push(analyze_config(&cfg, Some(point.load)));
            }
            rows
        }
    };
    let csv = analysis_csv(&rows);
    if let Some(dir) = optional_out_dir(out_dir) {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write(&dir, "analysis.csv", &csv)?;
    }
    let unstable = rows.iter().filter(|r| !r.stable).count();
    let (code, stderr) = if unstable > 0 {
        (EXIT_UNSTABLE, format!("{unstable} of {} point(s) unstable\n", rows.len()))
    } else {
        (EXIT_OK, String::new())
    };
    Ok(Outcome { code, stdout: csv, stderr })
}

/// One set's comparison in `validate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetCheck {
    pub set_id: usize,
    pub class: RackClass,
    pub simulated: f64,
    pub predicted: f64,
    pub rel_error: f64,
    pub samples: u64,
    pub within: bool,
}

/// Model prediction of the mean wait per class for `mode`.
pub fn predicted_waits(cfg: &ValidatedConfig, mode: Mode) -> Result<(f64, f64), CliError> {
    let t = cfg.traffic();
    let s = *cfg.service();
    let part = cfg.partition();
    let unstable = |e: f4tele::analytic::AnalyticError| CliError::Unstable(e.to_string());
    if mode == Mode::Benchmark {
        return Ok((
            mm1_oracle(t.packet_rate_for(RackClass::NonHotspot), &s).map_err(unstable)?,
            mm1_oracle(t.packet_rate_for(RackClass::Hotspot), &s).map_err(unstable)?,
        ));
    }
    let low = if part.k_low > 0 {
        let p = LowWaitParams::from_schedule(t.packet_rate_for(RackClass::NonHotspot), s, part, cfg.schedule()).map_err(unstable)?;
        expected_wait_low(&p).map_err(unstable)?.mean_wait
    } else {
        f64::NAN
    };
    let hot = if part.k_hot > 0 {
        let p = HighWaitParams::from_schedule(t.packet_rate_for(RackClass::Hotspot), s, part, cfg.schedule()).map_err(unstable)?;
        expected_wait_high(&p).map_err(unstable)?.mean_wait
    } else {
        f64::NAN
    };
    Ok((low, hot))
}

pub fn compare_sets(report: &SimReport, low: f64, hot: f64, tolerance: f64) -> Vec<SetCheck> {
    report
        .per_set
        .iter()
        .map(|s| {
            let predicted = match s.class {
                RackClass::NonHotspot => low,
                RackClass::Hotspot => hot,
            };
            let rel_error = if s.wait_samples == 0 {
                0.0
            } else if predicted == 0.0 {
                if s.mean_wait == 0.0 { 0.0 } else { f64::INFINITY }
            } else {
                (s.mean_wait - predicted).abs() / predicted
            };
            SetCheck {
                set_id: s.set_id,
                class: s.class,
                simulated: s.mean_wait,
                predicted,
                rel_error,
                samples: s.wait_samples,
                within: rel_error <= tolerance,
            }
        })
        .collect()
}

/// Simulates the config and compares per-set mean waits with the model.
pub fn cmd_validate(
    config: &Path,
    mode: Mode,
    seed: u64,
    duration: f64,
    tolerance: f64,
    out_dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    check_duration(duration)?;
    if !(tolerance.is_finite() && tolerance >= 0.0) {
        return Err(violation("tolerance", "must be finite and >= 0"));
    }
    let cfg = read_config(config)?.build()?;
    if !is_stable(&cfg, mode) {
        return Err(CliError::Unstable("offered load exceeds the connected capacity".into()));
    }
    let (low, hot) = predicted_waits(&cfg, mode)?;
    let report = run_simulation(&cfg, mode, seed, duration);
    let checks = compare_sets(&report, low, hot, tolerance);

    let mut out = String::from("set_id,class,simulated_wait,predicted_wait,rel_error,samples,within\n");
    for c in &checks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.set_id, c.class, c.simulated, c.predicted, c.rel_error, c.samples, c.within
        );
    }
    if let Some(dir) = optional_out_dir(out_dir) {
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        write(&dir, "validation.csv", &out)?;
    }
    let worst = checks.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error));
    let mut code = EXIT_OK;
    let mut stderr = String::new();
    if let Some(w) = worst {
        let _ = writeln!(
            out,
            "worst: set {} ({}) rel_error {} tolerance {}",
            w.set_id, w.class, w.rel_error, tolerance
        );
        if !w.within {
            code = EXIT_TOLERANCE;
            let _ = writeln!(stderr, "tolerance breached by set {} ({})", w.set_id, w.class);
            if w.class == RackClass::Hotspot && mode != Mode::Benchmark {
                stderr.push_str(
                    "note: the hotspot model predicts gap * d for every load; \
                     queueing behind other packets is not part of it\n",
                );
            }
        }
    }
    stderr.insert_str(0, &warnings(&cfg));
    Ok(Outcome { code, stdout: out, stderr })
}

/// Runs the plan and writes one CSV per family for the analytic model
/// (`analytic/`) and for each simulated mode (`<mode>/`).
pub fn cmd_sweep(
    plan_path: &Path,
    config: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<Outcome, CliError> {
    let plan = read_plan(plan_path)?;
    let config_path = match (config, &plan.config) {
        (Some(c), _) => c.to_path_buf(),
        (None, Some(c)) => plan_path.parent().unwrap_or(Path::new(".")).join(c),
        (None, None) => return Err(violation("config", "no base config: pass --config or set plan.config")),
    };
    let base = read_config(&config_path)?;
    let result = run_sweep(&base, &plan)?;
    let dir = resolve_out_dir(out_dir, plan.out_dir.as_deref());

    let mut written = Vec::new();
    let mut emit = |sub: &str, files: Vec<(String, String)>| -> Result<(), CliError> {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        for (name, csv) in files {
            write(&d, &name, &csv)?;
            written.push(d.join(name));
        }
        Ok(())
    };
    emit("analytic", result.analytic_files(&plan))?;
    for (i, mode) in plan.modes.iter().enumerate() {
        emit(mode.as_str(), result.simulated_files(&plan, i))?;
    }
    let mut stdout = format!("{} point(s), {} run(s)\n", result.points.len(), result.points.len() * plan.modes.len() * plan.seeds.len());
    for p in written {
        let _ = writeln!(stdout, "wrote {}", p.display());
    }
    Ok(Outcome { code: EXIT_OK, stdout, stderr: String::new() })
}
