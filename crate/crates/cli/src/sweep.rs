//! Sweep points, analytic rows and the parallel runner.
//!
//! A sweep point fixes `(load, k_hot, d, mu_multiplier)` and derives a config
//! from the base file. The non-hotspot sets of the base partition are kept as
//! they are; `k_hot` hotspot sets of `bundle_capacity` racks are appended
//! after them, so the non-hotspot racks keep their ids (and random streams)
//! across points.
//!
//! `load` is the connected-time utilization of one hotspot set when the plan
//! has its largest `k_hot`:
//!
//! ```text
//! lambda_hot = load * 0.5 / (k_ref * E[X])      lambda_low = beta * lambda_hot
//! ```
//!
//! with `E[X]` the base mean service time at multiplier 1. Rates therefore
//! do not change with `k_hot` or the multiplier, and every packet-source point
//! thins the same candidate stream.

use std::fmt::Write as _;

use f4tele::analytic::{
    expected_wait_high, expected_wait_low, residual_moments, state_probabilities,
    HighWaitParams, LowWaitParams,
};
use f4tele::config::{ConfigFile, PartitionSpec};
use f4tele::model::{ConfigError, RackClass, SourceType, ValidatedConfig};
use f4tele::scheduler::{stability_check, stability_check_dedicated};
use f4tele::sim::{run_simulation, Mode, SimReport};
use rayon::prelude::*;

use crate::plan::ExperimentPlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub load: f64,
    pub k_hot: usize,
    pub d: f64,
    pub mu_multiplier: f64,
}

/// Grid points of the waiting-time families: every load, `k_hot` and `d` at
/// full speed, then every multiplier other than 1 at the first `k_hot`.
pub fn plan_points(plan: &ExperimentPlan) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &d in &plan.slot_lengths {
        for &k_hot in &plan.k_hot {
            for &load in &plan.loads {
                out.push(SweepPoint { load, k_hot, d, mu_multiplier: 1.0 });
            }
        }
    }
    let k0 = plan.k_hot[0];
    for &m in plan.mu_multipliers.iter().filter(|&&m| m != 1.0) {
        for &d in &plan.slot_lengths {
            for &load in &plan.loads {
                out.push(SweepPoint { load, k_hot: k0, d, mu_multiplier: m });
            }
        }
    }
    out
}

/// Arrival rates `(lambda_low, lambda_hot)` of a point, in arrivals of the
/// base source type (packets or flows).
pub fn point_rates(base: &ConfigFile, plan: &ExperimentPlan, load: f64) -> (f64, f64) {
    let x = base.service_model().mean_service;
    let hot = load * 0.5 / (plan.k_ref() as f64 * x) / base.traffic.packets_per_arrival();
    (base.traffic.beta * hot, hot)
}

/// Config of one sweep point.
pub fn point_config(
    base: &ConfigFile,
    plan: &ExperimentPlan,
    point: &SweepPoint,
) -> Result<ConfigFile, ConfigError> {
    let partition = base.build_partition()?;
    let p = base.cluster.bundle_capacity;
    let low_racks: Vec<usize> = partition
        .sets
        .iter()
        .filter(|s| s.class == RackClass::NonHotspot)
        .flat_map(|s| s.rack_ids.iter().copied())
        .collect();
    let n_low = low_racks.iter().map(|r| r + 1).max().unwrap_or(0);
    let mut cfg = base.clone();
    cfg.cluster.n_data_racks = n_low + point.k_hot * p;
    cfg.partition = match &base.partition {
        PartitionSpec::Auto { .. } => PartitionSpec::Auto {
            hotspot_racks: (n_low..cfg.cluster.n_data_racks).collect(),
        },
        PartitionSpec::Explicit(sets) => {
            let mut sets: Vec<_> = sets
                .iter()
                .filter(|s| s.class == RackClass::NonHotspot)
                .cloned()
                .collect();
            for k in 0..point.k_hot {
                let first = n_low + k * p;
                sets.push(f4tele::model::RackSet {
                    set_id: sets.len(),
                    rack_ids: (first..first + p).collect(),
                    class: RackClass::Hotspot,
                });
            }
            PartitionSpec::Explicit(sets)
        }
    };
    cfg.slot_length = point.d;
    cfg.policy = None;
    let (low, hot) = point_rates(base, plan, point.load);
    cfg.traffic.lambda_low = low;
    cfg.traffic.lambda_hot = hot;
    if matches!(cfg.traffic.source_type, SourceType::PoissonPacket) {
        cfg.traffic.coupling_rate = Some(point_rates(base, plan, plan.max_load()).1);
    }
    let service = base.service_model().scaled_speed(point.mu_multiplier);
    cfg.mean_service = Some(service.mean_service);
    cfg.service_distribution = service.distribution;
    Ok(cfg)
}

/// One row of `analyze` output.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    pub load: f64,
    pub k_low: usize,
    pub k_hot: usize,
    pub d_seconds: f64,
    pub mean_service: f64,
    pub w_low: f64,
    pub w_hot: f64,
    pub pr_hot: f64,
    pub r_mean: f64,
    pub pr_low: f64,
    pub converged: bool,
    pub stable: bool,
}

pub const ANALYSIS_HEADER: &str =
    "load,k_low,k_hot,d_seconds,mean_service,w_low_seconds,w_hot_seconds,pr_hot,r_mean,pr_low,converged,stable";

impl AnalysisRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.load,
            self.k_low,
            self.k_hot,
            self.d_seconds,
            self.mean_service,
            self.w_low,
            self.w_hot,
            self.pr_hot,
            self.r_mean,
            self.pr_low,
            self.converged,
            self.stable
        )
    }
}

pub fn analysis_csv(rows: &[AnalysisRow]) -> String {
    let mut out = format!("{ANALYSIS_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}

/// Analytic waits of a validated config. `load` is copied into the row; pass
/// `None` to report the worst connected-time utilization instead.
pub fn analyze_config(cfg: &ValidatedConfig, load: Option<f64>) -> AnalysisRow {
    let part = cfg.partition();
    let sched = cfg.schedule();
    let traffic = cfg.traffic();
    let service = *cfg.service();
    let stability = stability_check(sched, traffic, &service, part);

    let mut converged = true;
    let w_low = if part.k_low > 0 {
        match LowWaitParams::from_schedule(traffic.packet_rate_for(RackClass::NonHotspot), service, part, sched)
            .and_then(|p| expected_wait_low(&p))
        {
            Ok(w) => w.mean_wait,
            Err(_) => {
                converged = false;
                f64::NAN
            }
        }
    } else {
        f64::NAN
    };
    let w_hot = if part.k_hot > 0 {
        match HighWaitParams::from_schedule(traffic.packet_rate_for(RackClass::Hotspot), service, part, sched)
            .and_then(|p| expected_wait_high(&p))
        {
            Ok(w) => w.mean_wait,
            Err(_) => {
                converged = false;
                f64::NAN
            }
        }
    } else {
        f64::NAN
    };
    let (pr_hot, pr_low) = match state_probabilities(part.k_low) {
        Ok(p) if part.k_hot > 0 => (p.pr_hot, p.pr_low),
        Ok(_) => (0.0, 1.0 / part.k_low as f64),
        Err(_) => (1.0, 0.0),
    };
    AnalysisRow {
        load: load.unwrap_or_else(|| stability.max_rho_eff()),
        k_low: part.k_low,
        k_hot: part.k_hot,
        d_seconds: sched.slot_length,
        mean_service: service.mean_service,
        w_low,
        w_hot,
        pr_hot,
        r_mean: residual_moments(traffic.packet_rate_for(RackClass::NonHotspot), &service).mean_residual,
        pr_low,
        converged,
        stable: stability.stable && converged,
    }
}

/// Whether a config is stable for the given mode.
pub fn is_stable(cfg: &ValidatedConfig, mode: Mode) -> bool {
    match mode {
        Mode::Benchmark => {
            stability_check_dedicated(cfg.traffic(), cfg.service(), cfg.partition()).stable
        }
        _ => stability_check(cfg.schedule(), cfg.traffic(), cfg.service(), cfg.partition()).stable,
    }
}

/// Mean waits of one point averaged over seeds.
///
/// For packet sources `low`, `hot` and `all` use the phase-adjusted
/// estimator ([`SetStats::phase_adjusted_wait`]); the `raw_*` fields keep the
/// plain sample means.
///
/// [`SetStats::phase_adjusted_wait`]: f4tele::sim::SetStats::phase_adjusted_wait
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimWaits {
    pub low: f64,
    pub hot: f64,
    pub all: f64,
    pub raw_low: f64,
    pub raw_hot: f64,
    pub raw_all: f64,
}

fn mean_finite(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl SimWaits {
    pub fn from_reports(reports: &[SimReport], phase_adjusted: bool) -> Self {
        let raw_low = mean_finite(reports.iter().map(|r| r.mean_wait(RackClass::NonHotspot)));
        let raw_hot = mean_finite(reports.iter().map(|r| r.mean_wait(RackClass::Hotspot)));
        let raw_all = mean_finite(reports.iter().map(SimReport::overall_mean_wait));
        if !phase_adjusted {
            return Self { low: raw_low, hot: raw_hot, all: raw_all, raw_low, raw_hot, raw_all };
        }
        let adj = |c: Option<RackClass>| mean_finite(reports.iter().map(|r| r.phase_adjusted_wait(c)));
        Self {
            low: adj(Some(RackClass::NonHotspot)),
            hot: adj(Some(RackClass::Hotspot)),
            all: adj(None),
            raw_low,
            raw_hot,
            raw_all,
        }
    }
}

/// Everything a sweep produces, in plan order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub analytic: Vec<AnalysisRow>,
    /// `(lambda_low, lambda_hot)` per point.
    pub rates: Vec<(f64, f64)>,
    /// `simulated[m][i]`: mode `plan.modes[m]` at point `i`.
    pub simulated: Vec<Vec<SimWaits>>,
}

/// Runs every point of the plan on a bounded pool. Output order follows the
/// plan regardless of completion order.
pub fn run_sweep(base: &ConfigFile, plan: &ExperimentPlan) -> Result<SweepResult, ConfigError> {
    let points = plan_points(plan);
    let configs: Vec<ValidatedConfig> = points
        .iter()
        .map(|p| point_config(base, plan, p)?.build())
        .collect::<Result<_, _>>()?;
    let analytic: Vec<AnalysisRow> = configs
        .iter()
        .zip(&points)
        .map(|(c, p)| analyze_config(c, Some(p.load)))
        .collect();

    let jobs: Vec<(usize, Mode, u64)> = plan
        .modes
        .iter()
        .flat_map(|&m| (0..configs.len()).flat_map(move |i| plan.seeds.iter().map(move |&s| (i, m, s))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.threads.unwrap_or(0))
        .build()
        .expect("thread pool");
    let reports: Vec<SimReport> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, m, s)| run_simulation(&configs[i], m, s, plan.duration))
            .collect()
    });
    let per_mode = configs.len() * plan.seeds.len();
    let adjusted = matches!(base.traffic.source_type, SourceType::PoissonPacket);
    let simulated = reports
        .chunks(per_mode)
        .map(|mode_reports| {
            mode_reports
                .chunks(plan.seeds.len())
                .map(|r| SimWaits::from_reports(r, adjusted))
                .collect()
        })
        .collect();
    let rates = configs
        .iter()
        .map(|c| {
            let t = c.traffic();
            (t.packet_rate_for(RackClass::NonHotspot), t.packet_rate_for(RackClass::Hotspot))
        })
        .collect();
    Ok(SweepResult { points, analytic, rates, simulated })
}

/// File stem of a waiting-time family, e.g. `wh10` for hotspot sets at 10 ms.
pub fn family_name(class: RackClass, d: f64) -> String {
    let tag = match class {
        RackClass::Hotspot => "wh",
        RackClass::NonHotspot => "wl",
    };
    format!("{tag}{}", format_ms(d))
}

fn format_ms(d: f64) -> String {
    let ms = d * 1000.0;
    if (ms - ms.round()).abs() < 1e-9 {
        format!("{}", ms.round() as i64)
    } else {
        format!("{ms}").replace('.', "p")
    }
}

pub const FAMILY_HEADER: &str = "load,k,d,mu_multiplier,w_mean";

/// `(file name, csv)` pairs for one series of waits. `wait(i, class)` returns
/// the wait of point `i`; `None` for the class means all sets.
pub fn family_files(
    plan: &ExperimentPlan,
    points: &[SweepPoint],
    wait: impl Fn(usize, Option<RackClass>) -> f64,
) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for class in [RackClass::Hotspot, RackClass::NonHotspot] {
        for &d in &plan.slot_lengths {
            let mut csv = format!("{FAMILY_HEADER}\n");
            for (i, p) in points.iter().enumerate() {
                if p.d == d && p.mu_multiplier == 1.0 {
                    let _ = writeln!(csv, "{},{},{},{},{}", p.load, p.k_hot, p.d, p.mu_multiplier, wait(i, Some(class)));
                }
            }
            files.push((format!("{}.csv", family_name(class, d)), csv));
        }
    }
    let k0 = plan.k_hot[0];
    let mut csv = format!("{FAMILY_HEADER}\n");
    for &m in &plan.mu_multipliers {
        for (i, p) in points.iter().enumerate() {
            if p.k_hot == k0 && p.mu_multiplier == m {
                let _ = writeln!(csv, "{},{},{},{},{}", p.load, p.k_hot, p.d, p.mu_multiplier, wait(i, None));
            }
        }
    }
    files.push(("speed.csv".to_string(), csv));
    files
}

impl SweepResult {
    pub fn analytic_files(&self, plan: &ExperimentPlan) -> Vec<(String, String)> {
        family_files(plan, &self.points, |i, class| {
            let r = &self.analytic[i];
            match class {
                Some(RackClass::Hotspot) => r.w_hot,
                Some(RackClass::NonHotspot) => r.w_low,
                // Arrival-weighted over sets, as the simulator averages packets.
                None => {
                    let (low, hot) = self.rates[i];
                    let wl = r.k_low as f64 * low;
                    let wh = r.k_hot as f64 * hot;
                    (wl * r.w_low + wh * r.w_hot) / (wl + wh)
                }
            }
        })
    }

    pub fn simulated_files(&self, plan: &ExperimentPlan, mode_index: usize) -> Vec<(String, String)> {
        let waits = &self.simulated[mode_index];
        family_files(plan, &self.points, |i, class| match class {
            Some(RackClass::Hotspot) => waits[i].hot,
            Some(RackClass::NonHotspot) => waits[i].low,
            None => waits[i].all,
        })
    }
}
