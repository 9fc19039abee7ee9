//! Experiment plans: which modes, seeds and sweep axes to run.
//!
//! ```text
//! [plan]
//! config = canonical.ini      # relative to the plan file
//! modes = f4tele, f4tele+
//! seeds = 1-3
//! duration = 30
//! out_dir = sweep-out
//! threads = 4
//!
//! [axes]
//! load = 0.1, 0.2, 0.3
//! k_hot = 1-10
//! d = 0.01, 0.1
//! mu_multiplier = 1, 0.5, 0.1
//! ```

use std::collections::HashSet;
use std::path::PathBuf;

use f4tele::config::{parse_sections, Entry, ParseError};
use f4tele::model::Violation;
use f4tele::sim::Mode;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub config: Option<PathBuf>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    /// Simulated seconds per run.
    pub duration: f64,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses one per core.
    pub threads: Option<usize>,
    pub loads: Vec<f64>,
    pub k_hot: Vec<usize>,
    /// Slot lengths, seconds.
    pub slot_lengths: Vec<f64>,
    pub mu_multipliers: Vec<f64>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            config: None,
            modes: vec![Mode::F4Tele],
            seeds: vec![1],
            duration: 30.0,
            out_dir: None,
            threads: None,
            loads: Vec::new(),
            k_hot: Vec::new(),
            slot_lengths: Vec::new(),
            mu_multipliers: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("invalid plan: {}", list(.0))]
    Invalid(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

fn u64_list(e: &Entry) -> Result<Vec<u64>, ParseError> {
    Ok(e.usize_list()?.into_iter().map(|x| x as u64).collect())
}

impl ExperimentPlan {
    pub fn parse(text: &str) -> Result<Self, PlanError> {
        let mut plan = ExperimentPlan::default();
        let mut seen_axes = HashSet::new();
        for section in parse_sections(text)? {
            if !matches!(section.name.as_str(), "plan" | "axes") {
                let msg = format!("unknown section [{}]", section.name);
                return Err(ParseError::new(section.line, None, msg).into());
            }
            let mut seen = HashSet::new();
            for e in &section.entries {
                if !seen.insert(e.key.as_str()) {
                    return Err(e.error("key repeated").into());
                }
                match (section.name.as_str(), e.key.as_str()) {
                    ("plan", "config") => plan.config = Some(PathBuf::from(&e.value)),
                    ("plan", "modes") => {
                        plan.modes = e
                            .value
                            .split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(|s| s.parse::<Mode>().map_err(|m| e.error(m)))
                            .collect::<Result<_, _>>()?;
                    }
                    ("plan", "seeds") => plan.seeds = u64_list(e)?,
                    ("plan", "duration") => plan.duration = e.f64()?,
                    ("plan", "out_dir") => plan.out_dir = Some(PathBuf::from(&e.value)),
                    ("plan", "threads") => plan.threads = Some(e.usize()?),
                    ("axes", key) => {
                        match key {
                            "load" => plan.loads = e.f64_list()?,
                            "k_hot" => plan.k_hot = e.usize_list()?,
                            "d" => plan.slot_lengths = e.f64_list()?,
                            "mu_multiplier" => plan.mu_multipliers = e.f64_list()?,
                            _ => return Err(e.error("unknown key in [axes]").into()),
                        }
                        seen_axes.insert(key.to_string());
                    }
                    _ => return Err(e.error("unknown key in [plan]").into()),
                }
            }
        }
        let mut v = Vec::new();
        for axis in ["load", "k_hot", "d"] {
            if !seen_axes.contains(axis) {
                v.push(Violation::new(axis_field(axis), "axis missing"));
            }
        }
        plan.check(&mut v);
        if v.is_empty() {
            Ok(plan)
        } else {
            Err(PlanError::Invalid(v))
        }
    }

    fn check(&self, v: &mut Vec<Violation>) {
        let axes: [(&str, bool); 4] = [
            ("load", self.loads.is_empty()),
            ("k_hot", self.k_hot.is_empty()),
            ("d", self.slot_lengths.is_empty()),
            ("mu_multiplier", self.mu_multipliers.is_empty()),
        ];
        for (name, empty) in axes {
            if empty {
                v.push(Violation::new(axis_field(name), "sweep axis is empty"));
            }
        }
        if self.loads.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
            v.push(Violation::new("load", "values must lie in (0, 1]"));
        }
        if self.k_hot.contains(&0) {
            v.push(Violation::new("k_hot", "values must be >= 1"));
        }
        if self.slot_lengths.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            v.push(Violation::new("d", "values must be finite and > 0"));
        }
        if self.mu_multipliers.iter().any(|&m| !(m.is_finite() && m > 0.0)) {
            v.push(Violation::new("mu_multiplier", "values must be finite and > 0"));
        }
        if self.modes.is_empty() {
            v.push(Violation::new("modes", "no mode listed"));
        }
        if self.seeds.is_empty() {
            v.push(Violation::new("seeds", "no seed listed"));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            v.push(Violation::new("seeds", "seeds must be distinct"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            v.push(Violation::new("duration", "must be finite and > 0"));
        }
        if self.threads == Some(0) {
            v.push(Violation::new("threads", "must be >= 1"));
        }
    }

    /// Largest hotspot-set count; the load scale is anchored on it.
    pub fn k_ref(&self) -> usize {
        self.k_hot.iter().copied().max().unwrap_or(1)
    }

    pub fn max_load(&self) -> f64 {
        self.loads.iter().copied().fold(0.0, f64::max)
    }
}

fn axis_field(axis: &str) -> &'static str {
    match axis {
        "load" => "load",
        "k_hot" => "k_hot",
        "d" => "d",
        _ => "mu_multiplier",
    }
}
