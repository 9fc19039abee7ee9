//! Mean waiting-time model for the rotating bundle.
//!
//! The non-hotspot wait is the fixed point of
//!
//! ```text
//! W_L = rho * (lambda * W_L * E[X]) + (1 - rho) * [Pr_i (K-1)(K-2) d / 2 + Pr_h D_h] + R
//! ```
//!
//! and the hotspot wait the fixed point of
//!
//! ```text
//! W_H = rho * (lambda * W_H * E[X]) + (1 - rho) * (lambda * W_H * E[X] + sum_{j=1}^{p} d)
//! ```
//!
//! Both are solved by damped iteration. `R` is the mean residual service time
//! of an M/G/1 queue. The hotspot equation carries no residual term, and its
//! fixed point does not depend on the load: it reduces to `p * d`.
//!
//! [`slot_wait_table`] also exposes the exact mean time from a uniformly random
//! instant to the start of the target set's next slot, which is what the
//! simulator measures at vanishing load.

use thiserror::Error;

use crate::model::{Partition, RackClass, Schedule, ServiceModel};
use crate::scheduler::max_gap_slots;

/// Damping factor of the fixed-point iteration.
pub const DAMPING: f64 = 0.5;
/// Relative accuracy requested from the fixed-point solver.
pub const TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("need at least one non-hotspot set, got k_low = {0}")]
    InvalidCount(usize),
    #[error("set {0} is not served by the schedule")]
    UnknownSet(usize),
    #[error("utilization {0} >= 1")]
    Unstable(f64),
    #[error("fixed-point iteration did not converge after {iterations} iterations (last value {last})")]
    NonConvergence { iterations: usize, last: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualMoments {
    pub mean_residual: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// Set when the inputs make `second_moment < mean_residual^2`. The
    /// variance is reported as computed, not clamped.
    pub negative_variance: bool,
}

/// First and second moments of the residual time seen by an arrival.
pub fn residual_moments(lambda: f64, service: &ServiceModel) -> ResidualMoments {
    let (m1, m2, m3) = service.moments();
    let rho = lambda * m1;
    let mean_residual = 0.5 * rho * m2 / m1;
    let second_moment = lambda * m3 / 3.0;
    let variance = second_moment - mean_residual * mean_residual;
    ResidualMoments {
        mean_residual,
        second_moment,
        variance,
        negative_variance: variance < -1e-12 * second_moment.abs().max(f64::MIN_POSITIVE),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateProbabilities {
    /// Probability that the hotspot group is under service.
    pub pr_hot: f64,
    /// Probability that one given non-hotspot set is under service.
    pub pr_low: f64,
    pub k_low: usize,
}

/// The bundle alternates between the two groups, so the hotspot group holds
/// it half of the time and the non-hotspot sets split the rest evenly.
pub fn state_probabilities(k_low: usize) -> Result<StateProbabilities, AnalyticError> {
    if k_low == 0 {
        return Err(AnalyticError::InvalidCount(0));
    }
    let pr_hot = 0.5;
    Ok(StateProbabilities {
        pr_hot,
        pr_low: (1.0 - pr_hot) / k_low as f64,
        k_low,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotWaitTable {
    /// `D_j = sum_{i=j+1}^{K} d` for `j = 1..K-1`.
    pub d_values: Vec<f64>,
    /// Expected wait until the target's next slot given a hotspot slot is in
    /// service, measured from the start of that slot.
    pub d_hot: f64,
    /// Mean time from a uniformly random instant of the cycle to the start of
    /// the target's next slot (zero while the target itself is served).
    pub mean_wait_to_slot: f64,
}

/// Slots from the start of slot `pos` until the target's next slot begins.
/// Zero when `pos` is a target slot.
fn slots_until(slots: &[usize], target: usize, pos: usize) -> usize {
    let len = slots.len();
    (0..len)
        .find(|&k| slots[(pos + k) % len] == target)
        .expect("target present in schedule")
}

/// Time from the start of slot `slot_index` to the start of the target's
/// next service slot.
pub fn remaining_wait(
    schedule: &Schedule,
    target_set: usize,
    slot_index: usize,
) -> Result<f64, AnalyticError> {
    if !schedule.slots.contains(&target_set) {
        return Err(AnalyticError::UnknownSet(target_set));
    }
    let pos = slot_index % schedule.slots.len();
    Ok(slots_until(&schedule.slots, target_set, pos) as f64 * schedule.slot_length)
}

/// Per-state waits of a packet queued at `target_set`.
///
/// The successor of every slot is fixed by the cyclic schedule, so each
/// transition in the conditional sum has probability one or zero. `D_h` is the
/// state-probability weighted mean over hotspot slot occurrences, each weighted
/// by the probability of the state that precedes it.
pub fn slot_wait_table(
    schedule: &Schedule,
    partition: &Partition,
    target_set: usize,
) -> Result<SlotWaitTable, AnalyticError> {
    if !schedule.slots.contains(&target_set) {
        return Err(AnalyticError::UnknownSet(target_set));
    }
    let d = schedule.slot_length;
    let len = schedule.slots.len();
    let k = partition.k_total;
    let d_values = (1..k).map(|j| (k - j) as f64 * d).collect();

    let weight_of = |set: usize| -> f64 {
        match partition.class_of(set) {
            Some(RackClass::NonHotspot) => 0.5 / partition.k_low as f64,
            Some(RackClass::Hotspot) if partition.k_low == 0 => 1.0 / partition.k_hot as f64,
            Some(RackClass::Hotspot) => 0.5 / partition.k_hot as f64,
            None => 0.0,
        }
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for pos in 0..len {
        let set = schedule.slots[pos];
        if set == target_set || partition.class_of(set) != Some(RackClass::Hotspot) {
            continue;
        }
        let prev = schedule.slots[(pos + len - 1) % len];
        let w = weight_of(prev);
        num += w * slots_until(&schedule.slots, target_set, pos) as f64 * d;
        den += w;
    }
    let d_hot = if den > 0.0 { num / den } else { 0.0 };

    let total: f64 = (0..len)
        .map(|pos| match slots_until(&schedule.slots, target_set, pos) {
            0 => 0.0,
            n => n as f64 * d - 0.5 * d,
        })
        .sum();
    Ok(SlotWaitTable {
        d_values,
        d_hot,
        mean_wait_to_slot: total / len as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitEstimate {
    pub mean_wait: f64,
    /// `lambda * mean_wait`.
    pub queue_len: f64,
    /// Foreign slots between two visits of the set.
    pub vacation_count: usize,
    /// Slot lengths the model charges a waiting packet.
    pub slots_waited: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped fixed-point iteration `w <- (1 - g) w + g f(w)` from `w = 0`.
///
/// Stops once the a-posteriori error bound `|step| q / (1 - q)`, with `q` the
/// observed contraction ratio, falls under `TOLERANCE * |w|`. A damped map
/// whose slope is not below one is reported as non-convergent even if it
/// happens to sit still.
pub fn solve_fixed_point<F: Fn(f64) -> f64>(f: F) -> Result<(f64, usize), AnalyticError> {
    let g = |w: f64| (1.0 - DAMPING) * w + DAMPING * f(w);
    let mut w = 0.0f64;
    let mut prev_step: Option<f64> = None;
    for it in 1..=MAX_ITERATIONS {
        let next = g(w);
        if !next.is_finite() {
            return Err(AnalyticError::NonConvergence {
                iterations: it,
                last: next,
            });
        }
        let step = (next - w).abs();
        w = next;
        let done = match prev_step {
            _ if step == 0.0 => true,
            Some(p) if p > 0.0 => {
                let q = step / p;
                q < 1.0 && step * q / (1.0 - q) <= TOLERANCE * w.abs()
            }
            _ => false,
        };
        prev_step = Some(step);
        if done {
            let h = w.abs().max(1.0) * 1e-6;
            let slope = (g(w + h) - g(w)) / h;
            if slope.abs() >= 1.0 {
                return Err(AnalyticError::NonConvergence {
                    iterations: it,
                    last: w,
                });
            }
            return Ok((w, it));
        }
    }
    Err(AnalyticError::NonConvergence {
        iterations: MAX_ITERATIONS,
        last: w,
    })
}

/// Inputs of the non-hotspot wait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowWaitParams {
    pub lambda_low: f64,
    pub service: ServiceModel,
    /// K, all sets.
    pub k_total: usize,
    pub k_low: usize,
    /// Slot length d.
    pub slot_length: f64,
    /// D_h from [`slot_wait_table`].
    pub d_hot: f64,
    /// Foreign slots between two visits of a non-hotspot set.
    pub vacation_slots: usize,
}

impl LowWaitParams {
    /// Takes K, K_L, d and D_h from a schedule, using the first non-hotspot
    /// set as target. All non-hotspot sets are symmetric under interleaving.
    pub fn from_schedule(
        lambda_low: f64,
        service: ServiceModel,
        partition: &Partition,
        schedule: &Schedule,
    ) -> Result<Self, AnalyticError> {
        let target = *partition
            .low_set_ids
            .first()
            .ok_or(AnalyticError::InvalidCount(0))?;
        let table = slot_wait_table(schedule, partition, target)?;
        Ok(Self {
            lambda_low,
            service,
            k_total: partition.k_total,
            k_low: partition.k_low,
            slot_length: schedule.slot_length,
            d_hot: table.d_hot,
            vacation_slots: max_gap_slots(&schedule.slots, target).unwrap_or(0),
        })
    }

    /// Bracketed vacation term `Pr_i (K-1)(K-2) d / 2 + Pr_h D_h`.
    pub fn vacation_term(&self) -> Result<f64, AnalyticError> {
        let probs = state_probabilities(self.k_low)?;
        let k = self.k_total as f64;
        Ok(probs.pr_low * (k - 1.0) * (k - 2.0) * self.slot_length / 2.0
            + probs.pr_hot * self.d_hot)
    }
}

pub fn expected_wait_low(params: &LowWaitParams) -> Result<WaitEstimate, AnalyticError> {
    let lambda = params.lambda_low;
    let m1 = params.service.mean_service;
    let rho = lambda * m1;
    if rho >= 1.0 {
        return Err(AnalyticError::Unstable(rho));
    }
    let a = params.vacation_term()?;
    let r = residual_moments(lambda, &params.service).mean_residual;
    let (w, iterations) =
        solve_fixed_point(|w| rho * (lambda * w * m1) + (1.0 - rho) * a + r)?;
    Ok(WaitEstimate {
        mean_wait: w,
        queue_len: lambda * w,
        vacation_count: params.vacation_slots,
        slots_waited: params.k_total.saturating_sub(1),
        iterations,
        converged: true,
    })
}

/// Inputs of the hotspot wait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HighWaitParams {
    pub lambda_hot: f64,
    pub service: ServiceModel,
    pub slot_length: f64,
    /// Slots served elsewhere between two visits of the hotspot set.
    pub n_low_between_visits: usize,
    pub k_hot: usize,
}

impl HighWaitParams {
    pub fn from_schedule(
        lambda_hot: f64,
        service: ServiceModel,
        partition: &Partition,
        schedule: &Schedule,
    ) -> Result<Self, AnalyticError> {
        let hot = partition.hot_set_ids();
        let target = *hot.first().ok_or(AnalyticError::InvalidCount(0))?;
        let gap = max_gap_slots(&schedule.slots, target).ok_or(AnalyticError::UnknownSet(target))?;
        Ok(Self {
            lambda_hot,
            service,
            slot_length: schedule.slot_length,
            n_low_between_visits: gap,
            k_hot: partition.k_hot,
        })
    }
}

pub fn expected_wait_high(params: &HighWaitParams) -> Result<WaitEstimate, AnalyticError> {
    let lambda = params.lambda_hot;
    let m1 = params.service.mean_service;
    let rho = lambda * m1;
    let vac = params.n_low_between_visits as f64 * params.slot_length;
    let (w, iterations) = solve_fixed_point(|w| {
        let queued = lambda * w * m1;
        rho * queued + (1.0 - rho) * (queued + vac)
    })?;
    Ok(WaitEstimate {
        mean_wait: w,
        queue_len: lambda * w,
        vacation_count: params.n_low_between_visits,
        slots_waited: params.k_hot + 1,
        iterations,
        converged: true,
    })
}

/// Pollaczek-Khinchine mean queueing delay of an M/G/1 queue without
/// vacations, `lambda E[X^2] / (2 (1 - rho))`.
pub fn mm1_oracle(lambda: f64, service: &ServiceModel) -> Result<f64, AnalyticError> {
    let (m1, m2, _) = service.moments();
    let rho = lambda * m1;
    if rho >= 1.0 {
        return Err(AnalyticError::Unstable(rho));
    }
    Ok(lambda * m2 / (2.0 * (1.0 - rho)))
}
