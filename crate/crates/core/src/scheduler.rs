//! Rack partitioning, cyclic slot schedules and rotation-time quantities.

use std::fmt::Write as _;

use thiserror::Error;

use crate::model::{Partition, RackClass, RackSet, Schedule, ServiceModel, TrafficProfile};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulePolicy {
    /// Non-hotspot sets on odd slots, hotspot sets on even slots.
    InterleavedHotspot,
    /// Every set once per cycle in id order.
    RoundRobin,
    Custom(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("invalid bundle capacity: need p >= 1 (p = {p}, n = {n})")]
    InvalidCapacity { p: usize, n: usize },
    #[error("hotspot rack {0} is outside [0, n)")]
    InvalidRack(usize),
    #[error("hotspot rack {0} listed twice")]
    DuplicateRack(usize),
    #[error("slot length must be finite and > 0, got {0}")]
    InvalidSlotLength(f64),
    #[error("policy does not fit the partition: {0}")]
    PolicyMismatch(String),
}

/// Splits `n` racks into hotspot and non-hotspot sets of at most `p` racks.
///
/// A bundle wider than the cluster simply yields one set per class.
/// Each class is split into `ceil(n_class / p)` sets whose sizes differ by at
/// most one, filled in ascending rack id. Non-hotspot sets get the low ids.
pub fn partition_racks(
    n: usize,
    p: usize,
    hotspot_rack_ids: &[usize],
) -> Result<Partition, ScheduleError> {
    if p < 1 || n < 1 {
        return Err(ScheduleError::InvalidCapacity { p, n });
    }
    let mut is_hot = vec![false; n];
    for &r in hotspot_rack_ids {
        if r >= n {
            return Err(ScheduleError::InvalidRack(r));
        }
        if is_hot[r] {
            return Err(ScheduleError::DuplicateRack(r));
        }
        is_hot[r] = true;
    }
    let low: Vec<usize> = (0..n).filter(|&r| !is_hot[r]).collect();
    let hot: Vec<usize> = (0..n).filter(|&r| is_hot[r]).collect();

    let mut sets = Vec::new();
    for (racks, class) in [(low, RackClass::NonHotspot), (hot, RackClass::Hotspot)] {
        for chunk in split_even(&racks, p) {
            sets.push(RackSet {
                set_id: sets.len(),
                rack_ids: chunk,
                class,
            });
        }
    }
    Ok(Partition::from_sets(sets))
}

fn split_even(racks: &[usize], p: usize) -> Vec<Vec<usize>> {
    if racks.is_empty() {
        return Vec::new();
    }
    let k = racks.len().div_ceil(p);
    let base = racks.len() / k;
    let extra = racks.len() % k;
    let mut out = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        out.push(racks[at..at + size].to_vec());
        at += size;
    }
    out
}

/// Builds one rotation cycle.
///
/// With `InterleavedHotspot` the cycle is `[L1, H1, L2, H2, ...]` where the
/// non-hotspot and hotspot sequences each repeat round-robin until both
/// realign, so the cycle holds `2 * lcm(K_L, K_H)` slots.
pub fn build_schedule(
    partition: &Partition,
    d: f64,
    policy: &SchedulePolicy,
) -> Result<Schedule, ScheduleError> {
    if !(d.is_finite() && d > 0.0) {
        return Err(ScheduleError::InvalidSlotLength(d));
    }
    let slots = match policy {
        SchedulePolicy::InterleavedHotspot => {
            let low = &partition.low_set_ids;
            let hot = partition.hot_set_ids();
            if hot.is_empty() || low.is_empty() {
                return Err(ScheduleError::PolicyMismatch(format!(
                    "interleaving needs at least one set of each class (K_H = {}, K_L = {})",
                    hot.len(),
                    low.len()
                )));
            }
            let pairs = lcm(low.len(), hot.len());
            (0..pairs)
                .flat_map(|i| [low[i % low.len()], hot[i % hot.len()]])
                .collect()
        }
        SchedulePolicy::RoundRobin => (0..partition.k_total).collect(),
        SchedulePolicy::Custom(list) => {
            if list.is_empty() {
                return Err(ScheduleError::PolicyMismatch("empty slot list".into()));
            }
            if let Some(bad) = list.iter().find(|&&s| s >= partition.k_total) {
                return Err(ScheduleError::PolicyMismatch(format!(
                    "slot references unknown set {bad}"
                )));
            }
            if let Some(missing) = (0..partition.k_total).find(|s| !list.contains(s)) {
                return Err(ScheduleError::PolicyMismatch(format!(
                    "set {missing} is never served"
                )));
            }
            list.clone()
        }
    };
    let (tau_hot, tau_max) = rotation_gaps(&slots, partition, d);
    Ok(Schedule {
        tau: slots.len() as f64 * d,
        slots,
        slot_length: d,
        tau_hot,
        tau_max,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

/// Longest run of foreign slots between two visits of `set`, in slots.
pub fn max_gap_slots(slots: &[usize], set: usize) -> Option<usize> {
    let positions: Vec<usize> = slots
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == set)
        .map(|(i, _)| i)
        .collect();
    let first = *positions.first()?;
    let len = slots.len();
    let mut worst = 0;
    for (i, &pos) in positions.iter().enumerate() {
        let next = positions.get(i + 1).copied().unwrap_or(first + len);
        worst = worst.max(next - pos - 1);
    }
    Some(worst)
}

/// `(tau_hot, tau_max)` for a slot list: the worst visit gap over hotspot sets
/// (0 without hotspots) and over all sets.
pub fn rotation_gaps(slots: &[usize], partition: &Partition, d: f64) -> (f64, f64) {
    let mut hot = 0usize;
    let mut all = 0usize;
    for set in &partition.sets {
        if let Some(g) = max_gap_slots(slots, set.set_id) {
            all = all.max(g);
            if set.class == RackClass::Hotspot {
                hot = hot.max(g);
            }
        }
    }
    (hot as f64 * d, all as f64 * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetStability {
    pub set_id: usize,
    pub class: RackClass,
    /// Per-rack offered load, full-size packets per second.
    pub lambda: f64,
    /// Plain utilization `lambda * E[X]`.
    pub utilization: f64,
    /// Fraction of time the set is connected.
    pub share: f64,
    /// Utilization of the connected time, `utilization / share`.
    pub rho_eff: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub sets: Vec<SetStability>,
    pub stable: bool,
}

impl StabilityReport {
    fn from_sets(sets: Vec<SetStability>) -> Self {
        let stable = sets.iter().all(|s| s.stable);
        Self { sets, stable }
    }

    pub fn max_rho_eff(&self) -> f64 {
        self.sets.iter().map(|s| s.rho_eff).fold(0.0, f64::max)
    }
}

fn set_stability(
    set: &RackSet,
    traffic: &TrafficProfile,
    service: &ServiceModel,
    share: f64,
) -> SetStability {
    let lambda = traffic.packet_rate_for(set.class);
    let utilization = service.utilization(lambda);
    let rho_eff = if utilization == 0.0 {
        0.0
    } else if share > 0.0 {
        utilization / share
    } else {
        f64::INFINITY
    };
    SetStability {
        set_id: set.set_id,
        class: set.class,
        lambda,
        utilization,
        share,
        rho_eff,
        stable: rho_eff < 1.0,
    }
}

/// Per-set utilization of the connected time under a rotating schedule.
pub fn stability_check(
    schedule: &Schedule,
    traffic: &TrafficProfile,
    service: &ServiceModel,
    partition: &Partition,
) -> StabilityReport {
    StabilityReport::from_sets(
        partition
            .sets
            .iter()
            .map(|s| set_stability(s, traffic, service, schedule.share(s.set_id)))
            .collect(),
    )
}

/// Same check when every rack owns a dedicated link.
pub fn stability_check_dedicated(
    traffic: &TrafficProfile,
    service: &ServiceModel,
    partition: &Partition,
) -> StabilityReport {
    StabilityReport::from_sets(
        partition
            .sets
            .iter()
            .map(|s| set_stability(s, traffic, service, 1.0))
            .collect(),
    )
}

/// Schedule as CSV rows `slot_index,set_id,start_offset_seconds`.
pub fn schedule_csv(schedule: &Schedule) -> String {
    let mut out = String::from("slot_index,set_id,start_offset_seconds\n");
    for (i, set) in schedule.slots.iter().enumerate() {
        let _ = writeln!(out, "{i},{set},{}", i as f64 * schedule.slot_length);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interleaved(k_low: usize, k_hot: usize, d: f64) -> (Partition, Schedule) {
        let n = k_low + k_hot;
        let hot: Vec<usize> = (k_low..n).collect();
        let p = partition_racks(n, 1, &hot).unwrap();
        let s = build_schedule(&p, d, &SchedulePolicy::InterleavedHotspot).unwrap();
        (p, s)
    }

    #[test]
    fn twenty_racks_four_links_gives_five_sets() {
        let p = partition_racks(20, 4, &[]).unwrap();
        assert_eq!(p.k_total, 5);
        assert_eq!(p.k_hot, 0);
        assert!(p.sets.iter().all(|s| s.rack_ids.len() == 4));
        assert_eq!(p.sets[1].rack_ids, vec![4, 5, 6, 7]);
    }

    #[test]
    fn single_rack_single_set() {
        let p = partition_racks(1, 4, &[]).unwrap();
        assert_eq!(p.sets.len(), 1);
        assert_eq!(p.sets[0].rack_ids, vec![0]);
    }

    #[test]
    fn canonical_cluster_has_one_hotspot_set() {
        let p = partition_racks(24, 4, &[20, 21, 22, 23]).unwrap();
        assert_eq!((p.k_low, p.k_hot, p.k_total), (5, 1, 6));
        assert_eq!(p.sets[5].rack_ids, vec![20, 21, 22, 23]);
        assert_eq!(p.sets[5].class, RackClass::Hotspot);
        assert_eq!(p.low_set_ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn uneven_class_splits_into_near_equal_sets() {
        let p = partition_racks(10, 4, &[]).unwrap();
        let sizes: Vec<_> = p.sets.iter().map(|s| s.rack_ids.len()).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
    }

    #[test]
    fn partition_rejects_bad_inputs() {
        assert!(matches!(
            partition_racks(4, 0, &[]),
            Err(ScheduleError::InvalidCapacity { .. })
        ));
        assert_eq!(partition_racks(4, 2, &[4]), Err(ScheduleError::InvalidRack(4)));
        assert_eq!(partition_racks(4, 2, &[1, 1]), Err(ScheduleError::DuplicateRack(1)));
    }

    #[test]
    fn three_low_one_hot_interleaves() {
        let (_, s) = interleaved(3, 1, 1.0);
        assert_eq!(s.slots, vec![0, 3, 1, 3, 2, 3]);
        assert_eq!(s.tau, 6.0);
        assert_eq!(s.tau_hot, 1.0);
        assert_eq!(s.tau_max, 5.0);
    }

    #[test]
    fn smallest_interleaving() {
        let (_, s) = interleaved(1, 1, 0.5);
        assert_eq!(s.slots, vec![0, 1]);
        assert_eq!(s.tau, 1.0);
    }

    #[test]
    fn canonical_schedule_rotation_times() {
        let p = partition_racks(24, 4, &[20, 21, 22, 23]).unwrap();
        let s = build_schedule(&p, 0.010, &SchedulePolicy::InterleavedHotspot).unwrap();
        assert_eq!(s.slots.len(), 10);
        assert!((s.tau - 0.100).abs() < 1e-15);
        assert!((s.tau_hot - 0.010).abs() < 1e-15);
        assert!((s.tau_max - 0.090).abs() < 1e-15);
    }

    #[test]
    fn two_hotspot_sets_share_even_slots() {
        let (_, s) = interleaved(3, 2, 1.0);
        assert_eq!(s.slots, vec![0, 3, 1, 4, 2, 3, 0, 4, 1, 3, 2, 4]);
        assert_eq!(s.tau_hot, 3.0);
        assert_eq!(s.tau_max, 5.0);
    }

    #[test]
    fn interleaving_without_hotspot_is_rejected() {
        let p = partition_racks(8, 4, &[]).unwrap();
        assert!(matches!(
            build_schedule(&p, 1.0, &SchedulePolicy::InterleavedHotspot),
            Err(ScheduleError::PolicyMismatch(_))
        ));
    }

    #[test]
    fn custom_schedule_must_cover_all_sets() {
        let p = partition_racks(8, 4, &[]).unwrap();
        assert!(build_schedule(&p, 1.0, &SchedulePolicy::Custom(vec![0, 0])).is_err());
        assert!(build_schedule(&p, 1.0, &SchedulePolicy::Custom(vec![0, 2])).is_err());
        let s = build_schedule(&p, 1.0, &SchedulePolicy::Custom(vec![0, 0, 1])).unwrap();
        assert_eq!(s.tau_max, 2.0);
    }

    #[test]
    fn zero_load_is_stable() {
        let (p, s) = interleaved(3, 1, 0.01);
        let t = TrafficProfile::with_rates(0.0, 0.0);
        let r = stability_check(&s, &t, &ServiceModel::exponential(1e-3), &p);
        assert!(r.stable);
        assert!(r.sets.iter().all(|x| x.rho_eff == 0.0));
    }

    #[test]
    fn dedicated_links_reduce_to_plain_utilization() {
        let (p, _) = interleaved(3, 1, 0.01);
        let t = TrafficProfile::with_rates(100.0, 400.0);
        let r = stability_check_dedicated(&t, &ServiceModel::exponential(1e-3), &p);
        assert!((r.sets[3].rho_eff - 0.4).abs() < 1e-12);
        assert!((r.sets[0].rho_eff - 0.1).abs() < 1e-12);
    }

    #[test]
    fn half_share_doubles_hotspot_utilization() {
        let (p, s) = interleaved(3, 1, 0.01);
        let t = TrafficProfile::with_rates(10.0, 600.0);
        let r = stability_check(&s, &t, &ServiceModel::exponential(1e-3), &p);
        let hot = &r.sets[3];
        assert!((hot.share - 0.5).abs() < 1e-15);
        assert!((hot.rho_eff - 1.2).abs() < 1e-12);
        assert!(!hot.stable);
        assert!(!r.stable);
    }

    #[test]
    fn schedule_csv_lists_offsets() {
        let (_, s) = interleaved(1, 1, 0.5);
        assert_eq!(
            schedule_csv(&s),
            "slot_index,set_id,start_offset_seconds\n0,0,0\n1,1,0.5\n"
        );
    }

    proptest! {
        #[test]
        fn interleaved_schedule_invariants(k_low in 1usize..12, k_hot in 1usize..12, d in 1e-3f64..1.0) {
            let (p, s) = interleaved(k_low, k_hot, d);
            prop_assert!((s.tau - s.slots.len() as f64 * d).abs() <= 1e-12 * s.tau);
            prop_assert!(s.tau_hot <= s.tau_max);
            prop_assert!(s.tau_max < s.tau + d);
            let hot_slots = s.slots.iter().filter(|&&x| p.class_of(x) == Some(RackClass::Hotspot)).count();
            prop_assert_eq!(hot_slots * 2, s.slots.len());
            for id in 0..p.k_total {
                prop_assert!(s.slots.contains(&id));
            }
            if k_hot == 1 {
                prop_assert_eq!(hot_slots, s.slots.len() / 2);
                prop_assert_eq!(s.tau_hot, d);
                prop_assert!((s.tau_max - (2 * k_low - 1) as f64 * d).abs() < 1e-12);
            }
        }

        #[test]
        fn partition_is_deterministic_and_bounded(n in 1usize..60, p_frac in 0.0f64..1.0, hot_mask in proptest::collection::vec(any::<bool>(), 60)) {
            let p = 1 + ((n - 1) as f64 * p_frac) as usize;
            let hot: Vec<usize> = (0..n).filter(|&r| hot_mask[r]).collect();
            let a = partition_racks(n, p, &hot).unwrap();
            let b = partition_racks(n, p, &hot).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.sets.iter().all(|s| !s.rack_ids.is_empty() && s.rack_ids.len() <= p));
            prop_assert_eq!(a.n_racks(), n);
            let n_hot = hot.len();
            prop_assert_eq!(a.k_total, n_hot.div_ceil(p) + (n - n_hot).div_ceil(p));
        }
    }
}
