//! Domain types shared by the scheduler, the analytic model and the
//! simulator, plus whole-configuration validation.
//!
//! Units are fixed across the crate: time in seconds (`f64`), sizes in
//! bytes, rates in bits per second. Arrival rates are per rack.

use std::fmt;

use thiserror::Error;

use crate::scheduler;

/// Static topology of the management network.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    /// Number of data racks (N).
    pub n_data_racks: usize,
    /// Number of management racks (U). Stored, never used quantitatively.
    pub n_nms_racks: usize,
    /// FSO links in the rotating bundle (P); also the maximum set size.
    pub bundle_capacity: usize,
    /// Per-link rate in bits per second.
    pub fso_rate: f64,
    /// Primary interface buffer, packets.
    pub primary_buffer: usize,
    /// Backup interface buffer used by loopback, packets.
    pub backup_buffer: usize,
    /// Backup-to-primary forwarding rate, bits per second. Zero disables draining.
    pub backup_drain_rate: f64,
    /// Mirror switching time at each slot boundary, seconds.
    pub switchover_delay: f64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        Self {
            n_data_racks: 24,
            n_nms_racks: 4,
            bundle_capacity: 4,
            fso_rate: 1e9,
            primary_buffer: 1_000,
            backup_buffer: 10_000,
            backup_drain_rate: 1e7,
            switchover_delay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RackClass {
    Hotspot,
    NonHotspot,
}

impl RackClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RackClass::Hotspot => "hotspot",
            RackClass::NonHotspot => "non-hotspot",
        }
    }
}

impl fmt::Display for RackClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A group of racks whose FSO links are switched together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RackSet {
    pub set_id: usize,
    pub rack_ids: Vec<usize>,
    pub class: RackClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Sets indexed by `set_id`.
    pub sets: Vec<RackSet>,
    pub k_total: usize,
    pub k_hot: usize,
    pub k_low: usize,
    pub low_set_ids: Vec<usize>,
}

impl Partition {
    /// Builds a partition from explicit sets, deriving the class counts.
    pub fn from_sets(sets: Vec<RackSet>) -> Self {
        let k_hot = sets
            .iter()
            .filter(|s| s.class == RackClass::Hotspot)
            .count();
        let low_set_ids: Vec<usize> = sets
            .iter()
            .filter(|s| s.class == RackClass::NonHotspot)
            .map(|s| s.set_id)
            .collect();
        Self {
            k_total: sets.len(),
            k_hot,
            k_low: low_set_ids.len(),
            low_set_ids,
            sets,
        }
    }

    pub fn hot_set_ids(&self) -> Vec<usize> {
        self.sets
            .iter()
            .filter(|s| s.class == RackClass::Hotspot)
            .map(|s| s.set_id)
            .collect()
    }

    pub fn class_of(&self, set_id: usize) -> Option<RackClass> {
        self.sets.get(set_id).map(|s| s.class)
    }

    pub fn n_racks(&self) -> usize {
        self.sets.iter().map(|s| s.rack_ids.len()).sum()
    }

    /// Map from rack id to set id. Racks not covered map to `None`.
    pub fn rack_to_set(&self, n_racks: usize) -> Vec<Option<usize>> {
        let mut map = vec![None; n_racks];
        for set in &self.sets {
            for &r in &set.rack_ids {
                if r < n_racks {
                    map[r] = Some(set.set_id);
                }
            }
        }
        map
    }
}

/// One rotation cycle of the link bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Set served in each slot of the cycle.
    pub slots: Vec<usize>,
    /// Slot length d.
    pub slot_length: f64,
    /// Cycle duration, `slots.len() * slot_length`.
    pub tau: f64,
    /// Longest gap between two visits of the same hotspot set (0 without hotspots).
    pub tau_hot: f64,
    /// Longest gap between two visits of any set.
    pub tau_max: f64,
}

impl Schedule {
    /// Fraction of the cycle during which `set_id` is connected.
    pub fn share(&self, set_id: usize) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        let n = self.slots.iter().filter(|&&s| s == set_id).count();
        n as f64 / self.slots.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowSizeLaw {
    /// Uniform integer byte count in `[min, max]`.
    UniformBytes { min: u64, max: u64 },
    /// Fixed number of full-size packets.
    FixedPackets(u64),
}

/// Window-based sender parameters for the TCP-like source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AimdParams {
    /// Packets.
    pub initial_window: f64,
    /// Packets.
    pub ssthresh: f64,
    /// Base round-trip time, seconds.
    pub rtt: f64,
    /// Segment size, bytes.
    pub mss: u32,
    /// Multiplicative decrease factor, in (0, 1).
    pub loss_response: f64,
    /// Receiver window cap, packets.
    pub max_window: f64,
    /// Lower bound on the retransmission timer, seconds. Zero keeps the
    /// timer at `2 * rtt`.
    pub min_rto: f64,
}

impl Default for AimdParams {
    fn default() -> Self {
        Self {
            initial_window: 2.0,
            ssthresh: 64.0,
            rtt: 2e-4,
            mss: 1500,
            loss_response: 0.5,
            max_window: 1024.0,
            min_rto: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceType {
    /// Each arrival is a single packet.
    PoissonPacket,
    /// Each arrival is a flow paced at a constant bit rate, open loop.
    UdpConstantRate { rate_bps: f64 },
    /// Each arrival is a window-controlled flow.
    TcpAimd(AimdParams),
}

impl SourceType {
    pub fn is_flow(&self) -> bool {
        !matches!(self, SourceType::PoissonPacket)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficProfile {
    /// Per-rack arrival rate of non-hotspot racks (packets/s, or flows/s for flow sources).
    pub lambda_low: f64,
    /// Per-rack arrival rate of hotspot racks.
    pub lambda_hot: f64,
    /// `lambda_low / lambda_hot`.
    pub beta: f64,
    pub flow_size_law: FlowSizeLaw,
    pub source_type: SourceType,
    /// Maximum tolerated queueing delay; may be infinite.
    pub qos_deadline: f64,
    /// Packet size for packet sources and UDP packetization.
    pub packet_bytes: u32,
    /// Keep UDP packets out of the loopback path.
    pub loopback_filter_udp: bool,
    /// When set, packet arrivals are produced by thinning a Poisson process of
    /// this rate, so runs that differ only in arrival rate see nested arrival
    /// sets.
    pub coupling_rate: Option<f64>,
}

impl TrafficProfile {
    /// Profile with `lambda_hot = lambda_low / beta`.
    pub fn with_rates(lambda_low: f64, lambda_hot: f64) -> Self {
        Self {
            lambda_low,
            lambda_hot,
            beta: beta_of(lambda_low, lambda_hot),
            flow_size_law: FlowSizeLaw::FixedPackets(1),
            source_type: SourceType::PoissonPacket,
            qos_deadline: f64::INFINITY,
            packet_bytes: 1500,
            loopback_filter_udp: true,
            coupling_rate: None,
        }
    }

    pub fn rate_for(&self, class: RackClass) -> f64 {
        match class {
            RackClass::Hotspot => self.lambda_hot,
            RackClass::NonHotspot => self.lambda_low,
        }
    }

    /// Mean work one arrival brings, in full-size packets. Flow sources
    /// contribute their mean flow size in `packet_bytes` units.
    pub fn packets_per_arrival(&self) -> f64 {
        let seg = match self.source_type {
            SourceType::PoissonPacket => return 1.0,
            SourceType::TcpAimd(a) => a.mss,
            SourceType::UdpConstantRate { .. } => self.packet_bytes,
        };
        self.flow_size_law.mean(seg) / f64::from(self.packet_bytes)
    }

    /// Offered load of one rack in full-size packets per second.
    pub fn packet_rate_for(&self, class: RackClass) -> f64 {
        self.rate_for(class) * self.packets_per_arrival()
    }
}

/// `lambda_low / lambda_hot`, defined as 1 for an idle network.
pub fn beta_of(lambda_low: f64, lambda_hot: f64) -> f64 {
    if lambda_hot > 0.0 {
        lambda_low / lambda_hot
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServiceDistribution {
    Exponential,
    Deterministic,
    /// Arbitrary law given by its raw second and third moments.
    GeneralMoments { m2: f64, m3: f64 },
}

/// Per-packet transmission time on an FSO link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceModel {
    pub mean_service: f64,
    pub distribution: ServiceDistribution,
}

impl ServiceModel {
    pub fn exponential(mean: f64) -> Self {
        Self {
            mean_service: mean,
            distribution: ServiceDistribution::Exponential,
        }
    }

    pub fn deterministic(mean: f64) -> Self {
        Self {
            mean_service: mean,
            distribution: ServiceDistribution::Deterministic,
        }
    }

    /// Raw moments `(E[X], E[X^2], E[X^3])`.
    pub fn moments(&self) -> (f64, f64, f64) {
        let m = self.mean_service;
        match self.distribution {
            ServiceDistribution::Exponential => (m, 2.0 * m * m, 6.0 * m * m * m),
            ServiceDistribution::Deterministic => (m, m * m, m * m * m),
            ServiceDistribution::GeneralMoments { m2, m3 } => (m, m2, m3),
        }
    }

    pub fn utilization(&self, lambda: f64) -> f64 {
        lambda * self.mean_service
    }

    /// Same law with the link `multiplier` times as fast.
    pub fn scaled_speed(&self, multiplier: f64) -> Self {
        let k = 1.0 / multiplier;
        let distribution = match self.distribution {
            ServiceDistribution::GeneralMoments { m2, m3 } => ServiceDistribution::GeneralMoments {
                m2: m2 * k * k,
                m3: m3 * k * k * k,
            },
            other => other,
        };
        Self {
            mean_service: self.mean_service * k,
            distribution,
        }
    }
}

/// Simulator knobs that are not part of the physical model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Leading fraction of the run excluded from statistics.
    pub warmup_fraction: f64,
    /// A service still running at slot end completes before the link leaves.
    /// When false, a service only starts if it fits in the remaining slot.
    pub non_preemptive: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            warmup_fraction: 0.1,
            non_preemptive: true,
        }
    }
}

/// One failed invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("configuration rejected ({} violation(s)): {}", .0.len(), join(.0))]
    Violations(Vec<Violation>),
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Violations(v) => v,
        }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// A configuration that passed every invariant check. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    cluster: ClusterSpec,
    partition: Partition,
    schedule: Schedule,
    traffic: TrafficProfile,
    service: ServiceModel,
    options: SimOptions,
    warnings: Vec<String>,
}

impl ValidatedConfig {
    pub fn cluster(&self) -> &ClusterSpec {
        &self.cluster
    }
    pub fn partition(&self) -> &Partition {
        &self.partition
    }
    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }
    pub fn traffic(&self) -> &TrafficProfile {
        &self.traffic
    }
    pub fn service(&self) -> &ServiceModel {
        &self.service
    }
    pub fn options(&self) -> &SimOptions {
        &self.options
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

fn finite_pos(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300)
}

/// Checks every invariant of the input types and of their combination.
///
/// Returns all violations at once; nothing is accepted partially.
pub fn validate_config(
    cluster: &ClusterSpec,
    partition: &Partition,
    schedule: &Schedule,
    traffic: &TrafficProfile,
    service: &ServiceModel,
    options: &SimOptions,
) -> Result<ValidatedConfig, ConfigError> {
    let mut v = Vec::new();
    check_cluster(cluster, &mut v);
    check_partition(cluster, partition, &mut v);
    check_schedule(partition, schedule, &mut v);
    check_traffic(traffic, &mut v);
    check_service(service, &mut v);
    if !(options.warmup_fraction.is_finite() && (0.0..1.0).contains(&options.warmup_fraction)) {
        v.push(Violation::new("warmup_fraction", "must lie in [0, 1)"));
    }
    if !v.is_empty() {
        return Err(ConfigError::Violations(v));
    }

    let mut warnings = Vec::new();
    if partition.k_hot > 0 && traffic.lambda_hot == traffic.lambda_low {
        warnings.push("β = 1: hotspot racks carry the same rate as non-hotspot racks".to_string());
    }
    Ok(ValidatedConfig {
        cluster: cluster.clone(),
        partition: partition.clone(),
        schedule: schedule.clone(),
        traffic: traffic.clone(),
        service: *service,
        options: *options,
        warnings,
    })
}

pub(crate) fn check_cluster(c: &ClusterSpec, v: &mut Vec<Violation>) {
    if c.n_data_racks < 1 {
        v.push(Violation::new("n_data_racks", "N must be at least 1"));
    }
    if c.n_nms_racks < 1 {
        v.push(Violation::new("n_nms_racks", "U must be at least 1"));
    }
    if c.bundle_capacity < 1 || c.bundle_capacity > c.n_data_racks {
        v.push(Violation::new(
            "bundle_capacity",
            format!(
                "1 <= P <= N required (P = {}, N = {})",
                c.bundle_capacity, c.n_data_racks
            ),
        ));
    }
    if !finite_pos(c.fso_rate) {
        v.push(Violation::new("fso_rate", "must be finite and > 0"));
    }
    if !finite_nonneg(c.backup_drain_rate) {
        v.push(Violation::new("backup_drain_rate", "must be finite and >= 0"));
    }
    if !finite_nonneg(c.switchover_delay) {
        v.push(Violation::new("switchover_delay", "must be finite and >= 0"));
    }
}

fn check_partition(c: &ClusterSpec, p: &Partition, v: &mut Vec<Violation>) {
    if p.sets.is_empty() {
        v.push(Violation::new("partition", "no rack sets"));
        return;
    }
    if p.k_total != p.sets.len() {
        v.push(Violation::new("k_total", "K must equal the number of sets"));
    }
    if p.k_hot + p.k_low != p.k_total {
        v.push(Violation::new("k_total", "K must equal K_H + K_L"));
    }
    let hot = p
        .sets
        .iter()
        .filter(|s| s.class == RackClass::Hotspot)
        .count();
    if hot != p.k_hot {
        v.push(Violation::new("k_hot", "K_H disagrees with set classes"));
    }
    let low: Vec<usize> = p
        .sets
        .iter()
        .filter(|s| s.class == RackClass::NonHotspot)
        .map(|s| s.set_id)
        .collect();
    if low.len() != p.k_low {
        v.push(Violation::new("k_low", "K_L disagrees with set classes"));
    }
    if low != p.low_set_ids {
        v.push(Violation::new("low_set_ids", "must list the non-hotspot sets"));
    }

    let mut seen = vec![false; c.n_data_racks];
    let mut total = 0usize;
    for (i, s) in p.sets.iter().enumerate() {
        if s.set_id != i {
            v.push(Violation::new(
                "set_id",
                format!("set at position {i} has id {}", s.set_id),
            ));
        }
        if s.rack_ids.is_empty() {
            v.push(Violation::new("rack_ids", format!("set {i} is empty")));
        }
        if s.rack_ids.len() > c.bundle_capacity {
            v.push(Violation::new(
                "rack_ids",
                format!(
                    "set {i} has {} racks, more than P = {}",
                    s.rack_ids.len(),
                    c.bundle_capacity
                ),
            ));
        }
        total += s.rack_ids.len();
        for &r in &s.rack_ids {
            if r >= c.n_data_racks {
                v.push(Violation::new(
                    "rack_ids",
                    format!("rack {r} in set {i} is outside [0, N)"),
                ));
            } else if seen[r] {
                v.push(Violation::new(
                    "rack_ids",
                    format!("rack {r} appears in more than one set"),
                ));
            } else {
                seen[r] = true;
            }
        }
    }
    if total > c.n_data_racks {
        v.push(Violation::new(
            "partition",
            format!("set union exceeds N ({total} > {})", c.n_data_racks),
        ));
    } else if seen.iter().any(|x| !x) {
        v.push(Violation::new(
            "partition",
            "sets do not cover every data rack",
        ));
    }
}

fn check_schedule(p: &Partition, s: &Schedule, v: &mut Vec<Violation>) {
    if !finite_pos(s.slot_length) {
        v.push(Violation::new("slot_length", "d must be finite and > 0"));
    }
    if s.slots.is_empty() {
        v.push(Violation::new("slots", "schedule has no slots"));
        return;
    }
    if let Some(bad) = s.slots.iter().find(|&&id| id >= p.k_total) {
        v.push(Violation::new(
            "slots",
            format!("slot references unknown set {bad}"),
        ));
        return;
    }
    for set in 0..p.k_total {
        if !s.slots.contains(&set) {
            v.push(Violation::new(
                "slots",
                format!("set {set} is never served"),
            ));
        }
    }
    if !finite_pos(s.slot_length) {
        return;
    }
    if !rel_close(s.tau, s.slots.len() as f64 * s.slot_length) {
        v.push(Violation::new("tau", "tau must equal len(slots) * d"));
    }
    if !(s.tau_hot <= s.tau_max && s.tau_max <= s.tau) {
        v.push(Violation::new("tau_max", "tau_hot <= tau_max <= tau required"));
    }
    let (tau_hot, tau_max) = scheduler::rotation_gaps(&s.slots, p, s.slot_length);
    if !rel_close(tau_hot, s.tau_hot) && !(tau_hot == 0.0 && s.tau_hot == 0.0) {
        v.push(Violation::new("tau_hot", "disagrees with the slot list"));
    }
    if !rel_close(tau_max, s.tau_max) && !(tau_max == 0.0 && s.tau_max == 0.0) {
        v.push(Violation::new("tau_max", "disagrees with the slot list"));
    }
}

fn check_traffic(t: &TrafficProfile, v: &mut Vec<Violation>) {
    if !finite_nonneg(t.lambda_low) {
        v.push(Violation::new("lambda_low", "must be finite and >= 0"));
    }
    if !(t.lambda_hot.is_finite() && t.lambda_hot >= t.lambda_low) {
        v.push(Violation::new(
            "lambda_hot",
            "must be finite and >= lambda_low",
        ));
    }
    if !(t.beta.is_finite() && t.beta > 0.0 && rel_close(t.beta, beta_of(t.lambda_low, t.lambda_hot)))
    {
        v.push(Violation::new(
            "beta",
            "beta must equal lambda_low / lambda_hot",
        ));
    }
    if t.qos_deadline.is_nan() || t.qos_deadline <= 0.0 {
        v.push(Violation::new("qos_deadline", "must be > 0 (may be inf)"));
    }
    if t.packet_bytes == 0 {
        v.push(Violation::new("packet_bytes", "must be > 0"));
    }
    match t.flow_size_law {
        FlowSizeLaw::UniformBytes { min, max } => {
            if min == 0 || min > max {
                v.push(Violation::new("flow_size", "uniform law needs 0 < min <= max"));
            }
        }
        FlowSizeLaw::FixedPackets(n) => {
            if n == 0 {
                v.push(Violation::new("flow_size", "fixed_packets needs n >= 1"));
            }
        }
    }
    match t.source_type {
        SourceType::PoissonPacket => {}
        SourceType::UdpConstantRate { rate_bps } => {
            if !finite_pos(rate_bps) {
                v.push(Violation::new("source", "UDP rate must be finite and > 0"));
            }
        }
        SourceType::TcpAimd(a) => {
            if !finite_pos(a.initial_window) || a.initial_window < 1.0 {
                v.push(Violation::new("tcp_initial_window", "must be >= 1"));
            }
            if !finite_pos(a.ssthresh) {
                v.push(Violation::new("tcp_ssthresh", "must be > 0"));
            }
            if !finite_pos(a.rtt) {
                v.push(Violation::new("tcp_rtt", "must be > 0"));
            }
            if a.mss == 0 {
                v.push(Violation::new("tcp_mss", "must be > 0"));
            }
            if !(a.loss_response > 0.0 && a.loss_response < 1.0) {
                v.push(Violation::new("tcp_loss_response", "must lie in (0, 1)"));
            }
            if !(a.max_window.is_finite() && a.max_window >= a.initial_window) {
                v.push(Violation::new("tcp_max_window", "must be >= initial window"));
            }
            if !finite_nonneg(a.min_rto) {
                v.push(Violation::new("tcp_min_rto", "must be finite and >= 0"));
            }
        }
    }
    if let Some(r) = t.coupling_rate {
        if !(r.is_finite() && r >= t.lambda_hot.max(t.lambda_low) && r > 0.0) {
            v.push(Violation::new(
                "coupling_rate",
                "must be finite and >= both arrival rates",
            ));
        }
    }
}

fn check_service(s: &ServiceModel, v: &mut Vec<Violation>) {
    if !finite_pos(s.mean_service) {
        v.push(Violation::new("mean_service", "must be finite and > 0"));
        return;
    }
    if let ServiceDistribution::GeneralMoments { m2, m3 } = s.distribution {
        let m1 = s.mean_service;
        if !(m2.is_finite() && m2 >= m1 * m1 * (1.0 - 1e-12)) {
            v.push(Violation::new("service", "second moment must be finite and >= mean^2"));
        }
        if !finite_pos(m3) {
            v.push(Violation::new("service", "third moment must be finite and > 0"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheduler::{build_schedule, partition_racks, SchedulePolicy};
    use proptest::prelude::*;

    fn canonical() -> (ClusterSpec, Partition, Schedule, TrafficProfile, ServiceModel) {
        let cluster = ClusterSpec::default();
        let partition = partition_racks(24, 4, &[20, 21, 22, 23]).unwrap();
        let schedule = build_schedule(&partition, 0.01, &SchedulePolicy::InterleavedHotspot).unwrap();
        let traffic = TrafficProfile::with_rates(50.0, 500.0);
        let service = ServiceModel::exponential(1e-3);
        (cluster, partition, schedule, traffic, service)
    }

    fn validate(
        c: &ClusterSpec,
        p: &Partition,
        s: &Schedule,
        t: &TrafficProfile,
        m: &ServiceModel,
    ) -> Result<ValidatedConfig, ConfigError> {
        validate_config(c, p, s, t, m, &SimOptions::default())
    }

    #[test]
    fn canonical_config_is_valid() {
        let (c, p, s, t, m) = canonical();
        let cfg = validate(&c, &p, &s, &t, &m).unwrap();
        assert!(cfg.warnings().is_empty());
        assert_eq!(cfg.partition().k_total, 6);
    }

    #[test]
    fn six_sets_of_four_exceed_twenty_racks() {
        let c = ClusterSpec {
            n_data_racks: 20,
            ..ClusterSpec::default()
        };
        let sets = (0..6)
            .map(|i| RackSet {
                set_id: i,
                rack_ids: (4 * i..4 * i + 4).collect(),
                class: if i == 5 {
                    RackClass::Hotspot
                } else {
                    RackClass::NonHotspot
                },
            })
            .collect();
        let p = Partition::from_sets(sets);
        let s = build_schedule(&p, 0.01, &SchedulePolicy::InterleavedHotspot).unwrap();
        let (_, _, _, t, m) = canonical();
        let err = validate(&c, &p, &s, &t, &m).unwrap_err();
        assert!(
            err.violations()
                .iter()
                .any(|v| v.message.contains("set union exceeds N")),
            "{err}"
        );
    }

    #[test]
    fn equal_rates_with_hotspot_warns() {
        let (c, p, s, _, m) = canonical();
        let t = TrafficProfile::with_rates(50.0, 50.0);
        let cfg = validate(&c, &p, &s, &t, &m).unwrap();
        assert_eq!(cfg.warnings().len(), 1);
        assert!(cfg.warnings()[0].contains("β = 1"));
    }

    #[test]
    fn bundle_larger_than_cluster_is_named() {
        let (mut c, p, s, t, m) = canonical();
        c.bundle_capacity = 30;
        let err = validate(&c, &p, &s, &t, &m).unwrap_err();
        assert!(err.violations().iter().any(|v| v.field == "bundle_capacity"));
    }

    #[test]
    fn validation_is_idempotent() {
        let (c, p, s, t, m) = canonical();
        let a = validate(&c, &p, &s, &t, &m).unwrap();
        let b = validate(a.cluster(), a.partition(), a.schedule(), a.traffic(), a.service()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_violations_are_reported_together() {
        let (mut c, p, s, mut t, m) = canonical();
        c.fso_rate = -1.0;
        t.qos_deadline = 0.0;
        let err = validate(&c, &p, &s, &t, &m).unwrap_err();
        let fields: Vec<_> = err.violations().iter().map(|v| v.field).collect();
        assert!(fields.contains(&"fso_rate"));
        assert!(fields.contains(&"qos_deadline"));
    }

    // Each mutation breaks exactly one documented invariant.
    fn mutate(which: usize, x: f64) -> (ClusterSpec, Partition, Schedule, TrafficProfile, ServiceModel) {
        let (mut c, mut p, mut s, mut t, mut m) = canonical();
        match which {
            0 => c.n_data_racks = 0,
            1 => c.n_nms_racks = 0,
            2 => c.bundle_capacity = 0,
            3 => c.bundle_capacity = 25 + (x * 10.0) as usize,
            4 => c.fso_rate = -x,
            5 => c.backup_drain_rate = -x - 1e-9,
            6 => c.switchover_delay = -x - 1e-9,
            7 => p.k_total += 1,
            8 => p.sets[0].rack_ids.push(23),
            9 => p.sets[1].rack_ids.pop().map(|_| ()).unwrap(),
            10 => s.slot_length = -x,
            11 => s.tau *= 1.5 + x,
            12 => s.slots.retain(|&id| id != 2),
            13 => t.lambda_low = -x - 1e-9,
            14 => t.lambda_hot = t.lambda_low * (0.5 * x),
            15 => t.beta *= 2.0 + x,
            16 => t.qos_deadline = -x,
            17 => m.mean_service = -x,
            18 => {
                m.distribution = ServiceDistribution::GeneralMoments {
                    m2: m.mean_service * m.mean_service * 0.5,
                    m3: 1.0,
                }
            }
            19 => t.flow_size_law = FlowSizeLaw::UniformBytes { min: 10, max: 5 },
            20 => p.sets[0].set_id = 7,
            21 => s.tau_max = s.tau * (2.0 + x),
            _ => unreachable!(),
        }
        (c, p, s, t, m)
    }

    proptest! {
        #[test]
        fn single_field_mutation_is_always_caught(which in 0usize..22, x in 0.0f64..1.0) {
            let (c, p, s, t, m) = mutate(which, x);
            prop_assert!(validate(&c, &p, &s, &t, &m).is_err());
        }
    }
}
