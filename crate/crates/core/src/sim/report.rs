use std::fmt::Write as _;
use std::io;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::Mode;
use crate::model::RackClass;
use crate::traffic::Transport;

#[derive(Debug, Clone, PartialEq)]
pub struct SetStats {
    pub set_id: usize,
    pub class: RackClass,
    pub racks: usize,
    /// Packets offered to the set's racks over the whole run.
    pub arrivals: u64,
    pub served: u64,
    pub drops_deadline: u64,
    pub drops_overflow: u64,
    /// Buffered or in service when the run ended.
    pub queued_at_end: u64,
    /// Mean queueing delay of packets that arrived after warm-up and started
    /// service; NaN without samples.
    pub mean_wait: f64,
    pub p99_wait: f64,
    pub wait_samples: u64,
    /// Mean time the sampled packets spent waiting for their set to be
    /// connected at all; NaN without samples.
    pub mean_phase_wait: f64,
    /// Same quantity for an arrival at a uniformly random instant, exact.
    pub expected_phase_wait: f64,
    /// Share of the bundle's time the set was connected, over the
    /// measurement window.
    pub service_time_fraction: f64,
    /// Congestion windows sampled at every ACK after warm-up, packets.
    pub cwnd_samples: Vec<f64>,
}

impl SetStats {
    pub fn conserved(&self) -> bool {
        self.arrivals
            == self.served + self.drops_deadline + self.drops_overflow + self.queued_at_end
    }

    pub fn mean_cwnd(&self) -> f64 {
        mean(&self.cwnd_samples)
    }

    /// Mean wait with the phase wait replaced by its exact mean.
    ///
    /// For Poisson packet arrivals the phase of an arrival is uniform over
    /// the cycle, so this is an unbiased estimate of the same mean wait as
    /// `mean_wait`, without the spread that the cycle position adds. It is
    /// not meaningful for flow traffic.
    pub fn phase_adjusted_wait(&self) -> f64 {
        self.mean_wait - self.mean_phase_wait + self.expected_phase_wait
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowStats {
    pub flow_id: u64,
    pub rack: usize,
    pub set_id: usize,
    pub class: RackClass,
    pub transport: Transport,
    pub start_time: f64,
    /// Bytes.
    pub size: u64,
    /// Unique bytes received.
    pub delivered: u64,
    /// Instant the last byte was received, if the whole flow arrived.
    pub completion_time: Option<f64>,
    /// Bits per second.
    pub throughput: f64,
    /// Started after warm-up.
    pub measured: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mode: Mode,
    pub seed: u64,
    pub sim_duration: f64,
    pub warmup: f64,
    pub per_set: Vec<SetStats>,
    pub per_flow: Vec<FlowStats>,
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank percentile of unsorted data.
pub(crate) fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn weighted<'a>(sets: impl Iterator<Item = &'a SetStats>, f: impl Fn(&SetStats) -> f64) -> f64 {
    let (sum, n) = sets
        .filter(|s| s.wait_samples > 0)
        .fold((0.0, 0u64), |(sum, n), s| (sum + f(s) * s.wait_samples as f64, n + s.wait_samples));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl SimReport {
    pub fn sets_of(&self, class: RackClass) -> impl Iterator<Item = &SetStats> {
        self.per_set.iter().filter(move |s| s.class == class)
    }

    /// Sample-weighted mean wait over the sets of one class.
    pub fn mean_wait(&self, class: RackClass) -> f64 {
        weighted(self.sets_of(class), |s| s.mean_wait)
    }

    /// Mean wait over every measured packet.
    pub fn overall_mean_wait(&self) -> f64 {
        weighted(self.per_set.iter(), |s| s.mean_wait)
    }

    /// Sample-weighted [`SetStats::phase_adjusted_wait`] over one class, or
    /// over all sets.
    pub fn phase_adjusted_wait(&self, class: Option<RackClass>) -> f64 {
        weighted(
            self.per_set.iter().filter(|s| class.is_none_or(|c| s.class == c)),
            SetStats::phase_adjusted_wait,
        )
    }

    pub fn served(&self) -> u64 {
        self.per_set.iter().map(|s| s.served).sum()
    }

    /// Mean throughput of measured flows, optionally restricted to one class.
    pub fn mean_throughput(&self, class: Option<RackClass>) -> f64 {
        let v: Vec<f64> = self
            .per_flow
            .iter()
            .filter(|f| f.measured && class.is_none_or(|c| f.class == c))
            .map(|f| f.throughput)
            .collect();
        mean(&v)
    }

    pub fn cwnd_samples(&self, class: Option<RackClass>) -> Vec<f64> {
        self.per_set
            .iter()
            .filter(|s| class.is_none_or(|c| s.class == c))
            .flat_map(|s| s.cwnd_samples.iter().copied())
            .collect()
    }

    pub fn conservation_holds(&self) -> bool {
        self.per_set.iter().all(SetStats::conserved)
    }

    pub fn sets_csv(&self) -> String {
        let mut out = String::from(
            "set_id,class,racks,arrivals,served,drops_deadline,drops_overflow,queued_at_end,\
             mean_wait,p99_wait,wait_samples,mean_phase_wait,expected_phase_wait,\
             service_time_fraction,mean_cwnd\n",
        );
        for s in &self.per_set {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                s.set_id,
                s.class,
                s.racks,
                s.arrivals,
                s.served,
                s.drops_deadline,
                s.drops_overflow,
                s.queued_at_end,
                s.mean_wait,
                s.p99_wait,
                s.wait_samples,
                s.mean_phase_wait,
                s.expected_phase_wait,
                s.service_time_fraction,
                s.mean_cwnd(),
            );
        }
        out
    }

    pub fn flows_csv(&self) -> String {
        let mut out = String::from(
            "flow_id,rack,set_id,class,transport,start,size,delivered,completion_time,throughput,measured\n",
        );
        for f in &self.per_flow {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                f.flow_id,
                f.rack,
                f.set_id,
                f.class,
                f.transport.as_str(),
                f.start_time,
                f.size,
                f.delivered,
                opt(f.completion_time),
                f.throughput,
                f.measured,
            );
        }
        out
    }

    fn summary_body(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode: {}", self.mode);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "duration: {}", self.sim_duration);
        let _ = writeln!(out, "warmup: {}", self.warmup);
        let _ = writeln!(out, "served: {}", self.served());
        for class in [RackClass::NonHotspot, RackClass::Hotspot] {
            if self.sets_of(class).next().is_none() {
                continue;
            }
            let _ = writeln!(out, "mean-wait[{class}]: {}", self.mean_wait(class));
            if !self.per_flow.is_empty() {
                let _ = writeln!(out, "mean-throughput[{class}]: {}", self.mean_throughput(Some(class)));
            }
        }
        let _ = writeln!(out, "conservation: {}", if self.conservation_holds() { "ok" } else { "VIOLATED" });
        out
    }

    /// SHA-256 over both CSV tables and the summary body.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.sets_csv());
        h.update(self.flows_csv());
        h.update(self.summary_body());
        hex::encode(h.finalize())
    }

    pub fn summary(&self) -> String {
        format!("{}report-hash: sha256:{}\n", self.summary_body(), self.hash())
    }

    /// Writes `sets.csv`, `flows.csv` and `summary.txt` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sets.csv"), self.sets_csv())?;
        std::fs::write(dir.join("flows.csv"), self.flows_csv())?;
        std::fs::write(dir.join("summary.txt"), self.summary())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&xs, 0.99), 99.0);
        assert_eq!(percentile(&xs, 1.0), 100.0);
        assert_eq!(percentile(&[5.0], 0.99), 5.0);
        assert!(percentile(&[], 0.99).is_nan());
    }
}
