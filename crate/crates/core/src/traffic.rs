//! Arrival processes and transport-level sources.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::model::{AimdParams, FlowSizeLaw};

/// Independent deterministic RNG stream for `(seed, stream)`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poisson arrival instants on `[0, duration)`.
pub fn poisson_stream(rate: f64, duration: f64, seed: u64) -> Vec<f64> {
    PoissonArrivals::new(rate, rng_stream(seed, 0))
        .take_while(|&t| t < duration)
        .collect()
}

/// Unbounded Poisson arrival instants starting at time zero.
#[derive(Debug, Clone)]
pub struct PoissonArrivals<R> {
    rate: f64,
    now: f64,
    rng: R,
}

impl<R: Rng> PoissonArrivals<R> {
    pub fn new(rate: f64, rng: R) -> Self {
        Self { rate, now: 0.0, rng }
    }
}

impl<R: Rng> Iterator for PoissonArrivals<R> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.rate.is_nan() || self.rate <= 0.0 {
            return None;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        self.now += e / self.rate;
        Some(self.now)
    }
}

impl FlowSizeLaw {
    /// Flow size in bytes. `mss` sizes the packets of the fixed law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mss: u32) -> u64 {
        match *self {
            FlowSizeLaw::UniformBytes { min, max } => rng.random_range(min..=max),
            FlowSizeLaw::FixedPackets(n) => n * u64::from(mss),
        }
    }

    pub fn mean(&self, mss: u32) -> f64 {
        match *self {
            FlowSizeLaw::UniformBytes { min, max } => 0.5 * (min as f64 + max as f64),
            FlowSizeLaw::FixedPackets(n) => (n * u64::from(mss)) as f64,
        }
    }
}

pub fn sample_flow_size<R: Rng + ?Sized>(law: &FlowSizeLaw, rng: &mut R, mss: u32) -> u64 {
    law.sample(rng, mss)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transport {
    TcpLike,
    UdpLike,
    RawPacket,
}

impl Transport {
    pub fn as_str(self) -> &'static str {
        match self {
            Transport::TcpLike => "tcp",
            Transport::UdpLike => "udp",
            Transport::RawPacket => "raw",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub flow_id: u64,
    pub source_rack: usize,
    pub start_time: f64,
    /// Bytes.
    pub size: u64,
    pub transport: Transport,
}

impl FlowSpec {
    /// Number of packets when cut into `mss`-byte segments.
    pub fn packet_count(&self, mss: u32) -> u32 {
        self.size.div_ceil(u64::from(mss)) as u32
    }

    /// Size of packet `seq`; the last one carries the remainder.
    pub fn packet_size(&self, seq: u32, mss: u32) -> u32 {
        let offset = u64::from(seq) * u64::from(mss);
        (self.size - offset).min(u64::from(mss)) as u32
    }
}

/// CSV of flow specs: `flow_id,rack,start,size,transport`.
pub fn flow_trace_csv<'a>(flows: impl IntoIterator<Item = &'a FlowSpec>) -> String {
    let mut out = String::from("flow_id,rack,start,size,transport\n");
    for f in flows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            f.flow_id,
            f.source_rack,
            f.start_time,
            f.size,
            f.transport.as_str()
        );
    }
    out
}

/// Constant-rate packetization of one flow, independent of the network.
#[derive(Debug, Clone)]
pub struct UdpSource {
    flow: FlowSpec,
    rate_bps: f64,
    mss: u32,
    next_seq: u32,
    total: u32,
}

/// One emitted packet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    pub time: f64,
    pub seq: u32,
    pub size: u32,
}

impl UdpSource {
    pub fn new(flow: FlowSpec, rate_bps: f64, mss: u32) -> Self {
        let total = flow.packet_count(mss);
        Self {
            flow,
            rate_bps,
            mss,
            next_seq: 0,
            total,
        }
    }

    pub fn flow(&self) -> &FlowSpec {
        &self.flow
    }

    pub fn total_packets(&self) -> u32 {
        self.total
    }

    /// Emission time of packet `seq`: the instant its first bit leaves.
    pub fn emit_time(&self, seq: u32) -> f64 {
        let bytes_before = u64::from(seq) * u64::from(self.mss);
        self.flow.start_time + (bytes_before * 8) as f64 / self.rate_bps
    }

    /// Instant the last bit of the flow leaves the source.
    pub fn end_time(&self) -> f64 {
        self.flow.start_time + (self.flow.size * 8) as f64 / self.rate_bps
    }
}

impl Iterator for UdpSource {
    type Item = Emission;

    fn next(&mut self) -> Option<Emission> {
        if self.next_seq >= self.total {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(Emission {
            time: self.emit_time(seq),
            seq,
            size: self.flow.packet_size(seq, self.mss),
        })
    }
}

/// What an ACK did to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    /// Cumulative ACK advanced.
    NewData,
    /// Third duplicate ACK: resend this sequence number.
    FastRetransmit(u32),
    /// Partial ACK during recovery: resend this sequence number.
    PartialRetransmit(u32),
    Duplicate,
    Stale,
}

/// Window-based AIMD sender with cumulative ACKs.
///
/// Slow start adds one packet per ACK below `ssthresh` (doubling per RTT);
/// congestion avoidance adds `1 / cwnd` per ACK. Three duplicate ACKs cut
/// the window by `loss_response` and set `ssthresh` to the new window. A
/// timeout resets the window to its initial size and goes back to the first
/// unacknowledged packet. The timer is `2 * rtt` (or `min_rto` if larger),
/// doubled per consecutive timeout and reset by new data.
#[derive(Debug, Clone)]
pub struct AimdSender {
    params: AimdParams,
    cwnd: f64,
    ssthresh: f64,
    snd_una: u32,
    snd_nxt: u32,
    total: u32,
    dupacks: u32,
    recover: Option<u32>,
    backoff: u32,
}

const MAX_BACKOFF: u32 = 6;

impl AimdSender {
    pub fn new(params: AimdParams, total_packets: u32) -> Self {
        Self {
            cwnd: params.initial_window,
            ssthresh: params.ssthresh,
            params,
            snd_una: 0,
            snd_nxt: 0,
            total: total_packets,
            dupacks: 0,
            recover: None,
            backoff: 0,
        }
    }

    pub fn cwnd(&self) -> f64 {
        self.cwnd
    }

    pub fn ssthresh(&self) -> f64 {
        self.ssthresh
    }

    /// Whole packets the window currently allows.
    pub fn window(&self) -> u32 {
        self.cwnd.floor().max(1.0) as u32
    }

    pub fn in_flight(&self) -> u32 {
        self.snd_nxt - self.snd_una
    }

    pub fn acked(&self) -> u32 {
        self.snd_una
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn is_complete(&self) -> bool {
        self.snd_una >= self.total
    }

    pub fn rto(&self) -> f64 {
        (2.0 * self.params.rtt).max(self.params.min_rto) * f64::from(1u32 << self.backoff)
    }

    /// Next new sequence number if the window has room.
    pub fn next_to_send(&mut self) -> Option<u32> {
        if self.snd_nxt < self.total && self.in_flight() < self.window() {
            let seq = self.snd_nxt;
            self.snd_nxt += 1;
            Some(seq)
        } else {
            None
        }
    }

    pub fn on_ack(&mut self, ack: u32) -> AckOutcome {
        let ack = ack.min(self.total);
        if ack > self.snd_una {
            let newly = ack - self.snd_una;
            self.snd_una = ack;
            self.snd_nxt = self.snd_nxt.max(ack);
            self.dupacks = 0;
            self.backoff = 0;
            if let Some(rec) = self.recover {
                if ack < rec {
                    return AckOutcome::PartialRetransmit(ack);
                }
                self.recover = None;
                return AckOutcome::NewData;
            }
            for _ in 0..newly {
                if self.cwnd < self.ssthresh {
                    self.cwnd += 1.0;
                } else {
                    self.cwnd += 1.0 / self.cwnd;
                }
            }
            self.cwnd = self.cwnd.min(self.params.max_window);
            return AckOutcome::NewData;
        }
        if ack < self.snd_una || self.in_flight() == 0 {
            return AckOutcome::Stale;
        }
        self.dupacks += 1;
        if self.dupacks == 3 && self.recover.is_none() {
            self.on_loss();
            self.recover = Some(self.snd_nxt);
            return AckOutcome::FastRetransmit(self.snd_una);
        }
        AckOutcome::Duplicate
    }

    /// Multiplicative decrease.
    pub fn on_loss(&mut self) {
        self.cwnd = (self.cwnd * self.params.loss_response).max(1.0);
        self.ssthresh = self.cwnd.max(2.0);
    }

    /// Retransmission timeout. Returns the sequence number to resend.
    pub fn on_timeout(&mut self) -> Option<u32> {
        if self.is_complete() || self.in_flight() == 0 {
            return None;
        }
        self.ssthresh = (self.cwnd * self.params.loss_response).max(2.0);
        self.cwnd = self.params.initial_window;
        self.snd_nxt = self.snd_una;
        self.dupacks = 0;
        self.recover = None;
        self.backoff = (self.backoff + 1).min(MAX_BACKOFF);
        self.next_to_send()
    }
}

/// Receiver side of a TCP-like flow: cumulative ACK over an out-of-order set.
#[derive(Debug, Clone, Default)]
pub struct CumulativeReceiver {
    rcv_nxt: u32,
    out_of_order: std::collections::BTreeSet<u32>,
}

impl CumulativeReceiver {
    /// Records delivery of `seq`; returns `(ack, newly_received)`.
    pub fn deliver(&mut self, seq: u32) -> (u32, bool) {
        let fresh = if seq == self.rcv_nxt {
            self.rcv_nxt += 1;
            while self.out_of_order.remove(&self.rcv_nxt) {
                self.rcv_nxt += 1;
            }
            true
        } else if seq > self.rcv_nxt {
            self.out_of_order.insert(seq)
        } else {
            false
        };
        (self.rcv_nxt, fresh)
    }

    pub fn next_expected(&self) -> u32 {
        self.rcv_nxt
    }
}
