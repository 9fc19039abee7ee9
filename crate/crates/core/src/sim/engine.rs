use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};

use super::queues::{Packet, RackQueues};
use super::report::{mean, percentile, FlowStats, SetStats, SimReport};
use super::Mode;
use crate::model::{RackClass, ServiceDistribution, SourceType, ValidatedConfig};
use crate::traffic::{
    rng_stream, AckOutcome, AimdSender, CumulativeReceiver, FlowSpec, Transport, UdpSource,
};

const STREAM_ARRIVALS: u64 = 0;
const STREAM_SERVICE: u64 = 1;
const STREAM_FLOW_SIZE: u64 = 2;
const STREAMS_PER_RACK: u64 = 8;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Departure(u32),
    SlotBoundary(u64),
    MirrorOn { set: u32, slot: u64 },
    Drain(u32),
    Ack { flow: u32, ack: u32 },
    Timeout { flow: u32, generation: u32 },
    FlowStart(u32),
    UdpEmit(u32),
    Arrival(u32),
}

impl Kind {
    /// Tie-break order for simultaneous events.
    fn priority(self) -> u8 {
        match self {
            Kind::Departure(_) => 0,
            Kind::SlotBoundary(_) => 1,
            Kind::MirrorOn { .. } => 2,
            Kind::Drain(_) => 3,
            Kind::Ack { .. } => 4,
            Kind::Timeout { .. } => 5,
            Kind::FlowStart(_) => 6,
            Kind::UdpEmit(_) | Kind::Arrival(_) => 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    priority: u8,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.priority.cmp(&self.priority))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Unit-mean service requirement sampler.
#[derive(Debug, Clone)]
enum UnitService {
    Exponential,
    Deterministic,
    Gamma(Gamma<f64>),
}

impl UnitService {
    fn new(mean: f64, dist: ServiceDistribution) -> Self {
        match dist {
            ServiceDistribution::Exponential => UnitService::Exponential,
            ServiceDistribution::Deterministic => UnitService::Deterministic,
            ServiceDistribution::GeneralMoments { m2, .. } => {
                let cv2 = m2 / (mean * mean) - 1.0;
                if cv2.is_finite() && cv2 > 1e-12 {
                    let shape = 1.0 / cv2;
                    match Gamma::new(shape, cv2) {
                        Ok(g) => UnitService::Gamma(g),
                        Err(_) => UnitService::Deterministic,
                    }
                } else {
                    UnitService::Deterministic
                }
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            UnitService::Exponential => Exp1.sample(rng),
            UnitService::Deterministic => 1.0,
            UnitService::Gamma(g) => g.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    time: f64,
    unit_service: f64,
}

#[derive(Debug, Default, Clone)]
struct RackStats {
    arrivals: u64,
    served: u64,
    drops_deadline: u64,
    drops_overflow: u64,
    waits: Vec<f64>,
    /// Phase waits of the packets in `waits`.
    phase_sum: f64,
}

/// Connected intervals of every set within one schedule cycle, used to
/// compute the part of a wait spent before the set's next connection.
struct PhaseTable {
    cycle: f64,
    /// Sorted, disjoint `[start, end)` per set, within `[0, cycle)`.
    intervals: Vec<Vec<(f64, f64)>>,
}

impl PhaseTable {
    fn new(slots: &[usize], d: f64, delay: f64, k: usize) -> Self {
        let len = slots.len();
        let cycle = len as f64 * d;
        let mut intervals = vec![Vec::new(); k];
        for i in 0..len {
            let set = slots[i];
            if len > 1 && slots[(i + len - 1) % len] == set && slots.iter().any(|&x| x != set) {
                continue;
            }
            let mut run = 1;
            while run < len && slots[(i + run) % len] == set {
                run += 1;
            }
            let (start, end) = if run == len {
                (0.0, cycle)
            } else {
                (i as f64 * d + delay, (i + run) as f64 * d)
            };
            let list: &mut Vec<(f64, f64)> = &mut intervals[set];
            if end > cycle {
                list.push((start, cycle));
                list.push((0.0, end - cycle));
            } else if start < end {
                list.push((start, end));
            }
        }
        for list in &mut intervals {
            list.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        Self { cycle, intervals }
    }

    /// Time from `t` until `set` is next connected; zero while connected.
    fn phase(&self, set: usize, t: f64) -> f64 {
        let list = &self.intervals[set];
        let Some(&(first, _)) = list.first() else {
            return 0.0;
        };
        let u = t.rem_euclid(self.cycle);
        match list.iter().find(|&&(_, end)| end > u) {
            Some(&(start, _)) if start <= u => 0.0,
            Some(&(start, _)) => start - u,
            None => first + self.cycle - u,
        }
    }

    /// Mean phase seen from a uniformly random instant.
    fn expected(&self, set: usize) -> f64 {
        let list = &self.intervals[set];
        if list.is_empty() {
            return 0.0;
        }
        let mut area = 0.0;
        let mut covered_to = list.last().map_or(0.0, |&(_, e)| e - self.cycle);
        for &(start, end) in list {
            let gap = (start - covered_to).max(0.0);
            area += 0.5 * gap * gap;
            covered_to = covered_to.max(end);
        }
        area / self.cycle
    }
}

struct Rack {
    set: usize,
    class: RackClass,
    lambda: f64,
    queues: RackQueues,
    in_service: Option<Packet>,
    transparent: bool,
    draining: bool,
    arrival_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    flow_rng: ChaCha8Rng,
    /// Candidate-arrival clock of the packet source.
    clock: f64,
    pending: Option<Pending>,
    stats: RackStats,
}

enum FlowKind {
    Udp(UdpSource),
    Tcp {
        sender: AimdSender,
        receiver: CumulativeReceiver,
        generation: u32,
        armed: bool,
    },
}

struct Flow {
    spec: FlowSpec,
    set: usize,
    class: RackClass,
    kind: FlowKind,
    /// Packet size used for segmentation.
    seg: u32,
    delivered: u64,
    delivered_pkts: u64,
    first_delivery: Option<f64>,
    last_delivery: Option<f64>,
    completion: Option<f64>,
}

struct Engine<'a> {
    cfg: &'a ValidatedConfig,
    mode: Mode,
    seed: u64,
    duration: f64,
    warmup: f64,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    racks: Vec<Rack>,
    set_racks: Vec<Vec<usize>>,
    connected_since: Vec<Option<f64>>,
    connected_time: Vec<f64>,
    /// `(set, slot index, slot end)` of the slot in progress.
    slot: Option<(usize, u64, f64)>,
    unit: UnitService,
    flows: Vec<Flow>,
    next_packet_id: u64,
    cwnd_samples: Vec<Vec<f64>>,
    /// `None` in benchmark mode, where links never leave.
    phases: Option<PhaseTable>,
}

/// Runs one replication over `[0, duration]`.
///
/// The result depends only on `(config, mode, seed, duration)`. Each rack
/// draws its arrivals, service requirements and flow sizes from its own
/// random stream, so runs that differ only in mode or schedule see the same
/// offered traffic.
pub fn run_simulation(config: &ValidatedConfig, mode: Mode, seed: u64, duration: f64) -> SimReport {
    let duration = if duration.is_finite() && duration > 0.0 {
        duration
    } else {
        0.0
    };
    let mut engine = Engine::new(config, mode, seed, duration);
    engine.run();
    engine.report()
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ValidatedConfig, mode: Mode, seed: u64, duration: f64) -> Self {
        let cluster = cfg.cluster();
        let partition = cfg.partition();
        let traffic = cfg.traffic();
        let map = partition.rack_to_set(cluster.n_data_racks);
        let racks = map
            .iter()
            .enumerate()
            .map(|(r, set)| {
                let set = set.expect("validated partition covers every rack");
                let class = partition.sets[set].class;
                let base = r as u64 * STREAMS_PER_RACK;
                Rack {
                    set,
                    class,
                    lambda: traffic.rate_for(class),
                    queues: RackQueues::new(mode, cluster.primary_buffer, cluster.backup_buffer),
                    in_service: None,
                    transparent: mode == Mode::Benchmark,
                    draining: false,
                    arrival_rng: rng_stream(seed, base + STREAM_ARRIVALS),
                    service_rng: rng_stream(seed, base + STREAM_SERVICE),
                    flow_rng: rng_stream(seed, base + STREAM_FLOW_SIZE),
                    clock: 0.0,
                    pending: None,
                    stats: RackStats::default(),
                }
            })
            .collect();
        let k = partition.k_total;
        let set_racks = partition.sets.iter().map(|s| s.rack_ids.clone()).collect();
        let service = cfg.service();
        Self {
            cfg,
            mode,
            seed,
            duration,
            warmup: duration * cfg.options().warmup_fraction,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            racks,
            set_racks,
            connected_since: vec![None; k],
            connected_time: vec![0.0; k],
            slot: None,
            unit: UnitService::new(service.mean_service, service.distribution),
            flows: Vec::new(),
            next_packet_id: 0,
            cwnd_samples: vec![Vec::new(); k],
            phases: (mode != Mode::Benchmark).then(|| {
                let sched = cfg.schedule();
                PhaseTable::new(&sched.slots, sched.slot_length, cluster.switchover_delay, k)
            }),
        }
    }

    fn push(&mut self, time: f64, kind: Kind) {
        if time > self.duration {
            return;
        }
        self.seq += 1;
        self.heap.push(Event {
            time,
            priority: kind.priority(),
            seq: self.seq,
            kind,
        });
    }

    fn run(&mut self) {
        if self.duration <= 0.0 {
            return;
        }
        if self.mode == Mode::Benchmark {
            for set in 0..self.set_racks.len() {
                self.connected_since[set] = Some(0.0);
            }
        } else {
            self.push(0.0, Kind::SlotBoundary(0));
        }
        let flows = self.cfg.traffic().source_type.is_flow();
        for r in 0..self.racks.len() {
            if flows {
                self.schedule_flow_start(r);
            } else {
                self.schedule_packet_arrival(r);
            }
        }
        while let Some(ev) = self.heap.pop() {
            self.now = ev.time;
            match ev.kind {
                Kind::Departure(r) => self.on_departure(r as usize),
                Kind::SlotBoundary(k) => self.on_slot_boundary(k),
                Kind::MirrorOn { set, slot } => {
                    if matches!(self.slot, Some((s, k, _)) if s == set as usize && k == slot) {
                        self.set_mirror(set as usize, true);
                    }
                }
                Kind::Drain(r) => self.on_drain(r as usize),
                Kind::Ack { flow, ack } => self.on_ack(flow as usize, ack),
                Kind::Timeout { flow, generation } => self.on_timeout(flow as usize, generation),
                Kind::FlowStart(r) => self.on_flow_start(r as usize),
                Kind::UdpEmit(f) => self.on_udp_emit(f as usize),
                Kind::Arrival(r) => self.on_packet_arrival(r as usize),
            }
        }
        self.now = self.duration;
        for set in 0..self.connected_since.len() {
            if let Some(since) = self.connected_since[set].take() {
                self.connected_time[set] += self.window_overlap(since, self.duration);
            }
        }
    }

    fn window_overlap(&self, a: f64, b: f64) -> f64 {
        (b.min(self.duration) - a.max(self.warmup)).max(0.0)
    }

    // Slot rotation.

    fn on_slot_boundary(&mut self, k: u64) {
        let schedule = self.cfg.schedule();
        let d = schedule.slot_length;
        let set = schedule.slots[(k % schedule.slots.len() as u64) as usize];
        let prev = self.slot.map(|(s, _, _)| s);
        self.slot = Some((set, k, (k + 1) as f64 * d));
        if prev == Some(set) {
            for r in self.set_racks[set].clone() {
                self.try_start(r);
            }
        } else {
            if let Some(p) = prev {
                self.set_mirror(p, false);
            }
            let delay = self.cfg.cluster().switchover_delay;
            if delay > 0.0 {
                self.push(self.now + delay, Kind::MirrorOn { set: set as u32, slot: k });
            } else {
                self.set_mirror(set, true);
            }
        }
        let next = (k + 1) as f64 * d;
        if next < self.duration {
            self.push(next, Kind::SlotBoundary(k + 1));
        }
    }

    fn set_mirror(&mut self, set: usize, transparent: bool) {
        if transparent {
            self.connected_since[set].get_or_insert(self.now);
        } else if let Some(since) = self.connected_since[set].take() {
            self.connected_time[set] += self.window_overlap(since, self.now);
        }
        for r in self.set_racks[set].clone() {
            self.racks[r].transparent = transparent;
            if transparent {
                self.try_start(r);
            }
        }
    }

    // Service.

    fn try_start(&mut self, r: usize) {
        let qos = self.cfg.traffic().qos_deadline;
        let gated = !self.cfg.options().non_preemptive;
        loop {
            let rack = &self.racks[r];
            if rack.in_service.is_some() || !rack.transparent {
                return;
            }
            let Some(head) = rack.queues.peek_oldest() else {
                return;
            };
            if self.mode != Mode::Benchmark {
                let slot_end = self.slot.map_or(f64::INFINITY, |(_, _, end)| end);
                let fits = if gated {
                    self.now + head.service <= slot_end
                } else {
                    self.now < slot_end
                };
                if !fits {
                    return;
                }
            }
            let p = self.racks[r].queues.pop_oldest().expect("head exists");
            self.kick_drain(r);
            if self.now - p.arrival_time > qos {
                self.racks[r].stats.drops_deadline += 1;
                continue;
            }
            let rack = &mut self.racks[r];
            if p.arrival_time >= self.warmup {
                rack.stats.waits.push(self.now - p.arrival_time);
                rack.stats.phase_sum += p.phase;
            }
            let done = self.now + p.service;
            rack.in_service = Some(p);
            self.push(done, Kind::Departure(r as u32));
            return;
        }
    }

    fn on_departure(&mut self, r: usize) {
        let rack = &mut self.racks[r];
        let p = rack.in_service.take().expect("departure of a busy link");
        rack.stats.served += 1;
        if let Some((flow, seq)) = p.flow {
            self.deliver(flow as usize, seq, p.size);
        }
        self.try_start(r);
    }

    // Loopback draining.

    fn kick_drain(&mut self, r: usize) {
        let rate = self.cfg.cluster().backup_drain_rate;
        let rack = &self.racks[r];
        if rack.draining || rate <= 0.0 {
            return;
        }
        if let Some(head) = rack.queues.backup_head() {
            let t = self.now + f64::from(head.size) * 8.0 / rate;
            self.racks[r].draining = true;
            self.push(t, Kind::Drain(r as u32));
        }
    }

    fn on_drain(&mut self, r: usize) {
        self.racks[r].draining = false;
        self.racks[r].queues.drain_one();
        self.kick_drain(r);
    }

    // Packet admission.

    fn admit(&mut self, r: usize, size: u32, unit_service: f64, flow: Option<(u32, u32)>, udp: bool) {
        let traffic = self.cfg.traffic();
        let service = self.cfg.service().mean_service * unit_service * f64::from(size)
            / f64::from(traffic.packet_bytes);
        let phase = self
            .phases
            .as_ref()
            .map_or(0.0, |t| t.phase(self.racks[r].set, self.now));
        let p = Packet {
            id: self.next_packet_id,
            source_rack: r as u32,
            arrival_time: self.now,
            size,
            deadline: self.now + traffic.qos_deadline,
            service,
            phase,
            flow,
            udp,
        };
        self.next_packet_id += 1;
        let filter = traffic.loopback_filter_udp;
        let rack = &mut self.racks[r];
        rack.stats.arrivals += 1;
        let reflective = !rack.transparent;
        if rack.queues.enqueue(p, reflective, filter).is_err() {
            rack.stats.drops_overflow += 1;
            return;
        }
        self.kick_drain(r);
        self.try_start(r);
    }

    // Packet sources.

    fn schedule_packet_arrival(&mut self, r: usize) {
        let traffic = self.cfg.traffic();
        let rack = &mut self.racks[r];
        let lambda = rack.lambda;
        if lambda <= 0.0 {
            return;
        }
        let pending = match traffic.coupling_rate {
            None => {
                let e: f64 = Exp1.sample(&mut rack.arrival_rng);
                rack.clock += e / lambda;
                Pending {
                    time: rack.clock,
                    unit_service: self.unit.sample(&mut rack.service_rng),
                }
            }
            Some(c) => loop {
                // Thinning keeps the candidate stream identical for any rate <= c.
                let e: f64 = Exp1.sample(&mut rack.arrival_rng);
                let u: f64 = rack.arrival_rng.random();
                let s = self.unit.sample(&mut rack.arrival_rng);
                rack.clock += e / c;
                if u * c < lambda || rack.clock > self.duration {
                    break Pending {
                        time: rack.clock,
                        unit_service: s,
                    };
                }
            },
        };
        rack.pending = Some(pending);
        self.push(pending.time, Kind::Arrival(r as u32));
    }

    fn on_packet_arrival(&mut self, r: usize) {
        let pending = self.racks[r].pending.take().expect("pending arrival");
        let size = self.cfg.traffic().packet_bytes;
        self.admit(r, size, pending.unit_service, None, false);
        self.schedule_packet_arrival(r);
    }

    // Flow sources.

    fn schedule_flow_start(&mut self, r: usize) {
        let rack = &mut self.racks[r];
        if rack.lambda <= 0.0 {
            return;
        }
        let e: f64 = Exp1.sample(&mut rack.arrival_rng);
        rack.clock += e / rack.lambda;
        let t = rack.clock;
        self.push(t, Kind::FlowStart(r as u32));
    }

    fn on_flow_start(&mut self, r: usize) {
        let traffic = self.cfg.traffic();
        let source = traffic.source_type;
        let (transport, seg) = match source {
            SourceType::TcpAimd(a) => (Transport::TcpLike, a.mss),
            SourceType::UdpConstantRate { .. } => (Transport::UdpLike, traffic.packet_bytes),
            SourceType::PoissonPacket => (Transport::RawPacket, traffic.packet_bytes),
        };
        let rack = &mut self.racks[r];
        let size = traffic.flow_size_law.sample(&mut rack.flow_rng, seg);
        let spec = FlowSpec {
            flow_id: self.flows.len() as u64,
            source_rack: r,
            start_time: self.now,
            size,
            transport,
        };
        let packets = spec.packet_count(seg);
        let kind = match source {
            SourceType::TcpAimd(a) => FlowKind::Tcp {
                sender: AimdSender::new(a, packets),
                receiver: CumulativeReceiver::default(),
                generation: 0,
                armed: false,
            },
            SourceType::UdpConstantRate { rate_bps } => {
                FlowKind::Udp(UdpSource::new(spec.clone(), rate_bps, seg))
            }
            SourceType::PoissonPacket => unreachable!("packet sources have no flows"),
        };
        let f = self.flows.len();
        self.flows.push(Flow {
            spec,
            set: rack.set,
            class: rack.class,
            kind,
            seg,
            delivered: 0,
            delivered_pkts: 0,
            first_delivery: None,
            last_delivery: None,
            completion: None,
        });
        match transport {
            Transport::TcpLike => self.tcp_send_window(f),
            _ => self.on_udp_emit(f),
        }
        self.schedule_flow_start(r);
    }

    fn on_udp_emit(&mut self, f: usize) {
        let flow = &mut self.flows[f];
        let FlowKind::Udp(src) = &mut flow.kind else {
            return;
        };
        let Some(em) = src.next() else {
            return;
        };
        let r = flow.spec.source_rack;
        // Emission times are precomputed; the next one is known now.
        let next = src.clone().next().map(|e| e.time);
        let unit = self.unit.sample(&mut self.racks[r].service_rng);
        self.admit(r, em.size, unit, Some((f as u32, em.seq)), true);
        if let Some(t) = next {
            self.push(t, Kind::UdpEmit(f as u32));
        }
    }

    fn send_segment(&mut self, f: usize, seq: u32) {
        let flow = &self.flows[f];
        let r = flow.spec.source_rack;
        let size = flow.spec.packet_size(seq, flow.seg);
        let unit = self.unit.sample(&mut self.racks[r].service_rng);
        self.admit(r, size, unit, Some((f as u32, seq)), false);
    }

    fn tcp_send_window(&mut self, f: usize) {
        loop {
            let FlowKind::Tcp { sender, .. } = &mut self.flows[f].kind else {
                return;
            };
            let Some(seq) = sender.next_to_send() else {
                break;
            };
            self.send_segment(f, seq);
        }
        self.ensure_timer(f);
    }

    fn ensure_timer(&mut self, f: usize) {
        let FlowKind::Tcp {
            sender,
            generation,
            armed,
            ..
        } = &mut self.flows[f].kind
        else {
            return;
        };
        if !*armed && sender.in_flight() > 0 {
            *armed = true;
            let t = self.now + sender.rto();
            let g = *generation;
            self.push(t, Kind::Timeout { flow: f as u32, generation: g });
        }
    }

    fn restart_timer(&mut self, f: usize) {
        if let FlowKind::Tcp {
            generation, armed, ..
        } = &mut self.flows[f].kind
        {
            *generation = generation.wrapping_add(1);
            *armed = false;
        }
        self.ensure_timer(f);
    }

    fn deliver(&mut self, f: usize, seq: u32, size: u32) {
        let now = self.now;
        let flow = &mut self.flows[f];
        let fresh = match &mut flow.kind {
            FlowKind::Udp(src) => {
                let complete = flow.delivered_pkts + 1 == u64::from(src.total_packets());
                if complete {
                    flow.completion = Some(now);
                }
                true
            }
            FlowKind::Tcp { receiver, sender, .. } => {
                let (ack, fresh) = receiver.deliver(seq);
                if ack >= sender.total() && flow.completion.is_none() {
                    flow.completion = Some(now);
                }
                let rtt = match self.cfg.traffic().source_type {
                    SourceType::TcpAimd(a) => a.rtt,
                    _ => 0.0,
                };
                self.push(now + rtt, Kind::Ack { flow: f as u32, ack });
                fresh
            }
        };
        let flow = &mut self.flows[f];
        if fresh {
            flow.delivered += u64::from(size);
            flow.delivered_pkts += 1;
            flow.first_delivery.get_or_insert(now);
            flow.last_delivery = Some(now);
        }
    }

    fn on_ack(&mut self, f: usize, ack: u32) {
        let now = self.now;
        let warm = now >= self.warmup;
        let flow = &mut self.flows[f];
        let set = flow.set;
        let FlowKind::Tcp { sender, .. } = &mut flow.kind else {
            return;
        };
        let outcome = sender.on_ack(ack);
        let cwnd = sender.cwnd();
        let complete = sender.is_complete();
        if warm && !complete {
            self.cwnd_samples[set].push(cwnd);
        }
        match outcome {
            AckOutcome::FastRetransmit(seq) | AckOutcome::PartialRetransmit(seq) => {
                self.send_segment(f, seq);
                self.restart_timer(f);
            }
            AckOutcome::NewData => self.restart_timer(f),
            AckOutcome::Duplicate | AckOutcome::Stale => {}
        }
        self.tcp_send_window(f);
    }

    fn on_timeout(&mut self, f: usize, g: u32) {
        let FlowKind::Tcp {
            sender,
            generation,
            armed,
            ..
        } = &mut self.flows[f].kind
        else {
            return;
        };
        if *generation != g || !*armed {
            return;
        }
        *armed = false;
        *generation = generation.wrapping_add(1);
        if let Some(seq) = sender.on_timeout() {
            self.send_segment(f, seq);
        }
        self.tcp_send_window(f);
    }

    // Report.

    fn report(mut self) -> SimReport {
        let partition = self.cfg.partition();
        let k = partition.k_total;
        let window = (self.duration - self.warmup).max(0.0);
        let bundle_share = |connected: f64| -> f64 {
            if window <= 0.0 {
                0.0
            } else if self.mode == Mode::Benchmark {
                connected / window / k as f64
            } else {
                connected / window
            }
        };
        let mut per_set = Vec::with_capacity(k);
        for (set, racks) in self.set_racks.iter().enumerate() {
            let mut s = SetStats {
                set_id: set,
                class: partition.sets[set].class,
                racks: racks.len(),
                arrivals: 0,
                served: 0,
                drops_deadline: 0,
                drops_overflow: 0,
                queued_at_end: 0,
                mean_wait: f64::NAN,
                p99_wait: f64::NAN,
                wait_samples: 0,
                mean_phase_wait: f64::NAN,
                expected_phase_wait: self.phases.as_ref().map_or(0.0, |t| t.expected(set)),
                service_time_fraction: bundle_share(self.connected_time[set]),
                cwnd_samples: std::mem::take(&mut self.cwnd_samples[set]),
            };
            let mut waits = Vec::new();
            let mut phase_sum = 0.0;
            for &r in racks {
                phase_sum += self.racks[r].stats.phase_sum;
                let rack = &self.racks[r];
                s.arrivals += rack.stats.arrivals;
                s.served += rack.stats.served;
                s.drops_deadline += rack.stats.drops_deadline;
                s.drops_overflow += rack.stats.drops_overflow;
                s.queued_at_end += rack.queues.len() as u64 + u64::from(rack.in_service.is_some());
                waits.extend_from_slice(&rack.stats.waits);
            }
            s.wait_samples = waits.len() as u64;
            s.mean_wait = mean(&waits);
            if !waits.is_empty() {
                s.mean_phase_wait = phase_sum / waits.len() as f64;
            }
            s.p99_wait = percentile(&waits, 0.99);
            per_set.push(s);
        }

        let end = self.duration;
        let per_flow = self
            .flows
            .iter()
            .map(|f| {
                let start = f.spec.start_time;
                let throughput = match f.spec.transport {
                    Transport::TcpLike => {
                        let until = f.completion.unwrap_or(end);
                        rate(f.delivered, until - start)
                    }
                    // Receiver-side rate between the first and last packet,
                    // at least one packet's emission time.
                    _ => match (f.first_delivery, f.last_delivery) {
                        (Some(a), Some(b)) => {
                            let one = match self.cfg.traffic().source_type {
                                SourceType::UdpConstantRate { rate_bps } => f64::from(f.seg) * 8.0 / rate_bps,
                                _ => 0.0,
                            };
                            rate(f.delivered, (b - a).max(one))
                        }
                        _ => 0.0,
                    },
                };
                FlowStats {
                    flow_id: f.spec.flow_id,
                    rack: f.spec.source_rack,
                    set_id: f.set,
                    class: f.class,
                    transport: f.spec.transport,
                    start_time: start,
                    size: f.spec.size,
                    delivered: f.delivered,
                    completion_time: f.completion,
                    throughput,
                    measured: start >= self.warmup,
                }
            })
            .collect();

        SimReport {
            mode: self.mode,
            seed: self.seed,
            sim_duration: self.duration,
            warmup: self.warmup,
            per_set,
            per_flow,
        }
    }
}

fn rate(bytes: u64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        bytes as f64 * 8.0 / seconds
    } else {
        0.0
    }
}
