use std::collections::VecDeque;

use super::Mode;

/// A control packet travelling from a data rack to the management racks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub source_rack: u32,
    pub arrival_time: f64,
    /// Bytes.
    pub size: u32,
    /// `arrival_time + T_QoS`.
    pub deadline: f64,
    /// Transmission time once on the link.
    pub service: f64,
    /// Time from arrival until the rack's set was next connected.
    pub phase: f64,
    /// `(flow index, sequence number)` for flow traffic.
    pub flow: Option<(u32, u32)>,
    pub udp: bool,
}

/// Which buffer accepted a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Buffer {
    Primary,
    Backup,
}

/// Primary and loopback buffers of one rack.
///
/// Both queues stay sorted by arrival time: arrivals are appended in time
/// order and drained backup packets are inserted at their arrival position.
/// Service always takes the older of the two heads, so the rack as a whole is
/// FIFO by arrival time.
#[derive(Debug, Clone)]
pub struct RackQueues {
    pub mode: Mode,
    primary: VecDeque<Packet>,
    backup: VecDeque<Packet>,
    primary_cap: usize,
    backup_cap: usize,
}

impl RackQueues {
    pub fn new(mode: Mode, primary_cap: usize, backup_cap: usize) -> Self {
        Self {
            mode,
            primary: VecDeque::new(),
            backup: VecDeque::new(),
            primary_cap,
            backup_cap,
        }
    }

    /// Routes an arriving packet. `reflective` is the rack's mirror state.
    /// Returns the packet back when the chosen buffer is full.
    pub fn enqueue(&mut self, p: Packet, reflective: bool, filter_udp: bool) -> Result<Buffer, Packet> {
        let loopback = self.mode == Mode::F4Tele && reflective && !(p.udp && filter_udp);
        if loopback {
            if self.backup.len() >= self.backup_cap {
                return Err(p);
            }
            self.backup.push_back(p);
            Ok(Buffer::Backup)
        } else {
            if self.primary.len() >= self.primary_cap {
                return Err(p);
            }
            self.primary.push_back(p);
            Ok(Buffer::Primary)
        }
    }

    pub fn peek_oldest(&self) -> Option<&Packet> {
        match (self.primary.front(), self.backup.front()) {
            (Some(a), Some(b)) => Some(if b.arrival_time < a.arrival_time { b } else { a }),
            (a, b) => a.or(b),
        }
    }

    pub fn pop_oldest(&mut self) -> Option<Packet> {
        let from_backup = match (self.primary.front(), self.backup.front()) {
            (Some(a), Some(b)) => b.arrival_time < a.arrival_time,
            (None, Some(_)) => true,
            _ => false,
        };
        if from_backup {
            self.backup.pop_front()
        } else {
            self.primary.pop_front()
        }
    }

    pub fn backup_head(&self) -> Option<&Packet> {
        self.backup.front()
    }

    /// Moves the backup head into the primary buffer at its arrival
    /// position. Returns false if there is nothing to move or no room.
    pub fn drain_one(&mut self) -> bool {
        if self.primary.len() >= self.primary_cap {
            return false;
        }
        let Some(p) = self.backup.pop_front() else {
            return false;
        };
        let at = self
            .primary
            .partition_point(|q| q.arrival_time <= p.arrival_time);
        self.primary.insert(at, p);
        true
    }

    pub fn primary_len(&self) -> usize {
        self.primary.len()
    }

    pub fn backup_len(&self) -> usize {
        self.backup.len()
    }

    pub fn len(&self) -> usize {
        self.primary.len() + self.backup.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(id: u64, t: f64) -> Packet {
        Packet {
            phase: 0.0,
            id,
            source_rack: 0,
            arrival_time: t,
            size: 1500,
            deadline: f64::INFINITY,
            service: 1e-3,
            flow: None,
            udp: false,
        }
    }

    #[test]
    fn f4tele_plus_overflows_primary_during_vacation() {
        let mut q = RackQueues::new(Mode::F4TelePlus, 100, 10_000);
        let drops = (0..150)
            .filter(|&i| q.enqueue(pkt(i, i as f64), true, true).is_err())
            .count();
        assert_eq!(drops, 50);
        assert_eq!(q.primary_len(), 100);
        assert_eq!(q.backup_len(), 0);
    }

    #[test]
    fn f4tele_loops_vacation_arrivals_to_backup() {
        let mut q = RackQueues::new(Mode::F4Tele, 100, 10_000);
        for i in 0..150 {
            assert_eq!(q.enqueue(pkt(i, i as f64), true, true), Ok(Buffer::Backup));
        }
        assert_eq!(q.backup_len(), 150);
    }

    #[test]
    fn udp_filter_bypasses_loopback() {
        let mut q = RackQueues::new(Mode::F4Tele, 10, 10);
        let mut p = pkt(0, 0.0);
        p.udp = true;
        assert_eq!(q.enqueue(p, true, true), Ok(Buffer::Primary));
        assert_eq!(q.enqueue(p, true, false), Ok(Buffer::Backup));
    }

    #[test]
    fn service_order_is_global_fifo() {
        let mut q = RackQueues::new(Mode::F4Tele, 10, 10);
        q.enqueue(pkt(0, 1.0), true, true).unwrap();
        q.enqueue(pkt(1, 2.0), false, true).unwrap();
        q.enqueue(pkt(2, 3.0), true, true).unwrap();
        q.enqueue(pkt(3, 4.0), false, true).unwrap();
        let order: Vec<u64> = std::iter::from_fn(|| q.pop_oldest()).map(|p| p.id).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn drain_preserves_arrival_order() {
        let mut q = RackQueues::new(Mode::F4Tele, 10, 10);
        q.enqueue(pkt(0, 1.0), true, true).unwrap();
        q.enqueue(pkt(1, 2.0), false, true).unwrap();
        q.enqueue(pkt(2, 3.0), true, true).unwrap();
        assert!(q.drain_one());
        assert!(q.drain_one());
        assert!(!q.drain_one());
        let order: Vec<u64> = std::iter::from_fn(|| q.pop_oldest()).map(|p| p.id).collect();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn drain_stops_when_primary_full() {
        let mut q = RackQueues::new(Mode::F4Tele, 1, 10);
        q.enqueue(pkt(0, 0.0), false, true).unwrap();
        q.enqueue(pkt(1, 1.0), true, true).unwrap();
        assert!(!q.drain_one());
        assert_eq!(q.backup_len(), 1);
    }
}
