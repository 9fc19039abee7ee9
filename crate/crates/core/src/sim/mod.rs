//! Discrete-event simulation of the rotating bundle.
//!
//! Every rack owns one link toward the management racks while its set is
//! connected. In the rotating modes the connected set follows the cyclic
//! schedule; in `Benchmark` every rack is connected all the time. A rack's
//! link serves its buffered packets FIFO by arrival time.

mod engine;
pub mod queues;
pub mod report;

use std::fmt;
use std::str::FromStr;

pub use engine::run_simulation;
pub use queues::{Buffer, Packet, RackQueues};
pub use report::{FlowStats, SetStats, SimReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Rotation with loopback buffering of blocked traffic.
    F4Tele,
    /// Rotation without loopback: blocked traffic waits in the primary buffer.
    F4TelePlus,
    /// Dedicated always-on link per rack.
    Benchmark,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::F4Tele, Mode::F4TelePlus, Mode::Benchmark];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::F4Tele => "f4tele",
            Mode::F4TelePlus => "f4tele+",
            Mode::Benchmark => "benchmark",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f4tele" => Ok(Mode::F4Tele),
            "f4tele+" | "f4teleplus" | "f4tele-plus" => Ok(Mode::F4TelePlus),
            "benchmark" => Ok(Mode::Benchmark),
            other => Err(format!("unknown mode `{other}` (expected f4tele, f4tele+ or benchmark)")),
        }
    }
}
