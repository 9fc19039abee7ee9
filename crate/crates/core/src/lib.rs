//! Model, scheduler, delay analysis and discrete-event simulator for a
//! management network whose FSO link bundle rotates over groups of racks.

pub mod analytic;
pub mod config;
pub mod model;
pub mod scheduler;
pub mod sim;
pub mod traffic;
