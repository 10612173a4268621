//! Scripted agents against a room, either in process on a virtual clock or
//! over websockets against a running server, with end-of-run oracles.

pub mod generate;
pub mod inprocess;
pub mod loopback;
pub mod oracle;
pub mod report;
pub mod scenario;
