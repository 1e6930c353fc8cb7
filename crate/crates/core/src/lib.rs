//! Deterministic simulator for a partitioned (time- and space-isolated)
//! hypervisor: cyclic slot scheduling, inter-partition ports, health
//! monitoring, scripted applications, plus a broker-based publish/subscribe
//! delay model for comparison.
//!
//! All time is virtual and measured in integer nanoseconds ([`Duration`]).

pub mod calibration;
pub mod channels;
pub mod config;
pub mod harness;
pub mod health;
pub mod middleware;
pub mod scheduler;
pub mod time;
pub mod workload;

pub use config::{parse_config, validate, SystemConfig};
pub use harness::{run_scenario, summarize, RunResult, Scenario};
pub use scheduler::{SimState, TraceRecord};
pub use time::Duration;
