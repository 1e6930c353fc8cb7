//! Calibration constants for the broker model.
//!
//! These are tuning values, not measurements. They are chosen so that a
//! 1 MB publish under full CPU load is delayed by roughly 5 ms relative to an
//! idle host:
//!
//! ```text
//! delay = (PROC_FIXED + PROC_PER_BYTE * size) * LOAD_FACTOR * cpu_load
//!       = (20us + 1ms) * 4.5 * 1.0 = 4.59ms
//! ```
//!
//! Scenario files may override every value.

use crate::middleware::{BrokerTopology, LinkModel};
use crate::time::Duration;

pub const LINK_BASE_LATENCY: Duration = Duration::from_micros(100);
/// About 1 Gbit/s.
pub const LINK_PER_BYTE: Duration = Duration::from_nanos(8);
pub const LINK_JITTER_STDDEV: Duration = Duration::from_micros(20);
pub const PROC_FIXED: Duration = Duration::from_micros(20);
pub const PROC_PER_BYTE: Duration = Duration::from_nanos(1);
pub const LOAD_FACTOR: f64 = 4.5;
/// Memory pressure recorded alongside the stressed profile.
pub const STRESSED_MEMORY_LOAD: f64 = 0.75;

pub fn default_link() -> LinkModel {
    LinkModel {
        base_latency: LINK_BASE_LATENCY,
        per_byte: LINK_PER_BYTE,
        jitter_stddev: LINK_JITTER_STDDEV,
    }
}

/// One publisher, one server, one subscriber with the default links.
pub fn default_topology() -> BrokerTopology {
    BrokerTopology::uniform(1, default_link(), PROC_FIXED, PROC_PER_BYTE, LOAD_FACTOR)
}
