//! Broker (mediator) publish/subscribe delay model.
//!
//! Every message travels publisher -> server -> subscriber. Each hop is a
//! [`LinkModel`]; the server adds a processing time that is stretched by CPU
//! load. Links are load independent, so the difference between a stressed and
//! a relaxed transmission isolates the load term.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::time::Duration;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiddlewareError {
    #[error("load fraction {0} is outside [0, 1]")]
    LoadOutOfRange(f64),
    #[error("load factor {0} must be finite and non-negative")]
    BadLoadFactor(f64),
    #[error("a broker topology needs at least one subscriber")]
    NoSubscribers,
    #[error("expected {expected} subscriber links, found {found}")]
    LinkCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkModel {
    pub base_latency: Duration,
    /// Serialization time per byte.
    pub per_byte: Duration,
    pub jitter_stddev: Duration,
}

impl LinkModel {
    /// Jitter-free transfer time for `size` bytes.
    pub fn nominal(&self, size: u64) -> Duration {
        self.base_latency + self.per_byte * size
    }

    /// Transfer time with one jitter draw (normal, negative draws clamp to 0).
    pub fn sample<R: Rng + ?Sized>(&self, size: u64, rng: &mut R) -> Duration {
        self.nominal(size) + self.jitter(rng)
    }

    fn jitter<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        if self.jitter_stddev.is_zero() {
            return Duration::ZERO;
        }
        let normal = Normal::new(0.0, self.jitter_stddev.as_nanos() as f64)
            .expect("finite standard deviation");
        let draw: f64 = normal.sample(rng);
        Duration::from_nanos(draw.max(0.0).round() as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadProfile {
    cpu_load: f64,
    memory_load: f64,
}

impl LoadProfile {
    pub const IDLE: LoadProfile = LoadProfile {
        cpu_load: 0.0,
        memory_load: 0.0,
    };

    pub fn new(cpu_load: f64, memory_load: f64) -> Result<Self, MiddlewareError> {
        for v in [cpu_load, memory_load] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MiddlewareError::LoadOutOfRange(v));
            }
        }
        Ok(LoadProfile {
            cpu_load,
            memory_load,
        })
    }

    pub fn cpu(cpu_load: f64) -> Result<Self, MiddlewareError> {
        Self::new(cpu_load, 0.0)
    }

    pub fn cpu_load(&self) -> f64 {
        self.cpu_load
    }

    /// Recorded for reports only; it does not influence timing.
    pub fn memory_load(&self) -> f64 {
        self.memory_load
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrokerTopology {
    pub publisher: String,
    pub server: String,
    pub subscribers: Vec<String>,
    pub uplink: LinkModel,
    /// One link per subscriber, server -> subscriber.
    pub downlinks: Vec<LinkModel>,
    pub proc_fixed: Duration,
    pub proc_per_byte: Duration,
    /// How strongly CPU load stretches server processing.
    pub load_factor: f64,
}

/// One publish operation and its per-subscriber delivery times.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryRecord {
    pub payload_size: u64,
    pub sent_at: Duration,
    pub delivered_at: Vec<Duration>,
    pub load: LoadProfile,
}

impl DeliveryRecord {
    /// Time until the last subscriber has the message.
    pub fn tx_time(&self) -> Duration {
        self.delivered_at
            .iter()
            .map(|&d| d - self.sent_at)
            .max()
            .unwrap_or(Duration::ZERO)
    }
}

impl BrokerTopology {
    /// Single-link-type topology: the same link model on every hop.
    pub fn uniform(
        subscribers: usize,
        link: LinkModel,
        proc_fixed: Duration,
        proc_per_byte: Duration,
        load_factor: f64,
    ) -> Self {
        BrokerTopology {
            publisher: "publisher".into(),
            server: "server".into(),
            subscribers: (0..subscribers).map(|i| format!("subscriber{i}")).collect(),
            uplink: link,
            downlinks: vec![link; subscribers],
            proc_fixed,
            proc_per_byte,
            load_factor,
        }
    }

    pub fn validate(&self) -> Result<(), MiddlewareError> {
        if self.subscribers.is_empty() {
            return Err(MiddlewareError::NoSubscribers);
        }
        if self.downlinks.len() != self.subscribers.len() {
            return Err(MiddlewareError::LinkCount {
                expected: self.subscribers.len(),
                found: self.downlinks.len(),
            });
        }
        if !self.load_factor.is_finite() || self.load_factor < 0.0 {
            return Err(MiddlewareError::BadLoadFactor(self.load_factor));
        }
        Ok(())
    }

    /// Server processing time, stretched by `1 + k * cpu_load` and rounded to
    /// the nearest nanosecond.
    pub fn processing(&self, size: u64, load: LoadProfile) -> Duration {
        let base = (self.proc_fixed + self.proc_per_byte * size).as_nanos() as f64;
        let stretched = base * (1.0 + self.load_factor * load.cpu_load);
        Duration::from_nanos(stretched.round() as u64)
    }

    /// Lower bound on any delivery to `subscriber`: both hop base latencies.
    pub fn min_path_latency(&self, subscriber: usize) -> Duration {
        self.uplink.base_latency + self.downlinks[subscriber].base_latency
    }

    /// Transmission time to one subscriber: uplink, processing and downlink,
    /// each link with its own jitter draw.
    pub fn tx_time<R: Rng + ?Sized>(
        &self,
        subscriber: usize,
        size: u64,
        load: LoadProfile,
        rng: &mut R,
    ) -> Duration {
        let up = self.uplink.sample(size, rng);
        let down = self.downlinks[subscriber].sample(size, rng);
        up + self.processing(size, load) + down
    }

    /// Publishes one message at `t`; subscribers get independent draws.
    pub fn publish<R: Rng + ?Sized>(
        &self,
        size: u64,
        t: Duration,
        load: LoadProfile,
        rng: &mut R,
    ) -> DeliveryRecord {
        let delivered_at = (0..self.subscribers.len())
            .map(|i| t + self.tx_time(i, size, load, rng))
            .collect();
        DeliveryRecord {
            payload_size: size,
            sent_at: t,
            delivered_at,
            load,
        }
    }
}

/// Stressed minus relaxed transmission time, in signed nanoseconds.
pub fn tx_delay(stressed: Duration, relaxed: Duration) -> i64 {
    stressed.signed_diff(relaxed)
}
