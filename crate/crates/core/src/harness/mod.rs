//! Experiment execution, statistics and CSV reporting.

mod csv_io;
mod scenario;
mod stats;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::channels::PortOp;
use crate::config::{transition_gap, PartitionId};
use crate::middleware::tx_delay;
use crate::scheduler::{SimParams, SimState, TraceRecord};
use crate::time::Duration;

pub use csv_io::{export_csv, read_csv, write_csv, CSV_HEADER};
pub use scenario::{
    parse_scenario, BrokerSetup, Horizon, Mode, PartitionedSetup, Scenario, Workload,
    DEFAULT_FRAMES, DEFAULT_PAYLOAD_SIZES, DEFAULT_REPETITIONS,
};
pub use stats::{
    format_ratio, summarize, summarize_groups, summary_table, GroupSummary, Metric, SummaryStats,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {}", .0.join("; "))]
    ScenarioInvalid(Vec<String>),
    #[error("system halted by the health monitor at {time} (repetition {repetition})")]
    SystemHalted { repetition: u32, time: Duration },
    #[error("result is empty")]
    EmptyResult,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
}

/// One repetition. Fields that do not apply to the scenario's mode are `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepetitionRecord {
    pub repetition: u32,
    pub payload_bytes: u64,
    pub t_send: Option<Duration>,
    pub t_recv: Option<Duration>,
    pub latency: Option<Duration>,
    pub gap: Option<Duration>,
    pub tx_relaxed: Option<Duration>,
    pub tx_stressed: Option<Duration>,
    pub tx_delay: Option<i64>,
}

impl RepetitionRecord {
    fn empty(repetition: u32, payload_bytes: u64) -> Self {
        RepetitionRecord {
            repetition,
            payload_bytes,
            t_send: None,
            t_recv: None,
            latency: None,
            gap: None,
            tx_relaxed: None,
            tx_stressed: None,
            tx_delay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub scenario: String,
    pub mode: Mode,
    /// Ordered by repetition index.
    pub records: Vec<RepetitionRecord>,
}

impl RunResult {
    /// Summary over every record, using the mode's metric.
    pub fn summarize(&self) -> Result<SummaryStats, HarnessError> {
        summarize(&self.records, Metric::for_mode(self.mode))
    }

    /// One summary per payload size.
    pub fn summaries(&self) -> Vec<GroupSummary> {
        summarize_groups(
            self.records
                .iter()
                .map(|r| (self.scenario.as_str(), self.mode, r)),
        )
    }
}

/// Mixes a base seed with a repetition counter (splitmix64 applied twice), so
/// every repetition draws from its own stream regardless of execution order.
pub fn repetition_seed(base: u64, counter: u64) -> u64 {
    splitmix64(base ^ splitmix64(counter))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every repetition of the scenario. Repetitions are numbered globally,
/// payload-major (then load pair, then repetition), and may run in parallel.
pub fn run_scenario(sc: &Scenario) -> Result<RunResult, HarnessError> {
    let problems = sc.check();
    if !problems.is_empty() {
        return Err(HarnessError::ScenarioInvalid(problems));
    }
    let records = match &sc.workload {
        Workload::Partitioned(setup) => {
            let jobs: Vec<(u32, u64)> = sc
                .payload_sizes
                .iter()
                .flat_map(|&size| (0..sc.repetitions).map(move |_| size))
                .enumerate()
                .map(|(i, size)| (i as u32, size))
                .collect();
            jobs.par_iter()
                .map(|&(rep, size)| run_partitioned(setup, rep, size))
                .collect::<Result<Vec<_>, _>>()?
        }
        Workload::Broker(setup) => {
            let jobs: Vec<(u32, u64, usize)> = sc
                .payload_sizes
                .iter()
                .flat_map(|&size| {
                    (0..setup.load_pairs.len())
                        .flat_map(move |pair| (0..sc.repetitions).map(move |_| (size, pair)))
                })
                .enumerate()
                .map(|(i, (size, pair))| (i as u32, size, pair))
                .collect();
            jobs.par_iter()
                .map(|&(rep, size, pair)| run_broker(setup, sc.seed, rep, size, pair))
                .collect()
        }
    };
    Ok(RunResult {
        scenario: sc.name.clone(),
        mode: sc.mode(),
        records,
    })
}

/// Boots a fresh system for one partitioned repetition and runs it to the
/// horizon (`horizon` overrides the scenario's own).
pub fn simulate(setup: &PartitionedSetup, payload_size: u64, horizon: Option<Horizon>) -> SimState {
    let mut state = SimState::new(setup.config.clone())
        .with_scripts(setup.scripts.iter().cloned())
        .with_health_table(setup.health.clone())
        .with_params(SimParams {
            api_call_cost: setup.api_call_cost,
            payload_size,
        });
    state.boot().expect("scenario was checked before running");
    for fault in &setup.faults {
        state.inject_fault(fault.clone());
    }
    let horizon = horizon.unwrap_or(setup.horizon);
    state.run_until(horizon.end(setup.config.plan.major_frame));
    state
}

fn run_partitioned(
    setup: &PartitionedSetup,
    repetition: u32,
    payload_size: u64,
) -> Result<RepetitionRecord, HarnessError> {
    let state = simulate(setup, payload_size, None);
    if state.is_system_halted() {
        return Err(HarnessError::SystemHalted {
            repetition,
            time: state.now(),
        });
    }
    let mut record = RepetitionRecord::empty(repetition, payload_size);
    if let Some((tx, rx)) = measure(state.trace(), &setup.tx_mark, &setup.rx_mark) {
        let plan = &setup.config.plan;
        let slot_of = |t: Duration| {
            let offset = Duration::from_nanos(t.as_nanos() % plan.major_frame.as_nanos());
            plan.slot_at(offset).map(|s| s.slot_id)
        };
        record.t_send = Some(tx.time);
        record.t_recv = Some(rx.time);
        record.latency = Some(rx.time - tx.time);
        if let (Some(from), Some(to)) = (slot_of(tx.time), slot_of(rx.time)) {
            record.gap = transition_gap(plan, from, to).ok();
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy)]
struct Mark {
    time: Duration,
}

/// First `tx` mark, and the first `rx` mark that follows a successful
/// receive or read by the same partition at or after the send.
fn measure(trace: &[TraceRecord], tx_label: &str, rx_label: &str) -> Option<(Mark, Mark)> {
    let tx = trace.iter().find_map(|r| match r {
        TraceRecord::Mark { time, label, .. } if label == tx_label => Some(Mark { time: *time }),
        _ => None,
    })?;
    let mut armed: Option<PartitionId> = None;
    for r in trace.iter().filter(|r| r.time() >= tx.time) {
        match r {
            TraceRecord::PortOp {
                op: PortOp::Receive | PortOp::Read,
                partition,
                result: "OK",
                ..
            } => armed = Some(*partition),
            TraceRecord::Mark {
                time,
                partition,
                label,
            } if label == rx_label && armed == Some(*partition) => {
                return Some((tx, Mark { time: *time }));
            }
            _ => {}
        }
    }
    None
}

fn run_broker(
    setup: &BrokerSetup,
    seed: u64,
    repetition: u32,
    payload_size: u64,
    pair: usize,
) -> RepetitionRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(repetition_seed(seed, repetition as u64));
    let (relaxed_load, stressed_load) = setup.load_pairs[pair];
    let relaxed = setup
        .topology
        .publish(payload_size, Duration::ZERO, relaxed_load, &mut rng)
        .tx_time();
    let stressed = setup
        .topology
        .publish(payload_size, Duration::ZERO, stressed_load, &mut rng)
        .tx_time();
    RepetitionRecord {
        tx_relaxed: Some(relaxed),
        tx_stressed: Some(stressed),
        tx_delay: Some(tx_delay(stressed, relaxed)),
        ..RepetitionRecord::empty(repetition, payload_size)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_repetition() {
        let seeds: std::collections::BTreeSet<_> =
            (0..1000).map(|i| repetition_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_eq!(repetition_seed(7, 3), repetition_seed(7, 3));
        assert_ne!(repetition_seed(7, 3), repetition_seed(8, 3));
    }

    #[test]
    fn splitmix_reference_value() {
        // first output of the reference splitmix64 generator seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
