//! Health monitoring: fault detection, action resolution and propagation.
//!
//! Every raised [`HealthEvent`] shows up in the trace as one `HM_EVENT` event
//! record followed by one `HM_NOTIFY` record addressed to the source partition
//! that carries the resolved [`HealthAction`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::config::PartitionId;
use crate::scheduler::{EventKind, PartitionState, SimState, TraceRecord};
use crate::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HealthEventKind {
    SlotOverrun,
    MemoryViolation,
    Trap,
    HypervisorEvent,
}

impl HealthEventKind {
    pub const ALL: [HealthEventKind; 4] = [
        HealthEventKind::SlotOverrun,
        HealthEventKind::MemoryViolation,
        HealthEventKind::Trap,
        HealthEventKind::HypervisorEvent,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            HealthEventKind::SlotOverrun => "SLOT_OVERRUN",
            HealthEventKind::MemoryViolation => "MEMORY_VIOLATION",
            HealthEventKind::Trap => "TRAP",
            HealthEventKind::HypervisorEvent => "HYPERVISOR_EVENT",
        }
    }
}

impl fmt::Display for HealthEventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HealthEventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown health event kind '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HealthAction {
    Log,
    SuspendPartition,
    HaltPartition,
    HaltSystem,
}

impl HealthAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            HealthAction::Log => "LOG",
            HealthAction::SuspendPartition => "SUSPEND_PARTITION",
            HealthAction::HaltPartition => "HALT_PARTITION",
            HealthAction::HaltSystem => "HALT_SYSTEM",
        }
    }
}

impl fmt::Display for HealthAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HealthAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            HealthAction::Log,
            HealthAction::SuspendPartition,
            HealthAction::HaltPartition,
            HealthAction::HaltSystem,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| format!("unknown health action '{s}'"))
    }
}

/// A detected anomaly. `overrun_amount` is non-zero iff the kind is
/// `SLOT_OVERRUN`; use the constructors to keep it that way.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HealthEvent {
    pub time: Duration,
    pub kind: HealthEventKind,
    pub source: PartitionId,
    pub detail: String,
    pub overrun_amount: Duration,
}

impl HealthEvent {
    pub fn slot_overrun(time: Duration, source: PartitionId, amount: Duration) -> Self {
        assert!(!amount.is_zero(), "an overrun has a positive amount");
        HealthEvent {
            time,
            kind: HealthEventKind::SlotOverrun,
            source,
            detail: format!("compute exceeds slot by {amount}"),
            overrun_amount: amount,
        }
    }

    /// Any non-overrun fault.
    pub fn fault(
        time: Duration,
        kind: HealthEventKind,
        source: PartitionId,
        detail: impl Into<String>,
    ) -> Self {
        assert!(kind != HealthEventKind::SlotOverrun, "use slot_overrun");
        HealthEvent {
            time,
            kind,
            source,
            detail: detail.into(),
            overrun_amount: Duration::ZERO,
        }
    }
}

/// Maps `(kind, partition)` to an action, falling back to a per-kind default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HealthTable {
    defaults: BTreeMap<HealthEventKind, HealthAction>,
    overrides: BTreeMap<(HealthEventKind, PartitionId), HealthAction>,
}

impl Default for HealthTable {
    fn default() -> Self {
        let defaults = BTreeMap::from([
            (HealthEventKind::SlotOverrun, HealthAction::Log),
            (
                HealthEventKind::MemoryViolation,
                HealthAction::SuspendPartition,
            ),
            (HealthEventKind::Trap, HealthAction::Log),
            (HealthEventKind::HypervisorEvent, HealthAction::Log),
        ]);
        HealthTable {
            defaults,
            overrides: BTreeMap::new(),
        }
    }
}

impl HealthTable {
    pub fn set_default(&mut self, kind: HealthEventKind, action: HealthAction) {
        self.defaults.insert(kind, action);
    }

    pub fn set(&mut self, kind: HealthEventKind, partition: PartitionId, action: HealthAction) {
        self.overrides.insert((kind, partition), action);
    }

    pub fn resolve(&self, kind: HealthEventKind, partition: PartitionId) -> HealthAction {
        self.overrides
            .get(&(kind, partition))
            .or_else(|| self.defaults.get(&kind))
            .copied()
            .unwrap_or(HealthAction::Log)
    }
}

/// A `SLOT_OVERRUN` iff the demanded compute time does not fit in what is
/// left of the slot. An exact fit is legal.
pub fn detect_overrun(
    now: Duration,
    partition: PartitionId,
    demanded: Duration,
    remaining: Duration,
) -> Option<HealthEvent> {
    (demanded > remaining).then(|| HealthEvent::slot_overrun(now, partition, demanded - remaining))
}

impl SimState {
    /// Records the event, resolves its action and applies it to the source
    /// partition (or the whole system for `HALT_SYSTEM`).
    pub fn raise(&mut self, event: HealthEvent) -> HealthAction {
        debug_assert_eq!(
            event.time, self.now,
            "faults are raised at the current time"
        );
        let seq = self.next_seq(Some(event.source));
        self.record_fault(event, seq)
    }

    pub(crate) fn record_fault(&mut self, event: HealthEvent, seq: u64) -> HealthAction {
        let source = event.source;
        self.trace.push(TraceRecord::Event(crate::scheduler::Event {
            time: self.now,
            kind: EventKind::HmEvent,
            partition: Some(source),
            seq,
        }));
        let action = self.health.resolve(event.kind, source);
        self.trace.push(TraceRecord::HmNotify {
            time: self.now,
            partition: source,
            kind: event.kind,
            action,
            overrun: event.overrun_amount,
        });
        let current = self.partition_state(source);
        match action {
            HealthAction::Log => {}
            HealthAction::SuspendPartition => {
                if current == Some(PartitionState::Normal) {
                    self.set_partition_state(source, PartitionState::Suspended)
                        .expect("NORMAL -> SUSPENDED is legal");
                }
            }
            HealthAction::HaltPartition => {
                if current.is_some_and(|s| s != PartitionState::Halted) {
                    self.set_partition_state(source, PartitionState::Halted)
                        .expect("any -> HALTED is legal");
                }
            }
            HealthAction::HaltSystem => {
                self.queue.clear();
                self.active = None;
                self.system_halted = true;
            }
        }
        action
    }
}
