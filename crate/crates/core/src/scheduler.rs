//! Virtual clock, event queue, fixed cyclic scheduler and partition lifecycle.
//!
//! A [`SimState`] owns everything about one run. Events are kept in a single
//! ordered queue and processed one at a time by [`SimState::step`]; the total
//! order is `(time, kind rank, partition, sequence)` with the kind rank
//!
//! ```text
//! SLOT_END < HM_EVENT < FRAME_WRAP < SLOT_START < APP_ACTION
//! ```
//!
//! Sequence numbers are counted per partition (and separately for
//! partition-less frame events), so what one partition does never shifts the
//! numbering of another partition's events.
//!
//! Slots always end at their scheduled end. A partition that is not `NORMAL`
//! keeps its slots but they elapse idle.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::channels::{PortOp, PortTable};
use crate::config::{validate, ChannelId, PartitionId, SlotId, SystemConfig, ValidationReport};
use crate::health::{HealthAction, HealthEvent, HealthEventKind, HealthTable};
use crate::time::Duration;
use crate::workload::{AppCursor, AppScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartitionState {
    Boot,
    Normal,
    Suspended,
    Halted,
}

impl PartitionState {
    pub fn can_transition(self, to: PartitionState) -> bool {
        use PartitionState::*;
        matches!(
            (self, to),
            (Boot, Normal) | (Normal, Suspended) | (Suspended, Normal) | (_, Halted)
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PartitionState::Boot => "BOOT",
            PartitionState::Normal => "NORMAL",
            PartitionState::Suspended => "SUSPENDED",
            PartitionState::Halted => "HALTED",
        }
    }
}

impl fmt::Display for PartitionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Declaration order is the tie-break rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    SlotEnd,
    HmEvent,
    FrameWrap,
    SlotStart,
    AppAction,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::SlotEnd => "SLOT_END",
            EventKind::HmEvent => "HM_EVENT",
            EventKind::FrameWrap => "FRAME_WRAP",
            EventKind::SlotStart => "SLOT_START",
            EventKind::AppAction => "APP_ACTION",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Field order gives the total order used by the queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub time: Duration,
    pub kind: EventKind,
    /// `None` only for `FRAME_WRAP`.
    pub partition: Option<PartitionId>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Payload {
    None,
    Slot(SlotId),
    Fault(HealthEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveSlot {
    pub partition: PartitionId,
    pub slot_id: SlotId,
    pub start: Duration,
    pub end: Duration,
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceRecord {
    Event(Event),
    State {
        time: Duration,
        partition: PartitionId,
        from: PartitionState,
        to: PartitionState,
    },
    PortOp {
        time: Duration,
        op: PortOp,
        channel: ChannelId,
        partition: PartitionId,
        size: u64,
        result: &'static str,
    },
    Mark {
        time: Duration,
        partition: PartitionId,
        label: String,
    },
    HmNotify {
        time: Duration,
        partition: PartitionId,
        kind: HealthEventKind,
        action: HealthAction,
        overrun: Duration,
    },
}

impl TraceRecord {
    pub fn time(&self) -> Duration {
        match self {
            TraceRecord::Event(e) => e.time,
            TraceRecord::State { time, .. }
            | TraceRecord::PortOp { time, .. }
            | TraceRecord::Mark { time, .. }
            | TraceRecord::HmNotify { time, .. } => *time,
        }
    }

    pub fn partition(&self) -> Option<PartitionId> {
        match self {
            TraceRecord::Event(e) => e.partition,
            TraceRecord::State { partition, .. }
            | TraceRecord::PortOp { partition, .. }
            | TraceRecord::Mark { partition, .. }
            | TraceRecord::HmNotify { partition, .. } => Some(*partition),
        }
    }

    pub fn event(&self) -> Option<&Event> {
        match self {
            TraceRecord::Event(e) => Some(e),
            _ => None,
        }
    }
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceRecord::Event(e) => match e.partition {
                Some(p) => write!(f, "{},{},{},{}", e.time.as_nanos(), e.kind, p, e.seq),
                None => write!(f, "{},{},-,{}", e.time.as_nanos(), e.kind, e.seq),
            },
            TraceRecord::State {
                time,
                partition,
                from,
                to,
            } => write!(f, "{},STATE,{},{},{}", time.as_nanos(), partition, from, to),
            TraceRecord::PortOp {
                time,
                op,
                channel,
                partition,
                size,
                result,
            } => write!(
                f,
                "{},PORT_OP,{},{},{},{},{}",
                time.as_nanos(),
                op,
                channel,
                partition,
                size,
                result
            ),
            TraceRecord::Mark {
                time,
                partition,
                label,
            } => write!(f, "{},MARK,{},{}", time.as_nanos(), partition, label),
            TraceRecord::HmNotify {
                time,
                partition,
                kind,
                action,
                overrun,
            } => write!(
                f,
                "{},HM_NOTIFY,{},{},{},{}",
                time.as_nanos(),
                partition,
                kind,
                action,
                overrun.as_nanos()
            ),
        }
    }
}

/// Newline-delimited trace text, one record per line.
pub fn export_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("configuration is invalid ({} findings)", .0.len())]
    ConfigInvalid(ValidationReport),
    #[error("event queue is empty")]
    QueueEmpty,
    #[error("illegal partition transition {from} -> {to}")]
    IllegalTransition {
        from: PartitionState,
        to: PartitionState,
    },
    #[error("unknown partition {0}")]
    UnknownPartition(PartitionId),
    #[error("system is already booted")]
    AlreadyBooted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimParams {
    /// Time consumed by every port operation issued by a script.
    pub api_call_cost: Duration,
    /// Size used by `send <port> payload` actions.
    pub payload_size: u64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub(crate) now: Duration,
    pub(crate) config: SystemConfig,
    pub(crate) partition_states: BTreeMap<PartitionId, PartitionState>,
    pub(crate) ports: PortTable,
    pub(crate) queue: BTreeMap<Event, Payload>,
    pub(crate) trace: Vec<TraceRecord>,
    pub(crate) active: Option<ActiveSlot>,
    pub(crate) scripts: BTreeMap<PartitionId, (AppScript, AppCursor)>,
    pub(crate) health: HealthTable,
    pub(crate) params: SimParams,
    pub(crate) system_halted: bool,
    seq: BTreeMap<Option<PartitionId>, u64>,
}

impl SimState {
    /// Fresh state with every partition in `BOOT` and an empty queue.
    pub fn new(config: SystemConfig) -> Self {
        let partition_states = config
            .partitions
            .iter()
            .map(|p| (p.id, PartitionState::Boot))
            .collect();
        SimState {
            now: Duration::ZERO,
            ports: PortTable::new(&config),
            config,
            partition_states,
            queue: BTreeMap::new(),
            trace: Vec::new(),
            active: None,
            scripts: BTreeMap::new(),
            health: HealthTable::default(),
            params: SimParams::default(),
            system_halted: false,
            seq: BTreeMap::new(),
        }
    }

    pub fn with_scripts(mut self, scripts: impl IntoIterator<Item = AppScript>) -> Self {
        for s in scripts {
            self.scripts.insert(s.partition, (s, AppCursor::default()));
        }
        self
    }

    pub fn with_health_table(mut self, table: HealthTable) -> Self {
        self.health = table;
        self
    }

    pub fn with_params(mut self, params: SimParams) -> Self {
        self.params = params;
        self
    }

    pub fn now(&self) -> Duration {
        self.now
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn ports(&self) -> &PortTable {
        &self.ports
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn active_slot(&self) -> Option<ActiveSlot> {
        self.active
    }

    pub fn partition_state(&self, id: PartitionId) -> Option<PartitionState> {
        self.partition_states.get(&id).copied()
    }

    pub fn cursor(&self, id: PartitionId) -> Option<&AppCursor> {
        self.scripts.get(&id).map(|(_, c)| c)
    }

    pub fn is_system_halted(&self) -> bool {
        self.system_halted
    }

    pub fn pending_events(&self) -> impl Iterator<Item = &Event> {
        self.queue.keys()
    }

    pub(crate) fn next_seq(&mut self, partition: Option<PartitionId>) -> u64 {
        let counter = self.seq.entry(partition).or_insert(0);
        let seq = *counter;
        *counter += 1;
        seq
    }

    pub(crate) fn schedule(
        &mut self,
        time: Duration,
        kind: EventKind,
        partition: Option<PartitionId>,
        payload: Payload,
    ) -> Event {
        let event = Event {
            time,
            kind,
            partition,
            seq: self.next_seq(partition),
        };
        self.queue.insert(event, payload);
        event
    }

    /// Moves every partition still in `BOOT` to `NORMAL` at time zero and
    /// schedules the first major frame. Partitions halted before boot stay
    /// halted.
    pub fn boot(&mut self) -> Result<(), SimError> {
        let findings = validate(&self.config);
        if !findings.is_empty() {
            return Err(SimError::ConfigInvalid(findings));
        }
        if self
            .partition_states
            .values()
            .any(|s| matches!(s, PartitionState::Normal | PartitionState::Suspended))
        {
            return Err(SimError::AlreadyBooted);
        }
        let ids: Vec<_> = self
            .partition_states
            .iter()
            .filter(|(_, s)| **s == PartitionState::Boot)
            .map(|(id, _)| *id)
            .collect();
        for id in ids {
            self.set_partition_state(id, PartitionState::Normal)?;
        }
        self.schedule_frame(0);
        Ok(())
    }

    fn schedule_frame(&mut self, frame: u64) {
        let base = self.config.plan.major_frame * frame;
        let slots: Vec<_> = self
            .config
            .plan
            .slots
            .iter()
            .map(|s| (s.slot_id, s.partition_id, s.start, s.end()))
            .collect();
        for (slot_id, partition, start, end) in slots {
            self.schedule(
                base + start,
                EventKind::SlotStart,
                Some(partition),
                Payload::Slot(slot_id),
            );
            self.schedule(
                base + end,
                EventKind::SlotEnd,
                Some(partition),
                Payload::Slot(slot_id),
            );
        }
        self.schedule(
            base + self.config.plan.major_frame,
            EventKind::FrameWrap,
            None,
            Payload::None,
        );
    }

    /// Processes the least pending event.
    pub fn step(&mut self) -> Result<Event, SimError> {
        let (event, payload) = self.queue.pop_first().ok_or(SimError::QueueEmpty)?;
        debug_assert!(event.time >= self.now, "time went backwards");
        self.now = event.time;
        if event.kind != EventKind::HmEvent {
            self.trace.push(TraceRecord::Event(event));
        }
        match (event.kind, payload) {
            (EventKind::SlotStart, Payload::Slot(slot_id)) => {
                let partition = event.partition.expect("slot events carry a partition");
                let slot = self.config.plan.slot(slot_id).expect("slot from plan");
                debug_assert!(self.active.is_none(), "two slots active at once");
                self.active = Some(ActiveSlot {
                    partition,
                    slot_id,
                    start: event.time,
                    end: event.time + slot.duration,
                });
                if self.partition_state(partition) == Some(PartitionState::Normal) {
                    self.dispatch_slot(partition);
                }
            }
            (EventKind::SlotEnd, Payload::Slot(slot_id)) => {
                debug_assert_eq!(self.active.map(|a| a.slot_id), Some(slot_id));
                self.active = None;
            }
            (EventKind::FrameWrap, _) => {
                let frame = event.time.as_nanos() / self.config.plan.major_frame.as_nanos();
                self.schedule_frame(frame);
            }
            (EventKind::AppAction, _) => {
                let partition = event.partition.expect("app actions carry a partition");
                self.execute_action(partition);
            }
            (EventKind::HmEvent, Payload::Fault(mut fault)) => {
                fault.time = event.time;
                self.record_fault(fault, event.seq);
            }
            (kind, payload) => unreachable!("{kind} scheduled with payload {payload:?}"),
        }
        Ok(event)
    }

    /// Steps every event with time `<= t_end` and leaves the clock at `t_end`.
    /// Returns the trace records produced by this call.
    pub fn run_until(&mut self, t_end: Duration) -> &[TraceRecord] {
        let from = self.trace.len();
        while let Some((next, _)) = self.queue.first_key_value() {
            if next.time > t_end {
                break;
            }
            self.step().expect("queue checked non-empty");
        }
        self.now = self.now.max(t_end);
        &self.trace[from..]
    }

    /// Runs `frames` whole major frames from time zero.
    pub fn run_frames(&mut self, frames: u64) -> &[TraceRecord] {
        let t_end = self.config.plan.major_frame * frames;
        self.run_until(t_end)
    }

    pub fn set_partition_state(
        &mut self,
        partition: PartitionId,
        new: PartitionState,
    ) -> Result<(), SimError> {
        let current = self
            .partition_state(partition)
            .ok_or(SimError::UnknownPartition(partition))?;
        if !current.can_transition(new) {
            return Err(SimError::IllegalTransition {
                from: current,
                to: new,
            });
        }
        self.partition_states.insert(partition, new);
        self.trace.push(TraceRecord::State {
            time: self.now,
            partition,
            from: current,
            to: new,
        });
        if new != PartitionState::Normal {
            self.queue
                .retain(|e, _| !(e.kind == EventKind::AppAction && e.partition == Some(partition)));
        }
        Ok(())
    }

    /// Schedules an externally injected fault for processing at `fault.time`.
    pub fn inject_fault(&mut self, fault: HealthEvent) -> Event {
        let source = fault.source;
        self.schedule(
            fault.time,
            EventKind::HmEvent,
            Some(source),
            Payload::Fault(fault),
        )
    }

    pub(crate) fn record_port_op(
        &mut self,
        op: PortOp,
        channel: ChannelId,
        partition: PartitionId,
        size: u64,
        result: &'static str,
    ) {
        self.trace.push(TraceRecord::PortOp {
            time: self.now,
            op,
            channel,
            partition,
            size,
            result,
        });
    }
}
