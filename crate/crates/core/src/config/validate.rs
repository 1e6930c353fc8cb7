use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{ChannelKind, ConfigError, PortRef, SchedulePlan, SlotId, SystemConfig};
use crate::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => f.write_str("ERROR"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingCode {
    EmptyPartitionTable,
    DuplicatePartitionId,
    InvalidMemoryArea,
    MemoryOverlap,
    ZeroMajorFrame,
    DuplicateSlotId,
    UnknownPartition,
    ZeroSlotDuration,
    SlotExceedsFrame,
    SlotOverlap,
    DanglingPort,
    NoDestination,
    QueuingFanout,
    SelfLoop,
    DuplicatePort,
    ZeroMessageSize,
    ZeroCapacity,
}

impl FindingCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FindingCode::EmptyPartitionTable => "EMPTY_PARTITION_TABLE",
            FindingCode::DuplicatePartitionId => "DUPLICATE_PARTITION_ID",
            FindingCode::InvalidMemoryArea => "INVALID_MEMORY_AREA",
            FindingCode::MemoryOverlap => "MEMORY_OVERLAP",
            FindingCode::ZeroMajorFrame => "ZERO_MAJOR_FRAME",
            FindingCode::DuplicateSlotId => "DUPLICATE_SLOT_ID",
            FindingCode::UnknownPartition => "UNKNOWN_PARTITION",
            FindingCode::ZeroSlotDuration => "ZERO_SLOT_DURATION",
            FindingCode::SlotExceedsFrame => "SLOT_EXCEEDS_FRAME",
            FindingCode::SlotOverlap => "SLOT_OVERLAP",
            FindingCode::DanglingPort => "DANGLING_PORT",
            FindingCode::NoDestination => "NO_DESTINATION",
            FindingCode::QueuingFanout => "QUEUING_FANOUT",
            FindingCode::SelfLoop => "SELF_LOOP",
            FindingCode::DuplicatePort => "DUPLICATE_PORT",
            FindingCode::ZeroMessageSize => "ZERO_MESSAGE_SIZE",
            FindingCode::ZeroCapacity => "ZERO_CAPACITY",
        }
    }
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub code: FindingCode,
    pub severity: Severity,
    /// Offending element, e.g. `slot:1` or `channel:0/destination:7:in`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Finding {
    /// `SEVERITY CODE location message`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.severity, self.code, self.location, self.message
        )
    }
}

pub type ValidationReport = Vec<Finding>;

struct Collector(ValidationReport);

impl Collector {
    fn error(
        &mut self,
        code: FindingCode,
        location: impl Into<String>,
        message: impl Into<String>,
    ) {
        self.0.push(Finding {
            code,
            severity: Severity::Error,
            location: location.into(),
            message: message.into(),
        });
    }
}

/// Checks every structural invariant of a configuration. The report is empty
/// iff the configuration is valid.
pub fn validate(cfg: &SystemConfig) -> ValidationReport {
    let mut out = Collector(Vec::new());
    check_partitions(cfg, &mut out);
    check_plan(cfg, &mut out);
    check_channels(cfg, &mut out);
    out.0
}

fn check_partitions(cfg: &SystemConfig, out: &mut Collector) {
    if cfg.partitions.is_empty() {
        out.error(
            FindingCode::EmptyPartitionTable,
            "partition-table",
            "no partitions defined",
        );
    }
    let mut ids = BTreeSet::new();
    for p in &cfg.partitions {
        if !ids.insert(p.id) {
            out.error(
                FindingCode::DuplicatePartitionId,
                format!("partition:{}", p.id),
                format!("partition id {} defined more than once", p.id),
            );
        }
        for (i, m) in p.memory_areas.iter().enumerate() {
            if m.size == 0 || m.end().is_none() {
                out.error(
                    FindingCode::InvalidMemoryArea,
                    format!("partition:{}/memory:{i}", p.id),
                    format!(
                        "area start=0x{:x} size=0x{:x} is empty or overflows",
                        m.start, m.size
                    ),
                );
            }
        }
    }
    for (i, a) in cfg.partitions.iter().enumerate() {
        for b in &cfg.partitions[i + 1..] {
            if a.id == b.id {
                continue;
            }
            for ma in &a.memory_areas {
                for mb in &b.memory_areas {
                    if ma.overlaps(mb) {
                        out.error(
                            FindingCode::MemoryOverlap,
                            format!("partition:{}", b.id),
                            format!(
                                "area [0x{:x},0x{:x}) overlaps partition {} area [0x{:x},0x{:x})",
                                mb.start,
                                mb.start + mb.size,
                                a.id,
                                ma.start,
                                ma.start + ma.size
                            ),
                        );
                    }
                }
            }
        }
    }
}

fn check_plan(cfg: &SystemConfig, out: &mut Collector) {
    let plan = &cfg.plan;
    if plan.major_frame.is_zero() {
        out.error(
            FindingCode::ZeroMajorFrame,
            "schedule",
            "major frame is zero",
        );
    }
    let mut ids = BTreeSet::new();
    for s in &plan.slots {
        let loc = format!("slot:{}", s.slot_id);
        if !ids.insert(s.slot_id) {
            out.error(
                FindingCode::DuplicateSlotId,
                loc.clone(),
                format!("slot id {} defined more than once", s.slot_id),
            );
        }
        if cfg.partition(s.partition_id).is_none() {
            out.error(
                FindingCode::UnknownPartition,
                loc.clone(),
                format!("slot references unknown partition {}", s.partition_id),
            );
        }
        if s.duration.is_zero() {
            out.error(
                FindingCode::ZeroSlotDuration,
                loc.clone(),
                "slot duration is zero",
            );
        }
        match s.start.checked_add(s.duration) {
            Some(end) if end <= plan.major_frame => {}
            _ => out.error(
                FindingCode::SlotExceedsFrame,
                loc.clone(),
                format!(
                    "slot [{}, {}+{}) exceeds major frame {}",
                    s.start, s.start, s.duration, plan.major_frame
                ),
            ),
        }
    }
    for (i, a) in plan.slots.iter().enumerate() {
        for b in &plan.slots[i + 1..] {
            if a.start.checked_add(a.duration).is_none()
                || b.start.checked_add(b.duration).is_none()
            {
                continue;
            }
            if a.overlaps(b) {
                out.error(
                    FindingCode::SlotOverlap,
                    format!("slot:{}", b.slot_id),
                    format!(
                        "slot {} [{},{}) overlaps slot {} [{},{})",
                        b.slot_id,
                        b.start,
                        b.end(),
                        a.slot_id,
                        a.start,
                        a.end()
                    ),
                );
            }
        }
    }
}

fn check_channels(cfg: &SystemConfig, out: &mut Collector) {
    let mut owners: BTreeMap<&PortRef, usize> = BTreeMap::new();
    for (i, c) in cfg.channels.iter().enumerate() {
        let loc = format!("channel:{i}");
        if c.max_message_size == 0 {
            out.error(
                FindingCode::ZeroMessageSize,
                loc.clone(),
                "maxMessageSize is zero",
            );
        }
        match c.kind {
            ChannelKind::Queuing { capacity } => {
                if capacity == 0 {
                    out.error(
                        FindingCode::ZeroCapacity,
                        loc.clone(),
                        "maxNoMessages is zero",
                    );
                }
                if c.destinations.len() > 1 {
                    out.error(
                        FindingCode::QueuingFanout,
                        loc.clone(),
                        format!(
                            "queuing channel has {} destinations, expected exactly 1",
                            c.destinations.len()
                        ),
                    );
                }
            }
            ChannelKind::Sampling { .. } => {}
        }
        if c.destinations.is_empty() {
            out.error(
                FindingCode::NoDestination,
                loc.clone(),
                "channel has no destination",
            );
        }
        let ends = std::iter::once(("source", &c.source))
            .chain(c.destinations.iter().map(|d| ("destination", d)));
        for (role, end) in ends {
            let end_loc = format!("{loc}/{role}:{end}");
            if cfg.partition(end.partition).is_none() {
                out.error(
                    FindingCode::DanglingPort,
                    end_loc.clone(),
                    format!("{role} names nonexistent partition {}", end.partition),
                );
            }
            if let Some(prev) = owners.insert(end, i) {
                if prev != i || role == "destination" {
                    out.error(
                        FindingCode::DuplicatePort,
                        end_loc,
                        format!("port {end} is already attached to channel {prev}"),
                    );
                }
            }
        }
        if c.destinations.contains(&c.source) {
            out.error(
                FindingCode::SelfLoop,
                loc,
                format!("source {} is also a destination", c.source),
            );
        }
    }
}

/// Time from the end of `from_slot` to the next start of `to_slot`, wrapping
/// across the major frame. Always `< major_frame`.
pub fn transition_gap(
    plan: &SchedulePlan,
    from_slot: SlotId,
    to_slot: SlotId,
) -> Result<Duration, ConfigError> {
    let from = plan
        .slot(from_slot)
        .ok_or(ConfigError::UnknownSlot(from_slot))?;
    let to = plan
        .slot(to_slot)
        .ok_or(ConfigError::UnknownSlot(to_slot))?;
    let frame = plan.major_frame.as_nanos();
    let end = from.end().as_nanos() % frame;
    let start = to.start.as_nanos();
    Ok(Duration::from_nanos((start + frame - end) % frame))
}
