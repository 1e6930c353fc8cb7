//! System description: partitions, memory areas, the cyclic schedule plan and
//! inter-partition channels.
//!
//! A description is normally loaded from XML with [`parse_config`], checked with
//! [`validate`] and written back with [`to_xml`]. All durations are normalized
//! to integer nanoseconds on load.
//!
//! ```
//! use partsim_core::config::{parse_config, validate};
//!
//! let cfg = parse_config(r#"
//!   <SystemDescription majorFrame="1ms">
//!     <PartitionTable><Partition id="0" name="pub"/></PartitionTable>
//!     <Schedule><Slot id="0" partition="0" start="0us" duration="400us"/></Schedule>
//!   </SystemDescription>"#).unwrap();
//! assert_eq!(cfg.plan.major_frame.as_nanos(), 1_000_000);
//! assert!(validate(&cfg).is_empty());
//! ```

mod validate;
mod xml;

use std::fmt;

use thiserror::Error;

use crate::time::Duration;

pub use validate::{transition_gap, validate, Finding, FindingCode, Severity, ValidationReport};
pub use xml::{parse_config, to_xml};

pub type PartitionId = u32;
pub type SlotId = u32;

/// Index of a channel in [`SystemConfig::channels`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub usize);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Contiguous physical memory owned by one partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryArea {
    pub start: u64,
    pub size: u64,
}

impl MemoryArea {
    /// Exclusive end address, `None` if `start + size` overflows.
    pub fn end(&self) -> Option<u64> {
        self.start.checked_add(self.size)
    }

    pub fn overlaps(&self, other: &MemoryArea) -> bool {
        match (self.end(), other.end()) {
            (Some(a_end), Some(b_end)) => self.start < b_end && other.start < a_end,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub id: PartitionId,
    pub name: String,
    pub memory_areas: Vec<MemoryArea>,
}

/// A window `[start, start + duration)` inside the major frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleSlot {
    pub slot_id: SlotId,
    pub partition_id: PartitionId,
    pub start: Duration,
    pub duration: Duration,
}

impl ScheduleSlot {
    pub fn end(&self) -> Duration {
        self.start + self.duration
    }

    pub fn overlaps(&self, other: &ScheduleSlot) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulePlan {
    pub major_frame: Duration,
    /// Ordered by `start`.
    pub slots: Vec<ScheduleSlot>,
}

impl SchedulePlan {
    pub fn slot(&self, id: SlotId) -> Option<&ScheduleSlot> {
        self.slots.iter().find(|s| s.slot_id == id)
    }

    pub fn slots_of(&self, partition: PartitionId) -> impl Iterator<Item = &ScheduleSlot> {
        self.slots
            .iter()
            .filter(move |s| s.partition_id == partition)
    }

    /// Slot (if any) whose window contains the frame offset `offset`.
    pub fn slot_at(&self, offset: Duration) -> Option<&ScheduleSlot> {
        self.slots
            .iter()
            .find(|s| s.start <= offset && offset < s.end())
    }

    /// Sorts the slots by start offset, then id.
    pub fn normalize(&mut self) {
        self.slots.sort_by_key(|s| (s.start, s.slot_id));
    }
}

/// One end of a channel: a named port on a partition.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub partition: PartitionId,
    pub port: String,
}

impl PortRef {
    pub fn new(partition: PartitionId, port: impl Into<String>) -> Self {
        PortRef {
            partition,
            port: port.into(),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.partition, self.port)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    /// Last-value semantics; a read is valid while the message is no older
    /// than `refresh_period`.
    Sampling { refresh_period: Duration },
    /// Bounded FIFO holding at most `capacity` messages.
    Queuing { capacity: u32 },
}

impl ChannelKind {
    pub fn is_sampling(&self) -> bool {
        matches!(self, ChannelKind::Sampling { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub source: PortRef,
    pub destinations: Vec<PortRef>,
    pub max_message_size: u64,
}

/// Per-message transport cost charged by the hypervisor:
/// `fixed + per_byte * size`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CopyCost {
    pub fixed: Duration,
    pub per_byte: Duration,
}

impl CopyCost {
    pub fn new(fixed: Duration, per_byte: Duration) -> Self {
        CopyCost { fixed, per_byte }
    }

    pub fn cost(&self, size: u64) -> Duration {
        self.fixed + self.per_byte * size
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemConfig {
    pub partitions: Vec<PartitionSpec>,
    pub plan: SchedulePlan,
    pub channels: Vec<ChannelSpec>,
    pub copy_cost: CopyCost,
}

impl SystemConfig {
    pub fn partition(&self, id: PartitionId) -> Option<&PartitionSpec> {
        self.partitions.iter().find(|p| p.id == id)
    }

    pub fn partition_by_name(&self, name: &str) -> Option<&PartitionSpec> {
        self.partitions.iter().find(|p| p.name == name)
    }

    pub fn channel(&self, id: ChannelId) -> Option<&ChannelSpec> {
        self.channels.get(id.0)
    }

    /// Channel whose source or one of whose destinations is `port` on
    /// `partition`.
    pub fn find_port(&self, partition: PartitionId, port: &str) -> Option<ChannelId> {
        self.channels
            .iter()
            .position(|c| {
                (c.source.partition == partition && c.source.port == port)
                    || c.destinations
                        .iter()
                        .any(|d| d.partition == partition && d.port == port)
            })
            .map(ChannelId)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("malformed XML: {0}")]
    Syntax(String),
    #[error("schema error at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("range error at {location}: {message}")]
    Range { location: String, message: String },
    #[error("unknown slot {0}")]
    UnknownSlot(SlotId),
}
