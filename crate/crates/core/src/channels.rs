//! Sampling and queuing port state.
//!
//! Payload bytes are never stored. A [`Message`] carries its size and a
//! checksum derived from `(channel, source, seq, size)` so a receiver can
//! check it got the message it expected, which keeps multi-megabyte payloads
//! free to simulate.
//!
//! Every write or send becomes visible to readers only at
//! `written_at + copy_cost(size)`.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::config::{ChannelId, ChannelKind, ChannelSpec, CopyCost, PartitionId, SystemConfig};
use crate::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub size: u64,
    pub checksum: u64,
    pub written_at: Duration,
    pub visible_at: Duration,
    pub source: PartitionId,
    pub seq: u64,
}

impl Message {
    fn order_key(&self) -> (Duration, u64) {
        (self.written_at, self.seq)
    }
}

/// Deterministic stand-in for the payload contents.
pub fn payload_checksum(channel: ChannelId, source: PartitionId, seq: u64, size: u64) -> u64 {
    // splitmix64 finalizer over a simple combination of the inputs
    let mut z = (channel.0 as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((source as u64) << 32)
        .wrapping_add(seq.rotate_left(17))
        ^ size;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("no such channel")]
    UnknownChannel,
    #[error("operation does not match the channel kind")]
    WrongKind,
    #[error("caller partition does not own this port")]
    NotOwner,
    #[error("message of {size} bytes exceeds limit of {max}")]
    TooLarge { size: u64, max: u64 },
    #[error("queue is full")]
    Full,
    #[error("no message available")]
    Empty,
}

impl PortError {
    /// Result label used in trace records.
    pub fn label(&self) -> &'static str {
        match self {
            PortError::UnknownChannel => "UNKNOWN_PORT",
            PortError::WrongKind => "WRONG_KIND",
            PortError::NotOwner => "NOT_OWNER",
            PortError::TooLarge { .. } => "TOO_LARGE",
            PortError::Full => "FULL",
            PortError::Empty => "EMPTY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortOp {
    Write,
    Read,
    Send,
    Receive,
}

impl fmt::Display for PortOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PortOp::Write => "WRITE",
            PortOp::Read => "READ",
            PortOp::Send => "SEND",
            PortOp::Receive => "RECEIVE",
        })
    }
}

/// Result of a sampling read: the latest visible message and whether it is
/// still within the refresh period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub message: Message,
    pub valid: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SamplingPortState {
    last: Option<Message>,
    visible: Option<Message>,
    in_flight: Vec<Message>,
}

impl SamplingPortState {
    /// Most recent write, whether or not it is visible yet.
    pub fn last(&self) -> Option<&Message> {
        self.last.as_ref()
    }

    fn promote(&mut self, now: Duration) {
        let (ready, pending): (Vec<_>, Vec<_>) =
            self.in_flight.drain(..).partition(|m| m.visible_at <= now);
        self.in_flight = pending;
        for m in ready {
            if self
                .visible
                .as_ref()
                .is_none_or(|v| v.order_key() < m.order_key())
            {
                self.visible = Some(m);
            }
        }
    }

    /// Latest message (by write time, then sequence) visible at `now`.
    pub fn visible_at(&self, now: Duration) -> Option<&Message> {
        self.in_flight
            .iter()
            .filter(|m| m.visible_at <= now)
            .chain(self.visible.iter())
            .max_by_key(|m| m.order_key())
    }
}

#[derive(Debug, Clone)]
pub struct QueuingPortState {
    fifo: VecDeque<Message>,
    capacity: usize,
}

impl QueuingPortState {
    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.fifo.iter()
    }
}

#[derive(Debug, Clone)]
pub enum PortState {
    Sampling(SamplingPortState),
    Queuing(QueuingPortState),
}

/// All channel state of a running system.
#[derive(Debug, Clone)]
pub struct PortTable {
    specs: Vec<ChannelSpec>,
    states: Vec<PortState>,
    next_seq: Vec<u64>,
    copy_cost: CopyCost,
}

impl PortTable {
    pub fn new(config: &SystemConfig) -> Self {
        Self::from_specs(config.channels.clone(), config.copy_cost)
    }

    pub fn from_specs(specs: Vec<ChannelSpec>, copy_cost: CopyCost) -> Self {
        let states = specs
            .iter()
            .map(|c| match c.kind {
                ChannelKind::Sampling { .. } => PortState::Sampling(SamplingPortState::default()),
                ChannelKind::Queuing { capacity } => PortState::Queuing(QueuingPortState {
                    fifo: VecDeque::new(),
                    capacity: capacity as usize,
                }),
            })
            .collect();
        PortTable {
            next_seq: vec![0; specs.len()],
            specs,
            states,
            copy_cost,
        }
    }

    pub fn copy_cost(&self) -> CopyCost {
        self.copy_cost
    }

    pub fn spec(&self, channel: ChannelId) -> Option<&ChannelSpec> {
        self.specs.get(channel.0)
    }

    pub fn state(&self, channel: ChannelId) -> Option<&PortState> {
        self.states.get(channel.0)
    }

    pub fn sampling(&self, channel: ChannelId) -> Option<&SamplingPortState> {
        match self.states.get(channel.0) {
            Some(PortState::Sampling(s)) => Some(s),
            _ => None,
        }
    }

    pub fn queuing(&self, channel: ChannelId) -> Option<&QueuingPortState> {
        match self.states.get(channel.0) {
            Some(PortState::Queuing(q)) => Some(q),
            _ => None,
        }
    }

    fn check_source(
        &self,
        channel: ChannelId,
        caller: PartitionId,
        size: u64,
        sampling: bool,
    ) -> Result<(), PortError> {
        let spec = self.specs.get(channel.0).ok_or(PortError::UnknownChannel)?;
        if spec.kind.is_sampling() != sampling {
            return Err(PortError::WrongKind);
        }
        if spec.source.partition != caller {
            return Err(PortError::NotOwner);
        }
        if size > spec.max_message_size {
            return Err(PortError::TooLarge {
                size,
                max: spec.max_message_size,
            });
        }
        Ok(())
    }

    fn check_destination(
        &self,
        channel: ChannelId,
        caller: PartitionId,
        sampling: bool,
    ) -> Result<&ChannelSpec, PortError> {
        let spec = self.specs.get(channel.0).ok_or(PortError::UnknownChannel)?;
        if spec.kind.is_sampling() != sampling {
            return Err(PortError::WrongKind);
        }
        if !spec.destinations.iter().any(|d| d.partition == caller) {
            return Err(PortError::NotOwner);
        }
        Ok(spec)
    }

    fn make_message(
        &mut self,
        channel: ChannelId,
        source: PartitionId,
        size: u64,
        now: Duration,
    ) -> Message {
        let seq = self.next_seq[channel.0];
        self.next_seq[channel.0] += 1;
        Message {
            size,
            checksum: payload_checksum(channel, source, seq, size),
            written_at: now,
            visible_at: now + self.copy_cost.cost(size),
            source,
            seq,
        }
    }

    /// Overwrites the sampling port's value.
    pub fn sampling_write(
        &mut self,
        channel: ChannelId,
        caller: PartitionId,
        size: u64,
        now: Duration,
    ) -> Result<Message, PortError> {
        self.check_source(channel, caller, size, true)?;
        let msg = self.make_message(channel, caller, size, now);
        let PortState::Sampling(port) = &mut self.states[channel.0] else {
            unreachable!("kind checked")
        };
        port.promote(now);
        port.last = Some(msg.clone());
        port.in_flight.push(msg.clone());
        Ok(msg)
    }

    /// Latest visible value plus its validity against the refresh period
    /// (closed bound: age == refresh period is still valid).
    pub fn sampling_read(
        &self,
        channel: ChannelId,
        caller: PartitionId,
        now: Duration,
    ) -> Result<Sample, PortError> {
        let spec = self.check_destination(channel, caller, true)?;
        let ChannelKind::Sampling { refresh_period } = spec.kind else {
            unreachable!("kind checked")
        };
        let PortState::Sampling(port) = &self.states[channel.0] else {
            unreachable!("kind checked")
        };
        let message = port.visible_at(now).ok_or(PortError::Empty)?.clone();
        let valid = now.saturating_sub(message.written_at) <= refresh_period;
        Ok(Sample { message, valid })
    }

    /// Appends to the queue, or fails with [`PortError::Full`] leaving the
    /// queue untouched.
    pub fn queuing_send(
        &mut self,
        channel: ChannelId,
        caller: PartitionId,
        size: u64,
        now: Duration,
    ) -> Result<Message, PortError> {
        self.check_source(channel, caller, size, false)?;
        match &self.states[channel.0] {
            PortState::Queuing(q) if q.fifo.len() >= q.capacity => return Err(PortError::Full),
            _ => {}
        }
        let msg = self.make_message(channel, caller, size, now);
        let PortState::Queuing(port) = &mut self.states[channel.0] else {
            unreachable!("kind checked")
        };
        port.fifo.push_back(msg.clone());
        Ok(msg)
    }

    /// Removes the head of the queue if it is visible at `now`. A head still
    /// in transit blocks later messages so FIFO order is never broken.
    pub fn queuing_receive(
        &mut self,
        channel: ChannelId,
        caller: PartitionId,
        now: Duration,
    ) -> Result<Message, PortError> {
        self.check_destination(channel, caller, false)?;
        let PortState::Queuing(port) = &mut self.states[channel.0] else {
            unreachable!("kind checked")
        };
        match port.fifo.front() {
            Some(head) if head.visible_at <= now => Ok(port.fifo.pop_front().expect("non-empty")),
            _ => Err(PortError::Empty),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PortRef;

    fn us(v: u64) -> Duration {
        Duration::from_micros(v)
    }

    fn sampling_table(cost: CopyCost) -> PortTable {
        PortTable::from_specs(
            vec![ChannelSpec {
                kind: ChannelKind::Sampling {
                    refresh_period: Duration::from_millis(2),
                },
                source: PortRef::new(0, "out"),
                destinations: vec![PortRef::new(1, "in"), PortRef::new(2, "in")],
                max_message_size: 64,
            }],
            cost,
        )
    }

    fn queuing_table(capacity: u32) -> PortTable {
        PortTable::from_specs(
            vec![ChannelSpec {
                kind: ChannelKind::Queuing { capacity },
                source: PortRef::new(0, "out"),
                destinations: vec![PortRef::new(1, "in")],
                max_message_size: 1024,
            }],
            CopyCost::default(),
        )
    }

    const CH: ChannelId = ChannelId(0);

    #[test]
    fn sampling_overwrite() {
        let mut t = sampling_table(CopyCost::default());
        t.sampling_write(CH, 0, 8, us(1)).unwrap();
        let second = t.sampling_write(CH, 0, 16, us(2)).unwrap();
        let read = t.sampling_read(CH, 1, us(3)).unwrap();
        assert_eq!(read.message, second);
        assert!(read.valid);
        // every destination sees the same value
        assert_eq!(t.sampling_read(CH, 2, us(3)).unwrap().message, second);
    }

    #[test]
    fn sampling_empty_and_not_owner() {
        let mut t = sampling_table(CopyCost::default());
        assert_eq!(t.sampling_read(CH, 1, us(0)), Err(PortError::Empty));
        assert_eq!(t.sampling_write(CH, 1, 8, us(0)), Err(PortError::NotOwner));
        assert_eq!(t.sampling_read(CH, 0, us(0)), Err(PortError::NotOwner));
        assert!(t.sampling(CH).unwrap().last().is_none());
        assert_eq!(
            t.sampling_write(CH, 0, 65, us(0)),
            Err(PortError::TooLarge { size: 65, max: 64 })
        );
        assert_eq!(t.queuing_send(CH, 0, 8, us(0)), Err(PortError::WrongKind));
    }

    #[test]
    fn sampling_validity_is_closed_bound() {
        let mut t = sampling_table(CopyCost::default());
        t.sampling_write(CH, 0, 8, us(0)).unwrap();
        assert!(
            t.sampling_read(CH, 1, Duration::from_millis(1))
                .unwrap()
                .valid
        );
        assert!(
            t.sampling_read(CH, 1, Duration::from_millis(2))
                .unwrap()
                .valid
        );
        let stale = t
            .sampling_read(CH, 1, Duration::from_millis(2) + Duration::from_nanos(1))
            .unwrap();
        assert!(!stale.valid);
        let stale = t.sampling_read(CH, 1, Duration::from_millis(3)).unwrap();
        assert!(!stale.valid);
        assert_eq!(stale.message.size, 8);
    }

    #[test]
    fn copy_cost_delays_visibility() {
        let cost = CopyCost::new(Duration::from_nanos(5), Duration::from_nanos(1));
        let mut t = sampling_table(cost);
        let t0 = us(10);
        t.sampling_write(CH, 0, 64, t0).unwrap();
        let ready = t0 + Duration::from_nanos(64 + 5);
        assert_eq!(
            t.sampling_read(CH, 1, ready - Duration::from_nanos(1)),
            Err(PortError::Empty)
        );
        assert_eq!(t.sampling_read(CH, 1, ready).unwrap().message.size, 64);
    }

    #[test]
    fn copy_cost_step_through_without_fixed_part() {
        let cost = CopyCost::new(Duration::ZERO, Duration::from_nanos(1));
        let mut t = sampling_table(cost);
        let t0 = us(1);
        t.sampling_write(CH, 0, 64, t0).unwrap();
        assert!(t
            .sampling_read(CH, 1, t0 + Duration::from_nanos(63))
            .is_err());
        assert!(t
            .sampling_read(CH, 1, t0 + Duration::from_nanos(64))
            .is_ok());
    }

    #[test]
    fn older_visible_value_shown_while_newer_in_transit() {
        let cost = CopyCost::new(Duration::ZERO, Duration::from_nanos(1));
        let mut t = sampling_table(cost);
        let first = t.sampling_write(CH, 0, 1, us(0)).unwrap();
        t.sampling_write(CH, 0, 64, us(1)).unwrap();
        let seen = t
            .sampling_read(CH, 1, us(1) + Duration::from_nanos(10))
            .unwrap();
        assert_eq!(seen.message, first);
        assert_eq!(t.sampling(CH).unwrap().last().unwrap().size, 64);
    }

    #[test]
    fn queuing_capacity() {
        let mut t = queuing_table(16);
        for i in 0..16 {
            t.queuing_send(CH, 0, 8, us(i)).unwrap();
        }
        assert_eq!(t.queuing_send(CH, 0, 8, us(20)), Err(PortError::Full));
        assert_eq!(t.queuing(CH).unwrap().len(), 16);
    }

    #[test]
    fn queuing_capacity_one() {
        let mut t = queuing_table(1);
        t.queuing_send(CH, 0, 8, us(0)).unwrap();
        assert_eq!(t.queuing_send(CH, 0, 8, us(1)), Err(PortError::Full));
        t.queuing_receive(CH, 1, us(2)).unwrap();
        t.queuing_send(CH, 0, 8, us(3)).unwrap();
    }

    #[test]
    fn queuing_receive_empty_and_fifo() {
        let mut t = queuing_table(4);
        assert_eq!(t.queuing_receive(CH, 1, us(0)), Err(PortError::Empty));
        let a = t.queuing_send(CH, 0, 1, us(0)).unwrap();
        let b = t.queuing_send(CH, 0, 2, us(0)).unwrap();
        assert_eq!(t.queuing(CH).unwrap().len(), 2);
        assert_eq!(t.queuing_receive(CH, 1, us(1)).unwrap(), a);
        assert_eq!(t.queuing(CH).unwrap().len(), 1);
        assert_eq!(t.queuing_receive(CH, 0, us(1)), Err(PortError::NotOwner));
        assert_eq!(t.queuing_receive(CH, 1, us(1)).unwrap(), b);
    }

    #[test]
    fn queuing_head_of_line_in_transit() {
        let mut t = PortTable::from_specs(
            queuing_table(4).specs,
            CopyCost::new(Duration::ZERO, Duration::from_nanos(1)),
        );
        t.queuing_send(CH, 0, 100, us(0)).unwrap();
        t.queuing_send(CH, 0, 1, us(0)).unwrap();
        // the small message is visible at 1ns but waits behind the large one
        assert_eq!(
            t.queuing_receive(CH, 1, Duration::from_nanos(50)),
            Err(PortError::Empty)
        );
        assert_eq!(
            t.queuing_receive(CH, 1, Duration::from_nanos(100))
                .unwrap()
                .size,
            100
        );
    }

    #[test]
    fn checksum_identifies_message() {
        let mut t = queuing_table(4);
        let sent = t.queuing_send(CH, 0, 42, us(0)).unwrap();
        let got = t.queuing_receive(CH, 1, us(0)).unwrap();
        assert_eq!(got.checksum, payload_checksum(CH, 0, sent.seq, 42));
        assert_ne!(got.checksum, payload_checksum(CH, 0, sent.seq + 1, 42));
    }
}
