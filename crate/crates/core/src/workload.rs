//! Scripted partition applications.
//!
//! A script is a list of actions executed one per `APP_ACTION` event while the
//! owning partition's slot is active. `COMPUTE` advances the local clock; port
//! actions cost the configured API call cost (plus the copy cost for data
//! copied out of a channel on a successful receive or read); `MARK` is free.
//!
//! A compute that does not fit in the rest of the slot raises a
//! `SLOT_OVERRUN`, is cut at the slot end, and its remainder carries over to
//! the partition's next slot.
//!
//! Script text has one action per line:
//!
//! ```text
//! compute 100us
//! send out 64        # or: send out payload
//! recv in
//! read in
//! mark tx
//! ```

use std::fmt;

use thiserror::Error;

use crate::channels::{payload_checksum, Message, PortError, PortOp};
use crate::config::{ChannelId, ChannelKind, PartitionId, SystemConfig};
use crate::health::{detect_overrun, HealthEvent, HealthEventKind};
use crate::scheduler::{ActiveSlot, EventKind, PartitionState, Payload, SimState, TraceRecord};
use crate::time::Duration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScriptMode {
    /// Run the actions once, then idle.
    #[default]
    Once,
    /// Restart from the first action at each slot start once finished.
    RepeatEachSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendSize {
    Bytes(u64),
    /// The scenario's current payload size.
    Payload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Compute(Duration),
    Send { channel: ChannelId, size: SendSize },
    Receive { channel: ChannelId },
    Read { channel: ChannelId },
    Mark(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppScript {
    pub partition: PartitionId,
    pub actions: Vec<Action>,
    pub mode: ScriptMode,
}

impl AppScript {
    pub fn new(partition: PartitionId, mode: ScriptMode, actions: Vec<Action>) -> Self {
        AppScript {
            partition,
            actions,
            mode,
        }
    }

    /// Checks that every port action uses a port owned by this partition in
    /// the right direction.
    pub fn check_ports(&self, config: &SystemConfig) -> Vec<String> {
        let mut problems = Vec::new();
        for (i, action) in self.actions.iter().enumerate() {
            let (channel, outgoing) = match action {
                Action::Send { channel, .. } => (*channel, true),
                Action::Receive { channel } | Action::Read { channel } => (*channel, false),
                _ => continue,
            };
            let Some(spec) = config.channel(channel) else {
                problems.push(format!("action {i}: no channel {channel}"));
                continue;
            };
            let owned = if outgoing {
                spec.source.partition == self.partition
            } else {
                spec.destinations
                    .iter()
                    .any(|d| d.partition == self.partition)
            };
            if !owned {
                problems.push(format!(
                    "action {i}: channel {channel} is not {} of partition {}",
                    if outgoing { "an output" } else { "an input" },
                    self.partition
                ));
            }
        }
        problems
    }
}

/// Execution progress of one script.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppCursor {
    pub index: usize,
    /// Unfinished compute time carried into the next slot after an overrun.
    pub carry: Duration,
    /// Total compute time actually executed.
    pub compute_executed: Duration,
    pub received: Vec<Message>,
}

impl AppCursor {
    fn finished(&self, script: &AppScript) -> bool {
        self.carry.is_zero() && self.index >= script.actions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Compute(d) => write!(f, "compute {d}"),
            Action::Send {
                channel,
                size: SendSize::Bytes(n),
            } => write!(f, "send #{channel} {n}"),
            Action::Send {
                channel,
                size: SendSize::Payload,
            } => write!(f, "send #{channel} payload"),
            Action::Receive { channel } => write!(f, "recv #{channel}"),
            Action::Read { channel } => write!(f, "read #{channel}"),
            Action::Mark(label) => write!(f, "mark {label}"),
        }
    }
}

/// Parses script text for `partition`, resolving port names against the
/// channels of `config`.
pub fn parse_script(
    text: &str,
    partition: PartitionId,
    mode: ScriptMode,
    config: &SystemConfig,
) -> Result<AppScript, ScriptError> {
    let mut actions = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let err = |message: String| ScriptError { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let action = match words.as_slice() {
            ["compute", d] => Action::Compute(d.parse().map_err(|e| err(format!("{e}")))?),
            ["send", port, size] => {
                let channel = resolve_port(config, partition, port, true).map_err(err)?;
                let size = match *size {
                    "payload" => SendSize::Payload,
                    n => SendSize::Bytes(
                        n.parse()
                            .map_err(|_| err(format!("invalid payload size '{n}'")))?,
                    ),
                };
                Action::Send { channel, size }
            }
            ["recv", port] => Action::Receive {
                channel: resolve_port(config, partition, port, false).map_err(err)?,
            },
            ["read", port] => {
                let channel = resolve_port(config, partition, port, false).map_err(err)?;
                if !config.channels[channel.0].kind.is_sampling() {
                    return Err(err(format!(
                        "'read' needs a sampling port, '{port}' is queuing"
                    )));
                }
                Action::Read { channel }
            }
            ["mark", label] => {
                if label.contains(',') {
                    return Err(err("mark labels may not contain ','".into()));
                }
                Action::Mark(label.to_string())
            }
            _ => return Err(err(format!("cannot parse action '{content}'"))),
        };
        actions.push(action);
    }
    Ok(AppScript::new(partition, mode, actions))
}

fn resolve_port(
    config: &SystemConfig,
    partition: PartitionId,
    port: &str,
    outgoing: bool,
) -> Result<ChannelId, String> {
    let found = config.channels.iter().position(|c| {
        if outgoing {
            c.source.partition == partition && c.source.port == port
        } else {
            c.destinations
                .iter()
                .any(|d| d.partition == partition && d.port == port)
        }
    });
    found.map(ChannelId).ok_or_else(|| {
        format!(
            "partition {partition} has no {} port '{port}'",
            if outgoing { "output" } else { "input" }
        )
    })
}

impl SimState {
    /// Starts (or resumes) the partition's script at the beginning of its slot.
    pub(crate) fn dispatch_slot(&mut self, partition: PartitionId) {
        let Some((script, cursor)) = self.scripts.get_mut(&partition) else {
            return;
        };
        if script.mode == ScriptMode::RepeatEachSlot && cursor.finished(script) {
            cursor.index = 0;
        }
        if !cursor.finished(script) {
            let now = self.now;
            self.schedule(now, EventKind::AppAction, Some(partition), Payload::None);
        }
    }

    /// Runs the next action of `partition`'s script at the current time.
    pub(crate) fn execute_action(&mut self, partition: PartitionId) {
        let active = match self.active {
            Some(a) if a.partition == partition => a,
            _ => return,
        };
        if self.partition_state(partition) != Some(PartitionState::Normal) {
            return;
        }
        let Some((script, cursor)) = self.scripts.get_mut(&partition) else {
            return;
        };
        if !cursor.carry.is_zero() {
            let carry = cursor.carry;
            self.run_compute(partition, carry, active);
            return;
        }
        let Some(action) = script.actions.get(cursor.index).cloned() else {
            return;
        };
        cursor.index += 1;

        let now = self.now;
        match action {
            Action::Compute(d) => self.run_compute(partition, d, active),
            Action::Send { channel, size } => {
                let size = match size {
                    SendSize::Bytes(n) => n,
                    SendSize::Payload => self.params.payload_size,
                };
                let sampling = self.ports.spec(channel).map(|s| s.kind.is_sampling());
                let (op, result) = match sampling {
                    Some(true) => (
                        PortOp::Write,
                        self.ports.sampling_write(channel, partition, size, now),
                    ),
                    Some(false) => (
                        PortOp::Send,
                        self.ports.queuing_send(channel, partition, size, now),
                    ),
                    None => (PortOp::Send, Err(PortError::UnknownChannel)),
                };
                let label = result.as_ref().map(|_| "OK").unwrap_or_else(|e| e.label());
                self.record_port_op(op, channel, partition, size, label);
                self.after_port_op(partition, result.err(), Duration::ZERO, active);
            }
            Action::Receive { channel } | Action::Read { channel } => {
                let is_read = matches!(action, Action::Read { .. });
                let kind = self.ports.spec(channel).map(|s| s.kind);
                let (op, result) = match kind {
                    Some(ChannelKind::Sampling { .. }) => (
                        PortOp::Read,
                        self.ports
                            .sampling_read(channel, partition, now)
                            .map(|s| (s.message, s.valid)),
                    ),
                    Some(ChannelKind::Queuing { .. }) if !is_read => (
                        PortOp::Receive,
                        self.ports
                            .queuing_receive(channel, partition, now)
                            .map(|m| (m, true)),
                    ),
                    Some(ChannelKind::Queuing { .. }) => (PortOp::Read, Err(PortError::WrongKind)),
                    None => (PortOp::Receive, Err(PortError::UnknownChannel)),
                };
                match result {
                    Ok((msg, valid)) => {
                        let intact = msg.checksum
                            == payload_checksum(channel, msg.source, msg.seq, msg.size);
                        let label = match (intact, valid) {
                            (false, _) => "CORRUPT",
                            (true, true) => "OK",
                            (true, false) => "STALE",
                        };
                        self.record_port_op(op, channel, partition, msg.size, label);
                        let copy = self.ports.copy_cost().cost(msg.size);
                        if let Some((_, cursor)) = self.scripts.get_mut(&partition) {
                            cursor.received.push(msg);
                        }
                        self.after_port_op(partition, None, copy, active);
                    }
                    Err(e) => {
                        self.record_port_op(op, channel, partition, 0, e.label());
                        self.after_port_op(partition, Some(e), Duration::ZERO, active);
                    }
                }
            }
            Action::Mark(label) => {
                self.trace.push(TraceRecord::Mark {
                    time: now,
                    partition,
                    label,
                });
                self.continue_at(partition, now, active);
            }
        }
    }

    fn after_port_op(
        &mut self,
        partition: PartitionId,
        error: Option<PortError>,
        extra: Duration,
        active: ActiveSlot,
    ) {
        if error == Some(PortError::NotOwner) {
            let fault = HealthEvent::fault(
                self.now,
                HealthEventKind::MemoryViolation,
                partition,
                "port access outside partition",
            );
            self.raise(fault);
        }
        let next = self.now + self.params.api_call_cost + extra;
        self.continue_at(partition, next, active);
    }

    fn run_compute(&mut self, partition: PartitionId, demanded: Duration, active: ActiveSlot) {
        let now = self.now;
        let remaining = active.end - now;
        let overrun = detect_overrun(now, partition, demanded, remaining);
        let (_, cursor) = self.scripts.get_mut(&partition).expect("script exists");
        cursor.compute_executed += demanded.min(remaining);
        match overrun {
            Some(event) => {
                cursor.carry = event.overrun_amount;
                self.raise(event);
            }
            None => {
                cursor.carry = Duration::ZERO;
                self.continue_at(partition, now + demanded, active);
            }
        }
    }

    /// Schedules the next action at `at` if it still falls inside the slot;
    /// otherwise the script resumes at the partition's next slot start.
    fn continue_at(&mut self, partition: PartitionId, at: Duration, active: ActiveSlot) {
        if at >= active.end || self.partition_state(partition) != Some(PartitionState::Normal) {
            return;
        }
        let Some((script, cursor)) = self.scripts.get(&partition) else {
            return;
        };
        if !cursor.finished(script) {
            self.schedule(at, EventKind::AppAction, Some(partition), Payload::None);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        ChannelSpec, CopyCost, PartitionSpec, PortRef, SchedulePlan, ScheduleSlot,
    };
    use crate::scheduler::SimParams;

    fn us(v: u64) -> Duration {
        Duration::from_micros(v)
    }

    fn config() -> SystemConfig {
        SystemConfig {
            partitions: (0..2)
                .map(|id| PartitionSpec {
                    id,
                    name: format!("p{id}"),
                    memory_areas: vec![],
                })
                .collect(),
            plan: SchedulePlan {
                major_frame: us(1000),
                slots: vec![
                    ScheduleSlot {
                        slot_id: 0,
                        partition_id: 0,
                        start: us(0),
                        duration: us(400),
                    },
                    ScheduleSlot {
                        slot_id: 1,
                        partition_id: 1,
                        start: us(500),
                        duration: us(400),
                    },
                ],
            },
            channels: vec![
                ChannelSpec {
                    kind: ChannelKind::Queuing { capacity: 4 },
                    source: PortRef::new(0, "out"),
                    destinations: vec![PortRef::new(1, "in")],
                    max_message_size: 1024,
                },
                ChannelSpec {
                    kind: ChannelKind::Sampling {
                        refresh_period: us(2000),
                    },
                    source: PortRef::new(0, "state"),
                    destinations: vec![PortRef::new(1, "state")],
                    max_message_size: 64,
                },
            ],
            copy_cost: CopyCost::default(),
        }
    }

    fn marks(state: &SimState) -> Vec<(PartitionId, String, Duration)> {
        state
            .trace()
            .iter()
            .filter_map(|r| match r {
                TraceRecord::Mark {
                    time,
                    partition,
                    label,
                } => Some((*partition, label.clone(), *time)),
                _ => None,
            })
            .collect()
    }

    fn run(scripts: Vec<AppScript>, params: SimParams, frames: u64) -> SimState {
        let mut s = SimState::new(config())
            .with_scripts(scripts)
            .with_params(params);
        s.boot().unwrap();
        s.run_frames(frames);
        s
    }

    #[test]
    fn parse_grammar() {
        let cfg = config();
        let text =
            "compute 100us\nsend out 64\n# comment\n\nmark tx  # trailing\nsend state payload";
        let s = parse_script(text, 0, ScriptMode::Once, &cfg).unwrap();
        assert_eq!(
            s.actions,
            vec![
                Action::Compute(us(100)),
                Action::Send {
                    channel: ChannelId(0),
                    size: SendSize::Bytes(64)
                },
                Action::Mark("tx".into()),
                Action::Send {
                    channel: ChannelId(1),
                    size: SendSize::Payload
                },
            ]
        );
        let s = parse_script("recv in\nread state", 1, ScriptMode::Once, &cfg).unwrap();
        assert_eq!(s.actions.len(), 2);
    }

    #[test]
    fn parse_errors() {
        let cfg = config();
        let e = parse_script("compute 1us\nsend in 64", 0, ScriptMode::Once, &cfg).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse_script("recv out", 0, ScriptMode::Once, &cfg).is_err());
        assert!(parse_script("read in", 1, ScriptMode::Once, &cfg).is_err());
        assert!(parse_script("jump 3", 0, ScriptMode::Once, &cfg).is_err());
        assert!(parse_script("compute 3", 0, ScriptMode::Once, &cfg).is_err());
        assert!(parse_script("mark a,b", 0, ScriptMode::Once, &cfg).is_err());
    }

    #[test]
    fn offsets_add_up() {
        let script = AppScript::new(
            0,
            ScriptMode::Once,
            vec![
                Action::Compute(us(100)),
                Action::Send {
                    channel: ChannelId(0),
                    size: SendSize::Bytes(64),
                },
                Action::Mark("tx".into()),
            ],
        );
        for api in [Duration::ZERO, us(3)] {
            let params = SimParams {
                api_call_cost: api,
                payload_size: 0,
            };
            let s = run(vec![script.clone()], params, 1);
            assert_eq!(marks(&s), vec![(0, "tx".to_string(), us(100) + api)]);
            let sent = s
                .ports()
                .queuing(ChannelId(0))
                .unwrap()
                .messages()
                .next()
                .unwrap();
            assert_eq!(sent.written_at, us(100));
        }
    }

    #[test]
    fn overrun_carries_over() {
        let script = AppScript::new(
            0,
            ScriptMode::Once,
            vec![Action::Compute(us(450)), Action::Mark("done".into())],
        );
        let s = run(vec![script], SimParams::default(), 3);
        let overruns: Vec<_> = s
            .trace()
            .iter()
            .filter_map(|r| match r {
                TraceRecord::HmNotify { time, overrun, .. } => Some((*time, *overrun)),
                _ => None,
            })
            .collect();
        assert_eq!(overruns, vec![(us(0), us(50))]);
        // 50us of carried compute at the start of frame 1
        assert_eq!(marks(&s), vec![(0, "done".to_string(), us(1050))]);
        let cursor = s.cursor(0).unwrap();
        assert_eq!(cursor.carry, Duration::ZERO);
        assert_eq!(cursor.compute_executed, us(450));
    }

    #[test]
    fn repeat_mode_restarts_each_slot() {
        let script = AppScript::new(
            1,
            ScriptMode::RepeatEachSlot,
            vec![Action::Compute(us(10)), Action::Mark("tick".into())],
        );
        let s = run(vec![script], SimParams::default(), 3);
        let times: Vec<_> = marks(&s).into_iter().map(|(_, _, t)| t).collect();
        assert_eq!(times, vec![us(510), us(1510), us(2510)]);
    }

    #[test]
    fn receive_on_empty_does_not_block() {
        let script = AppScript::new(
            1,
            ScriptMode::Once,
            vec![
                Action::Receive {
                    channel: ChannelId(0),
                },
                Action::Mark("after".into()),
            ],
        );
        let s = run(vec![script], SimParams::default(), 1);
        assert_eq!(marks(&s), vec![(1, "after".to_string(), us(500))]);
        assert!(s.trace().iter().any(|r| matches!(
            r,
            TraceRecord::PortOp {
                result: "EMPTY",
                ..
            }
        )));
    }

    #[test]
    fn foreign_port_raises_memory_violation() {
        // partition 1 writes to partition 0's output
        let script = AppScript::new(
            1,
            ScriptMode::Once,
            vec![
                Action::Send {
                    channel: ChannelId(0),
                    size: SendSize::Bytes(8),
                },
                Action::Mark("unreached".into()),
            ],
        );
        assert_eq!(script.check_ports(&config()).len(), 1);
        let s = run(vec![script], SimParams::default(), 2);
        assert!(s.trace().iter().any(|r| matches!(
            r,
            TraceRecord::PortOp {
                result: "NOT_OWNER",
                ..
            }
        )));
        assert!(s.trace().iter().any(|r| matches!(
            r,
            TraceRecord::HmNotify {
                kind: HealthEventKind::MemoryViolation,
                ..
            }
        )));
        assert_eq!(s.partition_state(1), Some(PartitionState::Suspended));
        assert!(marks(&s).is_empty());
        assert!(s.ports().queuing(ChannelId(0)).unwrap().is_empty());
    }

    #[test]
    fn receive_pays_copy_cost() {
        let mut cfg = config();
        cfg.copy_cost = CopyCost::new(us(5), Duration::ZERO);
        let producer = AppScript::new(
            0,
            ScriptMode::Once,
            vec![Action::Send {
                channel: ChannelId(0),
                size: SendSize::Payload,
            }],
        );
        let consumer = AppScript::new(
            1,
            ScriptMode::Once,
            vec![
                Action::Receive {
                    channel: ChannelId(0),
                },
                Action::Mark("rx".into()),
            ],
        );
        let mut s = SimState::new(cfg)
            .with_scripts([producer, consumer])
            .with_params(SimParams {
                api_call_cost: Duration::ZERO,
                payload_size: 100,
            });
        s.boot().unwrap();
        s.run_frames(1);
        assert_eq!(marks(&s), vec![(1, "rx".to_string(), us(505))]);
        assert_eq!(s.cursor(1).unwrap().received[0].size, 100);
    }
}
