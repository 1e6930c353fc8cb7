//! Scenario files.
//!
//! A scenario is a small text file of `key = value` lines followed by optional
//! `[section]` blocks. `#` starts a comment.
//!
//! ```text
//! name = cookbook
//! mode = partitioned          # or: broker
//! system = cookbook.xml       # relative to this file
//! payload_sizes = 1, 1000000
//! repetitions = 100
//! seed = 7
//! api_call_cost = 0ns
//! frames = 2                  # or: until = 2ms
//! copy_cost = 1us             # overrides the system's copy cost
//! copy_cost_per_byte = 0ns
//! tx_mark = tx
//! rx_mark = rx
//!
//! [script P0]                 # partition name or id
//! mode = once                 # or: repeat
//! compute 100us
//! send out payload
//! mark tx
//!
//! [health]
//! SLOT_OVERRUN = LOG
//! MEMORY_VIOLATION@1 = HALT_PARTITION
//!
//! [faults]
//! 250us TRAP 1 divide by zero
//! ```
//!
//! Broker scenarios use `[topology]` and `[load]` instead of scripts:
//!
//! ```text
//! [topology]
//! subscribers = 1
//! link_base = 100us
//! link_per_byte = 8ns
//! link_jitter = 20us
//! proc_fixed = 20us
//! proc_per_byte = 1ns
//! load_factor = 4.5
//!
//! [load]
//! pair = 0.0 1.0:0.75         # relaxed cpu[:memory]  stressed cpu[:memory]
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::calibration;
use crate::config::{parse_config, validate, CopyCost, PartitionId, SystemConfig};
use crate::health::{HealthAction, HealthEvent, HealthEventKind, HealthTable};
use crate::middleware::{BrokerTopology, LoadProfile};
use crate::time::Duration;
use crate::workload::{parse_script, AppScript, ScriptMode};

use super::HarnessError;

pub const DEFAULT_PAYLOAD_SIZES: [u64; 3] = [1, 1_000_000, 6_000_000];
pub const DEFAULT_REPETITIONS: u32 = 100;
pub const DEFAULT_FRAMES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Partitioned,
    Broker,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Partitioned => "PARTITIONED",
            Mode::Broker => "BROKER",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "PARTITIONED" => Ok(Mode::Partitioned),
            "BROKER" => Ok(Mode::Broker),
            _ => Err(format!("unknown mode '{s}'")),
        }
    }
}

/// How long each partitioned repetition runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Frames(u64),
    Until(Duration),
}

impl Horizon {
    pub fn end(&self, major_frame: Duration) -> Duration {
        match *self {
            Horizon::Frames(n) => major_frame * n,
            Horizon::Until(t) => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSetup {
    pub config: SystemConfig,
    pub scripts: Vec<AppScript>,
    pub health: HealthTable,
    pub faults: Vec<HealthEvent>,
    pub api_call_cost: Duration,
    pub horizon: Horizon,
    pub tx_mark: String,
    pub rx_mark: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrokerSetup {
    pub topology: BrokerTopology,
    /// (relaxed, stressed) load profiles.
    pub load_pairs: Vec<(LoadProfile, LoadProfile)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Partitioned(PartitionedSetup),
    Broker(BrokerSetup),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub payload_sizes: Vec<u64>,
    pub repetitions: u32,
    pub seed: u64,
    pub workload: Workload,
}

impl Scenario {
    pub fn mode(&self) -> Mode {
        match self.workload {
            Workload::Partitioned(_) => Mode::Partitioned,
            Workload::Broker(_) => Mode::Broker,
        }
    }

    /// Every problem that prevents the scenario from running.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.repetitions == 0 {
            problems.push("repetitions must be at least 1".to_string());
        }
        if self.payload_sizes.is_empty() {
            problems.push("payload_sizes is empty".to_string());
        }
        if self.payload_sizes.contains(&0) {
            problems.push("payload sizes must be positive".to_string());
        }
        match &self.workload {
            Workload::Partitioned(p) => {
                problems.extend(validate(&p.config).iter().map(|f| f.to_string()));
                for script in &p.scripts {
                    if p.config.partition(script.partition).is_none() {
                        problems.push(format!("script for unknown partition {}", script.partition));
                    }
                    problems.extend(
                        script
                            .check_ports(&p.config)
                            .into_iter()
                            .map(|m| format!("script {}: {m}", script.partition)),
                    );
                }
                for f in &p.faults {
                    if p.config.partition(f.source).is_none() {
                        problems.push(format!("fault for unknown partition {}", f.source));
                    }
                }
            }
            Workload::Broker(b) => {
                if let Err(e) = b.topology.validate() {
                    problems.push(e.to_string());
                }
                if b.load_pairs.is_empty() {
                    problems.push("no load pairs".to_string());
                }
            }
        }
        problems
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        parse_scenario(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

#[derive(Debug)]
struct Section<'a> {
    header: &'a str,
    line: usize,
    lines: Vec<(usize, &'a str)>,
}

/// Parses scenario text. `base_dir` resolves a relative `system` path.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, HarnessError> {
    let mut top: Vec<(usize, &str)> = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(header) = content.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| invalid(line, "unterminated section header"))?;
            sections.push(Section {
                header: header.trim(),
                line,
                lines: Vec::new(),
            });
        } else if let Some(section) = sections.last_mut() {
            section.lines.push((line, content));
        } else {
            top.push((line, content));
        }
    }

    let mut name = None;
    let mut mode = None;
    let mut system = None;
    let mut payload_sizes = DEFAULT_PAYLOAD_SIZES.to_vec();
    let mut repetitions = DEFAULT_REPETITIONS;
    let mut seed = 0u64;
    let mut api_call_cost = Duration::ZERO;
    let mut horizon = Horizon::Frames(DEFAULT_FRAMES);
    let mut copy_fixed = None;
    let mut copy_per_byte = None;
    let mut tx_mark = "tx".to_string();
    let mut rx_mark = "rx".to_string();

    for (line, content) in &top {
        let line = *line;
        let (key, value) =
            split_kv(content).ok_or_else(|| invalid(line, "expected key = value"))?;
        match key {
            "name" => name = Some(value.to_string()),
            "mode" => mode = Some(value.parse::<Mode>().map_err(|e| invalid(line, &e))?),
            "system" => system = Some(value.to_string()),
            "payload_sizes" => {
                payload_sizes = value
                    .split(',')
                    .map(|v| parse_num::<u64>(line, v.trim()))
                    .collect::<Result<_, _>>()?
            }
            "repetitions" => repetitions = parse_num(line, value)?,
            "seed" => seed = parse_num(line, value)?,
            "api_call_cost" => api_call_cost = parse_duration(line, value)?,
            "frames" => horizon = Horizon::Frames(parse_num(line, value)?),
            "until" => horizon = Horizon::Until(parse_duration(line, value)?),
            "copy_cost" => copy_fixed = Some(parse_duration(line, value)?),
            "copy_cost_per_byte" => copy_per_byte = Some(parse_duration(line, value)?),
            "tx_mark" => tx_mark = value.to_string(),
            "rx_mark" => rx_mark = value.to_string(),
            other => return Err(invalid(line, &format!("unknown key '{other}'"))),
        }
    }

    let name = name.ok_or_else(|| invalid(0, "missing 'name'"))?;
    let mode = mode.ok_or_else(|| invalid(0, "missing 'mode'"))?;

    let workload = match mode {
        Mode::Partitioned => {
            let system = system.ok_or_else(|| invalid(0, "partitioned mode needs 'system'"))?;
            let path = base_dir.join(&system);
            let xml = std::fs::read_to_string(&path).map_err(|e| HarnessError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let mut config = parse_config(&xml)
                .map_err(|e| HarnessError::ScenarioInvalid(vec![format!("{system}: {e}")]))?;
            if copy_fixed.is_some() || copy_per_byte.is_some() {
                config.copy_cost = CopyCost::new(
                    copy_fixed.unwrap_or(config.copy_cost.fixed),
                    copy_per_byte.unwrap_or(config.copy_cost.per_byte),
                );
            }
            let mut scripts = Vec::new();
            let mut health = HealthTable::default();
            let mut faults = Vec::new();
            for section in &sections {
                let mut words = section.header.split_whitespace();
                match (words.next(), words.next(), words.next()) {
                    (Some("script"), Some(who), None) => {
                        let partition = resolve_partition(&config, who).ok_or_else(|| {
                            invalid(section.line, &format!("unknown partition '{who}'"))
                        })?;
                        scripts.push(parse_script_section(section, partition, &config)?);
                    }
                    (Some("health"), None, _) => parse_health(section, &mut health)?,
                    (Some("faults"), None, _) => {
                        for (line, content) in &section.lines {
                            faults.push(parse_fault(*line, content, &config)?);
                        }
                    }
                    _ => {
                        return Err(invalid(
                            section.line,
                            &format!(
                                "unexpected section [{}] in partitioned mode",
                                section.header
                            ),
                        ))
                    }
                }
            }
            Workload::Partitioned(PartitionedSetup {
                config,
                scripts,
                health,
                faults,
                api_call_cost,
                horizon,
                tx_mark,
                rx_mark,
            })
        }
        Mode::Broker => {
            let mut topology = calibration::default_topology();
            let mut load_pairs = Vec::new();
            for section in &sections {
                match section.header {
                    "topology" => topology = parse_topology(section)?,
                    "load" => {
                        for (line, content) in &section.lines {
                            load_pairs.push(parse_load_pair(*line, content)?);
                        }
                    }
                    other => {
                        return Err(invalid(
                            section.line,
                            &format!("unexpected section [{other}] in broker mode"),
                        ))
                    }
                }
            }
            if load_pairs.is_empty() {
                let stressed = LoadProfile::new(1.0, calibration::STRESSED_MEMORY_LOAD)
                    .expect("calibrated load in range");
                load_pairs.push((LoadProfile::IDLE, stressed));
            }
            Workload::Broker(BrokerSetup {
                topology,
                load_pairs,
            })
        }
    };

    let scenario = Scenario {
        name,
        payload_sizes,
        repetitions,
        seed,
        workload,
    };
    let problems = scenario.check();
    if problems.is_empty() {
        Ok(scenario)
    } else {
        Err(HarnessError::ScenarioInvalid(problems))
    }
}

fn invalid(line: usize, message: &str) -> HarnessError {
    let message = if line == 0 {
        message.to_string()
    } else {
        format!("line {line}: {message}")
    };
    HarnessError::ScenarioInvalid(vec![message])
}

fn split_kv(content: &str) -> Option<(&str, &str)> {
    let (k, v) = content.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn parse_num<T: FromStr>(line: usize, value: &str) -> Result<T, HarnessError> {
    value
        .parse()
        .map_err(|_| invalid(line, &format!("invalid number '{value}'")))
}

fn parse_f64(line: usize, value: &str) -> Result<f64, HarnessError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(invalid(line, &format!("invalid number '{value}'"))),
    }
}

fn parse_duration(line: usize, value: &str) -> Result<Duration, HarnessError> {
    value
        .parse()
        .map_err(|e| invalid(line, &format!("invalid duration '{value}': {e}")))
}

fn resolve_partition(config: &SystemConfig, who: &str) -> Option<PartitionId> {
    if let Some(p) = config.partition_by_name(who) {
        return Some(p.id);
    }
    who.parse()
        .ok()
        .filter(|id| config.partition(*id).is_some())
}

fn parse_script_section(
    section: &Section,
    partition: PartitionId,
    config: &SystemConfig,
) -> Result<AppScript, HarnessError> {
    let mut mode = ScriptMode::Once;
    let mut body = String::new();
    // keep line numbers aligned with the scenario file
    let mut next_line = section.line + 1;
    for (line, content) in &section.lines {
        while next_line < *line {
            body.push('\n');
            next_line += 1;
        }
        if let Some((key, value)) = split_kv(content) {
            if key != "mode" {
                return Err(invalid(*line, &format!("unknown script key '{key}'")));
            }
            mode = match value {
                "once" => ScriptMode::Once,
                "repeat" => ScriptMode::RepeatEachSlot,
                other => return Err(invalid(*line, &format!("unknown script mode '{other}'"))),
            };
        } else {
            body.push_str(content);
        }
        body.push('\n');
        next_line += 1;
    }
    parse_script(&body, partition, mode, config).map_err(|e| {
        HarnessError::ScenarioInvalid(vec![format!(
            "line {}: {}",
            section.line + e.line,
            e.message
        )])
    })
}

fn parse_health(section: &Section, table: &mut HealthTable) -> Result<(), HarnessError> {
    for (line, content) in &section.lines {
        let line = *line;
        let (key, value) =
            split_kv(content).ok_or_else(|| invalid(line, "expected KIND = ACTION"))?;
        let action: HealthAction = value.parse().map_err(|e: String| invalid(line, &e))?;
        match key.split_once('@') {
            Some((kind, pid)) => {
                let kind: HealthEventKind =
                    kind.trim().parse().map_err(|e: String| invalid(line, &e))?;
                table.set(kind, parse_num(line, pid.trim())?, action);
            }
            None => {
                let kind: HealthEventKind = key.parse().map_err(|e: String| invalid(line, &e))?;
                table.set_default(kind, action);
            }
        }
    }
    Ok(())
}

fn parse_fault(
    line: usize,
    content: &str,
    config: &SystemConfig,
) -> Result<HealthEvent, HarnessError> {
    let mut words = content.split_whitespace();
    let (Some(time), Some(kind), Some(who)) = (words.next(), words.next(), words.next()) else {
        return Err(invalid(
            line,
            "expected: <time> <KIND> <partition> [detail]",
        ));
    };
    let time = parse_duration(line, time)?;
    let kind: HealthEventKind = kind.parse().map_err(|e: String| invalid(line, &e))?;
    if kind == HealthEventKind::SlotOverrun {
        return Err(invalid(line, "SLOT_OVERRUN is detected, not injected"));
    }
    let source = resolve_partition(config, who)
        .ok_or_else(|| invalid(line, &format!("unknown partition '{who}'")))?;
    let detail = words.collect::<Vec<_>>().join(" ");
    Ok(HealthEvent::fault(time, kind, source, detail))
}

fn parse_topology(section: &Section) -> Result<BrokerTopology, HarnessError> {
    let mut link = calibration::default_link();
    let mut subscribers = 1usize;
    let mut proc_fixed = calibration::PROC_FIXED;
    let mut proc_per_byte = calibration::PROC_PER_BYTE;
    let mut load_factor = calibration::LOAD_FACTOR;
    for (line, content) in &section.lines {
        let line = *line;
        let (key, value) =
            split_kv(content).ok_or_else(|| invalid(line, "expected key = value"))?;
        match key {
            "subscribers" => subscribers = parse_num(line, value)?,
            "link_base" => link.base_latency = parse_duration(line, value)?,
            "link_per_byte" => link.per_byte = parse_duration(line, value)?,
            "link_jitter" => link.jitter_stddev = parse_duration(line, value)?,
            "proc_fixed" => proc_fixed = parse_duration(line, value)?,
            "proc_per_byte" => proc_per_byte = parse_duration(line, value)?,
            "load_factor" => load_factor = parse_f64(line, value)?,
            other => return Err(invalid(line, &format!("unknown topology key '{other}'"))),
        }
    }
    Ok(BrokerTopology::uniform(
        subscribers,
        link,
        proc_fixed,
        proc_per_byte,
        load_factor,
    ))
}

fn parse_load_pair(line: usize, content: &str) -> Result<(LoadProfile, LoadProfile), HarnessError> {
    let (key, value) =
        split_kv(content).ok_or_else(|| invalid(line, "expected pair = <relaxed> <stressed>"))?;
    if key != "pair" {
        return Err(invalid(line, &format!("unknown load key '{key}'")));
    }
    let profiles = value
        .split_whitespace()
        .map(|p| {
            let (cpu, mem) = p.split_once(':').unwrap_or((p, "0"));
            LoadProfile::new(parse_f64(line, cpu)?, parse_f64(line, mem)?)
                .map_err(|e| invalid(line, &e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    match profiles.as_slice() {
        [relaxed, stressed] => Ok((*relaxed, *stressed)),
        _ => Err(invalid(line, "a load pair has exactly two profiles")),
    }
}
