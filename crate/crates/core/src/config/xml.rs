use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{
    ChannelKind, ChannelSpec, ConfigError, CopyCost, MemoryArea, PartitionSpec, PortRef,
    SchedulePlan, ScheduleSlot, SystemConfig,
};
use crate::time::{Duration, DurationParseError};

/// Parses a `SystemDescription` XML document.
///
/// Unknown elements and attributes are rejected. Durations carry a unit
/// suffix (`ns`, `us`, `ms`, `s`); integers accept decimal or `0x` hex.
pub fn parse_config(text: &str) -> Result<SystemConfig, ConfigError> {
    let doc = Document::parse(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let cx = Cx { doc: &doc };
    let root = doc.root_element();
    if root.tag_name().name() != "SystemDescription" {
        return Err(cx.schema(root, "root element must be SystemDescription"));
    }
    cx.check_attributes(root, &["majorFrame"])?;
    let major_frame = cx.duration(root, "majorFrame")?;

    let mut partitions = None;
    let mut slots = None;
    let mut channels = Vec::new();
    let mut copy_cost = CopyCost::default();
    let mut seen = Vec::new();

    for child in cx.children(root)? {
        let name = child.tag_name().name();
        if seen.contains(&name) {
            return Err(cx.schema(child, &format!("duplicate element <{name}>")));
        }
        seen.push(name);
        match name {
            "PartitionTable" => partitions = Some(cx.partition_table(child)?),
            "Schedule" => slots = Some(cx.schedule(child)?),
            "Channels" => channels = cx.channels(child)?,
            "Hypervisor" => copy_cost = cx.hypervisor(child)?,
            other => return Err(cx.schema(child, &format!("unknown element <{other}>"))),
        }
    }

    let partitions = partitions.ok_or_else(|| cx.schema(root, "missing <PartitionTable>"))?;
    let slots = slots.ok_or_else(|| cx.schema(root, "missing <Schedule>"))?;
    let mut plan = SchedulePlan { major_frame, slots };
    plan.normalize();

    Ok(SystemConfig {
        partitions,
        plan,
        channels,
        copy_cost,
    })
}

struct Cx<'a, 'input> {
    doc: &'a Document<'input>,
}

impl<'a, 'input> Cx<'a, 'input> {
    fn location(&self, node: Node) -> String {
        let pos = self.doc.text_pos_at(node.range().start);
        format!("<{}> line {}", node.tag_name().name(), pos.row)
    }

    fn schema(&self, node: Node, message: &str) -> ConfigError {
        ConfigError::Schema {
            location: self.location(node),
            message: message.to_string(),
        }
    }

    fn range(&self, node: Node, message: &str) -> ConfigError {
        ConfigError::Range {
            location: self.location(node),
            message: message.to_string(),
        }
    }

    /// Element children, rejecting stray text.
    fn children(&self, node: Node<'a, 'input>) -> Result<Vec<Node<'a, 'input>>, ConfigError> {
        let mut out = Vec::new();
        for child in node.children() {
            if child.is_element() {
                out.push(child);
            } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
                return Err(self.schema(node, "unexpected text content"));
            }
        }
        Ok(out)
    }

    fn check_attributes(&self, node: Node, allowed: &[&str]) -> Result<(), ConfigError> {
        for attr in node.attributes() {
            if !allowed.contains(&attr.name()) {
                return Err(self.schema(node, &format!("unknown attribute '{}'", attr.name())));
            }
        }
        Ok(())
    }

    fn attr<'n>(&self, node: Node<'n, 'input>, name: &str) -> Result<&'n str, ConfigError> {
        node.attribute(name)
            .ok_or_else(|| self.schema(node, &format!("missing attribute '{name}'")))
    }

    fn duration(&self, node: Node, name: &str) -> Result<Duration, ConfigError> {
        let raw = self.attr(node, name)?;
        raw.parse::<Duration>().map_err(|e| match e {
            DurationParseError::Negative(_) | DurationParseError::Overflow(_) => {
                self.range(node, &format!("attribute '{name}': {e}"))
            }
            _ => self.schema(node, &format!("attribute '{name}': {e}")),
        })
    }

    fn integer(&self, node: Node, name: &str) -> Result<u64, ConfigError> {
        let raw = self.attr(node, name)?.trim();
        if raw.starts_with('-') {
            return Err(self.range(node, &format!("attribute '{name}' is negative")));
        }
        let parsed = match raw.strip_prefix("0x").or_else(|| raw.strip_prefix("0X")) {
            Some(hex) => u64::from_str_radix(hex, 16),
            None => raw.parse::<u64>(),
        };
        parsed.map_err(|_| {
            self.schema(
                node,
                &format!("attribute '{name}': invalid integer '{raw}'"),
            )
        })
    }

    fn positive(&self, node: Node, name: &str) -> Result<u64, ConfigError> {
        match self.integer(node, name)? {
            0 => Err(self.range(node, &format!("attribute '{name}' must be positive"))),
            v => Ok(v),
        }
    }

    fn id(&self, node: Node, name: &str) -> Result<u32, ConfigError> {
        let v = self.integer(node, name)?;
        u32::try_from(v).map_err(|_| self.range(node, &format!("attribute '{name}' out of range")))
    }

    fn expect_tag(&self, node: Node, tag: &str) -> Result<(), ConfigError> {
        if node.tag_name().name() != tag {
            return Err(self.schema(
                node,
                &format!(
                    "unknown element <{}>, expected <{tag}>",
                    node.tag_name().name()
                ),
            ));
        }
        Ok(())
    }

    fn partition_table(&self, node: Node<'a, 'input>) -> Result<Vec<PartitionSpec>, ConfigError> {
        self.check_attributes(node, &[])?;
        let mut partitions = Vec::new();
        for p in self.children(node)? {
            self.expect_tag(p, "Partition")?;
            self.check_attributes(p, &["id", "name"])?;
            let id = self.id(p, "id")?;
            let name = self.attr(p, "name")?.to_string();
            let mut memory_areas = Vec::new();
            for m in self.children(p)? {
                self.expect_tag(m, "MemoryArea")?;
                self.check_attributes(m, &["start", "size"])?;
                memory_areas.push(MemoryArea {
                    start: self.integer(m, "start")?,
                    size: self.positive(m, "size")?,
                });
            }
            partitions.push(PartitionSpec {
                id,
                name,
                memory_areas,
            });
        }
        Ok(partitions)
    }

    fn schedule(&self, node: Node<'a, 'input>) -> Result<Vec<ScheduleSlot>, ConfigError> {
        self.check_attributes(node, &[])?;
        let mut slots = Vec::new();
        for s in self.children(node)? {
            self.expect_tag(s, "Slot")?;
            self.check_attributes(s, &["id", "partition", "start", "duration"])?;
            slots.push(ScheduleSlot {
                slot_id: self.id(s, "id")?,
                partition_id: self.id(s, "partition")?,
                start: self.duration(s, "start")?,
                duration: self.duration(s, "duration")?,
            });
        }
        Ok(slots)
    }

    fn port(&self, node: Node) -> Result<PortRef, ConfigError> {
        self.check_attributes(node, &["partition", "port"])?;
        if node.children().any(|c| c.is_element()) {
            return Err(self.schema(node, "port element takes no children"));
        }
        Ok(PortRef {
            partition: self.id(node, "partition")?,
            port: self.attr(node, "port")?.to_string(),
        })
    }

    fn channels(&self, node: Node<'a, 'input>) -> Result<Vec<ChannelSpec>, ConfigError> {
        self.check_attributes(node, &[])?;
        let mut channels = Vec::new();
        for c in self.children(node)? {
            let kind = match c.tag_name().name() {
                "SamplingChannel" => {
                    self.check_attributes(c, &["maxMessageSize", "refreshPeriod"])?;
                    ChannelKind::Sampling {
                        refresh_period: self.duration(c, "refreshPeriod")?,
                    }
                }
                "QueuingChannel" => {
                    self.check_attributes(c, &["maxMessageSize", "maxNoMessages"])?;
                    let capacity = self.positive(c, "maxNoMessages")?;
                    ChannelKind::Queuing {
                        capacity: u32::try_from(capacity)
                            .map_err(|_| self.range(c, "attribute 'maxNoMessages' out of range"))?,
                    }
                }
                other => return Err(self.schema(c, &format!("unknown element <{other}>"))),
            };
            let max_message_size = self.positive(c, "maxMessageSize")?;
            let mut source = None;
            let mut destinations = Vec::new();
            for end in self.children(c)? {
                match end.tag_name().name() {
                    "Source" if source.is_none() => source = Some(self.port(end)?),
                    "Source" => return Err(self.schema(end, "channel has more than one <Source>")),
                    "Destination" => destinations.push(self.port(end)?),
                    other => return Err(self.schema(end, &format!("unknown element <{other}>"))),
                }
            }
            let source = source.ok_or_else(|| self.schema(c, "missing <Source>"))?;
            channels.push(ChannelSpec {
                kind,
                source,
                destinations,
                max_message_size,
            });
        }
        Ok(channels)
    }

    fn hypervisor(&self, node: Node<'a, 'input>) -> Result<CopyCost, ConfigError> {
        self.check_attributes(node, &["copyCostFixed", "copyCostPerByte"])?;
        if !self.children(node)?.is_empty() {
            return Err(self.schema(node, "<Hypervisor> takes no children"));
        }
        let mut cost = CopyCost::default();
        if node.has_attribute("copyCostFixed") {
            cost.fixed = self.duration(node, "copyCostFixed")?;
        }
        if node.has_attribute("copyCostPerByte") {
            cost.per_byte = self.duration(node, "copyCostPerByte")?;
        }
        Ok(cost)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Serializes a configuration in the same schema [`parse_config`] reads.
pub fn to_xml(cfg: &SystemConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<SystemDescription majorFrame="{}">"#,
        cfg.plan.major_frame
    );
    out.push_str("  <PartitionTable>\n");
    for p in &cfg.partitions {
        let open = format!(r#"    <Partition id="{}" name="{}""#, p.id, escape(&p.name));
        if p.memory_areas.is_empty() {
            let _ = writeln!(out, "{open}/>");
            continue;
        }
        let _ = writeln!(out, "{open}>");
        for m in &p.memory_areas {
            let _ = writeln!(
                out,
                r#"      <MemoryArea start="0x{:x}" size="0x{:x}"/>"#,
                m.start, m.size
            );
        }
        out.push_str("    </Partition>\n");
    }
    out.push_str("  </PartitionTable>\n  <Schedule>\n");
    for s in &cfg.plan.slots {
        let _ = writeln!(
            out,
            r#"    <Slot id="{}" partition="{}" start="{}" duration="{}"/>"#,
            s.slot_id, s.partition_id, s.start, s.duration
        );
    }
    out.push_str("  </Schedule>\n");
    if !cfg.channels.is_empty() {
        out.push_str("  <Channels>\n");
        for c in &cfg.channels {
            let tag = match c.kind {
                ChannelKind::Sampling { refresh_period } => {
                    let _ = writeln!(
                        out,
                        r#"    <SamplingChannel maxMessageSize="{}" refreshPeriod="{}">"#,
                        c.max_message_size, refresh_period
                    );
                    "SamplingChannel"
                }
                ChannelKind::Queuing { capacity } => {
                    let _ = writeln!(
                        out,
                        r#"    <QueuingChannel maxMessageSize="{}" maxNoMessages="{}">"#,
                        c.max_message_size, capacity
                    );
                    "QueuingChannel"
                }
            };
            let _ = writeln!(
                out,
                r#"      <Source partition="{}" port="{}"/>"#,
                c.source.partition,
                escape(&c.source.port)
            );
            for d in &c.destinations {
                let _ = writeln!(
                    out,
                    r#"      <Destination partition="{}" port="{}"/>"#,
                    d.partition,
                    escape(&d.port)
                );
            }
            let _ = writeln!(out, "    </{tag}>");
        }
        out.push_str("  </Channels>\n");
    }
    let _ = writeln!(
        out,
        r#"  <Hypervisor copyCostFixed="{}" copyCostPerByte="{}"/>"#,
        cfg.copy_cost.fixed, cfg.copy_cost.per_byte
    );
    out.push_str("</SystemDescription>\n");
    out
}
