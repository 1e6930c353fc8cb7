use std::io::{Read, Write};
use std::path::Path;

use num_rational::Ratio;

use super::{format_ratio, HarnessError, Mode, RepetitionRecord, RunResult};
use crate::time::Duration;

pub const CSV_HEADER: [&str; 12] = [
    "scenario",
    "mode",
    "repetition",
    "payload_bytes",
    "t_send_ns",
    "t_recv_ns",
    "latency_ns",
    "gap_ns",
    "latency_to_gap_ratio",
    "tx_relaxed_ns",
    "tx_stressed_ns",
    "tx_delay_ns",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn ns(v: Option<Duration>) -> String {
    opt(v.map(Duration::as_nanos))
}

fn io_err(path: &str, e: impl ToString) -> HarnessError {
    HarnessError::Io {
        path: path.to_string(),
        message: e.to_string(),
    }
}

/// Writes the header and one row per record. Output bytes depend only on
/// the result.
pub fn write_csv<W: Write>(result: &RunResult, out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let err = |e: csv::Error| io_err("<csv>", e);
    w.write_record(CSV_HEADER).map_err(err)?;
    for r in &result.records {
        let ratio = match (r.latency, r.gap) {
            (Some(l), Some(g)) if !g.is_zero() => {
                format_ratio(&Ratio::new(l.as_nanos() as i128, g.as_nanos() as i128), 6)
            }
            _ => String::new(),
        };
        w.write_record([
            result.scenario.clone(),
            result.mode.as_str().to_string(),
            r.repetition.to_string(),
            r.payload_bytes.to_string(),
            ns(r.t_send),
            ns(r.t_recv),
            ns(r.latency),
            ns(r.gap),
            ratio,
            ns(r.tx_relaxed),
            ns(r.tx_stressed),
            opt(r.tx_delay),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| io_err("<csv>", e))
}

pub fn export_csv(result: &RunResult, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| io_err(&path.display().to_string(), e))?;
    write_csv(result, std::io::BufWriter::new(file)).map_err(|e| match e {
        HarnessError::Io { message, .. } => io_err(&path.display().to_string(), message),
        other => other,
    })
}

/// Reads rows written by [`write_csv`]. Returns `(scenario, mode, record)`
/// triples in file order.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<(String, Mode, RepetitionRecord)>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let malformed = |m: String| HarnessError::MalformedCsv(m);
    let headers = rdr.headers().map_err(|e| malformed(e.to_string()))?.clone();
    if headers.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(malformed(format!(
            "unexpected header '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| malformed(format!("line {line}: {e}")))?;
        let field = |idx: usize| rec.get(idx).unwrap_or("");
        let num = |idx: usize| -> Result<Option<u64>, HarnessError> {
            let f = field(idx);
            if f.is_empty() {
                return Ok(None);
            }
            f.parse()
                .map(Some)
                .map_err(|_| malformed(format!("line {line}: bad {} '{f}'", CSV_HEADER[idx])))
        };
        let dur = |idx: usize| num(idx).map(|v| v.map(Duration::from_nanos));
        let mode: Mode = field(1)
            .parse()
            .map_err(|e: String| malformed(format!("line {line}: {e}")))?;
        let required = |idx: usize| {
            num(idx)?.ok_or_else(|| malformed(format!("line {line}: missing {}", CSV_HEADER[idx])))
        };
        let tx_delay = match field(11) {
            "" => None,
            f => Some(
                f.parse::<i64>()
                    .map_err(|_| malformed(format!("line {line}: bad tx_delay_ns '{f}'")))?,
            ),
        };
        let record = RepetitionRecord {
            repetition: u32::try_from(required(2)?)
                .map_err(|_| malformed(format!("line {line}: repetition out of range")))?,
            payload_bytes: required(3)?,
            t_send: dur(4)?,
            t_recv: dur(5)?,
            latency: dur(6)?,
            gap: dur(7)?,
            tx_relaxed: dur(9)?,
            tx_stressed: dur(10)?,
            tx_delay,
        };
        rows.push((field(0).to_string(), mode, record));
    }
    Ok(rows)
}
