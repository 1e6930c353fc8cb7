use std::collections::BTreeMap;
use std::fmt::Write;

use num_rational::Ratio;

use super::{HarnessError, Mode, RepetitionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Send-to-receive latency of partitioned runs.
    Latency,
    /// Stressed minus relaxed transmission time of broker runs.
    TxDelay,
}

impl Metric {
    pub fn for_mode(mode: Mode) -> Metric {
        match mode {
            Mode::Partitioned => Metric::Latency,
            Mode::Broker => Metric::TxDelay,
        }
    }

    fn value(&self, r: &RepetitionRecord) -> Option<i64> {
        match self {
            Metric::Latency => r.latency.map(|d| d.as_nanos() as i64),
            Metric::TxDelay => r.tx_delay,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Latency => "latency",
            Metric::TxDelay => "tx_delay",
        }
    }
}

/// Exact statistics in nanoseconds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryStats {
    pub metric: Metric,
    pub count: usize,
    /// Rounded to the nearest nanosecond, ties toward positive infinity.
    pub mean: i64,
    pub min: i64,
    pub max: i64,
    pub p50: i64,
    pub p99: i64,
    /// Mean latency over mean scheduled gap.
    pub latency_to_gap_ratio: Option<Ratio<i128>>,
    /// `latency_to_gap_ratio - 1`.
    pub overhead_ratio: Option<Ratio<i128>>,
}

/// Summarizes the records that carry a value for `metric`. Records without
/// one (for example, no delivery within the horizon) are skipped.
pub fn summarize(
    records: &[RepetitionRecord],
    metric: Metric,
) -> Result<SummaryStats, HarnessError> {
    let mut values: Vec<i64> = records.iter().filter_map(|r| metric.value(r)).collect();
    if values.is_empty() {
        return Err(HarnessError::EmptyResult);
    }
    values.sort_unstable();
    let n = values.len() as i128;
    let sum: i128 = values.iter().map(|&v| v as i128).sum();
    let mean = (2 * sum + n).div_euclid(2 * n) as i64;

    let (latency_to_gap_ratio, overhead_ratio) = match metric {
        Metric::Latency => {
            let pairs: Vec<(i128, i128)> = records
                .iter()
                .filter_map(|r| Some((r.latency?.as_nanos() as i128, r.gap?.as_nanos() as i128)))
                .collect();
            let gap_sum: i128 = pairs.iter().map(|p| p.1).sum();
            if pairs.is_empty() || gap_sum == 0 {
                (None, None)
            } else {
                let ratio = Ratio::new(pairs.iter().map(|p| p.0).sum(), gap_sum);
                (Some(ratio), Some(ratio - 1))
            }
        }
        Metric::TxDelay => (None, None),
    };

    Ok(SummaryStats {
        metric,
        count: values.len(),
        mean,
        min: values[0],
        max: values[values.len() - 1],
        p50: nearest_rank(&values, 50),
        p99: nearest_rank(&values, 99),
        latency_to_gap_ratio,
        overhead_ratio,
    })
}

fn nearest_rank(sorted: &[i64], percent: usize) -> i64 {
    let rank = (percent * sorted.len()).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// A `(scenario, mode, payload)` key and its summary, if it has data.
pub type GroupSummary = ((String, Mode, u64), Option<SummaryStats>);

/// Per `(scenario, mode, payload)` summaries; groups without data map to
/// `None`.
pub fn summarize_groups<'a>(
    rows: impl IntoIterator<Item = (&'a str, Mode, &'a RepetitionRecord)>,
) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, Mode, u64), Vec<RepetitionRecord>> = BTreeMap::new();
    for (scenario, mode, r) in rows {
        groups
            .entry((scenario.to_string(), mode, r.payload_bytes))
            .or_default()
            .push(r.clone());
    }
    groups
        .into_iter()
        .map(|(key, recs)| {
            let stats = summarize(&recs, Metric::for_mode(key.1)).ok();
            (key, stats)
        })
        .collect()
}

/// Decimal rendering with `places` digits, rounded half away from zero.
pub fn format_ratio(r: &Ratio<i128>, places: u32) -> String {
    let scale = 10i128.pow(places);
    let num = *r.numer() * scale;
    let den = *r.denom();
    let neg = (num < 0) != (den < 0);
    let (num, den) = (num.abs(), den.abs());
    let scaled = (2 * num + den) / (2 * den);
    let int = scaled / scale;
    let frac = scaled % scale;
    let sign = if neg && scaled != 0 { "-" } else { "" };
    if places == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = places as usize)
    }
}

/// Aligned text table of grouped summaries.
pub fn summary_table(groups: &[GroupSummary]) -> String {
    let header = [
        "scenario",
        "mode",
        "payload_bytes",
        "metric",
        "n",
        "mean_ns",
        "min_ns",
        "max_ns",
        "p50_ns",
        "p99_ns",
        "latency/gap",
        "overhead",
    ];
    let mut rows: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for ((scenario, mode, payload), stats) in groups {
        let mut row = vec![
            scenario.clone(),
            mode.as_str().to_string(),
            payload.to_string(),
        ];
        match stats {
            Some(s) => {
                let pct = |r: &Ratio<i128>| format!("{}%", format_ratio(&(r * 100), 3));
                row.extend([
                    s.metric.name().to_string(),
                    s.count.to_string(),
                    s.mean.to_string(),
                    s.min.to_string(),
                    s.max.to_string(),
                    s.p50.to_string(),
                    s.p99.to_string(),
                    s.latency_to_gap_ratio
                        .as_ref()
                        .map(|r| format_ratio(r, 6))
                        .unwrap_or_else(|| "-".into()),
                    s.overhead_ratio
                        .as_ref()
                        .map(pct)
                        .unwrap_or_else(|| "-".into()),
                ]);
            }
            None => {
                row.push("no data".into());
                row.extend(std::iter::repeat_n("-".to_string(), 8));
            }
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c < 4 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}
