use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{round_half_up, EvaluationError, MetricsEntry};
use crate::fusion::{ModalitySet, Strategy};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One trained system: a modality set and how it is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub set: ModalitySet,
    pub strategy: Strategy,
}

impl Configuration {
    pub fn new(set: ModalitySet, strategy: Strategy) -> Self {
        Self { set, strategy }
    }

    /// The four multimodal sets with `strategy`, then the three unimodal
    /// baselines.
    pub fn standard(strategy: Strategy) -> Vec<Configuration> {
        ModalitySet::report_order()
            .into_iter()
            .map(|set| {
                let s = if set.len() == 1 { Strategy::Unimodal } else { strategy };
                Configuration::new(set, s)
            })
            .collect()
    }

    /// `T-Only` for singletons, otherwise the set label.
    pub fn row_label(&self) -> String {
        if self.set.len() == 1 {
            format!("{}-Only", self.set.label())
        } else {
            self.set.label()
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.set, self.strategy)
    }
}

/// `A+V:early`, `T:unimodal`, or a bare set (`A+T` means early fusion,
/// `T-Only` unimodal).
impl FromStr for Configuration {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvaluationError::BadConfiguration(s.to_string());
        let (set, strategy) = match s.split_once(':') {
            Some((set, strategy)) => {
                let strategy = match strategy.trim() {
                    "unimodal" => Strategy::Unimodal,
                    "early" => Strategy::Early,
                    "late" => Strategy::Late,
                    _ => return Err(bad()),
                };
                (ModalitySet::parse(set).map_err(|_| bad())?, strategy)
            }
            None => {
                let set = ModalitySet::parse(s).map_err(|_| bad())?;
                (set, if set.len() == 1 { Strategy::Unimodal } else { Strategy::Early })
            }
        };
        if strategy == Strategy::Unimodal && set.len() != 1 {
            return Err(bad());
        }
        Ok(Configuration::new(set, strategy))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub configuration: Configuration,
    pub metrics: MetricsEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub split_fingerprint: String,
    pub seed: u64,
    pub entries: Vec<ReportEntry>,
}

impl EvaluationReport {
    pub fn new(split_fingerprint: impl Into<String>, seed: u64) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            split_fingerprint: split_fingerprint.into(),
            seed,
            entries: Vec::new(),
        }
    }

    pub fn entry(&self, configuration: Configuration) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.configuration == configuration)
    }

    pub fn from_json(text: &str) -> Result<Self, EvaluationError> {
        let report: Self = serde_json::from_str(text).map_err(|e| EvaluationError::BadReport(e.to_string()))?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(EvaluationError::BadReport(format!(
                "schema version {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TextTable,
    Json,
}

impl FromStr for ReportFormat {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" | "text_table" | "table" => Ok(ReportFormat::TextTable),
            "json" => Ok(ReportFormat::Json),
            other => Err(EvaluationError::BadConfiguration(format!("unknown report format {other}"))),
        }
    }
}

/// Renders `report`. When `required` is given, every listed configuration
/// must be present.
pub fn render_report(
    report: &EvaluationReport,
    format: ReportFormat,
    required: Option<&[Configuration]>,
) -> Result<String, EvaluationError> {
    let missing: Vec<String> = required
        .unwrap_or_default()
        .iter()
        .filter(|c| report.entry(**c).is_none())
        .map(Configuration::to_string)
        .collect();
    if report.entries.is_empty() || !missing.is_empty() {
        return Err(EvaluationError::IncompleteReport { missing });
    }
    Ok(match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::TextTable => render_text(report),
    })
}

const HEADER: [&str; 6] = ["Modalities", "Class", "Precision", "Recall", "F-measure", "Accuracy"];
const WIDTHS: [usize; 6] = [12, 10, 11, 8, 11, 8];

fn row(out: &mut String, cells: [&str; 6]) {
    let mut line = String::new();
    for (cell, w) in cells.iter().zip(WIDTHS) {
        let _ = write!(line, "{cell:<w$}");
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

fn entry_rows(out: &mut String, label: &str, m: &MetricsEntry) {
    let r = |v: f64| round_half_up(v, 2);
    let acc = r(m.accuracy);
    for (i, (name, p, rc, f)) in [
        ("Positive", m.positive.precision, m.positive.recall, m.positive.f_measure),
        ("Negative", m.negative.precision, m.negative.recall, m.negative.f_measure),
        ("Average", m.macro_average.precision, m.macro_average.recall, m.macro_average.f_measure),
    ]
    .into_iter()
    .enumerate()
    {
        let first = if i == 0 { label } else { "" };
        let a = if i == 2 { acc.as_str() } else { "" };
        row(out, [first, name, &r(p), &r(rc), &r(f), a]);
    }
}

/// One table per fusion strategy present, rows in the standard order with
/// the unimodal baselines appended; a single table when the report only
/// holds unimodal or singleton entries.
fn render_text(report: &EvaluationReport) -> String {
    let order = ModalitySet::report_order();
    let rank = |c: &Configuration| (order.iter().position(|s| *s == c.set).unwrap_or(usize::MAX), c.strategy);
    let mut unimodal: Vec<&ReportEntry> = report
        .entries
        .iter()
        .filter(|e| e.configuration.strategy == Strategy::Unimodal)
        .collect();
    unimodal.sort_by_key(|e| rank(&e.configuration));

    let mut tables: Vec<(String, Vec<&ReportEntry>)> = Vec::new();
    for (strategy, title) in [(Strategy::Late, "Late fusion"), (Strategy::Early, "Early fusion")] {
        let mut rows: Vec<&ReportEntry> = report
            .entries
            .iter()
            .filter(|e| e.configuration.strategy == strategy)
            .collect();
        if rows.is_empty() {
            continue;
        }
        rows.sort_by_key(|e| rank(&e.configuration));
        rows.extend(unimodal.iter().copied());
        tables.push((title.to_string(), rows));
    }
    if tables.is_empty() {
        tables.push(("Unimodal".to_string(), unimodal));
    }

    let mut out = String::new();
    let _ = writeln!(out, "split {} seed {}", report.split_fingerprint, report.seed);
    for (title, rows) in tables {
        out.push('\n');
        out.push_str(&title);
        out.push('\n');
        row(&mut out, HEADER);
        let width: usize = WIDTHS.iter().sum();
        out.push_str(&"-".repeat(width));
        out.push('\n');
        for e in rows {
            entry_rows(&mut out, &e.configuration.row_label(), &e.metrics);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{compute_metrics, Sentiment};

    fn metrics(correct_pos: usize, wrong: usize) -> MetricsEntry {
        let mut pred = vec![Sentiment::Positive; correct_pos];
        let mut truth = vec![Sentiment::Positive; correct_pos];
        pred.extend(vec![Sentiment::Negative; 10]);
        truth.extend(vec![Sentiment::Negative; 10]);
        pred.extend(vec![Sentiment::Positive; wrong]);
        truth.extend(vec![Sentiment::Negative; wrong]);
        compute_metrics(&pred, &truth).unwrap()
    }

    fn table10() -> EvaluationReport {
        let mut r = EvaluationReport::new("abc123", 7);
        for (i, c) in Configuration::standard(Strategy::Early).into_iter().rev().enumerate() {
            r.entries.push(ReportEntry {
                configuration: c,
                metrics: metrics(10 + i, i % 3),
            });
        }
        r
    }

    #[test]
    fn table10_row_set_and_order() {
        let text = render_report(&table10(), ReportFormat::TextTable, None).unwrap();
        let labels: Vec<&str> = text
            .lines()
            .filter_map(|l| l.split_whitespace().next())
            .filter(|w| w.contains('+') || w.ends_with("-Only"))
            .collect();
        assert_eq!(labels, ["A+V", "V+T", "A+T", "A+V+T", "T-Only", "A-Only", "V-Only"]);
        assert!(text.contains("Early fusion"));
        assert!(!text.contains("Late fusion"));
        assert_eq!(text.lines().filter(|l| l.contains("Average")).count(), 7);
    }

    #[test]
    fn single_config_has_three_rows() {
        let mut r = EvaluationReport::new("f", 0);
        r.entries.push(ReportEntry {
            configuration: "T-Only".parse().unwrap(),
            metrics: metrics(10, 0),
        });
        let text = render_report(&r, ReportFormat::TextTable, None).unwrap();
        let body: Vec<&str> = text.lines().skip_while(|l| !l.starts_with("---")).skip(1).collect();
        assert_eq!(body.len(), 3);
        assert!(body[0].starts_with("T-Only      Positive  1.00"));
        assert!(body[2].ends_with("100.00"));
    }

    #[test]
    fn json_round_trip_and_determinism() {
        let r = table10();
        let json = render_report(&r, ReportFormat::Json, None).unwrap();
        assert_eq!(EvaluationReport::from_json(&json).unwrap(), r);
        assert_eq!(json, render_report(&r, ReportFormat::Json, None).unwrap());
        let t1 = render_report(&r, ReportFormat::TextTable, None).unwrap();
        assert_eq!(t1, render_report(&r, ReportFormat::TextTable, None).unwrap());
    }

    #[test]
    fn missing_configuration_is_reported() {
        let mut r = table10();
        r.entries.remove(0);
        let want = Configuration::standard(Strategy::Early);
        match render_report(&r, ReportFormat::TextTable, Some(&want)) {
            Err(EvaluationError::IncompleteReport { missing }) => assert_eq!(missing, ["V:unimodal"]),
            other => panic!("{other:?}"),
        }
        let empty = EvaluationReport::new("f", 0);
        assert!(render_report(&empty, ReportFormat::Json, None).is_err());
    }

    #[test]
    fn configuration_parsing() {
        let c: Configuration = "T+A:late".parse().unwrap();
        assert_eq!(c.to_string(), "A+T:late");
        assert_eq!("A+V+T".parse::<Configuration>().unwrap().strategy, Strategy::Early);
        assert_eq!("V-Only".parse::<Configuration>().unwrap().strategy, Strategy::Unimodal);
        assert!("A+V:unimodal".parse::<Configuration>().is_err());
        assert!("A+V:mid".parse::<Configuration>().is_err());
    }
}
