use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Verdict;
use crate::pairgen::{condition_rank, Phenomenon, Section};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub phenomenon: Phenomenon,
    /// `None` for a coarse row.
    pub condition: Option<String>,
    pub n_total: usize,
    pub n_correct: usize,
    pub n_incorrect: usize,
    pub n_tie: usize,
    pub n_discarded: usize,
    /// Correct over non-discarded; null when nothing was kept.
    pub accuracy: Option<f64>,
}

impl CategoryResult {
    fn empty(phenomenon: Phenomenon, condition: Option<String>) -> Self {
        CategoryResult {
            phenomenon,
            condition,
            n_total: 0,
            n_correct: 0,
            n_incorrect: 0,
            n_tie: 0,
            n_discarded: 0,
            accuracy: None,
        }
    }

    fn add(&mut self, v: Verdict) {
        self.n_total += 1;
        match v {
            Verdict::Correct => self.n_correct += 1,
            Verdict::Incorrect => self.n_incorrect += 1,
            Verdict::Tie => self.n_tie += 1,
            Verdict::Discarded => self.n_discarded += 1,
        }
    }

    fn finish(&mut self) {
        let kept = self.n_total - self.n_discarded;
        self.accuracy = (kept > 0).then(|| self.n_correct as f64 / kept as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub backend: String,
    pub timestamp: String,
    pub incomplete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: BTreeMap<String, String>,
    /// Always fourteen rows, in table order.
    pub coarse: Vec<CategoryResult>,
    pub fine: Vec<CategoryResult>,
}

impl EvaluationReport {
    pub fn coarse_row(&self, p: Phenomenon) -> &CategoryResult {
        self.coarse
            .iter()
            .find(|r| r.phenomenon == p)
            .expect("coarse table has every phenomenon")
    }

    pub fn fine_rows(&self, p: Phenomenon) -> impl Iterator<Item = &CategoryResult> {
        self.fine.iter().filter(move |r| r.phenomenon == p)
    }
}

/// Folds verdicts into coarse and fine rows. The result does not depend on
/// the order of `verdicts`.
pub fn aggregate(
    backend: &str,
    verdicts: &[(Phenomenon, &str, Verdict)],
    config: BTreeMap<String, String>,
) -> EvaluationReport {
    let mut coarse: BTreeMap<Phenomenon, CategoryResult> = Phenomenon::ALL
        .iter()
        .map(|&p| (p, CategoryResult::empty(p, None)))
        .collect();
    let mut fine: BTreeMap<(Phenomenon, usize, &str), CategoryResult> = BTreeMap::new();
    for &(p, condition, v) in verdicts {
        coarse.get_mut(&p).expect("all phenomena present").add(v);
        fine.entry((p, condition_rank(condition), condition))
            .or_insert_with(|| CategoryResult::empty(p, Some(condition.to_string())))
            .add(v);
    }
    let mut coarse: Vec<_> = coarse.into_values().collect();
    let mut fine: Vec<_> = fine.into_values().collect();
    coarse.iter_mut().chain(fine.iter_mut()).for_each(CategoryResult::finish);
    EvaluationReport {
        backend: backend.to_string(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        incomplete: false,
        error: None,
        config,
        coarse,
        fine,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Tsv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "tsv" => Ok(ReportFormat::Tsv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!("unknown report format {other}")),
        }
    }
}

pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Tsv => render_tsv(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

const TSV_HEADER: &str =
    "phenomenon\tcondition\tn_total\tn_correct\tn_incorrect\tn_tie\tn_discarded\taccuracy";
const COARSE_MARK: &str = "*";

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

fn render_tsv(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# backend\t{}", clean(&r.backend));
    let _ = writeln!(out, "# timestamp\t{}", clean(&r.timestamp));
    let _ = writeln!(out, "# incomplete\t{}", r.incomplete);
    if let Some(e) = &r.error {
        let _ = writeln!(out, "# error\t{}", clean(e));
    }
    for (k, v) in &r.config {
        let _ = writeln!(out, "# config.{}\t{}", clean(k), clean(v));
    }
    out.push_str(TSV_HEADER);
    out.push('\n');
    for row in r.coarse.iter().chain(&r.fine) {
        let accuracy = row.accuracy.map_or("null".to_string(), |a| a.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.phenomenon.id(),
            row.condition.as_deref().unwrap_or(COARSE_MARK),
            row.n_total,
            row.n_correct,
            row.n_incorrect,
            row.n_tie,
            row.n_discarded,
            accuracy
        );
    }
    out
}

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ReportError {
    pub line: usize,
    pub message: String,
}

/// Reads back the output of the tsv renderer.
pub fn parse_tsv(text: &str) -> Result<EvaluationReport, ReportError> {
    let mut report = EvaluationReport {
        backend: String::new(),
        timestamp: String::new(),
        incomplete: false,
        error: None,
        config: BTreeMap::new(),
        coarse: Vec::new(),
        fine: Vec::new(),
    };
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| ReportError {
            line: i + 1,
            message,
        };
        if let Some(meta) = line.strip_prefix("# ") {
            let (k, v) = meta
                .split_once('\t')
                .ok_or_else(|| err("metadata line without a tab".into()))?;
            match k {
                "backend" => report.backend = v.to_string(),
                "timestamp" => report.timestamp = v.to_string(),
                "incomplete" => {
                    report.incomplete = v.parse().map_err(|_| err(format!("bad flag {v}")))?
                }
                "error" => report.error = Some(v.to_string()),
                _ => match k.strip_prefix("config.") {
                    Some(key) => {
                        report.config.insert(key.to_string(), v.to_string());
                    }
                    None => return Err(err(format!("unknown metadata key {k}"))),
                },
            }
            continue;
        }
        if !seen_header {
            if line != TSV_HEADER {
                return Err(err("missing column header".into()));
            }
            seen_header = true;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 8 {
            return Err(err(format!("expected 8 columns, found {}", cols.len())));
        }
        let phenomenon = Phenomenon::from_id(cols[0])
            .ok_or_else(|| err(format!("unknown phenomenon {}", cols[0])))?;
        let count = |s: &str| s.parse::<usize>().map_err(|_| err(format!("bad count {s}")));
        let accuracy = match cols[7] {
            "null" => None,
            s => Some(s.parse::<f64>().map_err(|_| err(format!("bad accuracy {s}")))?),
        };
        let row = CategoryResult {
            phenomenon,
            condition: (cols[1] != COARSE_MARK).then(|| cols[1].to_string()),
            n_total: count(cols[2])?,
            n_correct: count(cols[3])?,
            n_incorrect: count(cols[4])?,
            n_tie: count(cols[5])?,
            n_discarded: count(cols[6])?,
            accuracy,
        };
        if row.condition.is_some() {
            report.fine.push(row);
        } else {
            report.coarse.push(row);
        }
    }
    if !seen_header {
        return Err(ReportError {
            line: text.lines().count(),
            message: "missing column header".into(),
        });
    }
    Ok(report)
}

fn accuracy_cell(a: Option<f64>) -> String {
    a.map_or("n/a".to_string(), |a| format!("{a:.4}"))
}

fn render_markdown(r: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Agreement accuracy: {}\n", r.backend);
    if r.incomplete {
        let _ = writeln!(
            out,
            "**Incomplete run**: {}\n",
            r.error.as_deref().unwrap_or("not every pair was decided")
        );
    }
    let sections = [Section::SubjectVerb, Section::ReflexiveAnaphora];

    out.push_str("## Overall\n\n| Phenomenon | Accuracy | # sents |\n|:--|--:|--:|\n");
    for section in sections {
        let _ = writeln!(out, "| **{}** | | |", section.title());
        for row in r.coarse.iter().filter(|c| c.phenomenon.section() == section) {
            let _ = writeln!(
                out,
                "| {} | {} | {} |",
                row.phenomenon.title(),
                accuracy_cell(row.accuracy),
                row.n_total
            );
        }
    }

    out.push_str("\n## By condition\n\n| Phenomenon | Accuracy | # sents |\n|:--|--:|--:|\n");
    for section in sections {
        let _ = writeln!(out, "| **{}** | | |", section.title());
        for p in Phenomenon::ALL.iter().filter(|p| p.section() == section) {
            let mut rows = r.fine_rows(*p).peekable();
            if rows.peek().is_none() {
                continue;
            }
            let _ = writeln!(out, "| {} | | |", p.title());
            for row in rows {
                let _ = writeln!(
                    out,
                    "| -{} | {} | {} |",
                    row.condition.as_deref().unwrap_or(""),
                    accuracy_cell(row.accuracy),
                    row.n_total
                );
            }
        }
    }

    let ties: usize = r.coarse.iter().map(|c| c.n_tie).sum();
    let discarded: usize = r.coarse.iter().map(|c| c.n_discarded).sum();
    let _ = writeln!(
        out,
        "\nTies: {ties} (counted as not preferred). Discarded by the length gate: {discarded}."
    );
    out
}
