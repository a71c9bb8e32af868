//! Pair decisions, dataset evaluation and report aggregation.

mod report;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::pairgen::MinimalPair;
use crate::scoring::{ScoreError, ScorerBackend, SentenceScore};
use crate::tokenizer::{length_gate, GateInput, GateResult, GateVerdict, SubwordVocab};

pub use report::{
    aggregate, parse_tsv, render_report, CategoryResult, EvaluationReport, ReportError,
    ReportFormat,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Correct,
    Incorrect,
    Tie,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreBasis {
    #[default]
    Mean,
    Sum,
}

impl ScoreBasis {
    fn of(self, s: &SentenceScore) -> f64 {
        match self {
            ScoreBasis::Mean => s.mean_nll,
            ScoreBasis::Sum => s.sum_nll,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreBasis::Mean => "mean",
            ScoreBasis::Sum => "sum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDecision {
    pub pair_id: String,
    pub verdict: Verdict,
    pub score_grammatical: Option<SentenceScore>,
    pub score_ungrammatical: Option<SentenceScore>,
    pub gate: GateResult,
}

/// Strictly lower grammatical score is correct, exact equality is a tie.
pub fn judge_pair(sg: &SentenceScore, su: &SentenceScore, gate: &GateResult) -> Verdict {
    judge_pair_by(ScoreBasis::Mean, sg, su, gate)
}

pub fn judge_pair_by(
    basis: ScoreBasis,
    sg: &SentenceScore,
    su: &SentenceScore,
    gate: &GateResult,
) -> Verdict {
    if gate.verdict == GateVerdict::Discard {
        return Verdict::Discarded;
    }
    let (g, u) = (basis.of(sg), basis.of(su));
    if g < u {
        Verdict::Correct
    } else if g == u {
        Verdict::Tie
    } else {
        Verdict::Incorrect
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GateConfig<'a> {
    Whitespace,
    Subword(&'a SubwordVocab),
    /// Token counts reported by the backend.
    Backend,
}

impl GateConfig<'_> {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateConfig::Whitespace => "whitespace",
            GateConfig::Subword(_) => "subword",
            GateConfig::Backend => "backend",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub jobs: usize,
    pub basis: ScoreBasis,
    /// Extra key/value pairs echoed into the report.
    pub config: BTreeMap<String, String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            jobs: 1,
            basis: ScoreBasis::Mean,
            config: BTreeMap::new(),
        }
    }
}

#[derive(Debug)]
pub struct Evaluation {
    pub report: EvaluationReport,
    /// In pair order; shorter than the input when the run stopped early.
    pub decisions: Vec<PairDecision>,
    pub error: Option<ScoreError>,
}

fn decide(
    pair: &MinimalPair,
    backend: &dyn ScorerBackend,
    gate: GateConfig<'_>,
    basis: ScoreBasis,
) -> Result<PairDecision, ScoreError> {
    let pre_gate = match gate {
        GateConfig::Whitespace => Some(GateInput::Whitespace),
        GateConfig::Subword(v) => Some(GateInput::Subword(v)),
        GateConfig::Backend => None,
    };
    let discarded = |gate: GateResult| PairDecision {
        pair_id: pair.id.clone(),
        verdict: Verdict::Discarded,
        score_grammatical: None,
        score_ungrammatical: None,
        gate,
    };
    if let Some(input) = pre_gate {
        let g = length_gate(pair, input).expect("local gates always have counts");
        if !g.keep() {
            return Ok(discarded(g));
        }
    }
    let sg = backend.score(&pair.grammatical_text())?;
    let su = backend.score(&pair.ungrammatical_text())?;
    let gate = match pre_gate {
        Some(input) => length_gate(pair, input).expect("local gates always have counts"),
        None => GateResult::from_counts(sg.num_tokens, su.num_tokens),
    };
    if !gate.keep() {
        return Ok(discarded(gate));
    }
    Ok(PairDecision {
        pair_id: pair.id.clone(),
        verdict: judge_pair_by(basis, &sg, &su, &gate),
        score_grammatical: Some(sg),
        score_ungrammatical: Some(su),
        gate,
    })
}

/// Scores every pair with up to `min(jobs, concurrency_limit)` requests in
/// flight. A backend failure stops the run; pairs decided so far are kept
/// and the report is flagged incomplete.
pub fn evaluate_dataset(
    pairs: &[MinimalPair],
    backend: &dyn ScorerBackend,
    gate: GateConfig<'_>,
    options: &EvalOptions,
) -> Evaluation {
    let workers = options
        .jobs
        .max(1)
        .min(backend.info().concurrency_limit.max(1))
        .min(pairs.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let results: Mutex<Vec<Option<PairDecision>>> = Mutex::new(vec![None; pairs.len()]);
    let failure: Mutex<Option<(usize, ScoreError)>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(pair) = pairs.get(i) else { break };
                match decide(pair, backend, gate, options.basis) {
                    Ok(d) => results.lock().unwrap()[i] = Some(d),
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        let mut f = failure.lock().unwrap();
                        if f.as_ref().is_none_or(|(j, _)| i < *j) {
                            *f = Some((i, e));
                        }
                        break;
                    }
                }
            });
        }
    });

    let error = failure.into_inner().unwrap().map(|(_, e)| e);
    let mut kept_pairs = Vec::new();
    let mut decisions = Vec::new();
    for (pair, d) in pairs.iter().zip(results.into_inner().unwrap()) {
        if let Some(d) = d {
            kept_pairs.push(pair);
            decisions.push(d);
        }
    }
    let mut config = options.config.clone();
    config.insert("gate".into(), gate.as_str().into());
    config.insert("score_basis".into(), options.basis.as_str().into());
    config.insert("jobs".into(), options.jobs.to_string());
    let verdicts: Vec<_> = kept_pairs
        .iter()
        .zip(&decisions)
        .map(|(p, d)| (p.phenomenon, p.condition.as_str(), d.verdict))
        .collect();
    let mut report = aggregate(&backend.info().name, &verdicts, config);
    report.incomplete = error.is_some() || decisions.len() != pairs.len();
    report.error = error.as_ref().map(ToString::to_string);
    Evaluation {
        report,
        decisions,
        error,
    }
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    pair_id: &'a str,
    verdict: Verdict,
    mean_nll_grammatical: Option<f64>,
    mean_nll_ungrammatical: Option<f64>,
    /// Ungrammatical minus grammatical; positive when correct.
    margin: Option<f64>,
}

pub fn write_audit_log<W: Write>(w: &mut W, decisions: &[PairDecision]) -> std::io::Result<()> {
    for d in decisions {
        let g = d.score_grammatical.map(|s| s.mean_nll);
        let u = d.score_ungrammatical.map(|s| s.mean_nll);
        let rec = AuditRecord {
            pair_id: &d.pair_id,
            verdict: d.verdict,
            mean_nll_grammatical: g,
            mean_nll_ungrammatical: u,
            margin: g.zip(u).map(|(g, u)| u - g),
        };
        serde_json::to_writer(&mut *w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(m: f64) -> SentenceScore {
        SentenceScore::from_mean(4, m)
    }

    #[test]
    fn judging() {
        let keep = GateResult::from_counts(4, 4);
        assert_eq!(judge_pair(&score(0.9), &score(1.4), &keep), Verdict::Correct);
        assert_eq!(judge_pair(&score(1.4), &score(1.4), &keep), Verdict::Tie);
        assert_eq!(judge_pair(&score(1.5), &score(1.4), &keep), Verdict::Incorrect);
        let drop = GateResult::from_counts(6, 7);
        assert_eq!(judge_pair(&score(0.9), &score(1.4), &drop), Verdict::Discarded);
    }

    #[test]
    fn audit_margin() {
        let d = PairDecision {
            pair_id: "p".into(),
            verdict: Verdict::Correct,
            score_grammatical: Some(score(0.5)),
            score_ungrammatical: Some(score(1.25)),
            gate: GateResult::from_counts(4, 4),
        };
        let mut out = Vec::new();
        write_audit_log(&mut out, &[d]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["margin"], 0.75);
        assert_eq!(v["verdict"], "correct");
    }
}
