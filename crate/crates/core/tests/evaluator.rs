mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use agreement::evaluator::{
    evaluate_dataset, render_report, EvalOptions, GateConfig, ReportFormat, ScoreBasis, Verdict,
};
use agreement::pairgen::{MinimalPair, Phenomenon};
use agreement::scoring::{
    BackendInfo, OracleBackend, RandomBackend, ScoreError, ScorerBackend, SentenceScore,
    UniformBackend,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sample(step: usize) -> Vec<MinimalPair> {
    common::corpus().pairs.iter().step_by(step).cloned().collect()
}

struct Offset<B> {
    inner: B,
    by: f64,
}

impl<B: ScorerBackend> ScorerBackend for Offset<B> {
    fn info(&self) -> &BackendInfo {
        self.inner.info()
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        let s = self.inner.score(text)?;
        Ok(SentenceScore::from_mean(s.num_tokens, s.mean_nll + self.by))
    }
}

struct FailAfter {
    inner: UniformBackend,
    left: AtomicUsize,
}

impl ScorerBackend for FailAfter {
    fn info(&self) -> &BackendInfo {
        self.inner.info()
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        if self.left.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_err() {
            return Err(ScoreError::Transport("connection closed".into()));
        }
        self.inner.score(text)
    }
}

#[test]
fn results_do_not_depend_on_pair_order_or_jobs() {
    let pairs = sample(7);
    let backend = RandomBackend::new(3);
    let base = evaluate_dataset(&pairs, &backend, GateConfig::Whitespace, &EvalOptions::default());
    let mut shuffled = pairs.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
    let options = EvalOptions {
        jobs: 8,
        ..EvalOptions::default()
    };
    let other = evaluate_dataset(&shuffled, &backend, GateConfig::Whitespace, &options);
    assert_eq!(base.report.coarse, other.report.coarse);
    assert_eq!(base.report.fine, other.report.fine);
    assert!(!other.report.incomplete);
    // decisions stay in input order
    let ids: Vec<_> = other.decisions.iter().map(|d| d.pair_id.clone()).collect();
    let want: Vec<_> = shuffled.iter().map(|p| p.id.clone()).collect();
    assert_eq!(ids, want);
}

#[test]
fn empty_input_gives_null_accuracies() {
    let e = evaluate_dataset(&[], &UniformBackend::new(10), GateConfig::Whitespace, &EvalOptions::default());
    assert_eq!(e.report.coarse.len(), 14);
    assert!(e.report.coarse.iter().all(|r| r.accuracy.is_none() && r.n_total == 0));
    assert!(!e.report.incomplete);
    let json = render_report(&e.report, ReportFormat::Json);
    assert!(json.contains("\"accuracy\": null"));
}

#[test]
fn uniform_ties_everything() {
    let pairs = sample(13);
    let e = evaluate_dataset(&pairs, &UniformBackend::new(171), GateConfig::Whitespace, &EvalOptions::default());
    assert!(e.decisions.iter().all(|d| d.verdict == Verdict::Tie));
    for r in &e.report.coarse {
        assert_eq!(r.n_correct, 0);
        assert_eq!(r.n_tie, r.n_total);
        if r.n_total > 0 {
            assert_eq!(r.accuracy, Some(0.0));
        }
    }
}

#[test]
fn oracle_is_perfect_on_a_sample() {
    let pairs = sample(5);
    let oracle = OracleBackend::new(pairs.iter().map(|p| p.grammatical_text()));
    let e = evaluate_dataset(&pairs, &oracle, GateConfig::Backend, &EvalOptions::default());
    for r in e.report.coarse.iter().chain(&e.report.fine) {
        if r.n_total > 0 {
            assert_eq!(r.accuracy, Some(1.0), "{:?} {:?}", r.phenomenon, r.condition);
        }
    }
}

#[test]
fn backend_failure_marks_report_incomplete() {
    let pairs = sample(50);
    let backend = FailAfter {
        inner: UniformBackend::new(5),
        left: AtomicUsize::new(21),
    };
    let e = evaluate_dataset(&pairs, &backend, GateConfig::Whitespace, &EvalOptions::default());
    assert!(e.report.incomplete);
    assert!(e.error.as_ref().is_some_and(ScoreError::is_transport));
    assert_eq!(e.decisions.len(), 10);
    let decided: usize = e.report.coarse.iter().map(|r| r.n_total).sum();
    assert_eq!(decided, 10);
}

#[test]
fn discarded_pairs_leave_the_denominator() {
    let mut pairs = sample(200);
    pairs[0].ungrammatical.push("!".into());
    let oracle = OracleBackend::new(pairs.iter().map(|p| p.grammatical_text()));
    let e = evaluate_dataset(&pairs, &oracle, GateConfig::Whitespace, &EvalOptions::default());
    assert_eq!(e.decisions[0].verdict, Verdict::Discarded);
    let row = e.report.coarse_row(Phenomenon::SimpleSentence);
    assert_eq!(row.n_discarded, 1);
    let denom = row.n_total - row.n_discarded;
    assert_eq!(row.accuracy, (denom > 0).then_some(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn constant_offset_changes_nothing(seed in any::<u64>(), by in -3.0f64..3.0) {
        let pairs = sample(97);
        let plain = RandomBackend::new(seed);
        let shifted = Offset { inner: RandomBackend::new(seed), by };
        let a = evaluate_dataset(&pairs, &plain, GateConfig::Whitespace, &EvalOptions::default());
        let b = evaluate_dataset(&pairs, &shifted, GateConfig::Whitespace, &EvalOptions::default());
        let va: Vec<_> = a.decisions.iter().map(|d| d.verdict).collect();
        let vb: Vec<_> = b.decisions.iter().map(|d| d.verdict).collect();
        prop_assert_eq!(va, vb);
    }

    #[test]
    fn mean_and_sum_agree_on_kept_pairs(seed in any::<u64>()) {
        let pairs = sample(97);
        let backend = RandomBackend::new(seed);
        let by = |basis| EvalOptions { basis, ..EvalOptions::default() };
        let a = evaluate_dataset(&pairs, &backend, GateConfig::Whitespace, &by(ScoreBasis::Mean));
        let b = evaluate_dataset(&pairs, &backend, GateConfig::Whitespace, &by(ScoreBasis::Sum));
        prop_assert_eq!(a.report.coarse, b.report.coarse);
    }
}
