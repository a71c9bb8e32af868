//! Whole-sentence cross-entropy and the scorer backends.

mod backends;
mod external;
mod ngram;
pub mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backends::{masked_by_substitution, OracleBackend, RandomBackend, UniformBackend};
pub use external::{ExternalBackend, ExternalConfig};
pub use ngram::NgramBackend;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("logit matrix has {rows} rows but {targets} targets")]
    DimensionMismatch { rows: usize, targets: usize },
    #[error("target id {id} at position {position} is outside the vocabulary of size {vocab}")]
    TargetOutOfRange {
        position: usize,
        id: u32,
        vocab: usize,
    },
    #[error("non-finite logit at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("empty logit matrix")]
    EmptyMatrix,
    #[error("cannot score an empty sentence")]
    EmptySentence,
    #[error("character span {start}..{end} is outside the text ({len} characters)")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("backend {backend} does not support {capability}")]
    Unsupported {
        backend: String,
        capability: &'static str,
    },
    #[error("invalid n-gram configuration: {0}")]
    InvalidModel(String),
    #[error("backend reported: {0}")]
    Remote(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("backend transport failure: {0}")]
    Transport(String),
}

impl ScoreError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ScoreError::Transport(_) | ScoreError::Protocol(_))
    }
}

/// Row-major `rows x cols` matrix of unnormalized scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, ScoreError> {
        if rows == 0 || cols == 0 {
            return Err(ScoreError::EmptyMatrix);
        }
        if values.len() != rows * cols {
            return Err(ScoreError::DimensionMismatch {
                rows: values.len() / cols,
                targets: rows,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ScoreError::NonFinite {
                row: i / cols,
                col: i % cols,
            });
        }
        Ok(LogitMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ScoreError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ScoreError::DimensionMismatch {
                rows: rows.len(),
                targets: rows.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub num_tokens: usize,
    /// Nats per token.
    pub mean_nll: f64,
    pub sum_nll: f64,
}

impl SentenceScore {
    pub fn from_sum(num_tokens: usize, sum_nll: f64) -> Self {
        SentenceScore {
            num_tokens,
            mean_nll: sum_nll / num_tokens as f64,
            sum_nll,
        }
    }

    pub fn from_mean(num_tokens: usize, mean_nll: f64) -> Self {
        SentenceScore {
            num_tokens,
            mean_nll,
            sum_nll: mean_nll * num_tokens as f64,
        }
    }
}

/// Mean over positions of `logsumexp(row) - row[target]`, in nats.
pub fn cross_entropy(logits: &LogitMatrix, targets: &[u32]) -> Result<SentenceScore, ScoreError> {
    if logits.rows() != targets.len() {
        return Err(ScoreError::DimensionMismatch {
            rows: logits.rows(),
            targets: targets.len(),
        });
    }
    let mut sum = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let target = *row.get(t as usize).ok_or(ScoreError::TargetOutOfRange {
            position: i,
            id: t,
            vocab: logits.cols(),
        })?;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        sum += lse - target;
    }
    Ok(SentenceScore::from_sum(targets.len(), sum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub unmasked_scoring: bool,
    pub masked_candidates: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub vocab_size: usize,
    pub concurrency_limit: usize,
    pub capabilities: Capabilities,
}

/// Log-probability of one masked candidate; `None` when it is not a single
/// piece under the backend tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub logprob: Option<f64>,
    pub num_subwords: usize,
}

pub trait ScorerBackend: Send + Sync {
    fn info(&self) -> &BackendInfo;

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError>;

    /// Candidates substituted at `char_span` (character offsets, end exclusive).
    fn masked_candidates(
        &self,
        text: &str,
        char_span: (usize, usize),
        candidates: &[String],
    ) -> Result<Vec<CandidateScore>, ScoreError> {
        masked_by_substitution(self, text, char_span, candidates, |c| {
            c.split_whitespace().count()
        })
    }
}

pub fn score_sentence(backend: &dyn ScorerBackend, text: &str) -> Result<SentenceScore, ScoreError> {
    if !backend.info().capabilities.unmasked_scoring {
        return Err(ScoreError::Unsupported {
            backend: backend.info().name.clone(),
            capability: "unmasked scoring",
        });
    }
    backend.score(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_way() {
        let m = LogitMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let s = cross_entropy(&m, &[0]).unwrap();
        assert!((s.mean_nll - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let m = LogitMatrix::from_rows(&[vec![1000.0, 0.0]]).unwrap();
        let s = cross_entropy(&m, &[0]).unwrap();
        assert!(s.mean_nll.is_finite());
        assert!(s.mean_nll < 1e-300);
        let s = cross_entropy(&m, &[1]).unwrap();
        assert!((s.mean_nll - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn shape_errors() {
        let m = LogitMatrix::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        assert!(matches!(
            cross_entropy(&m, &[0]),
            Err(ScoreError::DimensionMismatch { rows: 2, targets: 1 })
        ));
        assert!(matches!(
            cross_entropy(&m, &[0, 2]),
            Err(ScoreError::TargetOutOfRange { position: 1, .. })
        ));
        assert!(matches!(
            LogitMatrix::from_rows(&[vec![0.0, f64::NAN]]),
            Err(ScoreError::NonFinite { row: 0, col: 1 })
        ));
        assert!(LogitMatrix::from_rows(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn mean_times_count_is_sum() {
        let m = LogitMatrix::from_rows(&[vec![0.5, -1.0, 2.0], vec![3.0, 0.0, 0.1]]).unwrap();
        let s = cross_entropy(&m, &[2, 1]).unwrap();
        assert_eq!(s.num_tokens, 2);
        assert!((s.mean_nll * 2.0 - s.sum_nll).abs() <= 1e-12 * s.sum_nll);
    }
}
