use std::collections::HashSet;

use sha2::{Digest, Sha256};

use super::{
    BackendInfo, CandidateScore, Capabilities, ScoreError, ScorerBackend, SentenceScore,
};
use crate::tokenizer::whitespace_count;

const NATIVE_CONCURRENCY: usize = 64;

fn native_info(name: &str, vocab_size: usize) -> BackendInfo {
    BackendInfo {
        name: name.to_string(),
        vocab_size,
        concurrency_limit: NATIVE_CONCURRENCY,
        capabilities: Capabilities {
            unmasked_scoring: true,
            masked_candidates: true,
        },
    }
}

fn token_count(text: &str) -> Result<usize, ScoreError> {
    match whitespace_count(text) {
        0 => Err(ScoreError::EmptySentence),
        n => Ok(n),
    }
}

/// Scores each candidate by substituting it into `text` and normalizing the
/// sentence log-probabilities over the single-piece candidates.
pub fn masked_by_substitution<B: ScorerBackend + ?Sized>(
    backend: &B,
    text: &str,
    char_span: (usize, usize),
    candidates: &[String],
    pieces: impl Fn(&str) -> usize,
) -> Result<Vec<CandidateScore>, ScoreError> {
    let chars: Vec<char> = text.chars().collect();
    let (start, end) = char_span;
    if start > end || end > chars.len() {
        return Err(ScoreError::SpanOutOfRange {
            start,
            end,
            len: chars.len(),
        });
    }
    let prefix: String = chars[..start].iter().collect();
    let suffix: String = chars[end..].iter().collect();
    let mut out = Vec::with_capacity(candidates.len());
    let mut joint = Vec::new();
    for c in candidates {
        let n = pieces(c);
        if n == 1 {
            let s = backend.score(&format!("{prefix}{c}{suffix}"))?;
            joint.push(-s.sum_nll);
            out.push(CandidateScore {
                logprob: Some(-s.sum_nll),
                num_subwords: n,
            });
        } else {
            out.push(CandidateScore {
                logprob: None,
                num_subwords: n,
            });
        }
    }
    if !joint.is_empty() {
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + joint.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for c in &mut out {
            if let Some(lp) = c.logprob.as_mut() {
                *lp -= lse;
            }
        }
    }
    Ok(out)
}

/// Membership scorer: 0 nats per token for a known grammatical sentence,
/// 1 otherwise.
#[derive(Debug, Clone)]
pub struct OracleBackend {
    info: BackendInfo,
    grammatical: HashSet<String>,
}

impl OracleBackend {
    pub fn new<I, S>(sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let grammatical: HashSet<String> = sentences.into_iter().map(Into::into).collect();
        let words: HashSet<&str> = grammatical.iter().flat_map(|s| s.split_whitespace()).collect();
        OracleBackend {
            info: native_info("oracle", words.len()),
            grammatical,
        }
    }
}

impl ScorerBackend for OracleBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        let n = token_count(text)?;
        let mean = if self.grammatical.contains(text) { 0.0 } else { 1.0 };
        Ok(SentenceScore::from_mean(n, mean))
    }
}

/// Every token costs `ln V`.
#[derive(Debug, Clone)]
pub struct UniformBackend {
    info: BackendInfo,
}

impl UniformBackend {
    pub fn new(vocab_size: usize) -> Self {
        UniformBackend {
            info: native_info("uniform", vocab_size.max(1)),
        }
    }
}

impl ScorerBackend for UniformBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        let n = token_count(text)?;
        Ok(SentenceScore::from_mean(n, (self.info.vocab_size as f64).ln()))
    }
}

/// Seeded pseudo-random score in (0, 1], a pure function of seed and text.
#[derive(Debug, Clone)]
pub struct RandomBackend {
    info: BackendInfo,
    seed: u64,
}

impl RandomBackend {
    pub fn new(seed: u64) -> Self {
        RandomBackend {
            info: native_info("random", 1),
            seed,
        }
    }
}

impl ScorerBackend for RandomBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        let n = token_count(text)?;
        let digest = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(text.as_bytes())
            .finalize();
        let bits = u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"));
        let mean = ((bits >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        Ok(SentenceScore::from_mean(n, mean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_log_vocab() {
        let b = UniformBackend::new(171);
        let s = b.score("Der Autor lacht .").unwrap();
        assert!((s.mean_nll - 5.141664).abs() < 1e-6);
        assert_eq!(s.num_tokens, 4);
        assert!(matches!(b.score(""), Err(ScoreError::EmptySentence)));
    }

    #[test]
    fn oracle_membership() {
        let b = OracleBackend::new(["Der Autor lacht ."]);
        assert_eq!(b.score("Der Autor lacht .").unwrap().mean_nll, 0.0);
        assert_eq!(b.score("Der Autor lachen .").unwrap().mean_nll, 1.0);
    }

    #[test]
    fn random_is_deterministic_and_bounded() {
        let a = RandomBackend::new(7);
        let x = a.score("Der Autor lacht .").unwrap();
        assert_eq!(x, RandomBackend::new(7).score("Der Autor lacht .").unwrap());
        assert_ne!(x, RandomBackend::new(8).score("Der Autor lacht .").unwrap());
        assert!(x.mean_nll > 0.0 && x.mean_nll <= 1.0);
    }

    #[test]
    fn masked_prefers_grammatical_candidate() {
        let b = OracleBackend::new(["Der Mann lacht ."]);
        let text = "Der Mann [MASK] .";
        let r = b
            .masked_candidates(text, (9, 15), &["lacht".into(), "lachen".into()])
            .unwrap();
        assert!(r[0].logprob.unwrap() > r[1].logprob.unwrap());
        let total: f64 = r.iter().map(|c| c.logprob.unwrap().exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let single = b.masked_candidates(text, (9, 15), &["lacht".into()]).unwrap();
        assert_eq!(single[0].logprob, Some(0.0));

        assert!(matches!(
            b.masked_candidates(text, (9, 40), &["lacht".into()]),
            Err(ScoreError::SpanOutOfRange { .. })
        ));
    }
}
