use std::collections::HashMap;

use super::{BackendInfo, Capabilities, ScoreError, ScorerBackend, SentenceScore};

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const UNK: &str = "<unk>";

/// Add-k smoothed n-gram model over whitespace tokens.
///
/// Sentences are padded with `order - 1` start markers and one end marker;
/// the end marker is predicted, so `num_tokens` is the word count plus one.
/// Unseen words share one unknown bucket.
#[derive(Debug, Clone)]
pub struct NgramBackend {
    info: BackendInfo,
    order: usize,
    k: f64,
    ids: HashMap<String, u32>,
    ngrams: HashMap<Vec<u32>, u64>,
    contexts: HashMap<Vec<u32>, u64>,
}

impl NgramBackend {
    pub fn train<S: AsRef<str>>(
        corpus: &[Vec<S>],
        order: usize,
        k: f64,
    ) -> Result<Self, ScoreError> {
        if !(2..=3).contains(&order) {
            return Err(ScoreError::InvalidModel(format!(
                "order must be 2 or 3, got {order}"
            )));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(ScoreError::InvalidModel(format!(
                "smoothing constant must be positive, got {k}"
            )));
        }
        if corpus.iter().all(|s| s.is_empty()) {
            return Err(ScoreError::InvalidModel("empty training corpus".into()));
        }
        let mut ids = HashMap::new();
        for special in [BOS, EOS, UNK] {
            let next = ids.len() as u32;
            ids.insert(special.to_string(), next);
        }
        for sentence in corpus {
            for w in sentence {
                let next = ids.len() as u32;
                ids.entry(w.as_ref().to_string()).or_insert(next);
            }
        }
        let mut model = NgramBackend {
            info: BackendInfo {
                name: format!("ngram{order}"),
                // everything except the start marker can be predicted
                vocab_size: ids.len() - 1,
                concurrency_limit: 64,
                capabilities: Capabilities {
                    unmasked_scoring: true,
                    masked_candidates: true,
                },
            },
            order,
            k,
            ids,
            ngrams: HashMap::new(),
            contexts: HashMap::new(),
        };
        for sentence in corpus.iter().filter(|s| !s.is_empty()) {
            let padded = model.pad(sentence.iter().map(AsRef::as_ref));
            for window in padded.windows(order) {
                *model.ngrams.entry(window.to_vec()).or_default() += 1;
                *model.contexts.entry(window[..order - 1].to_vec()).or_default() += 1;
            }
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn pad<'a>(&self, words: impl Iterator<Item = &'a str>) -> Vec<u32> {
        let unk = self.ids[UNK];
        let mut out = vec![self.ids[BOS]; self.order - 1];
        out.extend(words.map(|w| self.ids.get(w).copied().unwrap_or(unk)));
        out.push(self.ids[EOS]);
        out
    }

    /// Smoothed conditional probability of the last id given the others.
    pub fn probability(&self, window: &[u32]) -> f64 {
        let c = self.ngrams.get(window).copied().unwrap_or(0) as f64;
        let ctx = self
            .contexts
            .get(&window[..window.len() - 1])
            .copied()
            .unwrap_or(0) as f64;
        (c + self.k) / (ctx + self.k * self.info.vocab_size as f64)
    }
}

impl ScorerBackend for NgramBackend {
    fn info(&self) -> &BackendInfo {
        &self.info
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ScoreError> {
        if text.split_whitespace().next().is_none() {
            return Err(ScoreError::EmptySentence);
        }
        let padded = self.pad(text.split_whitespace());
        let sum: f64 = padded
            .windows(self.order)
            .map(|w| -self.probability(w).ln())
            .sum();
        Ok(SentenceScore::from_sum(padded.len() + 1 - self.order, sum))
    }
}
