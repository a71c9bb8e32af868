//! Whitespace and sub-word tokenization, and the pair-level length gate.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pairgen::MinimalPair;

pub const UNKNOWN_WORD: &str = "<unk>";
pub const UNKNOWN_PIECE: &str = "[UNK]";
pub const CONTINUATION: &str = "##";
/// Words longer than this map straight to the unknown piece.
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("empty input")]
    Empty,
    #[error("vocabulary has no {UNKNOWN_PIECE} entry")]
    MissingUnknown,
    #[error("duplicate vocabulary entry {token:?} on line {line}")]
    DuplicateEntry { line: usize, token: String },
    #[error("empty vocabulary entry on line {line}")]
    EmptyEntry { line: usize },
    #[error("cannot read vocabulary {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("token counts not reported for pair {0}")]
    MissingCounts(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Corpus-local word vocabulary; id 0 is [`UNKNOWN_WORD`].
#[derive(Debug, Clone)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for WordVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl WordVocab {
    pub fn new() -> Self {
        let mut v = WordVocab {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(UNKNOWN_WORD);
        v
    }

    /// Builds the vocabulary in one pass over `texts`, in first-seen order.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        for t in texts {
            for w in t.split_whitespace() {
                v.insert(w);
            }
        }
        v
    }

    fn insert(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Tokenizes against a frozen vocabulary; unseen words get id 0.
    pub fn tokenize(&self, text: &str) -> Result<TokenSequence, TokenizerError> {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(TokenizerError::Empty);
        }
        let ids = tokens.iter().map(|t| self.id(t)).collect();
        Ok(TokenSequence { tokens, ids })
    }
}

/// Splits on whitespace runs, adding unseen words to `vocab`.
pub fn whitespace_tokenize(
    text: &str,
    vocab: &mut WordVocab,
) -> Result<TokenSequence, TokenizerError> {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(TokenizerError::Empty);
    }
    let ids = tokens.iter().map(|t| vocab.insert(t)).collect();
    Ok(TokenSequence { tokens, ids })
}

pub fn whitespace_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// WordPiece-style vocabulary: one entry per line, line number is the id,
/// continuation pieces start with `##`.
#[derive(Debug, Clone)]
pub struct SubwordVocab {
    entries: Vec<String>,
    index: HashMap<String, u32>,
    unknown: u32,
}

impl SubwordVocab {
    pub fn from_entries(entries: Vec<String>) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() {
                return Err(TokenizerError::EmptyEntry { line: i + 1 });
            }
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(TokenizerError::DuplicateEntry {
                    line: i + 1,
                    token: e.clone(),
                });
            }
        }
        let unknown = *index.get(UNKNOWN_PIECE).ok_or(TokenizerError::MissingUnknown)?;
        Ok(SubwordVocab {
            entries,
            index,
            unknown,
        })
    }

    pub fn parse(text: &str) -> Result<Self, TokenizerError> {
        let entries = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect();
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = std::fs::read_to_string(path).map_err(|source| TokenizerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn unknown_id(&self) -> u32 {
        self.unknown
    }

    /// Greedy longest-match-first pieces of one word.
    pub fn segment_word(&self, word: &str) -> Vec<(String, u32)> {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            return vec![(UNKNOWN_PIECE.to_string(), self.unknown)];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let body: String = chars[start..end].iter().collect();
                let piece = if start > 0 {
                    format!("{CONTINUATION}{body}")
                } else {
                    body
                };
                if let Some(&id) = self.index.get(&piece) {
                    found = Some((piece, id, end));
                    break;
                }
            }
            match found {
                Some((piece, id, end)) => {
                    pieces.push((piece, id));
                    start = end;
                }
                None => return vec![(UNKNOWN_PIECE.to_string(), self.unknown)],
            }
        }
        pieces
    }

    pub fn tokenize(&self, text: &str) -> TokenSequence {
        let mut seq = TokenSequence {
            tokens: Vec::new(),
            ids: Vec::new(),
        };
        for word in text.split_whitespace() {
            for (piece, id) in self.segment_word(word) {
                seq.tokens.push(piece);
                seq.ids.push(id);
            }
        }
        seq
    }

    pub fn count(&self, text: &str) -> usize {
        text.split_whitespace()
            .map(|w| self.segment_word(w).len())
            .sum()
    }
}

pub fn subword_tokenize(text: &str, vocab: &SubwordVocab) -> TokenSequence {
    vocab.tokenize(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateVerdict {
    Keep,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub verdict: GateVerdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub len_grammatical: usize,
    pub len_ungrammatical: usize,
}

impl GateResult {
    pub fn from_counts(len_grammatical: usize, len_ungrammatical: usize) -> Self {
        if len_grammatical == len_ungrammatical {
            GateResult {
                verdict: GateVerdict::Keep,
                reason: None,
                len_grammatical,
                len_ungrammatical,
            }
        } else {
            GateResult {
                verdict: GateVerdict::Discard,
                reason: Some(format!(
                    "token counts differ: {len_grammatical} vs {len_ungrammatical}"
                )),
                len_grammatical,
                len_ungrammatical,
            }
        }
    }

    pub fn keep(&self) -> bool {
        self.verdict == GateVerdict::Keep
    }
}

/// What the gate counts with.
#[derive(Debug, Clone, Copy)]
pub enum GateInput<'a> {
    Whitespace,
    Subword(&'a SubwordVocab),
    /// Counts reported by an external scorer.
    Reported(Option<usize>, Option<usize>),
}

impl fmt::Display for GateInput<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateInput::Whitespace => f.write_str("whitespace"),
            GateInput::Subword(_) => f.write_str("subword"),
            GateInput::Reported(..) => f.write_str("backend"),
        }
    }
}

pub fn length_gate(pair: &MinimalPair, input: GateInput<'_>) -> Result<GateResult, TokenizerError> {
    let (g, u) = match input {
        GateInput::Whitespace => (pair.grammatical.len(), pair.ungrammatical.len()),
        GateInput::Subword(vocab) => (
            vocab.count(&pair.grammatical_text()),
            vocab.count(&pair.ungrammatical_text()),
        ),
        GateInput::Reported(Some(g), Some(u)) => (g, u),
        GateInput::Reported(..) => return Err(TokenizerError::MissingCounts(pair.id.clone())),
    };
    Ok(GateResult::from_counts(g, u))
}
