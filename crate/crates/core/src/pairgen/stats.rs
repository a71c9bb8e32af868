use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::generate::{flip_entry, is_excluded, locate_locus};
use super::{MinimalPair, PairgenError, TestCaseSpec};
use crate::grammar::{enumerate_sentences, Node};

/// Reference corpus figures, printed next to ours for comparison.
pub const REFERENCE_SENTENCES: usize = 13_002;
pub const REFERENCE_MEAN_TOKENS: f64 = 6.88;
pub const REFERENCE_LEXEMES: usize = 88;
pub const REFERENCE_WORD_FORMS: usize = 171;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub mean_tokens: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexemes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_forms: Option<usize>,
}

fn is_word(s: &str) -> bool {
    s.chars().any(char::is_alphabetic)
}

/// Sentence count and mean whitespace tokens over the grammatical members.
pub fn pair_stats(pairs: &[MinimalPair]) -> CorpusStats {
    let tokens: usize = pairs.iter().map(|p| p.grammatical.len()).sum();
    CorpusStats {
        sentences: pairs.len(),
        mean_tokens: if pairs.is_empty() {
            0.0
        } else {
            tokens as f64 / pairs.len() as f64
        },
        lexemes: None,
        word_forms: None,
    }
}

/// Lexemes and word forms that occur in kept pairs, either member, compared
/// case-insensitively. A literal terminal takes the lemma of a lexicon entry
/// with the same surface in any grammar, else counts as its own lexeme.
/// Punctuation is not counted.
pub fn lexicon_stats(specs: &[TestCaseSpec]) -> Result<(usize, usize), PairgenError> {
    let mut lemma_of: HashMap<String, String> = HashMap::new();
    for spec in specs {
        for e in &spec.grammar.lexicon {
            lemma_of
                .entry(e.surface.to_lowercase())
                .or_insert_with(|| e.lemma.to_lowercase());
        }
    }
    let mut lexemes = BTreeSet::new();
    let mut forms = BTreeSet::new();
    for spec in specs {
        let g = &spec.grammar;
        for s in enumerate_sentences(g) {
            let d = &s.derivation;
            if is_excluded(d, spec)? {
                continue;
            }
            for leaf in d.root.leaves() {
                match leaf {
                    Node::Word { entry, surface, .. } if is_word(surface) => {
                        lexemes.insert(g.lexicon[*entry].lemma.to_lowercase());
                        forms.insert(surface.to_lowercase());
                    }
                    Node::Literal { surface } if is_word(surface) => {
                        let form = surface.to_lowercase();
                        lexemes.insert(lemma_of.get(&form).cloned().unwrap_or_else(|| form.clone()));
                        forms.insert(surface.to_lowercase());
                    }
                    _ => {}
                }
            }
            let (_, entry) = locate_locus(d, spec)?;
            let flipped = &g.lexicon[flip_entry(g, entry, spec.flip)?];
            forms.insert(flipped.surface.to_lowercase());
        }
    }
    Ok((lexemes.len(), forms.len()))
}
