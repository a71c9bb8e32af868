//! Minimal pair generation.
//!
//! Each test case names a grammar, a locus category and the feature to flip at
//! the locus. Every derivation of the grammar yields one grammatical sentence;
//! flipping the locus word to the counterpart form of the same lemma yields
//! its ungrammatical twin.

mod generate;
mod io;
mod stats;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grammar::{parse_grammar, validate_grammar, Diagnostic, Grammar, GrammarError};

pub use generate::{
    flip_entry, flip_locus, generate_corpus, generate_pairs, is_excluded, locate_locus,
    tag_condition, Corpus,
};
pub use io::{
    read_pairs, read_pairs_file, verify_grammar_checksums, write_pairs, write_pairs_file,
    CountSummary, Manifest, PairFile, FORMAT_VERSION,
};
pub use stats::{
    lexicon_stats, pair_stats, CorpusStats, REFERENCE_LEXEMES, REFERENCE_MEAN_TOKENS,
    REFERENCE_SENTENCES, REFERENCE_WORD_FORMS,
};

/// The fourteen agreement phenomena, in table order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Phenomenon {
    SimpleSentence,
    InSententialComplement,
    ShortVpCoord,
    MediumVpCoord,
    LongVpCoord,
    AcrossPp,
    AcrossSubjRel,
    AcrossObjRel,
    InObjRel,
    SimpleModifier,
    ExtendedModifier,
    PreField,
    RaPersonNumber,
    RaCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    SubjectVerb,
    ReflexiveAnaphora,
}

impl Section {
    pub fn title(self) -> &'static str {
        match self {
            Section::SubjectVerb => "Subject-verb agreement",
            Section::ReflexiveAnaphora => "Reflexive anaphora",
        }
    }
}

impl Phenomenon {
    pub const ALL: [Phenomenon; 14] = [
        Phenomenon::SimpleSentence,
        Phenomenon::InSententialComplement,
        Phenomenon::ShortVpCoord,
        Phenomenon::MediumVpCoord,
        Phenomenon::LongVpCoord,
        Phenomenon::AcrossPp,
        Phenomenon::AcrossSubjRel,
        Phenomenon::AcrossObjRel,
        Phenomenon::InObjRel,
        Phenomenon::SimpleModifier,
        Phenomenon::ExtendedModifier,
        Phenomenon::PreField,
        Phenomenon::RaPersonNumber,
        Phenomenon::RaCase,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Phenomenon::SimpleSentence => "simple_sentence",
            Phenomenon::InSententialComplement => "in_sentential_complement",
            Phenomenon::ShortVpCoord => "short_vp_coord",
            Phenomenon::MediumVpCoord => "medium_vp_coord",
            Phenomenon::LongVpCoord => "long_vp_coord",
            Phenomenon::AcrossPp => "across_pp",
            Phenomenon::AcrossSubjRel => "across_subj_rel",
            Phenomenon::AcrossObjRel => "across_obj_rel",
            Phenomenon::InObjRel => "in_obj_rel",
            Phenomenon::SimpleModifier => "simple_modifier",
            Phenomenon::ExtendedModifier => "extended_modifier",
            Phenomenon::PreField => "pre_field",
            Phenomenon::RaPersonNumber => "ra_person_number",
            Phenomenon::RaCase => "ra_case",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.id() == id)
    }

    /// Human-readable row title.
    pub fn title(self) -> &'static str {
        match self {
            Phenomenon::SimpleSentence => "Simple sentence",
            Phenomenon::InSententialComplement => "In a sentential complement",
            Phenomenon::ShortVpCoord => "Short VP coordination",
            Phenomenon::MediumVpCoord => "Medium VP coordination",
            Phenomenon::LongVpCoord => "Long VP coordination",
            Phenomenon::AcrossPp => "Across a PP",
            Phenomenon::AcrossSubjRel => "Across a subject relative clause",
            Phenomenon::AcrossObjRel => "Across an object relative clause",
            Phenomenon::InObjRel => "In an object relative clause",
            Phenomenon::SimpleModifier => "With a modifier",
            Phenomenon::ExtendedModifier => "With an extended modifier",
            Phenomenon::PreField => "Pre-field",
            Phenomenon::RaPersonNumber => "Person & number agreement",
            Phenomenon::RaCase => "Case agreement",
        }
    }

    pub fn section(self) -> Section {
        match self {
            Phenomenon::RaPersonNumber | Phenomenon::RaCase => Section::ReflexiveAnaphora,
            _ => Section::SubjectVerb,
        }
    }

    /// The feature every test case of this phenomenon must flip.
    pub fn expected_flip(self) -> Flip {
        match self {
            Phenomenon::RaPersonNumber => Flip::Person,
            Phenomenon::RaCase => Flip::Case,
            _ => Flip::Number,
        }
    }
}

impl fmt::Display for Phenomenon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Fixed display order for condition labels.
pub const CONDITION_ORDER: [&str; 9] = [
    "sg", "pl", "sgsg", "plpl", "sgpl", "plsg", "simple", "longer", "SentCompl",
];

pub fn condition_rank(label: &str) -> usize {
    CONDITION_ORDER
        .iter()
        .position(|c| *c == label)
        .unwrap_or(CONDITION_ORDER.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flip {
    Number,
    Person,
    Case,
}

/// Maps a derivation to its condition label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionRule {
    /// Concatenated number values (`sg`/`pl`) of the first node of each listed
    /// category: agreement first, distractor second.
    Numbers(Vec<String>),
    /// `[marker, label]` pairs; the label of the one marker category present.
    Tiers(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionPredicate {
    /// True when, for every listed node, the first case-marked word beneath it
    /// has the same surface in nominative and accusative.
    CaseSyncretism(Vec<String>),
    /// True when the listed nodes all have the same surface string.
    SameSurface(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionRule {
    pub name: String,
    #[serde(flatten)]
    pub predicate: ExclusionPredicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub phenomenon: Phenomenon,
    pub grammar: String,
    pub locus: String,
    pub flip: Flip,
    pub condition: ConditionRule,
    #[serde(default)]
    pub exclude: Vec<ExclusionRule>,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Deserialize)]
struct CasesFile {
    case: Vec<CaseEntry>,
}

#[derive(Debug, Clone)]
pub struct TestCaseSpec {
    pub phenomenon: Phenomenon,
    pub grammar_file: String,
    pub grammar: Grammar,
    /// sha256 of the grammar file bytes.
    pub grammar_sha256: String,
    pub locus: String,
    pub flip: Flip,
    pub condition_rule: ConditionRule,
    pub exclusions: Vec<ExclusionRule>,
    pub note: Option<String>,
}

impl TestCaseSpec {
    /// Builds a spec from in-memory grammar text.
    pub fn from_source(entry: CaseEntry, source: &str) -> Result<Self, PairgenError> {
        let grammar = parse_grammar(source).map_err(|e| PairgenError::Grammar {
            file: entry.grammar.clone(),
            source: e,
        })?;
        Ok(TestCaseSpec {
            phenomenon: entry.phenomenon,
            grammar_sha256: sha256_hex(source.as_bytes()),
            grammar_file: entry.grammar,
            grammar,
            locus: entry.locus,
            flip: entry.flip,
            condition_rule: entry.condition,
            exclusions: entry.exclude,
            note: entry.note,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub id: String,
    pub phenomenon: Phenomenon,
    pub condition: String,
    pub grammatical: Vec<String>,
    pub ungrammatical: Vec<String>,
    pub locus_index: usize,
}

impl MinimalPair {
    pub fn grammatical_text(&self) -> String {
        self.grammatical.join(" ")
    }

    pub fn ungrammatical_text(&self) -> String {
        self.ungrammatical.join(" ")
    }

    /// Checks equal length and a single differing token at `locus_index`.
    pub fn check_single_locus(&self) -> Result<(), String> {
        if self.grammatical.len() != self.ungrammatical.len() {
            return Err(format!(
                "token counts differ ({} vs {})",
                self.grammatical.len(),
                self.ungrammatical.len()
            ));
        }
        let diffs: Vec<usize> = self
            .grammatical
            .iter()
            .zip(&self.ungrammatical)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect();
        if diffs != [self.locus_index] {
            return Err(format!(
                "sentences differ at positions {diffs:?}, expected only {}",
                self.locus_index
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PairgenError {
    #[error("{file}: {source}")]
    Grammar {
        file: String,
        #[source]
        source: GrammarError,
    },
    #[error("{file}: {}", .diagnostics.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid {
        file: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{phenomenon}: locus {locus} not found in \"{sentence}\"")]
    LocusNotFound {
        phenomenon: Phenomenon,
        locus: String,
        sentence: String,
    },
    #[error("{phenomenon}: locus {locus} occurs {count} times in \"{sentence}\"")]
    LocusMultiple {
        phenomenon: Phenomenon,
        locus: String,
        count: usize,
        sentence: String,
    },
    #[error("no counterpart of {lemma}/{category}{features} with flipped {flip:?}")]
    MissingCounterpart {
        lemma: String,
        category: String,
        features: String,
        flip: Flip,
    },
    #[error("{phenomenon}: flipping \"{surface}\" leaves the sentence unchanged")]
    IdenticalFlip {
        phenomenon: Phenomenon,
        surface: String,
    },
    #[error("{phenomenon}: flipped sentence \"{sentence}\" is itself generated by the grammar")]
    FlipIsGrammatical {
        phenomenon: Phenomenon,
        sentence: String,
    },
    #[error("{phenomenon}: condition rule does not cover \"{sentence}\"")]
    UncoveredDerivation {
        phenomenon: Phenomenon,
        sentence: String,
    },
    #[error("{phenomenon}: exclusion rule {rule} is undefined for \"{sentence}\": {reason}")]
    ExclusionUndefined {
        phenomenon: Phenomenon,
        rule: String,
        sentence: String,
        reason: String,
    },
    #[error("{phenomenon}: test case declares flip {declared:?}, expected {expected:?}")]
    WrongFlip {
        phenomenon: Phenomenon,
        declared: Flip,
        expected: Flip,
    },
    #[error("duplicate test case for {0}")]
    DuplicateCase(Phenomenon),
    #[error("cases file: {0}")]
    Cases(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: pair {id} violates the single-locus invariant: {message}")]
    InvalidPair {
        line: usize,
        id: String,
        message: String,
    },
    #[error("checksum mismatch for {what}: manifest {expected}, actual {actual}")]
    ChecksumMismatch {
        what: String,
        expected: String,
        actual: String,
    },
    #[error("count mismatch for {what}: manifest {expected}, actual {actual}")]
    CountMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const CASES_FILE: &str = "cases.toml";

/// Loads `cases.toml` and every grammar it references from `dir`, validating
/// each grammar.
pub fn load_cases(dir: &Path) -> Result<Vec<TestCaseSpec>, PairgenError> {
    let path = dir.join(CASES_FILE);
    let text = fs::read_to_string(&path).map_err(|source| PairgenError::Io {
        path: path.clone(),
        source,
    })?;
    let file: CasesFile =
        toml::from_str(&text).map_err(|e| PairgenError::Cases(e.to_string()))?;
    let mut specs: Vec<TestCaseSpec> = Vec::with_capacity(file.case.len());
    for entry in file.case {
        if specs.iter().any(|s| s.phenomenon == entry.phenomenon) {
            return Err(PairgenError::DuplicateCase(entry.phenomenon));
        }
        let expected = entry.phenomenon.expected_flip();
        if entry.flip != expected {
            return Err(PairgenError::WrongFlip {
                phenomenon: entry.phenomenon,
                declared: entry.flip,
                expected,
            });
        }
        let gpath = dir.join(&entry.grammar);
        let source = fs::read_to_string(&gpath).map_err(|source| PairgenError::Io {
            path: gpath.clone(),
            source,
        })?;
        let spec = TestCaseSpec::from_source(entry, &source)?;
        let diagnostics = validate_grammar(&spec.grammar);
        if !diagnostics.is_empty() {
            return Err(PairgenError::Invalid {
                file: spec.grammar_file,
                diagnostics,
            });
        }
        specs.push(spec);
    }
    specs.sort_by_key(|s| s.phenomenon);
    Ok(specs)
}
