//! Finite feature-annotated context-free grammars.
//!
//! A grammar file is line oriented and looks like this:
//!
//! ```text
//! # simple sentence
//! S -> NP[num=sg] V[num=sg] '.' | NP[num=pl] V[num=pl] '.'
//! NP[num=sg] -> 'Der' 'Autor'
//! NP[num=pl] -> 'Die' 'Autoren'
//! V[num=sg] -> 'lacht'@lachen
//! V[num=pl] -> 'lachen'@lachen
//! ```
//!
//! The first left-hand side is the start symbol. An alternative consisting of
//! exactly one quoted terminal is a lexicon entry; `@lemma` names its lemma
//! (defaults to the surface). Lines starting with `|` continue the previous
//! rule.
//!
//! Features on a right-hand-side symbol constrain which alternatives of that
//! nonterminal may be chosen: an alternative is admissible iff its left-hand
//! side features unify with the constraint. Features are not propagated
//! implicitly from parent to child.

mod enumerate;
mod parse;
mod render;
mod validate;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use enumerate::{enumerate_sentences, Derivation, Node, Sentence};
pub use parse::{parse_grammar, GrammarError};
pub use render::render_grammar;
pub use validate::{validate_grammar, Diagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Number {
    Sg,
    Pl,
}

impl Number {
    pub fn flipped(self) -> Self {
        match self {
            Number::Sg => Number::Pl,
            Number::Pl => Number::Sg,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Number::Sg => "sg",
            Number::Pl => "pl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Person {
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "3")]
    Third,
}

impl Person {
    /// Reflexive person flip: first and second person map to third, third maps
    /// to first. Only the 1/3 pair is an involution.
    pub fn flipped(self) -> Self {
        match self {
            Person::First | Person::Second => Person::Third,
            Person::Third => Person::First,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Person::First => "1",
            Person::Second => "2",
            Person::Third => "3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Nom,
    Acc,
    Dat,
    Gen,
}

impl Case {
    /// Accusative and dative swap; nominative and genitive swap.
    pub fn flipped(self) -> Self {
        match self {
            Case::Acc => Case::Dat,
            Case::Dat => Case::Acc,
            Case::Nom => Case::Gen,
            Case::Gen => Case::Nom,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Nom => "nom",
            Case::Acc => "acc",
            Case::Dat => "dat",
            Case::Gen => "gen",
        }
    }
}

/// Number, person and case; absent features unify with anything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureBundle {
    pub number: Option<Number>,
    pub person: Option<Person>,
    pub case: Option<Case>,
}

fn unify_slot<T: PartialEq + Copy>(a: Option<T>, b: Option<T>) -> Result<Option<T>, ()> {
    match (a, b) {
        (Some(x), Some(y)) if x != y => Err(()),
        (Some(x), _) => Ok(Some(x)),
        (None, y) => Ok(y),
    }
}

impl FeatureBundle {
    pub fn is_empty(&self) -> bool {
        self.number.is_none() && self.person.is_none() && self.case.is_none()
    }

    /// Merges two bundles, or `None` when a feature is specified differently.
    pub fn unify(&self, other: &FeatureBundle) -> Option<FeatureBundle> {
        Some(FeatureBundle {
            number: unify_slot(self.number, other.number).ok()?,
            person: unify_slot(self.person, other.person).ok()?,
            case: unify_slot(self.case, other.case).ok()?,
        })
    }

    pub fn with_number(mut self, number: Option<Number>) -> Self {
        self.number = number;
        self
    }
}

impl fmt::Display for FeatureBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return Ok(());
        }
        let mut parts = Vec::new();
        if let Some(n) = self.number {
            parts.push(format!("num={}", n.as_str()));
        }
        if let Some(p) = self.person {
            parts.push(format!("per={}", p.as_str()));
        }
        if let Some(c) = self.case {
            parts.push(format!("case={}", c.as_str()));
        }
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Terminal,
    Nonterminal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol {
    pub kind: SymbolKind,
    /// Surface string for terminals, category name for nonterminals.
    pub name: String,
    pub features: FeatureBundle,
}

impl Symbol {
    pub fn terminal(surface: impl Into<String>) -> Self {
        Symbol {
            kind: SymbolKind::Terminal,
            name: surface.into(),
            features: FeatureBundle::default(),
        }
    }

    pub fn nonterminal(name: impl Into<String>, features: FeatureBundle) -> Self {
        Symbol {
            kind: SymbolKind::Nonterminal,
            name: name.into(),
            features,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.kind == SymbolKind::Terminal
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Production {
    pub lhs: String,
    pub lhs_features: FeatureBundle,
    pub rhs: Vec<Symbol>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub lemma: String,
    pub category: String,
    pub features: FeatureBundle,
    pub surface: String,
}

/// One alternative in file order: an index into `productions` or `lexicon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    Production(usize),
    Lexical(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub start: String,
    pub productions: Vec<Production>,
    pub lexicon: Vec<LexiconEntry>,
    /// All alternatives in the order they appear in the source.
    pub order: Vec<Alternative>,
}

impl Grammar {
    pub fn lhs_of(&self, alt: Alternative) -> (&str, &FeatureBundle) {
        match alt {
            Alternative::Production(i) => {
                let p = &self.productions[i];
                (&p.lhs, &p.lhs_features)
            }
            Alternative::Lexical(i) => {
                let e = &self.lexicon[i];
                (&e.category, &e.features)
            }
        }
    }

    /// Alternatives grouped by left-hand side, each group in file order.
    pub fn alternatives_by_lhs(&self) -> HashMap<&str, Vec<Alternative>> {
        let mut map: HashMap<&str, Vec<Alternative>> = HashMap::new();
        for &alt in &self.order {
            map.entry(self.lhs_of(alt).0).or_default().push(alt);
        }
        map
    }

    /// Left-hand sides in order of first appearance.
    pub fn nonterminals(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for &alt in &self.order {
            let name = self.lhs_of(alt).0;
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    /// Looks up the entry with the given lemma, category and exact features.
    pub fn find_entry(
        &self,
        lemma: &str,
        category: &str,
        features: &FeatureBundle,
    ) -> Option<&LexiconEntry> {
        self.lexicon
            .iter()
            .find(|e| e.lemma == lemma && e.category == category && &e.features == features)
    }

    pub fn is_lexical_category(&self, name: &str) -> bool {
        self.lexicon.iter().any(|e| e.category == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unify_merges_compatible_bundles() {
        let a = FeatureBundle {
            number: Some(Number::Sg),
            ..Default::default()
        };
        let b = FeatureBundle {
            person: Some(Person::Third),
            ..Default::default()
        };
        let u = a.unify(&b).unwrap();
        assert_eq!(u.number, Some(Number::Sg));
        assert_eq!(u.person, Some(Person::Third));
        assert_eq!(u.case, None);
    }

    #[test]
    fn unify_rejects_conflicts() {
        let sg = FeatureBundle::default().with_number(Some(Number::Sg));
        let pl = FeatureBundle::default().with_number(Some(Number::Pl));
        assert!(sg.unify(&pl).is_none());
        assert_eq!(sg.unify(&FeatureBundle::default()), Some(sg));
    }

    #[test]
    fn flips() {
        assert_eq!(Number::Sg.flipped().flipped(), Number::Sg);
        assert_eq!(Case::Acc.flipped(), Case::Dat);
        assert_eq!(Case::Acc.flipped().flipped(), Case::Acc);
        assert_eq!(Person::First.flipped(), Person::Third);
        assert_eq!(Person::First.flipped().flipped(), Person::First);
        assert_eq!(Person::Second.flipped(), Person::Third);
    }

    #[test]
    fn display_features() {
        let f = FeatureBundle {
            number: Some(Number::Pl),
            person: Some(Person::First),
            case: Some(Case::Acc),
        };
        assert_eq!(f.to_string(), "[num=pl,per=1,case=acc]");
        assert_eq!(FeatureBundle::default().to_string(), "");
    }
}
