use std::collections::{BTreeMap, HashSet};

use crate::grammar::{enumerate_sentences, Case, Derivation, Grammar, Node};

use super::{
    ConditionRule, ExclusionPredicate, Flip, Manifest, MinimalPair, PairgenError, Phenomenon,
    TestCaseSpec,
};

/// Token index and lexicon entry of the single locus word.
pub fn locate_locus(d: &Derivation, spec: &TestCaseSpec) -> Result<(usize, usize), PairgenError> {
    let count = d.nodes_of(&spec.locus).count();
    let words = d.word_positions(&spec.locus);
    match (count, words.as_slice()) {
        (1, [only]) => Ok(*only),
        (0, _) | (1, []) => Err(PairgenError::LocusNotFound {
            phenomenon: spec.phenomenon,
            locus: spec.locus.clone(),
            sentence: d.tokens().join(" "),
        }),
        (n, _) => Err(PairgenError::LocusMultiple {
            phenomenon: spec.phenomenon,
            locus: spec.locus.clone(),
            count: n,
            sentence: d.tokens().join(" "),
        }),
    }
}

/// Index of the entry with the same lemma and category whose `flip` feature
/// is inverted and whose other features are unchanged.
pub fn flip_entry(g: &Grammar, entry: usize, flip: Flip) -> Result<usize, PairgenError> {
    let e = &g.lexicon[entry];
    let mut target = e.features;
    let flipped = match flip {
        Flip::Number => target.number.map(|n| target.number = Some(n.flipped())),
        Flip::Person => target.person.map(|p| target.person = Some(p.flipped())),
        Flip::Case => target.case.map(|c| target.case = Some(c.flipped())),
    };
    let missing = || PairgenError::MissingCounterpart {
        lemma: e.lemma.clone(),
        category: e.category.clone(),
        features: e.features.to_string(),
        flip,
    };
    flipped.ok_or_else(missing)?;
    g.lexicon
        .iter()
        .position(|c| c.lemma == e.lemma && c.category == e.category && c.features == target)
        .ok_or_else(missing)
}

/// Surface form of the locus word after flipping.
pub fn flip_locus(d: &Derivation, spec: &TestCaseSpec) -> Result<String, PairgenError> {
    let (_, entry) = locate_locus(d, spec)?;
    let target = flip_entry(&spec.grammar, entry, spec.flip)?;
    Ok(spec.grammar.lexicon[target].surface.clone())
}

pub fn tag_condition(d: &Derivation, spec: &TestCaseSpec) -> Result<String, PairgenError> {
    let uncovered = || PairgenError::UncoveredDerivation {
        phenomenon: spec.phenomenon,
        sentence: d.tokens().join(" "),
    };
    match &spec.condition_rule {
        ConditionRule::Numbers(categories) => {
            let mut label = String::new();
            for cat in categories {
                let node = d.nodes_of(cat).next().ok_or_else(uncovered)?;
                let number = node.features().number.ok_or_else(uncovered)?;
                label.push_str(number.as_str());
            }
            if label.is_empty() {
                return Err(uncovered());
            }
            Ok(label)
        }
        ConditionRule::Tiers(tiers) => {
            let mut hits = tiers
                .iter()
                .filter(|(marker, _)| d.contains_category(marker));
            match (hits.next(), hits.next()) {
                (Some((_, label)), None) => Ok(label.clone()),
                _ => Err(uncovered()),
            }
        }
    }
}

fn first_case_word<'a>(node: &'a Node, g: &Grammar) -> Option<(usize, &'a str)> {
    node.leaves().into_iter().find_map(|leaf| match leaf {
        Node::Word { entry, surface, .. }
            if matches!(g.lexicon[*entry].features.case, Some(Case::Nom | Case::Acc)) =>
        {
            Some((*entry, surface.as_str()))
        }
        _ => None,
    })
}

fn subtree_surface(node: &Node) -> String {
    node.leaves()
        .into_iter()
        .filter_map(Node::surface)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Whether any exclusion rule of the spec removes this derivation.
pub fn is_excluded(d: &Derivation, spec: &TestCaseSpec) -> Result<bool, PairgenError> {
    let g = &spec.grammar;
    for rule in &spec.exclusions {
        let undefined = |reason: String| PairgenError::ExclusionUndefined {
            phenomenon: spec.phenomenon,
            rule: rule.name.clone(),
            sentence: d.tokens().join(" "),
            reason,
        };
        let hit = match &rule.predicate {
            ExclusionPredicate::CaseSyncretism(nodes) => {
                let mut all = !nodes.is_empty();
                for cat in nodes {
                    let node = d
                        .nodes_of(cat)
                        .next()
                        .ok_or_else(|| undefined(format!("no {cat} node")))?;
                    let (entry, surface) = first_case_word(node, g)
                        .ok_or_else(|| undefined(format!("no case-marked word under {cat}")))?;
                    let e = &g.lexicon[entry];
                    let mut other = e.features;
                    other.case = match e.features.case {
                        Some(Case::Nom) => Some(Case::Acc),
                        _ => Some(Case::Nom),
                    };
                    let counterpart = g.find_entry(&e.lemma, &e.category, &other).ok_or_else(|| {
                        undefined(format!("{}/{} has no {other} form", e.lemma, e.category))
                    })?;
                    all &= counterpart.surface == surface;
                }
                all
            }
            ExclusionPredicate::SameSurface(nodes) => {
                let mut surfaces = Vec::with_capacity(nodes.len());
                for cat in nodes {
                    let node = d
                        .nodes_of(cat)
                        .next()
                        .ok_or_else(|| undefined(format!("no {cat} node")))?;
                    surfaces.push(subtree_surface(node));
                }
                surfaces.windows(2).all(|w| w[0] == w[1])
            }
        };
        if hit {
            return Ok(true);
        }
    }
    Ok(false)
}

/// One pair per surviving derivation, in enumeration order.
pub fn generate_pairs(spec: &TestCaseSpec) -> Result<Vec<MinimalPair>, PairgenError> {
    let sentences = enumerate_sentences(&spec.grammar);
    let grammatical: HashSet<&[String]> = sentences.iter().map(|s| s.tokens.as_slice()).collect();
    let mut pairs = Vec::new();
    for s in &sentences {
        let d = &s.derivation;
        let (index, _) = locate_locus(d, spec)?;
        let condition = tag_condition(d, spec)?;
        if is_excluded(d, spec)? {
            continue;
        }
        let flipped = flip_locus(d, spec)?;
        if flipped == s.tokens[index] {
            return Err(PairgenError::IdenticalFlip {
                phenomenon: spec.phenomenon,
                surface: flipped,
            });
        }
        let mut ungrammatical = s.tokens.clone();
        ungrammatical[index] = flipped;
        if grammatical.contains(ungrammatical.as_slice()) {
            return Err(PairgenError::FlipIsGrammatical {
                phenomenon: spec.phenomenon,
                sentence: ungrammatical.join(" "),
            });
        }
        pairs.push(MinimalPair {
            id: format!("{}-{:05}", spec.phenomenon.id(), pairs.len()),
            phenomenon: spec.phenomenon,
            condition,
            grammatical: s.tokens.clone(),
            ungrammatical,
            locus_index: index,
        });
    }
    Ok(pairs)
}

/// All pairs of a set of test cases plus the manifest describing them.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: Manifest,
    pub pairs: Vec<MinimalPair>,
}

pub fn generate_corpus(specs: &[TestCaseSpec]) -> Result<Corpus, PairgenError> {
    let mut pairs = Vec::new();
    for spec in specs {
        pairs.extend(generate_pairs(spec)?);
    }
    let grammars: BTreeMap<String, String> = specs
        .iter()
        .map(|s| (s.grammar_file.clone(), s.grammar_sha256.clone()))
        .collect();
    let notes: BTreeMap<Phenomenon, String> = specs
        .iter()
        .filter_map(|s| s.note.clone().map(|n| (s.phenomenon, n)))
        .collect();
    let manifest = Manifest::describe(&pairs, grammars, notes);
    Ok(Corpus { manifest, pairs })
}

#[cfg(test)]
mod tests {
    use super::super::{CaseEntry, ExclusionRule};
    use super::*;

    fn spec(phenomenon: Phenomenon, src: &str, locus: &str, flip: Flip, rule: ConditionRule) -> TestCaseSpec {
        TestCaseSpec::from_source(
            CaseEntry {
                phenomenon,
                grammar: "test.cfg".into(),
                locus: locus.into(),
                flip,
                condition: rule,
                exclude: vec![],
                note: None,
            },
            src,
        )
        .unwrap()
    }

    const SIMPLE: &str = "\
S -> NP[num=sg] V[num=sg] '.' | NP[num=pl] V[num=pl] '.'
NP[num=sg] -> 'Der' 'Autor' | 'Das' 'Kind'
NP[num=pl] -> 'Die' 'Autoren'
V[num=sg] -> 'lacht'@lachen | 'trinkt'@trinken
V[num=pl] -> 'lachen'@lachen | 'trinken'@trinken
";

    fn simple() -> TestCaseSpec {
        spec(
            Phenomenon::SimpleSentence,
            SIMPLE,
            "V",
            Flip::Number,
            ConditionRule::Numbers(vec!["V".into()]),
        )
    }

    #[test]
    fn simple_sentence_pair() {
        let pairs = generate_pairs(&simple()).unwrap();
        assert_eq!(pairs.len(), 6);
        let p = &pairs[0];
        assert_eq!(p.grammatical_text(), "Der Autor lacht .");
        assert_eq!(p.ungrammatical_text(), "Der Autor lachen .");
        assert_eq!(p.locus_index, 2);
        assert_eq!(p.condition, "sg");
        assert_eq!(p.id, "simple_sentence-00000");
        let kind = pairs.iter().find(|p| p.grammatical_text() == "Das Kind trinkt .").unwrap();
        assert_eq!(kind.condition, "sg");
        assert_eq!(pairs[4].condition, "pl");
    }

    #[test]
    fn flip_is_an_involution_for_number() {
        let s = simple();
        for i in 0..s.grammar.lexicon.len() {
            if s.grammar.lexicon[i].category != "V" {
                continue;
            }
            let once = flip_entry(&s.grammar, i, Flip::Number).unwrap();
            assert_ne!(once, i);
            assert_eq!(flip_entry(&s.grammar, once, Flip::Number).unwrap(), i);
        }
    }

    const RA: &str = "\
S -> 'Ich' V[per=1,num=sg] REFL[per=1,num=sg,case=acc] '.' | 'Er' V[per=3,num=sg] REFL[per=3,num=sg,case=acc] '.'
V[per=1,num=sg] -> 'bedanke'@bedanken
V[per=3,num=sg] -> 'bedankt'@bedanken
V[per=1,num=pl] -> 'bedanken'@bedanken
V[per=3,num=pl] -> 'bedanken'@bedanken
REFL[per=1,num=sg,case=acc] -> 'mich'@sich
REFL[per=1,num=sg,case=dat] -> 'mir'@sich
REFL[per=3,num=sg,case=acc] -> 'sich'@sich
";

    #[test]
    fn reflexive_case_flip() {
        let s = spec(
            Phenomenon::RaCase,
            RA,
            "REFL",
            Flip::Case,
            ConditionRule::Numbers(vec!["V".into()]),
        );
        let sentences = enumerate_sentences(&s.grammar);
        assert_eq!(flip_locus(&sentences[0].derivation, &s).unwrap(), "mir");
        // third person has no dative entry
        assert!(matches!(
            flip_locus(&sentences[1].derivation, &s),
            Err(PairgenError::MissingCounterpart { .. })
        ));

        let first_only = RA.replacen(
            " | 'Er' V[per=3,num=sg] REFL[per=3,num=sg,case=acc] '.'",
            "",
            1,
        );
        let s = spec(
            Phenomenon::RaCase,
            &first_only,
            "REFL",
            Flip::Case,
            ConditionRule::Numbers(vec!["V".into()]),
        );
        let pairs = generate_pairs(&s).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].grammatical_text(), "Ich bedanke mich .");
        assert_eq!(pairs[0].ungrammatical_text(), "Ich bedanke mir .");
        assert_eq!(pairs[0].locus_index, 2);
    }

    #[test]
    fn case_flip_is_an_involution() {
        let s = spec(
            Phenomenon::RaCase,
            RA,
            "REFL",
            Flip::Case,
            ConditionRule::Numbers(vec!["V".into()]),
        );
        let mich = s.grammar.lexicon.iter().position(|e| e.surface == "mich").unwrap();
        let mir = flip_entry(&s.grammar, mich, Flip::Case).unwrap();
        assert_eq!(s.grammar.lexicon[mir].surface, "mir");
        assert_eq!(flip_entry(&s.grammar, mir, Flip::Case).unwrap(), mich);
    }

    #[test]
    fn reflexive_person_flip() {
        let s = spec(
            Phenomenon::RaPersonNumber,
            RA,
            "REFL",
            Flip::Person,
            ConditionRule::Numbers(vec!["V".into()]),
        );
        let sentences = enumerate_sentences(&s.grammar);
        assert_eq!(flip_locus(&sentences[0].derivation, &s).unwrap(), "sich");
        assert_eq!(flip_locus(&sentences[1].derivation, &s).unwrap(), "mich");
    }

    #[test]
    fn distractor_condition_labels() {
        let src = "\
S -> MAIN ',' 'dass' NP[num=sg] V[num=sg] '.'
MAIN -> 'Die' 'Vertreter' SAY[num=pl] | 'Der' 'Vertreter' SAY[num=sg]
SAY[num=sg] -> 'sagte'@sagen
SAY[num=pl] -> 'sagten'@sagen
NP[num=sg] -> 'das' 'Kind'
V[num=sg] -> 'trinkt'@trinken
V[num=pl] -> 'trinken'@trinken
";
        let s = spec(
            Phenomenon::InSententialComplement,
            src,
            "V",
            Flip::Number,
            ConditionRule::Numbers(vec!["V".into(), "SAY".into()]),
        );
        let pairs = generate_pairs(&s).unwrap();
        assert_eq!(
            pairs[0].grammatical_text(),
            "Die Vertreter sagten , dass das Kind trinkt ."
        );
        assert_eq!(pairs[0].condition, "sgpl");
        assert_eq!(pairs[1].condition, "sgsg");
    }

    #[test]
    fn tier_labels() {
        let src = "S -> A | B\nA -> 'Ich' V '.'\nB -> 'Ich' V 'heute' '.'\nV[num=sg] -> 'x'@x\nV[num=pl] -> 'y'@x";
        let s = spec(
            Phenomenon::RaCase,
            src,
            "V",
            Flip::Number,
            ConditionRule::Tiers(vec![("A".into(), "simple".into()), ("B".into(), "longer".into())]),
        );
        let labels: Vec<String> = enumerate_sentences(&s.grammar)
            .iter()
            .map(|x| tag_condition(&x.derivation, &s).unwrap())
            .collect();
        assert_eq!(labels, ["simple", "simple", "longer", "longer"]);
    }

    #[test]
    fn uncovered_derivation_is_an_error() {
        let mut s = simple();
        s.condition_rule = ConditionRule::Numbers(vec!["DIST".into()]);
        assert!(matches!(
            generate_pairs(&s),
            Err(PairgenError::UncoveredDerivation { .. })
        ));
    }

    #[test]
    fn locus_errors() {
        let mut s = simple();
        s.locus = "X".into();
        assert!(matches!(generate_pairs(&s), Err(PairgenError::LocusNotFound { .. })));
        let s = spec(
            Phenomenon::ShortVpCoord,
            "S -> V 'und' V\nV[num=sg] -> 'a'@a\nV[num=pl] -> 'b'@a",
            "V",
            Flip::Number,
            ConditionRule::Numbers(vec!["V".into()]),
        );
        assert!(matches!(
            generate_pairs(&s),
            Err(PairgenError::LocusMultiple { count: 2, .. })
        ));
    }

    #[test]
    fn full_exclusion_yields_no_pairs() {
        let mut s = spec(
            Phenomenon::SimpleSentence,
            "S -> NP V[num=sg] '.'\nNP -> 'Er'\nV[num=sg] -> 'lacht'@lachen\nV[num=pl] -> 'lachen'@lachen",
            "V",
            Flip::Number,
            ConditionRule::Numbers(vec!["V".into()]),
        );
        assert_eq!(generate_pairs(&s).unwrap().len(), 1);
        s.exclusions.push(ExclusionRule {
            name: "all".into(),
            predicate: ExclusionPredicate::SameSurface(vec!["NP".into(), "NP".into()]),
        });
        assert!(generate_pairs(&s).unwrap().is_empty());
    }

    #[test]
    fn case_syncretism_exclusion() {
        let src = "\
S -> OBJ V[num=sg] SUBJ[num=sg] '.'
OBJ[num=sg] -> DET_M[num=sg,case=acc] 'Roman'
OBJ[num=pl] -> DET_M[num=pl,case=acc] 'Romane'
SUBJ[num=sg] -> DETS_M[num=sg,case=nom] 'Autor' | DETS_F[num=sg,case=nom] 'Autorin'
DET_M[num=sg,case=nom] -> 'Dieser'@dieser
DET_M[num=sg,case=acc] -> 'Diesen'@dieser
DET_M[num=pl,case=nom] -> 'Diese'@dieser
DET_M[num=pl,case=acc] -> 'Diese'@dieser
DETS_M[num=sg,case=nom] -> 'der'@der
DETS_M[num=sg,case=acc] -> 'den'@der
DETS_F[num=sg,case=nom] -> 'die'@der
DETS_F[num=sg,case=acc] -> 'die'@der
V[num=sg] -> 'empfahl'@empfehlen
V[num=pl] -> 'empfahlen'@empfehlen
";
        let mut s = spec(
            Phenomenon::PreField,
            src,
            "V",
            Flip::Number,
            ConditionRule::Numbers(vec!["V".into(), "OBJ".into()]),
        );
        s.exclusions.push(ExclusionRule {
            name: "ambiguous".into(),
            predicate: ExclusionPredicate::CaseSyncretism(vec!["SUBJ".into(), "OBJ".into()]),
        });
        let texts: Vec<String> = generate_pairs(&s)
            .unwrap()
            .iter()
            .map(MinimalPair::grammatical_text)
            .collect();
        assert_eq!(
            texts,
            [
                "Diesen Roman empfahl der Autor .",
                "Diesen Roman empfahl die Autorin .",
                "Diese Romane empfahl der Autor .",
            ]
        );
    }
}
