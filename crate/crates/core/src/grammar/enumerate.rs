use std::collections::HashMap;

use super::{Alternative, FeatureBundle, Grammar, LexiconEntry, Symbol};

/// A node of a derivation tree. `features` are the unified features of the
/// node: the constraint placed on it by its parent unified with the features
/// of the alternative chosen for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Phrase {
        category: String,
        features: FeatureBundle,
        production: usize,
        children: Vec<Node>,
    },
    Word {
        category: String,
        features: FeatureBundle,
        entry: usize,
        surface: String,
    },
    Literal {
        surface: String,
    },
}

impl Node {
    pub fn category(&self) -> Option<&str> {
        match self {
            Node::Phrase { category, .. } | Node::Word { category, .. } => Some(category),
            Node::Literal { .. } => None,
        }
    }

    pub fn features(&self) -> FeatureBundle {
        match self {
            Node::Phrase { features, .. } | Node::Word { features, .. } => *features,
            Node::Literal { .. } => FeatureBundle::default(),
        }
    }

    pub fn surface(&self) -> Option<&str> {
        match self {
            Node::Word { surface, .. } | Node::Literal { surface } => Some(surface),
            Node::Phrase { .. } => None,
        }
    }

    fn walk<'a>(&'a self, out: &mut Vec<&'a Node>) {
        out.push(self);
        if let Node::Phrase { children, .. } = self {
            for c in children {
                c.walk(out);
            }
        }
    }

    /// All nodes in pre-order.
    pub fn preorder(&self) -> Vec<&Node> {
        let mut out = Vec::new();
        self.walk(&mut out);
        out
    }

    /// Leaves (words and literals) left to right.
    pub fn leaves(&self) -> Vec<&Node> {
        self.preorder()
            .into_iter()
            .filter(|n| !matches!(n, Node::Phrase { .. }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub root: Node,
}

impl Derivation {
    pub fn tokens(&self) -> Vec<String> {
        self.root
            .leaves()
            .into_iter()
            .filter_map(|n| n.surface().map(str::to_string))
            .collect()
    }

    /// Nodes (phrases or words) of the given category, in pre-order.
    pub fn nodes_of<'a>(&'a self, category: &'a str) -> impl Iterator<Item = &'a Node> + 'a {
        self.root
            .preorder()
            .into_iter()
            .filter(move |n| n.category() == Some(category))
    }

    /// Token position and lexicon index of every word leaf of `category`.
    pub fn word_positions(&self, category: &str) -> Vec<(usize, usize)> {
        self.root
            .leaves()
            .into_iter()
            .enumerate()
            .filter_map(|(i, n)| match n {
                Node::Word {
                    category: c, entry, ..
                } if c == category => Some((i, *entry)),
                _ => None,
            })
            .collect()
    }

    pub fn contains_category(&self, category: &str) -> bool {
        self.nodes_of(category).next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub derivation: Derivation,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

struct Expander<'g> {
    grammar: &'g Grammar,
    by_lhs: HashMap<&'g str, Vec<Alternative>>,
    depth_limit: usize,
}

impl<'g> Expander<'g> {
    fn expand(&self, name: &str, constraint: &FeatureBundle, depth: usize) -> Vec<Node> {
        // Recursion is rejected by validation; the depth cut keeps a cyclic
        // grammar from looping forever if enumerated anyway.
        if depth > self.depth_limit {
            return Vec::new();
        }
        let Some(alts) = self.by_lhs.get(name) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for &alt in alts {
            match alt {
                Alternative::Lexical(i) => {
                    let e: &LexiconEntry = &self.grammar.lexicon[i];
                    if let Some(features) = constraint.unify(&e.features) {
                        out.push(Node::Word {
                            category: e.category.clone(),
                            features,
                            entry: i,
                            surface: e.surface.clone(),
                        });
                    }
                }
                Alternative::Production(i) => {
                    let p = &self.grammar.productions[i];
                    let Some(features) = constraint.unify(&p.lhs_features) else {
                        continue;
                    };
                    for children in self.expand_sequence(&p.rhs, depth) {
                        out.push(Node::Phrase {
                            category: p.lhs.clone(),
                            features,
                            production: i,
                            children,
                        });
                    }
                }
            }
        }
        out
    }

    /// Cartesian product of the children, leftmost choice varying slowest.
    fn expand_sequence(&self, rhs: &[Symbol], depth: usize) -> Vec<Vec<Node>> {
        let mut acc: Vec<Vec<Node>> = vec![Vec::with_capacity(rhs.len())];
        for sym in rhs {
            let options = if sym.is_terminal() {
                vec![Node::Literal {
                    surface: sym.name.clone(),
                }]
            } else {
                self.expand(&sym.name, &sym.features, depth + 1)
            };
            if options.is_empty() {
                return Vec::new();
            }
            let mut next = Vec::with_capacity(acc.len() * options.len());
            for prefix in &acc {
                for opt in &options {
                    let mut v = prefix.clone();
                    v.push(opt.clone());
                    next.push(v);
                }
            }
            acc = next;
        }
        acc
    }
}

/// Every derivation licensed by the grammar, alternatives in file order with
/// the leftmost choice point varying slowest.
pub fn enumerate_sentences(g: &Grammar) -> Vec<Sentence> {
    let expander = Expander {
        grammar: g,
        by_lhs: g.alternatives_by_lhs(),
        depth_limit: g.nonterminals().len() + 1,
    };
    expander
        .expand(&g.start, &FeatureBundle::default(), 0)
        .into_iter()
        .map(|root| {
            let derivation = Derivation { root };
            let tokens = derivation.tokens();
            Sentence { derivation, tokens }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::parse_grammar;
    use super::*;

    #[test]
    fn five_line_example_yields_four_sentences() {
        let g = parse_grammar(
            "S -> NP V '.'\nNP -> ART N\nART -> 'Die'\nN -> 'Autoren' | 'Richterinnen'\nV -> 'lachen' | 'reden'\n",
        )
        .unwrap();
        let texts: Vec<String> = enumerate_sentences(&g).iter().map(Sentence::text).collect();
        assert_eq!(
            texts,
            [
                "Die Autoren lachen .",
                "Die Autoren reden .",
                "Die Richterinnen lachen .",
                "Die Richterinnen reden ."
            ]
        );
    }

    #[test]
    fn single_choice_grammar() {
        let g = parse_grammar("S -> N V '.'\nN -> 'Er'\nV -> 'lacht'").unwrap();
        assert_eq!(enumerate_sentences(&g).len(), 1);
        let g = parse_grammar("S -> 'Hallo' '.'").unwrap();
        let s = enumerate_sentences(&g);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens, ["Hallo", "."]);
    }

    #[test]
    fn unification_filters_disagreeing_combinations() {
        let g = parse_grammar(
            "S -> N[num=sg] V[num=sg] | N[num=pl] V[num=pl]\n\
             N[num=sg] -> 'Kind'@Kind\nN[num=pl] -> 'Kinder'@Kind\n\
             V[num=sg] -> 'trinkt'@trinken\nV[num=pl] -> 'trinken'@trinken\n",
        )
        .unwrap();
        let texts: Vec<String> = enumerate_sentences(&g).iter().map(Sentence::text).collect();
        assert_eq!(texts, ["Kind trinkt", "Kinder trinken"]);
    }

    #[test]
    fn unconstrained_symbol_ranges_over_all_values() {
        let g = parse_grammar("S -> N\nN[num=sg] -> 'a'\nN[num=pl] -> 'b'").unwrap();
        assert_eq!(enumerate_sentences(&g).len(), 2);
    }

    #[test]
    fn cyclic_grammar_terminates() {
        let g = parse_grammar("S -> NP\nNP -> NP 'und' NP | 'x'").unwrap();
        let out = enumerate_sentences(&g);
        assert!(!out.is_empty());
    }

    #[test]
    fn word_positions_locate_leaves() {
        let g = parse_grammar("S -> A V '.'\nA -> 'Der' 'Autor'\nV -> 'lacht'").unwrap();
        let s = &enumerate_sentences(&g)[0];
        assert_eq!(s.derivation.word_positions("V"), vec![(2, 0)]);
    }
}
