use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;

use super::{Alternative, FeatureBundle, Grammar, Number};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// Nonterminal dependency cycle, listed from the first repeated symbol
    /// back to itself.
    Cycle { path: Vec<String> },
    Unreachable { name: String },
    Unproductive { name: String },
    /// A verb lemma present in one number but missing the other.
    UnpairedLemma {
        lemma: String,
        category: String,
        features: FeatureBundle,
        missing: Number,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Cycle { path } => write!(f, "cycle: {}", path.join(" -> ")),
            Diagnostic::Unreachable { name } => {
                write!(f, "unreachable nonterminal {name}")
            }
            Diagnostic::Unproductive { name } => write!(f, "unproductive nonterminal {name}"),
            Diagnostic::UnpairedLemma {
                lemma,
                category,
                features,
                missing,
            } => write!(
                f,
                "unpaired verb lemma {lemma} in {category}{features}: no {} form",
                missing.as_str()
            ),
        }
    }
}

/// Categories whose name starts with `V` are verbal; their lexicon entries
/// must come in sg/pl pairs so the number flip always has a target.
fn is_verbal(category: &str) -> bool {
    category.starts_with('V')
}

fn edges(g: &Grammar) -> BTreeMap<&str, Vec<&str>> {
    let mut map: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for name in g.nonterminals() {
        map.entry(name).or_default();
    }
    for p in &g.productions {
        let out = map.entry(p.lhs.as_str()).or_default();
        for s in p.rhs.iter().filter(|s| !s.is_terminal()) {
            if !out.contains(&s.name.as_str()) {
                out.push(&s.name);
            }
        }
    }
    map
}

fn find_cycles(g: &Grammar, graph: &BTreeMap<&str, Vec<&str>>) -> Vec<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    fn visit<'a>(
        node: &'a str,
        graph: &BTreeMap<&'a str, Vec<&'a str>>,
        marks: &mut HashMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
        seen: &mut HashSet<BTreeSet<&'a str>>,
        out: &mut Vec<Vec<String>>,
    ) {
        marks.insert(node, Mark::Open);
        stack.push(node);
        for &next in graph.get(node).map(Vec::as_slice).unwrap_or(&[]) {
            match marks.get(next) {
                Some(Mark::Open) => {
                    let start = stack.iter().position(|&n| n == next).unwrap();
                    let members: BTreeSet<&str> = stack[start..].iter().copied().collect();
                    if seen.insert(members) {
                        let mut path: Vec<String> =
                            stack[start..].iter().map(|s| s.to_string()).collect();
                        path.push(next.to_string());
                        out.push(path);
                    }
                }
                Some(Mark::Done) => {}
                None => visit(next, graph, marks, stack, seen, out),
            }
        }
        stack.pop();
        marks.insert(node, Mark::Done);
    }

    let mut marks = HashMap::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut roots = vec![g.start.as_str()];
    roots.extend(g.nonterminals());
    for root in roots {
        if !marks.contains_key(root) {
            visit(root, graph, &mut marks, &mut Vec::new(), &mut seen, &mut out);
        }
    }
    out
}

/// Checks finiteness, reachability, productivity and verb-lemma pairing.
/// An empty result means the grammar can be enumerated and flipped.
pub fn validate_grammar(g: &Grammar) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let graph = edges(g);
    let defined: HashSet<&str> = g.nonterminals().into_iter().collect();

    let mut undefined = BTreeSet::new();
    for targets in graph.values() {
        for t in targets {
            if !defined.contains(t) {
                undefined.insert(*t);
            }
        }
    }
    diags.extend(undefined.into_iter().map(|n| Diagnostic::Unproductive {
        name: n.to_string(),
    }));

    diags.extend(
        find_cycles(g, &graph)
            .into_iter()
            .map(|path| Diagnostic::Cycle { path }),
    );

    let mut reached: HashSet<&str> = HashSet::new();
    let mut queue = VecDeque::from([g.start.as_str()]);
    while let Some(n) = queue.pop_front() {
        if !reached.insert(n) {
            continue;
        }
        if let Some(next) = graph.get(n) {
            queue.extend(next.iter().copied());
        }
    }
    for name in g.nonterminals() {
        if !reached.contains(name) {
            diags.push(Diagnostic::Unreachable {
                name: name.to_string(),
            });
        }
    }

    // (lemma, category, features-without-number) -> numbers present
    let mut paradigms: BTreeMap<(&str, &str, FeatureBundle), BTreeSet<Number>> = BTreeMap::new();
    for &alt in &g.order {
        let Alternative::Lexical(i) = alt else { continue };
        let e = &g.lexicon[i];
        if !is_verbal(&e.category) {
            continue;
        }
        if let Some(n) = e.features.number {
            paradigms
                .entry((&e.lemma, &e.category, e.features.with_number(None)))
                .or_default()
                .insert(n);
        }
    }
    for ((lemma, category, features), numbers) in paradigms {
        for want in [Number::Sg, Number::Pl] {
            if !numbers.contains(&want) {
                diags.push(Diagnostic::UnpairedLemma {
                    lemma: lemma.to_string(),
                    category: category.to_string(),
                    features,
                    missing: want,
                });
            }
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::super::parse_grammar;
    use super::*;

    #[test]
    fn clean_example_has_no_diagnostics() {
        let g = parse_grammar(
            "S -> NP V '.'\nNP -> ART N\nART -> 'Die'\nN -> 'Autoren' | 'Richterinnen'\nV -> 'lachen' | 'reden'\n",
        )
        .unwrap();
        assert_eq!(validate_grammar(&g), vec![]);
    }

    #[test]
    fn self_recursion_is_a_cycle() {
        let g = parse_grammar("S -> NP 'lacht'\nNP -> NP 'und' NP | 'Er'").unwrap();
        let d = validate_grammar(&g);
        assert_eq!(
            d,
            vec![Diagnostic::Cycle {
                path: vec!["NP".into(), "NP".into()]
            }]
        );
        assert_eq!(d[0].to_string(), "cycle: NP -> NP");
    }

    #[test]
    fn longer_cycle_path() {
        let g = parse_grammar("S -> A\nA -> B | 'a'\nB -> A 'b'").unwrap();
        let d = validate_grammar(&g);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].to_string(), "cycle: A -> B -> A");
    }

    #[test]
    fn unpaired_verb_lemma() {
        let g = parse_grammar("S -> V\nV[num=sg] -> 'lacht'@lachen").unwrap();
        let d = validate_grammar(&g);
        assert_eq!(d.len(), 1);
        assert!(matches!(
            &d[0],
            Diagnostic::UnpairedLemma { lemma, missing: Number::Pl, .. } if lemma == "lachen"
        ));
    }

    #[test]
    fn unreachable_rule() {
        let g = parse_grammar("S -> 'x'\nT -> 'y'").unwrap();
        assert_eq!(
            validate_grammar(&g),
            vec![Diagnostic::Unreachable { name: "T".into() }]
        );
    }

    #[test]
    fn unproductive_symbol_built_by_hand() {
        let mut g = parse_grammar("S -> A\nA -> 'a'").unwrap();
        g.productions[0].rhs[0].name = "X".into();
        let d = validate_grammar(&g);
        assert!(d.contains(&Diagnostic::Unproductive { name: "X".into() }));
    }
}
