use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::{
    Alternative, Case, FeatureBundle, Grammar, LexiconEntry, Number, Person, Production, Symbol,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}, column {column}: unknown feature {text}")]
    UnknownFeature {
        line: usize,
        column: usize,
        text: String,
    },
    #[error("line {line}: duplicate lexicon entry {lemma}/{category}{features}")]
    DuplicateLexicon {
        line: usize,
        lemma: String,
        category: String,
        features: String,
    },
    #[error("unproductive nonterminal {name} (line {line})")]
    Unproductive { name: String, line: usize },
    #[error("grammar has no productions")]
    Empty,
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(src: &str, line: usize) -> Self {
        Cursor {
            chars: src.chars().collect(),
            pos: 0,
            line,
        }
    }

    fn column(&self) -> usize {
        self.pos + 1
    }

    fn err(&self, message: impl Into<String>) -> GrammarError {
        GrammarError::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn eat(&mut self, s: &str) -> bool {
        self.skip_ws();
        let want: Vec<char> = s.chars().collect();
        if self.chars[self.pos..].starts_with(&want) {
            self.pos += want.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, GrammarError> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_alphabetic() || c == '_' => self.pos += 1,
            _ => return Err(self.err("expected a nonterminal name")),
        }
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn lemma(&mut self) -> Result<String, GrammarError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_alphanumeric() || matches!(c, '_' | '-' | '.')) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a lemma after '@'"));
        }
        Ok(self.chars[start..self.pos].iter().collect())
    }

    fn quoted(&mut self) -> Result<String, GrammarError> {
        // opening quote already consumed
        let mut out = String::new();
        loop {
            match self.peek() {
                None => return Err(self.err("unterminated terminal")),
                Some('\'') => {
                    self.pos += 1;
                    break;
                }
                Some('\\') => {
                    self.pos += 1;
                    match self.peek() {
                        Some(c @ ('\'' | '\\')) => {
                            out.push(c);
                            self.pos += 1;
                        }
                        _ => return Err(self.err("invalid escape in terminal")),
                    }
                }
                Some(c) => {
                    out.push(c);
                    self.pos += 1;
                }
            }
        }
        if out.is_empty() {
            return Err(self.err("empty terminal"));
        }
        if out.chars().any(char::is_whitespace) {
            return Err(self.err("terminal contains whitespace"));
        }
        Ok(out)
    }

    fn features(&mut self) -> Result<FeatureBundle, GrammarError> {
        let mut fb = FeatureBundle::default();
        if !self.eat("[") {
            return Ok(fb);
        }
        loop {
            self.skip_ws();
            let col = self.column();
            let mut item = String::new();
            while matches!(self.peek(), Some(c) if c != ',' && c != ']') {
                item.push(self.peek().unwrap());
                self.pos += 1;
            }
            let item = item.trim().to_string();
            let unknown = || GrammarError::UnknownFeature {
                line: self.line,
                column: col,
                text: item.clone(),
            };
            let (key, value) = item.split_once('=').ok_or_else(unknown)?;
            match (key.trim(), value.trim()) {
                ("num", "sg") => fb.number = Some(Number::Sg),
                ("num", "pl") => fb.number = Some(Number::Pl),
                ("per", "1") => fb.person = Some(Person::First),
                ("per", "2") => fb.person = Some(Person::Second),
                ("per", "3") => fb.person = Some(Person::Third),
                ("case", "nom") => fb.case = Some(Case::Nom),
                ("case", "acc") => fb.case = Some(Case::Acc),
                ("case", "dat") => fb.case = Some(Case::Dat),
                ("case", "gen") => fb.case = Some(Case::Gen),
                _ => return Err(unknown()),
            }
            if self.eat(",") {
                continue;
            }
            if self.eat("]") {
                return Ok(fb);
            }
            return Err(self.err("expected ',' or ']'"));
        }
    }
}

enum Item {
    Symbol(Symbol),
    Word { surface: String, lemma: Option<String> },
}

fn parse_alternatives(cur: &mut Cursor) -> Result<Vec<Vec<Item>>, GrammarError> {
    let mut alts = Vec::new();
    let mut current = Vec::new();
    loop {
        if cur.at_end() {
            break;
        }
        if cur.eat("|") {
            if current.is_empty() {
                return Err(cur.err("empty alternative"));
            }
            alts.push(std::mem::take(&mut current));
            continue;
        }
        if cur.eat("'") {
            let surface = cur.quoted()?;
            let lemma = if cur.peek() == Some('@') {
                cur.pos += 1;
                Some(cur.lemma()?)
            } else {
                None
            };
            current.push(Item::Word { surface, lemma });
        } else {
            let name = cur.ident()?;
            let features = if cur.peek() == Some('[') {
                cur.features()?
            } else {
                FeatureBundle::default()
            };
            current.push(Item::Symbol(Symbol::nonterminal(name, features)));
        }
    }
    if current.is_empty() {
        return Err(cur.err("empty alternative"));
    }
    alts.push(current);
    Ok(alts)
}

/// Strips a trailing `#` comment that is not inside a quoted terminal.
fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if escaped {
            escaped = false;
            continue;
        }
        match c {
            '\\' if in_quote => escaped = true,
            '\'' => in_quote = !in_quote,
            '#' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

/// Parses grammar file content.
pub fn parse_grammar(text: &str) -> Result<Grammar, GrammarError> {
    let mut productions = Vec::new();
    let mut lexicon: Vec<LexiconEntry> = Vec::new();
    let mut order = Vec::new();
    let mut lex_keys: HashSet<(String, String, FeatureBundle)> = HashSet::new();
    let mut first_use: HashMap<String, usize> = HashMap::new();
    let mut current_lhs: Option<(String, FeatureBundle)> = None;
    let mut start = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw);
        if line.trim().is_empty() {
            continue;
        }
        let mut cur = Cursor::new(line, line_no);
        let (lhs, lhs_features) = if line.trim_start().starts_with('|') {
            let Some(prev) = current_lhs.clone() else {
                return Err(cur.err("continuation line without a preceding rule"));
            };
            cur.eat("|");
            prev
        } else {
            let name = cur.ident()?;
            let features = if cur.peek() == Some('[') {
                cur.features()?
            } else {
                FeatureBundle::default()
            };
            if !cur.eat("->") {
                return Err(cur.err("expected '->'"));
            }
            (name, features)
        };
        if start.is_none() {
            start = Some(lhs.clone());
        }
        current_lhs = Some((lhs.clone(), lhs_features));

        for alt in parse_alternatives(&mut cur)? {
            let lexical = alt.len() == 1 && matches!(alt[0], Item::Word { .. });
            if lexical {
                let Some(Item::Word { surface, lemma }) = alt.into_iter().next() else {
                    unreachable!()
                };
                let lemma = lemma.unwrap_or_else(|| surface.clone());
                let key = (lemma.clone(), lhs.clone(), lhs_features);
                if !lex_keys.insert(key) {
                    return Err(GrammarError::DuplicateLexicon {
                        line: line_no,
                        lemma,
                        category: lhs.clone(),
                        features: lhs_features.to_string(),
                    });
                }
                order.push(Alternative::Lexical(lexicon.len()));
                lexicon.push(LexiconEntry {
                    lemma,
                    category: lhs.clone(),
                    features: lhs_features,
                    surface,
                });
            } else {
                let rhs = to_symbols(alt, line_no, &mut first_use)?;
                order.push(Alternative::Production(productions.len()));
                productions.push(Production {
                    lhs: lhs.clone(),
                    lhs_features,
                    rhs,
                });
            }
        }
    }

    let start = start.ok_or(GrammarError::Empty)?;
    let grammar = Grammar {
        start,
        productions,
        lexicon,
        order,
    };

    let defined: HashSet<&str> = grammar.nonterminals().into_iter().collect();
    let mut undefined: Vec<(&String, &usize)> = first_use
        .iter()
        .filter(|(name, _)| !defined.contains(name.as_str()))
        .collect();
    undefined.sort_by_key(|(_, line)| **line);
    if let Some((name, line)) = undefined.first() {
        return Err(GrammarError::Unproductive {
            name: (*name).clone(),
            line: **line,
        });
    }
    Ok(grammar)
}

fn to_symbols(
    items: Vec<Item>,
    line: usize,
    first_use: &mut HashMap<String, usize>,
) -> Result<Vec<Symbol>, GrammarError> {
    items
        .into_iter()
        .map(|item| match item {
            Item::Symbol(s) => {
                first_use.entry(s.name.clone()).or_insert(line);
                Ok(s)
            }
            Item::Word {
                lemma: Some(_), ..
            } => Err(GrammarError::Syntax {
                line,
                column: 1,
                message: "'@lemma' is only allowed on single-terminal lexicon alternatives"
                    .into(),
            }),
            Item::Word { surface, .. } => Ok(Symbol::terminal(surface)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "S -> NP V '.'\nNP -> ART N\nART -> 'Die'\nN -> 'Autoren' | 'Richterinnen'\nV -> 'lachen' | 'reden'\n";

    #[test]
    fn parses_five_line_example() {
        let g = parse_grammar(EXAMPLE).unwrap();
        assert_eq!(g.start, "S");
        assert_eq!(g.productions.len(), 2);
        let count = |cat: &str| g.lexicon.iter().filter(|e| e.category == cat).count();
        assert_eq!(count("N"), 2);
        assert_eq!(count("V"), 2);
        assert_eq!(count("ART"), 1);
        assert_eq!(g.productions[0].rhs[2], Symbol::terminal("."));
    }

    #[test]
    fn literal_only_rule_is_a_production() {
        let g = parse_grammar("S -> 'Hallo' '.'").unwrap();
        assert_eq!(g.productions.len(), 1);
        assert!(g.lexicon.is_empty());
    }

    #[test]
    fn undefined_nonterminal_is_unproductive() {
        let err = parse_grammar("S -> NP X '.'\nNP -> 'Er'").unwrap_err();
        assert_eq!(err.to_string(), "unproductive nonterminal X (line 1)");
    }

    #[test]
    fn features_and_lemmas() {
        let g = parse_grammar("S -> V[num=sg,per=3]\nV[num=sg,per=3] -> 'lacht'@lachen\n").unwrap();
        let e = &g.lexicon[0];
        assert_eq!(e.lemma, "lachen");
        assert_eq!(e.surface, "lacht");
        assert_eq!(e.features.number, Some(Number::Sg));
        assert_eq!(e.features.person, Some(Person::Third));
    }

    #[test]
    fn unknown_feature_value() {
        let err = parse_grammar("S -> V[num=du]\nV -> 'x'").unwrap_err();
        assert!(matches!(err, GrammarError::UnknownFeature { line: 1, column: 8, .. }), "{err:?}");
    }

    #[test]
    fn duplicate_lexicon_key() {
        let err = parse_grammar("S -> V\nV -> 'a'@x | 'b'@x").unwrap_err();
        assert!(matches!(err, GrammarError::DuplicateLexicon { line: 2, .. }));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_grammar("S NP").unwrap_err();
        assert_eq!(
            err,
            GrammarError::Syntax {
                line: 1,
                column: 3,
                message: "expected '->'".into()
            }
        );
    }

    #[test]
    fn comments_and_continuations() {
        let src = "# header\nS -> A '#' # trailing\nA -> 'x'\n   | 'y'\n";
        let g = parse_grammar(src).unwrap();
        assert_eq!(g.productions[0].rhs[1], Symbol::terminal("#"));
        assert_eq!(g.lexicon.len(), 2);
    }

    #[test]
    fn escaped_quote_in_terminal() {
        let g = parse_grammar(r"S -> 'it\'s'").unwrap();
        assert_eq!(g.lexicon[0].surface, "it's");
    }
}
