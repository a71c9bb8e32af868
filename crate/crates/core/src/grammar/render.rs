use super::{Alternative, Grammar, Symbol};

fn quote(surface: &str) -> String {
    let mut out = String::with_capacity(surface.len() + 2);
    out.push('\'');
    for c in surface.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

fn symbol(s: &Symbol) -> String {
    if s.is_terminal() {
        quote(&s.name)
    } else {
        format!("{}{}", s.name, s.features)
    }
}

/// Canonical rendering: one alternative per line, in source order.
pub fn render_grammar(g: &Grammar) -> String {
    let mut out = String::new();
    for &alt in &g.order {
        match alt {
            Alternative::Production(i) => {
                let p = &g.productions[i];
                let rhs: Vec<String> = p.rhs.iter().map(symbol).collect();
                out.push_str(&format!("{}{} -> {}\n", p.lhs, p.lhs_features, rhs.join(" ")));
            }
            Alternative::Lexical(i) => {
                let e = &g.lexicon[i];
                let lemma = if e.lemma == e.surface {
                    String::new()
                } else {
                    format!("@{}", e.lemma)
                };
                out.push_str(&format!(
                    "{}{} -> {}{}\n",
                    e.category,
                    e.features,
                    quote(&e.surface),
                    lemma
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse_grammar;
    use super::*;

    #[test]
    fn renders_one_alternative_per_line() {
        let g = parse_grammar("S -> V[num=sg] '.'\nV[num=sg] -> 'lacht'@lachen | 'it\\'s'").unwrap();
        let text = render_grammar(&g);
        assert_eq!(
            text,
            "S -> V[num=sg] '.'\nV[num=sg] -> 'lacht'@lachen\nV[num=sg] -> 'it\\'s'\n"
        );
        assert_eq!(parse_grammar(&text).unwrap(), g);
    }
}
