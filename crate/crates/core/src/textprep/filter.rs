use std::str::FromStr;

use super::{RawDocument, TextError};

/// One annotation-removal rule.
///
/// Textual form: `literal:<text>` removes every occurrence of `<text>`;
/// `brackets:<open><close>` removes bracketed spans including nested ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RemovalRule {
    Literal(String),
    Brackets { open: char, close: char },
}

impl FromStr for RemovalRule {
    type Err = TextError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let bad = |reason| TextError::BadRule {
            rule: spec.to_string(),
            reason,
        };
        let (kind, arg) = spec.split_once(':').ok_or_else(|| bad("missing `kind:` prefix"))?;
        match kind {
            "literal" if arg.is_empty() => Err(bad("empty literal")),
            "literal" => Ok(RemovalRule::Literal(arg.to_string())),
            "brackets" => {
                let chars: Vec<char> = arg.chars().collect();
                match chars[..] {
                    [open, close] if open != close => Ok(RemovalRule::Brackets { open, close }),
                    [_, _] => Err(bad("open and close brackets must differ")),
                    _ => Err(bad("expected exactly two bracket characters")),
                }
            }
            _ => Err(bad("unknown rule kind")),
        }
    }
}

impl RemovalRule {
    fn apply(&self, text: &str) -> String {
        match self {
            RemovalRule::Literal(lit) => text.replace(lit.as_str(), ""),
            RemovalRule::Brackets { open, close } => strip_brackets(text, *open, *close),
        }
    }
}

/// Removes balanced `open ... close` spans, honouring nesting. An opening
/// bracket that is never closed leaves the rest of the text untouched, and
/// stray closing brackets are kept.
fn strip_brackets(text: &str, open: char, close: char) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut span_start = 0usize;
    for (i, c) in text.char_indices() {
        if c == open {
            if depth == 0 {
                span_start = i;
            }
            depth += 1;
        } else if c == close && depth > 0 {
            depth -= 1;
        } else if depth == 0 {
            out.push(c);
        }
    }
    if depth > 0 {
        out.push_str(&text[span_start..]);
    }
    out
}

/// Applies every rule until none of them changes the text any more.
pub fn filter_scripture(doc: &RawDocument, rules: &[RemovalRule]) -> RawDocument {
    let mut text = doc.text.clone();
    loop {
        let next = rules.iter().fold(text.clone(), |acc, rule| rule.apply(&acc));
        if next == text {
            break;
        }
        text = next;
    }
    RawDocument {
        text,
        ..doc.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::Language;

    fn doc(text: &str) -> RawDocument {
        RawDocument::new(text, Language::En, "t")
    }

    fn run(text: &str, rules: &[&str]) -> String {
        let rules: Vec<RemovalRule> = rules.iter().map(|r| r.parse().unwrap()).collect();
        filter_scripture(&doc(text), &rules).text
    }

    /// Independent reference: character-by-character depth counter that
    /// records which characters sit inside a closed bracket pair.
    fn depth_scanner(text: &str, open: char, close: char) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut removed = vec![false; chars.len()];
        let mut stack = Vec::new();
        for (i, &c) in chars.iter().enumerate() {
            if c == open {
                stack.push(i);
            } else if c == close {
                if let Some(start) = stack.pop() {
                    if stack.is_empty() {
                        removed[start..=i].iter_mut().for_each(|r| *r = true);
                    }
                }
            }
        }
        chars
            .iter()
            .zip(&removed)
            .filter(|(_, r)| !**r)
            .map(|(c, _)| *c)
            .collect()
    }

    #[test]
    fn parenthesized_note_removed() {
        assert_eq!(run("X (note) Y", &["brackets:()"]), "X  Y");
    }

    #[test]
    fn no_rules_is_identity() {
        assert_eq!(run("X (note) Y", &[]), "X (note) Y");
    }

    #[test]
    fn nested_brackets() {
        let text = "A [b [c] d] E";
        assert_eq!(depth_scanner(text, '[', ']'), "A  E");
        assert_eq!(run(text, &["brackets:[]"]), "A  E");
    }

    #[test]
    fn literal_removed_to_fixpoint() {
        assert_eq!(run("aabb", &["literal:ab"]), "");
        assert_eq!(run("注：x 注：y", &["literal:注："]), "x y");
    }

    #[test]
    fn unbalanced_brackets_kept() {
        assert_eq!(run("a (b", &["brackets:()"]), "a (b");
        assert_eq!(run("a) b", &["brackets:()"]), "a) b");
    }

    #[test]
    fn malformed_rules() {
        for bad in ["brackets:(", "brackets:((", "literal:", "regex:a+", "nocolon"] {
            assert!(bad.parse::<RemovalRule>().is_err(), "{bad}");
        }
        assert_eq!(
            "brackets:（）".parse::<RemovalRule>().unwrap(),
            RemovalRule::Brackets { open: '（', close: '）' }
        );
    }

    proptest::proptest! {
        #[test]
        fn brackets_match_depth_scanner(text in "[ab\\[\\] ]{0,24}") {
            proptest::prop_assert_eq!(strip_brackets(&text, '[', ']'), depth_scanner(&text, '[', ']'));
        }
    }
}
