use std::collections::HashMap;

use super::Glossary;

/// Which glossary forms to match against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

/// Half-open token range tagged as a proper noun.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PnSpan {
    pub start: usize,
    pub end: usize,
    pub entry: usize,
}

impl PnSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub pn_spans: Vec<PnSpan>,
}

impl TaggedSentence {
    pub fn untagged(tokens: Vec<String>) -> Self {
        Self {
            tokens,
            pn_spans: Vec::new(),
        }
    }

    /// Sorted, non-overlapping and in bounds.
    pub fn is_well_formed(&self) -> bool {
        let mut prev_end = 0;
        self.pn_spans.iter().all(|s| {
            let ok = s.start >= prev_end && s.start < s.end && s.end <= self.tokens.len();
            prev_end = s.end;
            ok
        })
    }
}

#[derive(Default)]
struct Node<'g> {
    children: HashMap<&'g str, usize>,
    entry: Option<usize>,
}

/// Token-level trie over glossary forms; the lowest entry id wins when two
/// entries share a surface form.
struct FormTrie<'g> {
    nodes: Vec<Node<'g>>,
}

impl<'g> FormTrie<'g> {
    fn build(glossary: &'g Glossary, side: Side) -> Self {
        let mut nodes = vec![Node::default()];
        for (id, entry) in glossary.entries().iter().enumerate() {
            let forms: &[Vec<String>] = match side {
                Side::Source => &entry.source_forms,
                Side::Target => std::slice::from_ref(&entry.target_form),
            };
            for form in forms {
                let mut cur = 0;
                for tok in form {
                    cur = match nodes[cur].children.get(tok.as_str()) {
                        Some(&next) => next,
                        None => {
                            nodes.push(Node::default());
                            let next = nodes.len() - 1;
                            nodes[cur].children.insert(tok.as_str(), next);
                            next
                        }
                    };
                }
                nodes[cur].entry.get_or_insert(id);
            }
        }
        Self { nodes }
    }

    /// Longest form starting at `tokens[start]`, as (end, entry).
    fn longest_at(&self, tokens: &[String], start: usize) -> Option<(usize, usize)> {
        let mut cur = 0;
        let mut best = None;
        for (i, tok) in tokens.iter().enumerate().skip(start) {
            match self.nodes[cur].children.get(tok.as_str()) {
                Some(&next) => cur = next,
                None => break,
            }
            if let Some(entry) = self.nodes[cur].entry {
                best = Some((i + 1, entry));
            }
        }
        best
    }
}

/// Tags glossary proper nouns with leftmost-longest, non-overlapping matching.
pub fn tag_proper_nouns(tokens: &[String], glossary: &Glossary, side: Side) -> TaggedSentence {
    let trie = FormTrie::build(glossary, side);
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match trie.longest_at(tokens, i) {
            Some((end, entry)) => {
                spans.push(PnSpan { start: i, end, entry });
                i = end;
            }
            None => i += 1,
        }
    }
    TaggedSentence {
        tokens: tokens.to_vec(),
        pn_spans: spans,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{Category, GlossaryEntry};
    use proptest::prelude::*;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    fn glossary(targets: &[&[&str]]) -> Glossary {
        Glossary::new(
            targets
                .iter()
                .map(|t| GlossaryEntry {
                    source_forms: vec![toks(t)],
                    target_form: toks(t),
                    category: Category::Other,
                })
                .collect(),
        )
        .unwrap()
    }

    /// Exhaustive reference: enumerate every occurrence by direct comparison,
    /// then repeatedly take the earliest-starting, longest remaining one.
    fn oracle(tokens: &[String], g: &Glossary) -> Vec<PnSpan> {
        let mut occ = Vec::new();
        for start in 0..tokens.len() {
            for end in start + 1..=tokens.len() {
                let id = g
                    .entries()
                    .iter()
                    .position(|e| e.target_form.as_slice() == &tokens[start..end]);
                if let Some(entry) = id {
                    occ.push(PnSpan { start, end, entry });
                }
            }
        }
        let mut out = Vec::new();
        let mut pos = 0;
        loop {
            let next = occ
                .iter()
                .filter(|s| s.start >= pos)
                .min_by_key(|s| (s.start, std::cmp::Reverse(s.end)));
            match next {
                Some(s) => {
                    out.push(*s);
                    pos = s.end;
                }
                None => return out,
            }
        }
    }

    #[test]
    fn single_match() {
        let g = glossary(&[&["Subhuti"]]);
        let t = tag_proper_nouns(&toks(&["the", "elder", "Subhuti"]), &g, Side::Target);
        assert_eq!(t.pn_spans, [PnSpan { start: 2, end: 3, entry: 0 }]);
    }

    #[test]
    fn empty_glossary() {
        let t = tag_proper_nouns(&toks(&["a", "b"]), &Glossary::default(), Side::Target);
        assert!(t.pn_spans.is_empty());
    }

    #[test]
    fn leftmost_longest_wins() {
        let g = glossary(&[&["a", "b"], &["b", "c"]]);
        let tokens = toks(&["a", "b", "c"]);
        assert_eq!(oracle(&tokens, &g), [PnSpan { start: 0, end: 2, entry: 0 }]);
        let t = tag_proper_nouns(&tokens, &g, Side::Target);
        assert_eq!(t.pn_spans, [PnSpan { start: 0, end: 2, entry: 0 }]);
    }

    #[test]
    fn longest_preferred_over_prefix() {
        let g = glossary(&[&["a"], &["a", "b", "c"]]);
        let t = tag_proper_nouns(&toks(&["a", "b", "c", "a", "b"]), &g, Side::Target);
        assert_eq!(
            t.pn_spans,
            [PnSpan { start: 0, end: 3, entry: 1 }, PnSpan { start: 3, end: 4, entry: 0 }]
        );
    }

    #[test]
    fn source_side_uses_all_source_forms() {
        let g = Glossary::new(vec![GlossaryEntry {
            source_forms: vec![toks(&["须", "菩", "提"]), toks(&["善", "现"])],
            target_form: toks(&["Subhuti"]),
            category: Category::Person,
        }])
        .unwrap();
        let t = tag_proper_nouns(&toks(&["长", "老", "善", "现"]), &g, Side::Source);
        assert_eq!(t.pn_spans, [PnSpan { start: 2, end: 4, entry: 0 }]);
    }

    fn small_case() -> impl Strategy<Value = (Vec<String>, Vec<Vec<String>>)> {
        let tok = prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from);
        (
            prop::collection::vec(tok.clone(), 0..=8),
            prop::collection::vec(prop::collection::vec(tok, 1..=3), 0..=4),
        )
    }

    proptest! {
        #[test]
        fn agrees_with_exhaustive_oracle((tokens, forms) in small_case()) {
            let refs: Vec<Vec<&str>> = forms.iter().map(|f| f.iter().map(String::as_str).collect()).collect();
            let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
            let g = glossary(&slices);
            let tagged = tag_proper_nouns(&tokens, &g, Side::Target);
            prop_assert!(tagged.is_well_formed());
            prop_assert_eq!(tagged.pn_spans, oracle(&tokens, &g));
        }
    }
}
