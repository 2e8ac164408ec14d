//! Byte-pair encoding and the projection of word-level proper-noun spans
//! onto subword positions.

mod bpe;
mod vocab;

pub use bpe::{apply_bpe, learn_bpe, BpeLearner, BpeModel};
pub use vocab::{word_tokens, Vocab, BOS, CONTINUATION, EOS, PAD, UNK};

use crate::textprep::{PnSpan, TaggedSentence};

#[derive(Debug, thiserror::Error)]
pub enum SubwordError {
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A sentence as subword ids plus its proper-noun mask.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubwordSequence {
    pub ids: Vec<u32>,
    pub pn_mask: Vec<bool>,
    pub pn_spans: Vec<PnSpan>,
}

impl SubwordSequence {
    pub fn plain(ids: Vec<u32>) -> Self {
        let pn_mask = vec![false; ids.len()];
        Self {
            ids,
            pn_mask,
            pn_spans: Vec::new(),
        }
    }

    pub fn with_spans(ids: Vec<u32>, pn_spans: Vec<PnSpan>) -> Self {
        let mut pn_mask = vec![false; ids.len()];
        for s in &pn_spans {
            pn_mask[s.start..s.end].iter_mut().for_each(|m| *m = true);
        }
        Self {
            ids,
            pn_mask,
            pn_spans,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Token ids of each proper-noun span.
    pub fn span_ids(&self) -> impl Iterator<Item = &[u32]> {
        self.pn_spans.iter().map(|s| &self.ids[s.start..s.end])
    }

    /// Mask agrees with the spans and has the right length.
    pub fn is_consistent(&self) -> bool {
        self.pn_mask.len() == self.ids.len()
            && self.pn_mask.iter().enumerate().all(|(i, &m)| {
                m == self.pn_spans.iter().any(|s| s.start <= i && i < s.end)
            })
    }
}

/// Segments every word of `tagged` and maps its word spans to subword spans.
pub fn project_spans(tagged: &TaggedSentence, bpe: &BpeModel, vocab: &Vocab) -> SubwordSequence {
    let mut ids = Vec::new();
    let mut offsets = Vec::with_capacity(tagged.tokens.len() + 1);
    for word in &tagged.tokens {
        offsets.push(ids.len());
        ids.extend(vocab.encode_word(bpe, word));
    }
    offsets.push(ids.len());
    let spans = tagged
        .pn_spans
        .iter()
        .map(|s| PnSpan {
            start: offsets[s.start],
            end: offsets[s.end],
            entry: s.entry,
        })
        .collect();
    SubwordSequence::with_spans(ids, spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(w: &[&str]) -> Vec<String> {
        w.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_word_split_in_three() {
        let bpe = BpeModel::default();
        let vocab = Vocab::from_tokens(["a@@", "b@@", "c"]);
        let tagged = TaggedSentence {
            tokens: words(&["abc"]),
            pn_spans: vec![PnSpan { start: 0, end: 1, entry: 7 }],
        };
        let seq = project_spans(&tagged, &bpe, &vocab);
        assert_eq!(seq.len(), 3);
        assert_eq!(seq.pn_spans, [PnSpan { start: 0, end: 3, entry: 7 }]);
        assert!(seq.is_consistent());
    }

    #[test]
    fn no_spans_all_false() {
        let seq = project_spans(
            &TaggedSentence::untagged(words(&["ab", "c"])),
            &BpeModel::default(),
            &Vocab::default(),
        );
        assert_eq!(seq.pn_mask, [false, false, false]);
    }

    #[test]
    fn adjacent_span_offsets() {
        // word 0 -> 2 subwords, word 1 -> 1 subword
        let bpe = BpeModel::default();
        let vocab = Vocab::from_tokens(["x@@", "y", "z"]);
        let tagged = TaggedSentence {
            tokens: words(&["xy", "z"]),
            pn_spans: vec![
                PnSpan { start: 0, end: 1, entry: 0 },
                PnSpan { start: 1, end: 2, entry: 1 },
            ],
        };
        let seq = project_spans(&tagged, &bpe, &vocab);
        let spans: Vec<(usize, usize)> = seq.pn_spans.iter().map(|s| (s.start, s.end)).collect();
        assert_eq!(spans, [(0, 2), (2, 3)]);
    }

    proptest! {
        #[test]
        fn projection_preserves_spans(
            toks in prop::collection::vec("[abc]{1,5}", 1..8),
            raw_spans in prop::collection::vec((0usize..8, 1usize..3), 0..4),
            merges in 0usize..6,
        ) {
            let bpe = learn_bpe(&[toks.clone()], merges);
            let vocab = Vocab::build(&[toks.clone()], &bpe);
            let mut spans = Vec::new();
            let mut pos = 0;
            for (i, (gap, width)) in raw_spans.into_iter().enumerate() {
                let start = pos + gap % 2;
                let end = start + width;
                if end > toks.len() { break; }
                spans.push(PnSpan { start, end, entry: i });
                pos = end;
            }
            let tagged = TaggedSentence { tokens: toks.clone(), pn_spans: spans.clone() };
            let seq = project_spans(&tagged, &bpe, &vocab);
            prop_assert!(seq.is_consistent());
            let per_word: usize = toks.iter().map(|w| bpe.apply(w).len()).sum();
            prop_assert_eq!(seq.len(), per_word);
            prop_assert_eq!(seq.pn_spans.len(), spans.len());
            let width: usize = seq.pn_spans.iter().map(PnSpan::len).sum();
            prop_assert_eq!(seq.pn_mask.iter().filter(|m| **m).count(), width);
            for (a, b) in seq.pn_spans.iter().zip(&spans) {
                prop_assert_eq!(a.entry, b.entry);
            }
        }
    }
}
