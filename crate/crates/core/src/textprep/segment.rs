use super::{Language, RawDocument};

/// Sentence-splitting punctuation: comma, period, semicolon, exclamation and
/// question marks, full-width and ASCII (plus the ideographic full stop and
/// enumeration comma).
pub const DELIMITERS: &[char] = &[
    ',', '.', ';', '!', '?', '，', '。', '．', '；', '！', '？', '、',
];

/// Length of a segment in "words": whitespace tokens for English,
/// non-space non-delimiter characters for Chinese.
pub fn sentence_length(text: &str, language: Language) -> usize {
    match language {
        Language::En => text
            .split_whitespace()
            .filter(|w| w.chars().any(|c| !DELIMITERS.contains(&c)))
            .count(),
        Language::Zh => text
            .chars()
            .filter(|c| !c.is_whitespace() && !DELIMITERS.contains(c))
            .count(),
    }
}

/// Raw split after each run of delimiters; trailing whitespace stays with the
/// segment it follows so that concatenation reproduces the input.
fn raw_segments(text: &str) -> Vec<&str> {
    let mut segments = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if !DELIMITERS.contains(&c) {
            continue;
        }
        while let Some(&(_, next)) = chars.peek() {
            if DELIMITERS.contains(&next) || next.is_whitespace() {
                chars.next();
            } else {
                break;
            }
        }
        let end = chars.peek().map_or(text.len(), |&(i, _)| i);
        segments.push(&text[start..end]);
        start = end;
    }
    if start < text.len() {
        segments.push(&text[start..]);
    }
    segments
}

/// Splits a document into sentences of at least `min_len` words.
///
/// Undersized segments are merged into the following one; an undersized
/// final segment is merged into the preceding one. A document shorter than
/// `min_len` overall comes back as a single segment. Concatenating the output
/// always reproduces `doc.text`.
pub fn segment_sentences(doc: &RawDocument, min_len: usize) -> Vec<String> {
    assert!(min_len >= 1, "min_len must be positive");
    let mut out: Vec<String> = Vec::new();
    let mut pending = String::new();
    for seg in raw_segments(&doc.text) {
        pending.push_str(seg);
        if sentence_length(&pending, doc.language) >= min_len {
            out.push(std::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match out.last_mut() {
            Some(last) => last.push_str(&pending),
            None => out.push(pending),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en(text: &str) -> RawDocument {
        RawDocument::new(text, Language::En, "t")
    }

    #[test]
    fn empty_input() {
        assert!(segment_sentences(&en(""), 5).is_empty());
    }

    #[test]
    fn short_head_merges_forward() {
        let out = segment_sentences(&en("Yes. Thus have I heard at one time."), 5);
        assert_eq!(out, ["Yes. Thus have I heard at one time."]);
    }

    #[test]
    fn both_segments_long_enough() {
        let out = segment_sentences(&en("one two three four five. six seven eight nine ten."), 5);
        assert_eq!(out, ["one two three four five. ", "six seven eight nine ten."]);
    }

    #[test]
    fn short_tail_merges_backward() {
        let out = segment_sentences(&en("one two three four five. six seven."), 5);
        assert_eq!(out, ["one two three four five. six seven."]);
    }

    #[test]
    fn chinese_counts_characters() {
        let doc = RawDocument::new("如是我闻。一时佛在舍卫国，祇树给孤独园。", Language::Zh, "t");
        let out = segment_sentences(&doc, 5);
        assert_eq!(out, ["如是我闻。一时佛在舍卫国，", "祇树给孤独园。"]);
        assert!(out.iter().all(|s| sentence_length(s, Language::Zh) >= 5));
    }

    #[test]
    fn mixed_width_delimiters() {
        let out = segment_sentences(&en("a b c d e; f g h i j! k l m n o?"), 5);
        assert_eq!(out.len(), 3);
    }

    proptest! {
        #[test]
        fn round_trip_and_floor(
            text in "[a-c ]{0,6}([,.;!?，。] ?[a-c ]{0,8}){0,8}",
            min_len in 1usize..6,
            zh in any::<bool>(),
        ) {
            let lang = if zh { Language::Zh } else { Language::En };
            let doc = RawDocument::new(text.clone(), lang, "p");
            let out = segment_sentences(&doc, min_len);
            prop_assert_eq!(out.concat(), text.clone());
            if sentence_length(&text, lang) >= min_len {
                for s in &out {
                    prop_assert!(sentence_length(s, lang) >= min_len);
                }
            } else {
                prop_assert!(out.len() <= 1);
            }
        }
    }
}
