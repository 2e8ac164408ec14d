use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::SubwordError;

/// Learned byte-pair merges. Merges never cross word boundaries; the
/// boundary itself is encoded at the token level (see [`super::Vocab`]).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    vocab: BTreeSet<String>,
}

/// Learning options. `min_frequency` stops learning once the best pair is
/// rarer than this.
#[derive(Clone, Copy, Debug)]
pub struct BpeLearner {
    pub num_merges: usize,
    pub min_frequency: usize,
}

impl BpeLearner {
    pub fn new(num_merges: usize) -> Self {
        Self {
            num_merges,
            min_frequency: 2,
        }
    }

    pub fn learn<W: AsRef<str>>(&self, corpus: &[Vec<W>]) -> BpeModel {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for word in corpus.iter().flatten() {
            *counts.entry(word.as_ref()).or_default() += 1;
        }
        let mut words: Vec<(Vec<String>, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !w.is_empty())
            .map(|(w, n)| (w.chars().map(String::from).collect(), n))
            .collect();
        words.sort();

        let mut merges = Vec::new();
        while merges.len() < self.num_merges {
            let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
            for (symbols, n) in &words {
                for w in symbols.windows(2) {
                    *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += n;
                }
            }
            // Highest count, then lexicographically smallest pair.
            let best = pairs
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)));
            let Some(((left, right), count)) = best else { break };
            if count < self.min_frequency.max(1) {
                break;
            }
            let pair = (left.to_string(), right.to_string());
            for (symbols, _) in words.iter_mut() {
                merge_pair(symbols, &pair.0, &pair.1);
            }
            merges.push(pair);
        }

        let vocab = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
        BpeModel::from_parts(merges, vocab)
    }
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
        }
        i += 1;
    }
}

/// Learns `num_merges` merges with the default minimum pair frequency of 2.
pub fn learn_bpe<W: AsRef<str>>(corpus: &[Vec<W>], num_merges: usize) -> BpeModel {
    BpeLearner::new(num_merges).learn(corpus)
}

impl BpeModel {
    fn from_parts(merges: Vec<(String, String)>, vocab: BTreeSet<String>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        Self { merges, ranks, vocab }
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    /// Segments one word, applying merges strictly in learned order.
    pub fn apply(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = word.chars().map(String::from).collect();
        let mut last_rank: Option<usize> = None;
        loop {
            let next = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).copied())
                .filter(|&r| last_rank.is_none_or(|last| r > last))
                .min();
            let Some(rank) = next else { break };
            let (left, right) = &self.merges[rank];
            merge_pair(&mut symbols, left, right);
            last_rank = Some(rank);
        }
        symbols
    }

    /// Merges file: one `left right` pair per line; `#` lines are comments.
    pub fn to_merges_text(&self) -> String {
        let mut out = String::from("#version: 0.2\n");
        for (l, r) in &self.merges {
            out.push_str(l);
            out.push(' ');
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    /// Vocabulary file: `subword \t id` per line.
    pub fn to_vocab_text(&self) -> String {
        self.vocab
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{s}\t{i}\n"))
            .collect()
    }

    pub fn from_texts(merges: &str, vocab: Option<&str>) -> Result<Self, SubwordError> {
        let mut pairs = Vec::new();
        for (i, line) in merges.lines().enumerate() {
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => {
                    pairs.push((l.to_string(), r.to_string()))
                }
                _ => return Err(SubwordError::Format(format!("merges line {}: `{line}`", i + 1))),
            }
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = pairs.iter().find(|p| !seen.insert((*p).clone())) {
            return Err(SubwordError::Format(format!("duplicate merge {} {}", dup.0, dup.1)));
        }
        let vocab = match vocab {
            Some(text) => text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    l.split('\t')
                        .next()
                        .map(String::from)
                        .ok_or_else(|| SubwordError::Format(format!("vocab line `{l}`")))
                })
                .collect::<Result<_, _>>()?,
            None => BTreeSet::new(),
        };
        Ok(Self::from_parts(pairs, vocab))
    }

    pub fn save(&self, merges_path: &Path, vocab_path: &Path) -> Result<(), SubwordError> {
        std::fs::write(merges_path, self.to_merges_text())?;
        std::fs::write(vocab_path, self.to_vocab_text())?;
        Ok(())
    }

    pub fn load(merges_path: &Path, vocab_path: Option<&Path>) -> Result<Self, SubwordError> {
        let merges = std::fs::read_to_string(merges_path)?;
        let vocab = vocab_path.map(std::fs::read_to_string).transpose()?;
        Self::from_texts(&merges, vocab.as_deref())
    }
}

/// Function form of [`BpeModel::apply`].
pub fn apply_bpe(model: &BpeModel, word: &str) -> Vec<String> {
    model.apply(word)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(words: &[&str]) -> Vec<Vec<String>> {
        vec![words.iter().map(|w| w.to_string()).collect()]
    }

    fn pair(l: &str, r: &str) -> (String, String) {
        (l.to_string(), r.to_string())
    }

    #[test]
    fn most_frequent_pair_first() {
        let m = learn_bpe(&corpus(&["ab", "ab", "ac"]), 1);
        assert_eq!(m.merges(), [pair("a", "b")]);
    }

    #[test]
    fn zero_merges_is_character_model() {
        let m = learn_bpe(&corpus(&["ab", "ab", "ac"]), 0);
        assert!(m.merges().is_empty());
        assert_eq!(m.vocab().iter().collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn single_pair_corpus() {
        let m = learn_bpe(&corpus(&["aa", "aa"]), 1);
        assert_eq!(m.merges(), [pair("a", "a")]);
    }

    #[test]
    fn ties_are_lexicographic() {
        // (a,b) and (c,d) both occur twice.
        let m = learn_bpe(&corpus(&["cd", "ab", "cd", "ab"]), 1);
        assert_eq!(m.merges(), [pair("a", "b")]);
    }

    #[test]
    fn apply_examples() {
        let m = BpeModel::from_parts(vec![pair("a", "b")], BTreeSet::new());
        assert_eq!(m.apply("abc"), ["ab", "c"]);
        let empty = BpeModel::default();
        assert_eq!(empty.apply("xy"), ["x", "y"]);
        let full = learn_bpe(&corpus(&["abc", "abc"]), 10);
        assert_eq!(full.apply("abc"), ["abc"]);
    }

    #[test]
    fn in_order_application() {
        // Same string "abc" reachable via two different merge paths.
        let m = BpeModel::from_parts(
            vec![pair("b", "c"), pair("a", "b"), pair("ab", "c")],
            BTreeSet::new(),
        );
        // (b,c) applies first, after which neither later merge matches.
        assert_eq!(m.apply("abc"), ["a", "bc"]);
    }

    #[test]
    fn file_round_trip() {
        let m = learn_bpe(&corpus(&["lotus", "lotus", "lots", "lost"]), 5);
        let back = BpeModel::from_texts(&m.to_merges_text(), Some(&m.to_vocab_text())).unwrap();
        assert_eq!(back, m);
        assert!(BpeModel::from_texts("a b c\n", None).is_err());
        assert!(BpeModel::from_texts("a b\na b\n", None).is_err());
    }

    fn word() -> impl Strategy<Value = String> {
        "[abcd]{1,7}"
    }

    proptest! {
        #[test]
        fn segmentation_concatenates_to_word(
            train in prop::collection::vec(word(), 1..30),
            probe in word(),
            n in 0usize..20,
        ) {
            let m = learn_bpe(&[train], n);
            prop_assert_eq!(m.apply(&probe).concat(), probe);
        }

        #[test]
        fn training_inventory_equals_vocab(
            train in prop::collection::vec(word(), 1..30),
            n in 0usize..20,
        ) {
            let m = learn_bpe(&[train.clone()], n);
            let merges_unique: BTreeSet<_> = m.merges().iter().collect();
            prop_assert_eq!(merges_unique.len(), m.merges().len());
            let inventory: BTreeSet<String> = train.iter().flat_map(|w| m.apply(w)).collect();
            prop_assert_eq!(&inventory, m.vocab());
        }
    }
}
