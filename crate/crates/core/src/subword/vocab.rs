use std::collections::HashMap;
use std::path::Path;

use super::{BpeModel, SubwordError};

/// Suffix on every subword that does not end a word.
pub const CONTINUATION: &str = "@@";

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token-id table for one language side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Specials first, then `tokens` in order of first appearance.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    /// Builds the table from the segmentation of `corpus`, adding every merge
    /// result and every character seen (both as word-final and continuation
    /// pieces) so unseen words still segment into known tokens.
    pub fn build<W: AsRef<str>>(corpus: &[Vec<W>], bpe: &BpeModel) -> Self {
        let mut tokens = Vec::new();
        let mut chars = std::collections::BTreeSet::new();
        for word in corpus.iter().flatten() {
            tokens.extend(word_tokens(bpe, word.as_ref()));
            chars.extend(word.as_ref().chars());
        }
        let pieces = bpe
            .merges()
            .iter()
            .map(|(l, r)| format!("{l}{r}"))
            .chain(chars.into_iter().map(String::from));
        for piece in pieces {
            tokens.push(format!("{piece}{CONTINUATION}"));
            tokens.push(piece);
        }
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids for one word: subwords with continuation markers on all but the last.
    pub fn encode_word(&self, bpe: &BpeModel, word: &str) -> Vec<u32> {
        word_tokens(bpe, word).iter().map(|t| self.id(t)).collect()
    }

    /// Rebuilds words from ids, dropping specials.
    pub fn decode_words(&self, ids: &[u32]) -> Vec<String> {
        let mut words = Vec::new();
        let mut cur = String::new();
        for &id in ids {
            if id <= UNK {
                continue;
            }
            let Some(tok) = self.token(id) else { continue };
            match tok.strip_suffix(CONTINUATION) {
                Some(piece) => cur.push_str(piece),
                None => {
                    cur.push_str(tok);
                    words.push(std::mem::take(&mut cur));
                }
            }
        }
        if !cur.is_empty() {
            words.push(cur);
        }
        words
    }

    /// One token per line, `token \t id`.
    pub fn to_text(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self, SubwordError> {
        let mut tokens = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .split_once('\t')
                .ok_or_else(|| SubwordError::Format(format!("vocab line {}", line_no + 1)))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| SubwordError::Format(format!("vocab line {}: bad id", line_no + 1)))?;
            if id != tokens.len() {
                return Err(SubwordError::Format(format!(
                    "vocab line {}: ids must be dense and ordered",
                    line_no + 1
                )));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(SubwordError::Format("vocab must start with the special tokens".into()));
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn save(&self, path: &Path) -> Result<(), SubwordError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, SubwordError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Subword strings of one word with continuation markers applied.
pub fn word_tokens(bpe: &BpeModel, word: &str) -> Vec<String> {
    let mut pieces = bpe.apply(word);
    let n = pieces.len();
    for p in pieces.iter_mut().take(n.saturating_sub(1)) {
        p.push_str(CONTINUATION);
    }
    pieces
}
