use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use super::HarnessError;
use crate::subword::SubwordSequence;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU in `[0, 100]` with the usual brevity penalty. Without
/// smoothing any zero n-gram precision gives 0; with smoothing, one is added
/// to the numerator and denominator of every order above one.
pub fn bleu_with<T: Eq + Hash>(
    hypotheses: &[Vec<T>],
    references: &[Vec<T>],
    max_n: usize,
    smooth: bool,
) -> Result<f64, HarnessError> {
    if hypotheses.len() != references.len() {
        return Err(HarnessError::Argument(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(HarnessError::Argument("empty corpus".into()));
    }
    if max_n == 0 {
        return Err(HarnessError::Argument("max_n must be at least 1".into()));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=max_n {
            let rc = ngram_counts(r, n);
            for (g, c) in ngram_counts(h, n) {
                matched[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            total[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 {
        return Ok(0.0);
    }
    // Orders longer than every hypothesis have no n-grams to score and are
    // left out of the mean.
    let orders = total.iter().filter(|&&t| t > 0).count();
    let mut log_sum = 0.0;
    for n in (0..max_n).filter(|&n| total[n] > 0) {
        let (m, t) = if smooth && n > 0 {
            (matched[n] as f64 + 1.0, total[n] as f64 + 1.0)
        } else {
            (matched[n] as f64, total[n] as f64)
        };
        if m == 0.0 {
            return Ok(0.0);
        }
        log_sum += (m / t).ln();
    }
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp();
    Ok(100.0 * bp * (log_sum / orders as f64).exp())
}

/// Unsmoothed corpus BLEU.
pub fn bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>], max_n: usize) -> Result<f64, HarnessError> {
    bleu_with(hypotheses, references, max_n, false)
}

fn occurrences<T: PartialEq>(haystack: &[T], needle: &[T]) -> usize {
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle).count()
}

/// Proper-noun accuracy over sentences that carry at least one reference
/// proper noun.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PnaScore {
    /// `None` when no reference sentence carries a proper noun.
    pub value: Option<f64>,
    pub correct: usize,
    pub pn_sentences: usize,
}

/// A sentence is correct when every reference proper-noun subword sequence
/// occurs contiguously in the hypothesis at least as often as in the
/// reference.
pub fn pna(hypotheses: &[Vec<u32>], references: &[SubwordSequence]) -> Result<PnaScore, HarnessError> {
    if hypotheses.len() != references.len() {
        return Err(HarnessError::Argument(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let (mut correct, mut pn_sentences) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let spans: Vec<&[u32]> = r.span_ids().collect();
        if spans.is_empty() {
            continue;
        }
        pn_sentences += 1;
        let mut required: HashMap<&[u32], usize> = HashMap::new();
        for s in spans {
            *required.entry(s).or_insert(0) += 1;
        }
        if required.iter().all(|(s, &n)| occurrences(h, s) >= n) {
            correct += 1;
        }
    }
    Ok(PnaScore {
        value: (pn_sentences > 0).then(|| 100.0 * correct as f64 / pn_sentences as f64),
        correct,
        pn_sentences,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub bleu: f64,
    pub pna: Option<f64>,
    pub sentences: usize,
    pub pn_sentences: usize,
}

/// BLEU over decoded words and PNA over subword ids.
pub fn evaluate(
    hyp_words: &[Vec<String>],
    ref_words: &[Vec<String>],
    hyp_ids: &[Vec<u32>],
    references: &[SubwordSequence],
    smooth: bool,
) -> Result<EvalReport, HarnessError> {
    let b = bleu_with(hyp_words, ref_words, 4, smooth)?;
    let p = pna(hyp_ids, references)?;
    Ok(EvalReport {
        bleu: b,
        pna: p.value,
        sentences: references.len(),
        pn_sentences: p.pn_sentences,
    })
}
