//! Proper-noun memory: an Aho-Corasick automaton over target-side proper-noun
//! token sequences, plus a datastore of teacher-forced decoder states keyed
//! to the tokens they predict.
//!
//! At decode time the datastore supplies a kernel-weighted retrieval
//! distribution that is mixed into the model's own, and the automaton state
//! (threaded through the emitted tokens) boosts tokens that continue a
//! partially emitted proper noun. During tuning the anchors drive the
//! proper-noun memory loss.

mod automaton;
mod datastore;

pub use automaton::{MatchEvent, NodeId, PatternAutomaton, ROOT};
pub use datastore::{compute_anchor, knn, Datastore, Neighbor};

use std::collections::{BTreeMap, BTreeSet};

use crate::subword::SubwordSequence;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source of teacher-forced decoder states: one state per target position,
/// where state `i` is the one that predicts `tgt[i]`.
pub trait DecoderStates {
    fn state_dim(&self) -> usize;
    fn decoder_states(&self, src: &[u32], tgt: &[u32]) -> Result<Vec<Vec<f64>>, MemoryError>;
}

/// Builds the automaton over every target proper-noun span and a datastore
/// entry for every target token, then computes anchors for every token that
/// occurs inside a proper-noun span.
pub fn build_memory(
    corpus: &[(SubwordSequence, SubwordSequence)],
    model: &impl DecoderStates,
) -> Result<(PatternAutomaton, Datastore), MemoryError> {
    let mut automaton = PatternAutomaton::new();
    let mut store = Datastore::new(model.state_dim());
    let mut pn_tokens = BTreeSet::new();
    for (src, tgt) in corpus {
        for span in tgt.span_ids() {
            automaton.insert(span)?;
            pn_tokens.extend(span.iter().copied());
        }
        let states = model.decoder_states(&src.ids, &tgt.ids)?;
        if states.len() != tgt.ids.len() {
            return Err(MemoryError::Internal(format!(
                "{} decoder states for {} target tokens",
                states.len(),
                tgt.ids.len()
            )));
        }
        for (state, &token) in states.iter().zip(&tgt.ids) {
            store.push(state, token)?;
        }
    }
    automaton.compile()?;
    store.refresh_anchors(pn_tokens);
    Ok((automaton, store))
}

fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, MemoryError> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MemoryError::Argument("zero vector in cosine distance".into()));
    }
    Ok(1.0 - (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Sum over masked positions of the cosine distance between the decoder
/// state and the anchor of the token at that position.
pub fn pnm_loss(
    decoder_states: &[Vec<f64>],
    pn_mask: &[bool],
    anchors: &BTreeMap<u32, Vec<f64>>,
    values: &[u32],
) -> Result<f64, MemoryError> {
    if decoder_states.len() != pn_mask.len() || pn_mask.len() != values.len() {
        return Err(MemoryError::Argument("states, mask and values differ in length".into()));
    }
    let mut total = 0.0;
    for ((state, _), token) in decoder_states.iter().zip(pn_mask).zip(values).filter(|((_, m), _)| **m) {
        let anchor = anchors
            .get(token)
            .ok_or_else(|| MemoryError::Lookup(format!("no anchor for token {token}")))?;
        if anchor.len() != state.len() {
            return Err(MemoryError::Argument("anchor dimension mismatch".into()));
        }
        total += cosine_distance(state, anchor)?;
    }
    Ok(total)
}

/// Retrieval and boosting knobs used while decoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RetrievalParams {
    pub k: usize,
    pub bandwidth: f64,
    pub lambda: f64,
    pub pn_boost: f64,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            k: 8,
            bandwidth: 1.0,
            lambda: 0.3,
            pn_boost: 2.0,
        }
    }
}

impl RetrievalParams {
    /// Leaves the model distribution untouched.
    pub fn disabled() -> Self {
        Self {
            lambda: 0.0,
            pn_boost: 1.0,
            ..Self::default()
        }
    }
}

/// Kernel-weighted neighbour distribution over the vocabulary.
pub fn neighbour_distribution(
    neighbours: &[Neighbor<'_>],
    vocab_size: usize,
    bandwidth: f64,
) -> Result<Vec<f64>, MemoryError> {
    let mut p = vec![0.0; vocab_size];
    let Some(nearest) = neighbours.first() else {
        return Ok(p);
    };
    let bw2 = bandwidth * bandwidth;
    let d0 = nearest.distance * nearest.distance;
    for n in neighbours {
        let slot = p.get_mut(n.value as usize).ok_or_else(|| {
            MemoryError::Argument(format!("stored token {} outside vocabulary", n.value))
        })?;
        // Shifted by the nearest distance; cancels in the normalisation.
        *slot += (-(n.distance * n.distance - d0) / bw2).exp();
    }
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// Mixes the model distribution with the retrieval distribution and boosts
/// tokens that continue a proper noun from `auto_state`.
#[allow(clippy::too_many_arguments)]
pub fn retrieval_distribution(
    model_probs: &[f64],
    decoder_state: &[f64],
    store: &Datastore,
    auto_state: NodeId,
    automaton: &PatternAutomaton,
    params: &RetrievalParams,
) -> Result<Vec<f64>, MemoryError> {
    let total: f64 = model_probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 || model_probs.iter().any(|p| *p < 0.0) {
        return Err(MemoryError::Argument(format!(
            "model probabilities do not form a distribution (sum {total})"
        )));
    }
    if !(0.0..=1.0).contains(&params.lambda) || params.bandwidth <= 0.0 || params.pn_boost < 1.0 {
        return Err(MemoryError::Argument(format!("bad retrieval parameters {params:?}")));
    }
    let mut p = model_probs.to_vec();
    if params.lambda > 0.0 && !store.is_empty() {
        let neighbours = store.knn(decoder_state, params.k)?;
        let retrieved = neighbour_distribution(&neighbours, p.len(), params.bandwidth)?;
        for (x, r) in p.iter_mut().zip(&retrieved) {
            *x = (1.0 - params.lambda) * *x + params.lambda * r;
        }
    }
    if auto_state != ROOT && params.pn_boost != 1.0 {
        if !automaton.is_compiled() {
            return Err(MemoryError::State("automaton not compiled".into()));
        }
        let mut boosted = false;
        for tok in automaton.continuations(auto_state) {
            if let Some(x) = p.get_mut(tok as usize) {
                *x *= params.pn_boost;
                boosted = true;
            }
        }
        if boosted {
            let z: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= z);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::PnSpan;

    fn automaton(patterns: &[&[u32]]) -> PatternAutomaton {
        let mut a = PatternAutomaton::new();
        for p in patterns {
            a.insert(p).unwrap();
        }
        a.compile().unwrap();
        a
    }

    #[test]
    fn pnm_loss_examples() {
        let anchors: BTreeMap<u32, Vec<f64>> = [(5, vec![0.0, 1.0])].into();
        let states = vec![vec![1.0, 0.0], vec![0.0, 2.0]];
        assert_eq!(pnm_loss(&states, &[false, false], &anchors, &[5, 5]).unwrap(), 0.0);
        assert_eq!(pnm_loss(&states, &[false, true], &anchors, &[5, 5]).unwrap(), 0.0);
        assert!((pnm_loss(&states, &[true, false], &anchors, &[5, 5]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            pnm_loss(&states, &[true, false], &anchors, &[6, 5]),
            Err(MemoryError::Lookup(_))
        ));
    }

    #[test]
    fn lambda_zero_at_root_is_identity() {
        let mut store = Datastore::new(2);
        store.push(&[0.0, 0.0], 1).unwrap();
        let probs = [0.1, 0.2, 0.3, 0.4];
        let params = RetrievalParams {
            lambda: 0.0,
            ..RetrievalParams::default()
        };
        let out =
            retrieval_distribution(&probs, &[1.0, 1.0], &store, ROOT, &automaton(&[]), &params).unwrap();
        assert_eq!(out, probs);
    }

    #[test]
    fn full_lambda_single_entry_is_one_hot() {
        let mut store = Datastore::new(2);
        store.push(&[3.0, -1.0], 2).unwrap();
        let params = RetrievalParams {
            k: 1,
            lambda: 1.0,
            ..RetrievalParams::default()
        };
        let out = retrieval_distribution(
            &[0.25; 4],
            &[100.0, 100.0],
            &store,
            ROOT,
            &automaton(&[]),
            &params,
        )
        .unwrap();
        assert_eq!(out, [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn unit_boost_is_identity() {
        let a = automaton(&[&[1, 2]]);
        let (state, _) = a.step(ROOT, 1).unwrap();
        let params = RetrievalParams {
            lambda: 0.0,
            pn_boost: 1.0,
            ..RetrievalParams::default()
        };
        let probs = [0.1, 0.2, 0.3, 0.4];
        let out = retrieval_distribution(&probs, &[0.0], &Datastore::new(1), state, &a, &params).unwrap();
        assert_eq!(out, probs);
    }

    #[test]
    fn boost_continues_pattern() {
        let a = automaton(&[&[1, 2]]);
        let (state, _) = a.step(ROOT, 1).unwrap();
        let params = RetrievalParams {
            lambda: 0.0,
            pn_boost: 4.0,
            ..RetrievalParams::default()
        };
        let out =
            retrieval_distribution(&[0.1, 0.2, 0.3, 0.4], &[0.0], &Datastore::new(1), state, &a, &params)
                .unwrap();
        let z = 0.1 + 0.2 + 1.2 + 0.4;
        let expected = [0.1 / z, 0.2 / z, 1.2 / z, 0.4 / z];
        for (o, e) in out.iter().zip(expected) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_distribution() {
        let r = retrieval_distribution(
            &[0.5, 0.6],
            &[0.0],
            &Datastore::new(1),
            ROOT,
            &automaton(&[]),
            &RetrievalParams::default(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn empty_store_falls_back() {
        let probs = [0.5, 0.5];
        let params = RetrievalParams {
            lambda: 0.9,
            ..RetrievalParams::default()
        };
        let out =
            retrieval_distribution(&probs, &[0.0], &Datastore::new(1), ROOT, &automaton(&[]), &params)
                .unwrap();
        assert_eq!(out, probs);
    }

    struct Fixed;
    impl DecoderStates for Fixed {
        fn state_dim(&self) -> usize {
            2
        }
        fn decoder_states(&self, _: &[u32], tgt: &[u32]) -> Result<Vec<Vec<f64>>, MemoryError> {
            Ok(tgt.iter().map(|&t| vec![t as f64, 1.0]).collect())
        }
    }

    #[test]
    fn build_memory_counts() {
        let (a, s) = build_memory(&[], &Fixed).unwrap();
        assert!(a.patterns().is_empty() && s.is_empty());

        let tgt = SubwordSequence::with_spans(
            vec![4, 5, 6, 7, 8, 9],
            vec![PnSpan { start: 2, end: 4, entry: 0 }],
        );
        let (a, s) = build_memory(&[(SubwordSequence::plain(vec![1]), tgt.clone())], &Fixed).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!(a.patterns(), [vec![6, 7]]);
        assert_eq!(s.anchors().keys().copied().collect::<Vec<_>>(), [6, 7]);

        let plain = SubwordSequence::plain(vec![4, 5]);
        let (a, s) = build_memory(&[(plain.clone(), plain)], &Fixed).unwrap();
        assert_eq!(s.len(), 2);
        assert!(a.patterns().is_empty());
    }
}
