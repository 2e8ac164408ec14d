use super::model::Model;
use super::NeuralError;
use crate::pnmemory::{retrieval_distribution, Datastore, PatternAutomaton, RetrievalParams, ROOT};
use crate::subword::{SubwordSequence, BOS, EOS, PAD};

/// Proper-noun memory consulted while decoding.
#[derive(Clone, Copy)]
pub struct Memory<'m> {
    pub automaton: &'m PatternAutomaton,
    pub store: &'m Datastore,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    p
}

/// Highest-probability token other than padding and begin-of-sequence;
/// ties go to the lower id.
fn argmax(p: &[f64]) -> u32 {
    let mut best = EOS as usize;
    for (i, &x) in p.iter().enumerate() {
        if i as u32 == PAD || i as u32 == BOS {
            continue;
        }
        if x > p[best] {
            best = i;
        }
    }
    best as u32
}

/// Greedy decoding, optionally mixing in the proper-noun memory.
pub fn translate(
    model: &Model,
    source: &[u32],
    memory: Option<Memory<'_>>,
    params: &RetrievalParams,
    max_len: usize,
) -> Result<SubwordSequence, NeuralError> {
    let enc = model.encoder_output(source)?;
    let limit = max_len.min(model.config.max_len.saturating_sub(1));
    let mut prefix = vec![BOS];
    let mut state = ROOT;
    while prefix.len() <= limit {
        let (logits, hidden) = model.decode(&enc, &prefix)?;
        let last = logits.rows - 1;
        let mut p = softmax(logits.row(last));
        if let Some(mem) = memory {
            p = retrieval_distribution(&p, hidden.row(last), mem.store, state, mem.automaton, params)?;
        }
        let tok = argmax(&p);
        if tok == EOS {
            break;
        }
        prefix.push(tok);
        if let Some(mem) = memory {
            state = mem.automaton.step(state, tok)?.0;
        }
    }
    Ok(SubwordSequence::plain(prefix[1..].to_vec()))
}
