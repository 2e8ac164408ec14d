use std::collections::BTreeMap;

use super::graph::{Graph, NodeId};
use super::mat::{dot, Mat};
use super::model::{decoder_input, decoder_output, Forward, Model, Trainable};
use super::NeuralError;
use crate::subword::SubwordSequence;

/// One training pair with an optional reference encoding target for the
/// encoder side-tuning loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub src: SubwordSequence,
    pub tgt: SubwordSequence,
    pub reference: Option<Vec<u32>>,
}

impl Example {
    pub fn new(src: SubwordSequence, tgt: SubwordSequence) -> Self {
        Self {
            src,
            tgt,
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: Vec<u32>) -> Self {
        self.reference = Some(reference);
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub ce: f64,
    pub est: f64,
    pub pnm: f64,
    pub total: f64,
}

/// `1 − cos` of the position-mean of each encoding.
pub fn est_loss(enc_src: &Mat, enc_ref: &Mat) -> Result<f64, NeuralError> {
    if enc_src.rows == 0 || enc_ref.rows == 0 || enc_src.cols != enc_ref.cols {
        return Err(NeuralError::Argument("encodings must be non-empty with equal width".into()));
    }
    let (a, b) = (enc_src.mean_rows(), enc_ref.mean_rows());
    let (na, nb) = (dot(&a.data, &a.data), dot(&b.data, &b.data));
    if na == 0.0 || nb == 0.0 {
        return Err(NeuralError::Numeric("zero pooled vector in encoder side-tuning loss".into()));
    }
    Ok((1.0 - dot(&a.data, &b.data) / (na * nb).sqrt()).clamp(0.0, 2.0))
}

/// Sum of [`est_loss`] over `(source, reference)` encoding pairs.
pub fn est_loss_batch(pairs: &[(Mat, Mat)]) -> Result<f64, NeuralError> {
    pairs.iter().map(|(s, r)| est_loss(s, r)).sum()
}

/// Per-example loss terms on a graph, each a `1 × 1` node or absent.
pub(crate) struct Terms {
    pub ce_sum: NodeId,
    pub est: Option<NodeId>,
    pub pnm: Option<NodeId>,
}

pub(crate) fn example_terms(
    fw: &mut Forward<'_, '_>,
    ex: &Example,
    anchors: Option<&BTreeMap<u32, Vec<f64>>>,
) -> Result<Terms, NeuralError> {
    let model = fw.model();
    let enc = fw.encoder_output(&ex.src.ids)?;
    let input = decoder_input(&ex.tgt.ids);
    let output: Vec<usize> = decoder_output(&ex.tgt.ids).iter().map(|&t| t as usize).collect();
    let (hidden, logits) = fw.decode(enc, &input)?;
    let ce_sum = fw.g.cross_entropy(logits, &output);

    let est = match &ex.reference {
        Some(r) if model.config.w_est > 0.0 => {
            // The reference is encoded by the frozen backbone: a fixed target.
            let target = model.encode(r)?.mean_rows();
            let target = fw.g.constant(target);
            let pooled = fw.g.mean_rows(enc);
            Some(fw.g.cosine_distance(pooled, target).map_err(NeuralError::Numeric)?)
        }
        _ => None,
    };

    let pnm = match anchors {
        Some(anchors) if model.config.w_pnm > 0.0 && ex.tgt.pn_mask.iter().any(|&m| m) => {
            if ex.tgt.pn_mask.len() != ex.tgt.ids.len() {
                return Err(NeuralError::Argument("proper-noun mask length differs from target".into()));
            }
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for (i, (&tok, _)) in ex.tgt.ids.iter().zip(&ex.tgt.pn_mask).enumerate().filter(|(_, (_, m))| **m) {
                let anchor = anchors
                    .get(&tok)
                    .ok_or_else(|| NeuralError::Argument(format!("no anchor for token {tok}")))?;
                rows.push(i);
                targets.push(anchor.clone());
            }
            let states = fw.g.gather(hidden, &rows);
            let anchors = fw.g.constant(Mat::from_rows(&targets));
            Some(fw.g.cosine_distance(states, anchors).map_err(NeuralError::Numeric)?)
        }
        _ => None,
    };

    Ok(Terms { ce_sum, est, pnm })
}

/// Weighted objective of one example as a graph node, with `ce` divided by
/// the token count of the whole batch.
pub(crate) fn example_objective(
    fw: &mut Forward<'_, '_>,
    terms: &Terms,
    batch_tokens: usize,
) -> NodeId {
    let c = &fw.model().config;
    let (w_ce, w_est, w_pnm) = (c.w_ce, c.w_est, c.w_pnm);
    let mut root = fw.g.scale(terms.ce_sum, w_ce / batch_tokens as f64);
    if let Some(est) = terms.est {
        let e = fw.g.scale(est, w_est);
        root = fw.g.add(root, e);
    }
    if let Some(pnm) = terms.pnm {
        let p = fw.g.scale(pnm, w_pnm);
        root = fw.g.add(root, p);
    }
    root
}

pub(crate) fn batch_tokens(batch: &[Example]) -> usize {
    batch.iter().map(|e| e.tgt.ids.len() + 1).sum()
}

/// Loss terms over a batch: token-mean cross entropy, summed EST and PNM.
pub fn total_loss(
    model: &Model,
    batch: &[Example],
    anchors: Option<&BTreeMap<u32, Vec<f64>>>,
) -> Result<LossReport, NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::Argument("empty batch".into()));
    }
    let tokens = batch_tokens(batch);
    let mut report = LossReport::default();
    for ex in batch {
        let mut g = Graph::new();
        let mut fw = Forward::new(&mut g, model, Trainable::NONE);
        let t = example_terms(&mut fw, ex, anchors)?;
        report.ce += fw.g.value(t.ce_sum).data[0];
        report.est += t.est.map_or(0.0, |n| fw.g.value(n).data[0]);
        report.pnm += t.pnm.map_or(0.0, |n| fw.g.value(n).data[0]);
    }
    report.ce /= tokens as f64;
    let c = &model.config;
    report.total = c.w_ce * report.ce + c.w_est * report.est + c.w_pnm * report.pnm;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ModelConfig;

    #[test]
    fn est_examples() {
        let x = Mat::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5]]);
        assert_eq!(est_loss(&x, &x).unwrap(), 0.0);
        let a = Mat::from_rows(&[vec![1.0, 0.0]]);
        let b = Mat::from_rows(&[vec![0.0, 2.0]]);
        assert!((est_loss(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c = Mat::from_rows(&[vec![1.0, 1.0]]);
        assert!((est_loss(&c, &a).unwrap() - (1.0 - std::f64::consts::FRAC_1_SQRT_2)).abs() < 1e-12);
        assert!((est_loss(&c, &a).unwrap() - 0.29289).abs() < 1e-5);
        // Pooled (1,1) from two rows.
        let rows = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        assert!((est_loss(&rows, &a).unwrap() - 0.292_893_218_8).abs() < 1e-9);
        let z = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert!(matches!(est_loss(&z, &a), Err(NeuralError::Numeric(_))));
        assert!(est_loss_batch(&[(a.clone(), b), (c, a)]).unwrap() > 1.29);
    }

    fn pair(src: &[u32], tgt: &[u32]) -> Example {
        Example::new(SubwordSequence::plain(src.to_vec()), SubwordSequence::plain(tgt.to_vec()))
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let mut m = Model::new(ModelConfig::toy(12, 17)).unwrap();
        for name in ["dec.out.w", "dec.out.b"] {
            let i = m.params.index(name).unwrap();
            m.params.get_mut(i).data.iter_mut().for_each(|x| *x = 0.0);
        }
        let r = total_loss(&m, &[pair(&[4, 5], &[6, 7, 8]), pair(&[9], &[10])], None).unwrap();
        assert!((r.ce - 17f64.ln()).abs() < 1e-12);
        assert_eq!(r.total, r.ce);
    }

    #[test]
    fn extras_ignored_without_weights() {
        let m = Model::new(ModelConfig::toy(12, 12)).unwrap();
        let ex = pair(&[4, 5], &[6, 7]).with_reference(vec![8, 9]);
        let mut anchors = BTreeMap::new();
        anchors.insert(6, vec![1.0; 32]);
        let mut tgt = ex.tgt.clone();
        tgt.pn_mask = vec![true, false];
        let ex = Example { tgt, ..ex };
        let r = total_loss(&m, &[ex.clone()], Some(&anchors)).unwrap();
        assert_eq!((r.est, r.pnm), (0.0, 0.0));
        assert_eq!(r.total, r.ce);

        let mut c = m.config.clone();
        c.w_est = 0.5;
        c.w_pnm = 0.25;
        let m = Model { config: c, ..m };
        let r = total_loss(&m, &[ex], Some(&anchors)).unwrap();
        assert!(r.est > 0.0 && r.pnm > 0.0);
        assert!((r.total - (r.ce + 0.5 * r.est + 0.25 * r.pnm)).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_batch_rejected() {
        let m = Model::new(ModelConfig::toy(12, 12)).unwrap();
        assert!(total_loss(&m, &[], None).is_err());
        assert!(total_loss(&m, &[pair(&[4, 50], &[6])], None).is_err());
        let mut c = m.config.clone();
        c.w_pnm = 1.0;
        let m = Model { config: c, ..m };
        let mut ex = pair(&[4], &[6, 7]);
        ex.tgt.pn_mask = vec![true];
        assert!(total_loss(&m, &[ex], Some(&BTreeMap::new())).is_err());
    }
}
