//! Pre-norm transformer encoder-decoder with a ladder side encoder.
//!
//! The side encoder runs at `d_model / side_scale` width. Its first block
//! input is the down-projected embedding output; block `i` then consumes its
//! predecessor's output plus the down-projected output of backbone layer `i`.
//! The final encoder output mixes the backbone and the up-projected side path
//! through a sigmoid gate on a single learned scalar.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::graph::{Graph, NodeId};
use super::mat::Mat;
use super::params::{Group, ParamStore};
use super::NeuralError;
use crate::pnmemory::{DecoderStates, MemoryError};
use crate::subword::{BOS, EOS};

/// Which parameter groups receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trainable {
    pub encoder: bool,
    pub decoder: bool,
    pub side: bool,
}

impl Trainable {
    pub const NONE: Self = Self {
        encoder: false,
        decoder: false,
        side: false,
    };
    pub const ALL: Self = Self {
        encoder: true,
        decoder: true,
        side: true,
    };

    pub fn contains(&self, group: Group) -> bool {
        match group {
            Group::Encoder => self.encoder,
            Group::Decoder => self.decoder,
            Group::Side => self.side,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

fn sinusoid(len: usize, d: usize) -> Mat {
    let mut m = Mat::zeros(len, d);
    for pos in 0..len {
        for i in 0..d {
            let freq = 10000f64.powf(-((i / 2 * 2) as f64) / d as f64);
            let a = pos as f64 * freq;
            m.data[pos * d + i] = if i % 2 == 0 { a.sin() } else { a.cos() };
        }
    }
    m
}

struct Init<'s> {
    store: &'s mut ParamStore,
    rng: ChaCha8Rng,
}

impl Init<'_> {
    fn weight(&mut self, name: String, rows: usize, cols: usize) {
        let m = Mat::randn(rows, cols, 1.0 / (rows as f64).sqrt(), &mut self.rng);
        self.store.insert(name, m);
    }

    fn linear(&mut self, name: &str, rows: usize, cols: usize) {
        self.weight(format!("{name}.w"), rows, cols);
        self.store.insert(format!("{name}.b"), Mat::zeros(1, cols));
    }

    fn norm(&mut self, name: &str, d: usize) {
        self.store.insert(format!("{name}.g"), Mat::filled(1, d, 1.0));
        self.store.insert(format!("{name}.b"), Mat::zeros(1, d));
    }

    fn attention(&mut self, name: &str, d: usize) {
        for part in ["q", "k", "v", "o"] {
            self.weight(format!("{name}.{part}"), d, d);
        }
    }

    fn ffn(&mut self, name: &str, d: usize, hidden: usize) {
        self.linear(&format!("{name}.ffn1"), d, hidden);
        self.linear(&format!("{name}.ffn2"), hidden, d);
    }

    fn encoder_block(&mut self, name: &str, d: usize, hidden: usize) {
        self.norm(&format!("{name}.ln1"), d);
        self.attention(&format!("{name}.att"), d);
        self.norm(&format!("{name}.ln2"), d);
        self.ffn(name, d, hidden);
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let (d, l) = (config.d_model, config.layers);
        let mut init = Init {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        };
        init.store
            .insert("enc.emb", Mat::randn(config.src_vocab, d, 1.0, &mut init.rng));
        for i in 0..l {
            init.encoder_block(&format!("enc.{i}"), d, config.d_ffn);
        }
        init.norm("enc.ln", d);

        init.store
            .insert("dec.emb", Mat::randn(config.tgt_vocab, d, 1.0, &mut init.rng));
        for i in 0..l {
            let name = format!("dec.{i}");
            init.norm(&format!("{name}.ln1"), d);
            init.attention(&format!("{name}.self"), d);
            init.norm(&format!("{name}.ln2"), d);
            init.attention(&format!("{name}.cross"), d);
            init.norm(&format!("{name}.ln3"), d);
            init.ffn(&name, d, config.d_ffn);
        }
        init.norm("dec.ln", d);
        init.linear("dec.out", d, config.tgt_vocab);

        let mut model = Self { config, params };
        model.init_side(model.config.seed ^ 0x5eed_51de)?;
        Ok(model)
    }

    /// (Re)initialises every side parameter and the gate from `seed`.
    pub fn init_side(&mut self, seed: u64) -> Result<(), NeuralError> {
        let c = &self.config;
        let (d, ds, l) = (c.d_model, c.side_width(), c.layers);
        let mut fresh = ParamStore::new();
        let mut init = Init {
            store: &mut fresh,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for i in 0..=l {
            init.weight(format!("side.down.{i}"), d, ds);
        }
        for i in 0..l {
            init.encoder_block(&format!("side.{i}"), ds, c.side_ffn());
        }
        init.norm("side.ln", ds);
        init.linear("side.up", ds, d);
        init.store.insert("side.gate", Mat::scalar(c.gate_init));
        for (name, m) in fresh.iter() {
            match self.params.index(name) {
                Some(i) => *self.params.get_mut(i) = m.clone(),
                None => {
                    self.params.insert(name, m.clone());
                }
            }
        }
        Ok(())
    }

    /// Trainable groups for pre-training (`side_tune = false`) or side tuning.
    pub fn trainable(&self, side_tune: bool) -> Trainable {
        if side_tune {
            Trainable {
                encoder: false,
                decoder: self.config.tune_decoder,
                side: self.config.use_side,
            }
        } else {
            Trainable {
                encoder: true,
                decoder: true,
                side: false,
            }
        }
    }

    pub fn check_ids(&self, ids: &[u32], vocab: usize, what: &str) -> Result<(), NeuralError> {
        if ids.is_empty() {
            return Err(NeuralError::Argument(format!("empty {what} sequence")));
        }
        if ids.len() > self.config.max_len {
            return Err(NeuralError::Argument(format!(
                "{what} length {} exceeds max_len {}",
                ids.len(),
                self.config.max_len
            )));
        }
        if let Some(bad) = ids.iter().find(|&&t| t as usize >= vocab) {
            return Err(NeuralError::Argument(format!("{what} id {bad} outside vocabulary of {vocab}")));
        }
        Ok(())
    }

    fn inference<T>(&self, f: impl FnOnce(&mut Forward<'_, '_>) -> Result<T, NeuralError>) -> Result<T, NeuralError> {
        let mut g = Graph::new();
        let mut fw = Forward::new(&mut g, self, Trainable::NONE);
        f(&mut fw)
    }

    /// Backbone encoding (final layer norm applied).
    pub fn encode(&self, src: &[u32]) -> Result<Mat, NeuralError> {
        self.inference(|fw| {
            let (_, out) = fw.backbone(src)?;
            Ok(fw.g.value(out).clone())
        })
    }

    /// Embedding output followed by each backbone layer's output.
    pub fn encoder_layers(&self, src: &[u32]) -> Result<Vec<Mat>, NeuralError> {
        self.inference(|fw| {
            let (layers, _) = fw.backbone(src)?;
            Ok(layers.iter().map(|&n| fw.g.value(n).clone()).collect())
        })
    }

    /// Gated combination of the backbone and the side encoder.
    pub fn side_encode(&self, src: &[u32]) -> Result<Mat, NeuralError> {
        self.inference(|fw| {
            let out = fw.side_encode(src)?;
            Ok(fw.g.value(out).clone())
        })
    }

    /// The encoder used for translation: side-tuned when enabled.
    pub fn encoder_output(&self, src: &[u32]) -> Result<Mat, NeuralError> {
        if self.config.use_side {
            self.side_encode(src)
        } else {
            self.encode(src)
        }
    }

    /// Logits and hidden states for every prefix position.
    pub fn decode(&self, encoder_out: &Mat, prefix: &[u32]) -> Result<(Mat, Mat), NeuralError> {
        if encoder_out.cols != self.config.d_model || encoder_out.rows == 0 {
            return Err(NeuralError::Argument("encoder output has the wrong shape".into()));
        }
        self.inference(|fw| {
            let enc = fw.g.constant(encoder_out.clone());
            let (hidden, logits) = fw.decode(enc, prefix)?;
            Ok((fw.g.value(logits).clone(), fw.g.value(hidden).clone()))
        })
    }

    /// Teacher-forced decoder states: row `i` predicts `tgt[i]` (and the last
    /// row predicts end-of-sequence).
    pub fn teacher_forced_states(&self, src: &[u32], tgt: &[u32]) -> Result<Mat, NeuralError> {
        let enc = self.encoder_output(src)?;
        let (_, hidden) = self.decode(&enc, &decoder_input(tgt))?;
        Ok(hidden)
    }
}

/// `[BOS] + tgt`
pub fn decoder_input(tgt: &[u32]) -> Vec<u32> {
    std::iter::once(BOS).chain(tgt.iter().copied()).collect()
}

/// `tgt + [EOS]`
pub fn decoder_output(tgt: &[u32]) -> Vec<u32> {
    tgt.iter().copied().chain(std::iter::once(EOS)).collect()
}

impl DecoderStates for Model {
    fn state_dim(&self) -> usize {
        self.config.d_model
    }

    fn decoder_states(&self, src: &[u32], tgt: &[u32]) -> Result<Vec<Vec<f64>>, MemoryError> {
        let hidden = self
            .teacher_forced_states(src, tgt)
            .map_err(|e| MemoryError::Internal(e.to_string()))?;
        Ok(hidden.to_rows().into_iter().take(tgt.len()).collect())
    }
}

/// Builds the forward computation of a model on a graph.
pub struct Forward<'g, 'a> {
    pub g: &'g mut Graph<'a>,
    model: &'a Model,
    trainable: Trainable,
    cache: HashMap<usize, NodeId>,
}

impl<'g, 'a> Forward<'g, 'a> {
    pub fn new(g: &'g mut Graph<'a>, model: &'a Model, trainable: Trainable) -> Self {
        Self {
            g,
            model,
            trainable,
            cache: HashMap::new(),
        }
    }

    pub fn model(&self) -> &'a Model {
        self.model
    }

    pub fn p(&mut self, name: &str) -> NodeId {
        let store = &self.model.params;
        let i = store
            .index(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        if let Some(&n) = self.cache.get(&i) {
            return n;
        }
        let n = self.g.param(i, store.get(i), self.trainable.contains(store.group(i)));
        self.cache.insert(i, n);
        n
    }

    fn linear(&mut self, x: NodeId, name: &str) -> NodeId {
        let w = self.p(&format!("{name}.w"));
        let b = self.p(&format!("{name}.b"));
        let y = self.g.matmul(x, w);
        self.g.add_row(y, b)
    }

    fn norm(&mut self, x: NodeId, name: &str) -> NodeId {
        let gain = self.p(&format!("{name}.g"));
        let bias = self.p(&format!("{name}.b"));
        self.g.layer_norm(x, gain, bias)
    }

    fn attention(&mut self, x: NodeId, mem: NodeId, name: &str, heads: usize, causal: bool) -> NodeId {
        let [wq, wk, wv, wo] = ["q", "k", "v", "o"].map(|p| self.p(&format!("{name}.{p}")));
        let q = self.g.matmul(x, wq);
        let k = self.g.matmul(mem, wk);
        let v = self.g.matmul(mem, wv);
        let width = self.g.value(q).cols;
        let dh = width / heads;
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = if heads == 1 {
                (q, k, v)
            } else {
                (
                    self.g.slice_cols(q, h * dh, dh),
                    self.g.slice_cols(k, h * dh, dh),
                    self.g.slice_cols(v, h * dh, dh),
                )
            };
            let s = self.g.matmul_t(qh, kh);
            let s = self.g.scale(s, 1.0 / (dh as f64).sqrt());
            let a = self.g.softmax(s, causal);
            outs.push(self.g.matmul(a, vh));
        }
        let cat = if heads == 1 { outs[0] } else { self.g.concat_cols(&outs) };
        self.g.matmul(cat, wo)
    }

    fn ffn(&mut self, x: NodeId, name: &str) -> NodeId {
        let h = self.linear(x, &format!("{name}.ffn1"));
        let h = self.g.relu(h);
        self.linear(h, &format!("{name}.ffn2"))
    }

    fn encoder_block(&mut self, x: NodeId, name: &str, heads: usize) -> NodeId {
        let h = self.norm(x, &format!("{name}.ln1"));
        let a = self.attention(h, h, &format!("{name}.att"), heads, false);
        let x = self.g.add(x, a);
        let h = self.norm(x, &format!("{name}.ln2"));
        let f = self.ffn(h, name);
        self.g.add(x, f)
    }

    fn embed(&mut self, table: &str, ids: &[u32]) -> NodeId {
        let t = self.p(table);
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        let e = self.g.gather(t, &idx);
        let pos = self.g.constant(sinusoid(ids.len(), self.model.config.d_model));
        self.g.add(e, pos)
    }

    /// Per-layer outputs (embedding output first) and the normalised final output.
    pub fn backbone(&mut self, src: &[u32]) -> Result<(Vec<NodeId>, NodeId), NeuralError> {
        let c = &self.model.config;
        self.model.check_ids(src, c.src_vocab, "source")?;
        let (layers, heads) = (c.layers, c.heads);
        let mut outs = vec![self.embed("enc.emb", src)];
        for i in 0..layers {
            let x = self.encoder_block(*outs.last().unwrap(), &format!("enc.{i}"), heads);
            outs.push(x);
        }
        let last = *outs.last().unwrap();
        let fin = self.norm(last, "enc.ln");
        Ok((outs, fin))
    }

    pub fn side_encode(&mut self, src: &[u32]) -> Result<NodeId, NeuralError> {
        let (layers, backbone) = self.backbone(src)?;
        let heads = self.model.config.side_heads();
        let down0 = self.p("side.down.0");
        let mut s = self.g.matmul(layers[0], down0);
        for (i, &b) in layers.iter().enumerate().skip(1) {
            let down = self.p(&format!("side.down.{i}"));
            let projected = self.g.matmul(b, down);
            let x = self.g.add(s, projected);
            s = self.encoder_block(x, &format!("side.{}", i - 1), heads);
        }
        let s = self.norm(s, "side.ln");
        let up = self.linear(s, "side.up");
        let alpha = self.p("side.gate");
        let gate = self.g.sigmoid(alpha);
        let keep = self.g.rsub(1.0, gate);
        let a = self.g.mul_scalar(backbone, gate);
        let b = self.g.mul_scalar(up, keep);
        let out = self.g.add(a, b);
        assert_eq!(self.g.value(out).cols, self.model.config.d_model);
        Ok(out)
    }

    pub fn encoder_output(&mut self, src: &[u32]) -> Result<NodeId, NeuralError> {
        if self.model.config.use_side {
            self.side_encode(src)
        } else {
            Ok(self.backbone(src)?.1)
        }
    }

    /// `(hidden, logits)` for a decoder input sequence.
    pub fn decode(&mut self, enc: NodeId, prefix: &[u32]) -> Result<(NodeId, NodeId), NeuralError> {
        let c = &self.model.config;
        self.model.check_ids(prefix, c.tgt_vocab, "target")?;
        let (layers, heads) = (c.layers, c.heads);
        let mut x = self.embed("dec.emb", prefix);
        for i in 0..layers {
            let name = format!("dec.{i}");
            let h = self.norm(x, &format!("{name}.ln1"));
            let a = self.attention(h, h, &format!("{name}.self"), heads, true);
            x = self.g.add(x, a);
            let h = self.norm(x, &format!("{name}.ln2"));
            let a = self.attention(h, enc, &format!("{name}.cross"), heads, false);
            x = self.g.add(x, a);
            let h = self.norm(x, &format!("{name}.ln3"));
            let f = self.ffn(h, &name);
            x = self.g.add(x, f);
        }
        let hidden = self.norm(x, "dec.ln");
        let logits = self.linear(hidden, "dec.out");
        Ok((hidden, logits))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Model {
        let mut c = ModelConfig::toy(20, 24);
        c.use_side = true;
        Model::new(c).unwrap()
    }

    #[test]
    fn deterministic_and_shaped() {
        let a = toy();
        let b = toy();
        let src = [4, 5, 6, 7];
        let ea = a.encode(&src).unwrap();
        assert_eq!(ea, b.encode(&src).unwrap());
        assert_eq!(ea.shape(), (4, 32));
        assert_eq!(a.side_encode(&src).unwrap().shape(), (4, 32));
        assert_eq!(a.encoder_layers(&src).unwrap().len(), 3);
    }

    #[test]
    fn positions_matter() {
        let m = toy();
        let a = m.encode(&[4, 5, 6]).unwrap();
        let b = m.encode(&[5, 4, 6]).unwrap();
        assert_ne!(a.row(2), b.row(2));
    }

    #[test]
    fn rejects_bad_ids() {
        let m = toy();
        assert!(m.encode(&[4, 99]).is_err());
        assert!(m.encode(&[]).is_err());
        assert!(m.encode(&vec![4; 65]).is_err());
    }

    #[test]
    fn saturated_gate_with_zero_side_is_backbone() {
        let mut m = toy();
        for i in 0..m.params.len() {
            if m.params.group(i) == Group::Side {
                let p = m.params.get_mut(i);
                p.data.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let gate = m.params.index("side.gate").unwrap();
        m.params.get_mut(gate).data[0] = 1e3;
        let src = [4, 9, 11, 5, 6];
        assert_eq!(m.side_encode(&src).unwrap(), m.encode(&src).unwrap());
    }

    #[test]
    fn decoder_is_causal() {
        let m = toy();
        let enc = m.encode(&[4, 5, 6]).unwrap();
        let (short, hs) = m.decode(&enc, &[1, 7, 8]).unwrap();
        let (long, hl) = m.decode(&enc, &[1, 7, 8, 9, 10]).unwrap();
        assert_eq!(short.shape(), (3, 24));
        assert_eq!(hs.shape(), (3, 32));
        for i in 0..3 {
            assert_eq!(short.row(i), long.row(i));
            assert_eq!(hs.row(i), hl.row(i));
        }
    }
}
