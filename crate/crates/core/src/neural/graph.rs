//! Reverse-mode differentiation over a tape of matrix operations.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is
//! a valid topological order for the backward pass. Only nodes that depend
//! on a trainable parameter take part in the backward pass.

use std::borrow::Cow;

use super::mat::{dot, Mat};

pub type NodeId = usize;

const LN_EPS: f64 = 1e-5;

enum Op {
    Leaf,
    Param(usize),
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    MulScalar(NodeId, NodeId),
    Sigmoid(NodeId),
    Affine(NodeId, f64),
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    Softmax(NodeId),
    Gather(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    MeanRows(NodeId),
    CosineDistance {
        a: NodeId,
        b: NodeId,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Mat,
    },
}

struct Node<'a> {
    value: Cow<'a, Mat>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Cow<'a, Mat>, op: Op, inputs: &[NodeId]) -> NodeId {
        let needs_grad = match op {
            Op::Param(_) => true,
            _ => inputs.iter().any(|&i| self.nodes[i].needs_grad),
        };
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    fn owned(&mut self, value: Mat, op: Op, inputs: &[NodeId]) -> NodeId {
        self.push(Cow::Owned(value), op, inputs)
    }

    pub fn constant(&mut self, value: Mat) -> NodeId {
        self.owned(value, Op::Leaf, &[])
    }

    pub fn constant_ref(&mut self, value: &'a Mat) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf, &[])
    }

    /// A parameter leaf; `trainable = false` makes it a constant.
    pub fn param(&mut self, index: usize, value: &'a Mat, trainable: bool) -> NodeId {
        let op = if trainable { Op::Param(index) } else { Op::Leaf };
        self.push(Cow::Borrowed(value), op, &[])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.owned(v, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_t(self.value(b));
        self.owned(v, Op::MatMulT(a, b), &[a, b])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.owned(v, Op::Add(a, b), &[a, b])
    }

    /// Adds the `1 × c` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, r: NodeId) -> NodeId {
        let row = self.value(r);
        assert_eq!((1, self.value(a).cols), row.shape(), "add_row shape mismatch");
        let mut v = self.value(a).clone();
        for i in 0..v.rows {
            for (x, y) in v.row_mut(i).iter_mut().zip(&row.data) {
                *x += y;
            }
        }
        self.owned(v, Op::AddRow(a, r), &[a, r])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.owned(v, Op::Scale(a, c), &[a])
    }

    /// Multiplies `a` by the `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        assert_eq!(self.value(s).shape(), (1, 1), "mul_scalar expects a 1x1 scalar");
        let c = self.value(s).data[0];
        let v = self.value(a).scale(c);
        self.owned(v, Op::MulScalar(a, s), &[a, s])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.owned(v, Op::Sigmoid(a), &[a])
    }

    /// `c - a`
    pub fn rsub(&mut self, c: f64, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| c - x);
        self.owned(v, Op::Affine(a, -1.0), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0));
        self.owned(v, Op::Relu(a), &[a])
    }

    /// Row-wise layer normalisation with `1 × c` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let r = xv.row(i);
            let mean = r.iter().sum::<f64>() / cols as f64;
            let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (h, v) in xhat.row_mut(i).iter_mut().zip(r) {
                *h = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for i in 0..rows {
            for ((o, gv), bv) in out.row_mut(i).iter_mut().zip(&g.data).zip(&b.data) {
                *o = *o * gv + bv;
            }
        }
        self.owned(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        )
    }

    /// Row-wise softmax; with `causal`, entries above the diagonal are masked.
    pub fn softmax(&mut self, a: NodeId, causal: bool) -> NodeId {
        let av = self.value(a);
        let mut out = Mat::zeros(av.rows, av.cols);
        for i in 0..av.rows {
            let limit = if causal { (i + 1).min(av.cols) } else { av.cols };
            let r = &av.row(i)[..limit];
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let o = out.row_mut(i);
            let mut z = 0.0;
            for (x, &v) in o.iter_mut().zip(r) {
                *x = (v - max).exp();
                z += *x;
            }
            o[..limit].iter_mut().for_each(|x| *x /= z);
        }
        self.owned(out, Op::Softmax(a), &[a])
    }

    /// Rows of `table` picked by `ids`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let mut out = Mat::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).copy_from_slice(t.row(id));
        }
        self.owned(out, Op::Gather(table, ids.to_vec()), &[table])
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let av = self.value(a);
        let mut out = Mat::zeros(av.rows, len);
        for i in 0..av.rows {
            out.row_mut(i).copy_from_slice(&av.row(i)[start..start + len]);
        }
        self.owned(out, Op::SliceCols(a, start), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Mat::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for &p in parts {
                let pv = self.value(p);
                out.row_mut(i)[off..off + pv.cols].copy_from_slice(pv.row(i));
                off += pv.cols;
            }
        }
        self.owned(out, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mean_rows();
        self.owned(v, Op::MeanRows(a), &[a])
    }

    /// `Σ_i (1 − cos(a_i, b_i))` over rows, as a `1 × 1` node. Zero rows are
    /// rejected.
    pub fn cosine_distance(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, String> {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "cosine_distance shape mismatch");
        let mut total = 0.0;
        for i in 0..av.rows {
            let (x, y) = (av.row(i), bv.row(i));
            let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
            if nx == 0.0 || ny == 0.0 {
                return Err(format!("zero vector in cosine distance (row {i})"));
            }
            total += 1.0 - dot(x, y) / (nx * ny);
        }
        Ok(self.owned(Mat::scalar(total), Op::CosineDistance { a, b }, &[a, b]))
    }

    /// Summed negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> NodeId {
        let lv = self.value(logits);
        assert_eq!(lv.rows, targets.len(), "one target per row");
        let mut probs = Mat::zeros(lv.rows, lv.cols);
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            let r = lv.row(i);
            let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = r.iter().map(|v| (v - max).exp()).sum();
            let log_z = max + z.ln();
            total += log_z - r[t];
            for (p, v) in probs.row_mut(i).iter_mut().zip(r) {
                *p = (v - log_z).exp();
            }
        }
        self.owned(
            Mat::scalar(total),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// Backpropagates from the `1 × 1` node `root` and returns
    /// `(parameter index, gradient)` for every trainable parameter reached.
    pub fn backward(&self, root: NodeId) -> Vec<(usize, Mat)> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root] = Some(Mat::scalar(1.0));
        let mut out = Vec::new();
        for id in (0..=root).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, g, &mut grads, &mut out);
        }
        out
    }

    fn propagate(
        &self,
        id: NodeId,
        g: Mat,
        grads: &mut [Option<Mat>],
        out: &mut Vec<(usize, Mat)>,
    ) {
        let node = &self.nodes[id];
        let wants = |i: NodeId| self.nodes[i].needs_grad;
        let mut acc = |i: NodeId, d: Mat| {
            if !self.nodes[i].needs_grad {
                return;
            }
            match &mut grads[i] {
                Some(existing) => existing.add_assign(&d),
                slot => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Param(p) => out.push((*p, g)),
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, g.matmul_t(self.value(*b)));
                }
                if wants(*b) {
                    acc(*b, self.value(*a).t_matmul(&g));
                }
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                if wants(*a) {
                    acc(*a, g.matmul(self.value(*b)));
                }
                if wants(*b) {
                    acc(*b, g.t_matmul(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                if wants(*b) {
                    acc(*b, g.clone());
                }
                acc(*a, g);
            }
            Op::AddRow(a, r) => {
                if wants(*r) {
                    acc(*r, g.mean_rows().scale(g.rows as f64));
                }
                acc(*a, g);
            }
            Op::Scale(a, c) => acc(*a, g.scale(*c)),
            Op::MulScalar(a, s) => {
                let c = self.value(*s).data[0];
                if wants(*s) {
                    acc(*s, Mat::scalar(dot(&g.data, &self.value(*a).data)));
                }
                acc(*a, g.scale(c));
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let d = g.data.iter().zip(&y.data).map(|(gv, yv)| gv * yv * (1.0 - yv));
                acc(*a, Mat::from_vec(g.rows, g.cols, d.collect()));
            }
            Op::Affine(a, c) => acc(*a, g.scale(*c)),
            Op::Relu(a) => {
                let x = self.value(*a);
                let d = g
                    .data
                    .iter()
                    .zip(&x.data)
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 });
                acc(*a, Mat::from_vec(g.rows, g.cols, d.collect()));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = self.value(*gain);
                let cols = g.cols;
                if wants(*gain) {
                    let mut dg = Mat::zeros(1, cols);
                    for i in 0..g.rows {
                        for ((d, a), b) in dg.data.iter_mut().zip(g.row(i)).zip(xhat.row(i)) {
                            *d += a * b;
                        }
                    }
                    acc(*gain, dg);
                }
                if wants(*bias) {
                    acc(*bias, g.mean_rows().scale(g.rows as f64));
                }
                if wants(*x) {
                    let mut dx = Mat::zeros(g.rows, cols);
                    for i in 0..g.rows {
                        let dxhat: Vec<f64> = g.row(i).iter().zip(&gv.data).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / cols as f64;
                        let mean_dx = dot(&dxhat, xhat.row(i)) / cols as f64;
                        for ((o, d), h) in dx.row_mut(i).iter_mut().zip(&dxhat).zip(xhat.row(i)) {
                            *o = inv_std[i] * (d - mean_d - h * mean_dx);
                        }
                    }
                    acc(*x, dx);
                }
            }
            Op::Softmax(a) => {
                let y = &node.value;
                let mut d = Mat::zeros(g.rows, g.cols);
                for i in 0..g.rows {
                    let s = dot(g.row(i), y.row(i));
                    for ((o, gv), yv) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = yv * (gv - s);
                    }
                }
                acc(*a, d);
            }
            Op::Gather(table, ids) => {
                let t = self.value(*table);
                let mut d = Mat::zeros(t.rows, t.cols);
                for (i, &id) in ids.iter().enumerate() {
                    for (o, gv) in d.row_mut(id).iter_mut().zip(g.row(i)) {
                        *o += gv;
                    }
                }
                acc(*table, d);
            }
            Op::SliceCols(a, start) => {
                let av = self.value(*a);
                let mut d = Mat::zeros(av.rows, av.cols);
                for i in 0..g.rows {
                    d.row_mut(i)[*start..*start + g.cols].copy_from_slice(g.row(i));
                }
                acc(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let cols = self.value(p).cols;
                    if wants(p) {
                        let mut d = Mat::zeros(g.rows, cols);
                        for i in 0..g.rows {
                            d.row_mut(i).copy_from_slice(&g.row(i)[off..off + cols]);
                        }
                        acc(p, d);
                    }
                    off += cols;
                }
            }
            Op::MeanRows(a) => {
                let rows = self.value(*a).rows;
                let mut d = Mat::zeros(rows, g.cols);
                for i in 0..rows {
                    for (o, gv) in d.row_mut(i).iter_mut().zip(&g.data) {
                        *o = gv / rows as f64;
                    }
                }
                acc(*a, d);
            }
            Op::CosineDistance { a, b } => {
                let scale = g.data[0];
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = Mat::zeros(av.rows, av.cols);
                let mut db = Mat::zeros(bv.rows, bv.cols);
                for i in 0..av.rows {
                    let (x, y) = (av.row(i), bv.row(i));
                    let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
                    let c = dot(x, y) / (nx * ny);
                    // d(1 - cos)/dx = -(y/(|x||y|) - cos x/|x|²)
                    for (j, (xv, yv)) in x.iter().zip(y).enumerate() {
                        da.data[i * av.cols + j] = -scale * (yv / (nx * ny) - c * xv / (nx * nx));
                        db.data[i * bv.cols + j] = -scale * (xv / (nx * ny) - c * yv / (ny * ny));
                    }
                }
                if wants(*b) {
                    acc(*b, db);
                }
                acc(*a, da);
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g.data[0];
                let mut d = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    d.data[i * d.cols + t] -= 1.0;
                }
                acc(*logits, d.scale(scale));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of every entry of every parameter.
    fn check(params: &mut [Mat], f: impl Fn(&mut Graph, &[NodeId]) -> NodeId) {
        let analytic = {
            let snapshot = params.to_vec();
            let mut g = Graph::new();
            let ids: Vec<NodeId> = snapshot.iter().enumerate().map(|(i, p)| g.param(i, p, true)).collect();
            let root = f(&mut g, &ids);
            let mut grads: Vec<Mat> = snapshot.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
            for (i, d) in g.backward(root) {
                grads[i].add_assign(&d);
            }
            grads
        };
        let eval = |params: &[Mat]| {
            let mut g = Graph::new();
            let ids: Vec<NodeId> = params.iter().enumerate().map(|(i, p)| g.param(i, p, true)).collect();
            let root = f(&mut g, &ids);
            g.value(root).data[0]
        };
        let eps = 1e-6;
        for p in 0..params.len() {
            for j in 0..params[p].data.len() {
                let orig = params[p].data[j];
                params[p].data[j] = orig + eps;
                let up = eval(params);
                params[p].data[j] = orig - eps;
                let down = eval(params);
                params[p].data[j] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic[p].data[j];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(err < 1e-5, "param {p}[{j}]: analytic {a} numeric {numeric}");
            }
        }
    }

    fn rand_mats(shapes: &[(usize, usize)], seed: u64) -> Vec<Mat> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shapes.iter().map(|&(r, c)| Mat::randn(r, c, 1.0, &mut rng)).collect()
    }

    #[test]
    fn matmul_family() {
        let mut p = rand_mats(&[(3, 4), (4, 2), (5, 4)], 1);
        check(&mut p, |g, ids| {
            let ab = g.matmul(ids[0], ids[1]);
            let act = g.matmul_t(ids[2], ids[0]);
            let s1 = g.cross_entropy(ab, &[0, 1, 1]);
            let s2 = g.cross_entropy(act, &[2, 0, 1, 1, 2]);
            g.add(s1, s2)
        });
    }

    #[test]
    fn layer_norm_softmax_relu() {
        let mut p = rand_mats(&[(4, 5), (1, 5), (1, 5), (5, 4)], 2);
        check(&mut p, |g, ids| {
            let ln = g.layer_norm(ids[0], ids[1], ids[2]);
            let r = g.relu(ln);
            let m = g.matmul(r, ids[3]);
            let sm = g.softmax(m, true);
            let sc = g.scale(sm, 3.0);
            g.cross_entropy(sc, &[0, 1, 2, 3])
        });
    }

    #[test]
    fn gates_and_gathers() {
        let mut p = rand_mats(&[(6, 3), (1, 1), (2, 3), (1, 3)], 3);
        check(&mut p, |g, ids| {
            let rows = g.gather(ids[0], &[4, 1, 4]);
            let s = g.sigmoid(ids[1]);
            let gated = g.mul_scalar(rows, s);
            let other = g.add_row(rows, ids[3]);
            let inv = g.rsub(1.0, s);
            let other = g.mul_scalar(other, inv);
            let mix = g.add(gated, other);
            let a = g.slice_cols(mix, 1, 2);
            let b = g.slice_cols(mix, 0, 1);
            let cat = g.concat_cols(&[a, b]);
            let pooled = g.mean_rows(cat);
            let tgt = g.mean_rows(ids[2]);
            let picked = g.gather(cat, &[0, 2]);
            let pair = g.gather(ids[2], &[1, 0]);
            let d1 = g.cosine_distance(pooled, tgt).unwrap();
            let d2 = g.cosine_distance(picked, pair).unwrap();
            g.add(d1, d2)
        });
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let p = rand_mats(&[(2, 2), (2, 2)], 4);
        let mut g = Graph::new();
        let a = g.param(0, &p[0], true);
        let b = g.param(1, &p[1], false);
        let m = g.matmul(a, b);
        let root = g.cross_entropy(m, &[0, 1]);
        let grads = g.backward(root);
        assert_eq!(grads.len(), 1);
        assert_eq!(grads[0].0, 0);
    }

    #[test]
    fn uniform_cross_entropy_is_log_vocab() {
        let logits = Mat::zeros(3, 7);
        let mut g = Graph::new();
        let l = g.constant(logits);
        let ce = g.cross_entropy(l, &[0, 3, 6]);
        assert!((g.value(ce).data[0] / 3.0 - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_cosine_rejected() {
        let mut g = Graph::new();
        let a = g.constant(Mat::zeros(1, 2));
        let b = g.constant(Mat::filled(1, 2, 1.0));
        assert!(g.cosine_distance(a, b).is_err());
    }
}
