//! Reverse-mode autodiff over f64 matrices. Each forward op appends a node;
//! `backward` walks the tape in reverse and accumulates exact gradients.
//!
//! All shapes are (rows, cols). Scalars are (1, 1) matrices.

use ndarray::{Array2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

const LN_EPS: f64 = 1e-5;
const MASK_NEG: f64 = -1e9;

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// a (n,k) · bᵀ where b is (m,k); result (n,m).
    MatMulBT(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// (n,d) + broadcast (1,d)
    AddRow(NodeId, NodeId),
    /// (n,d) * broadcast (1,d)
    MulRow(NodeId, NodeId),
    /// elementwise product with a constant (dropout masks, attention masks)
    MulConst(NodeId, Array2<f64>),
    AddConst(NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    LayerNormRows(NodeId),
    GatherRows(NodeId, Vec<usize>),
    /// weighted mean over rows -> (1,d); weights need not be normalized
    MeanRows(NodeId, Vec<f64>),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    /// cosine similarity of two (1,d) vectors -> scalar
    Cosine(NodeId, NodeId),
    /// log sum exp over a (1,k) row -> scalar
    LogSumExpRow(NodeId),
    SumAll(NodeId),
    /// masked token-level negative log-likelihood summed over rows:
    /// sum_i mask_i * (logsumexp(logits_i) - logits_i[target_i])
    CrossEntropyRows(NodeId, Vec<usize>, Vec<f64>),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].value.dim(), (1, 1));
        self.nodes[id.0].value[(0, 0)]
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) + &self.value(row).row(0);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        debug_assert_eq!(self.value(row).nrows(), 1);
        let v = self.value(a) * &self.value(row).row(0);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn mul_const(&mut self, a: NodeId, mask: Array2<f64>) -> NodeId {
        let v = self.value(a) * &mask;
        self.push(v, Op::MulConst(a, mask))
    }

    pub fn add_const(&mut self, a: NodeId, c: Array2<f64>) -> NodeId {
        let v = self.value(a) + &c;
        self.push(v, Op::AddConst(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum: f64 = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn layer_norm_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mut v = x.clone();
        for mut row in v.rows_mut() {
            let mean = row.mean().expect("rows are non-empty");
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / row.len() as f64;
            let denom = (var + LN_EPS).sqrt();
            row.mapv_inplace(|x| (x - mean) / denom);
        }
        self.push(v, Op::LayerNormRows(a))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let src = self.value(a);
        let mut v = Array2::zeros((indices.len(), src.ncols()));
        for (i, &idx) in indices.iter().enumerate() {
            v.row_mut(i).assign(&src.row(idx));
        }
        self.push(v, Op::GatherRows(a, indices.to_vec()))
    }

    pub fn mean_rows(&mut self, a: NodeId, weights: &[f64]) -> NodeId {
        let x = self.value(a);
        debug_assert_eq!(weights.len(), x.nrows());
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0, "mean over zero total weight");
        let mut v = Array2::zeros((1, x.ncols()));
        for (i, &w) in weights.iter().enumerate() {
            v.row_mut(0).scaled_add(w / total, &x.row(i));
        }
        self.push(v, Op::MeanRows(a, weights.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let n = self.value(parts[0]).nrows();
        let total: usize = parts.iter().map(|&p| self.value(p).ncols()).sum();
        let mut v = Array2::zeros((n, total));
        let mut off = 0;
        for &p in parts {
            let pv = self.value(p);
            debug_assert_eq!(pv.nrows(), n);
            v.slice_mut(ndarray::s![.., off..off + pv.ncols()]).assign(pv);
            off += pv.ncols();
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, lo: usize, hi: usize) -> NodeId {
        let v = self.value(a).slice(ndarray::s![.., lo..hi]).to_owned();
        self.push(v, Op::SliceCols(a, lo, hi))
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.value(a).row(0).to_owned();
        let bv = self.value(b).row(0).to_owned();
        let na = av.dot(&av).sqrt();
        let nb = bv.dot(&bv).sqrt();
        debug_assert!(na > 0.0 && nb > 0.0, "cosine of zero-norm vector");
        let c = av.dot(&bv) / (na * nb);
        self.push(Array2::from_elem((1, 1), c), Op::Cosine(a, b))
    }

    pub fn log_sum_exp_row(&mut self, a: NodeId) -> NodeId {
        let row = self.value(a).row(0);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
        let v = max + sum.ln();
        self.push(Array2::from_elem((1, 1), v), Op::LogSumExpRow(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), v), Op::SumAll(a))
    }

    pub fn cross_entropy_rows(&mut self, logits: NodeId, targets: &[usize], mask: &[f64]) -> NodeId {
        let l = self.value(logits);
        debug_assert_eq!(targets.len(), l.nrows());
        debug_assert_eq!(mask.len(), l.nrows());
        let mut total = 0.0;
        for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
            if m == 0.0 {
                continue;
            }
            let row = l.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            total += m * (lse - row[t]);
        }
        self.push(
            Array2::from_elem((1, 1), total),
            Op::CrossEntropyRows(logits, targets.to_vec(), mask.to_vec()),
        )
    }

    pub fn mask_value() -> f64 {
        MASK_NEG
    }

    /// Gradients of `loss` (a scalar node) with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Vec<Array2<f64>> {
        let mut grads: Vec<Array2<f64>> = self
            .nodes
            .iter()
            .map(|n| Array2::zeros(n.value.dim()))
            .collect();
        debug_assert_eq!(self.nodes[loss.0].value.dim(), (1, 1));
        grads[loss.0][(0, 0)] = 1.0;

        for idx in (0..=loss.0).rev() {
            let g = grads[idx].clone();
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    grads[a.0] += &da;
                    grads[b.0] += &db;
                }
                Op::MatMulBT(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    grads[a.0] += &da;
                    grads[b.0] += &db;
                }
                Op::Add(a, b) => {
                    grads[a.0] += &g;
                    grads[b.0] += &g;
                }
                Op::Sub(a, b) => {
                    grads[a.0] += &g;
                    grads[b.0] -= &g;
                }
                Op::AddRow(a, row) => {
                    grads[a.0] += &g;
                    let summed = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[row.0] += &summed;
                }
                Op::MulRow(a, row) => {
                    let rv = self.value(*row).row(0).to_owned();
                    let da = &g * &rv;
                    let db = (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0));
                    grads[a.0] += &da;
                    grads[row.0] += &db;
                }
                Op::MulConst(a, mask) => {
                    let da = &g * mask;
                    grads[a.0] += &da;
                }
                Op::AddConst(a) => {
                    grads[a.0] += &g;
                }
                Op::Scale(a, c) => {
                    let da = &g * *c;
                    grads[a.0] += &da;
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let da = &g * &y.mapv(|v| 1.0 - v * v);
                    grads[a.0] += &da;
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[idx].value;
                    let mut da = Array2::zeros(y.dim());
                    for i in 0..y.nrows() {
                        let yi = y.row(i);
                        let gi = g.row(i);
                        let dot: f64 = yi.iter().zip(gi.iter()).map(|(&yv, &gv)| yv * gv).sum();
                        for j in 0..y.ncols() {
                            da[(i, j)] = yi[j] * (gi[j] - dot);
                        }
                    }
                    grads[a.0] += &da;
                }
                Op::LayerNormRows(a) => {
                    let y = &self.nodes[idx].value;
                    let x = self.value(*a);
                    let d = x.ncols() as f64;
                    let mut da = Array2::zeros(x.dim());
                    for i in 0..x.nrows() {
                        let xi = x.row(i);
                        let mean = xi.mean().expect("non-empty row");
                        let var = xi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let gi = g.row(i);
                        let yi = y.row(i);
                        let g_mean: f64 = gi.sum() / d;
                        let gy_mean: f64 = gi.iter().zip(yi.iter()).map(|(&gv, &yv)| gv * yv).sum::<f64>() / d;
                        for j in 0..x.ncols() {
                            da[(i, j)] = inv * (gi[j] - g_mean - yi[j] * gy_mean);
                        }
                    }
                    grads[a.0] += &da;
                }
                Op::GatherRows(a, indices) => {
                    let mut da = Array2::zeros(self.value(*a).dim());
                    for (i, &idx) in indices.iter().enumerate() {
                        let gi = g.row(i).to_owned();
                        da.row_mut(idx).scaled_add(1.0, &gi);
                    }
                    grads[a.0] += &da;
                }
                Op::MeanRows(a, weights) => {
                    let total: f64 = weights.iter().sum();
                    let mut da = Array2::zeros(self.value(*a).dim());
                    for (i, &w) in weights.iter().enumerate() {
                        da.row_mut(i).scaled_add(w / total, &g.row(0));
                    }
                    grads[a.0] += &da;
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        let slice = g.slice(ndarray::s![.., off..off + w]).to_owned();
                        grads[p.0] += &slice;
                        off += w;
                    }
                }
                Op::SliceCols(a, lo, hi) => {
                    let mut da = Array2::zeros(self.value(*a).dim());
                    da.slice_mut(ndarray::s![.., *lo..*hi]).assign(&g);
                    grads[a.0] += &da;
                }
                Op::Cosine(a, b) => {
                    let gs = g[(0, 0)];
                    let av = self.value(*a).row(0).to_owned();
                    let bv = self.value(*b).row(0).to_owned();
                    let na = av.dot(&av).sqrt();
                    let nb = bv.dot(&bv).sqrt();
                    let c = av.dot(&bv) / (na * nb);
                    let da = (&bv / (na * nb) - &(&av * (c / (na * na)))) * gs;
                    let db = (&av / (na * nb) - &(&bv * (c / (nb * nb)))) * gs;
                    grads[a.0] += &da.insert_axis(Axis(0));
                    grads[b.0] += &db.insert_axis(Axis(0));
                }
                Op::LogSumExpRow(a) => {
                    let gs = g[(0, 0)];
                    let row = self.value(*a).row(0);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    let da =
                        Array2::from_shape_vec((1, exps.len()), exps.iter().map(|e| gs * e / sum).collect())
                            .expect("shape matches");
                    grads[a.0] += &da;
                }
                Op::SumAll(a) => {
                    let gs = g[(0, 0)];
                    let da = Array2::from_elem(self.value(*a).dim(), gs);
                    grads[a.0] += &da;
                }
                Op::CrossEntropyRows(logits, targets, mask) => {
                    let gs = g[(0, 0)];
                    let l = self.value(*logits);
                    let mut da = Array2::zeros(l.dim());
                    for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                        if m == 0.0 {
                            continue;
                        }
                        let row = l.row(i);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exps: Vec<f64> = row.iter().map(|x| (x - max).exp()).collect();
                        let sum: f64 = exps.iter().sum();
                        for j in 0..l.ncols() {
                            let p = exps[j] / sum;
                            da[(i, j)] = gs * m * (p - if j == t { 1.0 } else { 0.0 });
                        }
                    }
                    grads[logits.0] += &da;
                }
            }
        }
        grads
    }
}
