//! Reverse-mode automatic differentiation over row-major `f64` matrices.
//!
//! Every value is a 2-D matrix; sequences are stored as `batch · time` rows.
//! Ops record what their backward pass needs and `Tape::backward` walks the
//! tape once in reverse.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::params::{Grads, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Shapes for a temporal convolution expressed as `im2col` + matmul.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayout {
    pub batch: usize,
    pub t_in: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvLayout {
    pub fn t_out(&self) -> usize {
        (self.t_in + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

/// Multi-head self-attention over `batch` sequences of `seq` positions.
/// Position `i` of sequence `b` may attend to `j` when `j ≤ i` or `j < prefix[b]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttnSpec {
    pub batch: usize,
    pub seq: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub prefix: Vec<usize>,
}

impl AttnSpec {
    pub fn allowed(&self, b: usize, i: usize, j: usize) -> bool {
        j <= i || j < self.prefix[b]
    }
}

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Array2<f64>, inv_std: Array1<f64> },
    Gather { table: Var, ids: Vec<usize> },
    Im2Col { x: Var, layout: ConvLayout },
    Upsample { x: Var, batch: usize, t_in: usize, factor: usize },
    Attention { qkv: Var, spec: AttnSpec, probs: Vec<Array2<f64>> },
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Array2<f64>, count: usize },
    SquaredError { x: Var, target: Array2<f64>, denom: f64 },
    SegmentMean { x: Var, batch: usize, seq: usize },
    Dropout { x: Var, mask: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)
const LN_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise softmax, numerically stabilized.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut p = logits.to_owned();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    /// `x + bias`, bias broadcast over rows (bias is `1 × cols`).
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let v = self.value(x) + &self.value(bias).row(0);
        self.push(v, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let v = self.value(x) * factor;
        self.push(v, Op::Scale(x, factor))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let v = self.value(x).mapv(gelu);
        self.push(v, Op::Gelu(x))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols() as f64;
        let mut xhat = xv.to_owned();
        let mut inv_std = Array1::zeros(xv.nrows());
        for (i, mut row) in xhat.rows_mut().into_iter().enumerate() {
            let mean = row.sum() / cols;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / cols;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| v * is);
            inv_std[i] = is;
        }
        let out = &xhat * &self.value(gamma).row(0) + &self.value(beta).row(0);
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, inv_std })
    }

    /// Selects rows `ids` of `table`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut out = Array2::zeros((ids.len(), t.ncols()));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).assign(&t.row(id));
        }
        self.push(out, Op::Gather { table, ids: ids.to_vec() })
    }

    /// Unfolds `batch · t_in` rows into `batch · t_out` rows of `kernel · channels` taps (zero padded).
    pub fn im2col(&mut self, x: Var, layout: ConvLayout) -> Var {
        let xv = self.value(x);
        assert_eq!(xv.nrows(), layout.batch * layout.t_in, "im2col rows");
        assert_eq!(xv.ncols(), layout.channels, "im2col channels");
        let t_out = layout.t_out();
        let c = layout.channels;
        let mut out = Array2::zeros((layout.batch * t_out, layout.kernel * c));
        for b in 0..layout.batch {
            for t in 0..t_out {
                for k in 0..layout.kernel {
                    let src = (t * layout.stride + k) as isize - layout.pad as isize;
                    if src < 0 || src as usize >= layout.t_in {
                        continue;
                    }
                    out.slice_mut(s![b * t_out + t, k * c..(k + 1) * c])
                        .assign(&xv.row(b * layout.t_in + src as usize));
                }
            }
        }
        self.push(out, Op::Im2Col { x, layout })
    }

    /// Temporal convolution: `im2col(x) · w + b`, `w` is `(kernel · c_in) × c_out`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, layout: ConvLayout) -> Var {
        let cols = self.im2col(x, layout);
        self.linear(cols, w, b)
    }

    /// Nearest-neighbour temporal upsampling.
    pub fn upsample(&mut self, x: Var, batch: usize, t_in: usize, factor: usize) -> Var {
        let xv = self.value(x);
        let mut out = Array2::zeros((batch * t_in * factor, xv.ncols()));
        for r in 0..batch * t_in {
            for f in 0..factor {
                out.row_mut(r * factor + f).assign(&xv.row(r));
            }
        }
        self.push(out, Op::Upsample { x, batch, t_in, factor })
    }

    pub fn attention(&mut self, qkv: Var, spec: AttnSpec) -> Var {
        let qv = self.value(qkv);
        let (t, dh, h) = (spec.seq, spec.head_dim, spec.heads);
        let inner = h * dh;
        assert_eq!(qv.nrows(), spec.batch * t, "attention rows");
        assert_eq!(qv.ncols(), 3 * inner, "attention qkv width");
        let scale = 1.0 / (dh as f64).sqrt();
        let mut out = Array2::zeros((spec.batch * t, inner));
        let mut probs = Vec::with_capacity(spec.batch * h);
        for b in 0..spec.batch {
            let rows = b * t..(b + 1) * t;
            for head in 0..h {
                let q = qv.slice(s![rows.clone(), head * dh..(head + 1) * dh]);
                let k = qv.slice(s![rows.clone(), inner + head * dh..inner + (head + 1) * dh]);
                let v = qv.slice(s![rows.clone(), 2 * inner + head * dh..2 * inner + (head + 1) * dh]);
                let mut scores = q.dot(&k.t()) * scale;
                for i in 0..t {
                    for j in 0..t {
                        if !spec.allowed(b, i, j) {
                            scores[[i, j]] = f64::NEG_INFINITY;
                        }
                    }
                }
                let p = softmax_rows(scores.view());
                out.slice_mut(s![rows.clone(), head * dh..(head + 1) * dh]).assign(&p.dot(&v));
                probs.push(p);
            }
        }
        self.push(out, Op::Attention { qkv, spec, probs })
    }

    /// Mean negative log-likelihood over rows with a target; rows with `None` are ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.nrows(), targets.len(), "one target slot per row");
        let probs = softmax_rows(lv.view());
        let mut loss = 0.0;
        let mut count = 0;
        for (r, t) in targets.iter().enumerate() {
            if let Some(t) = *t {
                let row = lv.row(r);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += lse - row[t];
                count += 1;
            }
        }
        let value = if count > 0 { loss / count as f64 } else { 0.0 };
        self.push(Array2::from_elem((1, 1), value), Op::CrossEntropy { logits, targets: targets.to_vec(), probs, count })
    }

    /// `Σ (x − target)² / denom` with `target` held constant.
    pub fn squared_error(&mut self, x: Var, target: Array2<f64>, denom: f64) -> Var {
        let d = self.value(x) - &target;
        let value = d.iter().map(|v| v * v).sum::<f64>() / denom;
        self.push(Array2::from_elem((1, 1), value), Op::SquaredError { x, target, denom })
    }

    /// Mean over each block of `seq` consecutive rows.
    pub fn segment_mean(&mut self, x: Var, batch: usize, seq: usize) -> Var {
        let xv = self.value(x);
        let mut out = Array2::zeros((batch, xv.ncols()));
        for b in 0..batch {
            out.row_mut(b).assign(&xv.slice(s![b * seq..(b + 1) * seq, ..]).mean_axis(Axis(0)).expect("seq > 0"));
        }
        self.push(out, Op::SegmentMean { x, batch, seq })
    }

    /// Multiplies by a fixed mask (already scaled by the keep probability).
    pub fn dropout(&mut self, x: Var, mask: Array2<f64>) -> Var {
        let v = self.value(x) * &mask;
        self.push(v, Op::Dropout { x, mask })
    }

    /// Gradients of scalar `loss` with respect to every parameter node on the tape.
    pub fn backward(&self, loss: Var, n_params: usize) -> Grads {
        let mut grads = Grads::new(n_params);
        let mut g: Vec<Option<Array2<f64>>> = (0..=loss.0).map(|_| None).collect();
        g[loss.0] = Some(Array2::ones(self.nodes[loss.0].value.raw_dim()));

        fn acc(g: &mut [Option<Array2<f64>>], v: Var, d: Array2<f64>) {
            match &mut g[v.0] {
                Some(a) => *a += &d,
                slot => *slot = Some(d),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(dy) = g[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => grads.accumulate(*id, &dy),
                Op::MatMul(a, b) => {
                    let da = dy.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&dy);
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, dy.clone());
                    acc(&mut g, *b, dy);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, -&dy);
                    acc(&mut g, *a, dy);
                }
                Op::AddRow(x, bias) => {
                    acc(&mut g, *bias, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *x, dy);
                }
                Op::Scale(x, f) => acc(&mut g, *x, dy * *f),
                Op::Gelu(x) => {
                    let d = &dy * &self.value(*x).mapv(gelu_grad);
                    acc(&mut g, *x, d);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gam = self.value(*gamma).row(0).to_owned();
                    acc(&mut g, *gamma, (&dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut g, *beta, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &dy * &gam;
                    let cols = dxhat.ncols() as f64;
                    let mut dx = Array2::zeros(dxhat.raw_dim());
                    for r in 0..dxhat.nrows() {
                        let dr = dxhat.row(r);
                        let xr = xhat.row(r);
                        let m1 = dr.sum() / cols;
                        let m2 = dr.dot(&xr) / cols;
                        let is = inv_std[r];
                        for c in 0..dxhat.ncols() {
                            dx[[r, c]] = is * (dr[c] - m1 - xr[c] * m2);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Array2::zeros(self.value(*table).raw_dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut row = dt.row_mut(id);
                        row += &dy.row(r);
                    }
                    acc(&mut g, *table, dt);
                }
                Op::Im2Col { x, layout } => {
                    let c = layout.channels;
                    let t_out = layout.t_out();
                    let mut dx = Array2::zeros((layout.batch * layout.t_in, c));
                    for b in 0..layout.batch {
                        for t in 0..t_out {
                            for k in 0..layout.kernel {
                                let src = (t * layout.stride + k) as isize - layout.pad as isize;
                                if src < 0 || src as usize >= layout.t_in {
                                    continue;
                                }
                                let mut row = dx.row_mut(b * layout.t_in + src as usize);
                                row += &dy.slice(s![b * t_out + t, k * c..(k + 1) * c]);
                            }
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Upsample { x, batch, t_in, factor } => {
                    let mut dx = Array2::zeros((batch * t_in, dy.ncols()));
                    for r in 0..batch * t_in {
                        let mut row = dx.row_mut(r);
                        for f in 0..*factor {
                            row += &dy.row(r * factor + f);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Attention { qkv, spec, probs } => {
                    let qv = self.value(*qkv);
                    let (t, dh, h) = (spec.seq, spec.head_dim, spec.heads);
                    let inner = h * dh;
                    let scale = 1.0 / (dh as f64).sqrt();
                    let mut dqkv = Array2::zeros(qv.raw_dim());
                    for b in 0..spec.batch {
                        let rows = b * t..(b + 1) * t;
                        for head in 0..h {
                            let p = &probs[b * h + head];
                            let qs = s![rows.clone(), head * dh..(head + 1) * dh];
                            let ks = s![rows.clone(), inner + head * dh..inner + (head + 1) * dh];
                            let vs = s![rows.clone(), 2 * inner + head * dh..2 * inner + (head + 1) * dh];
                            let d_o = dy.slice(qs);
                            let dp = d_o.dot(&qv.slice(vs).t());
                            let dv = p.t().dot(&d_o);
                            let mut ds = p * &dp;
                            for i in 0..t {
                                let row_sum: f64 = ds.row(i).sum();
                                for j in 0..t {
                                    ds[[i, j]] -= p[[i, j]] * row_sum;
                                }
                            }
                            ds *= scale;
                            let dq = ds.dot(&qv.slice(ks));
                            let dk = ds.t().dot(&qv.slice(qs));
                            dqkv.slice_mut(qs).assign(&dq);
                            dqkv.slice_mut(ks).assign(&dk);
                            dqkv.slice_mut(vs).assign(&dv);
                        }
                    }
                    acc(&mut g, *qkv, dqkv);
                }
                Op::CrossEntropy { logits, targets, probs, count } => {
                    let up = dy[[0, 0]];
                    let mut d = Array2::zeros(probs.raw_dim());
                    if *count > 0 {
                        let w = up / *count as f64;
                        for (r, t) in targets.iter().enumerate() {
                            if let Some(t) = *t {
                                let mut row = d.row_mut(r);
                                row.assign(&probs.row(r));
                                row[t] -= 1.0;
                                row *= w;
                            }
                        }
                    }
                    acc(&mut g, *logits, d);
                }
                Op::SquaredError { x, target, denom } => {
                    let up = dy[[0, 0]];
                    let d = (self.value(*x) - target) * (2.0 * up / denom);
                    acc(&mut g, *x, d);
                }
                Op::SegmentMean { x, batch, seq } => {
                    let mut dx = Array2::zeros((batch * seq, dy.ncols()));
                    for b in 0..*batch {
                        let row = dy.row(b).to_owned() / *seq as f64;
                        for t in 0..*seq {
                            dx.row_mut(b * seq + t).assign(&row);
                        }
                    }
                    acc(&mut g, *x, dx);
                }
                Op::Dropout { x, mask } => acc(&mut g, *x, dy * mask),
            }
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central differences of `f` against the tape gradient for every parameter entry.
    fn check(store: &ParamStore, f: impl Fn(&mut Tape, &ParamStore) -> Var) -> f64 {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store);
        let grads = tape.backward(loss, store.len());
        let mut worst: f64 = 0.0;
        for id in store.ids() {
            let shape = store.get(id).raw_dim();
            let mut numeric = Array2::zeros(shape.clone());
            for idx in ndarray::indices(shape) {
                let eval = |delta: f64| {
                    let mut s = store.clone();
                    s.get_mut(id)[idx] += delta;
                    let mut t = Tape::new();
                    let l = f(&mut t, &s);
                    t.scalar(l)
                };
                let h = 1e-6;
                numeric[idx] = (eval(h) - eval(-h)) / (2.0 * h);
            }
            let analytic = grads.get(id).cloned().unwrap_or_else(|| Array2::zeros(numeric.raw_dim()));
            let diff = (&analytic - &numeric).mapv(|v| v * v).sum().sqrt();
            let scale = analytic.mapv(|v| v * v).sum().sqrt().max(numeric.mapv(|v| v * v).sum().sqrt()).max(1e-12);
            worst = worst.max(diff / scale);
        }
        worst
    }

    fn random_store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        for &(n, r, c) in shapes {
            s.normal(n, r, c, 0.7, &mut rng);
        }
        s
    }

    #[test]
    fn dense_ops_gradients() {
        let store = random_store(&[("x", 5, 4), ("w", 4, 3), ("b", 1, 3), ("g", 1, 3), ("beta", 1, 3)], 1);
        let err = check(&store, |t, s| {
            let x = t.param(s, ParamId(0));
            let w = t.param(s, ParamId(1));
            let b = t.param(s, ParamId(2));
            let h = t.linear(x, w, b);
            let h = t.gelu(h);
            let gam = t.param(s, ParamId(3));
            let bet = t.param(s, ParamId(4));
            let n = t.layer_norm(h, gam, bet);
            let sc = t.scale(n, 0.3);
            let d = t.sub(sc, h);
            let m = t.segment_mean(d, 1, 5);
            t.squared_error(m, array![[0.1, -0.2, 0.3]], 3.0)
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn conv_and_upsample_gradients() {
        let store = random_store(&[("x", 2 * 6, 3), ("w", 3 * 3, 2), ("b", 1, 2)], 2);
        let layout = ConvLayout { batch: 2, t_in: 6, channels: 3, kernel: 3, stride: 2, pad: 1 };
        assert_eq!(layout.t_out(), 3);
        let err = check(&store, |t, s| {
            let x = t.param(s, ParamId(0));
            let w = t.param(s, ParamId(1));
            let b = t.param(s, ParamId(2));
            let y = t.conv1d(x, w, b, layout);
            let u = t.upsample(y, 2, 3, 2);
            t.squared_error(u, Array2::from_elem((12, 2), 0.5), 1.0)
        });
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn attention_and_cross_entropy_gradients() {
        let store = random_store(&[("qkv", 2 * 4, 3 * 2 * 3), ("emb", 5, 6)], 3);
        let spec = AttnSpec { batch: 2, seq: 4, heads: 2, head_dim: 3, prefix: vec![2, 1] };
        let err = check(&store, |t, s| {
            let qkv = t.param(s, ParamId(0));
            let a = t.attention(qkv, spec.clone());
            let e = t.param(s, ParamId(1));
            let g = t.gather(e, &[0, 2, 2, 4, 1, 0, 3, 3]);
            let sum = t.add(a, g);
            t.cross_entropy(sum, &[Some(0), None, Some(5), Some(1), Some(2), Some(2), None, Some(4)])
        });
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn attention_mask_is_prefix_causal() {
        let spec = AttnSpec { batch: 1, seq: 4, heads: 1, head_dim: 1, prefix: vec![2] };
        assert!(spec.allowed(0, 0, 1));
        assert!(!spec.allowed(0, 1, 2));
        assert!(spec.allowed(0, 3, 2));
        assert!(!spec.allowed(0, 2, 3));
    }

    #[test]
    fn cross_entropy_uniform() {
        let mut t = Tape::new();
        let l = t.input(Array2::zeros((3, 4)));
        let loss = t.cross_entropy(l, &[Some(0), Some(3), Some(1)]);
        assert!((t.scalar(loss) - 4f64.ln()).abs() < 1e-12);
    }
}
