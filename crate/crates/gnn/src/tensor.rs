//! Tape-based reverse-mode autodiff over row-major `f64` matrices.
//!
//! Every operation appends a node holding its value; [`Tape::backward`]
//! walks the tape once in reverse. Multi-head tensors are laid out with
//! heads as contiguous column blocks: an `n × (H·D)` matrix holds head `h`
//! in columns `h·D .. (h+1)·D`.

use std::sync::Arc;

use studentgraph_core::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub type Index = Arc<Vec<usize>>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a + b` with `b` a single row broadcast over the rows of `a`.
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Mask(Var, Arc<Vec<f64>>),
    LeakyRelu(Var, f64),
    Elu(Var),
    Tanh(Var),
    Gather(Var, Index),
    SegmentSum(Var, Index),
    SegmentSoftmax(Var, Index),
    HeadDot(Var, Var, usize),
    HeadScale(Var, Var, usize),
    HeadMatMul(Var, Var, usize),
    HeadMean(Var, usize),
    EdgeAggregate { z: Var, alpha: Var, src: Index, dst: Index, heads: usize },
    EdgeHeadDot { a: Var, b: Var, src: Index, dst: Index, heads: usize },
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    SumAll(Var),
    SoftmaxRows(Var),
    SelectCol(Var, usize),
    MulScalar(Var, Var),
    CrossEntropy { logits: Var, labels: Arc<Vec<u8>>, rows: Index, probs: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check(cond: bool, msg: impl FnOnce() -> String) {
    assert!(cond, "{}", msg());
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn add_into(acc: &mut Option<Matrix>, g: Matrix) {
    match acc {
        Some(a) => {
            for (x, y) in a.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *x += y;
            }
        }
        None => *acc = Some(g),
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn column_sums(m: &Matrix) -> Matrix {
    let mut out = vec![0.0; m.cols()];
    for r in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    Matrix::from_vec(1, m.cols(), out).expect("row shape")
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shapes");
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        check(self.shape(a) == self.shape(b), || format!("add {:?} + {:?}", self.shape(a), self.shape(b)));
        let value = zip_map(self.value(a), self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    fn row_broadcast(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (va, vb) = (self.value(a), self.value(b));
        check(vb.rows() == 1 && vb.cols() == va.cols(), || {
            format!("row broadcast {:?} with {:?}", va.shape(), vb.shape())
        });
        let row = vb.row(0);
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (x, y) in out.row_mut(r).iter_mut().zip(row) {
                *x = f(*x, *y);
            }
        }
        out
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let value = self.row_broadcast(a, b, |x, y| x + y);
        self.push(value, Op::AddRow(a, b))
    }

    pub fn mul_row(&mut self, a: Var, b: Var) -> Var {
        let value = self.row_broadcast(a, b, |x, y| x * y);
        self.push(value, Op::MulRow(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        check(self.shape(a) == self.shape(b), || format!("mul {:?} * {:?}", self.shape(a), self.shape(b)));
        let value = zip_map(self.value(a), self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Arc<Vec<f64>>) -> Var {
        check(mask.len() == self.value(a).as_slice().len(), || "mask length".into());
        let v = self.value(a);
        let data = v.as_slice().iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
        let value = Matrix::from_vec(v.rows(), v.cols(), data).expect("mask shape");
        self.push(value, Op::Mask(a, mask))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(value, Op::LeakyRelu(a, slope))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(value, Op::Elu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// Output row `e` is input row `index[e]`.
    pub fn gather(&mut self, a: Var, index: Index) -> Var {
        let value = self.value(a).select_rows(&index);
        self.push(value, Op::Gather(a, index))
    }

    /// Sums rows into `n_segments` buckets; row `e` goes to `segment[e]`.
    pub fn segment_sum(&mut self, a: Var, segment: Index, n_segments: usize) -> Var {
        let v = self.value(a);
        check(segment.len() == v.rows(), || "segment length".into());
        let mut out = Matrix::zeros(n_segments, v.cols());
        for (e, &s) in segment.iter().enumerate() {
            for (o, x) in out.row_mut(s).iter_mut().zip(v.row(e)) {
                *o += x;
            }
        }
        self.push(out, Op::SegmentSum(a, segment))
    }

    /// Column-wise softmax within each segment. `segment` must be sorted.
    pub fn segment_softmax(&mut self, a: Var, segment: Index) -> Var {
        let v = self.value(a);
        check(segment.len() == v.rows(), || "segment length".into());
        check(segment.windows(2).all(|w| w[0] <= w[1]), || "segments must be sorted".into());
        let mut out = v.clone();
        let cols = v.cols();
        let mut start = 0;
        let mut col = Vec::new();
        while start < segment.len() {
            let mut end = start + 1;
            while end < segment.len() && segment[end] == segment[start] {
                end += 1;
            }
            for c in 0..cols {
                col.clear();
                col.extend((start..end).map(|e| v[(e, c)]));
                softmax_in_place(&mut col);
                for (k, e) in (start..end).enumerate() {
                    out[(e, c)] = col[k];
                }
            }
            start = end;
        }
        self.push(out, Op::SegmentSoftmax(a, segment))
    }

    /// Per-head dot products: `(n × H·D, n × H·D) → n × H`. `b` may be a
    /// single row, broadcast over the rows of `a`.
    pub fn head_dot(&mut self, a: Var, b: Var, heads: usize) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        check(va.cols() == vb.cols() && va.cols() % heads == 0, || "head_dot widths".into());
        check(vb.rows() == va.rows() || vb.rows() == 1, || "head_dot rows".into());
        let d = va.cols() / heads;
        let mut out = Matrix::zeros(va.rows(), heads);
        for e in 0..va.rows() {
            let (ra, rb) = (va.row(e), vb.row(if vb.rows() == 1 { 0 } else { e }));
            for h in 0..heads {
                out[(e, h)] = (h * d..(h + 1) * d).map(|k| ra[k] * rb[k]).sum();
            }
        }
        self.push(out, Op::HeadDot(a, b, heads))
    }

    /// Scales head block `h` of row `e` by `s[e, h]`.
    pub fn head_scale(&mut self, a: Var, s: Var, heads: usize) -> Var {
        let (va, vs) = (self.value(a), self.value(s));
        check(vs.shape() == (va.rows(), heads) && va.cols() % heads == 0, || "head_scale shapes".into());
        let d = va.cols() / heads;
        let mut out = va.clone();
        for e in 0..va.rows() {
            let row = out.row_mut(e);
            for h in 0..heads {
                let f = vs[(e, h)];
                for x in &mut row[h * d..(h + 1) * d] {
                    *x *= f;
                }
            }
        }
        self.push(out, Op::HeadScale(a, s, heads))
    }

    /// Block-diagonal product: head `h` of `a` times the `D × D` block
    /// `w[h·D..(h+1)·D, :]`.
    pub fn head_matmul(&mut self, a: Var, w: Var, heads: usize) -> Var {
        let (va, vw) = (self.value(a), self.value(w));
        let d = va.cols() / heads;
        check(va.cols() % heads == 0 && vw.shape() == (heads * d, d), || {
            format!("head_matmul {:?} with {:?} for {heads} heads", va.shape(), vw.shape())
        });
        let mut out = Matrix::zeros(va.rows(), va.cols());
        for n in 0..va.rows() {
            let x = va.row(n);
            let o = out.row_mut(n);
            for h in 0..heads {
                for i in 0..d {
                    let xi = x[h * d + i];
                    if xi == 0.0 {
                        continue;
                    }
                    let wrow = vw.row(h * d + i);
                    for j in 0..d {
                        o[h * d + j] += xi * wrow[j];
                    }
                }
            }
        }
        self.push(out, Op::HeadMatMul(a, w, heads))
    }

    /// Averages the head blocks: `n × H·D → n × D`.
    pub fn head_mean(&mut self, a: Var, heads: usize) -> Var {
        let va = self.value(a);
        let d = va.cols() / heads;
        let mut out = Matrix::zeros(va.rows(), d);
        for n in 0..va.rows() {
            let x = va.row(n);
            let o = out.row_mut(n);
            for h in 0..heads {
                for j in 0..d {
                    o[j] += x[h * d + j] / heads as f64;
                }
            }
        }
        self.push(out, Op::HeadMean(a, heads))
    }

    /// Attention-weighted neighbour sum, fused: row `dst[e]` of the
    /// `n × H·D` output accumulates `alpha[e, h] · z[src[e]]` per head block.
    pub fn edge_aggregate(&mut self, z: Var, alpha: Var, src: Index, dst: Index, n: usize, heads: usize) -> Var {
        let (vz, va) = (self.value(z), self.value(alpha));
        check(src.len() == dst.len() && va.shape() == (src.len(), heads) && vz.cols() % heads == 0, || {
            format!("edge_aggregate z {:?} alpha {:?} for {} edges", vz.shape(), va.shape(), src.len())
        });
        let d = vz.cols() / heads;
        let mut out = Matrix::zeros(n, vz.cols());
        for e in 0..src.len() {
            let zs = vz.row(src[e]);
            let a = va.row(e);
            let o = out.row_mut(dst[e]);
            for h in 0..heads {
                let w = a[h];
                for k in h * d..(h + 1) * d {
                    o[k] += w * zs[k];
                }
            }
        }
        self.push(out, Op::EdgeAggregate { z, alpha, src, dst, heads })
    }

    /// Per-edge, per-head dot product of `a[src[e]]` and `b[dst[e]]`: `E × H`.
    pub fn edge_head_dot(&mut self, a: Var, b: Var, src: Index, dst: Index, heads: usize) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        check(src.len() == dst.len() && va.cols() == vb.cols() && va.cols() % heads == 0, || {
            "edge_head_dot shapes".into()
        });
        let d = va.cols() / heads;
        let mut out = Matrix::zeros(src.len(), heads);
        for e in 0..src.len() {
            let (ra, rb) = (va.row(src[e]), vb.row(dst[e]));
            for h in 0..heads {
                out[(e, h)] = (h * d..(h + 1) * d).map(|k| ra[k] * rb[k]).sum();
            }
        }
        self.push(out, Op::EdgeHeadDot { a, b, src, dst, heads })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        check(parts.iter().all(|&p| self.shape(p).0 == rows), || "concat rows".into());
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let value = Matrix::from_vec(1, v.cols(), v.column_means()).expect("row shape");
        self.push(value, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::SumAll(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols();
        for r in 0..out.rows() {
            softmax_in_place(&mut out.as_mut_slice()[r * cols..(r + 1) * cols]);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn select_col(&mut self, a: Var, col: usize) -> Var {
        let v = self.value(a);
        let value = Matrix::from_vec(v.rows(), 1, v.column(col)).expect("column shape");
        self.push(value, Op::SelectCol(a, col))
    }

    /// `a · s` for a `1 × 1` tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Var {
        check(self.shape(s) == (1, 1), || "mul_scalar expects 1x1".into());
        let f = self.value(s)[(0, 0)];
        let value = self.value(a).map(|x| x * f);
        self.push(value, Op::MulScalar(a, s))
    }

    /// Mean softmax cross-entropy over `rows` of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<Vec<u8>>, rows: Index) -> Var {
        let v = self.value(logits);
        let classes = v.cols();
        let mut probs = Matrix::zeros(rows.len(), classes);
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let p = probs.row_mut(k);
            p.copy_from_slice(v.row(r));
            let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + p.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            loss += lse - p[labels[r] as usize];
            for x in p.iter_mut() {
                *x = (*x - lse).exp();
            }
        }
        let value = Matrix::filled(1, 1, loss / rows.len() as f64);
        self.push(value, Op::CrossEntropy { logits, labels, rows, probs })
    }

    /// Gradients of the `1 × 1` output `root` with respect to every node.
    pub fn backward(&self, root: Var) -> Gradients {
        check(self.shape(root) == (1, 1), || "backward needs a scalar root".into());
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::filled(1, 1, 1.0));
        for k in (0..=root.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            self.backprop(k, &g, &mut grads);
            grads[k] = Some(g);
        }
        Gradients { grads }
    }

    fn backprop(&self, k: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[k];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul(&val(*b).transpose()).expect("shapes");
                let gb = val(*a).transpose().matmul(g).expect("shapes");
                add_into(&mut grads[a.0], ga);
                add_into(&mut grads[b.0], gb);
            }
            Op::Add(a, b) => {
                add_into(&mut grads[a.0], g.clone());
                add_into(&mut grads[b.0], g.clone());
            }
            Op::AddRow(a, b) => {
                add_into(&mut grads[a.0], g.clone());
                add_into(&mut grads[b.0], column_sums(g));
            }
            Op::MulRow(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let row = vb.row(0);
                let mut ga = g.clone();
                let mut gb = vec![0.0; vb.cols()];
                for r in 0..ga.rows() {
                    let ar = va.row(r);
                    for (c, x) in ga.row_mut(r).iter_mut().enumerate() {
                        gb[c] += *x * ar[c];
                        *x *= row[c];
                    }
                }
                add_into(&mut grads[a.0], ga);
                add_into(&mut grads[b.0], Matrix::from_vec(1, vb.cols(), gb).expect("row"));
            }
            Op::Mul(a, b) => {
                add_into(&mut grads[a.0], zip_map(g, val(*b), |x, y| x * y));
                add_into(&mut grads[b.0], zip_map(g, val(*a), |x, y| x * y));
            }
            Op::Scale(a, s) => add_into(&mut grads[a.0], g.map(|x| x * s)),
            Op::Mask(a, m) => {
                let data = g.as_slice().iter().zip(m.iter()).map(|(x, y)| x * y).collect();
                add_into(&mut grads[a.0], Matrix::from_vec(g.rows(), g.cols(), data).expect("shape"));
            }
            Op::LeakyRelu(a, slope) => {
                add_into(&mut grads[a.0], zip_map(g, val(*a), |d, x| if x > 0.0 { d } else { d * slope }));
            }
            Op::Elu(a) => {
                add_into(&mut grads[a.0], zip_map(g, val(*a), |d, x| if x > 0.0 { d } else { d * x.exp() }));
            }
            Op::Tanh(a) => {
                add_into(&mut grads[a.0], zip_map(g, &node.value, |d, y| d * (1.0 - y * y)));
            }
            Op::Gather(a, index) => {
                let va = val(*a);
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                for (e, &i) in index.iter().enumerate() {
                    for (o, x) in ga.row_mut(i).iter_mut().zip(g.row(e)) {
                        *o += x;
                    }
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::SegmentSum(a, segment) => {
                add_into(&mut grads[a.0], g.select_rows(segment));
            }
            Op::SegmentSoftmax(a, segment) => {
                let y = &node.value;
                let cols = y.cols();
                let n_seg = segment.last().map_or(0, |&s| s + 1);
                // Σ_e y·g per (segment, column)
                let mut dots = vec![0.0; n_seg * cols];
                for (e, &s) in segment.iter().enumerate() {
                    for c in 0..cols {
                        dots[s * cols + c] += y[(e, c)] * g[(e, c)];
                    }
                }
                let mut ga = Matrix::zeros(y.rows(), cols);
                for (e, &s) in segment.iter().enumerate() {
                    for c in 0..cols {
                        ga[(e, c)] = y[(e, c)] * (g[(e, c)] - dots[s * cols + c]);
                    }
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::HeadDot(a, b, heads) => {
                let (va, vb) = (val(*a), val(*b));
                let d = va.cols() / heads;
                let bcast = vb.rows() == 1 && va.rows() != 1;
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                for e in 0..va.rows() {
                    let rb_idx = if bcast { 0 } else { e };
                    for h in 0..*heads {
                        let ge = g[(e, h)];
                        for k in h * d..(h + 1) * d {
                            ga[(e, k)] += ge * vb[(rb_idx, k)];
                            gb[(rb_idx, k)] += ge * va[(e, k)];
                        }
                    }
                }
                add_into(&mut grads[a.0], ga);
                add_into(&mut grads[b.0], gb);
            }
            Op::HeadScale(a, s, heads) => {
                let (va, vs) = (val(*a), val(*s));
                let d = va.cols() / heads;
                let mut ga = g.clone();
                let mut gs = Matrix::zeros(vs.rows(), vs.cols());
                for e in 0..va.rows() {
                    for h in 0..*heads {
                        let f = vs[(e, h)];
                        let mut acc = 0.0;
                        for k in h * d..(h + 1) * d {
                            acc += g[(e, k)] * va[(e, k)];
                            ga[(e, k)] *= f;
                        }
                        gs[(e, h)] = acc;
                    }
                }
                add_into(&mut grads[a.0], ga);
                add_into(&mut grads[s.0], gs);
            }
            Op::HeadMatMul(a, w, heads) => {
                let (va, vw) = (val(*a), val(*w));
                let d = va.cols() / heads;
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                let mut gw = Matrix::zeros(vw.rows(), vw.cols());
                for n in 0..va.rows() {
                    let (x, gr) = (va.row(n), g.row(n));
                    for h in 0..*heads {
                        for i in 0..d {
                            let wrow = vw.row(h * d + i);
                            let mut acc = 0.0;
                            for j in 0..d {
                                acc += gr[h * d + j] * wrow[j];
                            }
                            ga[(n, h * d + i)] = acc;
                            let xi = x[h * d + i];
                            if xi != 0.0 {
                                let gwrow = gw.row_mut(h * d + i);
                                for j in 0..d {
                                    gwrow[j] += xi * gr[h * d + j];
                                }
                            }
                        }
                    }
                }
                add_into(&mut grads[a.0], ga);
                add_into(&mut grads[w.0], gw);
            }
            Op::HeadMean(a, heads) => {
                let va = val(*a);
                let d = va.cols() / heads;
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                for n in 0..va.rows() {
                    for h in 0..*heads {
                        for j in 0..d {
                            ga[(n, h * d + j)] = g[(n, j)] / *heads as f64;
                        }
                    }
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::EdgeAggregate { z, alpha, src, dst, heads } => {
                let (vz, va) = (val(*z), val(*alpha));
                let d = vz.cols() / heads;
                let mut gz = Matrix::zeros(vz.rows(), vz.cols());
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                for e in 0..src.len() {
                    let (zs, gd) = (vz.row(src[e]), g.row(dst[e]));
                    let a = va.row(e).to_vec();
                    let gzs = gz.row_mut(src[e]);
                    for h in 0..*heads {
                        let mut acc = 0.0;
                        for k in h * d..(h + 1) * d {
                            acc += gd[k] * zs[k];
                            gzs[k] += a[h] * gd[k];
                        }
                        ga[(e, h)] = acc;
                    }
                }
                add_into(&mut grads[z.0], gz);
                add_into(&mut grads[alpha.0], ga);
            }
            Op::EdgeHeadDot { a, b, src, dst, heads } => {
                let (va, vb) = (val(*a), val(*b));
                let d = va.cols() / heads;
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                let mut gb = Matrix::zeros(vb.rows(), vb.cols());
                for e in 0..src.len() {
                    let (s, t) = (src[e], dst[e]);
                    for h in 0..*heads {
                        let ge = g[(e, h)];
                        if ge == 0.0 {
                            continue;
                        }
                        for k in h * d..(h + 1) * d {
                            ga[(s, k)] += ge * vb[(t, k)];
                            gb[(t, k)] += ge * va[(s, k)];
                        }
                    }
                }
                add_into(&mut grads[a.0], ga);
                add_into(&mut grads[b.0], gb);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let cols = val(*p).cols();
                    let idx: Vec<usize> = (off..off + cols).collect();
                    add_into(&mut grads[p.0], g.select_cols(&idx));
                    off += cols;
                }
            }
            Op::MeanRows(a) => {
                let va = val(*a);
                let n = va.rows() as f64;
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    for (o, x) in ga.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o = x / n;
                    }
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::SumAll(a) => {
                let va = val(*a);
                add_into(&mut grads[a.0], Matrix::filled(va.rows(), va.cols(), g[(0, 0)]));
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                    for c in 0..y.cols() {
                        ga[(r, c)] = y[(r, c)] * (g[(r, c)] - dot);
                    }
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::SelectCol(a, col) => {
                let va = val(*a);
                let mut ga = Matrix::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    ga[(r, *col)] = g[(r, 0)];
                }
                add_into(&mut grads[a.0], ga);
            }
            Op::MulScalar(a, s) => {
                let f = val(*s)[(0, 0)];
                let ds: f64 = g.as_slice().iter().zip(val(*a).as_slice()).map(|(x, y)| x * y).sum();
                add_into(&mut grads[a.0], g.map(|x| x * f));
                add_into(&mut grads[s.0], Matrix::filled(1, 1, ds));
            }
            Op::CrossEntropy { logits, labels, rows, probs } => {
                let vl = val(*logits);
                let scale = g[(0, 0)] / rows.len() as f64;
                let mut gl = Matrix::zeros(vl.rows(), vl.cols());
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..vl.cols() {
                        let target = if labels[r] as usize == c { 1.0 } else { 0.0 };
                        gl[(r, c)] += (probs[(k, c)] - target) * scale;
                    }
                }
                add_into(&mut grads[logits.0], gl);
            }
        }
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of `v`, or `None` if the root does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when the root does not depend on it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}
