//! Two interchangeable evaluators for the policy's forward pass: [`Plain`]
//! computes values only, [`Tape`] also records every operation so the
//! gradient of a scalar output can be pulled back to the parameters.

use std::collections::HashMap;
use std::rc::Rc;

use super::tensor::{self, column_stats, matmul, matmul_nt, matmul_tn, sigmoid, Mat};

pub const RMS_EPS: f64 = 1e-8;
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

pub type MaskRef = Rc<Vec<bool>>;

/// Operations the model is written against.
pub trait Backend {
    type V: Clone;

    fn param(&mut self, i: usize) -> Self::V;
    fn constant(&mut self, m: Mat) -> Self::V;
    fn value<'a>(&'a self, v: &'a Self::V) -> &'a Mat;

    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    /// `a · bᵀ`.
    fn matmul_nt(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    /// Adds a `1 × cols` row to every row of `a`.
    fn add_row(&mut self, a: &Self::V, bias: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn scale(&mut self, a: &Self::V, s: f64) -> Self::V;
    fn swish(&mut self, a: &Self::V) -> Self::V;
    fn relu(&mut self, a: &Self::V) -> Self::V;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn rms_norm(&mut self, x: &Self::V, g: &Self::V) -> Self::V;
    fn instance_norm(&mut self, x: &Self::V, g: &Self::V, b: &Self::V) -> Self::V;
    fn attention(
        &mut self,
        q: &Self::V,
        k: &Self::V,
        v: &Self::V,
        mask: Option<MaskRef>,
        scale: f64,
        blockwise: bool,
    ) -> Self::V;
    fn concat_cols(&mut self, parts: &[Self::V]) -> Self::V;
    fn concat_rows(&mut self, top: &Self::V, bottom: &Self::V) -> Self::V;
    fn slice_cols(&mut self, a: &Self::V, start: usize, len: usize) -> Self::V;
    fn slice_rows(&mut self, a: &Self::V, start: usize, len: usize) -> Self::V;
    /// Log-probability of `picks[r]` under the masked softmax of row `r`;
    /// a `rows × 1` column.
    fn log_softmax_pick(&mut self, x: &Self::V, mask: MaskRef, picks: Rc<Vec<usize>>) -> Self::V;
}

fn concat(parts: &[&Mat]) -> Mat {
    let rows = parts[0].rows;
    let cols: usize = parts.iter().map(|p| p.cols).sum();
    let mut out = Mat::zeros(rows, cols);
    for r in 0..rows {
        let mut c0 = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "concat rows");
            out.row_mut(r)[c0..c0 + p.cols].copy_from_slice(p.row(r));
            c0 += p.cols;
        }
    }
    out
}

fn stack(top: &Mat, bottom: &Mat) -> Mat {
    assert_eq!(top.cols, bottom.cols, "stacked widths");
    let mut data = top.data.clone();
    data.extend_from_slice(&bottom.data);
    Mat::from_vec(top.rows + bottom.rows, top.cols, data)
}

fn slice_cols(a: &Mat, start: usize, len: usize) -> Mat {
    assert!(start + len <= a.cols, "column slice out of range");
    let mut out = Mat::zeros(a.rows, len);
    for r in 0..a.rows {
        out.row_mut(r).copy_from_slice(&a.row(r)[start..start + len]);
    }
    out
}

fn slice_rows(a: &Mat, start: usize, len: usize) -> Mat {
    assert!(start + len <= a.rows, "row slice out of range");
    Mat::from_vec(len, a.cols, a.data[start * a.cols..(start + len) * a.cols].to_vec())
}

fn pick(x: &Mat, mask: &[bool], picks: &[usize]) -> Mat {
    assert_eq!(picks.len(), x.rows, "one pick per row");
    let lp = tensor::log_softmax_masked(x, mask);
    Mat::from_vec(x.rows, 1, picks.iter().enumerate().map(|(r, &j)| lp.at(r, j)).collect())
}

fn attend(q: &Mat, k: &Mat, v: &Mat, mask: Option<&[bool]>, scale: f64, blockwise: bool) -> Mat {
    if blockwise {
        tensor::attention_blockwise(q, k, v, mask, scale)
    } else {
        tensor::attention_standard(q, k, v, mask, scale)
    }
}

/// Value-only evaluation.
pub struct Plain<'p> {
    params: &'p [Rc<Mat>],
}

impl<'p> Plain<'p> {
    pub fn new(params: &'p [Rc<Mat>]) -> Self {
        Plain { params }
    }
}

impl Backend for Plain<'_> {
    type V = Rc<Mat>;

    fn param(&mut self, i: usize) -> Rc<Mat> {
        self.params[i].clone()
    }
    fn constant(&mut self, m: Mat) -> Rc<Mat> {
        Rc::new(m)
    }
    fn value<'a>(&'a self, v: &'a Rc<Mat>) -> &'a Mat {
        v
    }
    fn matmul(&mut self, a: &Rc<Mat>, b: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(matmul(a, b))
    }
    fn matmul_nt(&mut self, a: &Rc<Mat>, b: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(matmul_nt(a, b))
    }
    fn add(&mut self, a: &Rc<Mat>, b: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(a.zip(b, |x, y| x + y))
    }
    fn add_row(&mut self, a: &Rc<Mat>, bias: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(tensor::add_row(a, bias))
    }
    fn mul(&mut self, a: &Rc<Mat>, b: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(a.zip(b, |x, y| x * y))
    }
    fn scale(&mut self, a: &Rc<Mat>, s: f64) -> Rc<Mat> {
        Rc::new(a.map(|x| x * s))
    }
    fn swish(&mut self, a: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(a.map(tensor::swish))
    }
    fn relu(&mut self, a: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(a.map(|x| x.max(0.0)))
    }
    fn tanh(&mut self, a: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(a.map(f64::tanh))
    }
    fn rms_norm(&mut self, x: &Rc<Mat>, g: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(tensor::rms_norm(x, g, RMS_EPS))
    }
    fn instance_norm(&mut self, x: &Rc<Mat>, g: &Rc<Mat>, b: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(tensor::instance_norm(x, g, b, INSTANCE_NORM_EPS))
    }
    fn attention(
        &mut self,
        q: &Rc<Mat>,
        k: &Rc<Mat>,
        v: &Rc<Mat>,
        mask: Option<MaskRef>,
        scale: f64,
        blockwise: bool,
    ) -> Rc<Mat> {
        Rc::new(attend(q, k, v, mask.as_deref().map(Vec::as_slice), scale, blockwise))
    }
    fn concat_cols(&mut self, parts: &[Rc<Mat>]) -> Rc<Mat> {
        let refs: Vec<&Mat> = parts.iter().map(|p| &**p).collect();
        Rc::new(concat(&refs))
    }
    fn concat_rows(&mut self, top: &Rc<Mat>, bottom: &Rc<Mat>) -> Rc<Mat> {
        Rc::new(stack(top, bottom))
    }
    fn slice_cols(&mut self, a: &Rc<Mat>, start: usize, len: usize) -> Rc<Mat> {
        Rc::new(slice_cols(a, start, len))
    }
    fn slice_rows(&mut self, a: &Rc<Mat>, start: usize, len: usize) -> Rc<Mat> {
        Rc::new(slice_rows(a, start, len))
    }
    fn log_softmax_pick(&mut self, x: &Rc<Mat>, mask: MaskRef, picks: Rc<Vec<usize>>) -> Rc<Mat> {
        Rc::new(pick(x, &mask, &picks))
    }
}

/// Handle to a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Swish(Var),
    Relu(Var),
    Tanh(Var),
    Rms(Var, Var),
    Instance(Var, Var, Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        mask: Option<MaskRef>,
        scale: f64,
    },
    Concat(Vec<Var>),
    Stack(Var, Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Pick(Var, MaskRef, Rc<Vec<usize>>),
}

struct Node {
    value: Mat,
    op: Op,
}

/// Recording evaluator.
pub struct Tape<'p> {
    params: &'p [Rc<Mat>],
    nodes: Vec<Node>,
    param_nodes: HashMap<usize, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Rc<Mat>]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn v(&self, x: Var) -> &Mat {
        &self.nodes[x.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradients of the `1 × 1` output `loss` with respect to every
    /// parameter; parameters the loss does not touch get zeros.
    pub fn backward(&self, loss: Var) -> Vec<Mat> {
        assert_eq!(self.v(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Mat::filled(1, 1, 1.0));
        let mut out: Vec<Mat> = self.params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut send = |to: Var, d: Mat| match &mut grads[to.0] {
                Some(acc) => acc.add_assign(&d),
                slot @ None => *slot = Some(d),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(i) => out[*i].add_assign(&g),
                Op::MatMul(a, b) => {
                    send(*a, matmul_nt(&g, self.v(*b)));
                    send(*b, matmul_tn(self.v(*a), &g));
                }
                Op::MatMulNt(a, b) => {
                    send(*a, matmul(&g, self.v(*b)));
                    send(*b, matmul_tn(&g, self.v(*a)));
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::AddRow(a, b) => {
                    let mut db = Mat::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (s, x) in db.data.iter_mut().zip(g.row(r)) {
                            *s += x;
                        }
                    }
                    send(*a, g);
                    send(*b, db);
                }
                Op::Mul(a, b) => {
                    send(*a, g.zip(self.v(*b), |x, y| x * y));
                    send(*b, g.zip(self.v(*a), |x, y| x * y));
                }
                Op::Scale(a, s) => send(*a, g.map(|x| x * s)),
                Op::Swish(a) => send(
                    *a,
                    g.zip(self.v(*a), |d, z| {
                        let s = sigmoid(z);
                        d * s * (1.0 + z * (1.0 - s))
                    }),
                ),
                Op::Relu(a) => send(*a, g.zip(self.v(*a), |d, z| if z > 0.0 { d } else { 0.0 })),
                Op::Tanh(a) => send(*a, g.zip(&node.value, |d, y| d * (1.0 - y * y))),
                Op::Rms(x, gain) => {
                    let (dx, dg) = rms_backward(self.v(*x), self.v(*gain), &g);
                    send(*x, dx);
                    send(*gain, dg);
                }
                Op::Instance(x, gain, bias) => {
                    let (dx, dg, db) = instance_backward(self.v(*x), self.v(*gain), &g);
                    send(*x, dx);
                    send(*gain, dg);
                    send(*bias, db);
                }
                Op::Attention { q, k, v, mask, scale } => {
                    let (dq, dk, dv) = attention_backward(
                        self.v(*q),
                        self.v(*k),
                        self.v(*v),
                        mask.as_deref().map(Vec::as_slice),
                        *scale,
                        &g,
                    );
                    send(*q, dq);
                    send(*k, dk);
                    send(*v, dv);
                }
                Op::Concat(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = self.v(*p).cols;
                        send(*p, slice_cols(&g, c0, w));
                        c0 += w;
                    }
                }
                Op::Stack(top, bottom) => {
                    let split = self.v(*top).rows;
                    send(*top, slice_rows(&g, 0, split));
                    send(*bottom, slice_rows(&g, split, g.rows - split));
                }
                Op::SliceCols(a, start) => {
                    let src = self.v(*a);
                    let mut d = Mat::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    send(*a, d);
                }
                Op::SliceRows(a, start) => {
                    let src = self.v(*a);
                    let mut d = Mat::zeros(src.rows, src.cols);
                    d.data[start * src.cols..(start + g.rows) * src.cols].copy_from_slice(&g.data);
                    send(*a, d);
                }
                Op::Pick(x, mask, picks) => {
                    let xv = self.v(*x);
                    let lp = tensor::log_softmax_masked(xv, mask);
                    let mut d = Mat::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        let gr = g.data[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = d.row_mut(r);
                        for (j, v) in row.iter_mut().enumerate() {
                            let p = lp.at(r, j);
                            if p != f64::NEG_INFINITY {
                                *v = -gr * p.exp();
                            }
                        }
                        row[picks[r]] += gr;
                    }
                    send(*x, d);
                }
            }
        }
        out
    }
}

fn rms_backward(x: &Mat, g: &Mat, dy: &Mat) -> (Mat, Mat) {
    let d = x.cols as f64;
    let mut dx = Mat::zeros(x.rows, x.cols);
    let mut dg = Mat::zeros(1, x.cols);
    for r in 0..x.rows {
        let xr = x.row(r);
        let dyr = dy.row(r);
        let ms = xr.iter().map(|v| v * v).sum::<f64>() / d;
        let inv = 1.0 / (ms + RMS_EPS).sqrt();
        // Σ dy ⊙ g ⊙ x
        let s: f64 = (0..x.cols).map(|c| dyr[c] * g.data[c] * xr[c]).sum();
        let k = s * inv * inv * inv / d;
        for c in 0..x.cols {
            dx.data[r * x.cols + c] = dyr[c] * g.data[c] * inv - xr[c] * k;
            dg.data[c] += dyr[c] * xr[c] * inv;
        }
    }
    (dx, dg)
}

fn instance_backward(x: &Mat, g: &Mat, dy: &Mat) -> (Mat, Mat, Mat) {
    let n = x.rows as f64;
    let (mean, inv) = column_stats(x, INSTANCE_NORM_EPS);
    let mut dx = Mat::zeros(x.rows, x.cols);
    let mut dg = Mat::zeros(1, x.cols);
    let mut db = Mat::zeros(1, x.cols);
    for c in 0..x.cols {
        let mut sum_d = 0.0;
        let mut sum_dx = 0.0;
        for r in 0..x.rows {
            let xh = (x.at(r, c) - mean[c]) * inv[c];
            let d = dy.at(r, c);
            db.data[c] += d;
            dg.data[c] += d * xh;
            sum_d += d * g.data[c];
            sum_dx += d * g.data[c] * xh;
        }
        for r in 0..x.rows {
            let xh = (x.at(r, c) - mean[c]) * inv[c];
            let d = dy.at(r, c) * g.data[c];
            dx.data[r * x.cols + c] = inv[c] * (d - sum_d / n - xh * sum_dx / n);
        }
    }
    (dx, dg, db)
}

fn attention_backward(q: &Mat, k: &Mat, v: &Mat, mask: Option<&[bool]>, scale: f64, dout: &Mat) -> (Mat, Mat, Mat) {
    // The forward pass kept only the output; weights are recomputed here.
    let p = tensor::attention_weights(q, k, mask, scale);
    let dv = matmul_tn(&p, dout);
    let dp = matmul_nt(dout, v);
    let mut ds = Mat::zeros(p.rows, p.cols);
    for r in 0..p.rows {
        let pr = p.row(r);
        let dpr = dp.row(r);
        let inner: f64 = pr.iter().zip(dpr).map(|(a, b)| a * b).sum();
        for (j, s) in ds.row_mut(r).iter_mut().enumerate() {
            *s = scale * pr[j] * (dpr[j] - inner);
        }
    }
    (matmul(&ds, k), matmul_tn(&ds, q), dv)
}

impl Backend for Tape<'_> {
    type V = Var;

    fn param(&mut self, i: usize) -> Var {
        if let Some(&v) = self.param_nodes.get(&i) {
            return v;
        }
        let v = self.push((*self.params[i]).clone(), Op::Param(i));
        self.param_nodes.insert(i, v);
        v
    }
    fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }
    fn value<'a>(&'a self, v: &'a Var) -> &'a Mat {
        self.v(*v)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Var {
        let m = matmul(self.v(*a), self.v(*b));
        self.push(m, Op::MatMul(*a, *b))
    }
    fn matmul_nt(&mut self, a: &Var, b: &Var) -> Var {
        let m = matmul_nt(self.v(*a), self.v(*b));
        self.push(m, Op::MatMulNt(*a, *b))
    }
    fn add(&mut self, a: &Var, b: &Var) -> Var {
        let m = self.v(*a).zip(self.v(*b), |x, y| x + y);
        self.push(m, Op::Add(*a, *b))
    }
    fn add_row(&mut self, a: &Var, bias: &Var) -> Var {
        let m = tensor::add_row(self.v(*a), self.v(*bias));
        self.push(m, Op::AddRow(*a, *bias))
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Var {
        let m = self.v(*a).zip(self.v(*b), |x, y| x * y);
        self.push(m, Op::Mul(*a, *b))
    }
    fn scale(&mut self, a: &Var, s: f64) -> Var {
        let m = self.v(*a).map(|x| x * s);
        self.push(m, Op::Scale(*a, s))
    }
    fn swish(&mut self, a: &Var) -> Var {
        let m = self.v(*a).map(tensor::swish);
        self.push(m, Op::Swish(*a))
    }
    fn relu(&mut self, a: &Var) -> Var {
        let m = self.v(*a).map(|x| x.max(0.0));
        self.push(m, Op::Relu(*a))
    }
    fn tanh(&mut self, a: &Var) -> Var {
        let m = self.v(*a).map(f64::tanh);
        self.push(m, Op::Tanh(*a))
    }
    fn rms_norm(&mut self, x: &Var, g: &Var) -> Var {
        let m = tensor::rms_norm(self.v(*x), self.v(*g), RMS_EPS);
        self.push(m, Op::Rms(*x, *g))
    }
    fn instance_norm(&mut self, x: &Var, g: &Var, b: &Var) -> Var {
        let m = tensor::instance_norm(self.v(*x), self.v(*g), self.v(*b), INSTANCE_NORM_EPS);
        self.push(m, Op::Instance(*x, *g, *b))
    }
    fn attention(&mut self, q: &Var, k: &Var, v: &Var, mask: Option<MaskRef>, scale: f64, blockwise: bool) -> Var {
        let m = attend(
            self.v(*q),
            self.v(*k),
            self.v(*v),
            mask.as_deref().map(Vec::as_slice),
            scale,
            blockwise,
        );
        self.push(
            m,
            Op::Attention {
                q: *q,
                k: *k,
                v: *v,
                mask,
                scale,
            },
        )
    }
    fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let refs: Vec<&Mat> = parts.iter().map(|p| self.v(*p)).collect();
        let m = concat(&refs);
        self.push(m, Op::Concat(parts.to_vec()))
    }
    fn concat_rows(&mut self, top: &Var, bottom: &Var) -> Var {
        let m = stack(self.v(*top), self.v(*bottom));
        self.push(m, Op::Stack(*top, *bottom))
    }
    fn slice_cols(&mut self, a: &Var, start: usize, len: usize) -> Var {
        let m = slice_cols(self.v(*a), start, len);
        self.push(m, Op::SliceCols(*a, start))
    }
    fn slice_rows(&mut self, a: &Var, start: usize, len: usize) -> Var {
        let m = slice_rows(self.v(*a), start, len);
        self.push(m, Op::SliceRows(*a, start))
    }
    fn log_softmax_pick(&mut self, x: &Var, mask: MaskRef, picks: Rc<Vec<usize>>) -> Var {
        let m = pick(self.v(*x), &mask, &picks);
        self.push(m, Op::Pick(*x, mask, picks))
    }
}

/// `Σ w_r · x_r` over a column, recorded as a `1 × 1` value.
pub fn weighted_sum<B: Backend>(b: &mut B, x: &B::V, w: Vec<f64>) -> B::V {
    let rows = b.value(x).rows;
    assert_eq!(w.len(), rows, "one weight per row");
    let w = b.constant(Mat::from_vec(1, rows, w));
    b.matmul(&w, x)
}
