//! Dense row-major matrices and the numeric kernels shared by the plain and
//! taped forward passes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// Panics if `data` does not hold `rows * cols` entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn row_vec(data: Vec<f64>) -> Mat {
        Mat {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Mat {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Mat {
            rows: rows.len(),
            cols,
            data,
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, o: &Mat) -> f64 {
        assert_eq!(self.shape(), o.shape());
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, o: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), o.shape(), "elementwise shape");
        Mat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, o: &Mat) {
        assert_eq!(self.shape(), o.shape(), "accumulate shape");
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }
}

/// `a · b`.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let o = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &x) in a.row(i).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (y, &w) in o.iter_mut().zip(b.row(k)) {
                *y += x * w;
            }
        }
    }
    out
}

/// `a · bᵀ`.
pub fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    let mut out = Mat::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ar, b.row(j));
        }
    }
    out
}

/// `aᵀ · b`.
pub fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimension");
    let mut out = Mat::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let br = b.row(k);
        for (i, &x) in a.row(k).iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (y, &w) in out.data[i * b.cols..(i + 1) * b.cols].iter_mut().zip(br) {
                *y += x * w;
            }
        }
    }
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn add_row(a: &Mat, bias: &Mat) -> Mat {
    assert_eq!((1, a.cols), bias.shape(), "bias shape");
    let mut out = a.clone();
    for r in 0..a.rows {
        for (y, b) in out.row_mut(r).iter_mut().zip(&bias.data) {
            *y += b;
        }
    }
    out
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

/// Row-wise `x / sqrt(mean(x²) + eps) ⊙ g`.
pub fn rms_norm(x: &Mat, g: &Mat, eps: f64) -> Mat {
    assert_eq!((1, x.cols), g.shape(), "gain shape");
    let mut out = x.clone();
    for r in 0..x.rows {
        let row = out.row_mut(r);
        let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
        let inv = 1.0 / (ms + eps).sqrt();
        for (v, gi) in row.iter_mut().zip(&g.data) {
            *v *= inv * gi;
        }
    }
    out
}

/// Per-column standardisation over the row axis, then `⊙ g + b`.
pub fn instance_norm(x: &Mat, g: &Mat, b: &Mat, eps: f64) -> Mat {
    let (mean, inv) = column_stats(x, eps);
    let mut out = x.clone();
    for r in 0..x.rows {
        for c in 0..x.cols {
            let v = &mut out.data[r * x.cols + c];
            *v = (*v - mean[c]) * inv[c] * g.data[c] + b.data[c];
        }
    }
    out
}

pub(crate) fn column_stats(x: &Mat, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows as f64;
    let mut mean = vec![0.0; x.cols];
    for r in 0..x.rows {
        for (m, v) in mean.iter_mut().zip(x.row(r)) {
            *m += v / n;
        }
    }
    let mut var = vec![0.0; x.cols];
    for r in 0..x.rows {
        for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    let inv = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    (mean, inv)
}

/// Attention weights `softmax(scale · q kᵀ)` with masked columns at exactly
/// zero. `mask` is row-major over (query, key); a fully masked row is zero.
pub fn attention_weights(q: &Mat, k: &Mat, mask: Option<&[bool]>, scale: f64) -> Mat {
    let mut s = matmul_nt(q, k);
    for r in 0..s.rows {
        let row = s.row_mut(r);
        let m = mask.map(|m| &m[r * row.len()..(r + 1) * row.len()]);
        let mut hi = f64::NEG_INFINITY;
        for (j, v) in row.iter_mut().enumerate() {
            if m.is_some_and(|m| !m[j]) {
                *v = f64::NEG_INFINITY;
            } else {
                *v *= scale;
                hi = hi.max(*v);
            }
        }
        if hi == f64::NEG_INFINITY {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - hi).exp() };
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    s
}

pub fn attention_standard(q: &Mat, k: &Mat, v: &Mat, mask: Option<&[bool]>, scale: f64) -> Mat {
    matmul(&attention_weights(q, k, mask, scale), v)
}

/// Key block length for [`attention_blockwise`].
pub const KEY_BLOCK: usize = 16;

/// Same function as [`attention_standard`], evaluated one key block at a
/// time with a running maximum and normaliser so the full score matrix is
/// never materialised.
pub fn attention_blockwise(q: &Mat, k: &Mat, v: &Mat, mask: Option<&[bool]>, scale: f64) -> Mat {
    assert_eq!(q.cols, k.cols, "query/key width");
    assert_eq!(k.rows, v.rows, "key/value rows");
    let n = k.rows;
    let mut out = Mat::zeros(q.rows, v.cols);
    let mut scores = [0.0f64; KEY_BLOCK];
    for i in 0..q.rows {
        let qi = q.row(i);
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let acc = out.row_mut(i);
        for start in (0..n).step_by(KEY_BLOCK) {
            let end = (start + KEY_BLOCK).min(n);
            let mut block_hi = f64::NEG_INFINITY;
            for j in start..end {
                let s = if mask.is_some_and(|m| !m[i * n + j]) {
                    f64::NEG_INFINITY
                } else {
                    scale * dot(qi, k.row(j))
                };
                scores[j - start] = s;
                block_hi = block_hi.max(s);
            }
            if block_hi == f64::NEG_INFINITY {
                continue;
            }
            let new_hi = hi.max(block_hi);
            let shrink = if hi == f64::NEG_INFINITY {
                0.0
            } else {
                (hi - new_hi).exp()
            };
            sum *= shrink;
            acc.iter_mut().for_each(|a| *a *= shrink);
            for j in start..end {
                let s = scores[j - start];
                if s == f64::NEG_INFINITY {
                    continue;
                }
                let w = (s - new_hi).exp();
                sum += w;
                for (a, x) in acc.iter_mut().zip(v.row(j)) {
                    *a += w * x;
                }
            }
            hi = new_hi;
        }
        if sum > 0.0 {
            acc.iter_mut().for_each(|a| *a /= sum);
        }
    }
    out
}

/// Row-wise log-softmax restricted to the allowed columns; masked entries
/// are `-inf`.
pub fn log_softmax_masked(x: &Mat, mask: &[bool]) -> Mat {
    let mut out = x.clone();
    for r in 0..x.rows {
        let m = &mask[r * x.cols..(r + 1) * x.cols];
        let row = out.row_mut(r);
        let hi = row
            .iter()
            .zip(m)
            .filter(|(_, &ok)| ok)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = hi
            + row
                .iter()
                .zip(m)
                .filter(|(_, &ok)| ok)
                .map(|(v, _)| (v - hi).exp())
                .sum::<f64>()
                .ln();
        for (v, &ok) in row.iter_mut().zip(m) {
            *v = if ok { *v - lse } else { f64::NEG_INFINITY };
        }
    }
    out
}
