//! Gram matrices of constraint kernels and their factorization.
//!
//! Exponential families are exponentially ill-conditioned, so everything here
//! runs at the working precision. The matrix is equilibrated to unit diagonal
//! before a Cholesky factorization that watches every pivot.

use rayon::prelude::*;
use rug::Float;

use crate::error::{BeamError, Result};
use crate::kernel::Kernel;
use crate::mp::{self, Prec};

pub type Matrix = Vec<Vec<Float>>;

/// `<a, b>_{L^2(0,T)}` for real kernels, in closed form.
pub fn gram_entry(a: &Kernel, b: &Kernel, horizon: &Float) -> Float {
    a.to_exppoly(horizon).product(&b.to_exppoly(horizon)).integral(horizon).re
}

pub fn gram_matrix(kernels: &[Kernel], horizon: &Float) -> Matrix {
    let n = kernels.len();
    let polys: Vec<_> = kernels.iter().map(|k| k.to_exppoly(horizon)).collect();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<Float> = pairs
        .par_iter()
        .map(|&(i, j)| polys[i].product(&polys[j]).integral(horizon).re)
        .collect();
    let p = horizon.prec();
    let mut g = vec![vec![Float::new(p); n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        g[j][i] = v.clone();
        g[i][j] = v;
    }
    g
}

pub fn mat_vec(a: &Matrix, x: &[Float]) -> Vec<Float> {
    a.iter()
        .map(|row| {
            let p = row.first().map_or(53, |v| v.prec());
            let mut acc = Float::new(p);
            for (aij, xj) in row.iter().zip(x) {
                acc += Float::with_val(p, aij * xj);
            }
            acc
        })
        .collect()
}

pub fn dot(a: &[Float], b: &[Float]) -> Float {
    let p = a.first().map_or(53, |v| v.prec());
    let mut acc = Float::new(p);
    for (x, y) in a.iter().zip(b) {
        acc += Float::with_val(p, x * y);
    }
    acc
}

pub fn norm2(a: &[Float]) -> Float {
    dot(a, a).sqrt()
}

/// Maximum absolute column sum.
pub fn norm1(a: &Matrix) -> Float {
    let n = a.len();
    let p = a.first().and_then(|r| r.first()).map_or(53, |v| v.prec());
    let mut best = Float::new(p);
    for j in 0..n {
        let mut s = Float::new(p);
        for row in a {
            s += row[j].clone().abs();
        }
        if s > best {
            best = s;
        }
    }
    best
}

/// A pivot that fell below the threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct PivotFailure {
    pub index: usize,
    pub pivot: f64,
}

/// Cholesky factor of `S (G + eps I) S` with `S` the diagonal equilibration.
#[derive(Clone, Debug)]
pub struct Cholesky {
    lower: Matrix,
    scale: Vec<Float>,
    /// Smallest and largest pivot of the equilibrated matrix.
    pub min_pivot: Float,
    pub max_pivot: Float,
    prec: Prec,
}

/// Pivots of the unit-diagonal matrix below `2^{-prec/2}` mean the system
/// cannot be resolved at this precision.
pub fn pivot_threshold(prec: Prec) -> Float {
    mp::pow2_neg(prec, (prec / 2) as i32)
}

impl Cholesky {
    pub fn factor(g: &Matrix, regularization: &Float) -> std::result::Result<Cholesky, PivotFailure> {
        let n = g.len();
        let p = g.first().and_then(|r| r.first()).map_or(regularization.prec(), |v| v.prec());
        let threshold = pivot_threshold(p);
        let mut scale = Vec::with_capacity(n);
        for (i, row) in g.iter().enumerate() {
            let d = Float::with_val(p, &row[i] + regularization);
            if d <= 0 {
                return Err(PivotFailure { index: i, pivot: d.to_f64() });
            }
            scale.push(d.sqrt().recip());
        }
        let mut a: Matrix = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut v = g[i][j].clone();
                        if i == j {
                            v += regularization;
                        }
                        Float::with_val(p, &v * &scale[i]) * &scale[j]
                    })
                    .collect()
            })
            .collect();
        let mut min_pivot = Float::with_val(p, f64::INFINITY);
        let mut max_pivot = Float::new(p);
        for j in 0..n {
            let mut d = a[j][j].clone();
            for k in 0..j {
                d -= Float::with_val(p, a[j][k].square_ref());
            }
            if d < threshold {
                return Err(PivotFailure { index: j, pivot: d.to_f64() });
            }
            if d < min_pivot {
                min_pivot = d.clone();
            }
            if d > max_pivot {
                max_pivot = d.clone();
            }
            let djj = d.sqrt();
            for i in j + 1..n {
                let mut v = a[i][j].clone();
                for k in 0..j {
                    v -= Float::with_val(p, &a[i][k] * &a[j][k]);
                }
                a[i][j] = v / &djj;
            }
            a[j][j] = djj;
        }
        for (i, row) in a.iter_mut().enumerate() {
            for v in row.iter_mut().skip(i + 1) {
                *v = Float::new(p);
            }
        }
        Ok(Cholesky { lower: a, scale, min_pivot, max_pivot, prec: p })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Solves `(G + eps I) x = b`.
    pub fn solve(&self, b: &[Float]) -> Vec<Float> {
        let n = self.dim();
        let p = self.prec;
        let mut y: Vec<Float> = b.iter().zip(&self.scale).map(|(v, s)| Float::with_val(p, v * s)).collect();
        for i in 0..n {
            let mut v = y[i].clone();
            for k in 0..i {
                v -= Float::with_val(p, &self.lower[i][k] * &y[k]);
            }
            y[i] = v / &self.lower[i][i];
        }
        for i in (0..n).rev() {
            let mut v = y[i].clone();
            for k in i + 1..n {
                v -= Float::with_val(p, &self.lower[k][i] * &y[k]);
            }
            y[i] = v / &self.lower[i][i];
        }
        y.iter().zip(&self.scale).map(|(v, s)| Float::with_val(p, v * s)).collect()
    }

    /// `(G + eps I)^{-1}`, column by column.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let p = self.prec;
        let cols: Vec<Vec<Float>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![Float::new(p); n];
                e[j] = Float::with_val(p, 1);
                self.solve(&e)
            })
            .collect();
        (0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect()
    }

    /// Ratio of extreme pivots of the equilibrated factorization.
    pub fn pivot_ratio(&self) -> f64 {
        Float::with_val(self.prec, &self.max_pivot / &self.min_pivot).to_f64()
    }
}

/// `||G||_1 ||G^{-1}||_1`.
pub fn condition_number(g: &Matrix, inverse: &Matrix) -> f64 {
    Float::with_val(norm1(g).prec(), norm1(g) * norm1(inverse)).to_f64()
}

pub fn rank_deficiency(prec: Prec, failure: &PivotFailure, trace: Vec<Prec>) -> BeamError {
    BeamError::NumericalRankDeficiency { precision_bits: prec, index: failure.index, pivot: failure.pivot, trace }
}

pub fn factor_or_error(g: &Matrix, regularization: &Float, trace: &[Prec]) -> Result<Cholesky> {
    Cholesky::factor(g, regularization).map_err(|f| rank_deficiency(regularization.prec(), &f, trace.to_vec()))
}
