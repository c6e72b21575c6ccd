//! Constraint kernels over `L^2(0,T)` and the closed-form calculus behind them.
//!
//! Every function the synthesis touches (kernels, controls, Green's functions
//! of the modal ODE) is a finite sum of terms `c s^q e^{nu s}`, an
//! [`ExpPoly`]. Products and integrals over `[0, t]` of such sums are
//! elementary, so Gram entries, Duhamel integrals and the antiderivatives of
//! `f''` are all evaluated in closed form at the working precision.

use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::mp::{self, Cplx, Prec};

/// `coef * s^power * e^{rate * s}`
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coef: Cplx,
    pub power: u32,
    pub rate: Cplx,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpPoly {
    pub terms: Vec<Term>,
    prec: Prec,
}

impl ExpPoly {
    pub fn zero(prec: Prec) -> Self {
        ExpPoly { terms: Vec::new(), prec }
    }

    pub fn monomial(prec: Prec, power: u32) -> Self {
        ExpPoly {
            terms: vec![Term { coef: Cplx::one(prec), power, rate: Cplx::zero(prec) }],
            prec,
        }
    }

    pub fn single(coef: Cplx, power: u32, rate: Cplx) -> Self {
        let prec = coef.prec();
        ExpPoly { terms: vec![Term { coef, power, rate }], prec }
    }

    pub fn prec(&self) -> Prec {
        self.prec
    }

    pub fn scaled(&self, k: &Cplx) -> ExpPoly {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coef: &t.coef * k, power: t.power, rate: t.rate.clone() })
                .collect(),
            prec: self.prec,
        }
    }

    pub fn scaled_real(&self, k: &Float) -> ExpPoly {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coef: t.coef.scale(k), power: t.power, rate: t.rate.clone() })
                .collect(),
            prec: self.prec,
        }
    }

    /// Term-wise conjugate: the conjugate function for real `s`.
    pub fn conj(&self) -> ExpPoly {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coef: t.coef.conj(), power: t.power, rate: t.rate.conj() })
                .collect(),
            prec: self.prec,
        }
    }

    pub fn extend(&mut self, other: ExpPoly) {
        self.terms.extend(other.terms);
    }

    pub fn sum(&self, other: &ExpPoly) -> ExpPoly {
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        out
    }

    pub fn product(&self, other: &ExpPoly) -> ExpPoly {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                terms.push(Term {
                    coef: &a.coef * &b.coef,
                    power: a.power + b.power,
                    rate: &a.rate + &b.rate,
                });
            }
        }
        ExpPoly { terms, prec: self.prec.max(other.prec) }
    }

    /// Multiplies by `s^k`.
    pub fn shifted_power(&self, k: u32) -> ExpPoly {
        ExpPoly {
            terms: self
                .terms
                .iter()
                .map(|t| Term { coef: t.coef.clone(), power: t.power + k, rate: t.rate.clone() })
                .collect(),
            prec: self.prec,
        }
    }

    pub fn eval(&self, s: &Float) -> Cplx {
        let p = self.prec;
        let mut acc = Cplx::zero(p);
        let sc = Cplx::from_real(Float::with_val(p, s));
        for t in &self.terms {
            let e = (&t.rate * &sc).exp();
            let pw = Float::with_val(p, mp::powu(s, t.power));
            acc += &(&t.coef * &e).scale(&pw);
        }
        acc
    }

    /// `int_0^t self(s) ds`
    pub fn integral(&self, t: &Float) -> Cplx {
        let mut acc = Cplx::zero(self.prec);
        for term in &self.terms {
            acc += &(&term.coef * &moment_integral(term.power, &term.rate, t));
        }
        acc
    }

    /// Combines terms with identical power and rate.
    pub fn merge_like_terms(&self) -> ExpPoly {
        let mut out: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match out.iter_mut().find(|o| o.power == t.power && o.rate == t.rate) {
                Some(o) => o.coef += &t.coef,
                None => out.push(t.clone()),
            }
        }
        out.retain(|t| !t.coef.is_zero());
        ExpPoly { terms: out, prec: self.prec }
    }

    /// A polynomial with the same real part on the real line and roughly half
    /// the terms: every term with a negative-imaginary rate is replaced by its
    /// conjugate, then like terms are merged. Only `.re` of the result is
    /// meaningful.
    pub fn fold_conjugates(&self) -> ExpPoly {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                if t.rate.im.is_sign_negative() && !t.rate.im.is_zero() {
                    Term { coef: t.coef.conj(), power: t.power, rate: t.rate.conj() }
                } else {
                    t.clone()
                }
            })
            .collect();
        ExpPoly { terms, prec: self.prec }.merge_like_terms()
    }

    /// Real part of the function on the uniform grid `s_k = k * step`,
    /// `k = 0..count`. Blocks of the grid are filled in parallel by geometric
    /// recurrence, each block anchored by a direct exponential.
    pub fn sample_uniform(&self, step: &Float, count: usize) -> Vec<Float> {
        const BLOCK: usize = 2048;
        let p = self.prec;
        let hstep = Cplx::from_real(Float::with_val(p, step));
        let ratios: Vec<Cplx> = self.terms.iter().map(|t| (&t.rate * &hstep).exp()).collect();
        let mut out = vec![Float::new(p); count];
        out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
            let first = b * BLOCK;
            for (term, ratio) in self.terms.iter().zip(&ratios) {
                let s0 = Cplx::from_real(Float::with_val(p, step * first as u64));
                let mut w = &term.coef * &(&term.rate * &s0).exp();
                for (j, slot) in chunk.iter_mut().enumerate() {
                    if term.power == 0 {
                        *slot += &w.re;
                    } else {
                        let s = Float::with_val(p, step * (first + j) as u64);
                        *slot += Float::with_val(p, &w.re * mp::powu(&s, term.power));
                    }
                    w = &w * ratio;
                }
            }
        });
        out
    }
}

/// `int_0^t s^q e^{nu s} ds`, by power series when `|nu t| < 1` and by the
/// upward recurrence `I_q = (t^q e^{nu t} - q I_{q-1}) / nu` otherwise.
pub fn moment_integral(q: u32, nu: &Cplx, t: &Float) -> Cplx {
    let p = nu.prec().max(t.prec());
    if t.is_zero() {
        return Cplx::zero(p);
    }
    let tc = Cplx::from_real(Float::with_val(p, t));
    let z = nu * &tc;
    let zabs = z.abs();
    if zabs < 1 {
        // t^{q+1} * sum_k z^k / (k! (q+k+1))
        let eps = mp::pow2_neg(p, p as i32 + 8);
        let mut acc = Cplx::zero(p);
        let mut zk = Cplx::one(p);
        let mut fact = Float::with_val(p, 1);
        for k in 0u32.. {
            let denom = Float::with_val(p, &fact * (q + k + 1));
            let term = Cplx::new(Float::with_val(p, &zk.re / &denom), Float::with_val(p, &zk.im / &denom));
            acc += &term;
            if k > 2 && term.abs() <= Float::with_val(p, &eps * acc.abs()) {
                break;
            }
            if k > 4 * p {
                break;
            }
            zk = &zk * &z;
            fact *= k + 1;
        }
        let tq = Float::with_val(p, mp::powu(t, q + 1));
        return acc.scale(&tq);
    }
    let e = z.exp();
    let inv = nu.recip();
    let mut acc = &(&e - &Cplx::one(p)) * &inv;
    for m in 1..=q {
        let tm = Float::with_val(p, mp::powu(t, m));
        let lead = e.scale(&tm);
        acc = &(&lead - &acc.scale_f64(m as f64)) * &inv;
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

/// What a kernel constrains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KernelOrigin {
    /// `int f'' = 0`, i.e. `f'(T) = 0`.
    EndpointSlope,
    /// `int s f'' = 0`, which with the former gives `f(T) = 0`.
    EndpointValue,
    Mode { n: usize, branch: Branch },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// `1`
    Constant,
    /// `s`
    Linear,
    /// `e^{lambda (T - s)}`
    Exponential,
    /// `(T - s) e^{lambda (T - s)}`
    ShiftedExponential,
}

/// Which real function is taken from a possibly complex shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPart {
    /// The shape is already real (`lambda` real).
    Real,
    RealPart,
    ImagPart,
}

/// A real-valued constraint kernel on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub shape: KernelShape,
    pub rate: Cplx,
    pub part: KernelPart,
    pub origin: KernelOrigin,
}

impl Kernel {
    pub fn constant(prec: Prec) -> Self {
        Kernel {
            shape: KernelShape::Constant,
            rate: Cplx::zero(prec),
            part: KernelPart::Real,
            origin: KernelOrigin::EndpointSlope,
        }
    }

    pub fn linear(prec: Prec) -> Self {
        Kernel {
            shape: KernelShape::Linear,
            rate: Cplx::zero(prec),
            part: KernelPart::Real,
            origin: KernelOrigin::EndpointValue,
        }
    }

    pub fn exponential(rate: Cplx, part: KernelPart, origin: KernelOrigin) -> Self {
        Kernel { shape: KernelShape::Exponential, rate, part, origin }
    }

    pub fn shifted_exponential(rate: Cplx, origin: KernelOrigin) -> Self {
        Kernel { shape: KernelShape::ShiftedExponential, rate, part: KernelPart::Real, origin }
    }

    pub fn prec(&self) -> Prec {
        self.rate.prec()
    }

    /// The complex shape before taking the real or imaginary part, in the variable `s`.
    fn complex_shape(&self, horizon: &Float) -> ExpPoly {
        let p = self.prec().max(horizon.prec());
        match self.shape {
            KernelShape::Constant => ExpPoly::monomial(p, 0),
            KernelShape::Linear => ExpPoly::monomial(p, 1),
            KernelShape::Exponential | KernelShape::ShiftedExponential => {
                // e^{lambda (T - s)} = e^{lambda T} e^{-lambda s}
                let tc = Cplx::from_real(Float::with_val(p, horizon));
                let lead = (&self.rate * &tc).exp();
                let neg = -&self.rate;
                let base = ExpPoly::single(lead.clone(), 0, neg.clone());
                if self.shape == KernelShape::Exponential {
                    base
                } else {
                    // (T - s) e^{lambda (T - s)}
                    let mut out = base.scaled_real(horizon);
                    out.extend(ExpPoly::single(-&lead, 1, neg));
                    out
                }
            }
        }
    }

    /// The kernel as a real-valued [`ExpPoly`] (conjugate pairs for `Re`/`Im`).
    pub fn to_exppoly(&self, horizon: &Float) -> ExpPoly {
        let shape = self.complex_shape(horizon);
        let p = shape.prec();
        match self.part {
            KernelPart::Real => shape,
            KernelPart::RealPart => {
                let half = Cplx::from_f64(p, 0.5, 0.0);
                shape.scaled(&half).sum(&shape.conj().scaled(&half))
            }
            KernelPart::ImagPart => {
                // (E - conj E) / (2i)
                let minus_half_i = Cplx::from_f64(p, 0.0, -0.5);
                let half_i = Cplx::from_f64(p, 0.0, 0.5);
                shape.scaled(&minus_half_i).sum(&shape.conj().scaled(&half_i))
            }
        }
    }

    /// Direct pointwise evaluation in `f64` from the defining formula.
    pub fn eval_f64(&self, s: f64, horizon: f64) -> f64 {
        let tau = horizon - s;
        let (lr, li) = self.rate.to_f64_pair();
        let (re, im) = match self.shape {
            KernelShape::Constant => (1.0, 0.0),
            KernelShape::Linear => (s, 0.0),
            KernelShape::Exponential | KernelShape::ShiftedExponential => {
                let mag = (lr * tau).exp();
                let w = if self.shape == KernelShape::ShiftedExponential { tau } else { 1.0 };
                (w * mag * (li * tau).cos(), w * mag * (li * tau).sin())
            }
        };
        match self.part {
            KernelPart::Real | KernelPart::RealPart => re,
            KernelPart::ImagPart => im,
        }
    }

    /// Whether two kernels describe the same function.
    pub fn same_function(&self, other: &Kernel) -> bool {
        self.shape == other.shape && self.part == other.part && self.rate == other.rate
    }
}

/// Serializable kernel descriptor with full-precision decimal rates.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelRecord {
    pub shape: KernelShape,
    pub part: KernelPart,
    pub lambda_re: String,
    pub lambda_im: String,
    pub origin: KernelOrigin,
}

impl From<&Kernel> for KernelRecord {
    fn from(k: &Kernel) -> Self {
        KernelRecord {
            shape: k.shape,
            part: k.part,
            lambda_re: mp::decimal(&k.rate.re),
            lambda_im: mp::decimal(&k.rate.im),
            origin: k.origin,
        }
    }
}

/// Hermitian pairing `<e^{lambda (T-s)}, e^{mu (T-s)}> = (e^{(lambda + conj mu) T} - 1) / (lambda + conj mu)`,
/// with limit `T` when the exponent vanishes.
pub fn exp_inner(lambda: &Cplx, mu: &Cplx, horizon: &Float) -> Cplx {
    let nu = lambda + &mu.conj();
    moment_integral(0, &nu, horizon)
}
