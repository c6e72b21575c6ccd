//! Extended-precision scalars.
//!
//! Real values are MPFR floats ([`rug::Float`]); [`Cplx`] is a thin complex
//! wrapper over a pair of them. Only the operations the synthesis pipeline
//! needs are provided.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rug::float::{Constant, Special};
use rug::Float;

/// Working precision in significand bits.
pub type Prec = u32;

pub fn real(prec: Prec, v: f64) -> Float {
    Float::with_val(prec, v)
}

pub fn pi(prec: Prec) -> Float {
    Float::with_val(prec, Constant::Pi)
}

pub fn neg_infinity(prec: Prec) -> Float {
    Float::with_val(prec, Special::NegInfinity)
}

/// `x^n` at the precision of `x`.
pub fn powu(x: &Float, n: u32) -> Float {
    use rug::ops::Pow;
    Float::with_val(x.prec(), x.pow(n))
}

/// `2^(-bits)` at the given precision.
pub fn pow2_neg(prec: Prec, bits: i32) -> Float {
    Float::with_val(prec, 1) >> bits
}

/// Full-precision decimal rendering used in every serialized report.
pub fn decimal(x: &Float) -> String {
    if x.is_zero() {
        return "0".to_string();
    }
    x.to_string_radix(10, None)
}

/// `ln sinh(x)` for `x > 0` without overflow: `x + ln(1 - e^{-2x}) - ln 2`.
pub fn ln_sinh(x: &Float) -> Float {
    let prec = x.prec();
    let e = Float::with_val(prec, -2 * x.clone()).exp();
    let one_minus = Float::with_val(prec, 1 - e);
    let ln2 = Float::with_val(prec, Constant::Log2);
    Float::with_val(prec, x + one_minus.ln()) - ln2
}

/// `sin(pi * x)` with the argument reduced modulo 2 before multiplying by pi.
pub fn sin_pi(x: &Float) -> Float {
    let prec = x.prec();
    let half = Float::with_val(prec, x / 2u32).floor();
    let reduced = Float::with_val(prec, x - Float::with_val(prec, half * 2u32));
    (reduced * pi(prec)).sin()
}

/// Pairwise summation with a fixed reduction order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[derive(Clone, PartialEq)]
pub struct Cplx {
    pub re: Float,
    pub im: Float,
}

impl fmt::Debug for Cplx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} + {}i)", self.re.to_f64(), self.im.to_f64())
    }
}

impl Cplx {
    pub fn new(re: Float, im: Float) -> Self {
        Cplx { re, im }
    }

    pub fn zero(prec: Prec) -> Self {
        Cplx::new(Float::new(prec), Float::new(prec))
    }

    pub fn one(prec: Prec) -> Self {
        Cplx::new(Float::with_val(prec, 1), Float::new(prec))
    }

    pub fn i(prec: Prec) -> Self {
        Cplx::new(Float::new(prec), Float::with_val(prec, 1))
    }

    pub fn from_f64(prec: Prec, re: f64, im: f64) -> Self {
        Cplx::new(Float::with_val(prec, re), Float::with_val(prec, im))
    }

    pub fn from_real(re: Float) -> Self {
        let prec = re.prec();
        Cplx::new(re, Float::new(prec))
    }

    pub fn prec(&self) -> Prec {
        self.re.prec().max(self.im.prec())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn conj(&self) -> Cplx {
        Cplx::new(self.re.clone(), Float::with_val(self.im.prec(), -&self.im))
    }

    pub fn scale(&self, k: &Float) -> Cplx {
        let p = self.prec();
        Cplx::new(Float::with_val(p, &self.re * k), Float::with_val(p, &self.im * k))
    }

    pub fn scale_f64(&self, k: f64) -> Cplx {
        let p = self.prec();
        Cplx::new(Float::with_val(p, &self.re * k), Float::with_val(p, &self.im * k))
    }

    /// Multiplication by the imaginary unit.
    pub fn mul_i(&self) -> Cplx {
        let p = self.prec();
        Cplx::new(Float::with_val(p, -&self.im), self.re.clone())
    }

    pub fn abs(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.re.hypot_ref(&self.im))
    }

    pub fn norm_sqr(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.re.square_ref()) + Float::with_val(p, self.im.square_ref())
    }

    pub fn exp(&self) -> Cplx {
        let p = self.prec();
        let mag = Float::with_val(p, self.re.exp_ref());
        let (s, c) = self.im.clone().sin_cos(Float::new(p));
        Cplx::new(Float::with_val(p, &mag * c), mag * s)
    }

    /// Principal square root (branch cut on the negative real axis, `sqrt(-1) = i`).
    pub fn sqrt(&self) -> Cplx {
        let p = self.prec();
        if self.is_zero() {
            return Cplx::zero(p);
        }
        let r = self.abs();
        let re = Float::with_val(p, Float::with_val(p, &r + &self.re) / 2u32).sqrt();
        let im_mag = Float::with_val(p, Float::with_val(p, &r - &self.re) / 2u32).sqrt();
        let im = if self.im.is_sign_negative() { -im_mag } else { im_mag };
        Cplx::new(re, im)
    }

    pub fn sin(&self) -> Cplx {
        let p = self.prec();
        let (s, c) = self.re.clone().sin_cos(Float::new(p));
        let (sh, ch) = self.im.clone().sinh_cosh(Float::new(p));
        Cplx::new(s * ch, c * sh)
    }

    pub fn sinh(&self) -> Cplx {
        let p = self.prec();
        let (sh, ch) = self.re.clone().sinh_cosh(Float::new(p));
        let (s, c) = self.im.clone().sin_cos(Float::new(p));
        Cplx::new(sh * c, ch * s)
    }

    pub fn powu(&self, n: u32) -> Cplx {
        let mut acc = Cplx::one(self.prec());
        for _ in 0..n {
            acc = &acc * self;
        }
        acc
    }

    pub fn recip(&self) -> Cplx {
        let p = self.prec();
        let d = self.norm_sqr();
        Cplx::new(
            Float::with_val(p, &self.re / &d),
            Float::with_val(p, -Float::with_val(p, &self.im / &d)),
        )
    }

    pub fn to_f64_pair(&self) -> (f64, f64) {
        (self.re.to_f64(), self.im.to_f64())
    }
}

impl<'a> Add<&'a Cplx> for &'a Cplx {
    type Output = Cplx;
    fn add(self, o: &Cplx) -> Cplx {
        let p = self.prec();
        Cplx::new(Float::with_val(p, &self.re + &o.re), Float::with_val(p, &self.im + &o.im))
    }
}

impl<'a> Sub<&'a Cplx> for &'a Cplx {
    type Output = Cplx;
    fn sub(self, o: &Cplx) -> Cplx {
        let p = self.prec();
        Cplx::new(Float::with_val(p, &self.re - &o.re), Float::with_val(p, &self.im - &o.im))
    }
}

impl<'a> Mul<&'a Cplx> for &'a Cplx {
    type Output = Cplx;
    fn mul(self, o: &Cplx) -> Cplx {
        let p = self.prec();
        let rr = Float::with_val(p, &self.re * &o.re);
        let ii = Float::with_val(p, &self.im * &o.im);
        let ri = Float::with_val(p, &self.re * &o.im);
        let ir = Float::with_val(p, &self.im * &o.re);
        Cplx::new(rr - ii, ri + ir)
    }
}

impl<'a> Div<&'a Cplx> for &'a Cplx {
    type Output = Cplx;
    fn div(self, o: &Cplx) -> Cplx {
        self * &o.recip()
    }
}

impl Neg for &Cplx {
    type Output = Cplx;
    fn neg(self) -> Cplx {
        let p = self.prec();
        Cplx::new(Float::with_val(p, -&self.re), Float::with_val(p, -&self.im))
    }
}

impl AddAssign<&Cplx> for Cplx {
    fn add_assign(&mut self, o: &Cplx) {
        self.re += &o.re;
        self.im += &o.im;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_i_pi_is_minus_one() {
        let z = Cplx::new(Float::new(128), pi(128));
        let e = z.exp();
        assert!((e.re.to_f64() + 1.0).abs() < 1e-30);
        assert!(e.im.to_f64().abs() < 1e-30);
    }

    #[test]
    fn principal_sqrt_of_minus_one() {
        let s = Cplx::from_f64(128, -1.0, 0.0).sqrt();
        assert_eq!(s.to_f64_pair(), (0.0, 1.0));
        let s = Cplx::from_f64(128, 3.0, -4.0).sqrt();
        let (re, im) = s.to_f64_pair();
        assert!((re - 2.0).abs() < 1e-15 && (im + 1.0).abs() < 1e-15);
    }

    #[test]
    fn ln_sinh_matches_direct_for_moderate_args() {
        for &x in &[0.1, 1.0, 5.0, 30.0] {
            let got = ln_sinh(&real(128, x)).to_f64();
            assert!((got - x.sinh().ln()).abs() < 1e-12, "x={x}");
        }
        // far beyond f64 overflow of sinh itself
        let big = ln_sinh(&real(128, 1.0e4)).to_f64();
        assert!((big - (1.0e4 - 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn sin_pi_reduces_large_arguments() {
        let x = Float::with_val(256, 1_000_000_001u64) / 2u32;
        // sin(pi * (5e8 + 0.5)) = sin(pi/2 + 5e8*pi) = +1
        assert!((sin_pi(&x).to_f64() - 1.0).abs() < 1e-30);
    }

    #[test]
    fn pairwise_sum_is_order_fixed() {
        let xs: Vec<f64> = (1..=10).map(|k| 1.0 / k as f64).collect();
        assert!((pairwise_sum(&xs) - xs.iter().sum::<f64>()).abs() < 1e-14);
    }
}
