//! Boundary controls represented by their second derivative.
//!
//! `f''` is a real combination of constraint kernels. `f'` and `f` are its
//! first and second antiderivatives from zero, so `f(0) = f'(0) = 0` always
//! holds and the values at `T` are exactly the endpoint moments.

use std::io::Write;

use rug::Float;
use serde::Serialize;

use crate::error::Result;
use crate::kernel::{ExpPoly, Kernel, KernelRecord};
use crate::mp::{self, Cplx, Prec};

#[derive(Clone, Debug)]
pub struct ControlSignal {
    pub kernels: Vec<Kernel>,
    pub coefficients: Vec<Float>,
    pub horizon: Float,
    second: ExpPoly,
}

impl ControlSignal {
    pub fn new(kernels: Vec<Kernel>, coefficients: Vec<Float>, horizon: Float) -> Self {
        assert_eq!(kernels.len(), coefficients.len(), "one coefficient per kernel");
        let prec = horizon.prec();
        let mut second = ExpPoly::zero(prec);
        for (k, c) in kernels.iter().zip(&coefficients) {
            second.extend(k.to_exppoly(&horizon).scaled_real(c));
        }
        let second = second.merge_like_terms();
        ControlSignal { kernels, coefficients, horizon, second }
    }

    pub fn zero(horizon: Float) -> Self {
        ControlSignal::new(Vec::new(), Vec::new(), horizon)
    }

    pub fn prec(&self) -> Prec {
        self.horizon.prec()
    }

    pub fn horizon_f64(&self) -> f64 {
        self.horizon.to_f64()
    }

    /// Whether `f''` vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.second.terms.is_empty()
    }

    /// `f''` as an exponential polynomial in `s`.
    pub fn second_derivative(&self) -> &ExpPoly {
        &self.second
    }

    /// `(f(t), f'(t), f''(t))`.
    pub fn evaluate(&self, t: &Float) -> (Float, Float, Float) {
        let p = self.prec();
        let f2 = self.second.eval(t).re;
        let f1 = self.second.integral(t).re;
        // f(t) = int_0^t (t - s) f''(s) ds
        let moment = self.second.shifted_power(1).integral(t).re;
        let f0 = Float::with_val(p, Float::with_val(p, t * &f1) - moment);
        (f0, f1, f2)
    }

    pub fn evaluate_f64(&self, t: f64) -> (f64, f64, f64) {
        let (a, b, c) = self.evaluate(&Float::with_val(self.prec(), t));
        (a.to_f64(), b.to_f64(), c.to_f64())
    }

    /// `||f''||_{L^2(0,T)}` by the closed-form integral of `f''^2`.
    pub fn cost(&self) -> Float {
        let sq = self.second.product(&self.second).integral(&self.horizon).re;
        let p = self.prec();
        let sq = if sq.is_sign_negative() { Float::new(p) } else { sq };
        sq.sqrt()
    }

    /// `count` evenly spaced samples on `[0, T]`, endpoints included.
    pub fn sample(&self, count: usize) -> Vec<ControlSample> {
        let count = count.max(2);
        let p = self.prec();
        (0..count)
            .map(|k| {
                let t = Float::with_val(p, &self.horizon * k as u64) / (count - 1) as u64;
                let (f, df, d2f) = self.evaluate(&t);
                ControlSample { t: t.to_f64(), f: f.to_f64(), df: df.to_f64(), d2f: d2f.to_f64() }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, count: usize) -> Result<()> {
        let mut w = crate::io::csv_writer(out);
        w.write_record(["t", "f", "df", "d2f"])?;
        for s in self.sample(count) {
            w.serialize((s.t, s.f, s.df, s.d2f))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn record(&self) -> ControlRecord {
        ControlRecord {
            horizon: mp::decimal(&self.horizon),
            kernels: self.kernels.iter().map(KernelRecord::from).collect(),
            coefficients: self.coefficients.iter().map(mp::decimal).collect(),
        }
    }

    /// `f''` built directly from an exponential polynomial; used for test forcings.
    pub fn from_second_derivative(second: ExpPoly, horizon: Float) -> Self {
        ControlSignal { kernels: Vec::new(), coefficients: Vec::new(), horizon, second }
    }

    /// `f'' = sum_j a_j s^j` on `[0, T]`.
    pub fn polynomial(coefficients: &[f64], horizon: Float) -> Self {
        let p = horizon.prec();
        let mut poly = ExpPoly::zero(p);
        for (j, &a) in coefficients.iter().enumerate() {
            poly.extend(ExpPoly::single(Cplx::from_f64(p, a, 0.0), j as u32, Cplx::zero(p)));
        }
        ControlSignal::from_second_derivative(poly, horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlSample {
    pub t: f64,
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlRecord {
    pub horizon: String,
    pub kernels: Vec<KernelRecord>,
    pub coefficients: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Branch, KernelOrigin, KernelPart};

    const P: Prec = 192;

    #[test]
    fn constant_forcing_integrates_to_parabola() {
        let c = ControlSignal::new(vec![Kernel::constant(P)], vec![Float::with_val(P, 1)], Float::with_val(P, 2.0));
        for &t in &[0.0, 0.3, 1.0, 2.0] {
            let (f, df, d2f) = c.evaluate_f64(t);
            assert!((d2f - 1.0).abs() < 1e-15);
            assert!((df - t).abs() < 1e-15);
            assert!((f - t * t / 2.0).abs() < 1e-15);
        }
        assert!((c.cost().to_f64() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exponential_kernel_antiderivative() {
        let lam = -1.7;
        let horizon = 1.0;
        let k = Kernel::exponential(
            Cplx::from_f64(P, lam, 0.0),
            KernelPart::Real,
            KernelOrigin::Mode { n: 1, branch: Branch::Plus },
        );
        let c = ControlSignal::new(vec![k], vec![Float::with_val(P, 1)], Float::with_val(P, horizon));
        for &t in &[0.1, 0.5, 0.9] {
            let (f, df, _) = c.evaluate_f64(t);
            let want = ((lam * horizon).exp() - (lam * (horizon - t)).exp()) / lam;
            assert!((df - want).abs() < 1e-14, "t={t}");
            let quad = quadrature::double_exponential::integrate(
                |s| ((lam * horizon).exp() - (lam * (horizon - s)).exp()) / lam,
                0.0,
                t,
                1e-14,
            )
            .integral;
            assert!((f - quad).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn zero_control_is_zero() {
        let c = ControlSignal::zero(Float::with_val(P, 1.0));
        assert!(c.is_zero());
        assert_eq!(c.evaluate_f64(0.5), (0.0, 0.0, 0.0));
        assert!(c.cost().is_zero());
    }

    #[test]
    fn csv_has_header_and_lf_rows() {
        let c = ControlSignal::polynomial(&[1.0], Float::with_val(P, 1.0));
        let mut buf = Vec::new();
        c.write_csv(&mut buf, 3).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,f,df,d2f\n"));
        assert_eq!(text.lines().count(), 4);
        assert!(!text.contains('\r'));
    }
}
