//! Problem configuration: boundary type, damping coefficient, cutoff, horizon.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rug::{Float, Integer, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{BeamError, Result};
use crate::mp::Prec;

pub const DEFAULT_PRECISION_BITS: Prec = 256;
pub const MIN_PRECISION_BITS: Prec = 53;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `u(0)=u_xx(0)=0`, `u(pi)=f(t)`, `u_xx(pi)=0`; sine eigenbasis, modes `n >= 1`.
    Dirichlet,
    /// `u_x(0)=u_x(pi)=g(t)`, `u_xxx=0` at both ends; cosine eigenbasis with a zero mode.
    Neumann,
}

impl FromStr for Boundary {
    type Err = BeamError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(Boundary::Dirichlet),
            "neumann" => Ok(Boundary::Neumann),
            other => Err(BeamError::domain(format!("unknown boundary type '{other}'"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Dirichlet => f.write_str("dirichlet"),
            Boundary::Neumann => f.write_str("neumann"),
        }
    }
}

/// Damping coefficient rho, held exactly when it was supplied as a decimal or
/// fraction so that the critical value and rational branch ratios are decided
/// without rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct Damping {
    exact: Option<Rational>,
    approx: f64,
}

impl Damping {
    pub fn exact(q: Rational) -> Self {
        let approx = q.to_f64();
        Damping { exact: Some(q), approx }
    }

    /// An inexact value; rationality questions fall back to tolerances.
    pub fn from_f64(v: f64) -> Self {
        Damping { exact: None, approx: v }
    }

    pub fn as_rational(&self) -> Option<&Rational> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn to_f64(&self) -> f64 {
        self.approx
    }

    pub fn to_float(&self, prec: Prec) -> Float {
        match &self.exact {
            Some(q) => Float::with_val(prec, q),
            None => Float::with_val(prec, self.approx),
        }
    }

    /// Exact comparison against an integer on the supplied representation.
    pub fn cmp_int(&self, k: i32) -> Ordering {
        match &self.exact {
            Some(q) => q.partial_cmp(&k).unwrap_or(Ordering::Equal),
            None => self.approx.partial_cmp(&(k as f64)).unwrap_or(Ordering::Equal),
        }
    }

    pub fn ensure_positive(&self) -> Result<()> {
        if self.cmp_int(0) != Ordering::Greater || !self.approx.is_finite() {
            return Err(BeamError::domain(format!("rho must be positive, got {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for Damping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(q) => write!(f, "{q}"),
            None => write!(f, "{}", self.approx),
        }
    }
}

impl FromStr for Damping {
    type Err = BeamError;
    fn from_str(s: &str) -> Result<Self> {
        parse_rational(s)
            .map(Damping::exact)
            .ok_or_else(|| BeamError::domain(format!("cannot parse '{s}' as a rational number")))
    }
}

impl Serialize for Damping {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Parses `p/q`, integers and decimals (with optional exponent) exactly.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n = parse_rational(num)?;
        let d = parse_rational(den)?;
        if d == 0 {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let mut value = Rational::from(all.parse::<Integer>().ok()?);
    let shift = exponent - frac_part.len() as i32;
    let ten_pow = Integer::from(Integer::u_pow_u(10, shift.unsigned_abs()));
    if shift >= 0 {
        value *= ten_pow;
    } else {
        value /= ten_pow;
    }
    if negative {
        value = -value;
    }
    Some(value)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeamConfig {
    pub boundary: Boundary,
    pub rho: Damping,
    /// Spectral cutoff N.
    pub n_modes: usize,
    /// Control horizon T.
    pub horizon: f64,
    pub precision_bits: Prec,
    /// Tikhonov weight added to the Gram diagonal; zero disables it.
    pub regularization: f64,
}

impl BeamConfig {
    pub fn new(boundary: Boundary, rho: Damping, n_modes: usize, horizon: f64) -> Self {
        BeamConfig {
            boundary,
            rho,
            n_modes,
            horizon,
            precision_bits: DEFAULT_PRECISION_BITS,
            regularization: 0.0,
        }
    }

    pub fn dirichlet(rho: &str, n_modes: usize, horizon: f64) -> Result<Self> {
        let cfg = BeamConfig::new(Boundary::Dirichlet, rho.parse()?, n_modes, horizon);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn neumann(rho: &str, n_modes: usize, horizon: f64) -> Result<Self> {
        let cfg = BeamConfig::new(Boundary::Neumann, rho.parse()?, n_modes, horizon);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_precision(mut self, bits: Prec) -> Self {
        self.precision_bits = bits;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_regularization(mut self, weight: f64) -> Self {
        self.regularization = weight;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.rho.ensure_positive()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(BeamError::domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_modes < 1 {
            return Err(BeamError::domain("n_modes must be at least 1"));
        }
        if self.precision_bits < MIN_PRECISION_BITS {
            return Err(BeamError::domain(format!(
                "precision_bits must be at least {MIN_PRECISION_BITS}, got {}",
                self.precision_bits
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(BeamError::domain("regularization must be nonnegative"));
        }
        Ok(())
    }

    pub fn horizon_float(&self) -> Float {
        Float::with_val(self.precision_bits, self.horizon)
    }
}
