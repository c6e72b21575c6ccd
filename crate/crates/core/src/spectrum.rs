//! Eigenstructure of the damped modal operator.
//!
//! Mode `n` obeys `a'' + rho n^2 a' + n^4 a = forcing`, whose characteristic
//! roots `lambda_n^{+-}` split into three regimes at `rho = 2`. For `rho > 2`
//! the roots are `-n^2/r` and `-r n^2` with the branch ratio
//! `r = (rho + sqrt(rho^2 - 4)) / 2`, and a rational `r` makes the two
//! branches collide.

use std::cmp::Ordering;
use std::fmt;

use rug::{Float, Integer, Rational};
use serde::Serialize;

use crate::config::{Boundary, Damping};
use crate::error::{BeamError, Result};
use crate::mp::{self, Cplx, Prec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

/// Classifies `rho` by exact comparison with 2 on the supplied representation.
pub fn classify_damping(rho: &Damping) -> Result<Regime> {
    rho.ensure_positive()?;
    Ok(match rho.cmp_int(2) {
        Ordering::Less => Regime::Underdamped,
        Ordering::Equal => Regime::Critical,
        Ordering::Greater => Regime::Overdamped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeEigenvalues {
    pub n: usize,
    /// `-rho n^2 / 2`
    pub beta: Float,
    /// `n^2 sqrt(4 - rho^2) / 2` when underdamped, zero otherwise.
    pub alpha: Float,
    pub lambda_plus: Cplx,
    pub lambda_minus: Cplx,
    pub regime: Regime,
}

impl ModeEigenvalues {
    pub fn prec(&self) -> Prec {
        self.beta.prec()
    }

    /// `lambda_plus - lambda_minus`; zero in the critical regime.
    pub fn splitting(&self) -> Cplx {
        &self.lambda_plus - &self.lambda_minus
    }
}

pub fn mode_eigenvalues(rho: &Damping, n: usize, prec: Prec) -> Result<ModeEigenvalues> {
    if n == 0 {
        return Err(BeamError::domain("mode index must be at least 1"));
    }
    let regime = classify_damping(rho)?;
    let rho_f = rho.to_float(prec);
    let n2 = Float::with_val(prec, (n as u64) * (n as u64));
    let beta = -Float::with_val(prec, &rho_f * &n2) / 2u32;
    let (alpha, lambda_plus, lambda_minus) = match regime {
        Regime::Underdamped => {
            let disc = Float::with_val(prec, 4 - Float::with_val(prec, rho_f.square_ref()));
            let alpha = Float::with_val(prec, &n2 * disc.sqrt()) / 2u32;
            let lp = Cplx::new(beta.clone(), alpha.clone());
            let lm = lp.conj();
            (alpha, lp, lm)
        }
        Regime::Critical => {
            let l = Cplx::from_real(-n2.clone());
            (Float::new(prec), l.clone(), l)
        }
        Regime::Overdamped => {
            let r = branch_ratio(rho, prec)?.value(prec);
            let lp = -Float::with_val(prec, &n2 / &r);
            let lm = -Float::with_val(prec, &n2 * &r);
            (Float::new(prec), Cplx::from_real(lp), Cplx::from_real(lm))
        }
    };
    Ok(ModeEigenvalues { n, beta, alpha, lambda_plus, lambda_minus, regime })
}

/// Eigenvalues for modes `1..=n_modes`.
pub fn spectrum(rho: &Damping, n_modes: usize, prec: Prec) -> Result<Vec<ModeEigenvalues>> {
    (1..=n_modes).map(|n| mode_eigenvalues(rho, n, prec)).collect()
}

/// The branch ratio `r`, tagged with what is known about its rationality.
#[derive(Clone, Debug, PartialEq)]
pub enum BranchRatio {
    Rational(Rational),
    /// Known to be irrational, e.g. `(rho + sqrt(D)) / 2` with `D` not a rational square.
    Irrational(Float),
    /// Only a floating value is known; collisions are decided by tolerance.
    Approximate(Float),
}

impl BranchRatio {
    pub fn value(&self, prec: Prec) -> Float {
        match self {
            BranchRatio::Rational(q) => Float::with_val(prec, q),
            BranchRatio::Irrational(v) | BranchRatio::Approximate(v) => Float::with_val(prec, v),
        }
    }

    pub fn is_rational(&self) -> bool {
        matches!(self, BranchRatio::Rational(_))
    }

    /// `sqrt(d)`, rational exactly when `d` is a perfect square.
    pub fn sqrt_of(d: u64, prec: Prec) -> BranchRatio {
        let di = Integer::from(d);
        if di.is_perfect_square() {
            BranchRatio::Rational(Rational::from(di.sqrt()))
        } else {
            BranchRatio::Irrational(Float::with_val(prec, d).sqrt())
        }
    }

    fn ensure_above_one(&self) -> Result<()> {
        let above = match self {
            BranchRatio::Rational(q) => *q > 1,
            BranchRatio::Irrational(v) | BranchRatio::Approximate(v) => *v > 1,
        };
        if above {
            Ok(())
        } else {
            Err(BeamError::domain(format!("branch ratio must exceed 1, got {self}")))
        }
    }

    /// Relative tolerance for approximate collision decisions: `10^(-prec/4)`.
    pub fn collision_tolerance(prec: Prec) -> f64 {
        10f64.powf(-(prec as f64) / 4.0)
    }
}

impl fmt::Display for BranchRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchRatio::Rational(q) => write!(f, "{q}"),
            BranchRatio::Irrational(v) => write!(f, "{} (irrational)", v.to_f64()),
            BranchRatio::Approximate(v) => write!(f, "{} (approximate)", v.to_f64()),
        }
    }
}

/// `r = (rho + sqrt(rho^2 - 4)) / 2` for `rho >= 2`.
pub fn branch_ratio(rho: &Damping, prec: Prec) -> Result<BranchRatio> {
    rho.ensure_positive()?;
    if rho.cmp_int(2) == Ordering::Less {
        return Err(BeamError::domain(format!(
            "branch ratio requires rho >= 2 (branches are complex for rho = {rho})"
        )));
    }
    match rho.as_rational() {
        Some(q) => {
            // rho = p/q in lowest terms, rho^2 - 4 = (p^2 - 4 q^2) / q^2
            let p = q.numer().clone();
            let d = q.denom().clone();
            let disc = Integer::from(p.square_ref()) - Integer::from(d.square_ref()) * 4u32;
            if disc.is_perfect_square() {
                let s = disc.sqrt();
                let r = Rational::from((p + s, d * 2u32));
                Ok(BranchRatio::Rational(r))
            } else {
                let rho_f = Float::with_val(prec, q);
                let disc_f = Float::with_val(prec, rho_f.square_ref()) - 4u32;
                Ok(BranchRatio::Irrational((rho_f + disc_f.sqrt()) / 2u32))
            }
        }
        None => {
            let rho_f = rho.to_float(prec);
            let disc_f = Float::with_val(prec, rho_f.square_ref()) - 4u32;
            Ok(BranchRatio::Approximate((rho_f + disc_f.sqrt()) / 2u32))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollisionScan {
    /// Pairs `(m, n)` with `lambda_m^+ = lambda_n^-`, i.e. `m = r n`.
    pub pairs: Vec<(usize, usize)>,
    /// Whether the decision was made in exact arithmetic.
    pub exact: bool,
}

pub fn detect_collisions(r: &BranchRatio, n_max: usize) -> Result<CollisionScan> {
    r.ensure_above_one()?;
    let mut pairs = Vec::new();
    match r {
        BranchRatio::Rational(q) => {
            for n in 1..=n_max {
                let m = Rational::from(q * n as u32);
                if *m.denom() == 1 {
                    if let Some(m) = m.numer().to_usize() {
                        if m <= n_max {
                            pairs.push((m, n));
                        }
                    }
                }
            }
            Ok(CollisionScan { pairs, exact: true })
        }
        BranchRatio::Irrational(_) => Ok(CollisionScan { pairs, exact: true }),
        BranchRatio::Approximate(v) => {
            let prec = v.prec();
            let tol = BranchRatio::collision_tolerance(prec);
            log::warn!(
                "branch ratio {} is only known approximately; collisions decided with relative tolerance {tol:e}",
                v.to_f64()
            );
            for n in 1..=n_max {
                let rn = Float::with_val(prec, v * n as u32);
                let m = Float::with_val(prec, rn.round_ref());
                let Some(mi) = m.to_integer().and_then(|i| i.to_usize()) else { continue };
                if mi == 0 || mi > n_max {
                    continue;
                }
                let gap = Float::with_val(prec, &rn - &m).abs() / &rn;
                if gap.to_f64() <= tol {
                    pairs.push((mi, n));
                }
            }
            Ok(CollisionScan { pairs, exact: false })
        }
    }
}

/// Eigenbasis coefficients of the lifting profile: `x/pi` (Dirichlet) or `x` (Neumann).
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTraceExpansion {
    pub boundary: Boundary,
    /// Coefficient on `phi_0 = 1/sqrt(pi)`; Neumann only.
    pub zero_mode: Option<Float>,
    /// `coefficients[k]` is `x_{k+1}`.
    pub coefficients: Vec<Float>,
}

impl BoundaryTraceExpansion {
    pub fn x(&self, n: usize) -> &Float {
        &self.coefficients[n - 1]
    }

    pub fn n_max(&self) -> usize {
        self.coefficients.len()
    }
}

pub fn boundary_trace_coefficients(boundary: Boundary, n_max: usize, prec: Prec) -> BoundaryTraceExpansion {
    let pi = mp::pi(prec);
    let root = Float::with_val(prec, 2 / pi.clone()).sqrt();
    let coefficients = (1..=n_max)
        .map(|n| match boundary {
            // (-1)^{n+1} sqrt(2/pi) / n
            Boundary::Dirichlet => {
                let v = Float::with_val(prec, &root / n as u32);
                if n % 2 == 1 {
                    v
                } else {
                    -v
                }
            }
            // sqrt(2/pi) ((-1)^n - 1) / n^2
            Boundary::Neumann => {
                if n % 2 == 0 {
                    Float::new(prec)
                } else {
                    -Float::with_val(prec, &root * 2u32) / ((n as u64) * (n as u64))
                }
            }
        })
        .collect();
    let zero_mode = match boundary {
        Boundary::Dirichlet => None,
        Boundary::Neumann => Some(Float::with_val(prec, pi.clone() * pi.sqrt()) / 2u32),
    };
    BoundaryTraceExpansion { boundary, zero_mode, coefficients }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BranchGaps {
    pub min_gap: f64,
    pub argmin: (usize, usize),
    /// `|lambda_{n+1} - lambda_n|` for `n = 1..n_max-1`.
    pub consecutive: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapStatistics {
    pub plus: BranchGaps,
    pub minus: BranchGaps,
    /// Minimum over `|lambda_m^+ - lambda_n^-|` across the two branches
    /// (the double root `m = n` is skipped in the critical regime).
    pub cross_min_gap: f64,
    pub cross_argmin: (usize, usize),
}

pub fn gap_statistics(rho: &Damping, n_max: usize, prec: Prec) -> Result<GapStatistics> {
    if n_max < 2 {
        return Err(BeamError::domain("gap statistics need at least two modes"));
    }
    let eigs = spectrum(rho, n_max, prec)?;
    let branch = |pick: fn(&ModeEigenvalues) -> &Cplx| -> BranchGaps {
        let mut best = (f64::INFINITY, (0, 0));
        for m in 0..n_max {
            for n in (m + 1)..n_max {
                let g = (pick(&eigs[n]) - pick(&eigs[m])).abs().to_f64();
                if g < best.0 {
                    best = (g, (n + 1, m + 1));
                }
            }
        }
        let consecutive = eigs
            .windows(2)
            .map(|w| (pick(&w[1]) - pick(&w[0])).abs().to_f64())
            .collect();
        BranchGaps { min_gap: best.0, argmin: best.1, consecutive }
    };
    let plus = branch(|e| &e.lambda_plus);
    let minus = branch(|e| &e.lambda_minus);
    let critical = eigs[0].regime == Regime::Critical;
    let mut cross = (f64::INFINITY, (0, 0));
    for m in 0..n_max {
        for n in 0..n_max {
            if critical && m == n {
                continue;
            }
            let g = (&eigs[m].lambda_plus - &eigs[n].lambda_minus).abs().to_f64();
            if g < cross.0 {
                cross = (g, (m + 1, n + 1));
            }
        }
    }
    Ok(GapStatistics { plus, minus, cross_min_gap: cross.0, cross_argmin: cross.1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rho(s: &str) -> Damping {
        s.parse().unwrap()
    }

    #[test]
    fn classifies_regimes() {
        assert_eq!(classify_damping(&rho("1")).unwrap(), Regime::Underdamped);
        assert_eq!(classify_damping(&rho("2.0")).unwrap(), Regime::Critical);
        assert_eq!(classify_damping(&rho("2.5")).unwrap(), Regime::Overdamped);
        assert!(classify_damping(&rho("0")).is_err());
        assert!(classify_damping(&Damping::from_f64(-3.0)).is_err());
    }

    #[test]
    fn underdamped_eigenvalues() {
        let e = mode_eigenvalues(&rho("1"), 2, 128).unwrap();
        assert_eq!(e.beta.to_f64(), -2.0);
        assert!((e.alpha.to_f64() - 2.0 * 3f64.sqrt()).abs() < 1e-14);
        let (re, im) = e.lambda_plus.to_f64_pair();
        assert_eq!(re, -2.0);
        assert!((im - 3.46410).abs() < 1e-5);
        assert_eq!(e.lambda_minus, e.lambda_plus.conj());
    }

    #[test]
    fn critical_double_root() {
        let e = mode_eigenvalues(&rho("2"), 3, 128).unwrap();
        assert_eq!(e.lambda_plus.to_f64_pair(), (-9.0, 0.0));
        assert_eq!(e.lambda_minus, e.lambda_plus);
        assert_eq!(e.regime, Regime::Critical);
    }

    #[test]
    fn overdamped_roots_match_quadratic_formula() {
        // roots of x^2 + 3x + 1
        let e = mode_eigenvalues(&rho("3"), 1, 128).unwrap();
        let lp = e.lambda_plus.re.to_f64();
        let lm = e.lambda_minus.re.to_f64();
        let s5 = 5f64.sqrt();
        assert!((lp - (-3.0 + s5) / 2.0).abs() < 1e-15);
        assert!((lm - (-3.0 - s5) / 2.0).abs() < 1e-15);
        assert!((lp + 0.381966).abs() < 1e-6 && (lm + 2.618034).abs() < 1e-6);
    }

    #[test]
    fn vieta_identities_hold_in_all_regimes() {
        for r in ["0.3", "1", "1.99", "2", "2.5", "3", "7/2"] {
            let d = rho(r);
            for n in 1..=8usize {
                let e = mode_eigenvalues(&d, n, 200).unwrap();
                let n2 = (n * n) as f64;
                let sum = &e.lambda_plus + &e.lambda_minus;
                let prod = &e.lambda_plus * &e.lambda_minus;
                let want_sum = Float::with_val(200, d.to_float(200) * -(n2));
                let ds = Float::with_val(200, &sum.re - &want_sum).abs();
                let dp = Float::with_val(200, &prod.re - n2 * n2).abs();
                let ulp = n2 * n2 * 2f64.powi(-190);
                assert!(ds.to_f64() <= ulp && sum.im.to_f64().abs() <= ulp, "sum rho={r} n={n}");
                assert!(dp.to_f64() <= ulp && prod.im.to_f64().abs() <= ulp, "prod rho={r} n={n}");
            }
        }
    }

    #[test]
    fn branch_ratio_cases() {
        assert_eq!(branch_ratio(&rho("2.5"), 128).unwrap(), BranchRatio::Rational(Rational::from(2)));
        assert_eq!(branch_ratio(&rho("2"), 128).unwrap(), BranchRatio::Rational(Rational::from(1)));
        let r = branch_ratio(&rho("3"), 128).unwrap();
        assert!(matches!(r, BranchRatio::Irrational(_)));
        let v = r.value(128);
        let check = Float::with_val(128, &v + Float::with_val(128, 1 / v.clone()));
        assert!((check.to_f64() - 3.0).abs() < 1e-30);
        assert!((v.to_f64() - 2.618034).abs() < 1e-6);
        assert!(branch_ratio(&rho("1.5"), 128).is_err());
        // rho = 13/6 gives r = 3/2
        assert_eq!(
            branch_ratio(&rho("13/6"), 128).unwrap(),
            BranchRatio::Rational(Rational::from((3, 2)))
        );
    }

    #[test]
    fn collisions_for_rational_ratios() {
        let two = BranchRatio::Rational(Rational::from(2));
        assert_eq!(detect_collisions(&two, 4).unwrap().pairs, vec![(2, 1), (4, 2)]);
        let three_halves = BranchRatio::Rational(Rational::from((3, 2)));
        assert_eq!(detect_collisions(&three_halves, 6).unwrap().pairs, vec![(3, 2), (6, 4)]);
        let root2 = BranchRatio::sqrt_of(2, 128);
        assert!(detect_collisions(&root2, 50).unwrap().pairs.is_empty());
        assert!(detect_collisions(&BranchRatio::Rational(Rational::from(1)), 5).is_err());
    }

    #[test]
    fn collisions_match_exhaustive_double_loop() {
        for (p, q) in [(2, 1), (3, 2), (5, 3), (7, 2), (11, 4), (9, 7)] {
            let r = Rational::from((p, q));
            let scan = detect_collisions(&BranchRatio::Rational(r.clone()), 50).unwrap();
            let mut brute = Vec::new();
            for n in 1..=50u32 {
                for m in 1..=50u32 {
                    // m^2 / r == r n^2  <=>  m^2 q^2 == p^2 n^2
                    if (m * q) * (m * q) == (p * n) * (p * n) {
                        brute.push((m as usize, n as usize));
                    }
                }
            }
            assert_eq!(scan.pairs, brute, "r={p}/{q}");
        }
    }

    #[test]
    fn approximate_ratio_uses_tolerance() {
        let r = BranchRatio::Approximate(Float::with_val(128, 2.0));
        let scan = detect_collisions(&r, 4).unwrap();
        assert_eq!(scan.pairs, vec![(2, 1), (4, 2)]);
        assert!(!scan.exact);
        let r = BranchRatio::Approximate(Float::with_val(128, 2.0 + 1e-9));
        assert!(detect_collisions(&r, 4).unwrap().pairs.is_empty());
    }

    #[test]
    fn trace_coefficients() {
        let d = boundary_trace_coefficients(Boundary::Dirichlet, 8, 128);
        assert!((d.x(1).to_f64() - 0.797885).abs() < 1e-6);
        let root = (2.0 / std::f64::consts::PI).sqrt();
        for n in 1..=8 {
            let x = d.x(n).to_f64();
            assert!((n as f64 * x.abs() - root).abs() < 1e-15);
            assert_eq!(x > 0.0, n % 2 == 1);
        }
        let nm = boundary_trace_coefficients(Boundary::Neumann, 8, 128);
        assert!(nm.x(2).is_zero());
        assert!((nm.x(1).to_f64() + 1.595769).abs() < 1e-6);
        for n in 1..=8 {
            let scaled = (n * n) as f64 * nm.x(n).to_f64().abs();
            assert!(scaled == 0.0 || (scaled - 2.0 * root).abs() < 1e-14);
        }
        let x0 = nm.zero_mode.unwrap().to_f64();
        assert!((x0 - std::f64::consts::PI.powf(1.5) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn gap_examples() {
        // lambda_2^+ - lambda_1^+ = -3/2 + i (2 sqrt3 - sqrt3/2), modulus exactly 3
        let g = gap_statistics(&rho("1"), 3, 128).unwrap();
        let brute = ((-1.5f64).powi(2) + (1.5 * 3f64.sqrt()).powi(2)).sqrt();
        assert!((g.plus.min_gap - brute).abs() < 1e-12);
        assert!((g.plus.min_gap - 3.0).abs() < 1e-12);
        assert_eq!(g.plus.argmin, (2, 1));
        assert_eq!(g.plus.min_gap, g.plus.consecutive[0]);
        assert!(g.plus.consecutive.windows(2).all(|w| w[1] > w[0]));

        let g = gap_statistics(&rho("2.5"), 4, 128).unwrap();
        assert_eq!(g.cross_min_gap, 0.0);
        assert_eq!(g.cross_argmin, (2, 1));

        let g = gap_statistics(&rho("2"), 2, 128).unwrap();
        assert_eq!(g.plus.min_gap, 3.0);
        assert_eq!(g.cross_min_gap, 3.0);
    }
}
