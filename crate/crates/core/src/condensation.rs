//! Overdamped frequency clustering.
//!
//! For `rho > 2` the decay rates are `m^2 / r` and `r n^2`. How closely the two
//! quadratic sequences approach each other is measured through the entire
//! function `E(z) = prod (1 - z^2 / kappa^2)` and its derivative at the zeros:
//! `ln(1 / |E'(kappa)|) / kappa` has a limsup, the condensation index, that
//! controls how fast biorthogonal norms may grow. Only finite-n evidence is
//! computed here; the running sups are reported as they are, never extrapolated.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rug::{Float, Integer, Rational};
use serde::Serialize;

use crate::error::{BeamError, Result};
use crate::io::csv_writer;
use crate::kernel::Branch;
use crate::mp::{self, ln_sinh, sin_pi, Cplx, Prec};
use crate::spectrum::BranchRatio;

/// First index included in the running sups. Small n say nothing about a limsup
/// and for ratios near 1 they dominate the sup; the per-n values are still exported.
pub const DEFAULT_TAIL_START: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct MergedFrequency {
    pub value: Float,
    /// `Plus`: `m^2 / r`; `Minus`: `r m^2`.
    pub branch: Branch,
    pub index: usize,
    /// For a collapsed coincidence, the index on the minus branch that landed here.
    pub collided_with: Option<usize>,
}

fn ensure_ratio(r: &BranchRatio) -> Result<()> {
    if r.value(64) > 1 {
        Ok(())
    } else {
        Err(BeamError::domain(format!("branch ratio must exceed 1, got {r}")))
    }
}

/// Sorted merge of `{m^2 / r}` and `{r m^2}` for `m <= n_max`, exact coincidences collapsed.
pub fn merged_frequencies(r: &BranchRatio, n_max: usize, prec: Prec) -> Result<Vec<MergedFrequency>> {
    ensure_ratio(r)?;
    let mut out = Vec::with_capacity(2 * n_max);
    match r {
        BranchRatio::Rational(q) => {
            // exact keys, so coincidences are decided without rounding
            let mut by_value: BTreeMap<Rational, MergedFrequency> = BTreeMap::new();
            let squares: Vec<Integer> = (1..=n_max).map(|m| Integer::from(m) * Integer::from(m)).collect();
            for (m, m2) in squares.iter().enumerate() {
                let plus = Rational::from((m2.clone(), 1)) / q.clone();
                let value = Float::with_val(prec, &plus);
                by_value.insert(plus, MergedFrequency { value, branch: Branch::Plus, index: m + 1, collided_with: None });
            }
            for (m, m2) in squares.iter().enumerate() {
                let minus = Rational::from(q * m2);
                let value = Float::with_val(prec, &minus);
                by_value
                    .entry(minus)
                    .and_modify(|e| e.collided_with = Some(m + 1))
                    .or_insert(MergedFrequency { value, branch: Branch::Minus, index: m + 1, collided_with: None });
            }
            out.extend(by_value.into_values());
        }
        BranchRatio::Irrational(_) | BranchRatio::Approximate(_) => {
            let rv = r.value(prec);
            for m in 1..=n_max {
                let m2 = (m * m) as u64;
                out.push(MergedFrequency {
                    value: Float::with_val(prec, m2) / &rv,
                    branch: Branch::Plus,
                    index: m,
                    collided_with: None,
                });
                out.push(MergedFrequency {
                    value: Float::with_val(prec, &rv * m2),
                    branch: Branch::Minus,
                    index: m,
                    collided_with: None,
                });
            }
            out.sort_by(|a, b| a.value.partial_cmp(&b.value).expect("finite frequencies"));
            if let BranchRatio::Approximate(_) = r {
                let tol = BranchRatio::collision_tolerance(prec);
                let mut merged: Vec<MergedFrequency> = Vec::with_capacity(out.len());
                for f in out {
                    if let Some(last) = merged.last_mut() {
                        let gap = Float::with_val(prec, &f.value - &last.value).abs() / &f.value;
                        if last.branch != f.branch && gap.to_f64() <= tol {
                            let minus_index = if f.branch == Branch::Minus { f.index } else { last.index };
                            if f.branch == Branch::Plus {
                                *last = f;
                            }
                            last.collided_with = Some(minus_index);
                            continue;
                        }
                    }
                    merged.push(f);
                }
                out = merged;
            }
        }
    }
    Ok(out)
}

/// `E(z) = sin(pi sqrt(rz)) sinh(pi sqrt(rz)) sin(pi sqrt(z/r)) sinh(pi sqrt(z/r)) / (pi^4 z^2)`,
/// square roots on the principal branch. `E(0) = 1`.
pub fn weierstrass_e(z: &Cplx, r: &Float) -> Cplx {
    let prec = z.prec();
    if z.is_zero() {
        return Cplx::one(prec);
    }
    let pi = mp::pi(prec);
    let a = z.scale(r).sqrt().scale(&pi);
    let b = z.scale(&Float::with_val(prec, r.recip_ref())).sqrt().scale(&pi);
    let num = &(&a.sin() * &a.sinh()) * &(&b.sin() * &b.sinh());
    let pi4 = mp::powu(&pi, 4);
    let den = z.powu(2).scale(&pi4);
    &num / &den
}

/// `prod_{m <= cutoff} (1 - z^2 / (m^2/r)^2)(1 - z^2 / (r m^2)^2)`.
pub fn weierstrass_e_product(z: &Cplx, r: &Float, cutoff: usize) -> Cplx {
    let prec = z.prec();
    let z2 = z.powu(2);
    let mut acc = Cplx::one(prec);
    for m in 1..=cutoff {
        let m2 = Float::with_val(prec, (m * m) as u64);
        for kappa in [Float::with_val(prec, &m2 / r), Float::with_val(prec, &m2 * r)] {
            let k2 = Float::with_val(prec, kappa.square_ref());
            let factor = &Cplx::one(prec) - &z2.scale(&k2.recip());
            acc = &acc * &factor;
        }
    }
    acc
}

/// `ln |sin(pi x)|` with `x` supplied exactly when `r` is rational; `-inf` at zeros.
fn ln_abs_sin_pi(x: &Float, exact_integer: bool) -> f64 {
    if exact_integer {
        return f64::NEG_INFINITY;
    }
    let s = sin_pi(x).abs();
    if s.is_zero() {
        f64::NEG_INFINITY
    } else {
        s.ln().to_f64()
    }
}

/// `(ln A_n, ln B_n)` with `A_n = r^3 sinh(pi n) sinh(pi n/r) / (2 pi^3 n^5)` and
/// `B_n = sinh(pi n) sinh(pi r n) / (2 r^3 pi^3 n^5)`.
pub fn amplitude_logs(r: &Float, n: usize) -> (Float, Float) {
    let prec = r.prec();
    let pi = mp::pi(prec);
    let pin = Float::with_val(prec, &pi * n as u64);
    let ln_r = Float::with_val(prec, r.ln_ref());
    let common = ln_sinh(&pin)
        - Float::with_val(prec, Float::with_val(prec, 2u32).ln())
        - Float::with_val(prec, pi.ln_ref()) * 3u32
        - Float::with_val(prec, n as u64).ln() * 5u32;
    let a = Float::with_val(prec, &common + ln_sinh(&Float::with_val(prec, &pin / r)))
        + Float::with_val(prec, &ln_r * 3u32);
    let b = Float::with_val(prec, &common + ln_sinh(&Float::with_val(prec, &pin * r)))
        - Float::with_val(prec, &ln_r * 3u32);
    (a, b)
}

/// Sin arguments `n / r` and `r n`, flagged when exactly integral.
fn sin_arguments(r: &BranchRatio, n: usize, prec: Prec) -> ((Float, bool), (Float, bool)) {
    match r {
        BranchRatio::Rational(q) => {
            let plus = Rational::from((Integer::from(n), 1)) / q.clone();
            let minus = Rational::from(q * Integer::from(n));
            (
                (Float::with_val(prec, &plus), *plus.denom() == 1),
                (Float::with_val(prec, &minus), *minus.denom() == 1),
            )
        }
        _ => {
            let rv = r.value(prec);
            ((Float::with_val(prec, n as u64) / &rv, false), (Float::with_val(prec, &rv * n as u64), false))
        }
    }
}

/// `(ln |E'(n^2/r)|, ln |E'(r n^2)|)`, `-inf` where the derivative vanishes.
pub fn eprime_magnitudes(r: &BranchRatio, n: usize, prec: Prec) -> Result<(f64, f64)> {
    ensure_ratio(r)?;
    if n == 0 {
        return Err(BeamError::domain("mode index must be at least 1"));
    }
    let rv = r.value(prec);
    let (la, lb) = amplitude_logs(&rv, n);
    let ((xp, ip), (xm, im)) = sin_arguments(r, n, prec);
    Ok((la.to_f64() + ln_abs_sin_pi(&xp, ip), lb.to_f64() + ln_abs_sin_pi(&xm, im)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondensationReport {
    pub r: f64,
    /// `r` to the working precision.
    pub r_decimal: String,
    pub n_max: usize,
    pub tail_start: usize,
    /// `-ln|sin(pi n / r)| / (n^2 / r)` for `n = 1..=n_max`.
    pub plus: Vec<f64>,
    /// `-ln|sin(pi r n)| / (r n^2)`.
    pub minus: Vec<f64>,
    /// Sup over `tail_start..=n`; `None` before `tail_start`.
    pub running_sup_plus: Vec<Option<f64>>,
    pub running_sup_minus: Vec<Option<f64>>,
    pub c_estimate: f64,
}

fn running_sup(values: &[f64], tail_start: usize) -> Vec<Option<f64>> {
    let mut sup = f64::NEG_INFINITY;
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i + 1 < tail_start {
                None
            } else {
                sup = sup.max(v);
                Some(sup)
            }
        })
        .collect()
}

/// Finite-n estimate of the condensation index with the default tail start.
pub fn condensation_estimate(r: &BranchRatio, n_max: usize, prec: Prec) -> Result<CondensationReport> {
    condensation_estimate_from(r, n_max, DEFAULT_TAIL_START, prec)
}

pub fn condensation_estimate_from(
    r: &BranchRatio,
    n_max: usize,
    tail_start: usize,
    prec: Prec,
) -> Result<CondensationReport> {
    ensure_ratio(r)?;
    if let BranchRatio::Rational(q) = r {
        return Err(BeamError::RationalResonance(format!(
            "r = {q} is rational: m^2/r = r n^2 whenever m = r n, so the index is infinite"
        )));
    }
    if tail_start == 0 || tail_start > n_max {
        return Err(BeamError::domain(format!("tail start {tail_start} must lie in 1..={n_max}")));
    }
    let rv = r.value(prec);
    let r_f = rv.to_f64();
    let per_n: Vec<(f64, f64)> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let ((xp, ip), (xm, im)) = sin_arguments(r, n, prec);
            let n2 = (n * n) as f64;
            (-ln_abs_sin_pi(&xp, ip) / (n2 / r_f), -ln_abs_sin_pi(&xm, im) / (r_f * n2))
        })
        .collect();
    let plus: Vec<f64> = per_n.iter().map(|p| p.0).collect();
    let minus: Vec<f64> = per_n.iter().map(|p| p.1).collect();
    let running_sup_plus = running_sup(&plus, tail_start);
    let running_sup_minus = running_sup(&minus, tail_start);
    let last = |v: &[Option<f64>]| v.last().copied().flatten().unwrap_or(f64::NEG_INFINITY);
    let c_estimate = last(&running_sup_plus).max(last(&running_sup_minus));
    Ok(CondensationReport {
        r: r_f,
        r_decimal: mp::decimal(&rv),
        n_max,
        tail_start,
        plus,
        minus,
        running_sup_plus,
        running_sup_minus,
        c_estimate,
    })
}

impl CondensationReport {
    /// Rows `n,branch,per_n_value,running_sup`; the sup is blank before the tail starts.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["n", "branch", "per_n_value", "running_sup"])?;
        for (branch, values, sups) in
            [("plus", &self.plus, &self.running_sup_plus), ("minus", &self.minus, &self.running_sup_minus)]
        {
            for (i, (v, s)) in values.iter().zip(sups.iter()).enumerate() {
                let sup = s.map(|s| format!("{s:e}")).unwrap_or_default();
                w.write_record([(i + 1).to_string(), branch.to_string(), format!("{v:e}"), sup])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> CondensationSummary {
        let last = |v: &[Option<f64>]| v.last().copied().flatten();
        CondensationSummary {
            r: self.r,
            r_decimal: self.r_decimal.clone(),
            n_max: self.n_max,
            tail_start: self.tail_start,
            sup_plus: last(&self.running_sup_plus),
            sup_minus: last(&self.running_sup_minus),
            c_estimate: self.c_estimate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CondensationSummary {
    pub r: f64,
    pub r_decimal: String,
    pub n_max: usize,
    pub tail_start: usize,
    pub sup_plus: Option<f64>,
    pub sup_minus: Option<f64>,
    pub c_estimate: f64,
}

/// `[a0; a1, ..., ak, 1, 1, 1, ...]`: the golden tail keeps the value irrational.
pub fn continued_fraction_ratio(head: &[Integer], prec: Prec) -> Result<BranchRatio> {
    if head.is_empty() || head[1..].iter().any(|a| *a < 1) {
        return Err(BeamError::domain("partial quotients after the first must be positive"));
    }
    let golden = (Float::with_val(prec, 5u32).sqrt() + 1u32) / 2u32;
    let mut x = golden;
    for a in head.iter().rev() {
        x = Float::with_val(prec, x.recip_ref()) + Float::with_val(prec, a);
    }
    let r = BranchRatio::Irrational(x);
    ensure_ratio(&r)?;
    Ok(r)
}

/// Comma-separated partial quotients, e.g. `"1,2,3,1000000000000000000000000000000"`.
pub fn parse_continued_fraction(text: &str, prec: Prec) -> Result<BranchRatio> {
    let head: Vec<Integer> = text
        .split(',')
        .map(|a| a.trim().parse::<Integer>().map_err(|_| BeamError::domain(format!("bad partial quotient '{a}'"))))
        .collect::<Result<_>>()?;
    continued_fraction_ratio(&head, prec)
}

/// `[1; 2, 3, 10^30, 1, 1, ...]`, within `~10^-32` of `10/7`: an irrational ratio
/// that imitates a rational one at `n = 7` and `n = 10`.
pub fn liouville_fixture(prec: Prec) -> BranchRatio {
    let head = [Integer::from(1), Integer::from(2), Integer::from(3), Integer::from(Integer::u_pow_u(10, 30))];
    continued_fraction_ratio(&head, prec).expect("fixed positive quotients")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::detect_collisions;
    use proptest::prelude::*;

    const P: Prec = 256;

    fn rat(p: u32, q: u32) -> BranchRatio {
        BranchRatio::Rational(Rational::from((p, q)))
    }

    fn values(v: &[MergedFrequency]) -> Vec<f64> {
        v.iter().map(|f| f.value.to_f64()).collect()
    }

    fn golden_sq() -> BranchRatio {
        // (3 + sqrt 5) / 2, the ratio for rho = 3
        BranchRatio::Irrational((Float::with_val(P, 5u32).sqrt() + 3u32) / 2u32)
    }

    #[test]
    fn merged_with_exact_coincidence() {
        let m = merged_frequencies(&rat(2, 1), 2, P).unwrap();
        assert_eq!(values(&m), vec![0.5, 2.0, 8.0]);
        assert_eq!(m[1].branch, Branch::Plus);
        assert_eq!((m[1].index, m[1].collided_with), (2, Some(1)));
        assert!(m.iter().filter(|f| f.collided_with.is_some()).count() == 1);
    }

    #[test]
    fn merged_sqrt_two_has_no_coincidence() {
        // m^2/r = r n^2 needs m = r n, impossible for irrational r
        let m = merged_frequencies(&BranchRatio::sqrt_of(2, P), 2, P).unwrap();
        let want = [0.5f64.sqrt(), 2f64.sqrt(), 8f64.sqrt(), 32f64.sqrt()];
        for (a, b) in values(&m).iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(m.iter().all(|f| f.collided_with.is_none()));
    }

    #[test]
    fn merged_near_one_pairs_up() {
        let r = BranchRatio::Irrational(Float::with_val(P, 1.0001));
        let m = merged_frequencies(&r, 5, P).unwrap();
        for (k, pair) in m.chunks(2).enumerate() {
            let sq = ((k + 1) * (k + 1)) as f64;
            assert!(pair.iter().all(|f| (f.value.to_f64() - sq).abs() < 1e-3 * sq));
        }
    }

    #[test]
    fn merged_rejects_small_ratio() {
        assert!(matches!(merged_frequencies(&rat(1, 1), 3, P), Err(BeamError::Domain(_))));
        assert!(matches!(condensation_estimate(&rat(1, 2), 10, P), Err(BeamError::Domain(_))));
    }

    #[test]
    fn coincidences_match_collision_scan() {
        for (p, q) in [(2, 1), (3, 1), (5, 2), (7, 3), (9, 4), (3, 2)] {
            let r = rat(p, q);
            let n = 12;
            let merged = merged_frequencies(&r, n, P).unwrap();
            let mut flagged: Vec<(usize, usize)> =
                merged.iter().filter_map(|f| f.collided_with.map(|k| (f.index, k))).collect();
            flagged.sort();
            let mut scan = detect_collisions(&r, n).unwrap().pairs;
            scan.sort();
            assert_eq!(flagged, scan, "r = {p}/{q}");
        }
        assert!(merged_frequencies(&golden_sq(), 40, P).unwrap().iter().all(|f| f.collided_with.is_none()));
    }

    fn c(v: f64) -> Cplx {
        Cplx::from_f64(P, v, 0.0)
    }

    #[test]
    fn e_vanishes_on_frequencies_and_is_one_at_origin() {
        let r = BranchRatio::sqrt_of(2, P).value(P);
        assert_eq!(weierstrass_e(&Cplx::zero(P), &r).re.to_f64(), 1.0);
        let small = weierstrass_e(&c(1e-20), &r);
        assert!((small.re.to_f64() - 1.0).abs() < 1e-30);
        for f in merged_frequencies(&BranchRatio::sqrt_of(2, P), 4, P).unwrap() {
            let e = weierstrass_e(&Cplx::from_real(f.value.clone()), &r);
            assert!(e.abs().to_f64() < 1e-60, "{}", f.value.to_f64());
        }
    }

    #[test]
    fn closed_form_matches_truncated_product() {
        let r2 = Float::with_val(P, 2u32);
        let a = weierstrass_e(&c(1.0), &r2);
        let b = weierstrass_e_product(&c(1.0), &r2, 200);
        assert!(((&a - &b).abs() / a.abs()).to_f64() < 1e-6);
        for r in [BranchRatio::sqrt_of(2, P).value(P), golden_sq().value(P)] {
            for z in [-10.0, -7.5, -3.3, -0.4, 0.3, 1.7, 4.2, 6.9, 9.99] {
                let a = weierstrass_e(&c(z), &r);
                let b = weierstrass_e_product(&c(z), &r, 1000);
                let rel = ((&a - &b).abs() / a.abs()).to_f64();
                assert!(rel < 1e-6, "r={} z={z} rel={rel:e}", r.to_f64());
                assert!(a.im.to_f64().abs() <= 1e-40 * a.abs().to_f64());
            }
            let z = Cplx::from_f64(P, 3.0, 4.0);
            let rel = ((&weierstrass_e(&z, &r) - &weierstrass_e_product(&z, &r, 1000)).abs()
                / weierstrass_e(&z, &r).abs())
            .to_f64();
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn resonant_derivative_is_minus_infinity() {
        let (a, b) = eprime_magnitudes(&rat(2, 1), 2, P).unwrap();
        assert_eq!(a, f64::NEG_INFINITY);
        assert_eq!(b, f64::NEG_INFINITY);
        let (a, b) = eprime_magnitudes(&rat(2, 1), 1, P).unwrap();
        assert!(a.is_finite());
        assert_eq!(b, f64::NEG_INFINITY);
    }

    /// `E'(kappa_k) = (-2 / kappa_k) prod_{j != k} (1 - kappa_k^2 / kappa_j^2)`.
    fn product_derivative(kappa: &Float, r: &Float, cutoff: usize) -> f64 {
        let mut ln = Float::with_val(P, 2u32).ln() - Float::with_val(P, kappa.ln_ref());
        let k2 = Float::with_val(P, kappa.square_ref());
        for m in 1..=cutoff {
            let m2 = Float::with_val(P, (m * m) as u64);
            for other in [Float::with_val(P, &m2 / r), Float::with_val(P, &m2 * r)] {
                let rel = Float::with_val(P, &other - kappa).abs() / kappa;
                if rel.to_f64() < 1e-40 {
                    continue;
                }
                let f = Float::with_val(P, 1u32) - Float::with_val(P, &k2 / other.square());
                ln += f.abs().ln();
            }
        }
        ln.to_f64()
    }

    #[test]
    fn derivative_matches_product_differentiation() {
        let br = BranchRatio::sqrt_of(2, P);
        let r = br.value(P);
        let (a, b) = eprime_magnitudes(&br, 1, P).unwrap();
        let pa = product_derivative(&Float::with_val(P, r.recip_ref()), &r, 500);
        let pb = product_derivative(&r, &r, 500);
        assert!(((a - pa).exp() - 1.0).abs() < 1e-3, "{a} {pa}");
        assert!(((b - pb).exp() - 1.0).abs() < 1e-3, "{b} {pb}");
    }

    #[test]
    fn amplitude_sandwich() {
        let lower_upper = |r: &Float, n: usize| {
            let pi = std::f64::consts::PI;
            let (rf, nf) = (r.to_f64(), n as f64);
            let base_a = 3.0 * rf.ln() - (2.0 * pi.powi(3)).ln() - 5.0 * nf.ln();
            let base_b = -3.0 * rf.ln() - (2.0 * pi.powi(3)).ln() - 5.0 * nf.ln();
            (
                (base_a + pi.sinh().ln() + (pi / rf).sinh().ln(), base_a + pi * nf + pi * nf / rf),
                (base_b + pi.sinh().ln() + (pi * rf).sinh().ln(), base_b + pi * nf + pi * nf * rf),
            )
        };
        for r in [Float::with_val(P, 3u32), BranchRatio::sqrt_of(2, P).value(P), golden_sq().value(P)] {
            for n in 1..=60 {
                let (la, lb) = amplitude_logs(&r, n);
                let ((alo, ahi), (blo, bhi)) = lower_upper(&r, n);
                let (la, lb) = (la.to_f64(), lb.to_f64());
                assert!(alo <= la + 1e-12 && la <= ahi, "A r={} n={n}", r.to_f64());
                assert!(blo <= lb + 1e-12 && lb <= bhi, "B r={} n={n}", r.to_f64());
            }
        }
        // the r = 3, n = 10 case in plain numbers
        let (la, _) = amplitude_logs(&Float::with_val(P, 3u32), 10);
        let ((alo, ahi), _) = lower_upper(&Float::with_val(P, 3u32), 10);
        assert!(alo < la.to_f64() && la.to_f64() < ahi);
    }

    #[test]
    fn rational_ratio_is_resonant() {
        assert!(matches!(condensation_estimate(&rat(5, 2), 50, P), Err(BeamError::RationalResonance(_))));
    }

    #[test]
    fn sqrt_two_condenses_slowly() {
        let rep = condensation_estimate(&BranchRatio::sqrt_of(2, P), 200, P).unwrap();
        assert!(rep.c_estimate < 0.1, "{}", rep.c_estimate);
        assert!(rep.plus.iter().chain(&rep.minus).all(|v| *v >= 0.0));
        assert_eq!(rep.running_sup_plus[..3], [None, None, None]);
        // bounded partial quotients: |sin(pi n r)| >= c / n keeps values under a ln(n)/n^2 envelope
        for (i, v) in rep.minus.iter().enumerate().skip(3) {
            let n = (i + 1) as f64;
            assert!(*v <= 3.0 * (n.ln() + 1.0) / (n * n), "n={n} v={v}");
        }
    }

    #[test]
    fn liouville_fixture_spikes() {
        let r = liouville_fixture(P);
        let close = Float::with_val(P, r.value(P) - Rational::from((10, 7))).abs().to_f64();
        assert!(close > 0.0 && close < 1e-30);
        let base = condensation_estimate(&BranchRatio::sqrt_of(2, P), 200, P).unwrap().c_estimate;
        let spike = condensation_estimate(&r, 200, P).unwrap();
        assert!(spike.c_estimate >= 10.0 * base, "{} vs {base}", spike.c_estimate);
        assert!(spike.minus[6] > 0.5 && spike.plus[9] > 0.5);
    }

    #[test]
    fn parsed_fraction_matches_fixture() {
        let text = format!("1,2,3,1{}", "0".repeat(30));
        assert_eq!(parse_continued_fraction(&text, P).unwrap(), liouville_fixture(P));
        assert!(parse_continued_fraction("1,x", P).is_err());
        assert!(parse_continued_fraction("1,0", P).is_err());
    }

    #[test]
    fn csv_and_summary() {
        let rep = condensation_estimate(&BranchRatio::sqrt_of(2, P), 6, P).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,branch,per_n_value,running_sup");
        assert_eq!(lines.len(), 13);
        assert!(lines[1].starts_with("1,plus,") && lines[1].ends_with(','));
        assert!(lines[7].starts_with("1,minus,"));
        let s = rep.summary();
        assert_eq!(s.c_estimate, rep.c_estimate);
        assert!(serde_json::to_string(&s).unwrap().contains("\"tail_start\":4"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn running_sups_are_monotone(d in 2u64..60, n_max in 5usize..80) {
            let r = BranchRatio::sqrt_of(d, 128);
            prop_assume!(!r.is_rational());
            let rep = condensation_estimate(&r, n_max, 128).unwrap();
            for sups in [&rep.running_sup_plus, &rep.running_sup_minus] {
                let s: Vec<f64> = sups.iter().flatten().copied().collect();
                prop_assert!(s.windows(2).all(|w| w[1] >= w[0]));
            }
            let shorter = condensation_estimate(&r, n_max - 1, 128).unwrap();
            prop_assert!(shorter.c_estimate <= rep.c_estimate);
        }

        #[test]
        fn per_n_values_are_non_negative(d in 2u64..60, n in 1usize..300) {
            let r = BranchRatio::sqrt_of(d, 128);
            prop_assume!(!r.is_rational());
            let rep = condensation_estimate_from(&r, n, 1, 128).unwrap();
            prop_assert!(rep.plus[n - 1] >= 0.0 && rep.minus[n - 1] >= 0.0);
        }
    }
}
