//! Minimum-norm solution of the moment problem.
//!
//! The smallest `f''` in `L^2(0,T)` meeting every moment lies in the span of
//! the kernels, `f'' = sum c_k kappa_k` with `G c = zeta`. Columns of `G^{-1}`
//! give the biorthogonal family of the kernels.

use rug::Float;
use serde::Serialize;

use crate::config::{BeamConfig, MIN_PRECISION_BITS};
use crate::control::{ControlRecord, ControlSignal};
use crate::error::{BeamError, Result};
use crate::fit::{fit_line, LineFit};
use crate::kernel::{ExpPoly, Kernel, KernelOrigin};
use crate::linalg::{condition_number, dot, factor_or_error, gram_matrix, mat_vec, norm2, Cholesky, Matrix};
use crate::modal::ModalState;
use crate::moment::{assemble, MomentSystem};
use crate::mp::{self, Prec};
use crate::spectrum::Regime;

pub const PRECISION_CEILING_ENV: &str = "BEAMCTL_PRECISION_CEILING";
pub const DEFAULT_PRECISION_CEILING: Prec = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthesisOptions {
    /// Double the precision on rank deficiency, then fall back to Tikhonov.
    pub autoscale: bool,
    pub precision_ceiling: Prec,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { autoscale: true, precision_ceiling: DEFAULT_PRECISION_CEILING }
    }
}

impl SynthesisOptions {
    /// Defaults, with the ceiling taken from `BEAMCTL_PRECISION_CEILING` when set.
    pub fn from_env() -> Result<Self> {
        let mut o = SynthesisOptions::default();
        if let Ok(v) = std::env::var(PRECISION_CEILING_ENV) {
            o.precision_ceiling = v
                .trim()
                .parse()
                .map_err(|_| BeamError::domain(format!("{PRECISION_CEILING_ENV} must be a bit count, got '{v}'")))?;
            if o.precision_ceiling < MIN_PRECISION_BITS {
                return Err(BeamError::domain(format!("{PRECISION_CEILING_ENV} is below the minimum precision")));
            }
        }
        Ok(o)
    }
}

#[derive(Clone, Debug)]
pub struct SynthesisReport {
    pub control: ControlSignal,
    /// `||G c - zeta|| / ||zeta||`, zero for zero targets.
    pub residual_norm: f64,
    /// `||G||_1 ||G^{-1}||_1`.
    pub gram_condition: f64,
    pub pivot_ratio: f64,
    /// `||f''||_{L^2(0,T)}` from the closed-form integral of `f''^2`.
    pub control_cost: f64,
    /// `sqrt(c^T G c)`; agrees with `control_cost` for a consistent solve.
    pub quadratic_form_cost: f64,
    pub precision_used: Prec,
    pub regularization_used: f64,
    pub autoscale_trace: Vec<Prec>,
    pub n_constraints: usize,
    /// `(f(T), f'(T))`.
    pub endpoint: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthesisRecord {
    pub residual_norm: f64,
    pub gram_condition: f64,
    pub pivot_ratio: f64,
    pub control_cost: f64,
    pub precision_used: Prec,
    pub regularization_used: f64,
    pub autoscale_trace: Vec<Prec>,
    pub n_constraints: usize,
    pub endpoint_value: f64,
    pub endpoint_slope: f64,
    pub control: ControlRecord,
}

impl SynthesisReport {
    pub fn record(&self) -> SynthesisRecord {
        SynthesisRecord {
            residual_norm: self.residual_norm,
            gram_condition: self.gram_condition,
            pivot_ratio: self.pivot_ratio,
            control_cost: self.control_cost,
            precision_used: self.precision_used,
            regularization_used: self.regularization_used,
            autoscale_trace: self.autoscale_trace.clone(),
            n_constraints: self.n_constraints,
            endpoint_value: self.endpoint.0,
            endpoint_slope: self.endpoint.1,
            control: self.control.record(),
        }
    }
}

/// Solves `(G + eps I) c = zeta` at the system's precision.
pub fn solve_min_norm(system: &MomentSystem, regularization: f64) -> Result<SynthesisReport> {
    solve_with_trace(system, regularization, &[system.prec()])
}

fn solve_with_trace(system: &MomentSystem, regularization: f64, trace: &[Prec]) -> Result<SynthesisReport> {
    let prec = system.prec();
    let horizon = system.horizon();
    let g = gram_matrix(&system.kernels, &horizon);
    let eps = Float::with_val(prec, regularization);
    let chol = factor_or_error(&g, &eps, trace)?;
    let coefficients = chol.solve(&system.rhs);
    report_for(system, &g, &chol, coefficients, regularization, trace.to_vec())
}

fn report_for(
    system: &MomentSystem,
    g: &Matrix,
    chol: &Cholesky,
    coefficients: Vec<Float>,
    regularization: f64,
    trace: Vec<Prec>,
) -> Result<SynthesisReport> {
    let prec = system.prec();
    let gc = mat_vec(g, &coefficients);
    let diff: Vec<Float> = gc.iter().zip(&system.rhs).map(|(a, b)| Float::with_val(prec, a - b)).collect();
    let zeta_norm = norm2(&system.rhs);
    let residual_norm = if zeta_norm.is_zero() {
        norm2(&diff).to_f64()
    } else {
        Float::with_val(prec, norm2(&diff) / &zeta_norm).to_f64()
    };
    let quad = dot(&coefficients, &gc);
    let quadratic_form_cost = if quad.is_sign_negative() { 0.0 } else { quad.sqrt().to_f64() };
    let inverse = chol.inverse();
    let gram_condition = condition_number(g, &inverse);
    let control = ControlSignal::new(system.kernels.clone(), coefficients, system.horizon());
    let control_cost = control.cost().to_f64();
    let (f, df, _) = control.evaluate(&system.horizon());
    Ok(SynthesisReport {
        residual_norm,
        gram_condition,
        pivot_ratio: chol.pivot_ratio(),
        control_cost,
        quadratic_form_cost,
        precision_used: prec,
        regularization_used: regularization,
        autoscale_trace: trace,
        n_constraints: system.len(),
        endpoint: (f.to_f64(), df.to_f64()),
        control,
    })
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub system: MomentSystem,
    pub report: SynthesisReport,
}

/// Assembles and solves, doubling the precision whenever the Gram factorization
/// loses definiteness. Past the ceiling a Tikhonov weight of `2^{-p/4}` times
/// the largest Gram diagonal is added and the residual is reported.
pub fn synthesize(config: &BeamConfig, state0: &ModalState, options: &SynthesisOptions) -> Result<Synthesis> {
    config.validate()?;
    let mut prec = config.precision_bits;
    let mut trace = Vec::new();
    loop {
        trace.push(prec);
        let cfg = config.clone().with_precision(prec);
        let system = assemble(&cfg, state0)?;
        match solve_with_trace(&system, config.regularization, &trace) {
            Ok(report) => return Ok(Synthesis { system, report }),
            Err(BeamError::NumericalRankDeficiency { .. }) if options.autoscale && prec * 2 <= options.precision_ceiling => {
                log::info!("gram factorization failed at {prec} bits; retrying at {}", prec * 2);
                prec *= 2;
            }
            Err(BeamError::NumericalRankDeficiency { .. }) if options.autoscale => {
                let g = gram_matrix(&system.kernels, &system.horizon());
                let largest = (0..g.len()).map(|i| g[i][i].to_f64()).fold(0.0, f64::max);
                let weight = config.regularization.max(largest * 2f64.powi(-(prec as i32) / 4));
                log::warn!("falling back to Tikhonov regularization {weight:e} at {prec} bits");
                let report = solve_with_trace(&system, weight, &trace)?;
                return Ok(Synthesis { system, report });
            }
            Err(e) => return Err(e),
        }
    }
}

/// Functions `g_m` with `<g_m, kappa_k> = delta_{mk}` on the kernel span.
#[derive(Clone, Debug)]
pub struct BiorthogonalFamily {
    pub kernels: Vec<Kernel>,
    /// `columns[m]` expands `g_m` over the kernels.
    pub columns: Vec<Vec<Float>>,
    /// `||g_m||_{L^2(0,T)} = sqrt((G^{-1})_{mm})`.
    pub norms: Vec<f64>,
    /// `max |<g_m, kappa_k> - delta_{mk}|` with the pairings integrated afresh.
    pub residual: f64,
    pub horizon: Float,
}

pub fn biorthogonal_family(system: &MomentSystem) -> Result<BiorthogonalFamily> {
    biorthogonal_family_of(&system.kernels, &system.horizon())
}

pub fn biorthogonal_family_of(kernels: &[Kernel], horizon: &Float) -> Result<BiorthogonalFamily> {
    let prec = horizon.prec();
    let g = gram_matrix(kernels, horizon);
    let chol = factor_or_error(&g, &Float::new(prec), &[prec])?;
    let inv = chol.inverse();
    let n = kernels.len();
    let columns: Vec<Vec<Float>> = (0..n).map(|m| (0..n).map(|j| inv[j][m].clone()).collect()).collect();
    let norms = (0..n).map(|m| inv[m][m].clone().abs().sqrt().to_f64()).collect();
    let polys: Vec<ExpPoly> = kernels.iter().map(|k| k.to_exppoly(horizon)).collect();
    let residual = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|m| {
                let mut gm = ExpPoly::zero(prec);
                for (c, poly) in columns[m].iter().zip(&polys) {
                    gm.extend(poly.scaled_real(c));
                }
                let gm = gm.merge_like_terms();
                (0..n)
                    .map(|k| {
                        let mut v = gm.product(&polys[k]).integral(horizon).re;
                        if k == m {
                            v -= 1;
                        }
                        v.abs().to_f64()
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    };
    Ok(BiorthogonalFamily { kernels: kernels.to_vec(), columns, norms, residual, horizon: horizon.clone() })
}

impl BiorthogonalFamily {
    /// `g_m` as a control-shaped signal, for evaluation and sampling.
    pub fn function(&self, m: usize) -> ControlSignal {
        ControlSignal::new(self.kernels.clone(), self.columns[m].clone(), self.horizon.clone())
    }
}

/// Upper envelope of `ln ||g_m||` against `(Im lambda_m)^{1/2}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthEnvelope {
    pub modes: Vec<usize>,
    /// `(Im lambda_m)^{1/2}`, or `|lambda_m^+|^{1/2}` when the roots are real.
    pub abscissa: Vec<f64>,
    /// Largest `ln ||g||` among the mode's kernels.
    pub log_norms: Vec<f64>,
    pub fit: LineFit,
    /// How far above the fitted line the worst mode sits, in nats.
    pub max_excess: f64,
    /// `e^{max_excess}`: the factor by which the line must be lifted to bound every point.
    pub slack_factor: f64,
}

pub fn growth_envelope(system: &MomentSystem, family: &BiorthogonalFamily) -> Result<GrowthEnvelope> {
    let mut modes = Vec::new();
    let mut abscissa = Vec::new();
    let mut log_norms = Vec::new();
    for eig in &system.eigenvalues {
        let idx: Vec<usize> = family
            .kernels
            .iter()
            .enumerate()
            .filter(|(_, k)| matches!(k.origin, KernelOrigin::Mode { n, .. } if n == eig.n))
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let norm = idx.iter().map(|&i| family.norms[i]).fold(0.0, f64::max);
        let freq = match eig.regime {
            Regime::Underdamped => eig.alpha.to_f64(),
            _ => eig.lambda_plus.abs().to_f64(),
        };
        modes.push(eig.n);
        abscissa.push(freq.sqrt());
        log_norms.push(norm.ln());
    }
    let fit = fit_line(&abscissa, &log_norms)
        .ok_or_else(|| BeamError::domain("growth envelope needs at least two modes"))?;
    let max_excess = abscissa.iter().zip(&log_norms).map(|(x, y)| y - fit.at(*x)).fold(0.0, f64::max);
    Ok(GrowthEnvelope { modes, abscissa, log_norms, fit, max_excess, slack_factor: max_excess.exp() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyRecord {
    pub norms: Vec<f64>,
    pub residual: f64,
    pub columns: Vec<Vec<String>>,
}

impl BiorthogonalFamily {
    pub fn record(&self) -> FamilyRecord {
        FamilyRecord {
            norms: self.norms.clone(),
            residual: self.residual,
            columns: self.columns.iter().map(|c| c.iter().map(mp::decimal).collect()).collect(),
        }
    }
}

/// `(f(t), f'(t), f''(t))` of a synthesized control.
pub fn evaluate_control(control: &ControlSignal, t: f64) -> (f64, f64, f64) {
    control.evaluate_f64(t)
}
