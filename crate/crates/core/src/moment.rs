//! The finite moment problem for `f''`.
//!
//! Steering mode `n` to rest at `T` means the forced response must cancel the
//! free motion: `a_n(T) = gamma1 = -v_n(T)` and `a_n'(T) = gamma2 = -v_n'(T)`.
//! Solving the 2x2 system for the two exponential moments gives
//!
//! ```text
//!   int f''(s) e^{lambda+ (T-s)} ds = (lambda- gamma1 - gamma2) / x_n
//!   int f''(s) e^{lambda- (T-s)} ds = (lambda+ gamma1 - gamma2) / x_n
//! ```
//!
//! and at critical damping
//!
//! ```text
//!   int f''(s) e^{lambda (T-s)} ds       = (lambda gamma1 - gamma2) / x_n
//!   int f''(s) (T-s) e^{lambda (T-s)} ds = -gamma1 / x_n
//! ```
//!
//! Two more rows, `int f'' = 0` and `int s f'' = 0`, force `f(T) = f'(T) = 0`.

use rug::Float;
use serde::Serialize;

use crate::config::{BeamConfig, Boundary};
use crate::error::{BeamError, Result};
use crate::kernel::{Branch, Kernel, KernelOrigin, KernelPart, KernelRecord, KernelShape};
use crate::modal::{free_coefficients, FreeEvolution, ModalState};
use crate::mp::{self, Cplx, Prec};
use crate::spectrum::{
    boundary_trace_coefficients, branch_ratio, detect_collisions, spectrum, BoundaryTraceExpansion,
    ModeEigenvalues, Regime,
};

/// Relative size below which a coefficient counts as roundoff when deciding
/// whether an unreachable mode carries data.
pub const DATA_TOLERANCE: f64 = 1e-14;

/// Relative size of the constant-mode coefficients tolerated by the Neumann screen.
pub const ADMISSIBILITY_TOLERANCE: f64 = 1e-12;

/// Targets for one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeTargets {
    pub n: usize,
    pub gamma1: Float,
    pub gamma2: Float,
    /// Target of `e^{lambda+ (T-s)}`, or of `e^{lambda (T-s)}` at critical damping.
    pub zeta1: Cplx,
    /// Target of `e^{lambda- (T-s)}`, or of `(T-s) e^{lambda (T-s)}` at critical damping.
    pub zeta2: Cplx,
    /// False when the boundary trace of the mode vanishes.
    pub reachable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentRHS {
    pub modes: Vec<ModeTargets>,
}

impl MomentRHS {
    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.zeta1.is_zero() && m.zeta2.is_zero())
    }

    pub fn mode(&self, n: usize) -> &ModeTargets {
        &self.modes[n - 1]
    }
}

fn data_scale(state: &ModalState) -> f64 {
    let mut sq: f64 = state.values.iter().chain(&state.velocities).map(|v| v * v).sum();
    if let Some((a, b)) = state.zero_mode {
        sq += a * a + b * b;
    }
    sq.sqrt()
}

/// Right-hand sides from the free motion at `T`.
pub fn moment_rhs(
    free: &FreeEvolution,
    eigs: &[ModeEigenvalues],
    horizon: &Float,
    traces: &BoundaryTraceExpansion,
) -> MomentRHS {
    let modes = (1..=free.n_modes())
        .map(|n| {
            let eig = &eigs[n - 1];
            let p = eig.prec();
            let (v, dv) = free.mode_at(n, horizon);
            let gamma1 = -v;
            let gamma2 = -dv;
            let x = traces.x(n);
            if x.is_zero() {
                return ModeTargets {
                    n,
                    gamma1,
                    gamma2,
                    zeta1: Cplx::zero(p),
                    zeta2: Cplx::zero(p),
                    reachable: false,
                };
            }
            let g1 = Cplx::from_real(gamma1.clone());
            let g2 = Cplx::from_real(gamma2.clone());
            let inv_x = Cplx::from_real(Float::with_val(p, x.recip_ref()));
            let (zeta1, zeta2) = match eig.regime {
                Regime::Critical => {
                    let lam = &eig.lambda_plus;
                    (&(&(lam * &g1) - &g2) * &inv_x, -&(&g1 * &inv_x))
                }
                _ => (
                    &(&(&eig.lambda_minus * &g1) - &g2) * &inv_x,
                    &(&(&eig.lambda_plus * &g1) - &g2) * &inv_x,
                ),
            };
            ModeTargets { n, gamma1, gamma2, zeta1, zeta2, reachable: true }
        })
        .collect();
    MomentRHS { modes }
}

/// A constraint removed because its kernel coincides with an earlier one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergedConstraint {
    /// Mode whose `lambda+` kernel was kept.
    pub kept_mode: usize,
    /// Mode whose `lambda-` kernel duplicated it and was dropped.
    pub dropped_mode: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelSet {
    pub kernels: Vec<Kernel>,
    pub merged: Vec<MergedConstraint>,
}

/// Kernels in order: `1`, `s`, then two per reachable mode. Collided
/// overdamped kernels (`lambda_m^+ = lambda_n^-`) appear once.
pub fn constraint_kernels(config: &BeamConfig) -> Result<KernelSet> {
    config.validate()?;
    let prec = config.precision_bits;
    let eigs = spectrum(&config.rho, config.n_modes, prec)?;
    let traces = boundary_trace_coefficients(config.boundary, config.n_modes, prec);
    kernels_for(&eigs, &traces, config)
}

fn kernels_for(eigs: &[ModeEigenvalues], traces: &BoundaryTraceExpansion, config: &BeamConfig) -> Result<KernelSet> {
    let prec = config.precision_bits;
    let mut kernels = vec![Kernel::constant(prec), Kernel::linear(prec)];
    let mut merged = Vec::new();
    let regime = eigs.first().map(|e| e.regime);
    let collisions = if regime == Some(Regime::Overdamped) {
        let r = branch_ratio(&config.rho, prec)?;
        detect_collisions(&r, config.n_modes)?.pairs
    } else {
        Vec::new()
    };
    for eig in eigs {
        let n = eig.n;
        if traces.x(n).is_zero() {
            continue;
        }
        let plus = KernelOrigin::Mode { n, branch: Branch::Plus };
        let minus = KernelOrigin::Mode { n, branch: Branch::Minus };
        match eig.regime {
            Regime::Underdamped => {
                kernels.push(Kernel::exponential(eig.lambda_plus.clone(), KernelPart::RealPart, plus));
                kernels.push(Kernel::exponential(eig.lambda_plus.clone(), KernelPart::ImagPart, plus));
            }
            Regime::Critical => {
                kernels.push(Kernel::exponential(eig.lambda_plus.clone(), KernelPart::Real, plus));
                kernels.push(Kernel::shifted_exponential(eig.lambda_plus.clone(), minus));
            }
            Regime::Overdamped => {
                kernels.push(Kernel::exponential(eig.lambda_plus.clone(), KernelPart::Real, plus));
                kernels.push(Kernel::exponential(eig.lambda_minus.clone(), KernelPart::Real, minus));
            }
        }
    }
    if !collisions.is_empty() {
        let mut kept: Vec<Kernel> = Vec::with_capacity(kernels.len());
        for k in kernels {
            if let KernelOrigin::Mode { n, branch: Branch::Minus } = k.origin {
                if let Some(&(m, _)) = collisions.iter().find(|(m, cn)| *cn == n && !traces.x(*m).is_zero()) {
                    merged.push(MergedConstraint { kept_mode: m, dropped_mode: n });
                    continue;
                }
            }
            kept.push(k);
        }
        kernels = kept;
    }
    Ok(KernelSet { kernels, merged })
}

/// Outcome of the Neumann mean-value screen. Residuals are `int u^0 dx` and
/// `int u^1 dx`, i.e. `sqrt(pi)` times the constant-mode coefficients.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Admissibility {
    pub passed: bool,
    pub residual_u0: f64,
    pub residual_u1: f64,
}

pub fn neumann_admissibility(state0: &ModalState) -> Admissibility {
    let (c0, c1) = state0.zero_mode.unwrap_or((0.0, 0.0));
    let root_pi = std::f64::consts::PI.sqrt();
    let tol = ADMISSIBILITY_TOLERANCE * data_scale(state0);
    Admissibility {
        passed: c0.abs() <= tol && c1.abs() <= tol,
        residual_u0: root_pi * c0,
        residual_u1: root_pi * c1,
    }
}

#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub config: BeamConfig,
    pub kernels: Vec<Kernel>,
    /// Real targets aligned with `kernels`.
    pub rhs: Vec<Float>,
    pub targets: MomentRHS,
    pub merged: Vec<MergedConstraint>,
    pub eigenvalues: Vec<ModeEigenvalues>,
    pub traces: BoundaryTraceExpansion,
    pub free: FreeEvolution,
    /// Measurement-scale norm of the data the cutoff discarded.
    pub truncation_norm: f64,
}

impl MomentSystem {
    pub fn horizon(&self) -> Float {
        self.config.horizon_float()
    }

    pub fn prec(&self) -> Prec {
        self.config.precision_bits
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn rhs_is_zero(&self) -> bool {
        self.rhs.iter().all(|v| v.is_zero())
    }

    pub fn record(&self) -> MomentSystemRecord {
        MomentSystemRecord {
            boundary: self.config.boundary,
            rho: self.config.rho.to_string(),
            horizon: mp::decimal(&self.horizon()),
            n_modes: self.config.n_modes,
            precision_bits: self.prec(),
            kernels: self.kernels.iter().map(KernelRecord::from).collect(),
            rhs: self.rhs.iter().map(mp::decimal).collect(),
            merged: self.merged.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentSystemRecord {
    pub boundary: Boundary,
    pub rho: String,
    pub horizon: String,
    pub n_modes: usize,
    pub precision_bits: Prec,
    pub kernels: Vec<KernelRecord>,
    pub rhs: Vec<String>,
    pub merged: Vec<MergedConstraint>,
}

fn target_for(kernel: &Kernel, targets: &MomentRHS) -> Float {
    let p = kernel.prec();
    match kernel.origin {
        KernelOrigin::EndpointSlope | KernelOrigin::EndpointValue => Float::new(p),
        KernelOrigin::Mode { n, branch } => {
            let t = targets.mode(n);
            match (kernel.shape, kernel.part) {
                (KernelShape::Exponential, KernelPart::RealPart) => t.zeta1.re.clone(),
                (KernelShape::Exponential, KernelPart::ImagPart) => t.zeta1.im.clone(),
                (KernelShape::ShiftedExponential, _) => t.zeta2.re.clone(),
                (_, _) => match branch {
                    Branch::Plus => t.zeta1.re.clone(),
                    Branch::Minus => t.zeta2.re.clone(),
                },
            }
        }
    }
}

/// Builds the real moment system that steers `state0` to rest at `T`.
pub fn assemble(config: &BeamConfig, state0: &ModalState) -> Result<MomentSystem> {
    config.validate()?;
    if state0.boundary != config.boundary {
        return Err(BeamError::domain("initial state and configuration disagree on the boundary type"));
    }
    if !state0.is_finite() {
        return Err(BeamError::domain("initial data must be finite"));
    }
    let prec = config.precision_bits;
    let truncation_norm = state0.tail_norm(config.n_modes);
    let data = state0.resized(config.n_modes);

    if config.boundary == Boundary::Neumann {
        let adm = neumann_admissibility(&data);
        if !adm.passed {
            return Err(BeamError::InadmissibleData { residual_u0: adm.residual_u0, residual_u1: adm.residual_u1 });
        }
    }

    let eigs = spectrum(&config.rho, config.n_modes, prec)?;
    let traces = boundary_trace_coefficients(config.boundary, config.n_modes, prec);

    let scale = data_scale(&data);
    for n in 1..=config.n_modes {
        if traces.x(n).is_zero() {
            let magnitude = data.value(n).hypot(data.velocity(n));
            if magnitude > DATA_TOLERANCE * scale {
                return Err(BeamError::UncontrollableMode { mode: n, magnitude });
            }
        }
    }

    let free = free_coefficients(&data, &eigs)?;
    let horizon = config.horizon_float();
    let targets = moment_rhs(&free, &eigs, &horizon, &traces);
    let set = kernels_for(&eigs, &traces, config)?;

    let largest = targets
        .modes
        .iter()
        .flat_map(|m| [m.zeta1.abs(), m.zeta2.abs()])
        .fold(Float::new(prec), |a, b| if b > a { b } else { a });
    for mc in &set.merged {
        let kept = &targets.mode(mc.kept_mode).zeta1;
        let dropped = &targets.mode(mc.dropped_mode).zeta2;
        let defect = (kept - dropped).abs();
        let threshold = Float::with_val(prec, &largest * mp::pow2_neg(prec, prec as i32 / 2));
        if defect > threshold {
            let bigger = if kept.abs() > dropped.abs() { kept.abs() } else { dropped.abs() };
            return Err(BeamError::ResonanceDefect {
                m: mc.kept_mode,
                n: mc.dropped_mode,
                defect: defect.to_f64(),
                relative: Float::with_val(prec, &defect / &bigger).to_f64(),
            });
        }
    }

    let rhs = set.kernels.iter().map(|k| target_for(k, &targets)).collect();
    Ok(MomentSystem {
        config: config.clone(),
        kernels: set.kernels,
        rhs,
        targets,
        merged: set.merged,
        eigenvalues: eigs,
        traces,
        free,
        truncation_norm,
    })
}
