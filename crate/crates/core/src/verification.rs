//! End-to-end experiments: synthesize a control, evaluate the final state by the
//! closed forms and by the time stepper, and judge the result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::Float;
use serde::Serialize;

use crate::config::BeamConfig;
use crate::control::ControlSignal;
use crate::error::{BeamError, Result};
use crate::fit::{fit_line, LineFit};
use crate::io::csv_writer;
use crate::linalg::gram_entry;
use crate::modal::{controlled_state_at, free_coefficients, free_state_at, random_fixture, ModalState};
use crate::moment::constraint_kernels;
use crate::oracle::{oracle_steps, simulate_oracle};
use crate::spectrum::{boundary_trace_coefficients, spectrum};
use crate::synthesis::{synthesize, Synthesis, SynthesisOptions};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Controlled,
    ResidualTooLarge,
    Uncontrollable,
}

#[derive(Clone, Debug)]
pub struct ExperimentOptions {
    /// Relative final-state tolerance in the measurement scale.
    pub tolerance: f64,
    pub synthesis: SynthesisOptions,
    /// Run the time stepper as a second path.
    pub oracle: bool,
    /// Overrides the default step policy.
    pub oracle_steps: Option<usize>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions { tolerance: DEFAULT_TOLERANCE, synthesis: SynthesisOptions::default(), oracle: true, oracle_steps: None }
    }
}

/// Displacement and velocity norms in the measurement scale
/// (`X^3 x X^1` Dirichlet, `X^4 x X^2` Neumann).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct NormPair {
    pub displacement: f64,
    pub velocity: f64,
}

impl NormPair {
    pub fn of(state: &ModalState) -> Self {
        let p = crate::modal::measurement_exponent(state.boundary);
        NormPair { displacement: state.displacement_norm(p), velocity: state.velocity_norm(p - 2.0) }
    }

    pub fn combined(&self) -> f64 {
        self.displacement.hypot(self.velocity)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: BeamConfig,
    pub initial_norms: NormPair,
    /// Closed-form final state on modes `1..=N`.
    pub final_norms: NormPair,
    /// Time-stepped final state on modes `1..=N`.
    pub oracle_final_norms: Option<NormPair>,
    pub final_relative: f64,
    pub oracle_final_relative: Option<f64>,
    /// Modes `N+1..=2N`, which the control does not target, relative to the data.
    pub spillover_relative: f64,
    pub control_cost: f64,
    /// `||closed-form - time-stepped||` over all `2N` modes, relative to the data.
    pub oracle_deviation: Option<f64>,
    pub oracle_steps: Option<usize>,
    pub precision_used: Option<u32>,
    pub gram_condition: Option<f64>,
    pub residual_norm: Option<f64>,
    pub verdict: Verdict,
    /// Error kind and message when the experiment could not complete.
    pub cause: Option<String>,
    pub cause_kind: Option<String>,
}

impl ExperimentResult {
    fn failed(config: &BeamConfig, initial: NormPair, err: &BeamError) -> Self {
        ExperimentResult {
            config: config.clone(),
            initial_norms: initial,
            final_norms: NormPair::default(),
            oracle_final_norms: None,
            final_relative: f64::NAN,
            oracle_final_relative: None,
            spillover_relative: f64::NAN,
            control_cost: f64::NAN,
            oracle_deviation: None,
            oracle_steps: None,
            precision_used: None,
            gram_condition: None,
            residual_norm: None,
            verdict: Verdict::Uncontrollable,
            cause: Some(err.to_string()),
            cause_kind: Some(err.kind().to_string()),
        }
    }
}

fn relative(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Synthesize, evaluate at `T` both ways, and judge. Upstream failures become an
/// `Uncontrollable` verdict carrying the cause; only an invalid configuration is an `Err`.
pub fn null_control_experiment(
    config: &BeamConfig,
    state0: &ModalState,
    options: &ExperimentOptions,
) -> Result<ExperimentResult> {
    config.validate()?;
    if state0.boundary != config.boundary {
        return Err(BeamError::domain("initial state and configuration disagree on the boundary type"));
    }
    let n = config.n_modes;
    let data = state0.resized(n);
    let initial = NormPair::of(state0);
    let data_norm = initial.combined();
    let syn = match synthesize(config, &data, &options.synthesis) {
        Ok(s) => s,
        Err(e @ BeamError::Domain(_)) => return Err(e),
        Err(e) => return Ok(ExperimentResult::failed(config, initial, &e)),
    };
    match evaluate_paths(config, &data, &syn, options) {
        Ok((closed, oracle)) => {
            let report = &syn.report;
            let final_norms = NormPair::of(&closed.truncated(n));
            let final_relative = relative(final_norms.combined(), data_norm);
            let spillover_relative = relative(closed.tail_norm(n), data_norm);
            let (oracle_final_norms, oracle_final_relative, oracle_deviation, oracle_steps) = match &oracle {
                Some((state, steps)) => {
                    let norms = NormPair::of(&state.truncated(n));
                    let dev = relative(state.difference(&closed).measurement_norm(), data_norm);
                    (Some(norms), Some(relative(norms.combined(), data_norm)), Some(dev), Some(*steps))
                }
                None => (None, None, None, None),
            };
            let tol = options.tolerance;
            let controlled = final_relative <= tol && oracle_final_relative.is_none_or(|r| r <= tol);
            Ok(ExperimentResult {
                config: config.clone(),
                initial_norms: initial,
                final_norms,
                oracle_final_norms,
                final_relative,
                oracle_final_relative,
                spillover_relative,
                control_cost: report.control_cost,
                oracle_deviation,
                oracle_steps,
                precision_used: Some(report.precision_used),
                gram_condition: Some(report.gram_condition),
                residual_norm: Some(report.residual_norm),
                verdict: if controlled { Verdict::Controlled } else { Verdict::ResidualTooLarge },
                cause: None,
                cause_kind: None,
            })
        }
        Err(e) => {
            let mut r = ExperimentResult::failed(config, initial, &e);
            r.control_cost = syn.report.control_cost;
            r.precision_used = Some(syn.report.precision_used);
            Ok(r)
        }
    }
}

/// Final states over `2N` modes from the closed forms and, optionally, the time stepper.
fn evaluate_paths(
    config: &BeamConfig,
    data: &ModalState,
    syn: &Synthesis,
    options: &ExperimentOptions,
) -> Result<(ModalState, Option<(ModalState, usize)>)> {
    let wide = 2 * config.n_modes;
    let prec = syn.system.prec();
    let eigs = spectrum(&config.rho, wide, prec)?;
    let traces = boundary_trace_coefficients(config.boundary, wide, prec);
    let padded = data.resized(wide);
    let free = free_coefficients(&padded, &eigs)?;
    let control = &syn.report.control;
    let closed = controlled_state_at(&free, &eigs, &traces, control, config.horizon);
    let oracle = if options.oracle {
        let steps = options.oracle_steps.unwrap_or_else(|| oracle_steps(config.rho.to_f64(), wide, config.horizon));
        let tr = simulate_oracle(config, &padded, control, steps)?;
        Some((tr.final_state().clone(), steps))
    } else {
        None
    };
    Ok((closed, oracle))
}

/// JSON-lines, one experiment per line.
pub fn write_experiments<W: std::io::Write>(out: W, results: &[ExperimentResult]) -> Result<()> {
    crate::io::write_json_lines(out, results)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub horizon: f64,
    pub cost: Option<f64>,
    pub residual: Option<f64>,
    /// Closed-form final relative norm on modes `1..=N`.
    pub final_relative: Option<f64>,
    pub verdict: Verdict,
    pub cause: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostSweep {
    pub points: Vec<SweepPoint>,
    /// `ln cost = intercept + slope / T` over the points with positive cost.
    pub fit: Option<LineFit>,
    /// Cost never increases with `T` across the successful points.
    pub monotone: bool,
}

/// Costs over a list of horizons, run concurrently and reported in input order.
pub fn cost_sweep(
    config: &BeamConfig,
    state0: &ModalState,
    horizons: &[f64],
    options: &ExperimentOptions,
) -> Result<CostSweep> {
    config.validate()?;
    for &t in horizons {
        config.clone().with_horizon(t).validate()?;
    }
    let points: Vec<SweepPoint> = horizons
        .par_iter()
        .map(|&t| {
            let cfg = config.clone().with_horizon(t);
            let opts = ExperimentOptions { oracle: false, ..options.clone() };
            match null_control_experiment(&cfg, state0, &opts) {
                Ok(r) if r.cause.is_none() => SweepPoint {
                    horizon: t,
                    cost: Some(r.control_cost),
                    residual: r.residual_norm,
                    final_relative: Some(r.final_relative),
                    verdict: r.verdict,
                    cause: None,
                },
                Ok(r) => SweepPoint {
                    horizon: t,
                    cost: None,
                    residual: None,
                    final_relative: None,
                    verdict: r.verdict,
                    cause: r.cause,
                },
                Err(e) => SweepPoint {
                    horizon: t,
                    cost: None,
                    residual: None,
                    final_relative: None,
                    verdict: Verdict::Uncontrollable,
                    cause: Some(e.to_string()),
                },
            }
        })
        .collect();
    let usable: Vec<(f64, f64)> =
        points.iter().filter_map(|p| p.cost.filter(|c| *c > 0.0).map(|c| (p.horizon, c))).collect();
    let fit = fit_line(
        &usable.iter().map(|(t, _)| 1.0 / t).collect::<Vec<_>>(),
        &usable.iter().map(|(_, c)| c.ln()).collect::<Vec<_>>(),
    );
    let mut ordered: Vec<(f64, f64)> = points.iter().filter_map(|p| p.cost.map(|c| (p.horizon, c))).collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = ordered.windows(2).all(|w| w[1].1 <= w[0].1);
    Ok(CostSweep { points, fit, monotone })
}

impl CostSweep {
    /// Columns `T,cost,residual,verdict`; failed points leave cost and residual blank.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["T", "cost", "residual", "verdict"])?;
        for p in &self.points {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
            w.write_record([p.horizon.to_string(), opt(p.cost), opt(p.residual), format!("{:?}", p.verdict)])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrosscheckReport {
    pub trials: usize,
    /// Worst relative gap between the closed-form forced response and the time stepper.
    pub duhamel_vs_oracle: f64,
    /// Worst relative gap between closed-form Gram entries and adaptive quadrature.
    pub gram_vs_quadrature: f64,
    /// Worst relative gap between closed-form free evolution and the time stepper.
    pub free_vs_oracle: f64,
}

impl CrosscheckReport {
    pub fn worst(&self) -> f64 {
        self.duhamel_vs_oracle.max(self.gram_vs_quadrature).max(self.free_vs_oracle)
    }
}

/// Randomized comparisons of independent code paths. Trials are seeded
/// individually from `seed`, so results do not depend on scheduling.
pub fn crosscheck_suite(config: &BeamConfig, trials: usize, seed: u64) -> Result<CrosscheckReport> {
    config.validate()?;
    let n = config.n_modes;
    let prec = config.precision_bits;
    let horizon = config.horizon_float();
    let kernels = constraint_kernels(config)?.kernels;
    let eigs = spectrum(&config.rho, n, prec)?;
    let traces = boundary_trace_coefficients(config.boundary, n, prec);
    let steps = oracle_steps(config.rho.to_f64(), n, config.horizon);

    let forced: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e37_79b9 * (i as u64 + 1)));
            let coeffs: Vec<Float> = kernels.iter().map(|_| Float::with_val(prec, rng.gen_range(-1.0..1.0))).collect();
            let control = ControlSignal::new(kernels.clone(), coeffs, horizon.clone());
            let rest = ModalState::zeros(config.boundary, n);
            let free = free_coefficients(&rest, &eigs)?;
            let closed = controlled_state_at(&free, &eigs, &traces, &control, config.horizon);
            let stepped = simulate_oracle(config, &rest, &control, steps)?;
            Ok(relative(stepped.final_state().difference(&closed).measurement_norm(), closed.measurement_norm()))
        })
        .collect::<Result<_>>()?;

    let free_dev: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let data = random_fixture(config.boundary, n, seed.wrapping_add(1000 + i as u64));
            let free = free_coefficients(&data, &eigs)?;
            let closed = free_state_at(&free, config.horizon);
            let stepped = simulate_oracle(config, &data, &ControlSignal::zero(horizon.clone()), steps)?;
            Ok(relative(stepped.final_state().difference(&closed).measurement_norm(), closed.measurement_norm()))
        })
        .collect::<Result<_>>()?;

    // Gram pairs at random horizons: the closed form must hold for any T, not just the configured one.
    let gram_trials = 2 * trials;
    let gram: Vec<f64> = (0..gram_trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7_000_000 + i as u64));
            let a = &kernels[rng.gen_range(0..kernels.len())];
            let b = &kernels[rng.gen_range(0..kernels.len())];
            let t: f64 = rng.gen_range(0.25..2.0);
            let closed = gram_entry(a, b, &Float::with_val(prec, t)).to_f64();
            let quad =
                quadrature::double_exponential::integrate(|s| a.eval_f64(s, t) * b.eval_f64(s, t), 0.0, t, 1e-15)
                    .integral;
            relative((closed - quad).abs(), closed.abs())
        })
        .collect();

    let worst = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(CrosscheckReport {
        trials,
        duhamel_vs_oracle: worst(&forced),
        gram_vs_quadrature: worst(&gram),
        free_vs_oracle: worst(&free_dev),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Boundary;
    use crate::modal::mode1_fixture;

    fn dirichlet(rho: &str, n: usize) -> BeamConfig {
        BeamConfig::dirichlet(rho, n, 1.0).unwrap()
    }

    #[test]
    fn mode_one_is_controlled() {
        let r = null_control_experiment(&dirichlet("1", 4), &mode1_fixture(Boundary::Dirichlet, 4), &ExperimentOptions::default())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Controlled, "{r:?}");
        assert!(r.final_relative < 1e-20);
        assert!(r.oracle_final_relative.unwrap() <= 1e-6);
        assert!(r.oracle_deviation.unwrap() <= 1e-6);
        assert!(r.spillover_relative > 0.0 && r.spillover_relative.is_finite());
    }

    #[test]
    fn zero_data_needs_no_control() {
        let r = null_control_experiment(&dirichlet("1", 3), &ModalState::zeros(Boundary::Dirichlet, 3), &ExperimentOptions::default())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Controlled);
        assert_eq!(r.control_cost, 0.0);
        assert_eq!(r.spillover_relative, 0.0);
    }

    #[test]
    fn collided_modes_are_uncontrollable() {
        let s = ModalState::from_triples(Boundary::Dirichlet, 4, &[(1, 1.0, 0.0), (2, 0.5, 0.2)]).unwrap();
        let r = null_control_experiment(&dirichlet("2.5", 4), &s, &ExperimentOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Uncontrollable);
        assert_eq!(r.cause_kind.as_deref(), Some("ResonanceDefect"));
    }

    #[test]
    fn neumann_even_modes_are_screened() {
        let c = BeamConfig::neumann("1", 4, 1.0).unwrap();
        let s = ModalState::from_triples(Boundary::Neumann, 4, &[(1, 1.0, 0.0), (2, 0.1, 0.0)]).unwrap();
        let r = null_control_experiment(&c, &s, &ExperimentOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Uncontrollable);
        assert_eq!(r.cause_kind.as_deref(), Some("UncontrollableMode"));
    }

    #[test]
    fn bad_config_is_an_error() {
        let mut c = dirichlet("1", 2);
        c.horizon = -1.0;
        assert!(null_control_experiment(&c, &mode1_fixture(Boundary::Dirichlet, 2), &ExperimentOptions::default()).is_err());
    }

    #[test]
    fn residual_too_large_when_tolerance_is_unreachable() {
        let opts = ExperimentOptions { tolerance: 0.0, ..Default::default() };
        let r = null_control_experiment(&dirichlet("1", 2), &mode1_fixture(Boundary::Dirichlet, 2), &opts).unwrap();
        assert_eq!(r.verdict, Verdict::ResidualTooLarge);
    }

    #[test]
    fn sweep_order_and_csv() {
        let opts = ExperimentOptions::default();
        let sw = cost_sweep(&dirichlet("1", 2), &mode1_fixture(Boundary::Dirichlet, 2), &[2.0, 0.5, 1.0], &opts).unwrap();
        assert_eq!(sw.points.iter().map(|p| p.horizon).collect::<Vec<_>>(), vec![2.0, 0.5, 1.0]);
        assert!(sw.monotone);
        assert!(sw.fit.unwrap().slope > 0.0);
        let mut buf = Vec::new();
        sw.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("T,cost,residual,verdict\n2,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn zero_sweep_skips_fit() {
        let sw = cost_sweep(&dirichlet("1", 2), &ModalState::zeros(Boundary::Dirichlet, 2), &[0.5, 1.0], &ExperimentOptions::default())
            .unwrap();
        assert!(sw.points.iter().all(|p| p.cost == Some(0.0)));
        assert!(sw.fit.is_none());
    }

    #[test]
    fn crosscheck_small() {
        for rho in ["1", "2", "3"] {
            let rep = crosscheck_suite(&dirichlet(rho, 3), 4, 11).unwrap();
            assert!(rep.worst() < 1e-6, "rho={rho} {rep:?}");
        }
    }

    #[test]
    fn json_lines_are_deterministic() {
        let run = || {
            let r = null_control_experiment(&dirichlet("1", 2), &mode1_fixture(Boundary::Dirichlet, 2), &ExperimentOptions::default())
                .unwrap();
            let mut buf = Vec::new();
            write_experiments(&mut buf, &[r]).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.lines().count(), 1);
        assert!(a.contains("\"verdict\":\"Controlled\""));
    }
}
