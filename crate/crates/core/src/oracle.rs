//! Independent time-stepping check of the closed forms.
//!
//! Fixed-step classical RK4 on the modal system in `f64`. The state carries
//! `f` and `f'` alongside the modes so that nothing here depends on the
//! closed-form antiderivatives; the only shared input is `f''` itself,
//! sampled on the half-step grid at working precision.

use std::io::Write;

use rug::Float;
use serde::Serialize;

use crate::config::{BeamConfig, Boundary};
use crate::control::ControlSignal;
use crate::error::{BeamError, Result};
use crate::modal::ModalState;
use crate::spectrum::boundary_trace_coefficients;

/// Growth beyond this multiple of the a-priori scale counts as blow-up.
pub const INSTABILITY_FACTOR: f64 = 1e6;

/// Target for `h * max|lambda|`; keeps the global RK4 error well below 1e-6.
pub const STIFFNESS_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ModalState>,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &ModalState {
        self.states.last().expect("trajectory always records the initial state")
    }

    /// CSV with columns `t, n, value, velocity`; the Neumann constant mode is `n = 0`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = crate::io::csv_writer(out);
        w.write_record(["t", "n", "value", "velocity"])?;
        for (t, s) in self.times.iter().zip(&self.states) {
            if let Some((v, dv)) = s.zero_mode {
                w.serialize((t, 0usize, v, dv))?;
            }
            for n in 1..=s.n_modes() {
                w.serialize((t, n, s.value(n), s.velocity(n)))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest `|lambda_n^{+-}|` over modes `1..=n_modes`.
pub fn stiffest_rate(rho: f64, n_modes: usize) -> f64 {
    let n2 = (n_modes * n_modes) as f64;
    if rho <= 2.0 {
        n2
    } else {
        n2 * (rho + (rho * rho - 4.0).sqrt()) / 2.0
    }
}

/// Default step count: at least `20 N^2 T`, raised until `h max|lambda| <= 1e-3`.
pub fn oracle_steps(rho: f64, n_modes: usize, horizon: f64) -> usize {
    let guidance = (20.0 * (n_modes * n_modes) as f64 * horizon).ceil();
    let stiff = (stiffest_rate(rho, n_modes) * horizon / STIFFNESS_STEP).ceil();
    guidance.max(stiff).max(1.0) as usize
}

/// Integrates from `state0` over `[0, T]` in `steps` RK4 steps, recording
/// roughly a thousand evenly spaced states plus the endpoints.
pub fn simulate_oracle(
    config: &BeamConfig,
    state0: &ModalState,
    control: &ControlSignal,
    steps: usize,
) -> Result<Trajectory> {
    simulate_oracle_sampled(config, state0, control, steps, (steps / 1000).max(1))
}

pub fn simulate_oracle_sampled(
    config: &BeamConfig,
    state0: &ModalState,
    control: &ControlSignal,
    steps: usize,
    record_every: usize,
) -> Result<Trajectory> {
    config.validate()?;
    if steps == 0 {
        return Err(BeamError::domain("oracle needs at least one step"));
    }
    if state0.boundary != config.boundary {
        return Err(BeamError::domain("initial state and configuration disagree on the boundary type"));
    }
    let n_modes = state0.n_modes();
    let horizon = config.horizon;
    let rho = config.rho.to_f64();
    let h = horizon / steps as f64;

    let traces = boundary_trace_coefficients(config.boundary, n_modes, 64);
    let x: Vec<f64> = traces.coefficients.iter().map(|v| v.to_f64()).collect();
    let x0 = traces.zero_mode.as_ref().map_or(0.0, |v| v.to_f64());

    let forcing = sample_forcing(control, horizon, steps);
    let forcing_max = forcing.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let sys = ModalSystem::new(rho, x, x0, config.boundary == Boundary::Neumann);
    let mut y = sys.initial(state0);
    let x_norm = sys.x.iter().map(|v| v * v).sum::<f64>().sqrt() + x0.abs();
    let scale = l2(&y).max((1.0 + horizon) * horizon * forcing_max * x_norm).max(f64::MIN_POSITIVE);

    let record_every = record_every.max(1);
    let mut times = vec![0.0];
    let mut states = vec![sys.physical(&y)];
    let mut k = [vec![0.0; y.len()], vec![0.0; y.len()], vec![0.0; y.len()], vec![0.0; y.len()]];
    let mut tmp = vec![0.0; y.len()];
    // compensated accumulation: the lifted remainder can sit far above the physical state
    let mut carry = vec![0.0; y.len()];
    for step in 0..steps {
        let (g0, g1, g2) = (forcing[2 * step], forcing[2 * step + 1], forcing[2 * step + 2]);
        sys.rhs(&y, g0, &mut k[0]);
        axpy(&y, 0.5 * h, &k[0], &mut tmp);
        sys.rhs(&tmp, g1, &mut k[1]);
        axpy(&y, 0.5 * h, &k[1], &mut tmp);
        sys.rhs(&tmp, g1, &mut k[2]);
        axpy(&y, h, &k[2], &mut tmp);
        sys.rhs(&tmp, g2, &mut k[3]);
        for i in 0..y.len() {
            let inc = h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]) - carry[i];
            let next = y[i] + inc;
            carry[i] = (next - y[i]) - inc;
            y[i] = next;
        }
        let norm = l2(&y);
        if !norm.is_finite() || norm > INSTABILITY_FACTOR * scale {
            return Err(BeamError::OracleInstability { step: step + 1, norm });
        }
        if (step + 1) % record_every == 0 || step + 1 == steps {
            times.push(if step + 1 == steps { horizon } else { (step + 1) as f64 * h });
            states.push(sys.physical(&y));
        }
    }
    Ok(Trajectory { times, states, steps })
}

/// `f''` on the grid `k h / 2`, `k = 0..=2 steps`.
fn sample_forcing(control: &ControlSignal, horizon: f64, steps: usize) -> Vec<f64> {
    if control.is_zero() {
        return vec![0.0; 2 * steps + 1];
    }
    let p = control.prec();
    let half = Float::with_val(p, Float::with_val(p, horizon) / (2 * steps) as u64);
    control
        .second_derivative()
        .fold_conjugates()
        .sample_uniform(&half, 2 * steps + 1)
        .iter()
        .map(|v| v.to_f64())
        .collect()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn axpy(y: &[f64], a: f64, k: &[f64], out: &mut [f64]) {
    for i in 0..y.len() {
        out[i] = y[i] + a * k[i];
    }
}

/// Layout: `[a_1..a_N, a'_1..a'_N, a_0, a'_0, f, f']`.
struct ModalSystem {
    damping: Vec<f64>,
    stiffness: Vec<f64>,
    x: Vec<f64>,
    x0: f64,
    neumann: bool,
}

impl ModalSystem {
    fn new(rho: f64, x: Vec<f64>, x0: f64, neumann: bool) -> Self {
        let n2: Vec<f64> = (1..=x.len()).map(|n| (n * n) as f64).collect();
        ModalSystem {
            damping: n2.iter().map(|v| rho * v).collect(),
            stiffness: n2.iter().map(|v| v * v).collect(),
            x,
            x0,
            neumann,
        }
    }

    fn n(&self) -> usize {
        self.x.len()
    }

    fn initial(&self, s: &ModalState) -> Vec<f64> {
        // f(0) = f'(0) = 0, so the lifted remainder starts at the data itself
        let mut y = Vec::with_capacity(2 * self.n() + 4);
        y.extend_from_slice(&s.values);
        y.extend_from_slice(&s.velocities);
        let (z0, z1) = s.zero_mode.unwrap_or((0.0, 0.0));
        y.extend_from_slice(&[z0, z1, 0.0, 0.0]);
        y
    }

    fn rhs(&self, y: &[f64], forcing: f64, dy: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let a = y[i];
            let da = y[n + i];
            dy[i] = da;
            dy[n + i] = -self.damping[i] * da - self.stiffness[i] * a - self.x[i] * forcing;
        }
        dy[2 * n] = y[2 * n + 1];
        dy[2 * n + 1] = -self.x0 * forcing;
        dy[2 * n + 2] = y[2 * n + 3];
        dy[2 * n + 3] = forcing;
    }

    fn physical(&self, y: &[f64]) -> ModalState {
        let n = self.n();
        let (f, df) = (y[2 * n + 2], y[2 * n + 3]);
        ModalState {
            boundary: if self.neumann { Boundary::Neumann } else { Boundary::Dirichlet },
            values: (0..n).map(|i| y[i] + self.x[i] * f).collect(),
            velocities: (0..n).map(|i| y[n + i] + self.x[i] * df).collect(),
            zero_mode: self.neumann.then(|| (y[2 * n] + self.x0 * f, y[2 * n + 1] + self.x0 * df)),
        }
    }
}
