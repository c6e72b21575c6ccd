//! Run configuration: command-line flags, optionally overridden by a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use beamctl_core::config::{BeamConfig, Boundary, Damping, DEFAULT_PRECISION_BITS};
use beamctl_core::modal::{mode1_fixture, random_fixture, ModalState};
use clap::{Args, ValueEnum};
use serde::Deserialize;

pub const DEFAULT_OUT: &str = "beamctl-out";

/// Raised for anything wrong with the configuration itself; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Dirichlet,
    Neumann,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Dirichlet => Boundary::Dirichlet,
            BoundaryArg::Neumann => Boundary::Neumann,
        }
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// TOML run file; its values override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Damping coefficient, exact: `1`, `2.5`, `5/2`.
    #[arg(long)]
    pub rho: Option<String>,
    /// Spectral cutoff N.
    #[arg(long)]
    pub modes: Option<usize>,
    /// Control horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
    #[arg(long)]
    pub precision_bits: Option<u32>,
    /// Tikhonov weight on the Gram diagonal.
    #[arg(long)]
    pub regularization: Option<f64>,
    /// Seed for `--data random`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial data fixture: `mode1`, `random`, `random-seeded:<seed>`, or `zero`.
    #[arg(long)]
    pub data: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fail instead of raising precision when the Gram factorization breaks down.
    #[arg(long)]
    pub no_autoscale: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    beam: Option<BeamSection>,
    data: Option<DataSection>,
    output: Option<OutputSection>,
    synthesis: Option<SynthesisSection>,
    verify: Option<VerifySection>,
    sweep: Option<SweepSection>,
    condensation: Option<CondensationSection>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Number {
    Text(String),
    Float(f64),
    Int(i64),
}

impl Number {
    fn text(&self) -> String {
        match self {
            Number::Text(s) => s.clone(),
            Number::Float(v) => v.to_string(),
            Number::Int(v) => v.to_string(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct BeamSection {
    boundary: Option<BoundaryArg>,
    rho: Option<Number>,
    modes: Option<usize>,
    horizon: Option<f64>,
    precision_bits: Option<u32>,
    regularization: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataSection {
    fixture: Option<String>,
    seed: Option<u64>,
    /// `[mode, value, velocity]`; mode 0 is the Neumann constant mode.
    triples: Option<Vec<(usize, f64, f64)>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    directory: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthesisSection {
    autoscale: Option<bool>,
    samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    tolerance: Option<f64>,
    oracle_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    horizons: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CondensationSection {
    n_max: Option<usize>,
    tail_start: Option<usize>,
    ratio: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSpec {
    Fixture(String),
    Triples(Vec<(usize, f64, f64)>),
}

/// Everything a subcommand needs, after flags and file are merged.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub beam: BeamConfig,
    pub data: DataSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub autoscale: bool,
    pub samples: usize,
    pub tolerance: f64,
    pub oracle_steps: Option<usize>,
    pub horizons: Vec<f64>,
    pub n_max: usize,
    pub tail_start: usize,
    pub ratio: Option<String>,
}

/// Subcommand flags that may also come from the file.
#[derive(Clone, Debug, Default)]
pub struct Extras {
    pub tolerance: Option<f64>,
    pub oracle_steps: Option<usize>,
    pub horizons: Option<Vec<f64>>,
    pub n_max: Option<usize>,
    pub tail_start: Option<usize>,
    pub ratio: Option<String>,
    pub samples: Option<usize>,
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, extras: Extras) -> Result<RunConfig> {
        let file = match &args.config {
            Some(p) => read_file(p)?,
            None => FileConfig::default(),
        };
        let beam = file.beam.unwrap_or_default();
        let data = file.data.unwrap_or_default();
        let synth = file.synthesis.unwrap_or_default();
        let verify = file.verify.unwrap_or_default();
        let sweep = file.sweep.unwrap_or_default();
        let cond = file.condensation.unwrap_or_default();

        let rho_text = beam.rho.map(|n| n.text()).or_else(|| args.rho.clone()).unwrap_or_else(|| "1".into());
        let rho: Damping = rho_text.parse().map_err(|e| config_error(format!("rho: {e}")))?;
        let boundary: Boundary = beam.boundary.or(args.boundary).unwrap_or(BoundaryArg::Dirichlet).into();
        let n_modes = beam.modes.or(args.modes).unwrap_or(6);
        let horizon = beam.horizon.or(args.horizon).unwrap_or(1.0);
        let mut cfg = BeamConfig::new(boundary, rho, n_modes, horizon);
        cfg.precision_bits = beam.precision_bits.or(args.precision_bits).unwrap_or(DEFAULT_PRECISION_BITS);
        cfg.regularization = beam.regularization.or(args.regularization).unwrap_or(0.0);

        let data_spec = match (data.triples, data.fixture.or_else(|| args.data.clone())) {
            (Some(_), Some(_)) => bail!(config_error("[data] takes either fixture or triples, not both")),
            (Some(t), None) => DataSpec::Triples(t),
            (None, Some(f)) => DataSpec::Fixture(f),
            (None, None) => DataSpec::Fixture("mode1".into()),
        };
        let horizons = sweep.horizons.or(extras.horizons).unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0]);
        Ok(RunConfig {
            beam: cfg,
            data: data_spec,
            seed: data.seed.or(args.seed).unwrap_or(0),
            out_dir: file.output.and_then(|o| o.directory).or_else(|| args.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
            autoscale: synth.autoscale.unwrap_or(!args.no_autoscale),
            samples: synth.samples.or(extras.samples).unwrap_or(1001),
            tolerance: verify.tolerance.or(extras.tolerance).unwrap_or(beamctl_core::verification::DEFAULT_TOLERANCE),
            oracle_steps: verify.oracle_steps.or(extras.oracle_steps),
            horizons,
            n_max: cond.n_max.or(extras.n_max).unwrap_or(200),
            tail_start: cond.tail_start.or(extras.tail_start).unwrap_or(beamctl_core::condensation::DEFAULT_TAIL_START),
            ratio: cond.ratio.or(extras.ratio),
        })
    }

    /// Initial state over the configured cutoff.
    pub fn initial_state(&self) -> Result<ModalState> {
        let b = self.beam.boundary;
        let n = self.beam.n_modes;
        match &self.data {
            DataSpec::Triples(t) => ModalState::from_triples(b, n, t).map_err(|e| config_error(e.to_string())),
            DataSpec::Fixture(name) => match name.as_str() {
                "mode1" => Ok(mode1_fixture(b, n)),
                "zero" => Ok(ModalState::zeros(b, n)),
                "random" => Ok(random_fixture(b, n, self.seed)),
                other => match other.strip_prefix("random-seeded:") {
                    Some(seed) => {
                        let seed = seed.parse().map_err(|_| config_error(format!("bad seed in '{other}'")))?;
                        Ok(random_fixture(b, n, seed))
                    }
                    None => Err(config_error(format!(
                        "unknown data fixture '{other}' (expected mode1, zero, random, random-seeded:<seed>)"
                    ))),
                },
            },
        }
    }
}
