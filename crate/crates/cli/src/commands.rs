use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use beamctl_core::condensation::{condensation_estimate_from, liouville_fixture, parse_continued_fraction};
use beamctl_core::config::parse_rational;
use beamctl_core::error::BeamError;
use beamctl_core::io::{csv_writer, write_json};
use beamctl_core::spectrum::{branch_ratio, classify_damping, detect_collisions, gap_statistics, spectrum, BranchRatio, Regime};
use beamctl_core::synthesis::{synthesize, SynthesisOptions};
use beamctl_core::verification::{cost_sweep, null_control_experiment, write_experiments, ExperimentOptions, Verdict};
use serde::Serialize;

use crate::run_config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_UNCONTROLLABLE: u8 = 3;
pub const EXIT_NUMERICAL: u8 = 4;

/// Exit code for an error that escaped a command.
pub fn exit_code_for(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_CONFIG;
    }
    match err.downcast_ref::<BeamError>() {
        Some(e) => exit_code_for_kind(e.kind()),
        None => 1,
    }
}

fn exit_code_for_kind(kind: &str) -> u8 {
    match kind {
        "Domain" => EXIT_CONFIG,
        "UncontrollableMode" | "InadmissibleData" | "ResonanceDefect" | "RationalResonance" => EXIT_UNCONTROLLABLE,
        "NumericalRankDeficiency" | "OracleInstability" => EXIT_NUMERICAL,
        _ => 1,
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok((path, BufWriter::new(f)))
}

#[derive(Serialize)]
struct SpectrumReport {
    rho: String,
    boundary: String,
    n_modes: usize,
    regime: Regime,
    branch_ratio: Option<String>,
    collisions: Option<beamctl_core::spectrum::CollisionScan>,
    gaps: Option<beamctl_core::spectrum::GapStatistics>,
}

pub fn cmd_spectrum(rc: &RunConfig) -> Result<u8> {
    let cfg = &rc.beam;
    cfg.validate()?;
    let prec = cfg.precision_bits;
    let eigs = spectrum(&cfg.rho, cfg.n_modes, prec)?;
    let regime = classify_damping(&cfg.rho)?;
    prepare_out(&rc.out_dir)?;
    let (csv_path, out) = create(&rc.out_dir, "spectrum.csv")?;
    let mut w = csv_writer(out);
    w.write_record(["n", "regime", "lambda_plus_re", "lambda_plus_im", "lambda_minus_re", "lambda_minus_im"])?;
    for e in &eigs {
        let (pr, pi) = e.lambda_plus.to_f64_pair();
        let (mr, mi) = e.lambda_minus.to_f64_pair();
        w.write_record([
            e.n.to_string(),
            format!("{:?}", e.regime).to_lowercase(),
            pr.to_string(),
            pi.to_string(),
            mr.to_string(),
            mi.to_string(),
        ])?;
    }
    w.flush()?;

    let (ratio, collisions) = if regime == Regime::Underdamped {
        (None, None)
    } else {
        let r = branch_ratio(&cfg.rho, prec)?;
        let scan = detect_collisions(&r, cfg.n_modes).ok();
        (Some(r.to_string()), scan)
    };
    if let Some(scan) = &collisions {
        if scan.pairs.is_empty() {
            println!("collisions: none up to n = {}", cfg.n_modes);
        } else {
            let pairs: Vec<String> = scan.pairs.iter().map(|(m, n)| format!("lambda+_{m} = lambda-_{n}")).collect();
            println!("collisions: {}", pairs.join(", "));
        }
    }
    let report = SpectrumReport {
        rho: cfg.rho.to_string(),
        boundary: format!("{:?}", cfg.boundary).to_lowercase(),
        n_modes: cfg.n_modes,
        regime,
        branch_ratio: ratio,
        collisions,
        gaps: gap_statistics(&cfg.rho, cfg.n_modes, prec).ok(),
    };
    let json_path = rc.out_dir.join("spectrum.json");
    write_json(&json_path, &report)?;
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    status: &'a str,
    cause_kind: &'a str,
    cause: String,
    autoscale_trace: Option<Vec<u32>>,
}

fn failure_record(e: &BeamError) -> FailureRecord<'_> {
    FailureRecord {
        status: "failed",
        cause_kind: e.kind(),
        cause: e.to_string(),
        autoscale_trace: match e {
            BeamError::NumericalRankDeficiency { trace, .. } => Some(trace.clone()),
            _ => None,
        },
    }
}

fn synthesis_options(rc: &RunConfig) -> Result<SynthesisOptions> {
    let mut o = SynthesisOptions::from_env()?;
    o.autoscale = rc.autoscale;
    Ok(o)
}

#[derive(Serialize)]
struct SynthesisOutput {
    status: &'static str,
    report: beamctl_core::synthesis::SynthesisRecord,
    system: beamctl_core::moment::MomentSystemRecord,
}

pub fn cmd_synthesize(rc: &RunConfig) -> Result<u8> {
    rc.beam.validate()?;
    let state0 = rc.initial_state()?;
    let opts = synthesis_options(rc)?;
    prepare_out(&rc.out_dir)?;
    let json_path = rc.out_dir.join("synthesis.json");
    match synthesize(&rc.beam, &state0, &opts) {
        Ok(syn) => {
            let (csv_path, out) = create(&rc.out_dir, "control.csv")?;
            syn.report.control.write_csv(out, rc.samples)?;
            let output = SynthesisOutput { status: "ok", report: syn.report.record(), system: syn.system.record() };
            write_json(&json_path, &output)?;
            println!(
                "cost {:.6e}, residual {:.2e}, Gram condition {:.2e} at {} bits; wrote {} and {}",
                syn.report.control_cost,
                syn.report.residual_norm,
                syn.report.gram_condition,
                syn.report.precision_used,
                json_path.display(),
                csv_path.display()
            );
            Ok(EXIT_OK)
        }
        Err(e @ BeamError::Domain(_)) => Err(e.into()),
        Err(e) => {
            write_json(&json_path, &failure_record(&e))?;
            eprintln!("error: {e}");
            Ok(exit_code_for_kind(e.kind()))
        }
    }
}

pub fn cmd_verify(rc: &RunConfig) -> Result<u8> {
    rc.beam.validate()?;
    let state0 = rc.initial_state()?;
    let opts = ExperimentOptions {
        tolerance: rc.tolerance,
        synthesis: synthesis_options(rc)?,
        oracle: true,
        oracle_steps: rc.oracle_steps,
    };
    let result = null_control_experiment(&rc.beam, &state0, &opts)?;
    prepare_out(&rc.out_dir)?;
    let (path, out) = create(&rc.out_dir, "experiment.jsonl")?;
    write_experiments(out, std::slice::from_ref(&result))?;
    println!(
        "{:?}: final relative {:.2e} (closed form), {} (time-stepped); wrote {}",
        result.verdict,
        result.final_relative,
        result.oracle_final_relative.map_or("n/a".to_string(), |v| format!("{v:.2e}")),
        path.display()
    );
    Ok(match result.verdict {
        Verdict::Controlled => EXIT_OK,
        Verdict::ResidualTooLarge => EXIT_NUMERICAL,
        Verdict::Uncontrollable => {
            if let Some(c) = &result.cause {
                eprintln!("cause: {c}");
            }
            result.cause_kind.as_deref().map_or(EXIT_UNCONTROLLABLE, exit_code_for_kind)
        }
    })
}

/// `sqrt:D`, `liouville`, `cf:a0,a1,...` (golden tail), or an exact rational.
pub fn parse_ratio(text: &str, prec: u32) -> Result<BranchRatio> {
    let t = text.trim();
    if t == "liouville" {
        return Ok(liouville_fixture(prec));
    }
    if let Some(d) = t.strip_prefix("sqrt:") {
        let d: u64 = d.parse().map_err(|_| ConfigError(format!("bad ratio '{t}'")))?;
        return Ok(BranchRatio::sqrt_of(d, prec));
    }
    if let Some(list) = t.strip_prefix("cf:") {
        return parse_continued_fraction(list, prec).map_err(|e| ConfigError(e.to_string()).into());
    }
    match parse_rational(t) {
        Some(q) => Ok(BranchRatio::Rational(q)),
        None => Err(ConfigError(format!("bad ratio '{t}' (expected sqrt:D, liouville, cf:a0,a1,..., or p/q)")).into()),
    }
}

pub fn cmd_condensation(rc: &RunConfig) -> Result<u8> {
    rc.beam.validate()?;
    let prec = rc.beam.precision_bits;
    let ratio = match &rc.ratio {
        Some(t) => parse_ratio(t, prec)?,
        None => branch_ratio(&rc.beam.rho, prec)?,
    };
    let report = match condensation_estimate_from(&ratio, rc.n_max, rc.tail_start, prec) {
        Ok(r) => r,
        Err(e @ BeamError::RationalResonance(_)) => {
            prepare_out(&rc.out_dir)?;
            write_json(&rc.out_dir.join("condensation.json"), &failure_record(&e))?;
            eprintln!("error: {e}");
            return Ok(EXIT_UNCONTROLLABLE);
        }
        Err(e) => return Err(e.into()),
    };
    prepare_out(&rc.out_dir)?;
    let (csv_path, out) = create(&rc.out_dir, "condensation.csv")?;
    report.write_csv(out)?;
    let json_path = rc.out_dir.join("condensation.json");
    write_json(&json_path, &report.summary())?;
    println!(
        "r = {}: c estimate {:.6} over n = {}..{}; wrote {} and {}",
        report.r,
        report.c_estimate,
        report.tail_start,
        report.n_max,
        csv_path.display(),
        json_path.display()
    );
    Ok(EXIT_OK)
}

pub fn cmd_cost_sweep(rc: &RunConfig) -> Result<u8> {
    rc.beam.validate()?;
    let state0 = rc.initial_state()?;
    let opts = ExperimentOptions { tolerance: rc.tolerance, synthesis: synthesis_options(rc)?, oracle: false, oracle_steps: None };
    let sweep = cost_sweep(&rc.beam, &state0, &rc.horizons, &opts)?;
    prepare_out(&rc.out_dir)?;
    let (csv_path, out) = create(&rc.out_dir, "sweep.csv")?;
    sweep.write_csv(out)?;
    let json_path = rc.out_dir.join("sweep_fit.json");
    write_json(&json_path, &sweep)?;
    match &sweep.fit {
        Some(f) => println!(
            "ln cost = {:.4} + {:.4}/T (R^2 {:.4}), monotone {}; wrote {} and {}",
            f.intercept,
            f.slope,
            f.r_squared,
            sweep.monotone,
            csv_path.display(),
            json_path.display()
        ),
        None => println!("no fit (fewer than two positive costs); wrote {}", csv_path.display()),
    }
    let failed = sweep.points.iter().any(|p| p.verdict != Verdict::Controlled);
    Ok(if failed { EXIT_NUMERICAL } else { EXIT_OK })
}
