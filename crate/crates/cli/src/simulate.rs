//! Repeated Monte Carlo runs of scenarios, aggregated as mean and standard
//! deviation across repeats.

use std::path::{Path, PathBuf};

use attribution_core::equilibrium::{solve_lcm_equilibrium, verify_lcm_ne_quadrature};
use attribution_core::ingest::{FitBundle, FittedDist};
use attribution_core::mech::compute_priors;
use attribution_core::metrics::evaluate;
use attribution_core::numeric::Moments;
use attribution_core::sim::repeat_seed;
use attribution_core::{Error, MetricEstimate};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, MechKind, OutputFormat};
use crate::error::{CliError, Result};
use crate::scenario::{build_mechanism, resolve, Scenario};

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub mechanism: String,
    pub n: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: MetricEstimate,
    pub fairness: MetricEstimate,
    pub total_credit: f64,
    pub argmax_ties: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation across repeats (0 for a single repeat).
    pub std: f64,
    /// Mean of the per-repeat Monte Carlo standard errors.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub scenario: String,
    pub mechanism: MechKind,
    pub n: usize,
    pub delays: Vec<f64>,
    /// Whether the delays passed the LCM deviation certificate (LCM only).
    pub equilibrium_verified: Option<bool>,
    pub priors: Vec<f64>,
    pub accuracy: Summary,
    pub fairness: Summary,
    pub repeats: Vec<RepeatRecord>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub runs: Vec<RunRecord>,
}

fn summarize(xs: impl Iterator<Item = MetricEstimate>) -> Summary {
    let mut m = Moments::new();
    let mut se = Moments::new();
    for x in xs {
        m.push(x.value);
        se.push(x.stderr);
    }
    let std = if m.count() > 1 { m.var_sample().sqrt() } else { 0.0 };
    Summary { mean: m.mean(), std, stderr: se.mean() }
}

/// Delays the mechanism is simulated at: truthful for the DSIC mechanisms,
/// a certified equilibrium for LCM.
pub fn equilibrium_delays(kind: MechKind, s: &Scenario) -> Result<(Vec<f64>, Option<bool>)> {
    let n = s.profile.n();
    if kind != MechKind::Lcm {
        return Ok((vec![0.0; n], None));
    }
    match &s.lcm_delays {
        Some(d) => {
            let check = verify_lcm_ne_quadrature(&s.profile, d)?;
            if !check.verified {
                return Err(CliError::Core(Error::NoEquilibrium(format!(
                    "scenario {}: delays {d:?} admit a deviation gaining {:.3e} at {:?}",
                    s.name, check.max_gain, check.worst
                ))));
            }
            Ok((d.clone(), Some(true)))
        }
        None => {
            let eq = solve_lcm_equilibrium(&s.profile).map_err(|e| match e {
                Error::NoEquilibrium(msg) => Error::NoEquilibrium(format!("scenario {}: {msg}", s.name)),
                other => other,
            })?;
            Ok((eq.delays, Some(eq.verified)))
        }
    }
}

pub fn run_scenario(s: &Scenario, n_samples: usize, repeats: usize, seed: u64) -> Result<Vec<RunRecord>> {
    let priors = compute_priors(&s.profile)?;
    let mut runs = Vec::new();
    for &kind in &s.mechanisms {
        let mech = build_mechanism(kind, &s.profile)?;
        let (delays, verified) = equilibrium_delays(kind, s)?;
        log::info!("{} / {}: delays {:?}", s.name, kind.as_str(), delays);
        let reps: Vec<RepeatRecord> = (0..repeats)
            .into_par_iter()
            .map(|r| {
                let rs = repeat_seed(seed, r);
                let ev = evaluate(mech.as_ref(), &s.profile, &priors, &delays, n_samples, rs)?;
                Ok(RepeatRecord {
                    repeat: r,
                    seed: rs,
                    accuracy: ev.accuracy,
                    fairness: ev.fairness,
                    total_credit: ev.total_credit.0,
                    argmax_ties: ev.argmax_ties,
                })
            })
            .collect::<Result<_>>()?;
        runs.push(RunRecord {
            scenario: s.name.clone(),
            mechanism: kind,
            n: s.profile.n(),
            delays,
            equilibrium_verified: verified,
            priors: priors.clone(),
            accuracy: summarize(reps.iter().map(|r| r.accuracy)),
            fairness: summarize(reps.iter().map(|r| r.fairness)),
            repeats: reps,
        });
    }
    Ok(runs)
}

pub fn rows_of(run: &RunRecord, n_samples: usize, seed: u64) -> Vec<ResultRow> {
    let row = |metric: &str, mean: f64, std: f64| ResultRow {
        scenario: run.scenario.clone(),
        mechanism: run.mechanism.as_str().to_string(),
        n: run.n,
        metric: metric.to_string(),
        mean,
        std,
        n_samples,
        seed,
    };
    let se = |xs: Vec<f64>| {
        let mut m = Moments::new();
        xs.into_iter().for_each(|x| m.push(x));
        if m.count() > 1 {
            m.var_sample().sqrt()
        } else {
            0.0
        }
    };
    vec![
        row("accuracy", run.accuracy.mean, run.accuracy.std),
        row("accuracy_stderr", run.accuracy.stderr, se(run.repeats.iter().map(|r| r.accuracy.stderr).collect())),
        row("fairness", run.fairness.mean, run.fairness.std),
        row("fairness_stderr", run.fairness.stderr, se(run.repeats.iter().map(|r| r.fairness.stderr).collect())),
    ]
}

pub fn load_fits(bundle: Option<&Path>) -> Result<Vec<FittedDist>> {
    match bundle {
        Some(p) => Ok(FitBundle::load(p)?.into_fits()?),
        None => Ok(Vec::new()),
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let fits = load_fits(cfg.bundle.as_deref())?;
    let mut scenarios = Vec::new();
    for r in cfg.scenario.clone().into_vec() {
        scenarios.extend(resolve(&r, &fits)?);
    }
    let mut runs = Vec::new();
    for s in &scenarios {
        runs.extend(run_scenario(s, cfg.n_samples, cfg.repeats, cfg.seed)?);
    }
    let rows = runs.iter().flat_map(|r| rows_of(r, cfg.n_samples, cfg.seed)).collect();
    Ok(SimulationReport { config: cfg.clone(), rows, runs })
}

#[derive(Serialize)]
struct Metadata {
    generated_unix: u64,
    version: &'static str,
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    metadata: Metadata,
    #[serde(flatten)]
    report: &'a SimulationReport,
}

/// Writes `results.csv` or `results.json` into `dir`. The JSON's `metadata`
/// field holds the only run-dependent content (the timestamp).
pub fn write_report(report: &SimulationReport, dir: &Path, format: OutputFormat) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    match format {
        OutputFormat::Csv => {
            let path = dir.join("results.csv");
            let mut w = csv::Writer::from_path(&path)?;
            for r in &report.rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(path)
        }
        OutputFormat::Json => {
            let path = dir.join("results.json");
            let generated_unix = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            let doc = JsonDoc { metadata: Metadata { generated_unix, version: env!("CARGO_PKG_VERSION") }, report };
            std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
            Ok(path)
        }
    }
}

pub fn render(report: &SimulationReport) -> String {
    let mut s = format!("{:<24} {:<5} {:>2} {:>18} {:>18}\n", "scenario", "mech", "n", "accuracy", "fairness");
    for r in &report.runs {
        s.push_str(&format!(
            "{:<24} {:<5} {:>2} {:>9.4} ± {:<6.4} {:>9.4} ± {:<6.4}\n",
            r.scenario,
            r.mechanism.as_str(),
            r.n,
            r.accuracy.mean,
            r.accuracy.std,
            r.fairness.mean,
            r.fairness.std
        ));
    }
    s
}
