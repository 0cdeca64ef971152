//! Replication harness for the estimator and the allocation model.
//!
//! Replication `r` of a run with base seed `b` generates its panel with seed
//! `derive_seed(b, r)`. Replications run in parallel, are collected in index
//! order and aggregated sequentially, so every summary is bit-identical for
//! any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dgp::{generate_panel, true_att_for, DgpConfig};
use crate::did::placebo_pretrend;
use crate::error::{domain, Error, Result};
use crate::estimator::{fit, RegressionSpec, TREATMENT_TERM};
use crate::model::{expected_gains, DistributionSpec, GainReport, PATHWISE_TOLERANCE};
use crate::rng::derive_seed;

/// Two-sided 5% normal critical value.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// Keep per-replication records in the result.
    pub keep_replications: bool,
    /// Coefficient tracked across replications.
    pub target_term: String,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            threads: None,
            keep_replications: false,
            target_term: TREATMENT_TERM.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub covers: bool,
    pub rejects: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub n_reps: usize,
    pub true_att: f64,
    pub mean_estimate: f64,
    /// `mean_estimate − true_att`.
    pub bias: f64,
    pub rmse: f64,
    /// Share of 95% normal intervals containing the truth.
    pub ci_coverage_95: f64,
    /// Share of replications rejecting the true null at 5%.
    pub rejection_rate_5pct: f64,
    pub mean_se: f64,
    /// Sample standard deviation of the estimates (zero for one replication).
    pub sd_estimates: f64,
    /// `sd_estimates / √n_reps`.
    pub mc_se_of_mean: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub replications: Vec<Replication>,
}

impl McResult {
    /// Aggregates replications in the order given.
    pub fn from_replications(true_att: f64, reps: Vec<Replication>, keep: bool) -> Result<Self> {
        if reps.is_empty() {
            return Err(domain("no replications to aggregate"));
        }
        let n = reps.len() as f64;
        let mean_estimate = reps.iter().map(|r| r.estimate).sum::<f64>() / n;
        let bias = mean_estimate - true_att;
        let sd_estimates = if reps.len() > 1 {
            let ss: f64 = reps
                .iter()
                .map(|r| (r.estimate - mean_estimate).powi(2))
                .sum();
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let mse = reps
            .iter()
            .map(|r| (r.estimate - true_att).powi(2))
            .sum::<f64>()
            / n;
        Ok(McResult {
            n_reps: reps.len(),
            true_att,
            mean_estimate,
            bias,
            rmse: mse.sqrt(),
            ci_coverage_95: reps.iter().filter(|r| r.covers).count() as f64 / n,
            rejection_rate_5pct: reps.iter().filter(|r| r.rejects).count() as f64 / n,
            mean_se: reps.iter().map(|r| r.std_error).sum::<f64>() / n,
            sd_estimates,
            mc_se_of_mean: sd_estimates / n.sqrt(),
            replications: if keep { reps } else { Vec::new() },
        })
    }
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| domain(format!("cannot build a {n}-thread pool: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

fn replicate<T: Send>(
    config: &DgpConfig,
    n_reps: usize,
    base_seed: u64,
    threads: Option<usize>,
    one: impl Fn(&DgpConfig) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if n_reps == 0 {
        return Err(domain("n_reps must be at least 1"));
    }
    config.validate()?;
    in_pool(threads, || {
        (0..n_reps)
            .into_par_iter()
            .map(|index| {
                let seed = derive_seed(base_seed, index as u64);
                let cfg = DgpConfig {
                    seed,
                    ..config.clone()
                };
                one(&cfg).map_err(|e| Error::Replication {
                    index,
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    })?
}

pub fn run_mc(
    config: &DgpConfig,
    spec: &RegressionSpec,
    n_reps: usize,
    base_seed: u64,
) -> Result<McResult> {
    run_mc_with(config, spec, n_reps, base_seed, &McOptions::default())
}

/// Generates, fits and scores `n_reps` panels. The first failing
/// replication aborts the run with its index and seed.
pub fn run_mc_with(
    config: &DgpConfig,
    spec: &RegressionSpec,
    n_reps: usize,
    base_seed: u64,
    options: &McOptions,
) -> Result<McResult> {
    let truth = true_att_for(config, &spec.outcome);
    let reps = replicate(config, n_reps, base_seed, options.threads, |cfg| {
        let data = generate_panel(cfg)?;
        let f = fit(&data, spec)?;
        let c = f
            .coefficient(&options.target_term)
            .ok_or_else(|| domain(format!("fit has no `{}` coefficient", options.target_term)))?;
        let half_width = Z_975 * c.std_error;
        Ok(Replication {
            index: 0,
            seed: cfg.seed,
            estimate: c.estimate,
            std_error: c.std_error,
            covers: (c.estimate - truth).abs() <= half_width,
            rejects: (c.estimate - truth).abs() > half_width,
        })
    })?;
    let reps = reps
        .into_iter()
        .enumerate()
        .map(|(index, r)| Replication { index, ..r })
        .collect();
    McResult::from_replications(truth, reps, options.keep_replications)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboMcResult {
    pub n_reps: usize,
    /// Share of replications whose placebo estimate is significant at 5%.
    pub rejection_rate_5pct: f64,
    pub mean_estimate: f64,
    pub mean_se: f64,
}

/// Repeats [`placebo_pretrend`] on fresh panels; `config.n_periods` must be
/// at least 3.
pub fn run_placebo_mc(
    config: &DgpConfig,
    outcome: &str,
    n_reps: usize,
    base_seed: u64,
    options: &McOptions,
) -> Result<PlaceboMcResult> {
    let results = replicate(config, n_reps, base_seed, options.threads, |cfg| {
        placebo_pretrend(&generate_panel(cfg)?, outcome)
    })?;
    let n = results.len() as f64;
    Ok(PlaceboMcResult {
        n_reps: results.len(),
        rejection_rate_5pct: results.iter().filter(|r| r.p_value < 0.05).count() as f64 / n,
        mean_estimate: results.iter().map(|r| r.estimate).sum::<f64>() / n,
        mean_se: results.iter().map(|r| r.std_error).sum::<f64>() / n,
    })
}

/// One cell of an allocation-model grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCell {
    pub n_schools: usize,
    pub per_school_budget: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub cell: GainCell,
    pub report: GainReport,
}

/// Expected gains for every grid cell. All cells share `seed`, so cells
/// differing only in budget see the same compatibility draws.
pub fn run_model_mc(
    s_distribution: &DistributionSpec,
    grid: &[GainCell],
    n_draws: usize,
    seed: u64,
) -> Result<Vec<GainRow>> {
    if grid.is_empty() {
        return Err(domain("gain grid is empty"));
    }
    grid.iter()
        .map(|&cell| {
            let report = expected_gains(
                s_distribution,
                cell.n_schools,
                cell.per_school_budget,
                cell.cap,
                n_draws,
                seed,
            )?;
            if report.min_draw_gain < -PATHWISE_TOLERANCE {
                return Err(Error::Invariant(format!(
                    "pathwise dominance failed in cell {cell:?}: min gain {}",
                    report.min_draw_gain
                )));
            }
            Ok(GainRow { cell, report })
        })
        .collect()
}
