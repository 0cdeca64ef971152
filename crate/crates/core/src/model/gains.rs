use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{informed_allocation, uniform_allocation, DistributionSpec, School};
use crate::error::{domain, Error, Result};
use crate::rng::substream;

/// Slack allowed when asserting that the informed plan weakly dominates the
/// uniform plan on a single draw.
pub const PATHWISE_TOLERANCE: f64 = 1e-12;

/// Per-school average gains on one draw of compatibilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawGain {
    /// `Σ s_i·Δ / N` under the uniform plan.
    pub centralized: f64,
    /// `Σ s_i·Δl_i / N` under the informed plan.
    pub decentralized: f64,
}

impl DrawGain {
    pub fn gain(&self) -> f64 {
        self.decentralized - self.centralized
    }
}

/// Monte Carlo estimate of the expected gains under both regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    /// Expected per-school gain under centralization.
    pub delta_centralized: f64,
    /// Expected per-school gain under the informed allocation.
    pub rho_decentralized: f64,
    /// `rho_decentralized - delta_centralized`.
    pub lambda_gain: f64,
    pub n_draws: usize,
    /// Monte Carlo standard error of `lambda_gain`.
    pub standard_error: f64,
    /// Smallest per-draw gain observed.
    pub min_draw_gain: f64,
    /// Share of draws on which the informed plan strictly beats the uniform one.
    pub strict_share: f64,
}

impl GainReport {
    pub fn from_draws(draws: &[DrawGain]) -> Result<Self> {
        if draws.is_empty() {
            return Err(domain("gain report needs at least one draw"));
        }
        let n = draws.len() as f64;
        let delta = draws.iter().map(|d| d.centralized).sum::<f64>() / n;
        let rho = draws.iter().map(|d| d.decentralized).sum::<f64>() / n;
        let lambda_gain = rho - delta;
        let mean_gain = draws.iter().map(DrawGain::gain).sum::<f64>() / n;
        let standard_error = if draws.len() > 1 {
            let ss: f64 = draws.iter().map(|d| (d.gain() - mean_gain).powi(2)).sum();
            (ss / (n - 1.0)).sqrt() / n.sqrt()
        } else {
            0.0
        };
        let min_draw_gain = draws
            .iter()
            .map(DrawGain::gain)
            .fold(f64::INFINITY, f64::min);
        let strict = draws
            .iter()
            .filter(|d| d.gain() > PATHWISE_TOLERANCE)
            .count();
        Ok(GainReport {
            delta_centralized: delta,
            rho_decentralized: rho,
            lambda_gain,
            n_draws: draws.len(),
            standard_error,
            min_draw_gain,
            strict_share: strict as f64 / n,
        })
    }
}

/// Realized gains on `n_draws` independent draws of `n_schools`
/// compatibilities. Draw `d` uses substream `(seed, d)`, so the output does
/// not depend on the thread count.
pub fn draw_gains(
    s_distribution: &DistributionSpec,
    n_schools: usize,
    per_school_budget: f64,
    cap: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<DrawGain>> {
    s_distribution.validate()?;
    if n_draws == 0 {
        return Err(domain("n_draws must be at least 1"));
    }
    if n_schools == 0 {
        return Err(domain("n_schools must be at least 1"));
    }
    let uniform = uniform_allocation(n_schools, per_school_budget)?;
    (0..n_draws)
        .into_par_iter()
        .map(|draw| {
            let mut rng = substream(seed, draw as u64);
            let schools: Vec<School> = (0..n_schools)
                .map(|i| School::with_compatibility(i as u64, s_distribution.sample(&mut rng)))
                .collect();
            let informed = informed_allocation(&schools, per_school_budget, cap)?;
            let n = n_schools as f64;
            let gain = DrawGain {
                centralized: uniform.objective(&schools) / n,
                decentralized: informed.objective(&schools) / n,
            };
            if gain.decentralized < gain.centralized - PATHWISE_TOLERANCE {
                return Err(Error::Invariant(format!(
                    "draw {draw}: informed gain {} below uniform gain {}",
                    gain.decentralized, gain.centralized
                )));
            }
            Ok(gain)
        })
        .collect()
}

/// Expected centralized and decentralized gains, estimated over `n_draws`
/// seeded draws.
pub fn expected_gains(
    s_distribution: &DistributionSpec,
    n_schools: usize,
    per_school_budget: f64,
    cap: f64,
    n_draws: usize,
    seed: u64,
) -> Result<GainReport> {
    let draws = draw_gains(
        s_distribution,
        n_schools,
        per_school_budget,
        cap,
        n_draws,
        seed,
    )?;
    GainReport::from_draws(&draws)
}
