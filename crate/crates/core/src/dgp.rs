//! Synthetic pupil-level panels from the structural outcome equation.
//!
//! For pupil `j` in school `i` and period `t` the math score is
//!
//! ```text
//! h = θ0 + Z'θ1 + W'θ2 + γ_g·grade_high + γ_a·anglophone
//!     + α0·P + α1·dT + λ_ij·dT·P
//!     + a_i + b_it + ε1_it·(μ0 + μ1·dT + μ2·P + ε2_it) + ε0_ijt
//!     + gap·P·t·[t is a pre-period]
//! ```
//!
//! where `a_i` is a persistent school effect, `b_it` a school-period shock,
//! `(ε1, ε2)` school-period resource shocks and `ε0` pupil noise. The school
//! effect `λ_ij = base + d_i + κ·anglophone` combines the grade-specific
//! base effect, a school deviation `d_i ~ N(0, lambda_spread²)` and the
//! anglophone gap `κ`. The literacy score uses the same equation with its own
//! base effect and pupil noise.
//!
//! Resource shocks are independent except in public schools after the
//! policy, where the informed authority targets resources at unobserved
//! compatibility: there `corr(ε1, ε2) = selection_corr`. A nonzero value
//! therefore makes `E(ε1·ε2 | P, dT)` depend on `dT·P`, which is exactly what
//! biases the difference-in-differences estimate.
//!
//! Pupils are redrawn each period (repeated cross-section). The last period
//! is the only post-treatment one.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::panel::{PanelDataset, PanelRow};
use crate::rng::substream;

/// Stream offset separating municipality substreams from school substreams.
const MUNICIPALITY_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpConfig {
    pub n_municipalities: usize,
    pub schools_per_municipality: usize,
    /// Pupils sampled per school in each period.
    pub pupils_per_school: usize,
    pub n_periods: usize,
    /// Probability that a school is public (treated).
    pub share_public: f64,
    /// Probability that a municipality is anglophone.
    pub share_anglophone: f64,
    pub theta0: f64,
    /// Coefficients on age, girl, books, electricity.
    pub theta1: Vec<f64>,
    /// Coefficients on the school covariates; its length sets K.
    pub theta2: Vec<f64>,
    pub grade_high_effect: f64,
    pub anglophone_effect: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// Average effect on math scores in public schools.
    pub lambda0: f64,
    /// Average effect on literacy scores in public schools.
    pub lambda0_lit: f64,
    /// Replaces the base effect for grade-2 pupils, both outcomes.
    pub lambda0_grade2: Option<f64>,
    /// Added to the effect in anglophone public schools.
    pub anglophone_gap: f64,
    pub lambda_spread: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sd_eps0: f64,
    pub sd_eps1: f64,
    pub sd_eps2: f64,
    pub sd_school: f64,
    pub sd_school_period: f64,
    pub selection_corr: f64,
    /// Extra per-period trend of public schools before the policy.
    pub pretrend_gap: f64,
    pub seed: u64,
}

impl Default for DgpConfig {
    fn default() -> Self {
        DgpConfig {
            n_municipalities: 50,
            schools_per_municipality: 4,
            pupils_per_school: 15,
            n_periods: 2,
            share_public: 0.75,
            share_anglophone: 0.284,
            theta0: 50.0,
            theta1: vec![-0.5, -0.5, 3.0, 2.0],
            theta2: vec![1.0, -0.5],
            grade_high_effect: -7.5,
            anglophone_effect: 9.4,
            alpha0: -6.6,
            alpha1: -2.8,
            lambda0: 10.2,
            lambda0_lit: 15.39,
            lambda0_grade2: None,
            anglophone_gap: 0.0,
            lambda_spread: 2.0,
            mu0: 1.0,
            mu1: 0.5,
            mu2: 0.0,
            sd_eps0: 10.0,
            sd_eps1: 1.0,
            sd_eps2: 1.0,
            sd_school: 4.0,
            sd_school_period: 2.0,
            selection_corr: 0.0,
            pretrend_gap: 0.0,
            seed: 42,
        }
    }
}

impl DgpConfig {
    pub fn n_schools(&self) -> usize {
        self.n_municipalities * self.schools_per_municipality
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_municipalities == 0
            || self.schools_per_municipality == 0
            || self.pupils_per_school == 0
        {
            return Err(domain(
                "municipality, school and pupil counts must be at least 1",
            ));
        }
        if self.n_periods < 2 {
            return Err(domain(format!(
                "n_periods must be at least 2, got {}",
                self.n_periods
            )));
        }
        for (name, share) in [
            ("share_public", self.share_public),
            ("share_anglophone", self.share_anglophone),
        ] {
            if !(0.0..=1.0).contains(&share) {
                return Err(domain(format!("{name} must lie in [0, 1], got {share}")));
            }
        }
        if self.share_public == 0.0 || self.share_public == 1.0 {
            return Err(domain(format!(
                "degenerate design: share_public = {} leaves one treatment group empty",
                self.share_public
            )));
        }
        for (name, sd) in [
            ("lambda_spread", self.lambda_spread),
            ("sd_eps0", self.sd_eps0),
            ("sd_eps1", self.sd_eps1),
            ("sd_eps2", self.sd_eps2),
            ("sd_school", self.sd_school),
            ("sd_school_period", self.sd_school_period),
        ] {
            if !(sd.is_finite() && sd >= 0.0) {
                return Err(domain(format!(
                    "{name} must be finite and non-negative, got {sd}"
                )));
            }
        }
        if !(-1.0..=1.0).contains(&self.selection_corr) {
            return Err(domain(format!(
                "selection_corr must lie in [-1, 1], got {}",
                self.selection_corr
            )));
        }
        if self.theta1.len() != 4 {
            return Err(domain(format!(
                "theta1 needs 4 coefficients (age, girl, books, electricity), got {}",
                self.theta1.len()
            )));
        }
        let scalars = [
            self.theta0,
            self.grade_high_effect,
            self.anglophone_effect,
            self.alpha0,
            self.alpha1,
            self.lambda0,
            self.lambda0_lit,
            self.lambda0_grade2.unwrap_or(0.0),
            self.anglophone_gap,
            self.mu0,
            self.mu1,
            self.mu2,
            self.pretrend_gap,
        ];
        if scalars
            .iter()
            .chain(&self.theta1)
            .chain(&self.theta2)
            .any(|v| !v.is_finite())
        {
            return Err(domain("all coefficients must be finite"));
        }
        Ok(())
    }

    /// A configuration whose outcomes are exactly
    /// `θ0 + α0·P + α1·dT + λ0·dT·P`.
    pub fn noiseless(&self) -> DgpConfig {
        DgpConfig {
            theta1: vec![0.0; 4],
            theta2: vec![0.0; self.theta2.len()],
            grade_high_effect: 0.0,
            anglophone_effect: 0.0,
            lambda_spread: 0.0,
            mu0: 0.0,
            mu1: 0.0,
            mu2: 0.0,
            sd_eps0: 0.0,
            sd_eps1: 0.0,
            sd_eps2: 0.0,
            sd_school: 0.0,
            sd_school_period: 0.0,
            pretrend_gap: 0.0,
            ..self.clone()
        }
    }
}

/// The average treatment effect on the treated for math scores, `λ0`.
pub fn true_att(config: &DgpConfig) -> f64 {
    config.lambda0
}

/// The planted effect for a named outcome column.
pub fn true_att_for(config: &DgpConfig, outcome: &str) -> f64 {
    match outcome {
        "score_lit" => config.lambda0_lit,
        _ => config.lambda0,
    }
}

fn normal<R: Rng>(rng: &mut R, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sd * z
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Generates one dataset. School `i` draws from substream `(seed, i)` and
/// municipality `m` from its own stream, so generation is parallel and the
/// output is identical for any thread count.
pub fn generate_panel(config: &DgpConfig) -> Result<PanelDataset> {
    config.validate()?;
    let anglophone: Vec<bool> = (0..config.n_municipalities)
        .map(|m| {
            let mut rng = substream(config.seed, MUNICIPALITY_STREAM + m as u64);
            bernoulli(&mut rng, config.share_anglophone)
        })
        .collect();

    let per_school: Vec<Vec<PanelRow>> = (0..config.n_schools())
        .into_par_iter()
        .map(|school| generate_school(config, school, &anglophone))
        .collect();

    let n_public = per_school.iter().filter(|rows| rows[0].is_public).count();
    if n_public == 0 || n_public == per_school.len() {
        return Err(domain(format!(
            "degenerate design: {n_public} of {} schools drawn public; both groups are required",
            per_school.len()
        )));
    }
    PanelDataset::new(per_school.into_iter().flatten().collect())
}

fn generate_school(config: &DgpConfig, school: usize, anglophone: &[bool]) -> Vec<PanelRow> {
    let mut rng = substream(config.seed, school as u64);
    let municipality = school / config.schools_per_municipality;
    let is_anglophone = anglophone[municipality];
    let is_public = bernoulli(&mut rng, config.share_public);
    let p = flag(is_public);
    let school_effect = normal(&mut rng, config.sd_school);
    let effect_deviation = normal(&mut rng, config.lambda_spread);
    let last = config.n_periods - 1;
    let n_low = config.pupils_per_school / 2;

    let mut rows = Vec::with_capacity(config.n_periods * config.pupils_per_school);
    for period in 0..config.n_periods {
        let post = period == last;
        let dt = flag(post);
        let w: Vec<f64> = config
            .theta2
            .iter()
            .map(|_| normal(&mut rng, 1.0))
            .collect();
        let w_term: f64 = w.iter().zip(&config.theta2).map(|(x, b)| x * b).sum();
        let period_shock = normal(&mut rng, config.sd_school_period);

        let corr = if post && is_public {
            config.selection_corr
        } else {
            0.0
        };
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let eps1 = config.sd_eps1 * z1;
        let eps2 = config.sd_eps2 * (corr * z1 + (1.0 - corr * corr).sqrt() * z2);
        let resource_term = eps1 * (config.mu0 + config.mu1 * dt + config.mu2 * p + eps2);

        let pretrend = if post {
            0.0
        } else {
            config.pretrend_gap * p * period as f64
        };

        for j in 0..config.pupils_per_school {
            let grade_high = j >= n_low;
            let age = if grade_high {
                rng.random_range(10..=13)
            } else {
                rng.random_range(7..=9)
            } as f64;
            let girl = flag(bernoulli(&mut rng, 0.5));
            let books = flag(bernoulli(&mut rng, if is_public { 0.35 } else { 0.55 }));
            let electricity = flag(bernoulli(&mut rng, if is_public { 0.45 } else { 0.70 }));
            let noise_math = normal(&mut rng, config.sd_eps0);
            let noise_lit = normal(&mut rng, config.sd_eps0);

            let z_term = config.theta1[0] * age
                + config.theta1[1] * girl
                + config.theta1[2] * books
                + config.theta1[3] * electricity;
            let common = config.theta0
                + z_term
                + w_term
                + config.grade_high_effect * flag(grade_high)
                + config.anglophone_effect * flag(is_anglophone)
                + config.alpha0 * p
                + config.alpha1 * dt
                + school_effect
                + period_shock
                + resource_term
                + pretrend;
            let effect = |base: f64| {
                let base = match config.lambda0_grade2 {
                    Some(g2) if !grade_high => g2,
                    _ => base,
                };
                base + effect_deviation + config.anglophone_gap * flag(is_anglophone)
            };
            let treated = dt * p;

            rows.push(PanelRow {
                pupil_id: ((school * config.n_periods + period) * config.pupils_per_school + j)
                    as u64,
                school_id: school as u64,
                municipality_id: municipality as u64,
                period: period as u32,
                post,
                is_public,
                is_anglophone,
                grade_high,
                age,
                girl,
                books,
                electricity,
                w: w.clone(),
                score_math: common + effect(config.lambda0) * treated + noise_math,
                score_lit: common + effect(config.lambda0_lit) * treated + noise_lit,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DgpConfig {
        DgpConfig {
            n_municipalities: 10,
            ..DgpConfig::default()
        }
    }

    #[test]
    fn shape_and_ids() {
        let cfg = small();
        let ds = generate_panel(&cfg).unwrap();
        assert_eq!(ds.len(), 40 * 15 * 2);
        assert_eq!(ds.n_schools(), 40);
        assert_eq!(ds.n_w(), 2);
        assert_eq!(ds.periods().into_iter().collect::<Vec<_>>(), vec![0, 1]);
        assert!(ds.rows().iter().all(|r| r.post == (r.period == 1)));
        assert!(ds
            .rows()
            .iter()
            .all(|r| r.municipality_id == r.school_id / 4));
    }

    #[test]
    fn covariate_supports() {
        let ds = generate_panel(&small()).unwrap();
        for r in ds.rows() {
            if r.grade_high {
                assert!((10.0..=13.0).contains(&r.age));
            } else {
                assert!((7.0..=9.0).contains(&r.age));
            }
            for b in [r.girl, r.books, r.electricity] {
                assert!(b == 0.0 || b == 1.0);
            }
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            DgpConfig {
                share_public: 1.0,
                ..small()
            },
            DgpConfig {
                share_public: 0.0,
                ..small()
            },
            DgpConfig {
                share_anglophone: 1.5,
                ..small()
            },
            DgpConfig {
                sd_eps0: -1.0,
                ..small()
            },
            DgpConfig {
                selection_corr: 1.2,
                ..small()
            },
            DgpConfig {
                n_periods: 1,
                ..small()
            },
            DgpConfig {
                theta1: vec![1.0],
                ..small()
            },
            DgpConfig {
                pupils_per_school: 0,
                ..small()
            },
        ];
        for cfg in bad {
            assert!(generate_panel(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn degenerate_draw_is_rejected() {
        // One school: whichever group it lands in, the other is empty.
        let cfg = DgpConfig {
            n_municipalities: 1,
            schools_per_municipality: 1,
            ..DgpConfig::default()
        };
        let err = generate_panel(&cfg).unwrap_err();
        assert!(err.to_string().contains("degenerate design"));
    }

    #[test]
    fn true_att_is_lambda0() {
        for v in [10.2, 0.0, 15.39] {
            let cfg = DgpConfig {
                lambda0: v,
                ..DgpConfig::default()
            };
            assert_eq!(true_att(&cfg), v);
        }
        let cfg = DgpConfig::default();
        assert_eq!(true_att_for(&cfg, "score_lit"), 15.39);
        assert_eq!(true_att_for(&cfg, "score_math"), 10.2);
    }

    #[test]
    fn pupils_per_period_are_fresh() {
        let ds = generate_panel(&small()).unwrap();
        let ids: std::collections::HashSet<u64> = ds.rows().iter().map(|r| r.pupil_id).collect();
        assert_eq!(ids.len(), ds.len());
    }
}
