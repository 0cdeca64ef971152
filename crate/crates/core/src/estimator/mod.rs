//! Least squares with school fixed effects and cluster-robust inference.
//!
//! [`fit`] assembles the design from named dataset columns and interaction
//! products, optionally sweeps out fixed effects by within-group demeaning,
//! solves by Householder QR and attaches a CR1 cluster-robust covariance.

mod ols;
mod vcov;
mod within;

pub use ols::{
    solve_least_squares, solve_least_squares_named, xtx_inverse, LeastSquares, RANK_TOLERANCE,
};
pub use vcov::cluster_robust_vcov;
pub use within::{
    demean_by_group, within_transform, GroupIndex, WithinDesign, ABSORPTION_TOLERANCE,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{domain, Error, Result};
use crate::panel::PanelDataset;
use within::key_bits;

/// Name of the intercept column.
pub const INTERCEPT: &str = "const";

/// The difference-in-differences term `dT × P`.
pub const TREATMENT_TERM: &str = "post:public";

/// Which total sum of squares R² is measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RSquared {
    /// Demeaned outcome under fixed effects, centered outcome with an
    /// intercept, raw outcome otherwise.
    #[default]
    Within,
    /// Always the centered raw outcome; under fixed effects this equals the
    /// dummy-variable regression's R².
    Overall,
}

/// A linear specification over dataset columns.
///
/// A covariate written `a:b` is read as the interaction of `a` and `b`, the
/// same as listing `["a", "b"]` under `interactions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub outcome: String,
    pub covariates: Vec<String>,
    pub interactions: Vec<Vec<String>>,
    /// Column whose groups are swept out by demeaning.
    pub fixed_effect: Option<String>,
    pub cluster: String,
    pub include_intercept: bool,
    #[serde(default)]
    pub r_squared: RSquared,
}

impl RegressionSpec {
    /// `outcome ~ 1 + post + public + post:public`, clustered by school.
    pub fn saturated(outcome: &str) -> Self {
        RegressionSpec {
            outcome: outcome.to_string(),
            covariates: vec!["post".into(), "public".into()],
            interactions: vec![vec!["post".into(), "public".into()]],
            fixed_effect: None,
            cluster: "school_id".into(),
            include_intercept: true,
            r_squared: RSquared::Within,
        }
    }

    /// Regressors as lists of factors, in design order.
    pub fn terms(&self) -> Vec<Vec<String>> {
        self.covariates
            .iter()
            .map(|c| c.split(':').map(str::to_string).collect())
            .chain(self.interactions.iter().cloned())
            .collect()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms().iter().map(|t| t.join(":")).collect()
    }

    fn uses_treatment_interaction(&self) -> bool {
        self.terms()
            .iter()
            .any(|t| t.iter().any(|f| f == "post") && t.iter().any(|f| f == "public"))
    }

    pub fn validate(&self, dataset: &PanelDataset) -> Result<()> {
        let mut required = vec![self.outcome.as_str(), self.cluster.as_str()];
        if let Some(fe) = &self.fixed_effect {
            required.push(fe);
            if self.include_intercept {
                return Err(domain(
                    "a fixed-effect specification cannot also include an intercept; demeaning absorbs it",
                ));
            }
        }
        let terms = self.terms();
        for term in &terms {
            if term.is_empty() || term.iter().any(String::is_empty) {
                return Err(domain("empty term in specification"));
            }
        }
        if terms.is_empty() && !self.include_intercept {
            return Err(domain("specification has no regressors"));
        }
        for name in required
            .into_iter()
            .chain(terms.iter().flatten().map(String::as_str))
        {
            if !dataset.has_column(name) {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        Ok(())
    }

    /// Raw regressor columns (without intercept), named.
    pub(crate) fn term_columns(&self, dataset: &PanelDataset) -> Result<Vec<(String, Vec<f64>)>> {
        self.terms()
            .into_iter()
            .map(|t| Ok((t.join(":"), dataset.product_column(&t)?)))
            .collect()
    }
}

/// One estimated coefficient with its inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    /// Two-sided, normal approximation.
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub outcome: String,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    /// CR1 cluster-robust covariance.
    pub vcov: DMatrix<f64>,
    pub t_stats: Vec<f64>,
    pub r_squared: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub residuals: Vec<f64>,
    /// Terms swept out by the fixed effects.
    pub absorbed: Vec<String>,
    pub fixed_effect: Option<String>,
    /// Column defining the clusters.
    pub cluster: String,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn std_error(&self, j: usize) -> f64 {
        self.vcov[(j, j)].max(0.0).sqrt()
    }

    pub fn coefficient(&self, name: &str) -> Option<Coefficient> {
        self.index_of(name).map(|j| self.coefficient_at(j))
    }

    fn coefficient_at(&self, j: usize) -> Coefficient {
        Coefficient {
            name: self.names[j].clone(),
            estimate: self.estimates[j],
            std_error: self.std_error(j),
            t_stat: self.t_stats[j],
            p_value: p_value(self.t_stats[j]),
        }
    }

    pub fn coefficients(&self) -> Vec<Coefficient> {
        (0..self.names.len())
            .map(|j| self.coefficient_at(j))
            .collect()
    }

    /// The `post:public` coefficient.
    pub fn treatment(&self) -> Result<Coefficient> {
        self.coefficient(TREATMENT_TERM)
            .ok_or_else(|| domain(format!("fit has no `{TREATMENT_TERM}` coefficient")))
    }
}

/// Two-sided p-value of a t statistic under the normal approximation.
pub fn p_value(t: f64) -> f64 {
    if t.is_nan() {
        f64::NAN
    } else {
        erfc(t.abs() / std::f64::consts::SQRT_2)
    }
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Fits `spec` on `dataset` with CR1 standard errors clustered by
/// `spec.cluster`.
pub fn fit(dataset: &PanelDataset, spec: &RegressionSpec) -> Result<FitResult> {
    spec.validate(dataset)?;
    if dataset.is_empty() {
        return Err(domain("cannot fit an empty dataset"));
    }
    if spec.uses_treatment_interaction() {
        dataset.cell_counts().require_all()?;
    }
    let clusters: Vec<u64> = dataset
        .column(&spec.cluster)?
        .into_iter()
        .map(key_bits)
        .collect();
    let y_raw = dataset.column(&spec.outcome)?;
    let n = dataset.len();

    let (design, y, names, absorbed) = if spec.fixed_effect.is_some() {
        let w = within_transform(dataset, spec)?;
        (w.design, w.outcome, w.names, w.absorbed)
    } else {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        if spec.include_intercept {
            names.push(INTERCEPT.to_string());
            columns.push(vec![1.0; n]);
        }
        for (name, col) in spec.term_columns(dataset)? {
            names.push(name);
            columns.push(col);
        }
        let design = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
        (
            design,
            DVector::from_column_slice(&y_raw),
            names,
            Vec::new(),
        )
    };
    if names.is_empty() {
        return Err(domain(format!(
            "no estimable regressors remain; absorbed by fixed effects: {}",
            absorbed.join(", ")
        )));
    }

    let ls = solve_least_squares_named(&design, &y, Some(&names))?;
    let residuals: Vec<f64> = ls.residuals.iter().copied().collect();
    let (vcov, n_clusters) = vcov::sandwich(&design, &residuals, &clusters, &ls.xtx_inv)?;

    let estimates: Vec<f64> = ls.coefficients.iter().copied().collect();
    let t_stats = estimates
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let var = vcov[(j, j)];
            if var > 0.0 {
                b / var.sqrt()
            } else {
                f64::NAN
            }
        })
        .collect();

    let ssr: f64 = residuals.iter().map(|u| u * u).sum();
    let centered = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
    };
    let sst = match spec.r_squared {
        RSquared::Overall => centered(&y_raw),
        RSquared::Within if spec.fixed_effect.is_some() => y.iter().map(|v| v * v).sum(),
        RSquared::Within if spec.include_intercept => centered(&y_raw),
        RSquared::Within => y.iter().map(|v| v * v).sum(),
    };
    let r_squared = if sst > 0.0 {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    } else if ssr == 0.0 {
        1.0
    } else {
        0.0
    };

    Ok(FitResult {
        outcome: spec.outcome.clone(),
        names,
        estimates,
        vcov,
        t_stats,
        r_squared,
        n_obs: n,
        n_clusters,
        residuals,
        absorbed,
        fixed_effect: spec.fixed_effect.clone(),
        cluster: spec.cluster.clone(),
    })
}
