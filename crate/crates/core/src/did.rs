//! Difference-in-differences designs: the canonical 2×2 contrast, the
//! covariate-adjusted specifications with and without school fixed effects,
//! a treatment-by-moderator heterogeneity fit and a placebo pre-trend test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::estimator::{fit, p_value, FitResult, RSquared, RegressionSpec, TREATMENT_TERM};
use crate::panel::{PanelDataset, PUPIL_COVARIATES};

/// Outcome means by period and treatment group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMeans {
    pub pre_private: f64,
    pub post_private: f64,
    pub pre_public: f64,
    pub post_public: f64,
}

impl CellMeans {
    /// `(post_public − pre_public) − (post_private − pre_private)`.
    pub fn did(&self) -> f64 {
        (self.post_public - self.pre_public) - (self.post_private - self.pre_private)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DidSummary {
    pub label: String,
    pub outcome: String,
    pub att_estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub cell_means: CellMeans,
    /// Interaction terms keyed by term name, e.g. `post:public:anglophone`.
    pub heterogeneity: BTreeMap<String, TermEstimate>,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub fixed_effects: bool,
    pub absorbed: Vec<String>,
}

/// Means of `outcome` in the four cells; errors on an empty cell.
pub fn cell_means(dataset: &PanelDataset, outcome: &str) -> Result<CellMeans> {
    dataset.cell_counts().require_all()?;
    let y = dataset.column(outcome)?;
    let mut sum = [0.0; 4];
    let mut count = [0usize; 4];
    for (row, v) in dataset.rows().iter().zip(y) {
        let cell = usize::from(row.post) + 2 * usize::from(row.is_public);
        sum[cell] += v;
        count[cell] += 1;
    }
    let mean = |c: usize| sum[c] / count[c] as f64;
    Ok(CellMeans {
        pre_private: mean(0),
        post_private: mean(1),
        pre_public: mean(2),
        post_public: mean(3),
    })
}

fn summarize(
    label: String,
    dataset: &PanelDataset,
    f: &FitResult,
    att: f64,
    extra_terms: &[String],
) -> Result<DidSummary> {
    let treat = f.treatment()?;
    let heterogeneity = extra_terms
        .iter()
        .filter_map(|name| {
            f.coefficient(name).map(|c| {
                (
                    name.clone(),
                    TermEstimate {
                        estimate: c.estimate,
                        std_error: c.std_error,
                        t_stat: c.t_stat,
                    },
                )
            })
        })
        .collect();
    let t_stat = if treat.std_error > 0.0 {
        att / treat.std_error
    } else {
        f64::NAN
    };
    Ok(DidSummary {
        label,
        outcome: f.outcome.clone(),
        att_estimate: att,
        std_error: treat.std_error,
        t_stat,
        p_value: p_value(t_stat),
        cell_means: cell_means(dataset, &f.outcome)?,
        heterogeneity,
        n_obs: f.n_obs,
        n_clusters: f.n_clusters,
        fixed_effects: f.fixed_effect.is_some(),
        absorbed: f.absorbed.clone(),
    })
}

/// The canonical 2×2 estimate from cell means. The standard error comes from
/// the saturated regression clustered by school, whose `post:public`
/// coefficient equals the cell contrast.
pub fn two_by_two(dataset: &PanelDataset, outcome: &str) -> Result<DidSummary> {
    let means = cell_means(dataset, outcome)?;
    let f = fit(dataset, &RegressionSpec::saturated(outcome))?;
    summarize("2x2".into(), dataset, &f, means.did(), &[])
}

/// Regressors of the covariate-adjusted specification, in table order.
fn adjusted_covariates(grade2_only: bool) -> Vec<String> {
    let mut c: Vec<String> = ["post", "public", TREATMENT_TERM, "anglophone"]
        .iter()
        .chain(PUPIL_COVARIATES.iter())
        .map(|s| s.to_string())
        .collect();
    if !grade2_only {
        c.push("grade_high".into());
    }
    c
}

/// Specification with pupil covariates, language system and grade dummy,
/// with or without school fixed effects.
pub fn adjusted_spec(outcome: &str, with_fe: bool, grade2_only: bool) -> RegressionSpec {
    RegressionSpec {
        outcome: outcome.to_string(),
        covariates: adjusted_covariates(grade2_only),
        interactions: Vec::new(),
        fixed_effect: with_fe.then(|| "school_id".to_string()),
        cluster: "school_id".into(),
        include_intercept: !with_fe,
        r_squared: RSquared::Within,
    }
}

pub fn fit_adjusted(
    dataset: &PanelDataset,
    outcome: &str,
    with_fe: bool,
    grade2_only: bool,
) -> Result<DidSummary> {
    let spec = adjusted_spec(outcome, with_fe, grade2_only);
    spec.validate(dataset)?;
    let data = if grade2_only {
        dataset.filter(|r| !r.grade_high)
    } else {
        dataset.clone()
    };
    let f = fit(&data, &spec)?;
    let label = format!(
        "{}{}",
        if with_fe { "FE" } else { "OLS" },
        if grade2_only { ", grade 2" } else { "" }
    );
    let att = f.treatment()?.estimate;
    summarize(label, &data, &f, att, &[])
}

fn require_binary(dataset: &PanelDataset, column: &str) -> Result<()> {
    let values = dataset.column(column)?;
    if let Some(v) = values.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(domain(format!(
            "moderator `{column}` must be binary (0/1), found {v}"
        )));
    }
    let first = values.first().copied().unwrap_or(0.0);
    if values.iter().all(|v| *v == first) {
        return Err(domain(format!(
            "moderator `{column}` is constant ({first}); the interaction is not identified"
        )));
    }
    Ok(())
}

/// Heterogeneity spec: the fixed-effect specification plus `post:public:m`
/// and the lower-order interactions of `m`; those constant within schools are
/// absorbed.
pub fn heterogeneity_spec(outcome: &str, moderator: &str) -> RegressionSpec {
    let mut spec = adjusted_spec(outcome, true, false);
    if !spec.covariates.iter().any(|c| c == moderator) {
        spec.covariates.push(moderator.to_string());
    }
    spec.covariates.push(format!("post:{moderator}"));
    spec.covariates.push(format!("public:{moderator}"));
    spec.covariates
        .push(format!("{TREATMENT_TERM}:{moderator}"));
    spec
}

pub fn fit_heterogeneity(
    dataset: &PanelDataset,
    outcome: &str,
    moderator: &str,
) -> Result<DidSummary> {
    if !dataset.has_column(moderator) {
        return Err(Error::MissingColumn(moderator.to_string()));
    }
    require_binary(dataset, moderator)?;
    let spec = heterogeneity_spec(outcome, moderator);
    let f = fit(dataset, &spec)?;
    let key = format!("{TREATMENT_TERM}:{moderator}");
    if f.index_of(&key).is_none() {
        return Err(domain(format!(
            "interaction `{key}` was absorbed by the fixed effects"
        )));
    }
    let att = f.treatment()?.estimate;
    summarize(
        format!("FE x {moderator}"),
        dataset,
        &f,
        att,
        &[key, format!("post:{moderator}")],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboResult {
    pub outcome: String,
    /// Period treated as the fake onset.
    pub fake_period: u32,
    pub n_pre_periods: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub n_obs: usize,
}

/// Placebo test for parallel pre-trends: restricted to pre-treatment rows,
/// the last pre-period plays the post period and its interaction with the
/// treatment group is estimated with school fixed effects and pupil
/// covariates. A significant estimate signals diverging pre-trends.
pub fn placebo_pretrend(dataset: &PanelDataset, outcome: &str) -> Result<PlaceboResult> {
    let periods: Vec<u32> = dataset.periods().into_iter().collect();
    if periods.len() < 3 {
        return Err(Error::InsufficientPrePeriods {
            found: periods.len(),
        });
    }
    let last = periods[periods.len() - 1];
    let fake = periods[periods.len() - 2];
    let pre = dataset
        .filter(|r| r.period < last)
        .map_rows(|r| r.post = r.period == fake);

    let mut covariates: Vec<String> = vec!["post".into()];
    covariates.extend(PUPIL_COVARIATES.iter().map(|s| s.to_string()));
    covariates.push("grade_high".into());
    let spec = RegressionSpec {
        outcome: outcome.to_string(),
        covariates,
        interactions: vec![vec!["post".into(), "public".into()]],
        fixed_effect: Some("school_id".into()),
        cluster: "school_id".into(),
        include_intercept: false,
        r_squared: RSquared::Within,
    };
    let f = fit(&pre, &spec)?;
    let c = f.treatment()?;
    Ok(PlaceboResult {
        outcome: outcome.to_string(),
        fake_period: fake,
        n_pre_periods: periods.len() - 1,
        estimate: c.estimate,
        std_error: c.std_error,
        t_stat: c.t_stat,
        p_value: c.p_value,
        n_obs: f.n_obs,
    })
}
