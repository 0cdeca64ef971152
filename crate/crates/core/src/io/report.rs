//! Plain-text regression tables with a machine-readable CSV twin.
//!
//! Estimates carry three significant digits (at least two decimals above 1),
//! t statistics two decimals, and significance stars at 5%, 1% and 0.1%.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::did::{DidSummary, PlaceboResult};
use crate::error::{domain, Result};
use crate::estimator::{significance_stars, FitResult, INTERCEPT};
use crate::model::{AllocationPlan, School};
use crate::montecarlo::{GainRow, McResult};

fn decimals_for(x: f64) -> usize {
    let mag = x.abs().log10().floor() as i32;
    if x.abs() >= 1.0 {
        (3 - mag).max(0) as usize
    } else {
        (2 - mag) as usize
    }
}

/// Formats a point estimate with three significant digits.
pub fn format_estimate(x: f64) -> String {
    if !x.is_finite() {
        return ".".into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let d = decimals_for(x);
    let s = format!("{x:.d$}");
    // Rounding may carry into a new digit (9.9996 -> 10.000); redo with the
    // decimals of the rounded value.
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && decimals_for(rounded) != d {
        let d = decimals_for(rounded);
        return format!("{x:.d$}");
    }
    s
}

pub fn format_t_stat(t: f64) -> String {
    if t.is_finite() {
        format!("({t:.2})")
    } else {
        "(.)".into()
    }
}

/// Estimate with its significance stars.
pub fn format_cell(estimate: f64, p_value: f64) -> String {
    format!(
        "{}{}",
        format_estimate(estimate),
        significance_stars(p_value)
    )
}

/// Row labels used when a term has none of its own.
pub fn default_labels() -> BTreeMap<String, String> {
    [
        ("post", "After Treatment"),
        ("public", "Public Schools"),
        ("post:public", "lambda0 (post x public)"),
        ("anglophone", "Anglophone"),
        ("age", "Age"),
        ("girl", "Dummy for Girl"),
        ("books", "Books at Home"),
        ("electricity", "Electricity at Home"),
        ("grade_high", "Dummy for higher grades"),
        ("post:public:anglophone", "Decent x Anglophone"),
        ("post:anglophone", "After x Anglophone"),
        (INTERCEPT, "Constant"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

#[derive(Debug, Clone, Default)]
pub struct TableLayout {
    /// Column headers, one per fit.
    pub titles: Vec<String>,
    /// Terms in display order; empty means every term in order of first
    /// appearance, with the constant last.
    pub rows: Vec<String>,
    pub labels: BTreeMap<String, String>,
}

impl TableLayout {
    pub fn new(titles: Vec<String>) -> Self {
        TableLayout {
            titles,
            rows: Vec::new(),
            labels: default_labels(),
        }
    }

    fn label<'a>(&'a self, term: &'a str) -> &'a str {
        self.labels.get(term).map(String::as_str).unwrap_or(term)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

fn row_order(fits: &[FitResult], layout: &TableLayout) -> Vec<String> {
    if !layout.rows.is_empty() {
        return layout.rows.clone();
    }
    let mut rows: Vec<String> = Vec::new();
    for f in fits {
        for name in &f.names {
            if name != INTERCEPT && !rows.contains(name) {
                rows.push(name.clone());
            }
        }
    }
    if fits.iter().any(|f| f.index_of(INTERCEPT).is_some()) {
        rows.push(INTERCEPT.to_string());
    }
    rows
}

fn csv_string(header: &[&str], records: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| domain(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn fmt_r2(r2: f64) -> String {
    format!("{r2:.3}")
}

/// Side-by-side table of several fits: estimates with stars, t statistics
/// in parentheses below, and a footer with fixed effects, observations,
/// clusters and R².
pub fn render_table(fits: &[FitResult], layout: &TableLayout) -> Result<RenderedTable> {
    if fits.is_empty() {
        return Err(domain("no fits to render"));
    }
    if layout.titles.len() != fits.len() {
        return Err(domain(format!(
            "table has {} titles for {} fits",
            layout.titles.len(),
            fits.len()
        )));
    }
    let rows = row_order(fits, layout);

    let mut body: Vec<(String, Vec<String>)> = Vec::new();
    for term in &rows {
        let mut est = Vec::new();
        let mut ts = Vec::new();
        for f in fits {
            match f.coefficient(term) {
                Some(c) => {
                    est.push(format_cell(c.estimate, c.p_value));
                    ts.push(format_t_stat(c.t_stat));
                }
                None => {
                    est.push(String::new());
                    ts.push(String::new());
                }
            }
        }
        body.push((layout.label(term).to_string(), est));
        body.push((String::new(), ts));
    }
    let footer: Vec<(String, Vec<String>)> = vec![
        (
            "School Fixed-effects".into(),
            fits.iter()
                .map(|f| {
                    if f.fixed_effect.is_some() {
                        "Yes"
                    } else {
                        "No"
                    }
                    .to_string()
                })
                .collect(),
        ),
        (
            "Observations".into(),
            fits.iter().map(|f| f.n_obs.to_string()).collect(),
        ),
        (
            "Clusters".into(),
            fits.iter().map(|f| f.n_clusters.to_string()).collect(),
        ),
        (
            "R-squared".into(),
            fits.iter().map(|f| fmt_r2(f.r_squared)).collect(),
        ),
    ];

    let label_w = body
        .iter()
        .chain(footer.iter())
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max(8);
    let col_w: Vec<usize> = (0..fits.len())
        .map(|j| {
            body.iter()
                .chain(footer.iter())
                .map(|(_, c)| c[j].len())
                .chain(std::iter::once(layout.titles[j].len()))
                .max()
                .unwrap_or(0)
                .max(10)
        })
        .collect();
    let total = label_w + col_w.iter().map(|w| w + 2).sum::<usize>();
    let rule = "-".repeat(total);

    let line = |label: &str, cells: &[String]| {
        let mut s = format!("{label:<label_w$}");
        for (c, w) in cells.iter().zip(&col_w) {
            let _ = write!(s, "  {c:>w$}");
        }
        s.trim_end().to_string()
    };

    let mut text = String::new();
    let _ = writeln!(text, "{rule}");
    let _ = writeln!(text, "{}", line("", &layout.titles));
    let _ = writeln!(text, "{rule}");
    for (label, cells) in &body {
        let _ = writeln!(text, "{}", line(label, cells));
    }
    let _ = writeln!(text, "{rule}");
    for (label, cells) in &footer {
        let _ = writeln!(text, "{}", line(label, cells));
    }
    let _ = writeln!(text, "{rule}");
    let clusters: Vec<&str> = fits.iter().map(|f| f.cluster.as_str()).collect();
    let cluster_note = if clusters.iter().all(|c| *c == clusters[0]) {
        clusters[0].to_string()
    } else {
        clusters.join("/")
    };
    let _ = writeln!(
        text,
        "t statistics in parentheses; standard errors clustered by {cluster_note}"
    );
    let _ = writeln!(text, "* p<0.05, ** p<0.01, *** p<0.001");
    for (f, title) in fits.iter().zip(&layout.titles) {
        if !f.absorbed.is_empty() {
            let _ = writeln!(
                text,
                "{title}: absorbed by fixed effects: {}",
                f.absorbed.join(", ")
            );
        }
    }

    let mut records = Vec::new();
    for (f, title) in fits.iter().zip(&layout.titles) {
        for c in f.coefficients() {
            records.push(vec![
                title.clone(),
                c.name.clone(),
                format!("{}", c.estimate),
                format!("{}", c.std_error),
                format!("{}", c.t_stat),
                format!("{}", c.p_value),
                significance_stars(c.p_value).to_string(),
                f.fixed_effect.is_some().to_string(),
                f.n_obs.to_string(),
                f.n_clusters.to_string(),
                format!("{}", f.r_squared),
            ]);
        }
    }
    let csv = csv_string(
        &[
            "column",
            "term",
            "estimate",
            "std_error",
            "t_stat",
            "p_value",
            "stars",
            "fixed_effects",
            "n_obs",
            "n_clusters",
            "r_squared",
        ],
        &records,
    )?;
    Ok(RenderedTable { text, csv })
}

/// Summary block for one difference-in-differences estimate.
pub fn render_did(summary: &DidSummary) -> String {
    let m = &summary.cell_means;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "Difference-in-differences: {} ({})",
        summary.outcome, summary.label
    );
    let _ = writeln!(s, "{:<12}{:>12}{:>12}{:>12}", "", "pre", "post", "change");
    let _ = writeln!(
        s,
        "{:<12}{:>12.3}{:>12.3}{:>12.3}",
        "public",
        m.pre_public,
        m.post_public,
        m.post_public - m.pre_public
    );
    let _ = writeln!(
        s,
        "{:<12}{:>12.3}{:>12.3}{:>12.3}",
        "private",
        m.pre_private,
        m.post_private,
        m.post_private - m.pre_private
    );
    let _ = writeln!(s, "cell-mean DiD: {:.4}", m.did());
    let _ = writeln!(
        s,
        "ATT estimate: {}{} (se {:.4}, t {:.2}, p {:.4})",
        format_estimate(summary.att_estimate),
        significance_stars(summary.p_value),
        summary.std_error,
        summary.t_stat,
        summary.p_value
    );
    for (term, e) in &summary.heterogeneity {
        let _ = writeln!(
            s,
            "{term}: {} (se {:.4}, t {:.2})",
            format_estimate(e.estimate),
            e.std_error,
            e.t_stat
        );
    }
    let _ = writeln!(
        s,
        "observations {}, clusters {}, school fixed effects {}",
        summary.n_obs,
        summary.n_clusters,
        if summary.fixed_effects { "yes" } else { "no" }
    );
    if !summary.absorbed.is_empty() {
        let _ = writeln!(
            s,
            "absorbed by fixed effects: {}",
            summary.absorbed.join(", ")
        );
    }
    s
}

pub fn render_placebo(p: &PlaceboResult) -> String {
    let verdict = if p.p_value < 0.05 {
        "pre-trends diverge at 5%"
    } else {
        "no evidence against parallel pre-trends at 5%"
    };
    format!(
        "Placebo pre-trend test: {} (fake onset period {}, {} pre-periods)\n\
         estimate {}{} (se {:.4}, t {:.2}, p {:.4}), observations {}\n{verdict}\n",
        p.outcome,
        p.fake_period,
        p.n_pre_periods,
        format_estimate(p.estimate),
        significance_stars(p.p_value),
        p.std_error,
        p.t_stat,
        p.p_value,
        p.n_obs
    )
}

pub fn render_mc(r: &McResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Monte Carlo: {} replications", r.n_reps);
    let rows: [(&str, f64); 9] = [
        ("true ATT", r.true_att),
        ("mean estimate", r.mean_estimate),
        ("bias", r.bias),
        ("RMSE", r.rmse),
        ("95% CI coverage", r.ci_coverage_95),
        ("rejection rate (5%)", r.rejection_rate_5pct),
        ("mean SE", r.mean_se),
        ("sd of estimates", r.sd_estimates),
        ("MC SE of mean", r.mc_se_of_mean),
    ];
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<22}{v:>12.4}");
    }
    s
}

pub fn mc_csv(r: &McResult) -> Result<String> {
    let records: Vec<Vec<String>> = r
        .replications
        .iter()
        .map(|x| {
            vec![
                x.index.to_string(),
                x.seed.to_string(),
                format!("{}", x.estimate),
                format!("{}", x.std_error),
                x.covers.to_string(),
                x.rejects.to_string(),
            ]
        })
        .collect();
    csv_string(
        &["rep", "seed", "estimate", "std_error", "covers", "rejects"],
        &records,
    )
}

pub fn render_gains(rows: &[GainRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8}{:>10}{:>10}{:>14}{:>14}{:>12}{:>12}{:>10}",
        "schools", "budget", "cap", "centralized", "decentral.", "gain", "mc se", "strict"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>8}{:>10.3}{:>10.3}{:>14.5}{:>14.5}{:>12.5}{:>12.5}{:>10.3}",
            r.cell.n_schools,
            r.cell.per_school_budget,
            r.cell.cap,
            r.report.delta_centralized,
            r.report.rho_decentralized,
            r.report.lambda_gain,
            r.report.standard_error,
            r.report.strict_share
        );
    }
    s
}

pub fn gains_csv(rows: &[GainRow]) -> Result<String> {
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.cell.n_schools.to_string(),
                format!("{}", r.cell.per_school_budget),
                format!("{}", r.cell.cap),
                format!("{}", r.report.delta_centralized),
                format!("{}", r.report.rho_decentralized),
                format!("{}", r.report.lambda_gain),
                format!("{}", r.report.standard_error),
                format!("{}", r.report.min_draw_gain),
                format!("{}", r.report.strict_share),
                r.report.n_draws.to_string(),
            ]
        })
        .collect();
    csv_string(
        &[
            "n_schools",
            "per_school_budget",
            "cap",
            "delta_centralized",
            "rho_decentralized",
            "lambda_gain",
            "standard_error",
            "min_draw_gain",
            "strict_share",
            "n_draws",
        ],
        &records,
    )
}

/// Per-school comparison of the uniform and informed plans.
pub fn render_allocation(
    schools: &[School],
    uniform: &AllocationPlan,
    informed: &AllocationPlan,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8}{:>10}{:>10}{:>10}",
        "school", "s", "uniform", "informed"
    );
    for ((sc, u), i) in schools
        .iter()
        .zip(uniform.increments())
        .zip(informed.increments())
    {
        let _ = writeln!(s, "{:>8}{:>10.4}{:>10.4}{:>10.4}", sc.id, sc.s, u, i);
    }
    let n = schools.len() as f64;
    let cu = uniform.objective(schools);
    let ci = informed.objective(schools);
    let _ = writeln!(
        s,
        "budget {:.4} ({} schools x {:.4})",
        informed.total_budget(),
        schools.len(),
        informed.per_school_budget()
    );
    let _ = writeln!(
        s,
        "gain per school: uniform {:.6}, informed {:.6}, difference {:.6}",
        cu / n,
        ci / n,
        (ci - cu) / n
    );
    s
}

pub fn allocation_csv(
    schools: &[School],
    uniform: &AllocationPlan,
    informed: &AllocationPlan,
) -> Result<String> {
    let records: Vec<Vec<String>> = schools
        .iter()
        .zip(uniform.increments())
        .zip(informed.increments())
        .map(|((sc, u), i)| {
            vec![
                sc.id.to_string(),
                format!("{}", sc.s),
                format!("{u}"),
                format!("{i}"),
            ]
        })
        .collect();
    csv_string(&["school_id", "s", "uniform", "informed"], &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_digits() {
        assert_eq!(format_estimate(10.2), "10.20");
        assert_eq!(format_estimate(0.825), "0.825");
        assert_eq!(format_estimate(1.705), "1.705");
        assert_eq!(format_estimate(-6.6), "-6.600");
        assert_eq!(format_estimate(123.456), "123.5");
        assert_eq!(format_estimate(1234.6), "1235");
        assert_eq!(format_estimate(0.05), "0.0500");
        assert_eq!(format_estimate(9.99996), "10.00");
        assert_eq!(format_estimate(0.99996), "1.000");
        assert_eq!(format_estimate(0.0), "0");
        assert_eq!(format_estimate(f64::NAN), ".");
    }

    #[test]
    fn cells_with_stars() {
        let p = |t: f64| crate::estimator::p_value(t);
        assert_eq!(format_cell(10.20, p(19.71)), "10.20***");
        assert_eq!(format_t_stat(19.71), "(19.71)");
        assert_eq!(format_cell(0.825, p(0.94)), "0.825");
        assert_eq!(format_cell(1.705, p(2.12)), "1.705*");
        assert_eq!(format_cell(1.0, p(2.7)), "1.000**");
        assert_eq!(format_t_stat(-2.0), "(-2.00)");
    }
}
