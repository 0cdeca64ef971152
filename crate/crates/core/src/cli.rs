//! The `decentra` command line.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 when the
//! input data cannot be estimated.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dgp::generate_panel;
use crate::did::{
    adjusted_spec, fit_adjusted, fit_heterogeneity, heterogeneity_spec, placebo_pretrend,
    two_by_two,
};
use crate::error::{Error, Result};
use crate::estimator::{fit, RSquared, RegressionSpec, TREATMENT_TERM};
use crate::io::config::{EstimateSettings, RunConfig, DEFAULT_CONFIG};
use crate::io::report::{
    allocation_csv, gains_csv, mc_csv, render_allocation, render_did, render_gains, render_mc,
    render_placebo, render_table, TableLayout,
};
use crate::io::{read_panel_csv, read_schools_csv, write_panel};
use crate::model::{
    check_feasibility, informed_allocation, uniform_allocation, DistributionSpec, DrawGain,
    GainReport,
};
use crate::montecarlo::{run_mc_with, run_model_mc, run_placebo_mc, GainCell, McOptions};
use crate::panel::PanelDataset;

#[derive(Debug, Parser)]
#[command(
    name = "decentra",
    version,
    about = "Resource allocation under decentralization: simulation and difference-in-differences estimation",
    subcommand_required = false,
    arg_required_else_help = true
)]
struct Cli {
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Configuration file, or `default` for the built-in one.
    #[arg(long, global = true, value_name = "PATH", default_value = "default")]
    config: String,

    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output path. Report commands write text here and `.csv`/`.json` sidecars next to it.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic panel and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit a regression on a panel CSV and print the table.
    Estimate(EstimateArgs),
    /// Difference-in-differences summary of a panel CSV.
    Did(DidArgs),
    /// Monte Carlo study of the estimator on the configured DGP.
    Mc(McArgs),
    /// Uniform and informed allocation for a schools CSV.
    Allocate(AllocateArgs),
    /// Expected gain of informed allocation over a budget grid.
    Gains(GainsArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of periods (the last one is post-treatment).
    #[arg(long)]
    periods: Option<usize>,
}

#[derive(Debug, Args, Default)]
struct SpecArgs {
    /// Outcome column.
    #[arg(long)]
    outcome: Option<String>,
    /// Absorb school fixed effects.
    #[arg(long, overrides_with = "no_fe")]
    fe: bool,
    #[arg(long = "no-fe", overrides_with = "fe")]
    no_fe: bool,
    /// Include pupil covariates, language system and grade.
    #[arg(long, overrides_with = "no_covariates")]
    covariates: bool,
    #[arg(long = "no-covariates", overrides_with = "covariates")]
    no_covariates: bool,
    /// Cluster column for standard errors.
    #[arg(long, value_name = "COL")]
    cluster: Option<String>,
    /// Keep only grade-2 pupils.
    #[arg(long)]
    grade2_only: bool,
    /// Binary column interacted with the treatment.
    #[arg(long, value_name = "COL")]
    moderator: Option<String>,
    /// R-squared definition: within or overall.
    #[arg(long, value_name = "KIND")]
    r_squared: Option<String>,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    panel: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Debug, Args)]
struct DidArgs {
    panel: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    /// Run the pre-trend placebo test instead (needs 3 or more periods).
    #[arg(long)]
    placebo: bool,
}

#[derive(Debug, Args)]
struct McArgs {
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long, overrides_with = "no_fe")]
    fe: bool,
    #[arg(long = "no-fe", overrides_with = "fe")]
    no_fe: bool,
    #[arg(long, overrides_with = "no_covariates")]
    covariates: bool,
    #[arg(long = "no-covariates", overrides_with = "covariates")]
    no_covariates: bool,
    /// Number of periods in each simulated panel.
    #[arg(long)]
    periods: Option<usize>,
    /// Study the placebo test instead of the treatment estimate.
    #[arg(long)]
    placebo: bool,
}

#[derive(Debug, Args)]
struct AllocateArgs {
    schools: PathBuf,
    /// Uniform increment per school.
    #[arg(long)]
    budget: Option<f64>,
    /// Largest increment a single school may receive.
    #[arg(long)]
    cap: Option<f64>,
}

#[derive(Debug, Args)]
struct GainsArgs {
    /// point(c), uniform(a, b) or normal(mean, sd).
    #[arg(long)]
    distribution: Option<String>,
    #[arg(long)]
    schools: Option<usize>,
    /// Comma-separated per-school budgets.
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<f64>>,
    #[arg(long)]
    cap_multiplier: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
}

/// A usage problem detected after parsing.
struct Usage(String);

enum Failure {
    Usage(Usage),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(Usage(msg.into()))
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return 0;
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = write!(err, "{}", e.render());
                    return 1;
                }
                _ => 1,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(Failure::Usage(Usage(msg))) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Config(_) => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    let config = RunConfig::load(&cli.config)?;
    if cli.print_config {
        if cli.config == "default" {
            write!(out, "{DEFAULT_CONFIG}")?;
        } else {
            write!(out, "{}", config.to_toml()?)?;
        }
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(usage(
            "no subcommand given; run `decentra --help` for the list",
        ));
    };
    match command {
        Command::Simulate(a) => simulate(cli, config, a, out),
        Command::Estimate(a) => estimate(cli, config, a, out),
        Command::Did(a) => did(cli, config, a, out),
        Command::Mc(a) => mc(cli, config, a, out),
        Command::Allocate(a) => allocate(cli, config, a, out),
        Command::Gains(a) => gains(cli, config, a, out),
    }
}

/// Writes the text report to stdout and, with `--out`, to disk together with
/// CSV and JSON sidecars.
fn emit(
    cli: &Cli,
    out: &mut dyn Write,
    text: &str,
    csv: Option<&str>,
    json: &serde_json::Value,
) -> std::result::Result<(), Failure> {
    write!(out, "{text}")?;
    if let Some(path) = &cli.out {
        let text_path = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") | Some("json") => path.with_extension("txt"),
            _ => path.clone(),
        };
        write_file(&text_path, text.as_bytes())?;
        if let Some(csv) = csv {
            write_file(&path.with_extension("csv"), csv.as_bytes())?;
        }
        let mut body =
            serde_json::to_string_pretty(json).map_err(|e| Error::Invariant(e.to_string()))?;
        body.push('\n');
        write_file(&path.with_extension("json"), body.as_bytes())?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> std::result::Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| {
        Failure::Run(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

fn simulate(
    cli: &Cli,
    mut config: RunConfig,
    a: &SimulateArgs,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    if let Some(seed) = cli.seed {
        config.dgp.seed = seed;
    }
    if let Some(p) = a.periods {
        if p < 2 {
            return Err(usage(format!(
                "--periods {p} is too small; pass --periods 2 or more"
            )));
        }
        config.dgp.n_periods = p;
    }
    let data = generate_panel(&config.dgp)?;
    match &cli.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("{}: {e}", path.display()),
                ))
            })?;
            write_panel(&data, std::io::BufWriter::new(file))?;
            writeln!(
                out,
                "wrote {} rows ({} schools, {} periods) to {}",
                data.len(),
                data.n_schools(),
                data.periods().len(),
                path.display()
            )?;
        }
        None => write_panel(&data, &mut *out)?,
    }
    Ok(())
}

fn resolve_settings(
    base: &EstimateSettings,
    a: &SpecArgs,
) -> std::result::Result<EstimateSettings, Failure> {
    let mut s = base.clone();
    if let Some(o) = &a.outcome {
        s.outcome = o.clone();
    }
    if a.fe {
        s.fixed_effects = true;
    }
    if a.no_fe {
        s.fixed_effects = false;
    }
    if a.covariates {
        s.covariates = true;
    }
    if a.no_covariates {
        s.covariates = false;
    }
    if let Some(c) = &a.cluster {
        s.cluster = c.clone();
    }
    if a.grade2_only {
        s.grade2_only = true;
    }
    if let Some(m) = &a.moderator {
        s.moderator = Some(m.clone());
    }
    if let Some(r) = &a.r_squared {
        s.r_squared = match r.as_str() {
            "within" => RSquared::Within,
            "overall" => RSquared::Overall,
            other => {
                return Err(usage(format!(
                    "--r-squared {other} is not recognized; pass --r-squared within or --r-squared overall"
                )))
            }
        };
    }
    Ok(s)
}

/// The regression implied by the settings: saturated 2×2 by default,
/// covariate-adjusted with `covariates`, moderated with `moderator`.
fn settings_spec(s: &EstimateSettings) -> RegressionSpec {
    let mut spec = if let Some(m) = &s.moderator {
        heterogeneity_spec(&s.outcome, m)
    } else if s.covariates {
        adjusted_spec(&s.outcome, s.fixed_effects, s.grade2_only)
    } else if s.fixed_effects {
        RegressionSpec {
            fixed_effect: Some("school_id".into()),
            include_intercept: false,
            ..RegressionSpec::saturated(&s.outcome)
        }
    } else {
        RegressionSpec::saturated(&s.outcome)
    };
    spec.cluster = s.cluster.clone();
    spec.r_squared = s.r_squared;
    spec
}

fn load_panel(path: &Path, grade2_only: bool) -> Result<PanelDataset> {
    let data = read_panel_csv(path)?;
    Ok(if grade2_only {
        data.filter(|r| !r.grade_high)
    } else {
        data
    })
}

fn estimate(
    cli: &Cli,
    config: RunConfig,
    a: &EstimateArgs,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let s = resolve_settings(&config.estimate, &a.spec)?;
    let data = load_panel(&a.panel, s.grade2_only)?;
    let spec = settings_spec(&s);
    let f = fit(&data, &spec)?;
    let layout = TableLayout::new(vec![s.outcome.clone()]);
    let table = render_table(std::slice::from_ref(&f), &layout)?;
    let json = json!({
        "outcome": f.outcome,
        "fixed_effects": f.fixed_effect.is_some(),
        "cluster": f.cluster,
        "n_obs": f.n_obs,
        "n_clusters": f.n_clusters,
        "r_squared": f.r_squared,
        "absorbed": f.absorbed,
        "coefficients": f.coefficients(),
    });
    emit(cli, out, &table.text, Some(&table.csv), &json)
}

fn did(
    cli: &Cli,
    config: RunConfig,
    a: &DidArgs,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let s = resolve_settings(&config.estimate, &a.spec)?;
    if a.placebo {
        let data = load_panel(&a.panel, s.grade2_only)?;
        let p = placebo_pretrend(&data, &s.outcome)?;
        let json = serde_json::to_value(&p).map_err(|e| Error::Invariant(e.to_string()))?;
        return emit(cli, out, &render_placebo(&p), None, &json);
    }
    if s.cluster != "school_id" {
        return Err(usage(format!(
            "did clusters by school_id; use `estimate --cluster {}` for other clusters",
            s.cluster
        )));
    }
    let summary = if let Some(m) = &s.moderator {
        let data = load_panel(&a.panel, s.grade2_only)?;
        fit_heterogeneity(&data, &s.outcome, m)?
    } else if s.covariates {
        let data = read_panel_csv(&a.panel)?;
        fit_adjusted(&data, &s.outcome, s.fixed_effects, s.grade2_only)?
    } else {
        let data = load_panel(&a.panel, s.grade2_only)?;
        if s.fixed_effects {
            let spec = settings_spec(&s);
            let f = fit(&data, &spec)?;
            let mut d = two_by_two(&data, &s.outcome)?;
            let c = f.treatment()?;
            d.label = "FE".into();
            d.att_estimate = c.estimate;
            d.std_error = c.std_error;
            d.t_stat = c.t_stat;
            d.p_value = c.p_value;
            d.fixed_effects = true;
            d.absorbed = f.absorbed;
            d
        } else {
            two_by_two(&data, &s.outcome)?
        }
    };
    let json = serde_json::to_value(&summary).map_err(|e| Error::Invariant(e.to_string()))?;
    emit(cli, out, &render_did(&summary), None, &json)
}

fn mc(
    cli: &Cli,
    mut config: RunConfig,
    a: &McArgs,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let m = &mut config.mc;
    if let Some(r) = a.reps {
        m.reps = r;
    }
    if m.reps == 0 {
        return Err(usage(
            "--reps must be at least 1; pass --reps N with N >= 1",
        ));
    }
    if let Some(seed) = cli.seed {
        m.seed = seed;
    }
    if let Some(t) = a.threads {
        m.threads = t;
    }
    if let Some(o) = &a.outcome {
        m.outcome = o.clone();
    }
    if a.fe {
        m.fixed_effects = true;
    }
    if a.no_fe {
        m.fixed_effects = false;
    }
    if a.covariates {
        m.covariates = true;
    }
    if a.no_covariates {
        m.covariates = false;
    }
    if let Some(p) = a.periods {
        config.dgp.n_periods = p;
    }
    let m = &config.mc;
    let options = McOptions {
        threads: (m.threads > 0).then_some(m.threads),
        keep_replications: true,
        target_term: TREATMENT_TERM.to_string(),
    };
    if a.placebo {
        if config.dgp.n_periods < 3 {
            return Err(usage(format!(
                "--placebo needs 3 or more periods, the configuration has {}; pass --periods 3",
                config.dgp.n_periods
            )));
        }
        let r = run_placebo_mc(&config.dgp, &m.outcome, m.reps, m.seed, &options)?;
        let text = format!(
            "Placebo Monte Carlo: {} replications\nrejection rate (5%) {:.4}\nmean estimate {:.4}\nmean SE {:.4}\n",
            r.n_reps, r.rejection_rate_5pct, r.mean_estimate, r.mean_se
        );
        let json = serde_json::to_value(&r).map_err(|e| Error::Invariant(e.to_string()))?;
        return emit(cli, out, &text, None, &json);
    }
    let settings = EstimateSettings {
        outcome: m.outcome.clone(),
        fixed_effects: m.fixed_effects,
        covariates: m.covariates,
        ..EstimateSettings::default()
    };
    let spec = settings_spec(&settings);
    let result = run_mc_with(&config.dgp, &spec, m.reps, m.seed, &options)?;
    let csv = mc_csv(&result)?;
    let json = serde_json::to_value(&result).map_err(|e| Error::Invariant(e.to_string()))?;
    emit(cli, out, &render_mc(&result), Some(&csv), &json)
}

fn allocate(
    cli: &Cli,
    config: RunConfig,
    a: &AllocateArgs,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let mut settings = config.allocate.clone();
    if let Some(b) = a.budget {
        settings.per_school_budget = b;
    }
    if let Some(c) = a.cap {
        settings.cap = Some(c);
    }
    let schools = read_schools_csv(&a.schools)?;
    let budget = settings.per_school_budget;
    let uniform = uniform_allocation(schools.len(), budget)?;
    let informed = informed_allocation(&schools, budget, settings.cap())?;
    let feasibility = check_feasibility(&informed, &schools)?;
    if !feasibility.feasible {
        return Err(Failure::Run(Error::Invariant(format!(
            "informed plan violates its constraints: {:?}",
            feasibility.violations
        ))));
    }
    let n = schools.len() as f64;
    let draw = DrawGain {
        centralized: uniform.objective(&schools) / n,
        decentralized: informed.objective(&schools) / n,
    };
    let report = GainReport::from_draws(&[draw])?;
    let json = json!({
        "per_school_budget": budget,
        "cap": settings.cap(),
        "schools": schools.iter().map(|s| s.id).collect::<Vec<_>>(),
        "uniform": uniform.increments(),
        "informed": informed.increments(),
        "gain": report,
    });
    let csv = allocation_csv(&schools, &uniform, &informed)?;
    emit(
        cli,
        out,
        &render_allocation(&schools, &uniform, &informed),
        Some(&csv),
        &json,
    )
}

fn gains(
    cli: &Cli,
    config: RunConfig,
    a: &GainsArgs,
    out: &mut dyn Write,
) -> std::result::Result<(), Failure> {
    let mut g = config.gains.clone();
    if let Some(d) = &a.distribution {
        g.distribution = d.clone();
    }
    if let Some(n) = a.schools {
        g.n_schools = n;
    }
    if let Some(b) = &a.budgets {
        g.budgets = b.clone();
    }
    if let Some(c) = a.cap_multiplier {
        g.cap_multiplier = c;
    }
    if let Some(d) = a.draws {
        g.draws = d;
    }
    if let Some(seed) = cli.seed {
        g.seed = seed;
    }
    if g.draws == 0 {
        return Err(usage(
            "--draws must be at least 1; pass --draws N with N >= 1",
        ));
    }
    if g.budgets.is_empty() {
        return Err(usage("no budgets given; pass --budgets 1.0,2.0"));
    }
    let dist: DistributionSpec = g.distribution.parse().map_err(|e: Error| {
        usage(format!(
            "--distribution {}: {e}; use point(c), uniform(a, b) or normal(mean, sd)",
            g.distribution
        ))
    })?;
    let grid: Vec<GainCell> = g
        .budgets
        .iter()
        .map(|&b| GainCell {
            n_schools: g.n_schools,
            per_school_budget: b,
            cap: g.cap_multiplier * b,
        })
        .collect();
    let rows = run_model_mc(&dist, &grid, g.draws, g.seed)?;
    let text = format!(
        "Expected gains, s ~ {dist}, {} draws\n{}",
        g.draws,
        render_gains(&rows)
    );
    let csv = gains_csv(&rows)?;
    let json = serde_json::to_value(&rows).map_err(|e| Error::Invariant(e.to_string()))?;
    emit(cli, out, &text, Some(&csv), &json)
}
