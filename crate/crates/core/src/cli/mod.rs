//! Command-line front end.
//!
//! Exit codes: 0 success, 1 unreadable or malformed input, 2 model fit
//! failure, 3 goodness-of-fit test failure, 64 usage or precondition error.

mod args;
mod data;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use args::Cli;
use args::{Command, FitArgs, GofArgs, LargeModelArgs, ModelArgs, SimulateArgs};
pub use data::{build_dataset, DesignSpec, NamedDataset, Table};

use crate::family::{validate_pair, Family, FamilyKind, Link};
use crate::glm::{fit_irls, FitError, FitOptions, FittedModel};
use crate::gof::{run_test, sw_test, Method, SwOptions, TestResult};
use crate::grouping::{make_groups, GroupingMethod};
use crate::sim::{
    large_model_study, parse_config, parse_j, run_replications, write_rates_csv, RunOptions,
    SettingSpec, SimConfig, SimError, LARGE_MODEL_DIMS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FIT: i32 = 2;
pub const EXIT_TEST: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Usage(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("test failed: {0}")]
    Test(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Fit(_) => EXIT_FIT,
            CliError::Test(_) => EXIT_TEST,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Io(_) | SimError::Csv(_) => CliError::Input(e.to_string()),
            SimError::Fit(_) => CliError::Fit(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn fit_error(e: FitError) -> CliError {
    match e {
        FitError::InvalidDataset(_)
        | FitError::InvalidResponse { .. }
        | FitError::InvalidPair { .. }
        | FitError::Family(_) => CliError::Usage(e.to_string()),
        _ => CliError::Fit(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub family: Family,
    pub link: Link,
    pub n: usize,
    pub d: usize,
    pub coefficients: Vec<Coefficient>,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    pub log_likelihood: f64,
}

impl ModelSummary {
    fn new(model: &FittedModel, columns: &[String]) -> Self {
        ModelSummary {
            family: model.family,
            link: model.link,
            n: model.n(),
            d: model.beta.len(),
            coefficients: columns
                .iter()
                .zip(&model.beta)
                .map(|(name, &estimate)| Coefficient {
                    name: name.clone(),
                    estimate,
                })
                .collect(),
            iterations: model.iterations,
            converged: model.converged,
            score_norm: model.score_norm,
            log_likelihood: model.log_likelihood,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub command: String,
    pub response: String,
    pub model: ModelSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedAnalysis {
    pub groups: usize,
    pub grouping: GroupingMethod,
    pub interior_endpoints: Vec<f64>,
    pub results: Vec<TestResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport {
    pub command: String,
    pub response: String,
    pub model: ModelSummary,
    pub alpha: f64,
    pub analyses: Vec<GroupedAnalysis>,
    /// Tests that do not use a grouping (SW).
    pub ungrouped: Vec<TestResult>,
    pub rejected: Vec<String>,
    pub warnings: Vec<String>,
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Gof(a) => cmd_gof(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::LargeModelStudy(a) => cmd_large_model(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn default_link(kind: FamilyKind) -> Link {
    match kind {
        FamilyKind::Normal => Link::Identity,
        FamilyKind::Bernoulli => Link::Logit,
        _ => Link::Log,
    }
}

fn resolve_family(args: &ModelArgs) -> Result<(Family, Link), CliError> {
    let kind: FamilyKind = args
        .family
        .parse()
        .map_err(|e: crate::family::FamilyError| CliError::Usage(e.to_string()))?;
    let dispersion = match kind {
        FamilyKind::Bernoulli | FamilyKind::Poisson => 1.0,
        _ => args.dispersion.ok_or_else(|| {
            CliError::Usage(format!("--dispersion is required for the {kind} family"))
        })?,
    };
    let family = Family::new(kind, dispersion).map_err(|e| CliError::Usage(e.to_string()))?;
    let link = match &args.link {
        Some(name) => name
            .parse()
            .map_err(|e: crate::family::FamilyError| CliError::Usage(e.to_string()))?,
        None => default_link(kind),
    };
    Ok((family, link))
}

fn fit_model(args: &ModelArgs) -> Result<(NamedDataset, FittedModel, Vec<String>), CliError> {
    let (family, link) = resolve_family(args)?;
    let mut warnings = Vec::new();
    if !validate_pair(&family, link) {
        if !args.allow_invalid_pair {
            return Err(CliError::Usage(format!(
                "the {family} family with the {link} link is not supported (use --allow-invalid-pair to override)"
            )));
        }
        warnings.push(format!(
            "unsupported pair {family}/{link} fitted on request"
        ));
    }
    let table = Table::read(&args.input)?;
    let spec = DesignSpec {
        response: &args.response,
        covariates: args.covariates.as_deref(),
        one_hot: &args.one_hot,
        intercept: !args.no_intercept,
    };
    let named = build_dataset(&table, &spec)?;
    let options = FitOptions {
        allow_invalid_pair: args.allow_invalid_pair,
        ..FitOptions::default()
    };
    let model = fit_irls(&named.data, &family, link, &options).map_err(fit_error)?;
    model.ensure_converged().map_err(fit_error)?;
    Ok((named, model, warnings))
}

fn write_json<T: Serialize>(value: &T, output: Option<&Path>) -> Result<(), CliError> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    match output {
        Some(path) => {
            fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(e.to_string())),
    }
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let (named, model, warnings) = fit_model(&args.model)?;
    let report = FitReport {
        command: "fit".into(),
        response: args.model.response.clone(),
        model: ModelSummary::new(&model, &named.columns),
        warnings,
    };
    write_json(&report, args.model.output.as_deref())
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>, CliError> {
    let mut methods: Vec<Method> = Vec::new();
    for name in names {
        let m: Method = name
            .trim()
            .parse()
            .map_err(|e: crate::gof::GofError| CliError::Usage(e.to_string()))?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("no tests requested".into()));
    }
    Ok(methods)
}

fn parse_grouping(text: &str) -> Result<GroupingMethod, CliError> {
    text.parse()
        .map_err(|e: crate::grouping::GroupingError| CliError::Usage(e.to_string()))
}

pub fn cmd_gof(args: &GofArgs) -> Result<(), CliError> {
    let methods = parse_methods(&args.tests)?;
    let grouping = parse_grouping(&args.grouping)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "--alpha {} outside (0, 1)",
            args.alpha
        )));
    }
    let fixed = matches!(grouping, GroupingMethod::Fixed(_));
    let group_counts: Vec<usize> = match &grouping {
        GroupingMethod::Fixed(k) => vec![k.len() + 1],
        _ => args.groups.clone(),
    };
    for &g in &group_counts {
        for m in &methods {
            let min = match m {
                Method::HlClassic | Method::NaiveGhl => 3,
                Method::Ghl => 2,
                Method::Sw => 0,
            };
            if g < min {
                return Err(CliError::Usage(format!("{m} needs G >= {min}, got {g}")));
            }
        }
    }
    let (family, _) = resolve_family(&args.model)?;
    if methods.contains(&Method::HlClassic) && family.kind != FamilyKind::Bernoulli {
        return Err(CliError::Usage(
            "hl_classic requires the bernoulli family".into(),
        ));
    }
    if methods.contains(&Method::Sw) && args.sw_boot < crate::gof::SW_MIN_REPLICATES {
        return Err(CliError::Usage(format!(
            "--sw-boot must be at least {}",
            crate::gof::SW_MIN_REPLICATES
        )));
    }

    let (named, model, mut warnings) = fit_model(&args.model)?;
    let data = &named.data;
    let d = data.d();
    let sw = SwOptions {
        replicates: args.sw_boot,
        seed: args.seed,
    };
    let grouped: Vec<Method> = methods.iter().copied().filter(|m| m.is_grouped()).collect();

    let mut analyses = Vec::new();
    if !grouped.is_empty() {
        for &g in &group_counts {
            let spec = make_groups(&model, &grouping, g)
                .map_err(|e| CliError::Test(format!("G = {g}: {e}")))?;
            let mut local = Vec::new();
            if g <= d {
                local.push(format!(
                    "G = {g} does not exceed the number of parameters d = {d}"
                ));
            }
            let results = grouped
                .iter()
                .map(|&m| {
                    run_test(m, &model, data, &spec, &sw)
                        .map_err(|e| CliError::Test(format!("{m}, G = {g}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            analyses.push(GroupedAnalysis {
                groups: spec.groups(),
                grouping: grouping.clone(),
                interior_endpoints: spec.interior_endpoints().to_vec(),
                results,
                warnings: local,
            });
            if fixed {
                break;
            }
        }
    }
    let ungrouped = if methods.contains(&Method::Sw) {
        let result = with_threads(args.threads, || sw_test(&model, data, &sw))?
            .map_err(|e| CliError::Test(format!("sw: {e}")))?;
        vec![result]
    } else {
        Vec::new()
    };

    let mut rejected = Vec::new();
    for a in &analyses {
        for r in &a.results {
            if r.p_value <= args.alpha {
                rejected.push(format!("{} (G = {})", r.method, a.groups));
            }
        }
    }
    for r in &ungrouped {
        if r.p_value <= args.alpha {
            rejected.push(r.method.to_string());
        }
    }
    if analyses.iter().any(|a| !a.warnings.is_empty()) {
        warnings.push("some group counts do not exceed d; see per-analysis warnings".into());
    }
    let report = GofReport {
        command: "gof".into(),
        response: args.model.response.clone(),
        model: ModelSummary::new(&model, &named.columns),
        alpha: args.alpha,
        analyses,
        ungrouped,
        rejected,
        warnings,
    };
    write_json(&report, args.model.output.as_deref())
}

fn read_config(path: Option<&PathBuf>) -> Result<SimConfig, CliError> {
    match path {
        None => Ok(SimConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

fn write_csv(results: &[crate::sim::SimResult], path: Option<&PathBuf>) -> Result<(), CliError> {
    if let Some(p) = path {
        let file =
            fs::File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        write_rates_csv(results, file)?;
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = read_config(args.config.as_ref())?;
    let setting = match &args.setting {
        Some(s) => s.parse()?,
        None => cfg
            .setting
            .ok_or_else(|| CliError::Usage("--setting is required".into()))?,
    };
    let j = match &args.j {
        Some(text) => Some(parse_j(text).map_err(CliError::Usage)?),
        None => cfg.j,
    };
    let tests = match &args.tests {
        Some(list) => parse_methods(list)?,
        None => cfg
            .tests
            .clone()
            .unwrap_or_else(|| vec![Method::Ghl, Method::NaiveGhl]),
    };
    let grouping = match &args.grouping {
        Some(text) => parse_grouping(text)?,
        None => cfg
            .grouping
            .clone()
            .unwrap_or(GroupingMethod::VarianceWeighted),
    };
    let n = args.n.or(cfg.n).unwrap_or(100);
    let d = args.d.or(cfg.d);
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let spec = SettingSpec::new(setting, n, j, d, seed)?;
    let options = RunOptions {
        tests,
        reps: args.reps.or(cfg.reps).unwrap_or(1000),
        alpha: args.alpha.or(cfg.alpha).unwrap_or(0.05),
        groups: args.groups.or(cfg.groups).unwrap_or(10),
        grouping,
        sw_boot: args.sw_boot.or(cfg.sw_boot).unwrap_or(200),
        sw_reps: args.sw_reps.or(cfg.sw_reps),
    };
    if options.tests.contains(&Method::Sw) && options.sw_boot < crate::gof::SW_MIN_REPLICATES {
        return Err(CliError::Usage(format!(
            "--sw-boot must be at least {}",
            crate::gof::SW_MIN_REPLICATES
        )));
    }
    let result = with_threads(args.threads.or(cfg.threads), || {
        run_replications(&spec, &options)
    })??;
    write_csv(std::slice::from_ref(&result), args.csv.as_ref())?;
    write_json(&result, args.output.as_deref())
}

pub fn cmd_large_model(args: &LargeModelArgs) -> Result<(), CliError> {
    let cfg = read_config(args.config.as_ref())?;
    let ds = args
        .ds
        .clone()
        .or(cfg.ds.clone())
        .unwrap_or_else(|| LARGE_MODEL_DIMS.to_vec());
    let grouping = match &args.grouping {
        Some(text) => parse_grouping(text)?,
        None => cfg
            .grouping
            .clone()
            .unwrap_or(GroupingMethod::VarianceWeighted),
    };
    let options = RunOptions {
        tests: vec![Method::NaiveGhl, Method::Ghl],
        reps: args.reps.or(cfg.reps).unwrap_or(500),
        alpha: args.alpha.or(cfg.alpha).unwrap_or(0.05),
        groups: args.groups.or(cfg.groups).unwrap_or(10),
        grouping,
        sw_boot: 200,
        sw_reps: None,
    };
    let n = args.n.or(cfg.n).unwrap_or(100);
    let seed = args.seed.or(cfg.seed).unwrap_or(1);
    let study = with_threads(args.threads.or(cfg.threads), || {
        large_model_study(&ds, n, &options, seed)
    })??;
    write_csv(&study.results, args.csv.as_ref())?;
    write_json(&study, args.output.as_deref())
}
