//! Replication engine: generate, fit the null model, test, tally.

use std::collections::BTreeMap;
use std::io::Write;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::settings::{generate, SettingId, SettingSpec};
use super::stats::{bonferroni, mcnemar_compare, wilson_ci};
use super::SimError;
use crate::family::{validate_pair, Link};
use crate::glm::{fit_irls, Dataset, FitOptions, FittedModel};
use crate::gof::{run_test, sw_test, Method, SwOptions};
use crate::grouping::{make_groups, GroupingMethod};
use crate::sampling::stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub tests: Vec<Method>,
    pub reps: usize,
    pub alpha: f64,
    pub groups: usize,
    pub grouping: GroupingMethod,
    /// Bootstrap replicates per SW evaluation.
    pub sw_boot: usize,
    /// Evaluate SW only on the first `sw_reps` replications.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sw_reps: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            tests: vec![Method::Ghl, Method::NaiveGhl],
            reps: 1000,
            alpha: 0.05,
            groups: 10,
            grouping: GroupingMethod::VarianceWeighted,
            sw_boot: 200,
            sw_reps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardCause {
    Generation,
    FitFailure,
    NonConvergence,
    Grouping,
    TestFailure,
}

impl DiscardCause {
    pub const ALL: [DiscardCause; 5] = [
        DiscardCause::Generation,
        DiscardCause::FitFailure,
        DiscardCause::NonConvergence,
        DiscardCause::Grouping,
        DiscardCause::TestFailure,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TestRecord {
    statistic: f64,
    p_value: f64,
    df: Option<usize>,
}

type RepOutcome = Result<Vec<Option<TestRecord>>, DiscardCause>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub method: Method,
    /// Completed replications on which the test was evaluated.
    pub evaluated: usize,
    pub rejections: usize,
    pub rate: Option<f64>,
    pub wilson_lower: Option<f64>,
    pub wilson_upper: Option<f64>,
    pub statistic_mean: Option<f64>,
    pub statistic_variance: Option<f64>,
    pub df_mean: Option<f64>,
    /// One character per replication: `1` rejected, `0` not rejected,
    /// `.` discarded or not evaluated.
    pub flags: String,
}

impl TestSummary {
    pub fn flag_vector(&self) -> Vec<Option<bool>> {
        self.flags
            .chars()
            .map(|c| match c {
                '1' => Some(true),
                '0' => Some(false),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: Method,
    pub second: Method,
    pub pairs: usize,
    pub only_first: usize,
    pub only_second: usize,
    pub p_value: f64,
    pub p_bonferroni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub setting: SettingSpec,
    pub options: RunOptions,
    pub reps_requested: usize,
    pub reps_completed: usize,
    pub reps_discarded: usize,
    pub discards: BTreeMap<DiscardCause, usize>,
    pub summaries: Vec<TestSummary>,
    pub comparisons: Vec<Comparison>,
    pub warnings: Vec<String>,
}

impl SimResult {
    pub fn summary(&self, method: Method) -> Option<&TestSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn rate(&self, method: Method) -> Option<f64> {
        self.summary(method).and_then(|s| s.rate)
    }
}

/// Fit the setting's null model. Links other than log are warm-started
/// from the means of a log-link fit when that pair is valid.
pub fn fit_null(spec: &SettingSpec, data: &Dataset) -> Result<FittedModel, DiscardCause> {
    let mut options = FitOptions::default();
    if spec.fit_link != Link::Log && validate_pair(&spec.fit_family, Link::Log) {
        if let Ok(start) = fit_irls(data, &spec.fit_family, Link::Log, &FitOptions::default()) {
            if start.converged {
                options.initial_mu = Some(start.mu);
            }
        }
    }
    let model = fit_irls(data, &spec.fit_family, spec.fit_link, &options)
        .map_err(|_| DiscardCause::FitFailure)?;
    if !model.converged {
        return Err(DiscardCause::NonConvergence);
    }
    Ok(model)
}

fn run_one(spec: &SettingSpec, options: &RunOptions, index: usize) -> RepOutcome {
    let mut rng = stream(spec.seed, index as u64);
    let sim = generate(spec, &mut rng).map_err(|_| DiscardCause::Generation)?;
    let sw_seed = rng.next_u64();
    let model = fit_null(spec, &sim.data)?;
    let groups = if options.tests.iter().any(|m| m.is_grouped()) {
        Some(
            make_groups(&model, &options.grouping, options.groups)
                .map_err(|_| DiscardCause::Grouping)?,
        )
    } else {
        None
    };
    let sw = SwOptions {
        replicates: options.sw_boot,
        seed: sw_seed,
    };
    options
        .tests
        .iter()
        .map(|&method| {
            let result = match (method, &groups) {
                (Method::Sw, _) if options.sw_reps.is_some_and(|limit| index >= limit) => {
                    return Ok(None)
                }
                (Method::Sw, _) => sw_test(&model, &sim.data, &sw),
                (_, Some(g)) => run_test(method, &model, &sim.data, g, &sw),
                (_, None) => unreachable!("grouped tests always have a grouping"),
            };
            result
                .map(|r| {
                    Some(TestRecord {
                        statistic: r.statistic,
                        p_value: r.p_value,
                        df: r.df,
                    })
                })
                .map_err(|_| DiscardCause::TestFailure)
        })
        .collect()
}

fn validate(options: &RunOptions) -> Result<(), SimError> {
    if options.reps == 0 {
        return Err(SimError::InvalidArgument("reps must be at least 1".into()));
    }
    if !(options.alpha > 0.0 && options.alpha <= 1.0) {
        return Err(SimError::InvalidArgument(format!(
            "alpha {} outside (0, 1]",
            options.alpha
        )));
    }
    if options.tests.is_empty() {
        return Err(SimError::InvalidArgument("no tests requested".into()));
    }
    let min_groups = options
        .tests
        .iter()
        .map(|m| match m {
            Method::HlClassic | Method::NaiveGhl => 3,
            Method::Ghl => 2,
            Method::Sw => 0,
        })
        .max()
        .unwrap_or(0);
    if !matches!(options.grouping, GroupingMethod::Fixed(_)) && options.groups < min_groups {
        return Err(SimError::InvalidArgument(format!(
            "G = {} is too small for the requested tests (need {min_groups})",
            options.groups
        )));
    }
    Ok(())
}

/// Run `options.reps` replications of `spec`. Replication `i` uses stream
/// `i` of `spec.seed`, and tallies are accumulated in replication order, so
/// the result does not depend on the thread count.
pub fn run_replications(spec: &SettingSpec, options: &RunOptions) -> Result<SimResult, SimError> {
    validate(options)?;
    let outcomes: Vec<RepOutcome> = (0..options.reps)
        .into_par_iter()
        .map(|i| run_one(spec, options, i))
        .collect();

    let mut discards: BTreeMap<DiscardCause, usize> =
        DiscardCause::ALL.iter().map(|&c| (c, 0)).collect();
    for outcome in &outcomes {
        if let Err(cause) = outcome {
            *discards.get_mut(cause).unwrap() += 1;
        }
    }
    let reps_discarded: usize = discards.values().sum();

    let summaries: Vec<TestSummary> = options
        .tests
        .iter()
        .enumerate()
        .map(|(t, &method)| summarize(method, t, &outcomes, options.alpha))
        .collect();

    let mut comparisons = Vec::new();
    let pair_count = summaries.len() * summaries.len().saturating_sub(1) / 2;
    for a in 0..summaries.len() {
        for b in a + 1..summaries.len() {
            let (fa, fb): (Vec<bool>, Vec<bool>) = summaries[a]
                .flag_vector()
                .into_iter()
                .zip(summaries[b].flag_vector())
                .filter_map(|(x, y)| Some((x?, y?)))
                .unzip();
            if fa.is_empty() {
                continue;
            }
            let m = mcnemar_compare(&fa, &fb)?;
            comparisons.push(Comparison {
                first: summaries[a].method,
                second: summaries[b].method,
                pairs: fa.len(),
                only_first: m.only_first,
                only_second: m.only_second,
                p_value: m.p_value,
                p_bonferroni: bonferroni(m.p_value, pair_count),
            });
        }
    }

    let mut warnings = spec.warnings();
    if reps_discarded > 0 {
        warnings.push(format!(
            "{reps_discarded} of {} replications discarded",
            options.reps
        ));
    }
    Ok(SimResult {
        setting: spec.clone(),
        options: options.clone(),
        reps_requested: options.reps,
        reps_completed: options.reps - reps_discarded,
        reps_discarded,
        discards,
        summaries,
        comparisons,
        warnings,
    })
}

fn summarize(method: Method, t: usize, outcomes: &[RepOutcome], alpha: f64) -> TestSummary {
    let mut flags = String::with_capacity(outcomes.len());
    let (mut evaluated, mut rejections) = (0usize, 0usize);
    let (mut mean, mut m2, mut df_sum, mut df_count) = (0.0, 0.0, 0.0, 0usize);
    for outcome in outcomes {
        match outcome.as_ref().ok().and_then(|recs| recs[t]) {
            Some(rec) => {
                evaluated += 1;
                let reject = rec.p_value <= alpha;
                rejections += reject as usize;
                flags.push(if reject { '1' } else { '0' });
                let delta = rec.statistic - mean;
                mean += delta / evaluated as f64;
                m2 += delta * (rec.statistic - mean);
                if let Some(df) = rec.df {
                    df_sum += df as f64;
                    df_count += 1;
                }
            }
            None => flags.push('.'),
        }
    }
    let (rate, lower, upper) = if evaluated > 0 {
        let (lo, hi) = wilson_ci(rejections, evaluated, 0.95).expect("valid counts");
        (
            Some(rejections as f64 / evaluated as f64),
            Some(lo),
            Some(hi),
        )
    } else {
        (None, None, None)
    };
    TestSummary {
        method,
        evaluated,
        rejections,
        rate,
        wilson_lower: lower,
        wilson_upper: upper,
        statistic_mean: (evaluated > 0).then_some(mean),
        statistic_variance: (evaluated > 1).then(|| m2 / (evaluated - 1) as f64),
        df_mean: (df_count > 0).then(|| df_sum / df_count as f64),
        flags,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeModelRow {
    pub d: usize,
    pub reps_completed: usize,
    pub naive_mean: Option<f64>,
    pub naive_rate: Option<f64>,
    pub ghl_mean: Option<f64>,
    pub ghl_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeModelStudy {
    pub n: usize,
    pub groups: usize,
    /// Reference means: `G − 2` for the naive statistic, `G − 1` for GHL.
    pub naive_reference: f64,
    pub ghl_reference: f64,
    pub rows: Vec<LargeModelRow>,
    pub results: Vec<SimResult>,
}

/// Mean naive and GHL statistics as the number of parameters grows at
/// fixed `n`.
pub fn large_model_study(
    ds: &[usize],
    n: usize,
    options: &RunOptions,
    seed: u64,
) -> Result<LargeModelStudy, SimError> {
    let options = RunOptions {
        tests: vec![Method::NaiveGhl, Method::Ghl],
        ..options.clone()
    };
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &d in ds {
        let spec = SettingSpec::new(SettingId::LargeModel, n, None, Some(d), seed)?;
        let result = run_replications(&spec, &options)?;
        let naive = result.summary(Method::NaiveGhl).unwrap();
        let ghl = result.summary(Method::Ghl).unwrap();
        rows.push(LargeModelRow {
            d,
            reps_completed: result.reps_completed,
            naive_mean: naive.statistic_mean,
            naive_rate: naive.rate,
            ghl_mean: ghl.statistic_mean,
            ghl_rate: ghl.rate,
        });
        results.push(result);
    }
    Ok(LargeModelStudy {
        n,
        groups: options.groups,
        naive_reference: options.groups as f64 - 2.0,
        ghl_reference: options.groups as f64 - 1.0,
        rows,
        results,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Flat per-test rejection table, one row per (setting, test).
pub fn write_rates_csv<W: Write>(results: &[SimResult], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "setting",
        "n",
        "j",
        "d",
        "test",
        "reps_completed",
        "evaluated",
        "rejections",
        "rate",
        "wilson_lower",
        "wilson_upper",
        "statistic_mean",
    ])?;
    for r in results {
        for s in &r.summaries {
            w.write_record([
                r.setting.id.name().to_string(),
                r.setting.n.to_string(),
                opt(r.setting.j),
                r.setting.d.map(|d| d.to_string()).unwrap_or_default(),
                s.method.name().to_string(),
                r.reps_completed.to_string(),
                s.evaluated.to_string(),
                s.rejections.to_string(),
                opt(s.rate),
                opt(s.wilson_lower),
                opt(s.wilson_upper),
                opt(s.statistic_mean),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
