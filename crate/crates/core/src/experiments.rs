//! Monte Carlo estimation, schedule-equivalence studies, full verification
//! runs, parameter sweeps and the uniform-stability comparison.
//!
//! Every trial draws its dataset, replacements and schedule from three
//! seed substreams addressed by `(master_seed, trial)`. Trials run on the
//! current rayon pool, results are collected in trial order and reduced
//! with pairwise summation, so every number is identical at any degree of
//! parallelism.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    analytic_gen_error, assemble_bound_set, gen_lower, gen_upper, hrs_uniform_bound, BoundClass,
    BoundParams, BoundSet, HrsCase,
};
use crate::engine::{
    check_huber_region, closed_form_final, relative_deviation, run_final, run_paired,
    RegimeFlags, StepSizePlan,
};
use crate::error::{Error, Result};
use crate::problems::{
    sample_dataset, verify_regularity, Family, InstanceSpec, LossClass, LossParams, ProblemInstance,
};
use crate::schedule::{check_counting_lemma, realize, ScheduleKind, ScheduleSpec};
use crate::seeds::{derive_seed, Axis};
use crate::stability::{
    check_growth_recursion, max_path_gradient, on_average_stability, within_slack,
    Violation,
};

/// Step sizes as declared in a config; constants tied to `β` and `γ` are
/// resolved against the instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepPlanSpec {
    /// `η_t = eta`.
    Constant { eta: f64 },
    /// `η_t = scale / t`.
    InverseT { scale: f64 },
    /// `η_t = c / (β t)`.
    InverseBetaT { c: f64 },
    /// `η_t = c / (β + γ)`.
    ScaledConstant { c: f64 },
    /// `η_t = scale / ((t − 1) mod period + 1)`, period defaulting to `n`.
    EpochRestart {
        scale: f64,
        #[serde(default)]
        period: Option<usize>,
    },
    Custom { values: Vec<f64> },
}

impl StepPlanSpec {
    pub fn resolve(&self, instance: &ProblemInstance, horizon: usize, n: usize) -> Result<StepSizePlan> {
        let p = instance.params();
        let plan = match self {
            StepPlanSpec::Constant { eta } => StepSizePlan::constant(*eta, horizon),
            StepPlanSpec::InverseT { scale } => StepSizePlan::inverse_t(*scale, horizon),
            StepPlanSpec::InverseBetaT { c } => {
                if p.beta <= 0.0 {
                    return Err(Error::config("step_plan", "inverse_beta_t needs beta > 0"));
                }
                StepSizePlan::inverse_t(c / p.beta, horizon)
            }
            StepPlanSpec::ScaledConstant { c } => {
                if p.beta + p.gamma <= 0.0 {
                    return Err(Error::config("step_plan", "scaled_constant needs beta + gamma > 0"));
                }
                StepSizePlan::constant(c / (p.beta + p.gamma), horizon)
            }
            StepPlanSpec::EpochRestart { scale, period } => {
                StepSizePlan::epoch_restart(*scale, period.unwrap_or(n), horizon)
            }
            StepPlanSpec::Custom { values } => {
                if values.len() != horizon {
                    return Err(Error::config(
                        "step_plan.values",
                        format!("expected T = {horizon} values, found {}", values.len()),
                    ));
                }
                StepSizePlan::custom(values.clone())
            }
        };
        plan.validate()?;
        Ok(plan)
    }

    fn with_c(&self, c: f64) -> Result<Self> {
        match self {
            StepPlanSpec::InverseBetaT { .. } => Ok(StepPlanSpec::InverseBetaT { c }),
            StepPlanSpec::ScaledConstant { .. } => Ok(StepPlanSpec::ScaledConstant { c }),
            _ => Err(Error::config(
                "grid.c",
                "sweeping c needs an inverse_beta_t or scaled_constant step plan",
            )),
        }
    }

    fn with_eta(&self, eta: f64) -> Result<Self> {
        match self {
            StepPlanSpec::Constant { .. } => Ok(StepPlanSpec::Constant { eta }),
            _ => Err(Error::config("grid.eta", "sweeping eta needs a constant step plan")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub kind: ScheduleKind,
    /// Batch size; defaults to `n` for full_batch and 1 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom_indices: Option<Vec<Vec<usize>>>,
    /// Seed for the schedule substreams; defaults to the master seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl ScheduleEntry {
    pub fn new(kind: ScheduleKind, m: usize) -> Self {
        ScheduleEntry {
            kind,
            m: Some(m),
            custom_indices: None,
            seed: None,
            label: None,
        }
    }

    pub fn batch_size(&self, n: usize) -> usize {
        self.m.unwrap_or(if self.kind == ScheduleKind::FullBatch { n } else { 1 })
    }

    pub fn display_label(&self, n: usize) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}(m={})", self.kind.name(), self.batch_size(n)))
    }

    /// The spec realized for one trial.
    pub fn spec_for_trial(&self, n: usize, horizon: usize, master_seed: u64, trial: u64) -> ScheduleSpec {
        ScheduleSpec {
            kind: self.kind,
            n,
            m: self.batch_size(n),
            horizon,
            custom_indices: self.custom_indices.clone(),
            seed: derive_seed(self.seed.unwrap_or(master_seed), trial, Axis::Schedule),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Regularity,
    CountingLemma,
    OracleEquivalence,
    HuberRegion,
    Recursion,
    StabilityBound,
    PathGradient,
    Sandwich,
    Equivalence,
    MonteCarlo,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::Regularity,
        Check::CountingLemma,
        Check::OracleEquivalence,
        Check::HuberRegion,
        Check::Recursion,
        Check::StabilityBound,
        Check::PathGradient,
        Check::Sandwich,
        Check::Equivalence,
        Check::MonteCarlo,
    ];
}

fn all_checks() -> Vec<Check> {
    Check::ALL.to_vec()
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub instance: InstanceSpec,
    pub schedules: Vec<ScheduleEntry>,
    pub step_plan: StepPlanSpec,
    pub n: usize,
    pub horizon: usize,
    pub trials: usize,
    /// Trials of the paired (n + 1 runs) stability study; defaults to
    /// `min(trials, 100)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_trials: Option<usize>,
    pub master_seed: u64,
    #[serde(default = "all_checks")]
    pub checks: Vec<Check>,
    /// Bound class; defaults to the one matching the instance family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<BoundClass>,
    /// Exploratory runs may drop diverging trials instead of failing.
    #[serde(default)]
    pub allow_exclusions: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::config("n", "dataset size must be at least 1"));
        }
        if self.schedules.is_empty() {
            return Err(Error::config("schedules", "declare at least one schedule"));
        }
        if self.stability_trials == Some(0) {
            return Err(Error::config("stability_trials", "must be at least 1"));
        }
        let prepared = Prepared::new(self)?;
        for (k, entry) in self.schedules.iter().enumerate() {
            entry
                .spec_for_trial(self.n, self.horizon, self.master_seed, 0)
                .validate()
                .map_err(|e| match e {
                    Error::Config { field, constraint } => {
                        Error::config(format!("schedules[{k}].{field}"), constraint)
                    }
                    other => other,
                })?;
        }
        drop(prepared);
        Ok(())
    }

    pub fn stability_trials(&self) -> usize {
        self.stability_trials.unwrap_or(self.trials.min(100))
    }

    fn enabled(&self, check: Check) -> bool {
        self.checks.contains(&check)
    }
}

/// Config resolved against its instance.
struct Prepared {
    instance: ProblemInstance,
    plan: StepSizePlan,
    class: BoundClass,
    loss_class: LossClass,
}

impl Prepared {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let instance = cfg.instance.build()?;
        let plan = cfg.step_plan.resolve(&instance, cfg.horizon, cfg.n)?;
        let class = match cfg.class.or_else(|| BoundClass::for_family(instance.family())) {
            Some(c) => c,
            None => return Err(Error::config("class", "required for custom instances")),
        };
        let loss_class = match class {
            BoundClass::Convex => LossClass::Convex,
            BoundClass::NonconvexLipschitz | BoundClass::NonconvexSmooth => LossClass::Nonconvex,
            BoundClass::StronglyConvex => LossClass::StronglyConvex,
        };
        Ok(Prepared {
            instance,
            plan,
            class,
            loss_class,
        })
    }
}

/// Sum by recursive halving, which keeps rounding growth logarithmic and
/// makes the result independent of how trials were scheduled.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// Sample mean with standard error `sd / √trials`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Absent when fewer than two trials were kept.
    pub stderr: Option<f64>,
    pub trials: usize,
    pub excluded: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64], excluded: usize) -> Self {
        let k = xs.len();
        if k == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: None,
                trials: 0,
                excluded,
            };
        }
        let mean = pairwise_sum(xs) / k as f64;
        let stderr = (k > 1).then(|| {
            let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
            (pairwise_sum(&sq) / (k - 1) as f64).sqrt() / (k as f64).sqrt()
        });
        Estimate {
            mean,
            stderr,
            trials: k,
            excluded,
        }
    }

    /// `|mean − target| ≤ 3·stderr`.
    pub fn agrees_with(&self, target: f64) -> Option<bool> {
        self.stderr
            .map(|se| (self.mean - target).abs() <= 3.0 * se + 1e-12 * target.abs().max(1e-300))
    }
}

/// Runs `f` on a dedicated pool of `jobs` worker threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("cannot build a pool of {jobs} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Collects per-trial results in order; diverging trials are dropped when
/// `allow_exclusions` is set and abort the estimate otherwise.
fn collect_trials<T: Send>(
    trials: usize,
    allow_exclusions: bool,
    f: impl Fn(u64) -> Result<T> + Sync + Send,
) -> Result<(Vec<T>, usize)> {
    let results: Vec<Result<T>> = (0..trials as u64).into_par_iter().map(&f).collect();
    let mut kept = Vec::with_capacity(trials);
    let mut excluded = 0;
    for (trial, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => kept.push(v),
            Err(Error::Divergence { step }) if allow_exclusions => {
                log::warn!("trial {trial} diverged at step t={step} and was excluded");
                excluded += 1;
            }
            Err(Error::Divergence { step }) => {
                return Err(Error::Argument(format!(
                    "trial {trial} diverged at step t={step}"
                )))
            }
            Err(e) => return Err(e),
        }
    }
    Ok((kept, excluded))
}

fn gen_error_samples(cfg: &ExperimentConfig, prep: &Prepared, entry: &ScheduleEntry) -> Result<Estimate> {
    let inst = &prep.instance;
    let (kept, excluded) = collect_trials(cfg.trials, cfg.allow_exclusions, |trial| {
        let data = sample_dataset(inst, cfg.n, derive_seed(cfg.master_seed, trial, Axis::Data))?;
        let sched = realize(&entry.spec_for_trial(cfg.n, cfg.horizon, cfg.master_seed, trial))?;
        let w = run_final(inst, &data, &sched, &prep.plan, inst.w1())?;
        Ok(inst.population_risk(&w)? - inst.empirical_risk(&w, &data))
    })?;
    Ok(Estimate::from_samples(&kept, excluded))
}

/// Mean ± standard error of `R(w_{T+1}) − R_S(w_{T+1})` per schedule.
pub fn estimate_gen_error(cfg: &ExperimentConfig) -> Result<Vec<(String, Estimate)>> {
    cfg.validate()?;
    let prep = Prepared::new(cfg)?;
    cfg.schedules
        .iter()
        .map(|e| Ok((e.display_label(cfg.n), gen_error_samples(cfg, &prep, e)?)))
        .collect()
}

/// What one paired trial measured.
#[derive(Clone, Debug)]
struct PairedOutcome {
    on_average: f64,
    recursion: Option<(usize, f64, Option<Violation>)>,
    max_path_gradient: Option<f64>,
    huber_region: Option<std::result::Result<(), String>>,
}

fn paired_trial(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    entry: &ScheduleEntry,
    trial: u64,
    audit: bool,
) -> Result<PairedOutcome> {
    let inst = &prep.instance;
    let data = sample_dataset(inst, cfg.n, derive_seed(cfg.master_seed, trial, Axis::Data))?;
    let repl = sample_dataset(inst, cfg.n, derive_seed(cfg.master_seed, trial, Axis::Replacements))?;
    let sched = realize(&entry.spec_for_trial(cfg.n, cfg.horizon, cfg.master_seed, trial))?;
    let pt = run_paired(inst, &data, &repl, &sched, &prep.plan, inst.w1())?;
    let on_average = on_average_stability(&pt).final_on_average;
    let recursion = if audit {
        match check_growth_recursion(&pt, prep.loss_class, inst) {
            Ok(v) => Some((v.violations.len(), v.max_slack, v.violations.first().cloned())),
            Err(_) => None,
        }
    } else {
        None
    };
    let max_path_gradient = if audit {
        std::iter::once(&pt.base)
            .chain(&pt.perturbed)
            .map(|t| max_path_gradient(inst, t))
            .try_fold(0.0_f64, |acc, g| g.map(|g| acc.max(g)))
    } else {
        None
    };
    let huber_region = (audit && inst.family() == Family::ConvexHuber)
        .then(|| check_huber_region(inst, &pt.base).map_err(|e| e.to_string()));
    Ok(PairedOutcome {
        on_average,
        recursion,
        max_path_gradient,
        huber_region,
    })
}

/// Mean ± standard error of the on-average stability per schedule.
pub fn estimate_stability(cfg: &ExperimentConfig) -> Result<Vec<(String, Estimate)>> {
    cfg.validate()?;
    let prep = Prepared::new(cfg)?;
    cfg.schedules
        .iter()
        .map(|e| {
            let (kept, excluded) = collect_trials(cfg.stability_trials(), cfg.allow_exclusions, |trial| {
                paired_trial(cfg, &prep, e, trial, false).map(|o| o.on_average)
            })?;
            Ok((e.display_label(cfg.n), Estimate::from_samples(&kept, excluded)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub passed: bool,
    pub oracle: f64,
    /// Largest minus smallest schedule mean.
    pub spread: f64,
    /// `(mean − oracle) / stderr` per schedule.
    pub z_scores: Vec<(String, f64)>,
}

/// Checks that every schedule's mean generalization error lies within
/// three standard errors of the single schedule-free oracle.
pub fn schedule_equivalence(cfg: &ExperimentConfig) -> Result<EquivalenceVerdict> {
    if cfg.schedules.len() < 2 {
        return Err(Error::config("schedules", "equivalence needs at least two schedules"));
    }
    let prep = Prepared::new(cfg)?;
    let oracle = analytic_gen_error(&prep.instance, &prep.plan, cfg.n)?;
    let estimates = estimate_gen_error(cfg)?;
    equivalence_from(&estimates, oracle)
}

fn equivalence_from(estimates: &[(String, Estimate)], oracle: f64) -> Result<EquivalenceVerdict> {
    let mut z_scores = Vec::new();
    let mut passed = true;
    for (label, est) in estimates {
        let se = est.stderr.ok_or_else(|| {
            Error::config("trials", "equivalence needs at least two trials per schedule")
        })?;
        passed &= est.agrees_with(oracle).unwrap_or(false);
        z_scores.push((label.clone(), if se > 0.0 { (est.mean - oracle) / se } else { 0.0 }));
    }
    let means = estimates.iter().map(|(_, e)| e.mean);
    let spread = means.clone().fold(f64::NEG_INFINITY, f64::max) - means.fold(f64::INFINITY, f64::min);
    Ok(EquivalenceVerdict {
        passed,
        oracle,
        spread,
        z_scores,
    })
}

/// One row of the uniform-stability comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformStabilityRow {
    pub n: usize,
    pub horizon: usize,
    /// Uniform-stability constant `2Kdη₁`.
    pub hrs: f64,
    /// On-average bound `(2L²/n) Σ_t η_t` with `L² = d`.
    pub on_average_bound: f64,
    pub gen_error: Estimate,
    /// `|mean| ≤ on_average_bound + 3·stderr`.
    pub passed: bool,
}

/// Linear loss, incremental method (round-robin, `m = 1`), `T = K n`,
/// `η_t = scale / ((t − 1) mod n + 1)`: the uniform-stability constant,
/// the on-average bound and the measured generalization error for each `n`.
pub fn uniform_stability_failure_demo(
    ns: &[usize],
    epochs: usize,
    d: usize,
    scale: f64,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<UniformStabilityRow>> {
    if ns.is_empty() {
        return Err(Error::config("ns", "list at least one dataset size"));
    }
    if epochs == 0 {
        return Err(Error::config("epochs", "must be at least 1 so that T = K n"));
    }
    if d == 0 {
        return Err(Error::config("d", "dimension must be at least 1"));
    }
    ns.iter()
        .map(|&n| {
            let horizon = epochs * n;
            let cfg = ExperimentConfig {
                name: format!("uniform_stability_n{n}"),
                instance: InstanceSpec {
                    family: Family::Linear,
                    d,
                    lipschitz: None,
                    beta: None,
                    gamma: None,
                    tau: None,
                    lambda: None,
                    w1: None,
                },
                schedules: vec![ScheduleEntry::new(ScheduleKind::RoundRobin, 1)],
                step_plan: StepPlanSpec::EpochRestart {
                    scale,
                    period: Some(n),
                },
                n,
                horizon,
                trials,
                stability_trials: None,
                master_seed,
                checks: vec![Check::MonteCarlo],
                class: None,
                allow_exclusions: false,
            };
            let prep = Prepared::new(&cfg)?;
            let hrs = hrs_uniform_bound(&HrsCase::Linear {
                d,
                epochs,
                eta1: prep.plan.eta(1),
            })?;
            let params = BoundParams::from_instance(&prep.instance);
            let on_average_bound = gen_upper(BoundClass::Convex, &params, &prep.plan, n)?.value;
            let gen_error = gen_error_samples(&cfg, &prep, &cfg.schedules[0])?;
            let se = gen_error.stderr.unwrap_or(0.0);
            let passed = gen_error.mean.abs() <= on_average_bound + 3.0 * se;
            Ok(UniformStabilityRow {
                n,
                horizon,
                hrs,
                on_average_bound,
                gen_error,
                passed,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    pub status: Status,
    /// The inequality checked, or why the check was skipped or failed.
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionSummary {
    pub passed: bool,
    pub configs: usize,
    pub violations: usize,
    pub max_slack: f64,
    pub first_violation: Option<Violation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub label: String,
    pub kind: ScheduleKind,
    pub m: usize,
    pub gen_error: Option<Estimate>,
    pub stability: Option<Estimate>,
    /// Largest measured on-average stability over the paired trials.
    pub stability_max: Option<f64>,
    pub counting_lemma: Option<bool>,
    pub oracle_max_deviation: Option<f64>,
    pub recursion: Option<RecursionSummary>,
    pub max_path_gradient: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEcho {
    pub family: Family,
    pub params: LossParams,
    pub data_scales: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub name: String,
    pub version: String,
    pub master_seed: u64,
    pub n: usize,
    pub horizon: usize,
    pub trials: usize,
    pub stability_trials: usize,
    pub instance: InstanceEcho,
    pub step_plan: StepSizePlan,
    pub schedules: Vec<ScheduleEntry>,
    pub checks: Vec<Check>,
    /// Elapsed time; kept out of the serialized report so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub wall_time: Duration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub passed: bool,
    pub metadata: Metadata,
    pub regime: RegimeFlags,
    pub bounds: BoundSet,
    pub schedules: Vec<ScheduleReport>,
    pub equivalence: Option<EquivalenceVerdict>,
    pub checks: Vec<CheckResult>,
    pub excluded_trials: usize,
}

impl ExperimentReport {
    /// One line per schedule: label, kind, m, gen-error mean and stderr,
    /// stability mean and stderr, oracle, lower, upper, stability bound.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "schedule",
            "kind",
            "m",
            "gen_mean",
            "gen_stderr",
            "stability_mean",
            "stability_stderr",
            "oracle",
            "lower",
            "upper",
            "stability_bound",
            "passed",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.schedules {
            let failed = self
                .checks
                .iter()
                .any(|c| c.schedule.as_deref() == Some(&s.label) && c.status == Status::Fail);
            wtr.write_record([
                s.label.clone(),
                s.kind.name().to_string(),
                s.m.to_string(),
                opt(s.gen_error.as_ref().map(|e| e.mean)),
                opt(s.gen_error.as_ref().and_then(|e| e.stderr)),
                opt(s.stability.as_ref().map(|e| e.mean)),
                opt(s.stability.as_ref().and_then(|e| e.stderr)),
                opt(self.bounds.analytic_oracle),
                opt(self.bounds.lower),
                opt(self.bounds.upper),
                opt(self.bounds.stability_bound),
                (!failed).to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.status == Status::Fail)
    }
}

impl fmt::Display for ExperimentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {}",
            self.metadata.name,
            if self.passed { "PASS" } else { "FAIL" }
        )?;
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Skipped => "skip",
            };
            match &c.schedule {
                Some(s) => writeln!(f, "  [{status}] {:?} ({s}): {}", c.check, c.detail)?,
                None => writeln!(f, "  [{status}] {:?}: {}", c.check, c.detail)?,
            }
        }
        Ok(())
    }
}

struct Recorder {
    checks: Vec<CheckResult>,
}

impl Recorder {
    fn push(&mut self, check: Check, schedule: Option<&str>, status: Status, detail: impl Into<String>) {
        self.checks.push(CheckResult {
            check,
            schedule: schedule.map(str::to_string),
            status,
            detail: detail.into(),
        });
    }

    fn verdict(&mut self, check: Check, schedule: Option<&str>, ok: bool, detail: impl Into<String>) {
        let status = if ok { Status::Pass } else { Status::Fail };
        self.push(check, schedule, status, detail);
    }
}

const AUDIT_TRIALS: usize = 20;
const COUNTING_TRIALS: usize = 100;

/// Runs every enabled check and folds the outcomes into one report whose
/// `passed` flag is true iff no check failed. Skipped checks carry their
/// reason and do not fail the report.
pub fn run_full_verification(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    cfg.validate()?;
    let prep = Prepared::new(cfg)?;
    let inst = &prep.instance;
    let n = cfg.n;
    let p = inst.params();
    let regime = RegimeFlags::evaluate(&prep.plan, p.beta, p.gamma);
    if let Err(e) = crate::stability::check_recursion_regime(prep.loss_class, p.beta, p.gamma, &prep.plan) {
        log::warn!("{e}");
    }
    let bounds = assemble_bound_set(prep.class, inst, &prep.plan, n)?;
    let mut rec = Recorder { checks: Vec::new() };
    let mut excluded_trials = 0;

    if cfg.enabled(Check::Regularity) {
        let seed = derive_seed(cfg.master_seed, u64::MAX >> 8, Axis::Data);
        let v = verify_regularity(inst, 1000, seed)?;
        let detail = match &v.first_violation {
            None => format!(
                "Lipschitz, smoothness, strong convexity and finite differences hold on {} samples (measured gradient norm {}, smoothness {})",
                v.trials, v.measured_lipschitz, v.measured_smoothness
            ),
            Some(msg) => msg.clone(),
        };
        rec.verdict(Check::Regularity, None, v.passed, detail);
    }

    if cfg.enabled(Check::Sandwich) {
        sandwich_check(&bounds, &mut rec);
    }

    let mut schedule_reports = Vec::new();
    for entry in &cfg.schedules {
        let label = entry.display_label(n);
        let lbl = Some(label.as_str());
        let mut report = ScheduleReport {
            label: label.clone(),
            kind: entry.kind,
            m: entry.batch_size(n),
            gen_error: None,
            stability: None,
            stability_max: None,
            counting_lemma: None,
            oracle_max_deviation: None,
            recursion: None,
            max_path_gradient: None,
        };

        if cfg.enabled(Check::CountingLemma) {
            let k = cfg.trials.min(COUNTING_TRIALS) as u64;
            let mut first_bad = None;
            for trial in 0..k {
                let sched = realize(&entry.spec_for_trial(n, cfg.horizon, cfg.master_seed, trial))?;
                let v = check_counting_lemma(&sched);
                if let Some((t, count)) = v.first_violation {
                    first_bad = Some((trial, t, count));
                    break;
                }
            }
            report.counting_lemma = Some(first_bad.is_none());
            let detail = match first_bad {
                None => format!("sum_i 1{{i in K_t}} = m at every step of {k} realizations"),
                Some((trial, t, c)) => format!("trial {trial}: step t={t} selects {c} distinct indices"),
            };
            rec.verdict(Check::CountingLemma, lbl, first_bad.is_none(), detail);
        }

        if cfg.enabled(Check::OracleEquivalence) {
            oracle_equivalence_check(cfg, &prep, entry, &mut report, &mut rec)?;
        }

        let paired_checks = [
            Check::Recursion,
            Check::StabilityBound,
            Check::PathGradient,
            Check::HuberRegion,
        ];
        if paired_checks.iter().any(|&c| cfg.enabled(c)) {
            excluded_trials += paired_checks_for(cfg, &prep, entry, &bounds, &mut report, &mut rec);
        }

        if cfg.enabled(Check::MonteCarlo) || cfg.enabled(Check::Equivalence) {
            match gen_error_samples(cfg, &prep, entry) {
                Ok(est) => {
                    excluded_trials += est.excluded;
                    report.gen_error = Some(est);
                }
                Err(e) => {
                    let status = if matches!(e, Error::OutsideAnalyticRegion(_)) {
                        Status::Skipped
                    } else {
                        Status::Fail
                    };
                    rec.push(Check::MonteCarlo, lbl, status, format!("generalization estimate unavailable: {e}"));
                }
            }
        }
        if cfg.enabled(Check::MonteCarlo) {
            if let Some(est) = &report.gen_error {
                monte_carlo_check(est, &bounds, lbl, cfg.allow_exclusions, &mut rec);
            }
        }
        schedule_reports.push(report);
    }

    let mut equivalence = None;
    if cfg.enabled(Check::Equivalence) {
        let estimates: Vec<(String, Estimate)> = schedule_reports
            .iter()
            .filter_map(|s| s.gen_error.clone().map(|e| (s.label.clone(), e)))
            .collect();
        match (bounds.analytic_oracle, estimates.len()) {
            (None, _) => rec.push(Check::Equivalence, None, Status::Skipped, "no analytic oracle for this configuration"),
            (Some(_), k) if k < 2 => rec.push(
                Check::Equivalence,
                None,
                Status::Skipped,
                "needs generalization estimates for at least two schedules",
            ),
            (Some(_), _) if cfg.trials < 2 => {
                rec.push(Check::Equivalence, None, Status::Skipped, "stderr undefined with one trial")
            }
            (Some(oracle), _) => {
                let v = equivalence_from(&estimates, oracle)?;
                rec.verdict(
                    Check::Equivalence,
                    None,
                    v.passed,
                    format!(
                        "every schedule mean within 3 stderr of the oracle {oracle}; spread {}",
                        v.spread
                    ),
                );
                equivalence = Some(v);
            }
        }
    }

    let passed = rec.checks.iter().all(|c| c.status != Status::Fail);
    let metadata = Metadata {
        name: cfg.name.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.master_seed,
        n,
        horizon: cfg.horizon,
        trials: cfg.trials,
        stability_trials: cfg.stability_trials(),
        instance: InstanceEcho {
            family: inst.family(),
            params: inst.params().clone(),
            data_scales: inst.data_scales().to_vec(),
        },
        step_plan: prep.plan.clone(),
        schedules: cfg.schedules.clone(),
        checks: cfg.checks.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
        wall_time: start.elapsed(),
    };
    Ok(ExperimentReport {
        passed,
        metadata,
        regime,
        bounds,
        schedules: schedule_reports,
        equivalence,
        checks: rec.checks,
        excluded_trials,
    })
}

fn sandwich_check(bounds: &BoundSet, rec: &mut Recorder) {
    let mut parts = Vec::new();
    let mut ok = true;
    if let (Some(lo), Some(or)) = (bounds.lower, bounds.analytic_oracle) {
        ok &= within_slack(lo, or);
        parts.push(format!("lower {lo} <= oracle {or}"));
    }
    if let (Some(or), Some(up)) = (bounds.analytic_oracle, bounds.upper) {
        ok &= within_slack(or, up);
        parts.push(format!("oracle {or} <= upper {up}"));
    }
    if parts.is_empty() {
        let why = if bounds.reasons.is_empty() {
            "fewer than two of lower, oracle, upper apply".to_string()
        } else {
            bounds.reasons.join("; ")
        };
        rec.push(Check::Sandwich, None, Status::Skipped, format!("skipped: {why}"));
    } else {
        rec.verdict(Check::Sandwich, None, ok, parts.join(", "));
    }
}

fn oracle_equivalence_check(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    entry: &ScheduleEntry,
    report: &mut ScheduleReport,
    rec: &mut Recorder,
) -> Result<()> {
    let inst = &prep.instance;
    let label = report.label.clone();
    let k = cfg.trials.min(AUDIT_TRIALS) as u64;
    let mut worst = 0.0_f64;
    for trial in 0..k {
        let data = sample_dataset(inst, cfg.n, derive_seed(cfg.master_seed, trial, Axis::Data))?;
        let sched = realize(&entry.spec_for_trial(cfg.n, cfg.horizon, cfg.master_seed, trial))?;
        let closed = match closed_form_final(inst, &data, &sched, &prep.plan, inst.w1()) {
            Ok(w) => w,
            Err(e) => {
                rec.push(Check::OracleEquivalence, Some(&label), Status::Skipped, format!("skipped: {e}"));
                return Ok(());
            }
        };
        let w = match run_final(inst, &data, &sched, &prep.plan, inst.w1()) {
            Ok(w) => w,
            Err(e) => {
                rec.verdict(Check::OracleEquivalence, Some(&label), false, format!("trial {trial}: {e}"));
                return Ok(());
            }
        };
        worst = worst.max(relative_deviation(&w, &closed));
    }
    report.oracle_max_deviation = Some(worst);
    rec.verdict(
        Check::OracleEquivalence,
        Some(&label),
        worst <= 1e-9,
        format!("max relative deviation between run and closed form over {k} trials: {worst:e} (tolerance 1e-9)"),
    );
    Ok(())
}

/// Runs the paired stability trials and records the checks that need
/// them. Returns the number of excluded trials.
fn paired_checks_for(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    entry: &ScheduleEntry,
    bounds: &BoundSet,
    report: &mut ScheduleReport,
    rec: &mut Recorder,
) -> usize {
    let label = report.label.clone();
    let lbl = Some(label.as_str());
    let trials = cfg.stability_trials();
    let outcome = collect_trials(trials, cfg.allow_exclusions, |trial| {
        paired_trial(cfg, prep, entry, trial, (trial as usize) < AUDIT_TRIALS.max(trials))
    });
    let (outcomes, excluded) = match outcome {
        Ok(v) => v,
        Err(e) => {
            for c in [Check::Recursion, Check::StabilityBound, Check::PathGradient, Check::HuberRegion] {
                if cfg.enabled(c) {
                    rec.verdict(c, lbl, false, format!("paired trials failed: {e}"));
                }
            }
            return 0;
        }
    };
    let values: Vec<f64> = outcomes.iter().map(|o| o.on_average).collect();
    report.stability = Some(Estimate::from_samples(&values, excluded));
    let stab_max = values.iter().copied().fold(0.0_f64, f64::max);
    report.stability_max = Some(stab_max);

    if cfg.enabled(Check::Recursion) {
        let audited: Vec<_> = outcomes.iter().filter_map(|o| o.recursion.clone()).collect();
        let p = prep.instance.params();
        if let Err(e) = crate::stability::check_recursion_regime(prep.loss_class, p.beta, p.gamma, &prep.plan) {
            rec.push(Check::Recursion, lbl, Status::Skipped, format!("skipped: {e}"));
        } else {
            let violations: usize = audited.iter().map(|a| a.0).sum();
            let max_slack = audited.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
            let first = audited.iter().find_map(|a| a.2.clone());
            report.recursion = Some(RecursionSummary {
                passed: violations == 0,
                configs: audited.len(),
                violations,
                max_slack,
                first_violation: first.clone(),
            });
            let detail = match first {
                None => format!(
                    "growth recursion ({:?}) holds at every (t, i) of {} paired trials; max lhs - rhs = {max_slack:e}",
                    prep.loss_class,
                    audited.len()
                ),
                Some(v) => format!(
                    "{violations} violations; first at t={}, i={}: {} > {}",
                    v.t, v.i, v.lhs, v.rhs
                ),
            };
            rec.verdict(Check::Recursion, lbl, violations == 0, detail);
        }
    }

    if cfg.enabled(Check::StabilityBound) {
        match bounds.stability_bound {
            Some(b) => rec.verdict(
                Check::StabilityBound,
                lbl,
                within_slack(stab_max, b),
                format!("max on-average stability {stab_max} <= bound {b} over {} trials", values.len()),
            ),
            None => rec.push(Check::StabilityBound, lbl, Status::Skipped, "skipped: stability bound refused"),
        }
    }

    if cfg.enabled(Check::PathGradient) {
        if prep.loss_class == LossClass::StronglyConvex {
            let max = outcomes
                .iter()
                .filter_map(|o| o.max_path_gradient)
                .fold(0.0_f64, f64::max);
            report.max_path_gradient = Some(max);
            let cap = prep.instance.recursion_constant(LossClass::StronglyConvex);
            rec.verdict(
                Check::PathGradient,
                lbl,
                within_slack(max, cap),
                format!("max path gradient {max} <= 4L = {cap}"),
            );
        } else {
            rec.push(Check::PathGradient, lbl, Status::Skipped, "applies to the strongly convex class only");
        }
    }

    if cfg.enabled(Check::HuberRegion) {
        if prep.instance.family() == Family::ConvexHuber {
            if prep.plan.max() * prep.instance.params().beta > 1.0 + 1e-12 {
                rec.push(Check::HuberRegion, lbl, Status::Skipped, "skipped: needs eta_t <= 1/beta");
            } else {
                let bad = outcomes
                    .iter()
                    .filter_map(|o| o.huber_region.clone())
                    .find_map(|r| r.err());
                let ok = bad.is_none();
                rec.verdict(
                    Check::HuberRegion,
                    lbl,
                    ok,
                    bad.unwrap_or_else(|| "|w_t^d - w_1^d| <= tau/2 at every step".into()),
                );
            }
        } else {
            rec.push(Check::HuberRegion, lbl, Status::Skipped, "applies to convex_huber only");
        }
    }
    excluded
}

fn monte_carlo_check(est: &Estimate, bounds: &BoundSet, lbl: Option<&str>, allow_exclusions: bool, rec: &mut Recorder) {
    let Some(se) = est.stderr else {
        rec.push(Check::MonteCarlo, lbl, Status::Skipped, "stderr undefined with one trial");
        return;
    };
    let mut parts = Vec::new();
    let mut ok = true;
    if est.excluded > 0 && !allow_exclusions {
        ok = false;
        parts.push(format!("{} trials excluded", est.excluded));
    }
    if let Some(oracle) = bounds.analytic_oracle {
        let agree = est.agrees_with(oracle).unwrap_or(false);
        ok &= agree;
        parts.push(format!(
            "|mean {} - oracle {oracle}| <= 3 stderr ({})",
            est.mean,
            3.0 * se
        ));
    }
    if let Some(up) = bounds.upper {
        let below = est.mean.abs() <= up + 3.0 * se;
        ok &= below;
        parts.push(format!("|mean| <= upper {up} + 3 stderr"));
    }
    if parts.is_empty() {
        rec.push(Check::MonteCarlo, lbl, Status::Skipped, format!("no oracle or upper bound; mean {} +- {se}", est.mean));
    } else {
        rec.verdict(Check::MonteCarlo, lbl, ok, parts.join(", "));
    }
}

/// Axes of a sweep; the grid is their Cartesian product.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepMode {
    /// Bounds plus a Monte Carlo estimate per schedule.
    MonteCarlo,
    /// Closed-form values only.
    Bounds,
    /// The uniform-stability comparison on the linear loss over `grid.n`.
    UniformStability { epochs: usize, d: usize, scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub grid: Grid,
    pub mode: SweepMode,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: usize,
    pub n: usize,
    pub horizon: usize,
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub schedule: Option<String>,
    pub lower: Option<f64>,
    pub oracle: Option<f64>,
    pub upper: Option<f64>,
    pub hrs: Option<f64>,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub verdict: String,
    pub reason: String,
}

/// `(n, T, c, η)` of one grid cell.
pub type GridCell = (usize, usize, Option<f64>, Option<f64>);

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.cells()?;
        Ok(cfg)
    }

    /// `(n, T, c, η)` per grid cell, in row-major order over
    /// `n × T × c × η`.
    pub fn cells(&self) -> Result<Vec<GridCell>> {
        let g = &self.grid;
        let axes_given = [g.n.is_some(), g.horizon.is_some(), g.c.is_some(), g.eta.is_some()];
        if !axes_given.iter().any(|&a| a) {
            return Err(Error::config("grid", "declare at least one axis (n, horizon, c, eta)"));
        }
        let empty = [
            ("grid.n", g.n.as_ref().is_some_and(Vec::is_empty)),
            ("grid.horizon", g.horizon.as_ref().is_some_and(Vec::is_empty)),
            ("grid.c", g.c.as_ref().is_some_and(Vec::is_empty)),
            ("grid.eta", g.eta.as_ref().is_some_and(Vec::is_empty)),
        ];
        if let Some((name, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::config(*name, "axis is empty"));
        }
        if matches!(self.mode, SweepMode::UniformStability { .. }) && g.n.is_none() {
            return Err(Error::config("grid.n", "the uniform_stability mode sweeps n"));
        }
        let ns = g.n.clone().unwrap_or_else(|| vec![self.base.n]);
        let ts = g.horizon.clone().unwrap_or_else(|| vec![self.base.horizon]);
        let cs: Vec<Option<f64>> = g.c.as_ref().map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
        let es: Vec<Option<f64>> = g.eta.as_ref().map_or(vec![None], |v| v.iter().map(|&x| Some(x)).collect());
        let mut out = Vec::new();
        for &n in &ns {
            for &t in &ts {
                for &c in &cs {
                    for &e in &es {
                        out.push((n, t, c, e));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Evaluates every grid cell; a refused cell becomes a row with its
/// reason instead of aborting the sweep.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    let cells = sweep.cells()?;
    if let SweepMode::UniformStability { epochs, d, scale } = sweep.mode {
        let ns: Vec<usize> = cells.iter().map(|c| c.0).collect();
        let rows = uniform_stability_failure_demo(&ns, epochs, d, scale, sweep.base.trials, sweep.base.master_seed)?;
        return Ok(rows
            .into_iter()
            .enumerate()
            .map(|(k, r)| SweepRow {
                cell: k,
                n: r.n,
                horizon: r.horizon,
                upper: Some(r.on_average_bound),
                hrs: Some(r.hrs),
                mean: Some(r.gen_error.mean),
                stderr: r.gen_error.stderr,
                verdict: if r.passed { "pass" } else { "fail" }.into(),
                reason: "|mean| <= on-average bound + 3 stderr".into(),
                ..SweepRow::default()
            })
            .collect());
    }
    let mut rows = Vec::new();
    for (k, &(n, horizon, c, eta)) in cells.iter().enumerate() {
        let skeleton = SweepRow {
            cell: k,
            n,
            horizon,
            c,
            eta,
            ..SweepRow::default()
        };
        match sweep_cell(sweep, n, horizon, c, eta) {
            Ok(cell_rows) => rows.extend(cell_rows.into_iter().map(|r| SweepRow {
                cell: k,
                n,
                horizon,
                c,
                eta,
                ..r
            })),
            Err(e) => rows.push(SweepRow {
                verdict: "refused".into(),
                reason: e.to_string(),
                ..skeleton
            }),
        }
    }
    Ok(rows)
}

fn sweep_cell(
    sweep: &SweepConfig,
    n: usize,
    horizon: usize,
    c: Option<f64>,
    eta: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let mut cfg = sweep.base.clone();
    cfg.n = n;
    cfg.horizon = horizon;
    if let Some(c) = c {
        cfg.step_plan = cfg.step_plan.with_c(c)?;
    }
    if let Some(eta) = eta {
        cfg.step_plan = cfg.step_plan.with_eta(eta)?;
    }
    cfg.validate()?;
    let prep = Prepared::new(&cfg)?;
    let params = BoundParams::from_instance(&prep.instance);
    let mut reasons = Vec::new();
    let mut note = |label: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            reasons.push(format!("{label}: {e}"));
            None
        }
    };
    let lower = note("lower", gen_lower(prep.class, &params, &prep.plan, n));
    let upper = note("upper", gen_upper(prep.class, &params, &prep.plan, n).map(|u| u.value));
    let oracle = note("oracle", analytic_gen_error(&prep.instance, &prep.plan, n));
    let mut ok = true;
    let mut checks = Vec::new();
    if let (Some(lo), Some(or)) = (lower, oracle) {
        ok &= within_slack(lo, or);
        checks.push("oracle >= lower");
    }
    if let (Some(or), Some(up)) = (oracle, upper) {
        ok &= within_slack(or, up);
        checks.push("oracle <= upper");
    }
    let base_row = SweepRow {
        lower,
        oracle,
        upper,
        ..SweepRow::default()
    };
    let finish = |ok: bool, mut checks: Vec<String>, reasons: &[String]| -> (String, String) {
        checks.extend(reasons.iter().cloned());
        let verdict = if checks.is_empty() {
            "skipped"
        } else if ok {
            "pass"
        } else {
            "fail"
        };
        (verdict.to_string(), checks.join("; "))
    };
    match sweep.mode {
        SweepMode::Bounds => {
            let (verdict, reason) = finish(ok, checks.iter().map(|s| s.to_string()).collect(), &reasons);
            Ok(vec![SweepRow {
                verdict,
                reason,
                ..base_row
            }])
        }
        SweepMode::MonteCarlo => {
            let mut rows = Vec::new();
            for entry in &cfg.schedules {
                let mut row_ok = ok;
                let mut row_checks: Vec<String> = checks.iter().map(|s| s.to_string()).collect();
                let est = gen_error_samples(&cfg, &prep, entry);
                let (mean, stderr) = match &est {
                    Ok(e) => {
                        if let (Some(se), Some(or)) = (e.stderr, oracle) {
                            row_ok &= (e.mean - or).abs() <= 3.0 * se;
                            row_checks.push("|mean - oracle| <= 3 stderr".into());
                        }
                        if let (Some(se), Some(up)) = (e.stderr, upper) {
                            row_ok &= e.mean.abs() <= up + 3.0 * se;
                            row_checks.push("|mean| <= upper + 3 stderr".into());
                        }
                        (Some(e.mean), e.stderr)
                    }
                    Err(e) => {
                        row_checks.push(format!("estimate unavailable: {e}"));
                        (None, None)
                    }
                };
                let (verdict, reason) = finish(row_ok, row_checks, &reasons);
                rows.push(SweepRow {
                    schedule: Some(entry.display_label(n)),
                    mean,
                    stderr,
                    verdict,
                    reason,
                    ..base_row.clone()
                });
            }
            Ok(rows)
        }
        SweepMode::UniformStability { .. } => unreachable!("handled by run_sweep"),
    }
}

/// Long-format CSV: one line per sweep row.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "cell", "n", "horizon", "c", "eta", "schedule", "lower", "oracle", "upper", "hrs", "mean",
        "stderr", "verdict", "reason",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        wtr.write_record([
            r.cell.to_string(),
            r.n.to_string(),
            r.horizon.to_string(),
            opt(r.c),
            opt(r.eta),
            r.schedule.clone().unwrap_or_default(),
            opt(r.lower),
            opt(r.oracle),
            opt(r.upper),
            opt(r.hrs),
            opt(r.mean),
            opt(r.stderr),
            r.verdict.clone(),
            r.reason.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
