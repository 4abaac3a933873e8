//! The mini-batch gradient iterate map, paired runs on neighboring
//! datasets, and closed-form final iterates for the constructed instances.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{dist, norm, Dataset, Family, ProblemInstance};
use crate::schedule::RealizedSchedule;

/// Shape of a step-size sequence `η_1, …, η_T` (steps are 1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanShape {
    /// `η_t = eta`.
    Constant { eta: f64 },
    /// `η_t = scale / t`.
    InverseT { scale: f64 },
    /// `η_t = scale / ((t − 1) mod period + 1)`: a `1/t` sequence restarted
    /// every `period` steps.
    EpochRestart { scale: f64, period: usize },
    /// Explicit length-`T` list.
    Custom { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizePlan {
    #[serde(flatten)]
    pub shape: PlanShape,
    pub horizon: usize,
}

impl StepSizePlan {
    pub fn constant(eta: f64, horizon: usize) -> Self {
        StepSizePlan {
            shape: PlanShape::Constant { eta },
            horizon,
        }
    }

    pub fn inverse_t(scale: f64, horizon: usize) -> Self {
        StepSizePlan {
            shape: PlanShape::InverseT { scale },
            horizon,
        }
    }

    pub fn epoch_restart(scale: f64, period: usize, horizon: usize) -> Self {
        StepSizePlan {
            shape: PlanShape::EpochRestart { scale, period },
            horizon,
        }
    }

    pub fn custom(values: Vec<f64>) -> Self {
        StepSizePlan {
            horizon: values.len(),
            shape: PlanShape::Custom { values },
        }
    }

    /// Zero steps are allowed (they leave the iterate unchanged); negative
    /// or non-finite steps are not.
    pub fn validate(&self) -> Result<()> {
        let bad_scalar = |field: &str, v: f64| -> Result<()> {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("step sizes must be finite and >= 0 (got {v})")))
            }
        };
        match &self.shape {
            PlanShape::Constant { eta } => bad_scalar("step_plan.eta", *eta),
            PlanShape::InverseT { scale } => bad_scalar("step_plan.scale", *scale),
            PlanShape::EpochRestart { scale, period } => {
                if *period == 0 {
                    return Err(Error::config("step_plan.period", "must be at least 1"));
                }
                bad_scalar("step_plan.scale", *scale)
            }
            PlanShape::Custom { values } => {
                if values.len() != self.horizon {
                    return Err(Error::config(
                        "step_plan.values",
                        format!("expected T = {} values, found {}", self.horizon, values.len()),
                    ));
                }
                values.iter().try_for_each(|&v| bad_scalar("step_plan.values", v))
            }
        }
    }

    /// `η_t` for 1-based `t`.
    pub fn eta(&self, t: usize) -> f64 {
        match &self.shape {
            PlanShape::Constant { eta } => *eta,
            PlanShape::InverseT { scale } => scale / t as f64,
            PlanShape::EpochRestart { scale, period } => scale / ((t - 1) % period + 1) as f64,
            PlanShape::Custom { values } => values[t - 1],
        }
    }

    pub fn etas(&self) -> Vec<f64> {
        (1..=self.horizon).map(|t| self.eta(t)).collect()
    }

    pub fn sum(&self) -> f64 {
        self.etas().iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.etas().into_iter().fold(0.0, f64::max)
    }

    /// Smallest `C` with `η_t ≤ C/t` for every step.
    pub fn inverse_t_envelope(&self) -> f64 {
        match &self.shape {
            PlanShape::InverseT { scale } => *scale,
            _ => (1..=self.horizon)
                .map(|t| t as f64 * self.eta(t))
                .fold(0.0, f64::max),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match &self.shape {
            PlanShape::Constant { eta } => Some(*eta),
            _ => None,
        }
    }
}

/// Step-size conditions of the individual results, evaluated for one plan.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeFlags {
    /// `η_t < 2/β` for all `t`.
    pub convex_upper: bool,
    /// `η_t ≤ 1/β` for all `t`.
    pub convex_lower: bool,
    /// `η_t ≤ C/t` with `C < 1/β`.
    pub nonconvex_upper: bool,
    /// `η_t ≤ 1/(β+γ)` for all `t`.
    pub strongly_convex_upper: bool,
    /// Constant `η ∈ [2/(γ(T+1)), 1/(β+γ)]`.
    pub strongly_convex_lower: bool,
}

impl RegimeFlags {
    pub fn evaluate(plan: &StepSizePlan, beta: f64, gamma: f64) -> Self {
        let max = plan.max();
        let sc_cap = 1.0 / (beta + gamma);
        let sc_lower = gamma > 0.0
            && plan.constant_value().is_some_and(|eta| {
                eta >= 2.0 / (gamma * (plan.horizon as f64 + 1.0)) && eta <= sc_cap
            });
        RegimeFlags {
            convex_upper: beta == 0.0 || max < 2.0 / beta,
            convex_lower: beta == 0.0 || max <= 1.0 / beta,
            nonconvex_upper: beta == 0.0 || plan.inverse_t_envelope() < 1.0 / beta,
            strongly_convex_upper: gamma > 0.0 && max <= sc_cap,
            strongly_convex_lower: sc_lower,
        }
    }
}

/// Iterates `w_1, …, w_{T+1}` of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    d: usize,
    iterates: Vec<f64>,
    pub schedule: Arc<RealizedSchedule>,
    pub step_plan: Arc<StepSizePlan>,
}

impl Trajectory {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> usize {
        self.iterates.len() / self.d - 1
    }

    /// `w_t` for 1-based `t ∈ [1, T+1]`.
    pub fn iterate(&self, t: usize) -> &[f64] {
        &self.iterates[(t - 1) * self.d..t * self.d]
    }

    pub fn final_iterate(&self) -> &[f64] {
        self.iterate(self.horizon() + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.iterates.chunks(self.d)
    }

    /// Row `t` holds the coordinates of `w_t`; `T+1` rows, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for w in self.iter() {
            wtr.write_record(w.iter().map(|x| x.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A base run on `S` and the `n` runs on `S^(i)`, all under one schedule.
#[derive(Clone, Debug)]
pub struct PairedTrajectory {
    pub base: Trajectory,
    /// `perturbed[i − 1]` ran on `S^(i)`.
    pub perturbed: Vec<Trajectory>,
}

impl PairedTrajectory {
    pub fn shared_schedule(&self) -> &RealizedSchedule {
        &self.base.schedule
    }

    pub fn step_plan(&self) -> &StepSizePlan {
        &self.base.step_plan
    }

    pub fn n(&self) -> usize {
        self.perturbed.len()
    }
}

fn check_inputs(
    instance: &ProblemInstance,
    data: &Dataset,
    sched: &RealizedSchedule,
    plan: &StepSizePlan,
    w1: &[f64],
) -> Result<()> {
    plan.validate()?;
    if data.d() != instance.d() {
        return Err(Error::Argument(format!(
            "dataset dimension {} differs from instance dimension {}",
            data.d(),
            instance.d()
        )));
    }
    if sched.n() != data.n() {
        return Err(Error::Argument(format!(
            "schedule is over n = {} indices but the dataset has {} examples",
            sched.n(),
            data.n()
        )));
    }
    if plan.horizon != sched.horizon() {
        return Err(Error::Argument(format!(
            "step plan has T = {} but the schedule has T = {}",
            plan.horizon,
            sched.horizon()
        )));
    }
    if w1.len() != instance.d() || w1.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("w1 must be a finite vector of length d".into()));
    }
    Ok(())
}

/// Runs steps `from..T` (0-based) starting at `w`, fetching example `k`
/// through `example`, calling `observe(t, w_t)` for every new iterate.
#[allow(clippy::too_many_arguments)]
fn iterate_from<'a, E, O>(
    instance: &ProblemInstance,
    example: E,
    sched: &RealizedSchedule,
    etas: &[f64],
    from: usize,
    w: &mut [f64],
    mut observe: O,
) -> Result<()>
where
    E: Fn(usize) -> &'a [f64],
    O: FnMut(usize, &[f64]),
{
    let d = instance.d();
    let m = sched.m() as f64;
    let mut g = vec![0.0; d];
    for (s, &eta) in etas.iter().enumerate().skip(from) {
        g.iter_mut().for_each(|x| *x = 0.0);
        for &k in sched.step(s) {
            instance.add_grad(w, example(k), 1.0, &mut g);
        }
        let step = eta / m;
        for (wk, gk) in w.iter_mut().zip(&g) {
            *wk -= step * gk;
        }
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: s + 1 });
        }
        observe(s + 2, w);
    }
    Ok(())
}

/// Runs the update `w_{t+1} = w_t − (η_t/m) Σ_{k∈K_t} ∇f(w_t, z_k)` and
/// returns only the final iterate; `observe(t, w_t)` sees every iterate
/// including `w_1`.
pub fn run_observed<O: FnMut(usize, &[f64])>(
    instance: &ProblemInstance,
    data: &Dataset,
    sched: &RealizedSchedule,
    plan: &StepSizePlan,
    w1: &[f64],
    mut observe: O,
) -> Result<Vec<f64>> {
    check_inputs(instance, data, sched, plan, w1)?;
    let mut w = w1.to_vec();
    observe(1, &w);
    iterate_from(instance, |k| data.example(k), sched, &plan.etas(), 0, &mut w, observe)?;
    Ok(w)
}

pub fn run_final(
    instance: &ProblemInstance,
    data: &Dataset,
    sched: &RealizedSchedule,
    plan: &StepSizePlan,
    w1: &[f64],
) -> Result<Vec<f64>> {
    run_observed(instance, data, sched, plan, w1, |_, _| {})
}

pub fn run(
    instance: &ProblemInstance,
    data: &Dataset,
    sched: &RealizedSchedule,
    plan: &StepSizePlan,
    w1: &[f64],
) -> Result<Trajectory> {
    let mut iterates = Vec::with_capacity((plan.horizon + 1) * instance.d());
    run_observed(instance, data, sched, plan, w1, |_, w| iterates.extend_from_slice(w))?;
    Ok(Trajectory {
        d: instance.d(),
        iterates,
        schedule: Arc::new(sched.clone()),
        step_plan: Arc::new(plan.clone()),
    })
}

/// Runs on `S` and on every `S^(i)` under the same schedule and steps.
///
/// Run `i` copies the base prefix up to the first step that selects `i`,
/// since the two runs coincide until then.
pub fn run_paired(
    instance: &ProblemInstance,
    data: &Dataset,
    replacements: &Dataset,
    sched: &RealizedSchedule,
    plan: &StepSizePlan,
    w1: &[f64],
) -> Result<PairedTrajectory> {
    if replacements.n() != data.n() || replacements.d() != data.d() {
        return Err(Error::Argument(format!(
            "need {} replacements of dimension {}",
            data.n(),
            data.d()
        )));
    }
    let base = run(instance, data, sched, plan, w1)?;
    let d = instance.d();
    let etas = plan.etas();
    let perturbed = (0..data.n())
        .into_par_iter()
        .map(|i| {
            let Some(first) = sched.first_selection(i + 1) else {
                return Ok(base.clone());
            };
            // w_1 .. w_first are shared
            let mut iterates = base.iterates[..first * d].to_vec();
            let mut w = base.iterate(first).to_vec();
            let replacement = replacements.example(i);
            let example = |k: usize| if k == i { replacement } else { data.example(k) };
            iterate_from(instance, example, sched, &etas, first - 1, &mut w, |_, w| {
                iterates.extend_from_slice(w)
            })?;
            Ok(Trajectory {
                d,
                iterates,
                schedule: Arc::clone(&base.schedule),
                step_plan: Arc::clone(&base.step_plan),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PairedTrajectory { base, perturbed })
}

/// Evaluates `w_{T+1} = (Π_t a_t) w_1 + Σ_t b_t Π_{j>t} a_j` for the scalar
/// affine recursion `w_{t+1} = a_t w_t + b_t`, accumulating suffix
/// products in reverse.
fn affine_closed_form(w1: f64, a: &[f64], b: &[f64]) -> f64 {
    let mut suffix = 1.0;
    let mut acc = 0.0;
    for (at, bt) in a.iter().zip(b).rev() {
        acc += bt * suffix;
        suffix *= at;
    }
    suffix * w1 + acc
}

/// The analytically derived final iterate of the constructed instances.
///
/// Each coordinate of these losses evolves as a scalar affine recursion:
/// linear coordinates as `w − (η/m)Σz`, quadratic ones as
/// `(1 − ηλ)w + (ηλ/m)Σz`, and the Huber coordinate (inside its quadratic
/// region) as `w₁ + (β/m) Σ_t η_t Π_{j>t}(1 − βη_j) Σ z^d`.
pub fn closed_form_final(
    instance: &ProblemInstance,
    data: &Dataset,
    sched: &RealizedSchedule,
    plan: &StepSizePlan,
    w1: &[f64],
) -> Result<Vec<f64>> {
    check_inputs(instance, data, sched, plan, w1)?;
    let p = instance.params();
    let d = p.d;
    let etas = plan.etas();
    let m = sched.m() as f64;
    let horizon = etas.len();

    // batch_sums[s * d + k] = Σ_{k' ∈ K_s} z_{k'}^k
    let mut batch_sums = vec![0.0; horizon * d];
    for s in 0..horizon {
        let row = &mut batch_sums[s * d..(s + 1) * d];
        for &idx in sched.step(s) {
            for (r, z) in row.iter_mut().zip(data.example(idx)) {
                *r += z;
            }
        }
    }
    let sums = &batch_sums;
    let column = move |k: usize| (0..horizon).map(move |s| sums[s * d + k]);

    let linear_coord = |k: usize| {
        let a = vec![1.0; horizon];
        let b: Vec<f64> = column(k).zip(&etas).map(|(sz, eta)| -eta / m * sz).collect();
        affine_closed_form(w1[k], &a, &b)
    };
    let quadratic_coord = |k: usize, lam: f64, w_start: f64| {
        let a: Vec<f64> = etas.iter().map(|eta| 1.0 - eta * lam).collect();
        let b: Vec<f64> = column(k).zip(&etas).map(|(sz, eta)| eta * lam / m * sz).collect();
        affine_closed_form(w_start, &a, &b)
    };

    match instance.family() {
        Family::Linear => Ok((0..d).map(linear_coord).collect()),
        Family::QuadraticNonconvex | Family::QuadraticStronglyConvex => Ok((0..d)
            .map(|k| quadratic_coord(k, p.lambda[k], w1[k]))
            .collect()),
        Family::ConvexHuber => {
            if w1[d - 1] != p.w1[d - 1] {
                return Err(Error::OutsideAnalyticRegion(
                    "the Huber closed form needs the run to start at the loss's own w1".into(),
                ));
            }
            if let Some(t) = etas.iter().position(|&e| e * p.beta > 1.0 + 1e-12) {
                return Err(Error::OutsideAnalyticRegion(format!(
                    "the Huber closed form needs eta_t <= 1/beta (violated at t={})",
                    t + 1
                )));
            }
            let s_d = instance.data_scales()[d - 1];
            if p.tau < 2.0 * s_d * (1.0 - 1e-12) {
                return Err(Error::OutsideAnalyticRegion(
                    "the Huber closed form needs tau >= 2 s_d (the default tau)".into(),
                ));
            }
            let mut w: Vec<f64> = (0..d - 1).map(linear_coord).collect();
            // deviation δ = w^d − w₁^d starts at 0 and has curvature β
            let delta = quadratic_coord(d - 1, p.beta, 0.0);
            w.push(w1[d - 1] + delta);
            Ok(w)
        }
        Family::CustomSmooth => Err(Error::Capability(
            "closed_form_final is only available for the constructed families".into(),
        )),
    }
}

/// Checks `|w_t^d − w_1^d| ≤ τ/2` at every step of a Huber trajectory.
pub fn check_huber_region(instance: &ProblemInstance, traj: &Trajectory) -> Result<()> {
    if instance.family() != Family::ConvexHuber {
        return Err(Error::Capability("the Huber region applies to convex_huber only".into()));
    }
    let p = instance.params();
    let d = p.d;
    let half = 0.5 * p.tau;
    for (s, w) in traj.iter().enumerate() {
        let dev = (w[d - 1] - p.w1[d - 1]).abs();
        if dev > half * (1.0 + 1e-9) + 1e-12 {
            return Err(Error::OutsideAnalyticRegion(format!(
                "|w_t^d - w_1^d| = {dev} > tau/2 = {half} at t={}",
                s + 1
            )));
        }
    }
    Ok(())
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both are zero.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        dist(a, b) / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{neighbor, sample_dataset};
    use crate::schedule::{realize, ScheduleKind, ScheduleSpec};

    fn sched(kind: ScheduleKind, n: usize, m: usize, t: usize, seed: u64) -> RealizedSchedule {
        realize(&ScheduleSpec::new(kind, n, m, t, seed)).unwrap()
    }

    #[test]
    fn plan_values() {
        let p = StepSizePlan::epoch_restart(1.0, 3, 7);
        assert_eq!(p.etas(), vec![1.0, 0.5, 1.0 / 3.0, 1.0, 0.5, 1.0 / 3.0, 1.0]);
        assert_eq!(StepSizePlan::inverse_t(2.0, 4).eta(4), 0.5);
        assert_eq!(StepSizePlan::constant(0.5, 100).sum(), 50.0);
        assert!(StepSizePlan::custom(vec![0.1, -0.1]).validate().is_err());
        let json = serde_json::to_string(&StepSizePlan::constant(0.5, 3)).unwrap();
        assert_eq!(json, r#"{"kind":"constant","eta":0.5,"horizon":3}"#);
    }

    #[test]
    fn linear_final_iterate_matches_sum() {
        let inst = ProblemInstance::linear(3);
        let data = sample_dataset(&inst, 6, 2).unwrap();
        let s = sched(ScheduleKind::UniformRandom, 6, 2, 10, 5);
        let plan = StepSizePlan::inverse_t(0.7, 10);
        let w1 = vec![0.5, -1.0, 2.0];
        let w = run_final(&inst, &data, &s, &plan, &w1).unwrap();
        for k in 0..3 {
            let mut expect = w1[k];
            for t in 0..10 {
                let sz: f64 = s.step(t).iter().map(|&i| data.example(i)[k]).sum();
                expect -= plan.eta(t + 1) / 2.0 * sz;
            }
            assert!((w[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_steps_freeze_iterate() {
        let inst = ProblemInstance::quadratic_nonconvex(2, 1.0, None).unwrap();
        let data = sample_dataset(&inst, 4, 0).unwrap();
        let s = sched(ScheduleKind::RoundRobin, 4, 1, 5, 0);
        let traj = run(&inst, &data, &s, &StepSizePlan::constant(0.0, 5), &[1.0, 2.0]).unwrap();
        assert_eq!(traj.horizon(), 5);
        assert!(traj.iter().all(|w| w == [1.0, 2.0]));
    }

    #[test]
    fn divergence_names_step() {
        let inst = ProblemInstance::quadratic_nonconvex(1, 1.0, None).unwrap();
        let data = sample_dataset(&inst, 1, 0).unwrap();
        let s = sched(ScheduleKind::FullBatch, 1, 1, 40, 0);
        let err = run(&inst, &data, &s, &StepSizePlan::constant(1e300, 40), &[5.0]).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 2 }), "{err}");
    }

    #[test]
    fn paired_runs_with_original_replacements_coincide() {
        let inst = ProblemInstance::convex_huber(3, 1.0, 1.0).unwrap();
        let data = sample_dataset(&inst, 5, 1).unwrap();
        let s = sched(ScheduleKind::RandomReshuffle, 5, 2, 8, 3);
        let plan = StepSizePlan::constant(0.5, 8);
        let pt = run_paired(&inst, &data, &data, &s, &plan, inst.w1()).unwrap();
        assert!(pt.perturbed.iter().all(|p| p.iterates == pt.base.iterates));
    }

    #[test]
    fn paired_runs_match_direct_runs_on_neighbors() {
        let inst = ProblemInstance::quadratic_strongly_convex(3, 1.0, 2.0, 1.0).unwrap();
        let data = sample_dataset(&inst, 6, 1).unwrap();
        let repl = sample_dataset(&inst, 6, 2).unwrap();
        let s = sched(ScheduleKind::UniformRandom, 6, 2, 12, 7);
        let plan = StepSizePlan::constant(0.3, 12);
        let pt = run_paired(&inst, &data, &repl, &s, &plan, inst.w1()).unwrap();
        for i in 0..6 {
            let nb = neighbor(&data, i + 1, repl.example(i)).unwrap();
            let direct = run(&inst, &nb, &s, &plan, inst.w1()).unwrap();
            assert_eq!(direct.iterates, pt.perturbed[i].iterates);
        }
    }

    #[test]
    fn runs_coincide_until_first_selection() {
        let inst = ProblemInstance::linear(2);
        let data = sample_dataset(&inst, 4, 1).unwrap();
        let repl = sample_dataset(&inst, 4, 9).unwrap();
        let s = sched(ScheduleKind::RoundRobin, 4, 1, 8, 0);
        let pt = run_paired(&inst, &data, &repl, &s, &StepSizePlan::constant(0.1, 8), &[0.0; 2]).unwrap();
        for i in 1..=4 {
            let first = s.first_selection(i).unwrap();
            for t in 1..=first {
                assert_eq!(pt.base.iterate(t), pt.perturbed[i - 1].iterate(t));
            }
        }
    }

    #[test]
    fn full_batch_linear_gap() {
        let (n, d) = (5, 3);
        let inst = ProblemInstance::linear(d);
        let data = sample_dataset(&inst, n, 1).unwrap();
        let repl = sample_dataset(&inst, n, 2).unwrap();
        let plan = StepSizePlan::inverse_t(1.0, 7);
        let s = sched(ScheduleKind::FullBatch, n, n, 7, 0);
        let pt = run_paired(&inst, &data, &repl, &s, &plan, &[0.0; 3]).unwrap();
        for i in 0..n {
            let gap = dist(pt.base.final_iterate(), pt.perturbed[i].final_iterate());
            let expect = plan.sum() / n as f64 * dist(data.example(i), repl.example(i));
            assert!((gap - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_matches_nonconvex_run() {
        let inst = ProblemInstance::quadratic_nonconvex(3, 2.0, Some(vec![-2.0, -1.0, -0.3])).unwrap();
        let data = sample_dataset(&inst, 10, 4).unwrap();
        let s = sched(ScheduleKind::SingleShuffle, 10, 3, 40, 4);
        let plan = StepSizePlan::inverse_t(0.8 / 2.0, 40);
        let w1 = vec![0.2, -0.1, 0.4];
        let a = run_final(&inst, &data, &s, &plan, &w1).unwrap();
        let b = closed_form_final(&inst, &data, &s, &plan, &w1).unwrap();
        assert!(relative_deviation(&a, &b) < 1e-12);
    }

    #[test]
    fn closed_form_strongly_convex_from_zero() {
        // w_{T+1} = (c/((β+γ)m)) Σ_t (1 − cΛ/(β+γ))^{T−t} Λ Σ_{K_t} z
        let (beta, gamma, c) = (2.0, 1.0, 0.9);
        let inst = ProblemInstance::quadratic_strongly_convex(3, 1.0, beta, gamma).unwrap();
        let data = sample_dataset(&inst, 8, 4).unwrap();
        let s = sched(ScheduleKind::UniformRandom, 8, 3, 25, 2);
        let eta = c / (beta + gamma);
        let plan = StepSizePlan::constant(eta, 25);
        let got = closed_form_final(&inst, &data, &s, &plan, &[0.0; 3]).unwrap();
        let lam = &inst.params().lambda;
        for k in 0..3 {
            let mut expect = 0.0;
            for t in 1..=25 {
                let sz: f64 = s.step(t - 1).iter().map(|&i| data.example(i)[k]).sum();
                expect += (1.0 - eta * lam[k]).powi((25 - t) as i32) * lam[k] * sz;
            }
            expect *= eta / 3.0;
            assert!((got[k] - expect).abs() < 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn huber_closed_form_and_region() {
        let inst = ProblemInstance::convex_huber(4, 1.0, 2.0).unwrap();
        let data = sample_dataset(&inst, 9, 4).unwrap();
        let s = sched(ScheduleKind::RandomReshuffle, 9, 2, 30, 1);
        let plan = StepSizePlan::constant(0.5, 30);
        let traj = run(&inst, &data, &s, &plan, inst.w1()).unwrap();
        check_huber_region(&inst, &traj).unwrap();
        let cf = closed_form_final(&inst, &data, &s, &plan, inst.w1()).unwrap();
        assert!(relative_deviation(traj.final_iterate(), &cf) < 1e-12);
        let too_big = StepSizePlan::constant(0.75, 30);
        assert!(closed_form_final(&inst, &data, &s, &too_big, inst.w1()).is_err());
    }

    #[test]
    fn input_mismatches_are_argument_errors() {
        let inst = ProblemInstance::linear(2);
        let data = sample_dataset(&inst, 3, 0).unwrap();
        let s = sched(ScheduleKind::RoundRobin, 4, 1, 2, 0);
        assert!(run(&inst, &data, &s, &StepSizePlan::constant(0.1, 2), &[0.0; 2]).is_err());
        let s = sched(ScheduleKind::RoundRobin, 3, 1, 2, 0);
        assert!(run(&inst, &data, &s, &StepSizePlan::constant(0.1, 3), &[0.0; 2]).is_err());
    }

    #[test]
    fn regime_flags() {
        let f = RegimeFlags::evaluate(&StepSizePlan::constant(1.5, 10), 1.0, 0.0);
        assert!(f.convex_upper && !f.convex_lower);
        let f = RegimeFlags::evaluate(&StepSizePlan::constant(0.5, 200), 1.0, 1.0);
        assert!(f.strongly_convex_upper && f.strongly_convex_lower);
        let f = RegimeFlags::evaluate(&StepSizePlan::inverse_t(0.9, 50), 1.0, 0.0);
        assert!(f.nonconvex_upper);
    }
}
