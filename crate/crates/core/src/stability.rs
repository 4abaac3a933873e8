//! On-average stability measurements and step-by-step audits of the
//! growth recursions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bounds::{discounted_sum, BoundParams};
use crate::engine::{PairedTrajectory, StepSizePlan, Trajectory};
use crate::error::{Error, Result};
use crate::problems::{dist, LossClass, ProblemInstance};
use crate::schedule::RealizedSchedule;

const REL_SLACK: f64 = 1e-9;
const ABS_SLACK: f64 = 1e-12;

/// `lhs ≤ rhs` up to the relative and absolute floating-point slack.
pub fn within_slack(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + REL_SLACK * rhs.abs() + ABS_SLACK
}

/// Gaps `‖w_t − w_t^(i)‖` for `t ∈ [1, T+1]` and `i ∈ [1, n]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub n: usize,
    pub horizon: usize,
    /// Row-major `(T+1) × n`.
    pub per_step_gaps: Vec<f64>,
    /// `(1/n) Σ_i ‖w_{T+1} − w_{T+1}^(i)‖`.
    pub final_on_average: f64,
}

impl StabilityRecord {
    /// Gap at 1-based step `t` for 1-based index `i`.
    pub fn gap(&self, t: usize, i: usize) -> f64 {
        self.per_step_gaps[(t - 1) * self.n + (i - 1)]
    }

    /// Row `t` holds the `n` gaps at step `t`; no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.per_step_gaps.chunks(self.n) {
            wtr.write_record(row.iter().map(|x| x.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn on_average_stability(pt: &PairedTrajectory) -> StabilityRecord {
    let n = pt.n();
    let horizon = pt.base.horizon();
    let mut per_step_gaps = vec![0.0; (horizon + 1) * n];
    for (i, other) in pt.perturbed.iter().enumerate() {
        for (t, (a, b)) in pt.base.iter().zip(other.iter()).enumerate() {
            per_step_gaps[t * n + i] = dist(a, b);
        }
    }
    let last = &per_step_gaps[horizon * n..];
    let final_on_average = last.iter().sum::<f64>() / n as f64;
    StabilityRecord {
        n,
        horizon,
        per_step_gaps,
        final_on_average,
    }
}

/// One failed step of a growth-recursion audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub i: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionVerdict {
    pub loss_class: LossClass,
    /// The constant `L` (or `L̃`) used in the perturbation term.
    pub constant: f64,
    pub violations: Vec<Violation>,
    /// Largest `lhs − rhs` over all audited `(t, i)`; negative means
    /// every step held with room to spare.
    pub max_slack: f64,
}

impl RecursionVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Refuses plans outside the step-size range in which the class's
/// recursion is proved: `η_t < 2/β` (convex) or `η_t ≤ 2/(β+γ)`
/// (strongly convex). The nonconvex recursion holds for any step.
pub fn check_recursion_regime(class: LossClass, beta: f64, gamma: f64, plan: &StepSizePlan) -> Result<()> {
    let etas = plan.etas();
    match class {
        LossClass::Convex if beta > 0.0 => {
            if let Some(t) = etas.iter().position(|&e| e >= 2.0 / beta) {
                return Err(Error::Regime(format!(
                    "convex recursion needs eta_t < 2/beta = {} (eta_{} = {})",
                    2.0 / beta,
                    t + 1,
                    etas[t]
                )));
            }
        }
        LossClass::StronglyConvex => {
            let cap = 2.0 / (beta + gamma);
            if let Some(t) = etas.iter().position(|&e| e > cap * (1.0 + REL_SLACK)) {
                return Err(Error::Regime(format!(
                    "strongly convex recursion needs eta_t <= 2/(beta+gamma) = {cap} (eta_{} = {})",
                    t + 1,
                    etas[t]
                )));
            }
        }
        _ => {}
    }
    Ok(())
}

/// Audits, for every step and index,
/// `gap_{t+1} ≤ ρ_t gap_t + (2C/m) η_t 1{i ∈ K_t}` with `ρ_t = 1`
/// (convex), `1 + βη_t` (nonconvex) or `1 − η_tγ/2` (strongly convex),
/// and `C` the instance's recursion constant for the class.
pub fn check_growth_recursion(
    pt: &PairedTrajectory,
    class: LossClass,
    instance: &ProblemInstance,
) -> Result<RecursionVerdict> {
    let p = instance.params();
    let plan = pt.step_plan();
    check_recursion_regime(class, p.beta, p.gamma, plan)?;
    let constant = instance.recursion_constant(class);
    let sched = pt.shared_schedule();
    let membership = sched.membership();
    let (n, m) = (sched.n(), sched.m() as f64);
    let etas = plan.etas();
    let mut violations = Vec::new();
    let mut max_slack = f64::NEG_INFINITY;
    for (i, other) in pt.perturbed.iter().enumerate() {
        let mut prev = dist(pt.base.iterate(1), other.iterate(1));
        for (s, &eta) in etas.iter().enumerate() {
            let next = dist(pt.base.iterate(s + 2), other.iterate(s + 2));
            let rho = match class {
                LossClass::Convex => 1.0,
                LossClass::Nonconvex => 1.0 + p.beta * eta,
                LossClass::StronglyConvex => 1.0 - eta * p.gamma / 2.0,
            };
            let hit = if membership[s * n + i] { 1.0 } else { 0.0 };
            let rhs = rho * prev + 2.0 * constant / m * eta * hit;
            max_slack = max_slack.max(next - rhs);
            if !within_slack(next, rhs) {
                violations.push(Violation {
                    t: s + 1,
                    i: i + 1,
                    lhs: next,
                    rhs,
                });
            }
            prev = next;
        }
    }
    Ok(RecursionVerdict {
        loss_class: class,
        constant,
        violations,
        max_slack: if max_slack.is_finite() { max_slack } else { 0.0 },
    })
}

fn class_factor(class: LossClass, beta: f64, gamma: f64) -> impl Fn(f64) -> f64 {
    move |eta| match class {
        LossClass::Convex => 1.0,
        LossClass::Nonconvex => 1.0 + beta * eta,
        LossClass::StronglyConvex => 1.0 - eta * gamma / 2.0,
    }
}

fn class_constant(class: LossClass, params: &BoundParams) -> f64 {
    match class {
        LossClass::StronglyConvex => 4.0 * params.lipschitz,
        _ => params.lipschitz,
    }
}

/// The on-average stability bound `(2C/n) Σ_t η_t Π_{j>t} ρ_j`, where
/// `C = L` (convex, nonconvex) or `L̃ = 4L` (strongly convex).
///
/// `m` is accepted for symmetry with the schedule-weighted form and does
/// not enter: every step selects exactly `m` indices.
pub fn stability_bound(
    class: LossClass,
    params: &BoundParams,
    plan: &StepSizePlan,
    n: usize,
    _m: usize,
) -> Result<f64> {
    check_recursion_regime(class, params.beta, params.gamma, plan)?;
    let c = class_constant(class, params);
    Ok(2.0 * c / n as f64 * discounted_sum(&plan.etas(), class_factor(class, params.beta, params.gamma)))
}

/// `(2C/(mn)) Σ_t η_t (Σ_i 1{i ∈ K_t}) Π_{j>t} ρ_j` for a realized
/// schedule: the recursion unrolled and averaged over `i` before the
/// per-step count is replaced by `m`.
pub fn schedule_weighted_bound(
    class: LossClass,
    params: &BoundParams,
    plan: &StepSizePlan,
    sched: &RealizedSchedule,
) -> Result<f64> {
    check_recursion_regime(class, params.beta, params.gamma, plan)?;
    let c = class_constant(class, params);
    let factor = class_factor(class, params.beta, params.gamma);
    let membership = sched.membership();
    let n = sched.n();
    let mut suffix = 1.0;
    let mut acc = 0.0;
    for (s, &eta) in plan.etas().iter().enumerate().rev() {
        let count = membership[s * n..(s + 1) * n].iter().filter(|&&b| b).count();
        acc += eta * count as f64 * suffix;
        suffix *= factor(eta);
    }
    Ok(2.0 * c / (sched.m() * n) as f64 * acc)
}

/// `max_t sup_z ‖∇f(w_t, z)‖` along a trajectory.
pub fn max_path_gradient(instance: &ProblemInstance, traj: &Trajectory) -> Option<f64> {
    traj.iter()
        .map(|w| instance.sup_gradient_norm(w))
        .try_fold(0.0_f64, |acc, g| g.map(|g| acc.max(g)))
}
