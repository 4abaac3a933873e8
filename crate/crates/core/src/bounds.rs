//! Closed-form generalization bounds, exact generalization errors of the
//! constructed instances, and uniform-stability constants of the
//! incremental method.

use serde::{Deserialize, Serialize};

use crate::engine::{PlanShape, StepSizePlan};
use crate::error::{Error, Result};
use crate::problems::{Family, ProblemInstance};

const REL_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundClass {
    Convex,
    NonconvexLipschitz,
    NonconvexSmooth,
    StronglyConvex,
}

impl BoundClass {
    /// The class whose bounds apply to a given family.
    pub fn for_family(family: Family) -> Option<Self> {
        match family {
            Family::Linear | Family::ConvexHuber => Some(BoundClass::Convex),
            Family::QuadraticNonconvex => Some(BoundClass::NonconvexSmooth),
            Family::QuadraticStronglyConvex => Some(BoundClass::StronglyConvex),
            Family::CustomSmooth => None,
        }
    }
}

/// Scalar constants entering the bound formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub d: usize,
    /// `L`; for strongly convex classes the path bound used is `L̃ = 4L`.
    pub lipschitz: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl BoundParams {
    pub fn from_instance(instance: &ProblemInstance) -> Self {
        let p = instance.params();
        BoundParams {
            d: p.d,
            lipschitz: p.lipschitz,
            beta: p.beta,
            gamma: p.gamma,
        }
    }

    pub fn path_lipschitz(&self) -> f64 {
        4.0 * self.lipschitz
    }
}

/// `Σ_t η_t Π_{j>t} factor(η_j)`, with the products accumulated as a
/// running suffix in reverse order.
pub fn discounted_sum<F: Fn(f64) -> f64>(etas: &[f64], factor: F) -> f64 {
    let mut suffix = 1.0;
    let mut acc = 0.0;
    for &eta in etas.iter().rev() {
        acc += eta * suffix;
        suffix *= factor(eta);
    }
    acc
}

/// The step-size inequality behind the nonconvex upper bound:
/// `C e^{Cβ} T^{Cβ} min{1 + 1/(Cβ), ln(eT)}`.
pub fn nonconvex_step_envelope(c: f64, beta: f64, horizon: usize) -> f64 {
    if horizon == 0 {
        return 0.0;
    }
    let cb = c * beta;
    let t = horizon as f64;
    let log_term = 1.0 + t.ln();
    let min = if cb > 0.0 { (1.0 + 1.0 / cb).min(log_term) } else { log_term };
    c * cb.exp() * t.powf(cb) * min
}

/// An upper bound with an optional second form: the pre-simplified sum for
/// the nonconvex class, the `T → ∞` limit for the strongly convex class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Upper {
    pub value: f64,
    pub secondary: Option<f64>,
}

fn refuse(msg: impl Into<String>) -> Error {
    Error::Regime(msg.into())
}

fn first_violation(etas: &[f64], ok: impl Fn(f64) -> bool) -> Option<(usize, f64)> {
    etas.iter().position(|&e| !ok(e)).map(|s| (s + 1, etas[s]))
}

pub fn gen_upper(class: BoundClass, params: &BoundParams, plan: &StepSizePlan, n: usize) -> Result<Upper> {
    plan.validate()?;
    let etas = plan.etas();
    let nf = n as f64;
    let (l, beta, gamma) = (params.lipschitz, params.beta, params.gamma);
    match class {
        BoundClass::Convex => {
            if beta > 0.0 {
                if let Some((t, e)) = first_violation(&etas, |e| e < 2.0 / beta) {
                    return Err(refuse(format!("convex upper bound needs eta_t < 2/beta (eta_{t} = {e})")));
                }
            }
            Ok(Upper {
                value: 2.0 * l * l / nf * etas.iter().sum::<f64>(),
                secondary: None,
            })
        }
        BoundClass::NonconvexLipschitz => {
            let c = plan.inverse_t_envelope();
            if beta > 0.0 && c >= 1.0 / beta {
                return Err(refuse(format!(
                    "nonconvex upper bound needs eta_t <= C/t with C < 1/beta (smallest C = {c})"
                )));
            }
            let pre = 2.0 * l * l / nf * discounted_sum(&etas, |e| 1.0 + beta * e);
            Ok(Upper {
                value: 2.0 * l * l / nf * nonconvex_step_envelope(c, beta, plan.horizon),
                secondary: Some(pre),
            })
        }
        BoundClass::NonconvexSmooth => Err(Error::Capability(
            "no upper bound for the smooth nonconvex quadratic class (it is not Lipschitz)".into(),
        )),
        BoundClass::StronglyConvex => {
            if gamma <= 0.0 {
                return Err(Error::config("gamma", "strongly convex bounds need gamma > 0"));
            }
            let cap = 1.0 / (beta + gamma);
            if let Some((t, e)) = first_violation(&etas, |e| e <= cap * (1.0 + REL_SLACK)) {
                return Err(refuse(format!(
                    "strongly convex upper bound needs eta_t <= 1/(beta+gamma) = {cap} (eta_{t} = {e})"
                )));
            }
            let lt = params.path_lipschitz();
            let sum = discounted_sum(&etas, |e| 1.0 - e * gamma / 2.0);
            Ok(Upper {
                value: 2.0 * lt * lt / nf * sum,
                secondary: Some(4.0 * lt * lt / (nf * gamma)),
            })
        }
    }
}

pub fn gen_lower(
    class: BoundClass,
    params: &BoundParams,
    plan: &StepSizePlan,
    n: usize,
) -> Result<f64> {
    plan.validate()?;
    let etas = plan.etas();
    let nf = n as f64;
    let (l, beta, gamma) = (params.lipschitz, params.beta, params.gamma);
    match class {
        BoundClass::Convex => {
            if beta > 0.0 {
                if let Some((t, e)) = first_violation(&etas, |e| e <= (1.0 / beta) * (1.0 + REL_SLACK)) {
                    return Err(refuse(format!("convex lower bound needs eta_t <= 1/beta (eta_{t} = {e})")));
                }
            }
            Ok(l * l / (2.0 * nf) * etas.iter().sum::<f64>())
        }
        BoundClass::NonconvexLipschitz => Err(Error::Capability(
            "no lower bound is known for the Lipschitz smooth nonconvex class (open problem)".into(),
        )),
        BoundClass::NonconvexSmooth => {
            let c = inverse_beta_t_constant(plan, beta)?;
            let t = plan.horizon as f64;
            Ok(((t + 1.0).powf((1.0 + c).ln()) - 1.0) / (2.0 * nf))
        }
        BoundClass::StronglyConvex => {
            if gamma <= 0.0 {
                return Err(Error::config("gamma", "strongly convex bounds need gamma > 0"));
            }
            let eta = plan.constant_value().ok_or_else(|| {
                refuse("strongly convex lower bound needs a constant step size")
            })?;
            let lo = 2.0 / (gamma * (plan.horizon as f64 + 1.0));
            let hi = 1.0 / (beta + gamma);
            if eta < lo * (1.0 - REL_SLACK) || eta > hi * (1.0 + REL_SLACK) {
                return Err(refuse(format!(
                    "strongly convex lower bound needs eta in [2/(gamma(T+1)), 1/(beta+gamma)] = [{lo}, {hi}] (eta = {eta})"
                )));
            }
            let d_min = (beta * beta - gamma * gamma) / (3.0 * gamma * gamma);
            if (params.d as f64) < d_min * (1.0 - REL_SLACK) {
                return Err(refuse(format!(
                    "strongly convex lower bound needs d >= (beta^2 - gamma^2)/(3 gamma^2) = {d_min}"
                )));
            }
            let lt = params.path_lipschitz();
            Ok(lt * lt / (32.0 * gamma * nf))
        }
    }
}

/// `c` such that `η_t = c/(βt)`, required to lie in `(0, 1]`.
fn inverse_beta_t_constant(plan: &StepSizePlan, beta: f64) -> Result<f64> {
    let PlanShape::InverseT { scale } = plan.shape else {
        return Err(refuse("needs the step size eta_t = c/(beta t)"));
    };
    let c = scale * beta;
    if !(c > 0.0 && c <= 1.0 + REL_SLACK) {
        return Err(refuse(format!("needs eta_t = c/(beta t) with c in (0, 1] (c = {c})")));
    }
    Ok(c.min(1.0))
}

/// `(1/n) Σ_k λ_k² s_k² Σ_t η_t Π_{j>t}(1 − η_j λ_k)`: the exact expected
/// generalization error of `(w−z)ᵀΛ(w−z)/2` on zero-mean two-point data,
/// for any schedule (with `λ_k = 0` contributing `s_k² Σ_t η_t` for a
/// linear coordinate).
fn diagonal_gen_error(curvatures: &[(f64, f64, bool)], etas: &[f64], n: usize) -> f64 {
    let total: f64 = curvatures
        .iter()
        .map(|&(lam, s, linear)| {
            if linear {
                s * s * etas.iter().sum::<f64>()
            } else {
                lam * lam * s * s * discounted_sum(etas, |e| 1.0 - e * lam)
            }
        })
        .sum();
    total / n as f64
}

/// Exact expected generalization error of a constructed instance. The
/// value is the same for every data-independent schedule, so none is taken.
pub fn analytic_gen_error(instance: &ProblemInstance, plan: &StepSizePlan, n: usize) -> Result<f64> {
    plan.validate()?;
    let p = instance.params();
    let scales = instance.data_scales();
    let etas = plan.etas();
    match instance.family() {
        Family::Linear => {
            let coords: Vec<_> = scales.iter().map(|&s| (0.0, s, true)).collect();
            Ok(diagonal_gen_error(&coords, &etas, n))
        }
        Family::ConvexHuber => {
            if let Some((t, e)) = first_violation(&etas, |e| e * p.beta <= 1.0 + 1e-12) {
                return Err(refuse(format!(
                    "the convex construction's oracle needs eta_t <= 1/beta (eta_{t} = {e})"
                )));
            }
            let s_d = scales[p.d - 1];
            if p.tau < 2.0 * s_d * (1.0 - 1e-12) {
                return Err(Error::OutsideAnalyticRegion(
                    "the convex construction's oracle needs the default tau".into(),
                ));
            }
            let mut coords: Vec<_> = scales[..p.d - 1].iter().map(|&s| (0.0, s, true)).collect();
            coords.push((p.beta, s_d, false));
            Ok(diagonal_gen_error(&coords, &etas, n))
        }
        Family::QuadraticNonconvex => {
            inverse_beta_t_constant(plan, p.beta)?;
            let coords: Vec<_> = p.lambda.iter().zip(scales).map(|(&l, &s)| (l, s, false)).collect();
            Ok(diagonal_gen_error(&coords, &etas, n))
        }
        Family::QuadraticStronglyConvex => {
            let eta = plan.constant_value().ok_or_else(|| {
                refuse("the strongly convex oracle needs a constant step eta = c/(beta+gamma)")
            })?;
            let c = eta * (p.beta + p.gamma);
            if !(c > 0.0 && c <= 1.0 + REL_SLACK) {
                return Err(refuse(format!(
                    "the strongly convex oracle needs eta = c/(beta+gamma) with c in (0, 1] (c = {c})"
                )));
            }
            let coords: Vec<_> = p.lambda.iter().zip(scales).map(|(&l, &s)| (l, s, false)).collect();
            Ok(diagonal_gen_error(&coords, &etas, n))
        }
        Family::CustomSmooth => Err(Error::Capability(
            "analytic generalization error exists only for the constructed families".into(),
        )),
    }
}

/// Scenario for the uniform-stability constant of the incremental
/// (round-robin, `m = 1`) method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum HrsCase {
    /// Linear loss on sign vectors, `K` epochs of a restarted sequence.
    Linear { d: usize, epochs: usize, eta1: f64 },
    /// Convex loss, fewer than `n` steps.
    ConvexSingleEpoch { lipschitz: f64, eta1: f64 },
    /// Convex loss, `K` epochs; `epoch_etas[k] = η_{kn+1}`.
    ConvexEpochs { lipschitz: f64, epoch_etas: Vec<f64> },
    /// Strongly convex loss, one epoch of constant steps.
    StronglyConvexSingleEpoch { lipschitz: f64, eta: f64, gamma: f64 },
    /// Strongly convex loss, `K` epochs of constant steps over `n` examples.
    StronglyConvexEpochs {
        lipschitz: f64,
        eta: f64,
        gamma: f64,
        n: usize,
        epochs: usize,
    },
}

impl HrsCase {
    /// The convex `K`-epoch case read off a plan.
    pub fn convex_epochs(lipschitz: f64, plan: &StepSizePlan, n: usize, epochs: usize) -> Self {
        HrsCase::ConvexEpochs {
            lipschitz,
            epoch_etas: (0..epochs).map(|k| plan.eta(k * n + 1)).collect(),
        }
    }
}

/// The constant that the uniform-stability argument yields for the
/// incremental method. None of them decays with `n`.
pub fn hrs_uniform_bound(case: &HrsCase) -> Result<f64> {
    match *case {
        HrsCase::Linear { d, epochs, eta1 } => Ok(2.0 * epochs as f64 * d as f64 * eta1),
        HrsCase::ConvexSingleEpoch { lipschitz, eta1 } => Ok(2.0 * lipschitz * lipschitz * eta1),
        HrsCase::ConvexEpochs {
            lipschitz,
            ref epoch_etas,
        } => Ok(2.0 * lipschitz * lipschitz * epoch_etas.iter().sum::<f64>()),
        HrsCase::StronglyConvexSingleEpoch { lipschitz, eta, gamma } => {
            let q = contraction(eta, gamma)?;
            Ok(2.0 * lipschitz * lipschitz * eta / q)
        }
        HrsCase::StronglyConvexEpochs {
            lipschitz,
            eta,
            gamma,
            n,
            epochs,
        } => {
            let q = contraction(eta, gamma)?;
            // Σ_{k=1}^{K} q^{kn − i* − 1} is largest at i* = n
            let sum: f64 = (1..=epochs)
                .map(|k| q.powi(((k - 1) * n) as i32 - 1))
                .sum();
            Ok(2.0 * lipschitz * lipschitz * eta * sum)
        }
    }
}

fn contraction(eta: f64, gamma: f64) -> Result<f64> {
    let q = 1.0 - eta * gamma;
    if q > 0.0 && q <= 1.0 {
        Ok(q)
    } else {
        Err(refuse(format!("needs 0 < eta gamma < 1 (eta gamma = {})", eta * gamma)))
    }
}

/// Closed-form values for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSet {
    pub class: BoundClass,
    pub upper: Option<f64>,
    /// Nonconvex: the pre-simplified sum. Strongly convex: the `T → ∞` limit.
    pub upper_secondary: Option<f64>,
    pub lower: Option<f64>,
    pub analytic_oracle: Option<f64>,
    pub stability_bound: Option<f64>,
    /// True when no applicable bound was refused for its step-size regime.
    pub regime_ok: bool,
    /// Why each absent value is absent.
    pub reasons: Vec<String>,
    /// `lower ≤ oracle ≤ upper`, evaluated when all three are present.
    pub sandwich: Option<bool>,
}

impl BoundSet {
    pub fn sandwich_reason(&self) -> String {
        match self.sandwich {
            Some(true) => "lower <= oracle <= upper".into(),
            Some(false) => format!(
                "ordering violated: lower {:?}, oracle {:?}, upper {:?}",
                self.lower, self.analytic_oracle, self.upper
            ),
            None => {
                let missing: Vec<&str> = [
                    ("lower", self.lower.is_none()),
                    ("oracle", self.analytic_oracle.is_none()),
                    ("upper", self.upper.is_none()),
                ]
                .into_iter()
                .filter_map(|(name, absent)| absent.then_some(name))
                .collect();
                format!("skipped, absent: {}", missing.join(", "))
            }
        }
    }
}

/// Evaluates every applicable value; refusals become absent entries with
/// their reason.
pub fn assemble_bound_set(
    class: BoundClass,
    instance: &ProblemInstance,
    plan: &StepSizePlan,
    n: usize,
) -> Result<BoundSet> {
    let params = BoundParams::from_instance(instance);
    let expected = BoundClass::for_family(instance.family());
    if expected.is_some_and(|e| e != class)
        && !(class == BoundClass::NonconvexLipschitz && expected == Some(BoundClass::NonconvexSmooth))
    {
        return Err(Error::config(
            "class",
            format!("{class:?} does not describe the {} family", instance.family().name()),
        ));
    }
    let mut reasons = Vec::new();
    let mut regime_ok = true;
    let mut keep = |label: &str, r: Result<f64>| -> Option<f64> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                if matches!(e, Error::Regime(_) | Error::OutsideAnalyticRegion(_)) {
                    regime_ok = false;
                }
                reasons.push(format!("{label}: {e}"));
                None
            }
        }
    };
    let upper_full = gen_upper(class, &params, plan, n);
    let upper_secondary = upper_full.as_ref().ok().and_then(|u| u.secondary);
    let upper = keep("upper", upper_full.map(|u| u.value));
    let lower = keep("lower", gen_lower(class, &params, plan, n));
    let analytic_oracle = keep("oracle", analytic_gen_error(instance, plan, n));
    let stab_class = match class {
        BoundClass::Convex => crate::problems::LossClass::Convex,
        BoundClass::NonconvexLipschitz | BoundClass::NonconvexSmooth => crate::problems::LossClass::Nonconvex,
        BoundClass::StronglyConvex => crate::problems::LossClass::StronglyConvex,
    };
    let stability_bound = keep(
        "stability",
        crate::stability::stability_bound(stab_class, &params, plan, n, 1),
    );
    let sandwich = match (lower, analytic_oracle, upper) {
        (Some(lo), Some(or), Some(up)) => Some(
            crate::stability::within_slack(lo, or) && crate::stability::within_slack(or, up),
        ),
        _ => None,
    };
    Ok(BoundSet {
        class,
        upper,
        upper_secondary,
        lower,
        analytic_oracle,
        stability_bound,
        regime_ok,
        reasons,
        sandwich,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(d: usize, l: f64, beta: f64, gamma: f64) -> BoundParams {
        BoundParams {
            d,
            lipschitz: l,
            beta,
            gamma,
        }
    }

    #[test]
    fn convex_formulas() {
        let p = params(8, 1.0, 1.0, 0.0);
        let plan = StepSizePlan::constant(0.5, 100);
        assert!((gen_upper(BoundClass::Convex, &p, &plan, 50).unwrap().value - 2.0).abs() < 1e-12);
        assert!((gen_lower(BoundClass::Convex, &p, &plan, 50).unwrap() - 0.5).abs() < 1e-12);
        let big = StepSizePlan::constant(1.5, 100);
        assert!(gen_upper(BoundClass::Convex, &p, &big, 50).is_ok());
        assert!(gen_lower(BoundClass::Convex, &p, &big, 50).is_err());
    }

    #[test]
    fn nonconvex_lower_formula() {
        let p = params(4, 1.0, 1.0, 0.0);
        let v = gen_lower(BoundClass::NonconvexSmooth, &p, &StepSizePlan::inverse_t(1.0, 99), 100).unwrap();
        let expect = (100f64.powf(2f64.ln()) - 1.0) / 200.0;
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn strongly_convex_formulas() {
        let p = params(4, 1.0, 1.0, 1.0);
        let plan = StepSizePlan::constant(0.5, 200);
        assert!((gen_lower(BoundClass::StronglyConvex, &p, &plan, 50).unwrap() - 0.01).abs() < 1e-15);
        let up = gen_upper(BoundClass::StronglyConvex, &p, &plan, 50).unwrap();
        assert!((up.value - 1.28).abs() < 1e-12);
        assert_eq!(up.secondary, Some(1.28));
        let short = StepSizePlan::constant(0.5, 3);
        let up = gen_upper(BoundClass::StronglyConvex, &p, &short, 50).unwrap();
        assert!((up.value - 1.28 * (1.0 - 0.75f64.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn nonconvex_oracle_telescopes() {
        for (n, t) in [(100, 99), (7, 1), (3, 500)] {
            let inst = ProblemInstance::quadratic_nonconvex(5, 2.0, None).unwrap();
            let v = analytic_gen_error(&inst, &StepSizePlan::inverse_t(0.5, t), n).unwrap();
            let expect = t as f64 / n as f64;
            assert!((v - expect).abs() < 1e-12 * expect, "{v} vs {expect}");
        }
    }

    #[test]
    fn strongly_convex_oracle_with_equal_curvatures() {
        let inst = ProblemInstance::quadratic_strongly_convex(4, 1.0, 1.0, 1.0).unwrap();
        for t in [1, 5, 200] {
            let v = analytic_gen_error(&inst, &StepSizePlan::constant(0.5, t), 50).unwrap();
            let expect = (1.0 - 0.5f64.powi(t as i32)) / 50.0;
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn convex_oracle_one_step() {
        // η = 1/β, T = 1: (1/n)[(d−1)L²/d + β² · L²/(4β²d)]
        let (d, n) = (6, 9);
        let inst = ProblemInstance::convex_huber(d, 1.0, 1.0).unwrap();
        let v = analytic_gen_error(&inst, &StepSizePlan::constant(1.0, 1), n).unwrap();
        let expect = ((d - 1) as f64 / d as f64 + 0.25 / d as f64) / n as f64;
        assert!((v - expect).abs() < 1e-15);
    }

    #[test]
    fn oracle_refuses_mismatched_plans() {
        let inst = ProblemInstance::quadratic_nonconvex(2, 1.0, None).unwrap();
        assert!(analytic_gen_error(&inst, &StepSizePlan::constant(0.1, 5), 10).is_err());
        let inst = ProblemInstance::quadratic_strongly_convex(2, 1.0, 1.0, 1.0).unwrap();
        assert!(analytic_gen_error(&inst, &StepSizePlan::inverse_t(0.1, 5), 10).is_err());
        let inst = ProblemInstance::convex_huber(2, 1.0, 1.0).unwrap();
        assert!(analytic_gen_error(&inst, &StepSizePlan::constant(1.5, 5), 10).is_err());
    }

    #[test]
    fn hrs_constants() {
        let v = hrs_uniform_bound(&HrsCase::Linear { d: 10, epochs: 3, eta1: 0.1 }).unwrap();
        assert!((v - 6.0).abs() < 1e-12);
        let v = hrs_uniform_bound(&HrsCase::ConvexSingleEpoch { lipschitz: 2.0, eta1: 0.25 }).unwrap();
        assert_eq!(v, 2.0);
        let v = hrs_uniform_bound(&HrsCase::StronglyConvexSingleEpoch {
            lipschitz: 1.0,
            eta: 0.5,
            gamma: 1.0,
        })
        .unwrap();
        assert_eq!(v, 2.0);
        let plan = StepSizePlan::epoch_restart(0.3, 10, 30);
        let v = hrs_uniform_bound(&HrsCase::convex_epochs(1.0, &plan, 10, 3)).unwrap();
        assert!((v - 2.0 * 0.9).abs() < 1e-12);
        let one = hrs_uniform_bound(&HrsCase::StronglyConvexEpochs {
            lipschitz: 1.0,
            eta: 0.1,
            gamma: 1.0,
            n: 20,
            epochs: 1,
        })
        .unwrap();
        assert!((one - 2.0 * 0.1 / 0.9).abs() < 1e-12);
    }

    #[test]
    fn bound_set_examples() {
        let inst = ProblemInstance::convex_huber(8, 1.0, 1.0).unwrap();
        let bs = assemble_bound_set(BoundClass::Convex, &inst, &StepSizePlan::constant(0.5, 100), 50).unwrap();
        assert_eq!(bs.sandwich, Some(true));
        assert!((bs.lower.unwrap() - 0.5).abs() < 1e-12);
        assert!((bs.upper.unwrap() - 2.0).abs() < 1e-12);

        let bs = assemble_bound_set(BoundClass::Convex, &inst, &StepSizePlan::constant(1.5, 100), 50).unwrap();
        assert!(bs.lower.is_none() && bs.sandwich.is_none() && !bs.regime_ok);
        assert!(bs.reasons.iter().any(|r| r.starts_with("lower")));

        let nc = ProblemInstance::quadratic_nonconvex(3, 1.0, None).unwrap();
        let bs = assemble_bound_set(BoundClass::NonconvexSmooth, &nc, &StepSizePlan::inverse_t(1.0, 20), 30).unwrap();
        assert!(bs.upper.is_none() && bs.lower.is_some() && bs.analytic_oracle.is_some());
        assert!(bs.regime_ok);

        let bs = assemble_bound_set(BoundClass::Convex, &inst, &StepSizePlan::constant(0.5, 0), 50).unwrap();
        for v in [bs.upper, bs.lower, bs.analytic_oracle, bs.stability_bound].into_iter().flatten() {
            assert_eq!(v, 0.0);
        }
    }
}
