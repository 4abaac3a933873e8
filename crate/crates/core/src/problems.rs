//! Loss families, their two-point data laws, and closed-form risks.
//!
//! Every family draws examples coordinate-wise as an independent fair sign
//! times a per-coordinate scale, so population risks reduce to finite
//! averages that can be written in closed form.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    ConvexHuber,
    QuadraticNonconvex,
    QuadraticStronglyConvex,
    CustomSmooth,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::ConvexHuber => "convex_huber",
            Family::QuadraticNonconvex => "quadratic_nonconvex",
            Family::QuadraticStronglyConvex => "quadratic_strongly_convex",
            Family::CustomSmooth => "custom_smooth",
        }
    }

    pub fn is_quadratic(self) -> bool {
        matches!(self, Family::QuadraticNonconvex | Family::QuadraticStronglyConvex)
    }
}

/// Curvature class that selects a growth recursion and a stability bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossClass {
    Convex,
    Nonconvex,
    StronglyConvex,
}

/// A user-supplied smooth loss with its closed-form gradient.
pub trait SmoothLoss: Send + Sync {
    fn loss(&self, w: &[f64], z: &[f64]) -> f64;
    /// Writes `∇_w f(w, z)` into `out`.
    fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]);
}

/// Fully resolved parameters of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossParams {
    pub d: usize,
    /// Lipschitz constant `L`.
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Huber threshold (convex_huber only, 0 otherwise).
    pub tau: f64,
    /// Diagonal of `Λ` (quadratic families only, empty otherwise).
    pub lambda: Vec<f64>,
    pub w1: Vec<f64>,
}

/// Instance declaration as it appears in an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub family: Family,
    pub d: usize,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<Vec<f64>>,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<ProblemInstance> {
        ProblemInstance::from_spec(self)
    }
}

#[derive(Clone)]
pub struct ProblemInstance {
    family: Family,
    params: LossParams,
    data_scales: Vec<f64>,
    custom: Option<Arc<dyn SmoothLoss>>,
}

impl fmt::Debug for ProblemInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("family", &self.family)
            .field("params", &self.params)
            .field("data_scales", &self.data_scales)
            .finish_non_exhaustive()
    }
}

const REL_SLACK: f64 = 1e-9;

fn check_positive(field: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::config(field, format!("must be finite and > 0 (got {v})")));
    }
    Ok(())
}

fn resolve_w1(w1: Option<&Vec<f64>>, d: usize) -> Result<Vec<f64>> {
    match w1 {
        None => Ok(vec![0.0; d]),
        Some(w) if w.len() != d => Err(Error::config(
            "w1",
            format!("length must equal d = {d} (got {})", w.len()),
        )),
        Some(w) if w.iter().any(|x| !x.is_finite()) => {
            Err(Error::config("w1", "all coordinates must be finite"))
        }
        Some(w) => Ok(w.clone()),
    }
}

impl ProblemInstance {
    pub fn from_spec(spec: &InstanceSpec) -> Result<Self> {
        let d = spec.d;
        if d == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        let w1 = resolve_w1(spec.w1.as_ref(), d)?;
        let reject = |name: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::config(
                    name,
                    format!("not a parameter of the {} family", spec.family.name()),
                ))
            } else {
                Ok(())
            }
        };
        match spec.family {
            Family::Linear => {
                reject("tau", spec.tau.is_some())?;
                reject("lambda", spec.lambda.is_some())?;
                reject("gamma", spec.gamma.is_some_and(|g| g != 0.0))?;
                let root_d = (d as f64).sqrt();
                if let Some(l) = spec.lipschitz {
                    if (l - root_d).abs() > REL_SLACK * root_d {
                        return Err(Error::config(
                            "L",
                            format!("the linear loss has L = sqrt(d) = {root_d} (got {l})"),
                        ));
                    }
                }
                if spec.beta.is_some_and(|b| b != 0.0) {
                    return Err(Error::config("beta", "the linear loss has beta = 0"));
                }
                let mut inst = Self::linear(d);
                inst.params.w1 = w1;
                Ok(inst)
            }
            Family::ConvexHuber => {
                reject("lambda", spec.lambda.is_some())?;
                reject("gamma", spec.gamma.is_some_and(|g| g != 0.0))?;
                let l = spec.lipschitz.ok_or_else(|| Error::config("L", "required"))?;
                let beta = spec.beta.ok_or_else(|| Error::config("beta", "required"))?;
                Self::convex_huber_with(d, l, beta, spec.tau, w1)
            }
            Family::QuadraticNonconvex => {
                reject("tau", spec.tau.is_some())?;
                reject("L", spec.lipschitz.is_some())?;
                reject("gamma", spec.gamma.is_some_and(|g| g != 0.0))?;
                let beta = spec.beta.ok_or_else(|| Error::config("beta", "required"))?;
                let mut inst = Self::quadratic_nonconvex(d, beta, spec.lambda.clone())?;
                inst.params.w1 = w1;
                Ok(inst)
            }
            Family::QuadraticStronglyConvex => {
                reject("tau", spec.tau.is_some())?;
                let l = spec.lipschitz.ok_or_else(|| Error::config("L", "required"))?;
                let beta = spec.beta.ok_or_else(|| Error::config("beta", "required"))?;
                let gamma = spec.gamma.ok_or_else(|| Error::config("gamma", "required"))?;
                let mut inst = Self::quadratic_strongly_convex(d, l, beta, gamma)?;
                if let Some(lam) = &spec.lambda {
                    if lam != &inst.params.lambda {
                        return Err(Error::config(
                            "lambda",
                            "must equal diag(beta, gamma, ..., gamma) for this family",
                        ));
                    }
                }
                inst.params.w1 = w1;
                Ok(inst)
            }
            Family::CustomSmooth => Err(Error::config(
                "family",
                "custom_smooth instances carry code and must be built with ProblemInstance::custom_smooth",
            )),
        }
    }

    /// `f(w, z) = Σ_k w^k z^k` on sign vectors.
    pub fn linear(d: usize) -> Self {
        ProblemInstance {
            family: Family::Linear,
            params: LossParams {
                d,
                lipschitz: (d as f64).sqrt(),
                beta: 0.0,
                gamma: 0.0,
                tau: 0.0,
                lambda: Vec::new(),
                w1: vec![0.0; d],
            },
            data_scales: vec![1.0; d],
            custom: None,
        }
    }

    /// Linear coordinates plus a Huberized quadratic in the last one,
    /// with the default threshold `τ = L/(√d β)` and `w₁ = 0`.
    pub fn convex_huber(d: usize, lipschitz: f64, beta: f64) -> Result<Self> {
        Self::convex_huber_with(d, lipschitz, beta, None, vec![0.0; d])
    }

    pub fn convex_huber_with(
        d: usize,
        lipschitz: f64,
        beta: f64,
        tau: Option<f64>,
        w1: Vec<f64>,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::config(
                "d",
                "convex_huber needs d >= 2 so that at least one linear coordinate exists",
            ));
        }
        check_positive("L", lipschitz)?;
        check_positive("beta", beta)?;
        let root_d = (d as f64).sqrt();
        let tau_max = lipschitz / (root_d * beta);
        let tau = tau.unwrap_or(tau_max);
        check_positive("tau", tau)?;
        if tau > tau_max * (1.0 + REL_SLACK) {
            return Err(Error::config(
                "tau",
                format!("must satisfy tau <= L/(sqrt(d) beta) = {tau_max} (got {tau})"),
            ));
        }
        let w1 = resolve_w1(Some(&w1), d)?;
        let mut scales = vec![lipschitz / root_d; d];
        scales[d - 1] = lipschitz / (2.0 * beta * root_d);
        Ok(ProblemInstance {
            family: Family::ConvexHuber,
            params: LossParams {
                d,
                lipschitz,
                beta,
                gamma: 0.0,
                tau,
                lambda: Vec::new(),
                w1,
            },
            data_scales: scales,
            custom: None,
        })
    }

    /// `(w−z)ᵀΛ(w−z)/2` with negative curvature; `Λ` defaults to `−βI`.
    pub fn quadratic_nonconvex(d: usize, beta: f64, lambda: Option<Vec<f64>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        check_positive("beta", beta)?;
        let lambda = lambda.unwrap_or_else(|| vec![-beta; d]);
        if lambda.len() != d {
            return Err(Error::config(
                "lambda",
                format!("length must equal d = {d} (got {})", lambda.len()),
            ));
        }
        if let Some(bad) = lambda
            .iter()
            .find(|&&l| !(l < 0.0 && l.abs() <= beta * (1.0 + REL_SLACK)))
        {
            return Err(Error::config(
                "lambda",
                format!("every entry must satisfy lambda_k < 0 and |lambda_k| <= beta (found {bad})"),
            ));
        }
        let scale = 1.0 / (beta * d as f64).sqrt();
        let scales = vec![scale; d];
        let lipschitz = half_diameter(&lambda, &scales);
        Ok(ProblemInstance {
            family: Family::QuadraticNonconvex,
            params: LossParams {
                d,
                lipschitz,
                beta,
                gamma: 0.0,
                tau: 0.0,
                lambda,
                w1: vec![0.0; d],
            },
            data_scales: scales,
            custom: None,
        })
    }

    /// `(w−z)ᵀΛ(w−z)/2` with `Λ = diag(β, γ, …, γ)`.
    pub fn quadratic_strongly_convex(d: usize, lipschitz: f64, beta: f64, gamma: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        check_positive("L", lipschitz)?;
        check_positive("beta", beta)?;
        check_positive("gamma", gamma)?;
        if beta < gamma {
            return Err(Error::config(
                "beta",
                format!("must satisfy beta >= gamma (beta = {beta}, gamma = {gamma})"),
            ));
        }
        let d_min = (beta * beta - gamma * gamma) / (3.0 * gamma * gamma);
        if (d as f64) < d_min * (1.0 - REL_SLACK) {
            return Err(Error::config(
                "d",
                format!("must satisfy d >= (beta^2 - gamma^2)/(3 gamma^2) = {d_min} (got {d})"),
            ));
        }
        let mut lambda = vec![gamma; d];
        lambda[0] = beta;
        let scales = vec![lipschitz / (gamma * (d as f64).sqrt()); d];
        Ok(ProblemInstance {
            family: Family::QuadraticStronglyConvex,
            params: LossParams {
                d,
                lipschitz,
                beta,
                gamma,
                tau: 0.0,
                lambda,
                w1: vec![0.0; d],
            },
            data_scales: scales,
            custom: None,
        })
    }

    /// A user loss over the symmetric two-point law with the given scales.
    /// `params.lipschitz`, `beta` and `gamma` are the constants the caller
    /// vouches for; `verify_regularity` can audit them.
    pub fn custom_smooth(
        loss: Arc<dyn SmoothLoss>,
        params: LossParams,
        data_scales: Vec<f64>,
    ) -> Result<Self> {
        if params.d == 0 {
            return Err(Error::config("d", "dimension must be at least 1"));
        }
        if data_scales.len() != params.d {
            return Err(Error::config("data_scales", "length must equal d"));
        }
        if params.w1.len() != params.d {
            return Err(Error::config("w1", "length must equal d"));
        }
        check_positive("L", params.lipschitz)?;
        if !(params.beta >= 0.0 && params.gamma >= 0.0) {
            return Err(Error::config("beta", "beta and gamma must be >= 0"));
        }
        if params.gamma > params.beta {
            return Err(Error::config("beta", "must satisfy beta >= gamma"));
        }
        Ok(ProblemInstance {
            family: Family::CustomSmooth,
            params,
            data_scales,
            custom: Some(loss),
        })
    }

    pub fn with_w1(mut self, w1: Vec<f64>) -> Result<Self> {
        self.params.w1 = resolve_w1(Some(&w1), self.params.d)?;
        Ok(self)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &LossParams {
        &self.params
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    pub fn w1(&self) -> &[f64] {
        &self.params.w1
    }

    pub fn data_scales(&self) -> &[f64] {
        &self.data_scales
    }

    pub fn natural_class(&self) -> LossClass {
        match self.family {
            Family::Linear | Family::ConvexHuber => LossClass::Convex,
            Family::QuadraticNonconvex => LossClass::Nonconvex,
            Family::QuadraticStronglyConvex => LossClass::StronglyConvex,
            Family::CustomSmooth if self.params.gamma > 0.0 => LossClass::StronglyConvex,
            Family::CustomSmooth => LossClass::Convex,
        }
    }

    /// Global Lipschitz constant of `f(·, z)`, absent for the quadratic
    /// families whose gradients are unbounded.
    pub fn lipschitz(&self) -> Option<f64> {
        match self.family {
            Family::QuadraticNonconvex | Family::QuadraticStronglyConvex => None,
            _ => Some(self.params.lipschitz),
        }
    }

    /// Constant multiplying `(2/m)η_t 1{i ∈ K_t}` in the growth recursion
    /// of `class`.
    ///
    /// Convex classes use `L`. Strongly convex uses the path-gradient bound
    /// `L̃ = 4L`. The nonconvex quadratic is not Lipschitz, so it uses
    /// `sup ‖Λ(z − z′)‖/2 = (Σ_k λ_k² s_k²)^{1/2}`, the quantity that bounds
    /// the perturbed-example term of its update exactly.
    pub fn recursion_constant(&self, class: LossClass) -> f64 {
        match class {
            LossClass::StronglyConvex => 4.0 * self.params.lipschitz,
            LossClass::Nonconvex if self.family == Family::QuadraticNonconvex => {
                half_diameter(&self.params.lambda, &self.data_scales)
            }
            _ => self.params.lipschitz,
        }
    }

    pub fn loss(&self, w: &[f64], z: &[f64]) -> f64 {
        let p = &self.params;
        match self.family {
            Family::Linear => dot(w, z),
            Family::ConvexHuber => {
                let d = p.d;
                let u = w[d - 1] - p.w1[d - 1] - z[d - 1];
                dot(&w[..d - 1], &z[..d - 1]) + huber(u, p.beta, p.tau)
            }
            Family::QuadraticNonconvex | Family::QuadraticStronglyConvex => p
                .lambda
                .iter()
                .zip(w.iter().zip(z))
                .map(|(l, (a, b))| 0.5 * l * (a - b) * (a - b))
                .sum(),
            Family::CustomSmooth => self.custom.as_ref().map_or(f64::NAN, |c| c.loss(w, z)),
        }
    }

    /// Adds `scale · ∇_w f(w, z)` to `acc`.
    pub fn add_grad(&self, w: &[f64], z: &[f64], scale: f64, acc: &mut [f64]) {
        let p = &self.params;
        match self.family {
            Family::Linear => {
                for (a, zk) in acc.iter_mut().zip(z) {
                    *a += scale * zk;
                }
            }
            Family::ConvexHuber => {
                let d = p.d;
                for (a, zk) in acc[..d - 1].iter_mut().zip(z) {
                    *a += scale * zk;
                }
                let u = w[d - 1] - p.w1[d - 1] - z[d - 1];
                acc[d - 1] += scale * huber_prime(u, p.beta, p.tau);
            }
            Family::QuadraticNonconvex | Family::QuadraticStronglyConvex => {
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += scale * p.lambda[k] * (w[k] - z[k]);
                }
            }
            Family::CustomSmooth => {
                let mut g = vec![0.0; p.d];
                if let Some(c) = &self.custom {
                    c.grad(w, z, &mut g);
                }
                for (a, gk) in acc.iter_mut().zip(&g) {
                    *a += scale * gk;
                }
            }
        }
    }

    pub fn grad(&self, w: &[f64], z: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.params.d];
        self.add_grad(w, z, 1.0, &mut g);
        g
    }

    /// `sup_z ‖∇f(w, z)‖` over the data support, when it has a closed form.
    pub fn sup_gradient_norm(&self, w: &[f64]) -> Option<f64> {
        let p = &self.params;
        match self.family {
            Family::Linear => Some((p.d as f64).sqrt()),
            Family::ConvexHuber => {
                let d = p.d;
                let lin: f64 = self.data_scales[..d - 1].iter().map(|s| s * s).sum();
                let delta = (w[d - 1] - p.w1[d - 1]).abs() + self.data_scales[d - 1];
                let h = huber_prime(delta, p.beta, p.tau);
                Some((lin + h * h).sqrt())
            }
            Family::QuadraticNonconvex | Family::QuadraticStronglyConvex => Some(
                p.lambda
                    .iter()
                    .zip(w.iter().zip(&self.data_scales))
                    .map(|(l, (wk, s))| {
                        let g = l * (wk.abs() + s);
                        g * g
                    })
                    .sum::<f64>()
                    .sqrt(),
            ),
            Family::CustomSmooth => None,
        }
    }

    /// Draws one example from the data law.
    pub fn sample_example<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.data_scales
            .iter()
            .map(|&s| if rng.random::<bool>() { s } else { -s })
            .collect()
    }

    pub fn empirical_risk(&self, w: &[f64], data: &Dataset) -> f64 {
        let total: f64 = data.iter().map(|z| self.loss(w, z)).sum();
        total / data.n() as f64
    }

    /// Exact `E_Z f(w, Z)`.
    pub fn population_risk(&self, w: &[f64]) -> Result<f64> {
        let p = &self.params;
        match self.family {
            Family::Linear => Ok(0.0),
            Family::ConvexHuber => {
                let d = p.d;
                let delta = w[d - 1] - p.w1[d - 1];
                if delta.abs() > 0.5 * p.tau * (1.0 + REL_SLACK) {
                    return Err(Error::OutsideAnalyticRegion(format!(
                        "|w^d - w1^d| = {} exceeds tau/2 = {}",
                        delta.abs(),
                        0.5 * p.tau
                    )));
                }
                let s = self.data_scales[d - 1];
                Ok(0.5 * (huber(delta - s, p.beta, p.tau) + huber(delta + s, p.beta, p.tau)))
            }
            Family::QuadraticNonconvex | Family::QuadraticStronglyConvex => {
                let quad: f64 = p.lambda.iter().zip(w).map(|(l, x)| l * x * x).sum();
                let noise: f64 = p
                    .lambda
                    .iter()
                    .zip(&self.data_scales)
                    .map(|(l, s)| l * s * s)
                    .sum();
                Ok(0.5 * (quad + noise))
            }
            Family::CustomSmooth => {
                if p.d > MAX_ATOM_DIM {
                    return Err(Error::Capability(format!(
                        "custom_smooth population risk enumerates 2^d atoms and needs d <= {MAX_ATOM_DIM}"
                    )));
                }
                Ok(self.atom_average(w))
            }
        }
    }

    /// Average of `f(w, ·)` over all `2^d` support atoms.
    pub fn atom_average(&self, w: &[f64]) -> f64 {
        let d = self.params.d;
        let mut z = vec![0.0; d];
        let mut total = 0.0;
        for mask in 0u64..(1u64 << d) {
            for (k, zk) in z.iter_mut().enumerate() {
                let s = self.data_scales[k];
                *zk = if mask >> k & 1 == 1 { s } else { -s };
            }
            total += self.loss(w, &z);
        }
        total / (1u64 << d) as f64
    }
}

const MAX_ATOM_DIM: usize = 20;

fn half_diameter(lambda: &[f64], scales: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(scales)
        .map(|(l, s)| l * l * s * s)
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Quadratic for `|u| ≤ τ`, linear beyond; the kink uses the quadratic branch.
pub fn huber(u: f64, beta: f64, tau: f64) -> f64 {
    if u.abs() <= tau {
        0.5 * beta * u * u
    } else {
        beta * tau * (u.abs() - 0.5 * tau)
    }
}

pub fn huber_prime(u: f64, beta: f64, tau: f64) -> f64 {
    if u.abs() <= tau {
        beta * u
    } else {
        beta * tau * u.signum()
    }
}

/// `n` examples of dimension `d`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    d: usize,
    examples: Vec<f64>,
    pub origin_seed: u64,
}

impl Dataset {
    pub fn from_rows(rows: &[Vec<f64>], origin_seed: u64) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || d == 0 {
            return Err(Error::config("dataset", "needs at least one non-empty example"));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::config(
                "dataset",
                format!("example {} has length {} but d = {d}", bad + 1, rows[bad].len()),
            ));
        }
        Ok(Dataset {
            d,
            examples: rows.concat(),
            origin_seed,
        })
    }

    pub fn n(&self) -> usize {
        self.examples.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// 0-based access.
    pub fn example(&self, k: usize) -> &[f64] {
        &self.examples[k * self.d..(k + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.examples.chunks(self.d)
    }

    /// Coordinate-wise mean `z̄`.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for z in self.iter() {
            for (a, b) in m.iter_mut().zip(z) {
                *a += b;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// One example per line, no header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for z in self.iter() {
            wtr.write_record(z.iter().map(|x| x.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, origin_seed: u64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::config("dataset", format!("bad number {f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows, origin_seed)
    }
}

pub fn sample_dataset(instance: &ProblemInstance, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::config("n", "dataset size must be at least 1"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut examples = Vec::with_capacity(n * instance.d());
    for _ in 0..n {
        examples.extend(instance.sample_example(&mut rng));
    }
    Ok(Dataset {
        d: instance.d(),
        examples,
        origin_seed: seed,
    })
}

/// `n` fresh examples used as the replacements `z′_1, …, z′_n`.
pub fn sample_replacements(instance: &ProblemInstance, n: usize, seed: u64) -> Result<Dataset> {
    sample_dataset(instance, n, seed)
}

/// `S^(i)`: a copy of `data` with the 1-based position `i` replaced.
pub fn neighbor(data: &Dataset, i: usize, replacement: &[f64]) -> Result<Dataset> {
    if i == 0 || i > data.n() {
        return Err(Error::Argument(format!("index i = {i} outside [1, {}]", data.n())));
    }
    if replacement.len() != data.d {
        return Err(Error::Argument(format!(
            "replacement has length {} but d = {}",
            replacement.len(),
            data.d
        )));
    }
    let mut out = data.clone();
    out.examples[(i - 1) * data.d..i * data.d].copy_from_slice(replacement);
    Ok(out)
}

/// Outcome of the sampled regularity audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityVerdict {
    pub passed: bool,
    pub trials: usize,
    /// Largest `‖∇f(w, z)‖` seen (the Lipschitz constant for sign data).
    pub measured_lipschitz: f64,
    /// Largest `‖∇f(w,z) − ∇f(u,z)‖ / ‖w − u‖` seen, including axis probes.
    pub measured_smoothness: f64,
    pub first_violation: Option<String>,
}

/// Samples point pairs around `w₁` and audits the constants the instance
/// claims: Lipschitz, smoothness, strong convexity and gradient accuracy
/// against central finite differences.
pub fn verify_regularity(instance: &ProblemInstance, trials: usize, seed: u64) -> Result<RegularityVerdict> {
    if trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let p = instance.params();
    let d = p.d;
    let lip = instance.lipschitz();
    let radius = 1.0 + 2.0 * instance.data_scales.iter().fold(0.0_f64, |a, &s| a.max(s));
    let mut rng = stream_rng(seed, 0);
    let mut measured_lip = 0.0_f64;
    let mut measured_smooth = 0.0_f64;
    let mut violation: Option<String> = None;
    let mut note = |msg: String| {
        if violation.is_none() {
            violation = Some(msg);
        }
    };
    let slack = |rhs: f64| rhs + REL_SLACK * rhs.abs() + 1e-12;

    for trial in 0..trials {
        let w: Vec<f64> = p.w1.iter().map(|c| c + rng.random_range(-radius..radius)).collect();
        let u: Vec<f64> = p.w1.iter().map(|c| c + rng.random_range(-radius..radius)).collect();
        let z = instance.sample_example(&mut rng);
        let gw = instance.grad(&w, &z);
        let gu = instance.grad(&u, &z);
        let gap = dist(&w, &u);
        measured_lip = measured_lip.max(norm(&gw)).max(norm(&gu));

        if let Some(l) = lip {
            let lhs = (instance.loss(&w, &z) - instance.loss(&u, &z)).abs();
            if lhs > slack(l * gap) {
                note(format!(
                    "Lipschitz: |f(w,z) - f(u,z)| = {lhs} > L||w-u|| = {} at trial {trial}, w = {w:?}, u = {u:?}, z = {z:?}",
                    l * gap
                ));
            }
        }
        let gdiff = dist(&gw, &gu);
        if gap > 0.0 {
            measured_smooth = measured_smooth.max(gdiff / gap);
        }
        if gdiff > slack(p.beta * gap) {
            note(format!(
                "smoothness: ||grad f(w,z) - grad f(u,z)|| = {gdiff} > beta||w-u|| = {} at trial {trial}, w = {w:?}, u = {u:?}, z = {z:?}",
                p.beta * gap
            ));
        }
        if p.gamma > 0.0 {
            let diff: Vec<f64> = gw.iter().zip(&gu).map(|(a, b)| a - b).collect();
            let wu: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a - b).collect();
            let lhs = dot(&diff, &wu);
            let rhs = p.gamma * gap * gap;
            if lhs < rhs - REL_SLACK * rhs.abs() - 1e-12 {
                note(format!(
                    "strong convexity: <grad f(w,z) - grad f(u,z), w - u> = {lhs} < gamma||w-u||^2 = {rhs} at trial {trial}, w = {w:?}, u = {u:?}, z = {z:?}"
                ));
            }
        }

        // axis probes reach the extreme curvature directions of diagonal losses
        let k = trial % d;
        let mut probe = w.clone();
        probe[k] += 1e-3;
        let near_kink = instance.family == Family::ConvexHuber && {
            let at = |x: &[f64]| (x[d - 1] - p.w1[d - 1] - z[d - 1]).abs();
            (at(&w) - p.tau).abs() < 2e-3 || (at(&probe) - p.tau).abs() < 2e-3
        };
        if !near_kink {
            let gp = instance.grad(&probe, &z);
            measured_smooth = measured_smooth.max(dist(&gp, &gw) / 1e-3);
        }

        if let Some(msg) = finite_difference_mismatch(instance, &w, &z) {
            note(format!("gradient vs finite difference at trial {trial}: {msg}"));
        }
    }

    Ok(RegularityVerdict {
        passed: violation.is_none(),
        trials,
        measured_lipschitz: measured_lip,
        measured_smoothness: measured_smooth,
        first_violation: violation,
    })
}

/// Compares the closed-form gradient with central differences of step
/// `10⁻⁶(1 + ‖w‖)`; returns a description of the first mismatch beyond
/// relative tolerance `10⁻⁶`. Points within `10⁻⁴` of a Huber kink are skipped.
pub fn finite_difference_mismatch(instance: &ProblemInstance, w: &[f64], z: &[f64]) -> Option<String> {
    let p = instance.params();
    let d = p.d;
    if instance.family == Family::ConvexHuber {
        let u = (w[d - 1] - p.w1[d - 1] - z[d - 1]).abs();
        if (u - p.tau).abs() < 1e-4 {
            return None;
        }
    }
    let h = 1e-6 * (1.0 + norm(w));
    let g = instance.grad(w, z);
    let mut fd = vec![0.0; d];
    let mut probe = w.to_vec();
    for k in 0..d {
        probe[k] = w[k] + h;
        let up = instance.loss(&probe, z);
        probe[k] = w[k] - h;
        let down = instance.loss(&probe, z);
        probe[k] = w[k];
        fd[k] = (up - down) / (2.0 * h);
    }
    let err = dist(&fd, &g);
    let scale = norm(&g).max(instance.loss(w, z).abs()).max(1.0);
    (err > 1e-6 * scale).then(|| format!("closed form {g:?}, central difference {fd:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn linear_examples_are_sign_vectors() {
        let inst = ProblemInstance::linear(2);
        let s = sample_dataset(&inst, 1, 9).unwrap();
        assert_eq!(s.n(), 1);
        assert!(s.example(0).iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn convex_huber_scales() {
        let inst = ProblemInstance::convex_huber(3, 1.0, 1.0).unwrap();
        let a = 1.0 / 3f64.sqrt();
        let b = 1.0 / (2.0 * 3f64.sqrt());
        let s = sample_dataset(&inst, 20, 1).unwrap();
        for z in s.iter() {
            assert!(close(z[0].abs(), a, 1e-15) && close(z[1].abs(), a, 1e-15));
            assert!(close(z[2].abs(), b, 1e-15));
        }
        assert!(close(inst.params().tau, a, 1e-15));
    }

    #[test]
    fn coordinate_means_concentrate() {
        let inst = ProblemInstance::linear(3);
        let n = 100_000;
        let s = sample_dataset(&inst, n, 5).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        assert!(s.mean().iter().all(|m| m.abs() < bound));
    }

    #[test]
    fn dataset_is_deterministic_in_seed() {
        let inst = ProblemInstance::convex_huber(4, 1.0, 2.0).unwrap();
        assert_eq!(sample_dataset(&inst, 7, 3).unwrap(), sample_dataset(&inst, 7, 3).unwrap());
        assert_ne!(sample_dataset(&inst, 7, 3).unwrap(), sample_dataset(&inst, 7, 4).unwrap());
    }

    #[test]
    fn neighbor_touches_only_position_i() {
        let inst = ProblemInstance::linear(4);
        let s = sample_dataset(&inst, 3, 0).unwrap();
        let z = vec![9.0; 4];
        let t = neighbor(&s, 1, &z).unwrap();
        assert_eq!(t.example(0), &z[..]);
        assert_eq!(t.example(1), s.example(1));
        assert_eq!(t.example(2), s.example(2));
        assert_eq!(neighbor(&s, 2, s.example(1)).unwrap(), s);
        assert!(neighbor(&s, 0, &z).is_err());
        assert!(neighbor(&s, 4, &z).is_err());
    }

    #[test]
    fn huber_gradient_at_initial_point() {
        let inst = ProblemInstance::convex_huber(3, 1.0, 1.0).unwrap();
        let tau = inst.params().tau;
        let z = vec![0.3, -0.2, tau / 2.0];
        let g = inst.grad(inst.w1(), &z);
        assert_eq!(&g[..2], &z[..2]);
        assert!(close(g[2], -tau / 2.0, 1e-15));
    }

    #[test]
    fn huber_gradient_norm_bounded_by_lipschitz() {
        let (d, l, beta) = (5, 1.3, 2.0);
        let inst = ProblemInstance::convex_huber(d, l, beta).unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..2000 {
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z = inst.sample_example(&mut rng);
            assert!(norm(&inst.grad(&w, &z)) <= l * (1.0 + 1e-12));
        }
    }

    #[test]
    fn strongly_convex_gradient_is_diagonal_action() {
        let inst = ProblemInstance::quadratic_strongly_convex(2, 1.0, 3.0, 2.0).unwrap();
        let g = inst.grad(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(g, vec![3.0, 2.0]);
    }

    #[test]
    fn empirical_risk_examples() {
        let lin = ProblemInstance::linear(3);
        let s = sample_dataset(&lin, 5, 1).unwrap();
        assert_eq!(lin.empirical_risk(&[0.0; 3], &s), 0.0);

        let q = ProblemInstance::quadratic_nonconvex(2, 1.0, None).unwrap();
        let z = vec![0.5, -0.5];
        let same = Dataset::from_rows(&[z.clone(), z.clone(), z.clone()], 0).unwrap();
        assert_eq!(q.empirical_risk(&z, &same), 0.0);

        let two = Dataset::from_rows(&[vec![1.0, -1.0], vec![-1.0, -1.0]], 0).unwrap();
        let w = [0.25, 2.0];
        let direct = 0.5 * (lin_loss(&w, two.example(0)) + lin_loss(&w, two.example(1)));
        let lin2 = ProblemInstance::linear(2);
        assert!(close(lin2.empirical_risk(&w, &two), direct, 1e-15));
    }

    fn lin_loss(w: &[f64], z: &[f64]) -> f64 {
        w[0] * z[0] + w[1] * z[1]
    }

    #[test]
    fn population_risk_closed_forms() {
        let lin = ProblemInstance::linear(3);
        assert_eq!(lin.population_risk(&[4.0, -1.0, 2.0]).unwrap(), 0.0);
        let q = ProblemInstance::quadratic_nonconvex(5, 2.0, None).unwrap();
        assert!(close(q.population_risk(&[0.0; 5]).unwrap(), -0.5, 1e-15));
    }

    #[test]
    fn population_risk_matches_atom_enumeration() {
        let cases = vec![
            ProblemInstance::linear(4),
            ProblemInstance::convex_huber(4, 1.0, 1.5).unwrap(),
            ProblemInstance::quadratic_nonconvex(3, 1.0, Some(vec![-1.0, -0.5, -0.25])).unwrap(),
            ProblemInstance::quadratic_strongly_convex(3, 1.0, 2.0, 1.0).unwrap(),
        ];
        for inst in cases {
            let mut w = vec![0.1; inst.d()];
            let tau = inst.params().tau;
            if inst.family() == Family::ConvexHuber {
                *w.last_mut().unwrap() = 0.4 * tau;
            }
            let exact = inst.population_risk(&w).unwrap();
            assert!(close(exact, inst.atom_average(&w), 1e-13), "{:?}", inst.family());
        }
    }

    #[test]
    fn huber_population_risk_refuses_outside_region() {
        let inst = ProblemInstance::convex_huber(2, 1.0, 1.0).unwrap();
        let tau = inst.params().tau;
        assert!(inst.population_risk(&[0.0, 0.49 * tau]).is_ok());
        let err = inst.population_risk(&[0.0, 0.6 * tau]).unwrap_err();
        assert!(matches!(err, Error::OutsideAnalyticRegion(_)));
    }

    #[test]
    fn regularity_audit_measures_constants() {
        let q = ProblemInstance::quadratic_strongly_convex(2, 1.0, 3.0, 2.0).unwrap();
        let v = verify_regularity(&q, 200, 1).unwrap();
        assert!(v.passed, "{:?}", v.first_violation);
        assert!(close(v.measured_smoothness, 3.0, 1e-9));

        let lin = ProblemInstance::linear(4);
        let v = verify_regularity(&lin, 100, 1).unwrap();
        assert!(v.passed);
        assert_eq!(v.measured_lipschitz, 2.0);

        let h = ProblemInstance::convex_huber(3, 1.0, 1.0).unwrap();
        let v = verify_regularity(&h, 10_000, 4).unwrap();
        assert!(v.passed, "{:?}", v.first_violation);
        assert!(v.measured_lipschitz <= 1.0 + 1e-12);
    }

    struct Cosine;
    impl SmoothLoss for Cosine {
        fn loss(&self, w: &[f64], z: &[f64]) -> f64 {
            w.iter().zip(z).map(|(a, b)| (a - b).cos()).sum()
        }
        fn grad(&self, w: &[f64], z: &[f64], out: &mut [f64]) {
            for (o, (a, b)) in out.iter_mut().zip(w.iter().zip(z)) {
                *o = -(a - b).sin();
            }
        }
    }

    #[test]
    fn regularity_audit_catches_understated_constant() {
        let params = LossParams {
            d: 2,
            lipschitz: 2f64.sqrt(),
            beta: 0.5,
            gamma: 0.0,
            tau: 0.0,
            lambda: Vec::new(),
            w1: vec![0.0; 2],
        };
        let inst = ProblemInstance::custom_smooth(Arc::new(Cosine), params, vec![1.0; 2]).unwrap();
        let v = verify_regularity(&inst, 500, 0).unwrap();
        assert!(!v.passed);
        assert!(v.first_violation.unwrap().starts_with("smoothness"));
    }

    #[test]
    fn instance_validation_names_invariants() {
        let e = ProblemInstance::quadratic_nonconvex(2, 1.0, Some(vec![-1.0, 0.5])).unwrap_err();
        assert!(e.to_string().contains("lambda_k < 0"), "{e}");
        let e = ProblemInstance::quadratic_strongly_convex(1, 1.0, 3.0, 1.0).unwrap_err();
        assert!(e.to_string().contains("(beta^2 - gamma^2)/(3 gamma^2)"), "{e}");
        let e = ProblemInstance::convex_huber_with(4, 1.0, 1.0, Some(0.6), vec![0.0; 4]).unwrap_err();
        assert!(e.to_string().contains("tau"), "{e}");
        let spec: InstanceSpec =
            serde_json::from_str(r#"{"family":"linear","d":3,"L":2.0}"#).unwrap();
        assert!(spec.build().is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let inst = ProblemInstance::convex_huber(3, 1.0, 2.0).unwrap();
        let s = sample_dataset(&inst, 4, 8).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(&buf[..], 8).unwrap();
        assert_eq!(back, s);
    }
}
