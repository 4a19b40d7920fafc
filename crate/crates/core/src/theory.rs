//! Closed-form limiting out-degree laws.
//!
//! Every law here is a finite mixture over types. Uniform-attachment models
//! give shifted geometric components; preferential attachment gives
//! components of the form
//!
//! ```text
//! (1/nu) * Gamma(k + a) Gamma(1/nu + a) / (Gamma(a) Gamma(k + 1 + 1/nu + a))
//! ```
//!
//! whose gamma ratios are always evaluated through log-gamma differences.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

pub use crate::params::{CmpaParams, CwrtParams, KTypeParams, SquareMatrix, TwoTypeParams};

/// Residual tail mass targeted when choosing the truncation index.
pub const TAIL_TARGET: f64 = 1e-9;
/// Hard cap on the truncation index for extremely heavy tails.
pub const K_MAX_CAP: usize = 1 << 40;

/// One mixture component of a limiting out-degree law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Component {
    /// `weight/(1+rate) * (rate/(1+rate))^k`.
    Geometric { weight: f64, rate: f64 },
    /// Preferential attachment component with growth `nu` and offset `alpha`.
    PowerLaw { weight: f64, nu: f64, alpha: f64 },
    /// All of `weight` sits at `k = 0`.
    Atom { weight: f64 },
}

impl Component {
    fn weight(&self) -> f64 {
        match *self {
            Component::Geometric { weight, .. }
            | Component::PowerLaw { weight, .. }
            | Component::Atom { weight } => weight,
        }
    }

    fn pmf(&self, k: u64) -> f64 {
        match *self {
            Component::Geometric { weight, rate } => {
                let ratio = rate / (1.0 + rate);
                weight / (1.0 + rate) * ratio.powf(k as f64)
            }
            Component::PowerLaw { weight, nu, alpha } => {
                let b = 1.0 / nu + alpha;
                let k = k as f64;
                let log = ln_gamma(k + alpha) + ln_gamma(b) - ln_gamma(alpha) - ln_gamma(k + 1.0 + b);
                weight / nu * log.exp()
            }
            Component::Atom { weight } => {
                if k == 0 {
                    weight
                } else {
                    0.0
                }
            }
        }
    }

    /// Mass at `k` and above.
    fn tail(&self, k: u64) -> f64 {
        if k == 0 {
            return self.weight();
        }
        match *self {
            Component::Geometric { weight, rate } => weight * (rate / (1.0 + rate)).powf(k as f64),
            Component::PowerLaw { weight, nu, alpha } => {
                // Telescoping: P(X >= k) = Gamma(k+a)Gamma(b) / (Gamma(a)Gamma(k+b)).
                let b = 1.0 / nu + alpha;
                let k = k as f64;
                weight * (ln_gamma(k + alpha) + ln_gamma(b) - ln_gamma(alpha) - ln_gamma(k + b)).exp()
            }
            Component::Atom { .. } => 0.0,
        }
    }
}

/// A limiting out-degree distribution on `{0, 1, 2, ...}` together with a
/// truncation index that captures all but [`TAIL_TARGET`] of its mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitLaw {
    components: Vec<Component>,
    k_max: usize,
    captured: f64,
}

impl LimitLaw {
    pub fn from_components(components: Vec<Component>) -> Self {
        let mut law = Self { components, k_max: 0, captured: 0.0 };
        law.k_max = law.find_k_max();
        law.captured = 1.0 - law.tail(law.k_max as u64 + 1);
        law
    }

    fn find_k_max(&self) -> usize {
        let residual = |k: usize| self.tail(k as u64 + 1);
        if residual(0) < TAIL_TARGET {
            return 0;
        }
        let mut hi = 1usize;
        while residual(hi) >= TAIL_TARGET {
            if hi >= K_MAX_CAP {
                return K_MAX_CAP;
            }
            hi *= 2;
        }
        let mut lo = hi / 2;
        // residual(lo) >= target > residual(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if residual(mid) < TAIL_TARGET {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.components.iter().map(|c| c.pmf(k)).sum()
    }

    /// `P(X >= k)` computed in closed form.
    pub fn tail(&self, k: u64) -> f64 {
        self.components.iter().map(|c| c.tail(k)).sum()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// Mass of `{0, ..., k_max}`.
    pub fn captured_mass(&self) -> f64 {
        self.captured
    }

    /// `pmf(0..=upto)`.
    pub fn pmf_vec(&self, upto: usize) -> Vec<f64> {
        (0..=upto as u64).map(|k| self.pmf(k)).collect()
    }
}

/// Total per-individual reproduction rates of the two types in the
/// stabilised population. `r_b` is `None` when `p = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateStar {
    pub r_a: f64,
    pub r_b: Option<f64>,
}

pub fn rate_star(params: &TwoTypeParams) -> RateStar {
    let (p, q) = (params.p(), params.q());
    let r_a = q + (1.0 - p) * (1.0 - q) / p;
    let r_b = (p < 1.0).then(|| p * (1.0 - q) / (1.0 - p) + q);
    RateStar { r_a, r_b }
}

pub fn limit_degree_two_type(params: &TwoTypeParams) -> LimitLaw {
    let rates = rate_star(params);
    let mut components = vec![Component::Geometric { weight: params.p(), rate: rates.r_a }];
    if let Some(r_b) = rates.r_b {
        components.push(Component::Geometric { weight: 1.0 - params.p(), rate: r_b });
    }
    LimitLaw::from_components(components)
}

/// Excess of the limiting leaf fraction over the uniform-tree value 1/2.
pub fn leaf_excess(params: &TwoTypeParams) -> f64 {
    let (p, q) = (params.p(), params.q());
    let num = (2.0 * p - 1.0).powi(2) * (1.0 - q).powi(2);
    if num == 0.0 {
        return 0.0;
    }
    num / (2.0 * (1.0 - (1.0 - 2.0 * p).powi(2) * q * q))
}

/// Per-type total reproduction rates `r_i = p*_i / p_i` (`None` for `p_i = 0`).
pub fn k_type_rates(params: &KTypeParams) -> Vec<Option<f64>> {
    (0..params.num_types())
        .map(|i| {
            let p_i = params.p()[i];
            (p_i > 0.0).then(|| params.parent_type_probability(i) / p_i)
        })
        .collect()
}

pub fn limit_degree_k_type(params: &KTypeParams) -> LimitLaw {
    let components = k_type_rates(params)
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|rate| Component::Geometric { weight: params.p()[i], rate }))
        .collect();
    LimitLaw::from_components(components)
}

/// `r~_i = sum_j p_j w_ji / sum_l p_l w_jl`.
pub fn cwrt_rates(params: &CwrtParams) -> Vec<f64> {
    let k = params.num_types();
    let p = params.p();
    let w = params.omega();
    let norm: Vec<f64> = (0..k).map(|j| (0..k).map(|l| p[l] * w.get(j, l)).sum()).collect();
    (0..k).map(|i| (0..k).map(|j| p[j] * w.get(j, i) / norm[j]).sum()).collect()
}

pub fn limit_degree_cwrt(params: &CwrtParams) -> LimitLaw {
    let components = cwrt_rates(params)
        .into_iter()
        .zip(params.p())
        .filter(|(_, &p)| p > 0.0)
        .map(|(rate, &weight)| Component::Geometric { weight, rate })
        .collect();
    LimitLaw::from_components(components)
}

/// Per-type constants of the preferential attachment law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CmpaConstants {
    /// Probability that a newcomer's parent has this type.
    pub parent_prob: f64,
    pub nu: f64,
    pub alpha: f64,
}

pub fn cmpa_constants(params: &CmpaParams) -> Vec<CmpaConstants> {
    let base = params.base();
    let k = base.num_types();
    let p = base.p();
    let q = base.q();
    let a = params.alpha();
    (0..k)
        .map(|i| {
            let p_star = base.parent_type_probability(i);
            let nu_ji: Vec<f64> = (0..k)
                .map(|j| {
                    let denom = a.get(j, i) * p[i] + p_star;
                    if denom > 0.0 {
                        p[j] * q.get(j, i) / denom
                    } else {
                        0.0
                    }
                })
                .collect();
            let nu: f64 = nu_ji.iter().sum();
            let alpha = if nu > 0.0 {
                (0..k).map(|j| nu_ji[j] * a.get(j, i)).sum::<f64>() / nu
            } else {
                f64::NAN
            };
            CmpaConstants { parent_prob: p_star, nu, alpha }
        })
        .collect()
}

pub fn limit_degree_cmpa(params: &CmpaParams) -> LimitLaw {
    let p = params.base().p();
    let components = cmpa_constants(params)
        .into_iter()
        .zip(p)
        .filter(|(_, &w)| w > 0.0)
        .map(|(c, &weight)| {
            if c.parent_prob > 0.0 {
                Component::PowerLaw { weight, nu: c.nu, alpha: c.alpha }
            } else {
                Component::Atom { weight }
            }
        })
        .collect();
    LimitLaw::from_components(components)
}

/// Power-law exponent `-1 - 1/nu` with `nu` the largest growth constant
/// among present types. `None` if some present type is never a parent.
pub fn tail_exponent_cmpa(params: &CmpaParams) -> Option<f64> {
    let p = params.base().p();
    let mut nu_max: Option<f64> = None;
    for (c, &w) in cmpa_constants(params).iter().zip(p) {
        if w == 0.0 {
            continue;
        }
        if c.parent_prob <= 0.0 {
            return None;
        }
        nu_max = Some(nu_max.map_or(c.nu, |m| m.max(c.nu)));
    }
    nu_max.map(|nu| -1.0 - 1.0 / nu)
}
