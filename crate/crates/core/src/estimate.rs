//! Recovering `(p, q)` of the two-type model from the leaf fraction and the
//! fraction of vertices with exactly one child.
//!
//! With `theta_A = 1/(1 + r*_A)` and `theta_B = 1/(1 + r*_B)` the limiting
//! moments satisfy
//!
//! ```text
//! m1 = p theta_A + (1-p) theta_B
//! m2 = p theta_A^2 + (1-p) theta_B^2
//! p / theta_A + (1-p) / theta_B = 2
//! ```
//!
//! so `theta_A, theta_B` are the roots of
//! `x^2 - (2 m2 - m1)/(2 m1 - 1) x + (m2 - m1^2)/(2 m1 - 1)`.
//! The solution is unique only up to swapping the two types; we report the
//! branch with `p >= 1/2`.

use serde::{Deserialize, Serialize};

use crate::params::TwoTypeParams;
use crate::stats::DegreeHistogram;
use crate::theory::rate_star;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationStatus {
    Ok,
    NotIdentifiable,
    InfeasibleMoments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub status: EstimationStatus,
    pub m1: f64,
    pub m2: f64,
    pub p_hat: Option<f64>,
    /// From `theta_A`.
    pub q_hat: Option<f64>,
    /// The same quantity computed from `theta_B`; should agree with `q_hat`.
    pub q_hat_alt: Option<f64>,
    pub theta_a: Option<f64>,
    pub theta_b: Option<f64>,
    pub note: String,
}

impl EstimationResult {
    fn failed(status: EstimationStatus, m1: f64, m2: f64, note: impl Into<String>) -> Self {
        Self {
            status,
            m1,
            m2,
            p_hat: None,
            q_hat: None,
            q_hat_alt: None,
            theta_a: None,
            theta_b: None,
            note: note.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == EstimationStatus::Ok
    }
}

/// Limiting `(m1, m2)` for the given parameters.
pub fn forward_moments(params: &TwoTypeParams) -> (f64, f64) {
    let rates = rate_star(params);
    let p = params.p();
    let theta_a = 1.0 / (1.0 + rates.r_a);
    let (m1, m2) = (p * theta_a, p * theta_a * theta_a);
    match rates.r_b {
        Some(r_b) => {
            let theta_b = 1.0 / (1.0 + r_b);
            (m1 + (1.0 - p) * theta_b, m2 + (1.0 - p) * theta_b * theta_b)
        }
        None => (m1, m2),
    }
}

/// Default half-width of the `m1 = 1/2` wall for a tree with `n` vertices.
pub fn identifiability_tolerance(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 3.0)
}

/// Estimates from a degree histogram using the `n^(-1/3)` wall.
pub fn estimate_pq(hist: &DegreeHistogram) -> EstimationResult {
    estimate_from_moments(hist.m1(), hist.m2(), identifiability_tolerance(hist.n))
}

/// Solves the moment equations. `wall` is the half-width of the band around
/// `m1 = 1/2` in which `2 m1 - 1` is treated as zero.
pub fn estimate_from_moments(m1: f64, m2: f64, wall: f64) -> EstimationResult {
    use EstimationStatus::*;
    let denom = 2.0 * m1 - 1.0;
    if denom.abs() < wall {
        return EstimationResult::failed(
            NotIdentifiable,
            m1,
            m2,
            "leaf fraction indistinguishable from 1/2: p = 1/2 or q = 1 look like a uniform tree",
        );
    }
    if denom < 0.0 {
        return EstimationResult::failed(InfeasibleMoments, m1, m2, "2 m1 - 1 < 0");
    }
    let product = (m2 - m1 * m1) / denom;
    let sum = (2.0 * m2 - m1) / denom;
    if m2 - m1 * m1 < 0.0 {
        return EstimationResult::failed(InfeasibleMoments, m1, m2, "m2 - m1^2 < 0");
    }
    if 2.0 * m2 - m1 < 0.0 {
        return EstimationResult::failed(InfeasibleMoments, m1, m2, "2 m2 - m1 < 0");
    }
    let disc = sum * sum - 4.0 * product;
    if disc < 0.0 {
        return EstimationResult::failed(InfeasibleMoments, m1, m2, "negative discriminant");
    }
    if disc == 0.0 {
        return EstimationResult::failed(NotIdentifiable, m1, m2, "double root: theta_A = theta_B");
    }
    let root = disc.sqrt();
    // Numerically stable pair of roots.
    let big = 0.5 * (sum + root.copysign(sum));
    let (x1, x2) = if big != 0.0 { (big, product / big) } else { (0.0, sum) };
    let (mut theta_a, mut theta_b) = (x1.max(x2), x1.min(x2));
    let mut p_hat = (m1 - theta_b) / (theta_a - theta_b);
    if p_hat < 0.5 {
        std::mem::swap(&mut theta_a, &mut theta_b);
        p_hat = 1.0 - p_hat;
    }
    let in_unit = |x: f64| x > 0.0 && x < 1.0;
    if !in_unit(theta_a) || !in_unit(theta_b) || !(0.0..=1.0).contains(&p_hat) {
        return EstimationResult::failed(
            InfeasibleMoments,
            m1,
            m2,
            format!("roots ({theta_a:.6}, {theta_b:.6}) or p = {p_hat:.6} outside the feasible range"),
        );
    }
    let q_from_a = (p_hat - theta_a) / ((2.0 * p_hat - 1.0) * theta_a);
    let q_from_b = (1.0 - p_hat - theta_b) / ((1.0 - 2.0 * p_hat) * theta_b);
    EstimationResult {
        status: Ok,
        m1,
        m2,
        p_hat: Some(p_hat),
        q_hat: Some(q_from_a),
        q_hat_alt: Some(q_from_b),
        theta_a: Some(theta_a),
        theta_b: Some(theta_b),
        note: "reported on the p >= 1/2 branch; (p, theta_A) <-> (1 - p, theta_B) is equally valid"
            .to_string(),
    }
}
