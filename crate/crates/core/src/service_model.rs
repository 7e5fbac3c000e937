//! Mellin transforms `M(1 - s) = E[e^{-s S}]` of the per-superframe service
//! `S` (in bits) of the tagged user, and its mean.
//!
//! Three models are supported:
//!
//! * **Ideal**: perfect CSI, `S = n_d log2(1 + rho xi)` with `xi ~ Gamma(m, 1)`.
//!   The transform has the finite series
//!   `sum_l C(m-1, l) (-1)^l e^{1/rho} Gamma(m - l - s~, 1/rho) / (Gamma(m) rho^{l + s~})`
//!   with `s~ = s n_d / ln 2`. The series alternates; when the estimated
//!   cancellation error exceeds [`SERIES_MAX_REL_ERROR`] the integral
//!   `E[(1 + rho xi)^{-s~}]` is computed by quadrature instead.
//! * **Quantized policy**: `S = n_d r(mu) Z` with `Z ~ Bernoulli(1 - eps)`,
//!   averaged over a quantized law of the estimated SNR `mu`.
//! * **Mixed groups**: a probability mix of two models, for superframes whose
//!   slots carry two different user counts.

use crate::config::{ratio_to_f64, DerivedBudget, Prob};
use crate::numerics::{
    chi2_scaled_pdf, gamma_quantile, integrate_to_infinity, ln_gamma, ln_upper_incomplete_gamma,
    signed_log_sum,
};
use crate::rate_adaptation::RatePolicy;
use std::f64::consts::LN_2;
use thiserror::Error;

/// Largest tolerated estimated relative error of the closed-form series.
pub const SERIES_MAX_REL_ERROR: f64 = 1e-9;
/// Assumed relative accuracy of each series term.
const TERM_REL_ERROR: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("policy has {policy} cells but the grid has {grid}")]
    PolicyGridMismatch { policy: usize, grid: usize },
}

/// Law of the estimated SNR: `mu = scale * xi`, `xi ~ Gamma(shape, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuLaw {
    pub shape: f64,
    pub scale: f64,
}

impl MuLaw {
    /// With `shrink`, the estimate entries have variance `1 - sigma_e^2`
    /// and `mu` scales accordingly; without it the scale is `rho`.
    pub fn for_budget(budget: &DerivedBudget, shrink: bool) -> Self {
        let scale = if shrink {
            budget.p_per_user * (1.0 - budget.sigma_e_sq)
        } else {
            budget.p_per_user
        };
        MuLaw { shape: budget.m as f64, scale }
    }
}

/// Quantized SNR law. Cell `i` covers `[edges[i], edges[i+1])` and is
/// represented by `points[i]` with probability `probs[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MuGrid {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
    pub edges: Vec<f64>,
}

impl MuGrid {
    /// Equal-probability cells with midpoint representatives. The upper edge of
    /// the last cell is the `1 - tail` quantile.
    pub fn quantile(n: usize, law: MuLaw, tail: f64) -> Self {
        assert!(n >= 1, "grid needs at least one cell");
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(0.0);
        for i in 1..n {
            edges.push(law.scale * gamma_quantile(law.shape, i as f64 / n as f64));
        }
        edges.push(law.scale * gamma_quantile(law.shape, 1.0 - tail));
        let points = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        MuGrid { points, probs: vec![1.0 / n as f64; n], edges }
    }

    /// Grid with explicit points, probabilities and edges.
    pub fn from_parts(points: Vec<f64>, probs: Vec<f64>, edges: Vec<f64>) -> Self {
        assert_eq!(points.len(), probs.len());
        assert_eq!(points.len() + 1, edges.len());
        MuGrid { points, probs, edges }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Cell containing `mu`; values beyond the last edge map to the last cell.
    pub fn cell_of(&self, mu: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= mu)
    }

    pub fn mu_max(&self) -> f64 {
        *self.points.last().expect("non-empty grid")
    }
}

/// How the closed-form transform was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MellinMethod {
    Series,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealMellin {
    pub value: f64,
    pub method: MellinMethod,
    /// `sum |terms| / |sum|` of the series.
    pub amplification: f64,
}

/// Closed-form Mellin transform of the ideal service at `s > 0`.
pub fn mellin_ideal(budget: &DerivedBudget, s: f64) -> f64 {
    mellin_ideal_detailed(budget, s).value
}

/// As [`mellin_ideal`], reporting which evaluation path was taken.
pub fn mellin_ideal_detailed(budget: &DerivedBudget, s: f64) -> IdealMellin {
    assert!(s > 0.0, "Mellin argument must be positive");
    let s_t = s * budget.n_data as f64 / LN_2;
    ideal_transform(budget.m, budget.p_per_user, s_t)
}

/// `E[(1 + rho xi)^{-s_t}]`, `xi ~ Gamma(m, 1)`, by the finite series with a
/// quadrature fallback.
pub fn ideal_transform(m: u32, rho: f64, s_t: f64) -> IdealMellin {
    if let Some((value, amplification)) = ideal_series(m, rho, s_t) {
        if value > 0.0 && value <= 1.0 && amplification * TERM_REL_ERROR <= SERIES_MAX_REL_ERROR {
            return IdealMellin { value, method: MellinMethod::Series, amplification };
        }
    }
    let amplification = ideal_series(m, rho, s_t).map_or(f64::INFINITY, |r| r.1);
    IdealMellin { value: ideal_transform_quadrature(m, rho, s_t), method: MellinMethod::Quadrature, amplification }
}

/// Finite alternating series alone, with its amplification factor. `None`
/// when an incomplete gamma term cannot be evaluated.
pub fn ideal_series(m: u32, rho: f64, s_t: f64) -> Option<(f64, f64)> {
    let x = 1.0 / rho;
    let ln_rho = rho.ln();
    let lg_m = ln_gamma(m as f64);
    let mut terms = Vec::with_capacity(m as usize);
    let mut ln_binom = 0.0;
    for l in 0..m {
        if l > 0 {
            ln_binom += ((m - l) as f64).ln() - (l as f64).ln();
        }
        let lg = ln_upper_incomplete_gamma(m as f64 - l as f64 - s_t, x).ok()?;
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        terms.push((sign, ln_binom - lg_m - (l as f64 + s_t) * ln_rho + x + lg));
    }
    Some(signed_log_sum(&terms))
}

fn ideal_transform_quadrature(m: u32, rho: f64, s_t: f64) -> f64 {
    let lg_m = ln_gamma(m as f64);
    let mf = m as f64;
    let f = |xi: f64| {
        if xi <= 0.0 {
            return if m == 1 { 1.0 } else { 0.0 };
        }
        (-s_t * (rho * xi).ln_1p() + (mf - 1.0) * xi.ln() - xi - lg_m).exp()
    };
    let width = mf / (1.0 + s_t * rho);
    let interior = [width, 10.0 * width, mf];
    integrate_to_infinity(f, 0.0, width.max(1e-300), &interior, 1e-13, 1e-300)
        .map(|q| q.value)
        .unwrap_or_else(|e| match e {
            crate::numerics::NumericsError::QuadratureNotConverged { value, .. } => value,
            _ => f64::NAN,
        })
}

/// `E[log2(1 + rho xi)]` for `xi ~ Gamma(m, 1)`, by quadrature.
pub fn ideal_mean_rate(m: u32, rho: f64) -> f64 {
    let mf = m as f64;
    integrate_to_infinity(
        |xi| (rho * xi).ln_1p() / LN_2 * chi2_scaled_pdf(m, xi),
        0.0,
        mf,
        &[(mf - 1.0).max(0.5)],
        1e-12,
        0.0,
    )
    .expect("smooth integrand converges")
    .value
}

/// Quantized-policy transform `sum_i p_i [(1 - eps_i) e^{-s n r_i} + eps_i]`.
pub fn mellin_quantized(grid: &MuGrid, policy: &RatePolicy, budget: &DerivedBudget, s: f64) -> Result<f64, ServiceError> {
    if policy.rates.len() != grid.len() || policy.errors.len() != grid.len() {
        return Err(ServiceError::PolicyGridMismatch { policy: policy.rates.len(), grid: grid.len() });
    }
    Ok(quantized_sum(&grid.probs, &policy.rates, &policy.errors, budget.n_data, s))
}

fn quantized_sum(probs: &[f64], rates: &[f64], errors: &[f64], n_data: u32, s: f64) -> f64 {
    let sn = s * n_data as f64;
    probs
        .iter()
        .zip(rates)
        .zip(errors)
        .map(|((p, r), e)| p * ((1.0 - e) * (-sn * r).exp() + e))
        .sum()
}

/// Kind of service model, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    Ideal,
    QuantizedPolicy,
    MixedGroups,
}

/// Evaluator of the service Mellin transform.
#[derive(Debug, Clone)]
pub enum ServiceMellin {
    Ideal(DerivedBudget),
    QuantizedPolicy(RatePolicy),
    MixedGroups { p_a: Prob, a: Box<ServiceMellin>, b: Box<ServiceMellin> },
}

impl ServiceMellin {
    pub fn tag(&self) -> ModelTag {
        match self {
            ServiceMellin::Ideal(_) => ModelTag::Ideal,
            ServiceMellin::QuantizedPolicy(_) => ModelTag::QuantizedPolicy,
            ServiceMellin::MixedGroups { .. } => ModelTag::MixedGroups,
        }
    }

    /// `M(1 - s)` at `s > 0`.
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ServiceMellin::Ideal(b) => mellin_ideal(b, s),
            ServiceMellin::QuantizedPolicy(p) => quantized_sum(&p.grid.probs, &p.rates, &p.errors, p.n_data, s),
            ServiceMellin::MixedGroups { p_a, a, b } => mellin_mixed(*p_a, a.eval(s), b.eval(s)),
        }
    }

    /// Mean service of the tagged user per superframe, in bits.
    pub fn expected_bits(&self) -> f64 {
        match self {
            ServiceMellin::Ideal(b) => b.n_data as f64 * ideal_mean_rate(b.m, b.p_per_user),
            ServiceMellin::QuantizedPolicy(p) => {
                p.n_data as f64
                    * p.grid.probs.iter().zip(&p.rates).zip(&p.errors).map(|((q, r), e)| q * (1.0 - e) * r).sum::<f64>()
            }
            ServiceMellin::MixedGroups { p_a, a, b } => mellin_mixed(*p_a, a.expected_bits(), b.expected_bits()),
        }
    }
}

/// `p_a * a + (1 - p_a) * b`.
pub fn mellin_mixed(p_a: Prob, a: f64, b: f64) -> f64 {
    let pa = ratio_to_f64(p_a);
    if pa == 1.0 {
        return a;
    }
    pa * a + (1.0 - pa) * b
}

/// Expected service in bits per slot for a superframe of `t` slots.
pub fn expected_service(model: &ServiceMellin, t: u32) -> f64 {
    model.expected_bits() / t as f64
}
