//! Closed-form conditional outage and error probabilities given a channel
//! estimate.
//!
//! Conditioned on the estimate, the useful power `G` is modelled as Gaussian
//! with mean `mu` and variance `sigma^2`, and the interference `I` either as a
//! sum of `nu` independent exponentials of mean `lambda` (uncorrelated,
//! [`pout_lower`]) or as one exponential of mean `lambda_c = nu * lambda`
//! (fully correlated, [`pout_upper`]). Outage at rate `r` is the event
//! `G < gamma0 (1 + I)` with `gamma0 = 2^r - 1`, which splits into
//!
//! ```text
//! P(G < gamma0) + int_{gamma0}^inf P(I > g / gamma0 - 1) f_G(g) dg.
//! ```
//!
//! Completing the square in the second integral gives a shifted mean
//! `mu_t = mu - sigma^2 / (lambda gamma0)` and the prefactor exponent
//! `1/lambda - mu/(lambda gamma0) + sigma^2 / (2 (lambda gamma0)^2)`.
//!
//! Evaluation notes:
//! * The prefactor exponent and `ln Q` of the shifted argument are combined
//!   algebraically into `-(gamma0 - mu)^2 / (2 sigma^2) + ln(Q(z) e^{z^2/2})`
//!   whenever `z >= 0`, so nothing overflows as `r -> 0`.
//! * The inner binomial sum over `B_l` equals `int_x^inf (t - x)^m phi_sigma(t) dt`.
//!   It is evaluated through the three-term recurrence of those shifted
//!   moments (backward for `z >= 1`), which avoids the alternating-sign
//!   cancellation of the binomial form at low rates. [`b_integral`] keeps the
//!   binomial building block for reference and testing.
//! * The finite-blocklength variant replaces `sigma^2` by
//!   [`fbl_sigma`], which folds the channel dispersion into the Gaussian term.

use thiserror::Error;

use crate::config::DerivedBudget;
use crate::numerics::{gaussian_tail, log2e_sq, log_scaled_gaussian_tail, regularized_upper_gamma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("rate must be positive and finite, got {0}")]
    NonPositiveRate(f64),
}

/// Which closed form to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    /// Fully correlated interference: an upper bound on outage.
    UpperCorrelated,
    /// Upper bound with the finite-blocklength dispersion folded in.
    FblUpperCorrelated,
    /// Uncorrelated interference: a lower bound on outage. Only meaningful as
    /// a bound with infinite blocklength.
    LowerUncorrelated,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::UpperCorrelated => "upper",
            BoundKind::FblUpperCorrelated => "fbl_upper",
            BoundKind::LowerUncorrelated => "lower",
        }
    }
}

/// Sufficient statistics of one channel estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateStats {
    pub mu: f64,
    pub sigma_s_sq: f64,
    pub nu: u32,
    pub lambda_u: f64,
    pub lambda_c: f64,
    /// `None` stands for infinite blocklength.
    pub n_data: Option<u32>,
    pub sigma_cf_sq: f64,
}

impl EstimateStats {
    pub fn from_parts(mu: f64, rho: f64, sigma_e_sq: f64, k_sched: u32, n_data: Option<u32>) -> Self {
        assert!(k_sched >= 1, "at least one scheduled user");
        let nu = k_sched - 1;
        let lambda_u = rho * sigma_e_sq;
        let mut stats = EstimateStats {
            mu,
            sigma_s_sq: 2.0 * sigma_e_sq * rho * mu,
            nu,
            lambda_u,
            lambda_c: lambda_u * nu as f64,
            n_data,
            sigma_cf_sq: 0.0,
        };
        stats.sigma_cf_sq = fbl_sigma(&stats);
        stats
    }

    /// Statistics for SNR estimate `mu` under `budget`, with finite blocklength
    /// `budget.n_data` when `finite_blocklength` is set.
    pub fn new(mu: f64, budget: &DerivedBudget, finite_blocklength: bool) -> Self {
        let n = finite_blocklength.then_some(budget.n_data);
        Self::from_parts(mu, budget.p_per_user, budget.sigma_e_sq, budget.k_sched, n)
    }
}

/// Dispersion of Gaussian codebooks with nearest-neighbour decoding under
/// Gaussian noise plus interference, in bits squared.
pub fn dispersion_iid(snr: f64) -> f64 {
    2.0 * snr / (1.0 + snr) * log2e_sq()
}

/// AWGN channel dispersion in bits squared.
pub fn dispersion_awgn(snr: f64) -> f64 {
    (1.0 - (1.0 + snr).powi(-2)) * log2e_sq()
}

/// `B_l(x) = int_x^inf t^l phi_sigma(t) dt` for a zero-mean Gaussian with
/// variance `sigma_sq`, by the integration-by-parts recursion.
pub fn b_integral(l: u32, x: f64, sigma_sq: f64) -> f64 {
    assert!(sigma_sq > 0.0, "b_integral needs a positive variance");
    let sigma = sigma_sq.sqrt();
    let g = (sigma_sq / (2.0 * std::f64::consts::PI)).sqrt() * (-x * x / (2.0 * sigma_sq)).exp();
    let mut b_prev2 = gaussian_tail(x / sigma);
    if l == 0 {
        return b_prev2;
    }
    let mut b_prev1 = g;
    for k in 2..=l {
        let next = g * x.powi(k as i32 - 1) + (k as f64 - 1.0) * sigma_sq * b_prev2;
        b_prev2 = b_prev1;
        b_prev1 = next;
    }
    b_prev1
}

/// Effective Gaussian variance with the finite-blocklength dispersion folded in.
pub fn fbl_sigma(stats: &EstimateStats) -> f64 {
    match stats.n_data {
        None => stats.sigma_s_sq,
        Some(n) => {
            let denom = 1.0 + stats.lambda_c;
            let v = dispersion_iid(stats.mu / denom);
            stats.sigma_s_sq + (denom + stats.mu).powi(2) * v / (n as f64 * log2e_sq())
        }
    }
}

/// A clamped bound value together with the unclamped one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEval {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

impl BoundEval {
    fn from_raw(raw: f64) -> Self {
        let value = if raw.is_nan() { 1.0 } else { raw.clamp(0.0, 1.0) };
        BoundEval { value, raw, clamped: value != raw }
    }
}

/// Evaluates the bound selected by `kind`.
pub fn evaluate(kind: BoundKind, stats: &EstimateStats, rate: f64) -> Result<BoundEval, BoundError> {
    let gamma0 = snr_threshold(rate)?;
    let raw = match kind {
        BoundKind::UpperCorrelated => correlated(stats.mu, stats.sigma_s_sq, stats.lambda_c, stats.nu, gamma0),
        BoundKind::FblUpperCorrelated => {
            correlated(stats.mu, stats.sigma_cf_sq, stats.lambda_c, stats.nu, gamma0)
        }
        BoundKind::LowerUncorrelated => {
            gaussian_gamma(stats.mu, stats.sigma_s_sq, stats.lambda_u, stats.nu, gamma0)
        }
    };
    Ok(BoundEval::from_raw(raw))
}

/// Outage lower bound assuming mutually independent interferers.
pub fn pout_lower(stats: &EstimateStats, rate: f64) -> Result<f64, BoundError> {
    evaluate(BoundKind::LowerUncorrelated, stats, rate).map(|e| e.value)
}

/// Outage upper bound assuming fully correlated interferers.
pub fn pout_upper(stats: &EstimateStats, rate: f64) -> Result<f64, BoundError> {
    evaluate(BoundKind::UpperCorrelated, stats, rate).map(|e| e.value)
}

/// Error-probability upper bound including finite-blocklength effects.
pub fn fbl_error_upper(stats: &EstimateStats, rate: f64) -> Result<f64, BoundError> {
    evaluate(BoundKind::FblUpperCorrelated, stats, rate).map(|e| e.value)
}

/// Uncorrelated-interference form with the finite-blocklength variance. This
/// is not a bound on anything; it is exposed for exploration only.
pub fn fbl_error_uncorrelated_nonbound(stats: &EstimateStats, rate: f64) -> Result<f64, BoundError> {
    let gamma0 = snr_threshold(rate)?;
    Ok(BoundEval::from_raw(gaussian_gamma(stats.mu, stats.sigma_cf_sq, stats.lambda_u, stats.nu, gamma0)).value)
}

fn snr_threshold(rate: f64) -> Result<f64, BoundError> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(BoundError::NonPositiveRate(rate));
    }
    Ok((rate * std::f64::consts::LN_2).exp_m1())
}

fn correlated(mu: f64, sigma_sq: f64, lambda_c: f64, nu: u32, gamma0: f64) -> f64 {
    gaussian_gamma(mu, sigma_sq, lambda_c, nu.min(1), gamma0)
}

/// `P(G < gamma0 (1 + I))` with `G ~ N(mu, sigma_sq)` and `I` a sum of
/// `shape` independent exponentials of mean `lambda`.
fn gaussian_gamma(mu: f64, sigma_sq: f64, lambda: f64, shape: u32, gamma0: f64) -> f64 {
    let sigma = sigma_sq.sqrt();
    let direct = if sigma > 0.0 {
        gaussian_tail((mu - gamma0) / sigma)
    } else if mu < gamma0 {
        1.0
    } else if mu > gamma0 {
        0.0
    } else {
        0.5
    };
    if shape == 0 || lambda <= 0.0 {
        return direct;
    }
    if sigma == 0.0 {
        if mu <= gamma0 {
            return direct;
        }
        // Deterministic G: outage iff I exceeds mu/gamma0 - 1.
        let y = (mu / gamma0 - 1.0) / lambda;
        return regularized_upper_gamma(shape as f64, y);
    }

    let lg = lambda * gamma0;
    let c = sigma / lg;
    let z = (gamma0 - mu) / sigma + c;
    // ln of exp(A) * Q(z) with A the completed-square exponent.
    let (ln_front, ln_scaled_q) = if z >= 0.0 {
        let d = (gamma0 - mu) / sigma;
        (-0.5 * d * d, log_scaled_gaussian_tail(z))
    } else {
        let a = 1.0 / lambda - mu / lg + 0.5 * c * c;
        (a - 0.5 * z * z, log_scaled_gaussian_tail(z))
    };
    let ln_head = ln_front + ln_scaled_q;
    if shape == 1 {
        return direct + ln_head.exp();
    }
    // Inverse Mills ratio phi(z) / Q(z) = 1 / (sqrt(2 pi) Q(z) e^{z^2/2}).
    let h = (-(0.5 * std::f64::consts::TAU.ln()) - ln_scaled_q).exp();
    let moments = shifted_moment_ratios(z, h, shape as usize);
    let mut sum = 0.0;
    let mut cp = 1.0;
    for &mhat in &moments {
        sum += cp * mhat;
        cp *= c;
    }
    direct + (ln_head + sum.ln()).exp()
}

/// Ratios `I_m(z) / Q(z)` for `m = 0..count`, where
/// `I_m(z) = int_0^inf u^m / m! phi(u + z) du`. They obey
/// `(m + 1) I_{m+1} = I_{m-1} - z I_m` with `I_{-1} = phi(z)`; `h` is
/// `phi(z) / Q(z)`.
fn shifted_moment_ratios(z: f64, h: f64, count: usize) -> Vec<f64> {
    let mut out = vec![0.0; count];
    if count == 0 {
        return out;
    }
    out[0] = 1.0;
    if z < 1.0 {
        let mut prev = h;
        for m in 0..count - 1 {
            let next = (prev - z * out[m]) / (m as f64 + 1.0);
            prev = out[m];
            out[m + 1] = next;
        }
    } else {
        // Miller's backward recurrence. The sought solution is minimal, but
        // only by a factor of about exp(-2 z sqrt(m)), so the starting index
        // has to grow like 1/z^2 for convergence to machine precision.
        let start = count + ((3.0 + 22.0 / z).powi(2)).ceil() as usize;
        let mut y = vec![0.0; start + 2];
        y[start] = 1.0;
        for m in (1..=start).rev() {
            y[m - 1] = (m as f64 + 1.0) * y[m + 1] + z * y[m];
            if y[m - 1] > 1e250 {
                for v in y.iter_mut().skip(m - 1) {
                    *v *= 1e-250;
                }
            }
        }
        for (o, v) in out.iter_mut().zip(&y) {
            *o = v / y[0];
        }
    }
    out
}
