//! Monte-Carlo model of the physical layer.
//!
//! The true channel of every scheduled user is `h = h_hat + e`, with the MMSE
//! estimate `h_hat` and the independent error `e ~ CN(0, sigma_e^2 I)`.
//! Estimate entries therefore have variance `1 - sigma_e^2`. Beamformers are
//! the normalised columns of the pseudo-inverse of `H_hat^H`, computed from an
//! SVD. User 1 is the tagged user throughout.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::DerivedBudget;
use crate::numerics::gaussian_tail;
use crate::outage_bounds::dispersion_iid;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Condition number above which an estimate is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Default attempt budget for [`conditioned_estimate`].
pub const DEFAULT_REJECTION_BUDGET: u64 = 10_000_000;
/// Largest supported antenna count.
pub const MAX_ANTENNAS: usize = 64;
const MAX_SINGULAR_RESAMPLES: u32 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("channel estimate stayed numerically singular after {0} resamples")]
    SingularEstimate(u32),
    #[error("no estimate fell in the capacity window after {attempts} attempts")]
    RejectionBudgetExhausted { attempts: u64 },
    #[error("at least one draw is required")]
    NoDraws,
}

#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// `N_t x K` estimated channel, column `k` belongs to user `k`.
    pub h_hat: DMatrix<Complex64>,
    /// `N_t x K` unit-norm zero-forcing beamformers.
    pub beamformers: DMatrix<Complex64>,
    /// Estimated SNR of user 1, `rho |h_hat_1^H v_1|^2`.
    pub mu: f64,
    /// Number of singular draws discarded before this one.
    pub singular_resamples: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinrSample {
    pub sinr: f64,
    pub sig_power: f64,
    pub interference: f64,
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let sd = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// `a^H b` for two column slices.
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Draws an estimate and its zero-forcing beamformers.
pub fn sample_estimate<R: Rng + ?Sized>(
    budget: &DerivedBudget,
    n_antennas: u32,
    rng: &mut R,
) -> Result<ChannelEstimate, PhyError> {
    let nt = n_antennas as usize;
    let k = budget.k_sched as usize;
    assert!(k >= 1 && k <= nt, "scheduled users must fit the antennas");
    assert!(nt <= MAX_ANTENNAS, "at most {MAX_ANTENNAS} antennas are supported");
    let var = 1.0 - budget.sigma_e_sq;
    for attempt in 0..MAX_SINGULAR_RESAMPLES {
        let h_hat = DMatrix::from_fn(nt, k, |_, _| complex_normal(rng, var));
        let svd = h_hat.clone().svd(true, true);
        let sv = &svd.singular_values;
        let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
        if !(smin > 0.0 && smax / smin <= MAX_CONDITION) {
            continue;
        }
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        // pinv(H^H) = U diag(1/s) W^H with H = U diag(s) W^H.
        let mut scaled_u = u;
        for (j, mut col) in scaled_u.column_iter_mut().enumerate() {
            col /= Complex64::new(sv[j], 0.0);
        }
        let mut v = scaled_u * v_t;
        for mut col in v.column_iter_mut() {
            let norm = col.norm();
            col /= Complex64::new(norm, 0.0);
        }
        let g = inner(h_hat.column(0).as_slice(), v.column(0).as_slice());
        let mu = budget.p_per_user * g.norm_sqr();
        return Ok(ChannelEstimate { h_hat, beamformers: v, mu, singular_resamples: attempt });
    }
    Err(PhyError::SingularEstimate(MAX_SINGULAR_RESAMPLES))
}

/// Draws a fresh estimation error for user 1 and returns the resulting SINR.
pub fn sample_sinr<R: Rng + ?Sized>(est: &ChannelEstimate, budget: &DerivedBudget, rng: &mut R) -> SinrSample {
    let nt = est.h_hat.nrows();
    let k = est.h_hat.ncols();
    let rho = budget.p_per_user;
    if budget.sigma_e_sq == 0.0 {
        return SinrSample { sinr: est.mu, sig_power: est.mu, interference: 0.0 };
    }
    let mut buf = [Complex64::new(0.0, 0.0); MAX_ANTENNAS];
    let e = &mut buf[..nt];
    for x in e.iter_mut() {
        *x = complex_normal(rng, budget.sigma_e_sq);
    }
    let h1 = est.h_hat.column(0);
    let v1 = est.beamformers.column(0);
    let mut useful = Complex64::new(0.0, 0.0);
    for i in 0..nt {
        useful += (h1[i] + e[i]).conj() * v1[i];
    }
    let sig_power = rho * useful.norm_sqr();
    let mut interference = 0.0;
    for j in 1..k {
        interference += rho * inner(e, est.beamformers.column(j).as_slice()).norm_sqr();
    }
    SinrSample { sinr: sig_power / (1.0 + interference), sig_power, interference }
}

/// Rejection-samples estimates until `log2(1 + mu)` lies in
/// `[target - tol, target + tol]`. A non-positive `tol` describes a null
/// event and fails immediately.
pub fn conditioned_estimate<R: Rng + ?Sized>(
    budget: &DerivedBudget,
    n_antennas: u32,
    target_cap_bits: f64,
    tol_bits: f64,
    max_attempts: u64,
    rng: &mut R,
) -> Result<ChannelEstimate, PhyError> {
    if !(tol_bits > 0.0) {
        return Err(PhyError::RejectionBudgetExhausted { attempts: 0 });
    }
    for _ in 0..max_attempts {
        let est = sample_estimate(budget, n_antennas, rng)?;
        let cap = est.mu.ln_1p() / std::f64::consts::LN_2;
        if (cap - target_cap_bits).abs() <= tol_bits {
            return Ok(est);
        }
    }
    Err(PhyError::RejectionBudgetExhausted { attempts: max_attempts })
}

/// Fraction of SINR draws whose capacity falls below `rate`.
pub fn empirical_outage<R: Rng + ?Sized>(
    est: &ChannelEstimate,
    budget: &DerivedBudget,
    rate: f64,
    n_draws: u64,
    rng: &mut R,
) -> Result<f64, PhyError> {
    if n_draws == 0 {
        return Err(PhyError::NoDraws);
    }
    let mut hits = 0u64;
    for _ in 0..n_draws {
        if capacity(sample_sinr(est, budget, rng).sinr) < rate {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_draws as f64)
}

/// Average of the normal-approximation error probability over SINR draws.
pub fn empirical_fbl_error<R: Rng + ?Sized>(
    est: &ChannelEstimate,
    budget: &DerivedBudget,
    rate: f64,
    n_draws: u64,
    rng: &mut R,
) -> Result<f64, PhyError> {
    if n_draws == 0 {
        return Err(PhyError::NoDraws);
    }
    let mut acc = 0.0;
    for _ in 0..n_draws {
        acc += fbl_error_given_sinr(sample_sinr(est, budget, rng).sinr, rate, budget.n_data);
    }
    Ok(acc / n_draws as f64)
}

/// `log2(1 + sinr)`.
pub fn capacity(sinr: f64) -> f64 {
    sinr.ln_1p() / std::f64::consts::LN_2
}

/// Normal-approximation decoding error at `rate` for a known SINR.
pub fn fbl_error_given_sinr(sinr: f64, rate: f64, n_data: u32) -> f64 {
    let v = dispersion_iid(sinr);
    if v == 0.0 {
        return if rate > 0.0 { 1.0 } else { 0.0 };
    }
    gaussian_tail((capacity(sinr) - rate) / (v / n_data as f64).sqrt())
}

/// RNG for estimate `index` of a study seeded with `seed`. Each estimate owns
/// a separate ChaCha stream, so results do not depend on scheduling.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Settings of a conditioned outage study.
#[derive(Debug, Clone)]
pub struct OutageStudy {
    pub budget: DerivedBudget,
    pub n_antennas: u32,
    pub target_cap_bits: f64,
    pub tol_bits: f64,
    pub n_estimates: u32,
    pub n_draws: u64,
    pub rates: Vec<f64>,
    /// Also average the finite-blocklength error (costs one `erfc` per draw and rate).
    pub with_fbl: bool,
    pub max_attempts: u64,
    pub seed: u64,
}

/// Per-estimate outcome of a study.
#[derive(Debug, Clone)]
pub struct EstimateOutcome {
    pub mu: f64,
    pub outage: Vec<f64>,
    pub fbl: Option<Vec<f64>>,
}

/// Aggregated study result; `stderr` is the standard error across estimates.
#[derive(Debug, Clone)]
pub struct OutageCurve {
    pub rates: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fbl_mean: Option<Vec<f64>>,
    pub fbl_stderr: Option<Vec<f64>>,
    pub per_estimate: Vec<EstimateOutcome>,
}

fn run_estimate(study: &OutageStudy, index: u64) -> Result<EstimateOutcome, PhyError> {
    let mut rng = stream_rng(study.seed, index);
    let est = conditioned_estimate(
        &study.budget,
        study.n_antennas,
        study.target_cap_bits,
        study.tol_bits,
        study.max_attempts,
        &mut rng,
    )?;
    let mut caps = Vec::with_capacity(study.n_draws as usize);
    let mut sinrs = Vec::new();
    for _ in 0..study.n_draws {
        let s = sample_sinr(&est, &study.budget, &mut rng).sinr;
        caps.push(capacity(s));
        if study.with_fbl {
            sinrs.push(s);
        }
    }
    caps.sort_by(f64::total_cmp);
    let n = caps.len() as f64;
    let outage = study.rates.iter().map(|&r| caps.partition_point(|&c| c < r) as f64 / n).collect();
    let fbl = study.with_fbl.then(|| {
        study
            .rates
            .iter()
            .map(|&r| sinrs.iter().map(|&s| fbl_error_given_sinr(s, r, study.budget.n_data)).sum::<f64>() / n)
            .collect()
    });
    Ok(EstimateOutcome { mu: est.mu, outage, fbl })
}

fn mean_and_stderr(rows: &[&Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; len];
    let mut se = vec![0.0; len];
    for j in 0..len {
        let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = if rows.len() > 1 {
            rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean[j] = m;
        se[j] = (var / n).sqrt();
    }
    (mean, se)
}

/// Runs the conditioned-estimate outage study. Estimates run in parallel
/// when the `parallel` feature is on; results are identical either way.
pub fn outage_curve(study: &OutageStudy) -> Result<OutageCurve, PhyError> {
    if study.n_draws == 0 || study.n_estimates == 0 {
        return Err(PhyError::NoDraws);
    }
    let idx: Vec<u64> = (0..study.n_estimates as u64).collect();
    #[cfg(feature = "parallel")]
    let per: Result<Vec<_>, _> = idx.par_iter().map(|&i| run_estimate(study, i)).collect();
    #[cfg(not(feature = "parallel"))]
    let per: Result<Vec<_>, _> = idx.iter().map(|&i| run_estimate(study, i)).collect();
    let per = per?;
    let rows: Vec<&Vec<f64>> = per.iter().map(|o| &o.outage).collect();
    let (mean, stderr) = mean_and_stderr(&rows, study.rates.len());
    let (fbl_mean, fbl_stderr) = if study.with_fbl {
        let rows: Vec<&Vec<f64>> = per.iter().map(|o| o.fbl.as_ref().expect("fbl requested")).collect();
        let (m, s) = mean_and_stderr(&rows, study.rates.len());
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Ok(OutageCurve { rates: study.rates.clone(), mean, stderr, fbl_mean, fbl_stderr, per_estimate: per })
}
