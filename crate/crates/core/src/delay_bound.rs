//! Delay-violation bounds from the service Mellin transform.
//!
//! With constant arrivals of `alpha` bits per slot and `M(s)` the service
//! transform `E[e^{-s S}]` of one superframe, the kernel for `f` superframes is
//! `M^f / (1 - e^{alpha T s} M)`, finite only while `e^{alpha T s} M < 1`. All
//! arithmetic is done on logarithms so that bounds far below `1e-300` still
//! order correctly during the search over `s`.

use crate::config::{derive_budget, ratio_to_f64, superframe_partition, DeadlineSplit, GroupSplit, Prob, SystemParams};
use crate::config::deadline_partition;
use crate::outage_bounds::BoundKind;
use crate::rate_adaptation::{uniform_rate_grid, ErrorTable, RatePolicy};
use crate::service_model::{ideal_mean_rate, mellin_ideal, MuGrid, MuLaw};
use num_rational::Ratio;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayError {
    #[error("no superframe length gives a feasible schedule")]
    NoFeasibleSchedule,
}

/// Kernel value or the divergence marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Natural logarithm of the kernel.
    Ln(f64),
    Divergent,
}

impl Kernel {
    pub fn value(self) -> Option<f64> {
        match self {
            Kernel::Ln(l) => Some(l.exp()),
            Kernel::Divergent => None,
        }
    }

    pub fn ln(self) -> Option<f64> {
        match self {
            Kernel::Ln(l) => Some(l),
            Kernel::Divergent => None,
        }
    }
}

/// Kernel from a precomputed transform value `m = M(s)`.
pub fn kernel_from_mellin(m: f64, alpha: f64, t: u32, frames: u32, s: f64) -> Kernel {
    assert!(s > 0.0, "s must be positive");
    if !(m > 0.0) {
        // Service beats any arrival with certainty: the kernel is zero.
        return Kernel::Ln(f64::NEG_INFINITY);
    }
    let ln_m = m.ln();
    let q = alpha * t as f64 * s + ln_m;
    if q >= 0.0 {
        return Kernel::Divergent;
    }
    Kernel::Ln(frames as f64 * ln_m - (-q.exp_m1()).ln())
}

pub fn kernel<F: Fn(f64) -> f64>(mellin: F, alpha: f64, t: u32, frames: u32, s: f64) -> Kernel {
    kernel_from_mellin(mellin(s), alpha, t, frames, s)
}

/// Probability-weighted kernel mix over the two deadline groups.
pub fn pv_bound_from_mellin(m: f64, alpha: f64, split: &DeadlineSplit, t: u32, s: f64) -> Kernel {
    let terms = [
        (ratio_to_f64(split.p_group1), split.n_frames_hi),
        (ratio_to_f64(split.p_group2), split.n_frames_lo),
    ];
    let mut acc: Option<f64> = None;
    for (p, frames) in terms {
        if p == 0.0 {
            continue;
        }
        match kernel_from_mellin(m, alpha, t, frames, s) {
            Kernel::Divergent => return Kernel::Divergent,
            Kernel::Ln(l) => {
                let term = p.ln() + l;
                acc = Some(match acc {
                    None => term,
                    Some(a) => log_add(a, term),
                });
            }
        }
    }
    Kernel::Ln(acc.unwrap_or(f64::NEG_INFINITY))
}

pub fn pv_bound<F: Fn(f64) -> f64>(mellin: F, alpha: f64, split: &DeadlineSplit, t: u32, s: f64) -> Kernel {
    pv_bound_from_mellin(mellin(s), alpha, split, t, s)
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Geometric grid over `[s_min, s_max]` followed by golden-section refinement
/// in `ln s`. When the best grid point is the smallest one, the search steps
/// down by decades up to `extra_decades` times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SSearch {
    pub s_min: f64,
    pub s_max: f64,
    pub grid_points: usize,
    pub refine_iters: usize,
    pub extra_decades: u32,
}

impl Default for SSearch {
    fn default() -> Self {
        SSearch { s_min: 1e-4, s_max: 1.0, grid_points: 31, refine_iters: 50, extra_decades: 4 }
    }
}

impl SSearch {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(2);
        let (a, b) = (self.s_min.ln(), self.s_max.ln());
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
    }

    /// Minimises `f` (returning `None` where undefined) and reports the
    /// minimiser and value.
    pub fn minimize<F: FnMut(f64) -> Option<f64>>(&self, mut f: F) -> Option<(f64, f64)> {
        let grid = self.grid();
        let vals: Vec<f64> = grid.iter().map(|&s| f(s).unwrap_or(f64::INFINITY)).collect();
        let (mut lo, mut hi, mut best) = self.bracket(&grid, &vals);
        if best.0 == grid[0] || best.1 == f64::INFINITY {
            let mut s = grid[0];
            for _ in 0..self.extra_decades {
                let next = s / 10.0;
                let v = f(next).unwrap_or(f64::INFINITY);
                if v < best.1 {
                    best = (next, v);
                    lo = next / 10.0;
                    hi = s;
                } else if best.1 < f64::INFINITY {
                    break;
                }
                s = next;
            }
        }
        if best.1 == f64::INFINITY {
            return None;
        }
        let refined = golden(&mut f, lo.ln(), hi.ln(), self.refine_iters);
        Some(if refined.1 < best.1 { refined } else { best })
    }

    fn bracket(&self, grid: &[f64], vals: &[f64]) -> (f64, f64, (f64, f64)) {
        let mut k = 0;
        for i in 1..vals.len() {
            if vals[i] < vals[k] {
                k = i;
            }
        }
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];
        (lo, hi, (grid[k], vals[k]))
    }
}

fn golden<F: FnMut(f64) -> Option<f64>>(f: &mut F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut eval = |x: f64| f(x.exp()).unwrap_or(f64::INFINITY);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = eval(d);
        }
    }
    if fc <= fd {
        (c.exp(), fc)
    } else {
        (d.exp(), fd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayBoundResult {
    pub pv_bound: f64,
    /// Natural log of the unclamped bound (`0` when unstable).
    pub ln_pv: f64,
    pub s_star: f64,
    pub stable: bool,
    /// `(kernel value, superframes)` per deadline group at `s_star`.
    pub kernel_terms: Vec<(f64, u32)>,
    pub k_avg_used: Prob,
}

impl DelayBoundResult {
    fn unstable(k_avg: Prob) -> Self {
        DelayBoundResult { pv_bound: 1.0, ln_pv: 0.0, s_star: 0.0, stable: false, kernel_terms: vec![], k_avg_used: k_avg }
    }
}

/// Infimum of the bound over `s`.
pub fn optimize_s<F: Fn(f64) -> f64>(
    mellin: F,
    alpha: f64,
    split: &DeadlineSplit,
    t: u32,
    k_avg: Prob,
    search: &SSearch,
) -> DelayBoundResult {
    let found = search.minimize(|s| pv_bound(&mellin, alpha, split, t, s).ln());
    match found {
        None => DelayBoundResult::unstable(k_avg),
        Some((s, ln_pv)) => {
            let m = mellin(s);
            let terms = [split.n_frames_hi, split.n_frames_lo]
                .into_iter()
                .map(|f| (kernel_from_mellin(m, alpha, t, f, s).value().unwrap_or(f64::INFINITY), f))
                .collect();
            DelayBoundResult {
                pv_bound: ln_pv.exp().min(1.0),
                ln_pv,
                s_star: s,
                stable: true,
                kernel_terms: terms,
                k_avg_used: k_avg,
            }
        }
    }
}

/// Source of per-slot service transforms for a given number of co-scheduled
/// users. Returns `None` for infeasible user counts.
pub trait ServicePlanner: Sync {
    /// `E[e^{-s S}]` for the tagged user in one slot with `k` users.
    fn mellin(&self, k: u32, s: f64) -> Option<f64>;
    /// Mean bits delivered to the tagged user in one slot with `k` users.
    fn expected_bits(&self, k: u32) -> Option<f64>;
}

/// Perfect CSI with capacity-achieving rates.
#[derive(Debug, Clone)]
pub struct IdealPlanner {
    pub params: SystemParams,
}

impl ServicePlanner for IdealPlanner {
    fn mellin(&self, k: u32, s: f64) -> Option<f64> {
        derive_budget(&self.params, k).ok().map(|b| mellin_ideal(&b, s))
    }

    fn expected_bits(&self, k: u32) -> Option<f64> {
        derive_budget(&self.params, k).ok().map(|b| b.n_data as f64 * ideal_mean_rate(b.m, b.p_per_user))
    }
}

/// Grid sizes and bound choice for estimated-CSI rate adaptation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyGridConfig {
    pub n_mu: usize,
    pub n_rates: usize,
    /// Use the `rho (1 - sigma_e^2)` scale for the estimated SNR law.
    pub shrink: bool,
    /// Upper tail mass beyond the last grid edge.
    pub tail: f64,
    pub bound: BoundKind,
}

impl Default for PolicyGridConfig {
    fn default() -> Self {
        PolicyGridConfig { n_mu: 512, n_rates: 400, shrink: true, tail: 1e-9, bound: BoundKind::UpperCorrelated }
    }
}

/// Estimated CSI: every slot uses the per-`s` optimal rate policy. Error
/// tables are built once per user count and cached.
pub struct PolicyPlanner {
    pub params: SystemParams,
    pub grid: PolicyGridConfig,
    tables: Vec<OnceLock<Option<ErrorTable>>>,
}

impl PolicyPlanner {
    pub fn new(params: SystemParams, grid: PolicyGridConfig) -> Self {
        let tables = (0..=params.n_antennas).map(|_| OnceLock::new()).collect();
        PolicyPlanner { params, grid, tables }
    }

    pub fn table(&self, k: u32) -> Option<&ErrorTable> {
        self.tables.get(k as usize)?
            .get_or_init(|| {
                let budget = derive_budget(&self.params, k).ok()?;
                let law = MuLaw::for_budget(&budget, self.grid.shrink);
                let mu = MuGrid::quantile(self.grid.n_mu, law, self.grid.tail);
                let rates = uniform_rate_grid(mu.mu_max(), self.grid.n_rates);
                Some(ErrorTable::build(&mu, &budget, &rates, self.grid.bound))
            })
            .as_ref()
    }

    /// Rate policy that maximises mean goodput for `k` users.
    pub fn throughput_policy(&self, k: u32) -> Option<RatePolicy> {
        self.table(k).map(|t| t.max_throughput_policy())
    }

    /// Rate policy optimal at `s` for `k` users.
    pub fn policy_at(&self, k: u32, s: f64) -> Option<RatePolicy> {
        self.table(k).map(|t| t.policy_for_s(s))
    }
}

impl ServicePlanner for PolicyPlanner {
    fn mellin(&self, k: u32, s: f64) -> Option<f64> {
        self.table(k).map(|t| t.min_mellin(s))
    }

    fn expected_bits(&self, k: u32) -> Option<f64> {
        let p = self.throughput_policy(k)?;
        Some(p.n_data as f64 * p.throughput())
    }
}

/// One feasible superframe length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleCandidate {
    pub t: u32,
    pub split: GroupSplit,
    pub deadline: DeadlineSplit,
    pub k_avg: Prob,
}

impl ScheduleCandidate {
    /// Superframe service transform as a mix over the two slot groups.
    pub fn mellin<P: ServicePlanner + ?Sized>(&self, planner: &P, s: f64) -> Option<f64> {
        let ma = planner.mellin(self.split.k_a, s)?;
        if self.split.is_degenerate() {
            return Some(ma);
        }
        let mb = planner.mellin(self.split.k_b, s)?;
        let pa = ratio_to_f64(self.split.p_a);
        Some(pa * ma + (1.0 - pa) * mb)
    }

    /// Mean service in bits per slot.
    pub fn expected_service<P: ServicePlanner + ?Sized>(&self, planner: &P) -> Option<f64> {
        let ea = planner.expected_bits(self.split.k_a)?;
        let per_frame = if self.split.is_degenerate() {
            ea
        } else {
            let pa = ratio_to_f64(self.split.p_a);
            pa * ea + (1.0 - pa) * planner.expected_bits(self.split.k_b)?
        };
        Some(per_frame / self.t as f64)
    }
}

/// Feasible superframe lengths `T <= min(w, K_tot)`, ordered by increasing
/// `K_tot / T`.
pub fn schedule_candidates<P: ServicePlanner + ?Sized>(params: &SystemParams, planner: &P) -> Vec<ScheduleCandidate> {
    let t_max = params.deadline.min(params.n_users_total);
    let mut out = Vec::new();
    for t in (1..=t_max).rev() {
        let p = SystemParams { superframe_len: t, ..params.clone() };
        let Ok(split) = superframe_partition(&p) else { continue };
        let Ok(deadline) = deadline_partition(params.deadline, t) else { continue };
        let probe = 1e-3;
        if planner.mellin(split.k_a, probe).is_none() || (!split.is_degenerate() && planner.mellin(split.k_b, probe).is_none()) {
            continue;
        }
        out.push(ScheduleCandidate { t, split, deadline, k_avg: p.k_avg() });
    }
    out
}

/// Superframe length maximising mean service per slot; ties keep smaller `K_avg`.
pub fn best_expected_service<P: ServicePlanner + ?Sized>(
    params: &SystemParams,
    planner: &P,
) -> Result<(ScheduleCandidate, f64), DelayError> {
    let mut best: Option<(ScheduleCandidate, f64)> = None;
    for c in schedule_candidates(params, planner) {
        if let Some(e) = c.expected_service(planner) {
            if best.as_ref().is_none_or(|b| e > b.1) {
                best = Some((c, e));
            }
        }
    }
    best.ok_or(DelayError::NoFeasibleSchedule)
}

/// Bound for one schedule candidate at arrival rate `alpha`.
pub fn bound_for_candidate<P: ServicePlanner + ?Sized>(
    c: &ScheduleCandidate,
    planner: &P,
    alpha: f64,
    search: &SSearch,
) -> DelayBoundResult {
    optimize_s(|s| c.mellin(planner, s).unwrap_or(1.0), alpha, &c.deadline, c.t, c.k_avg, search)
}

/// Number of candidates refined after the grid stage.
const REFINE_TOP: usize = 3;

/// Minimises the bound jointly over the superframe length and `s`. Ties go to
/// the smaller `K_avg`.
pub fn optimize_schedule<P: ServicePlanner + ?Sized>(
    params: &SystemParams,
    planner: &P,
    search: &SSearch,
) -> Result<(Prob, DelayBoundResult), DelayError> {
    let cands = schedule_candidates(params, planner);
    if cands.is_empty() {
        return Err(DelayError::NoFeasibleSchedule);
    }
    let alpha = params.arrival_rate;
    let grid = search.grid();
    // Many candidates share the same per-frame user counts, so the per-K
    // transforms on the screening grid are computed once.
    let mut per_k: std::collections::HashMap<u32, Vec<Option<f64>>> = std::collections::HashMap::new();
    for c in &cands {
        for k in [c.split.k_a, c.split.k_b] {
            per_k.entry(k).or_insert_with(|| grid.iter().map(|&s| planner.mellin(k, s)).collect());
        }
    }
    let mut screened: Vec<(usize, f64)> = cands
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (ma, mb) = (&per_k[&c.split.k_a], &per_k[&c.split.k_b]);
            let pa = ratio_to_f64(c.split.p_a);
            let v = grid
                .iter()
                .enumerate()
                .filter_map(|(j, &s)| {
                    let m = if c.split.is_degenerate() { ma[j]? } else { pa * ma[j]? + (1.0 - pa) * mb[j]? };
                    pv_bound_from_mellin(m, alpha, &c.deadline, c.t, s).ln()
                })
                .fold(f64::INFINITY, f64::min);
            (i, v)
        })
        .collect();
    // Stable sort keeps the smaller K_avg first among equal values.
    screened.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut best: Option<(usize, DelayBoundResult)> = None;
    let n_refine = if screened[0].1 == f64::INFINITY { screened.len() } else { REFINE_TOP.min(screened.len()) };
    for &(i, _) in screened.iter().take(n_refine) {
        let r = bound_for_candidate(&cands[i], planner, alpha, search);
        let better = match &best {
            None => true,
            Some((j, b)) => {
                let key = |r: &DelayBoundResult| if r.stable { r.ln_pv } else { f64::INFINITY };
                key(&r) < key(b) || (key(&r) == key(b) && cands[i].k_avg < cands[*j].k_avg)
            }
        };
        if better {
            best = Some((i, r));
        }
    }
    let (i, r) = best.expect("at least one candidate");
    Ok((cands[i].k_avg, r))
}

/// Convenience: `K_avg` as a ratio for display.
pub fn k_avg_f64(k: Prob) -> f64 {
    ratio_to_f64(k)
}

/// Superframe length for an average user count, if it is of the form `K_tot / T`.
pub fn superframe_for(params: &SystemParams, k_avg: Prob) -> Option<u32> {
    let t = Ratio::from_integer(params.n_users_total as u64) / k_avg;
    t.is_integer().then(|| t.to_integer() as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::CsiMode;
    use proptest::prelude::*;

    fn split(w: u32, t: u32) -> DeadlineSplit {
        deadline_partition(w, t).unwrap()
    }

    #[test]
    fn deterministic_kernel_closed_form() {
        let c = 50.0;
        let (alpha, t, f, s) = (3.0, 10u32, 4u32, 0.02);
        let k = kernel(|s| (-s * c).exp(), alpha, t, f, s).value().unwrap();
        let expect = (-s * c * f as f64).exp() / (1.0 - (s * (alpha * t as f64 - c)).exp());
        assert!((k - expect).abs() < 1e-14 * expect);
        assert_eq!(kernel(|s| (-s * c).exp(), 5.0, t, f, s), Kernel::Divergent);
        assert_eq!(kernel(|s| (-s * c).exp(), 6.0, t, f, s), Kernel::Divergent);
    }

    #[test]
    fn mix_cases() {
        let m = |s: f64| (-s * 400.0f64).exp();
        let (alpha, s) = (8.0, 0.01);
        let single = pv_bound(m, alpha, &split(120, 30), 30, s).value().unwrap();
        let direct = kernel(m, alpha, 30, 4, s).value().unwrap();
        assert!((single - direct).abs() < 1e-15 * direct);
        let sp = split(120, 36);
        let mixed = pv_bound(m, alpha, &sp, 36, s).value().unwrap();
        let hi = kernel(m, alpha, 36, sp.n_frames_hi, s).value().unwrap();
        let lo = kernel(m, alpha, 36, sp.n_frames_lo, s).value().unwrap();
        assert!(mixed > hi.min(lo) && mixed < hi.max(lo));
        let half = DeadlineSplit { n_frames_hi: 3, n_frames_lo: 3, p_group1: Ratio::new(1, 2), p_group2: Ratio::new(1, 2) };
        let v = pv_bound(m, alpha, &half, 36, s).value().unwrap();
        let k3 = kernel(m, alpha, 36, 3, s).value().unwrap();
        assert!((v - k3).abs() < 1e-14 * k3);
    }

    #[test]
    fn optimize_s_deterministic_service() {
        let c = 40.0;
        let m = |s: f64| (-s * c).exp();
        let search = SSearch::default();
        let mut prev = 1.0;
        for w in [20, 40, 80, 160] {
            let r = optimize_s(m, 1.0, &split(w, 20), 20, Ratio::from_integer(1), &search);
            assert!(r.stable && r.s_star > 0.0);
            assert!(r.pv_bound < prev);
            prev = r.pv_bound;
        }
        assert!(prev < 1e-100);
        let r = optimize_s(m, 2.5, &split(80, 20), 20, Ratio::from_integer(1), &search);
        assert!(!r.stable);
        assert_eq!(r.pv_bound, 1.0);
    }

    #[test]
    fn golden_finds_convex_minimum() {
        let search = SSearch::default();
        let (s, v) = search.minimize(|s| Some((s.ln() - 0.01f64.ln()).powi(2))).unwrap();
        assert!((s - 0.01).abs() < 1e-8 && v < 1e-15);
        let (s, _) = search.minimize(|s| Some((s - 3e-6).powi(2) - 1.0)).unwrap();
        assert!(s < 1e-5, "extension below the grid: {s}");
    }

    #[test]
    fn kernel_of_ideal_service_decreasing_in_frames() {
        let b = crate::config::DerivedBudget { k_sched: 6, n_data: 400, m: 3, p_per_user: 100.0 / 6.0, sigma_e_sq: 0.0 };
        let m = |s| mellin_ideal(&b, s);
        let ks: Vec<f64> = (1..6).map(|f| kernel(m, 30.0, 20, f, 0.002).value().unwrap()).collect();
        assert!(ks.windows(2).all(|w| w[1] < w[0]));
    }

    fn ideal_params(nt: u32) -> SystemParams {
        SystemParams {
            n_antennas: nt,
            n_users_total: 120,
            superframe_len: 20,
            n_slot_symbols: 400,
            n_ul_train: 0,
            n_dl_train: 0,
            p_total: 100.0,
            p_uplink: 0.0,
            arrival_rate: 1.0,
            deadline: 120,
            csi_mode: CsiMode::Ideal,
        }
    }

    #[test]
    fn single_antenna_forces_one_user() {
        let p = ideal_params(1);
        let planner = IdealPlanner { params: p.clone() };
        let (k, _) = optimize_schedule(&p, &planner, &SSearch::default()).unwrap();
        assert_eq!(k, Ratio::from_integer(1));
    }

    #[test]
    fn candidates_respect_antennas() {
        let p = ideal_params(4);
        let planner = IdealPlanner { params: p.clone() };
        let c = schedule_candidates(&p, &planner);
        assert!(c.iter().all(|c| c.split.k_a <= 4));
        assert!(c.windows(2).all(|w| w[0].k_avg < w[1].k_avg));
        assert_eq!(c.len(), 120 - 30 + 1);
    }

    #[test]
    fn no_feasible_schedule() {
        let mut p = ideal_params(4);
        p.csi_mode = CsiMode::ImperfectCsi;
        p.p_uplink = 10.0;
        p.n_ul_train = 400;
        let planner = IdealPlanner { params: p.clone() };
        assert_eq!(optimize_schedule(&p, &planner, &SSearch::default()), Err(DelayError::NoFeasibleSchedule));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn monotone_in_alpha_and_deadline(alpha in 0.5f64..6.0, w in 20u32..200) {
            let b = crate::config::DerivedBudget { k_sched: 6, n_data: 400, m: 3, p_per_user: 100.0 / 6.0, sigma_e_sq: 0.0 };
            let m = |s| mellin_ideal(&b, s);
            let search = SSearch::default();
            let t = 20;
            let base = optimize_s(m, alpha, &split(w, t), t, Ratio::from_integer(6), &search);
            let more_alpha = optimize_s(m, alpha * 1.1, &split(w, t), t, Ratio::from_integer(6), &search);
            let longer = optimize_s(m, alpha, &split(w + t, t), t, Ratio::from_integer(6), &search);
            prop_assert!(more_alpha.pv_bound >= base.pv_bound * (1.0 - 1e-6));
            prop_assert!(longer.pv_bound <= base.pv_bound * (1.0 + 1e-6));
        }
    }
}
