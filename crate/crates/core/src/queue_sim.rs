//! Slot-level simulation of the tagged user's queue.
//!
//! Bits arrive at a constant `alpha` per slot and leave in FIFO order. The
//! tagged user is served in exactly one slot per superframe. Within a
//! superframe the slot is drawn from group A with probability `p_a` and
//! uniformly within the group; the served amount is `n_d r Z` with
//! `Z ~ Bernoulli(1 - eps)`.
//!
//! The delay of the bits arriving in slot `t` is the smallest `u` with
//! `D(t + u) >= A(t)`. A delay above `w` is equivalent to the backlog after
//! slot `t + w` exceeding `alpha w`, so violations are counted from the
//! backlog alone while a deque of pending arrivals tracks exact delays.
//! Debug builds assert that the two agree.

use crate::config::{derive_budget, ratio_to_f64, superframe_partition, CsiMode, DerivedBudget, GroupSplit, Prob, SystemParams};
use crate::delay_bound::{superframe_for, PolicyPlanner};
use crate::numerics::chi2_scaled_sample;
use crate::phy_mc::{capacity, fbl_error_given_sinr, sample_estimate, sample_sinr};
use crate::rate_adaptation::RatePolicy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

/// How the success indicator of a scheduled slot is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceDrawMode {
    /// Draw the estimated SNR from its law and use the policy's tabulated error.
    AnalyticEps,
    /// Draw a full channel estimate and estimation error; success is the
    /// capacity exceeding the rate, or a finite-blocklength coin.
    FullChannelMc,
}

/// What happens in a slot of one group.
#[derive(Debug, Clone)]
pub enum SlotService {
    /// Perfect CSI: `S = n_d log2(1 + mu)`.
    Ideal(DerivedBudget),
    Policy { policy: RatePolicy, budget: DerivedBudget },
}

#[derive(Debug, Clone)]
pub struct QueueScenario {
    pub n_antennas: u32,
    pub deadline: u32,
    pub split: GroupSplit,
    pub group_a: SlotService,
    /// Required unless the split is degenerate.
    pub group_b: Option<SlotService>,
    pub mode: ServiceDrawMode,
    /// Use the finite-blocklength coin in full-channel mode.
    pub finite_blocklength: bool,
    /// Slots discarded before counting violations.
    pub warmup: u64,
}

impl QueueScenario {
    pub fn superframe_len(&self) -> u32 {
        self.split.t_a + self.split.t_b
    }

    /// Default warm-up of ten deadlines.
    pub fn default_warmup(deadline: u32) -> u64 {
        10 * deadline as u64
    }
}

/// Scenario for the schedule with average user count `k_avg` where each group
/// uses the rate policy optimal at `s` (estimated CSI) or capacity rates
/// (perfect CSI). `None` if `k_avg` is not a feasible schedule.
pub fn scenario_for_schedule(
    params: &SystemParams,
    planner: Option<&PolicyPlanner>,
    k_avg: Prob,
    s: f64,
    mode: ServiceDrawMode,
) -> Option<QueueScenario> {
    let t = superframe_for(params, k_avg)?;
    let p = SystemParams { superframe_len: t, ..params.clone() };
    let split = superframe_partition(&p).ok()?;
    let service = |k: u32| -> Option<SlotService> {
        let budget = derive_budget(params, k).ok()?;
        Some(match planner {
            None => SlotService::Ideal(budget),
            Some(pl) => SlotService::Policy { policy: pl.policy_at(k, s)?, budget },
        })
    };
    let group_a = service(split.k_a)?;
    let group_b = if split.is_degenerate() { None } else { Some(service(split.k_b)?) };
    Some(QueueScenario {
        n_antennas: params.n_antennas,
        deadline: params.deadline,
        split,
        group_a,
        group_b,
        mode,
        finite_blocklength: params.csi_mode == CsiMode::ImperfectCsiFiniteBlocklength,
        warmup: QueueScenario::default_warmup(params.deadline),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    pub alpha: f64,
    pub n_slots: u64,
    /// Arrivals whose violation status was counted.
    pub measured: u64,
    pub violations: u64,
    pub pv_hat: f64,
    /// Binomial standard error; ignores correlation between slots.
    pub stderr: f64,
    pub max_delay_seen: u64,
    pub seed: u64,
}

/// Slot service generator for one scenario.
struct ServiceStream<'a> {
    sc: &'a QueueScenario,
    rng: ChaCha8Rng,
    t: u64,
    frame: Vec<f64>,
}

impl<'a> ServiceStream<'a> {
    fn new(sc: &'a QueueScenario, seed: u64) -> Self {
        assert!(sc.split.is_degenerate() || sc.group_b.is_some(), "group B service missing");
        ServiceStream { sc, rng: ChaCha8Rng::seed_from_u64(seed), t: 0, frame: vec![0.0; sc.superframe_len() as usize] }
    }

    fn next(&mut self) -> f64 {
        let tf = self.frame.len() as u64;
        if self.t % tf == 0 {
            self.frame.iter_mut().for_each(|x| *x = 0.0);
            let sp = self.sc.split;
            let in_a = sp.is_degenerate() || self.rng.random::<f64>() < ratio_to_f64(sp.p_a);
            let (slot, svc) = if in_a {
                (self.rng.random_range(0..sp.t_a), &self.sc.group_a)
            } else {
                (sp.t_a + self.rng.random_range(0..sp.t_b), self.sc.group_b.as_ref().expect("checked"))
            };
            self.frame[slot as usize] = draw_service(svc, self.sc, &mut self.rng);
        }
        let s = self.frame[(self.t % tf) as usize];
        self.t += 1;
        s
    }
}

fn draw_service<R: Rng>(svc: &SlotService, sc: &QueueScenario, rng: &mut R) -> f64 {
    match (svc, sc.mode) {
        (SlotService::Ideal(b), ServiceDrawMode::AnalyticEps) => {
            b.n_data as f64 * capacity(b.p_per_user * chi2_scaled_sample(b.m, rng))
        }
        (SlotService::Ideal(b), ServiceDrawMode::FullChannelMc) => {
            let est = sample_estimate(b, sc.n_antennas, rng).expect("estimate");
            b.n_data as f64 * capacity(est.mu)
        }
        (SlotService::Policy { policy, budget }, ServiceDrawMode::AnalyticEps) => {
            let mu = budget.p_per_user * (1.0 - budget.sigma_e_sq) * chi2_scaled_sample(budget.m, rng);
            let (r, eps) = policy.rate_for(mu);
            let ok = rng.random::<f64>() >= eps;
            if ok { budget.n_data as f64 * r } else { 0.0 }
        }
        (SlotService::Policy { policy, budget }, ServiceDrawMode::FullChannelMc) => {
            let est = sample_estimate(budget, sc.n_antennas, rng).expect("estimate");
            let (r, _) = policy.rate_for(est.mu);
            if r <= 0.0 {
                return 0.0;
            }
            let sinr = sample_sinr(&est, budget, rng).sinr;
            let ok = if sc.finite_blocklength {
                rng.random::<f64>() >= fbl_error_given_sinr(sinr, r, budget.n_data)
            } else {
                capacity(sinr) >= r
            };
            if ok { budget.n_data as f64 * r } else { 0.0 }
        }
    }
}

/// FIFO fluid queue with constant arrivals, tracking exact delays.
#[derive(Debug, Clone)]
struct FluidQueue {
    alpha: f64,
    backlog: f64,
    pending: VecDeque<u64>,
    tol: f64,
}

impl FluidQueue {
    fn new(alpha: f64) -> Self {
        FluidQueue { alpha, backlog: 0.0, pending: VecDeque::new(), tol: 1e-9 * alpha.max(1e-300) }
    }

    /// Arrivals of slot `c` are satisfied by slot `c'` when the backlog after
    /// `c'` is at most `alpha (c' - c)`.
    fn satisfied(&self, arrival: u64, now: u64) -> bool {
        self.backlog <= self.alpha * (now - arrival) as f64 + self.tol
    }

    /// Advances one slot and calls `on_delay` for every arrival whose delay is resolved.
    fn step(&mut self, now: u64, service: f64, mut on_delay: impl FnMut(u64, u64)) {
        self.backlog = (self.backlog + self.alpha - service).max(0.0);
        if self.alpha > 0.0 {
            self.pending.push_back(now);
        } else {
            on_delay(now, 0);
        }
        while let Some(&t) = self.pending.front() {
            if !self.satisfied(t, now) {
                break;
            }
            self.pending.pop_front();
            on_delay(t, now - t);
        }
    }
}

#[derive(Debug, Clone)]
struct Tally {
    q: FluidQueue,
    violations: u64,
    measured: u64,
    max_delay: u64,
    deque_violations: u64,
}

/// Simulates several arrival rates on one common service sequence.
pub fn simulate_sweep(sc: &QueueScenario, alphas: &[f64], n_slots: u64, seed: u64) -> Vec<QueueTrace> {
    assert!(n_slots >= 1, "at least one slot");
    let w = sc.deadline as u64;
    let warm = sc.warmup;
    // Arrivals in [warm, last] have their status decided inside the horizon.
    let last = n_slots.checked_sub(w + 1);
    let in_window = |t: u64| t >= warm && last.is_some_and(|l| t <= l);
    let mut stream = ServiceStream::new(sc, seed);
    let mut tallies: Vec<Tally> = alphas
        .iter()
        .map(|&a| Tally { q: FluidQueue::new(a), violations: 0, measured: 0, max_delay: 0, deque_violations: 0 })
        .collect();
    for now in 0..n_slots {
        let s = stream.next();
        for tl in tallies.iter_mut() {
            let (mut maxd, mut dv) = (tl.max_delay, 0u64);
            tl.q.step(now, s, |t, d| {
                if t >= warm {
                    maxd = maxd.max(d);
                    if d > w && in_window(t) {
                        dv += 1;
                    }
                }
            });
            tl.max_delay = maxd;
            tl.deque_violations += dv;
            if now >= w {
                let t = now - w;
                if in_window(t) {
                    tl.measured += 1;
                    if !tl.q.satisfied(t, now) {
                        tl.violations += 1;
                    }
                }
            }
        }
    }
    tallies
        .into_iter()
        .zip(alphas)
        .map(|(tl, &alpha)| {
            // Arrivals still queued: their age bounds the delay from below.
            let mut maxd = tl.max_delay;
            let mut dv = tl.deque_violations;
            for &t in &tl.q.pending {
                if t >= warm {
                    maxd = maxd.max(n_slots - t);
                    if in_window(t) {
                        dv += 1;
                    }
                }
            }
            debug_assert_eq!(dv, tl.violations, "deque and backlog delay tests disagree");
            let pv = if tl.measured == 0 { 0.0 } else { tl.violations as f64 / tl.measured as f64 };
            let stderr = if tl.measured == 0 { 0.0 } else { (pv * (1.0 - pv) / tl.measured as f64).sqrt() };
            QueueTrace {
                alpha,
                n_slots,
                measured: tl.measured,
                violations: tl.violations,
                pv_hat: pv,
                stderr,
                max_delay_seen: maxd,
                seed,
            }
        })
        .collect()
}

pub fn simulate_queue(sc: &QueueScenario, alpha: f64, n_slots: u64, seed: u64) -> QueueTrace {
    simulate_sweep(sc, &[alpha], n_slots, seed).remove(0)
}

/// Delays of every arrival slot computed with the streaming queue; `None`
/// for arrivals not served within the horizon.
pub fn delays_streaming(alpha: f64, services: &[f64]) -> Vec<Option<u64>> {
    let mut q = FluidQueue::new(alpha);
    let mut out = vec![None; services.len()];
    for (now, &s) in services.iter().enumerate() {
        q.step(now as u64, s, |t, d| out[t as usize] = Some(d));
    }
    out
}

/// Delays from the definition: cumulative departures `D` built slot by slot
/// and a binary search for the first `D(t + u) >= A(t)`.
pub fn delays_by_definition(alpha: f64, services: &[f64]) -> Vec<Option<u64>> {
    let n = services.len();
    let arrivals: Vec<f64> = (0..n).map(|t| alpha * (t + 1) as f64).collect();
    let mut departures = Vec::with_capacity(n);
    let mut d = 0.0f64;
    for (t, &s) in services.iter().enumerate() {
        d += s.min(arrivals[t] - d).max(0.0);
        departures.push(d);
    }
    let tol = 1e-9 * alpha.max(1e-300);
    (0..n)
        .map(|t| {
            let need = arrivals[t] - tol;
            let idx = t + departures[t..].partition_point(|&x| x < need);
            (idx < n).then(|| (idx - t) as u64)
        })
        .collect()
}
