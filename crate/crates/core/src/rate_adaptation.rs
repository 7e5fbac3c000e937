//! Per-cell rate selection from an estimated SNR.
//!
//! For each cell `i` of a [`MuGrid`] and each rate `r_j` of a uniform grid the
//! error probability `eps_ij` comes from one of the outage closed forms. The
//! table does not depend on `s`, so it is filled once and reused; a rate policy
//! for a given `s` minimises `(1 - eps_ij) x^{r_j} + eps_ij` with
//! `x = e^{-s n_d}` in every cell.

use crate::config::DerivedBudget;
use crate::outage_bounds::{evaluate, BoundKind, EstimateStats};
use crate::service_model::MuGrid;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Version tag written into serialized policies.
pub const POLICY_FORMAT: &str = "rate-policy v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("no candidate s gave a convergent delay kernel")]
    AllCandidatesUnstable,
    #[error("malformed policy file: {0}")]
    Parse(String),
}

/// Rate and error probability per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePolicy {
    pub grid: MuGrid,
    pub rates: Vec<f64>,
    pub errors: Vec<f64>,
    pub s_used: f64,
    pub bound_kind: BoundKind,
    pub n_data: u32,
    /// Cells changed by the monotonicity repair.
    pub repairs: usize,
}

impl RatePolicy {
    /// Rate for an arbitrary estimate, by cell lookup.
    pub fn rate_for(&self, mu: f64) -> (f64, f64) {
        let i = self.grid.cell_of(mu);
        (self.rates[i], self.errors[i])
    }

    /// Mean goodput per slot in bits per channel use.
    pub fn throughput(&self) -> f64 {
        self.grid.probs.iter().zip(&self.rates).zip(&self.errors).map(|((p, r), e)| p * (1.0 - e) * r).sum()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "# {POLICY_FORMAT}\n# s_used={} bound={} n_data={} repairs={}\nmu,p,rate,eps,mu_lo,mu_hi\n",
            self.s_used,
            self.bound_kind.name(),
            self.n_data,
            self.repairs
        );
        for i in 0..self.rates.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.grid.points[i],
                self.grid.probs[i],
                self.rates[i],
                self.errors[i],
                self.grid.edges[i],
                self.grid.edges[i + 1]
            ));
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self, RateError> {
        let bad = |m: &str| RateError::Parse(m.to_string());
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(&format!("# {POLICY_FORMAT}")) {
            return Err(bad("missing or unsupported version line"));
        }
        let meta = lines.next().ok_or_else(|| bad("missing metadata line"))?;
        let mut s_used = None;
        let mut bound_kind = None;
        let mut n_data = None;
        let mut repairs = 0;
        for field in meta.trim_start_matches('#').split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad("metadata field without '='"))?;
            match k {
                "s_used" => s_used = v.parse::<f64>().ok(),
                "bound" => {
                    bound_kind = [BoundKind::UpperCorrelated, BoundKind::FblUpperCorrelated, BoundKind::LowerUncorrelated]
                        .into_iter()
                        .find(|b| b.name() == v)
                }
                "n_data" => n_data = v.parse::<u32>().ok(),
                "repairs" => repairs = v.parse::<usize>().map_err(|_| bad("bad repairs"))?,
                _ => return Err(bad("unknown metadata field")),
            }
        }
        if lines.next().map(str::trim) != Some("mu,p,rate,eps,mu_lo,mu_hi") {
            return Err(bad("unexpected header"));
        }
        let (mut points, mut probs, mut rates, mut errors, mut edges) = (vec![], vec![], vec![], vec![], vec![]);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let vals: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| RateError::Parse(format!("{e} in `{line}`")))?;
            if vals.len() != 6 {
                return Err(bad("row must have 6 columns"));
            }
            if let Some(&last) = edges.last() {
                if last != vals[4] {
                    return Err(bad("cell edges are not contiguous"));
                }
                edges.pop();
            }
            points.push(vals[0]);
            probs.push(vals[1]);
            rates.push(vals[2]);
            errors.push(vals[3]);
            edges.push(vals[4]);
            edges.push(vals[5]);
        }
        if points.is_empty() {
            return Err(bad("no rows"));
        }
        Ok(RatePolicy {
            grid: MuGrid::from_parts(points, probs, edges),
            rates,
            errors,
            s_used: s_used.ok_or_else(|| bad("missing s_used"))?,
            bound_kind: bound_kind.ok_or_else(|| bad("missing bound"))?,
            n_data: n_data.ok_or_else(|| bad("missing n_data"))?,
            repairs,
        })
    }
}

/// `n` uniformly spaced rates on `[0, log2(1 + mu_max)]`, including zero.
pub fn uniform_rate_grid(mu_max: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let top = mu_max.ln_1p() / std::f64::consts::LN_2;
    (0..n).map(|j| top * j as f64 / (n - 1) as f64).collect()
}

/// Error probabilities for every (cell, rate) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub grid: MuGrid,
    pub rates: Vec<f64>,
    /// Row-major: `eps[i * rates.len() + j]`.
    pub eps: Vec<f64>,
    /// Entries where the closed form left `[0, 1]`.
    pub clamp_count: usize,
    pub kind: BoundKind,
    pub n_data: u32,
}

impl ErrorTable {
    pub fn build(grid: &MuGrid, budget: &DerivedBudget, rates: &[f64], kind: BoundKind) -> Self {
        let fbl = kind == BoundKind::FblUpperCorrelated;
        let row = |i: usize| -> (Vec<f64>, usize) {
            let stats = EstimateStats::new(grid.points[i], budget, fbl);
            let mut clamps = 0;
            let vals = rates
                .iter()
                .map(|&r| {
                    if r <= 0.0 {
                        return 0.0;
                    }
                    let e = evaluate(kind, &stats, r).expect("positive rate");
                    clamps += e.clamped as usize;
                    e.value
                })
                .collect();
            (vals, clamps)
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<_> = (0..grid.len()).into_par_iter().map(row).collect();
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<_> = (0..grid.len()).map(row).collect();
        let clamp_count = rows.iter().map(|r| r.1).sum();
        let eps = rows.into_iter().flat_map(|r| r.0).collect();
        ErrorTable { grid: grid.clone(), rates: rates.to_vec(), eps, clamp_count, kind, n_data: budget.n_data }
    }

    pub fn eps(&self, i: usize, j: usize) -> f64 {
        self.eps[i * self.rates.len() + j]
    }

    fn powers(&self, s: f64) -> Vec<f64> {
        let sn = s * self.n_data as f64;
        self.rates.iter().map(|r| (-sn * r).exp()).collect()
    }

    /// Best rate index and objective value in cell `i`; ties keep the smaller rate.
    fn best_in_cell(&self, i: usize, xs: &[f64]) -> (usize, f64) {
        let row = &self.eps[i * self.rates.len()..(i + 1) * self.rates.len()];
        let mut best = (0, f64::INFINITY);
        for (j, (&e, &x)) in row.iter().zip(xs).enumerate() {
            let v = (1.0 - e) * x + e;
            if v < best.1 {
                best = (j, v);
            }
        }
        best
    }

    /// `sum_i p_i min_j [(1 - eps_ij) x^{r_j} + eps_ij]` without building a policy.
    pub fn min_mellin(&self, s: f64) -> f64 {
        let xs = self.powers(s);
        (0..self.grid.len()).map(|i| self.grid.probs[i] * self.best_in_cell(i, &xs).1).sum()
    }

    /// Per-cell minimiser at `s`, followed by the monotonicity repair.
    pub fn policy_for_s(&self, s: f64) -> RatePolicy {
        let xs = self.powers(s);
        let idx: Vec<usize> = (0..self.grid.len()).map(|i| self.best_in_cell(i, &xs).0).collect();
        self.finish(idx, s)
    }

    /// Policy maximising the mean goodput `(1 - eps) r` in every cell.
    pub fn max_throughput_policy(&self) -> RatePolicy {
        let nr = self.rates.len();
        let idx = (0..self.grid.len())
            .map(|i| {
                let mut best = (0, f64::NEG_INFINITY);
                for j in 0..nr {
                    let v = (1.0 - self.eps(i, j)) * self.rates[j];
                    if v > best.1 {
                        best = (j, v);
                    }
                }
                best.0
            })
            .collect();
        self.finish(idx, 0.0)
    }

    fn finish(&self, idx: Vec<usize>, s: f64) -> RatePolicy {
        let (idx, repairs) = self.repair(idx);
        RatePolicy {
            grid: self.grid.clone(),
            rates: idx.iter().map(|&j| self.rates[j]).collect(),
            errors: idx.iter().enumerate().map(|(i, &j)| self.eps(i, j)).collect(),
            s_used: s,
            bound_kind: self.kind,
            n_data: self.n_data,
            repairs,
        }
    }

    /// Makes the rate sequence nondecreasing when some drop exceeds one grid
    /// step. Pooled rates are snapped down to the grid.
    fn repair(&self, idx: Vec<usize>) -> (Vec<usize>, usize) {
        let step = self.rates.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        let rates: Vec<f64> = idx.iter().map(|&j| self.rates[j]).collect();
        if !rates.windows(2).any(|w| w[1] < w[0] - step * (1.0 + 1e-9)) {
            return (idx, 0);
        }
        let pooled = isotonic_fit(&rates, &self.grid.probs);
        let snapped: Vec<usize> = pooled
            .iter()
            .map(|&v| self.rates.partition_point(|&r| r <= v + 1e-12).saturating_sub(1))
            .collect();
        let repairs = snapped.iter().zip(&idx).filter(|(a, b)| a != b).count();
        (snapped, repairs)
    }
}

/// Weighted least-squares nondecreasing fit (pool adjacent violators).
pub fn isotonic_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, n2) = blocks.pop().unwrap();
            let (v1, w1, n1) = blocks.pop().unwrap();
            let w = w1 + w2;
            blocks.push(((v1 * w1 + v2 * w2) / w, w, n1 + n2));
        }
    }
    blocks.into_iter().flat_map(|(v, _, n)| std::iter::repeat_n(v, n)).collect()
}

/// Policy for one `s`, building the error table on the fly.
pub fn optimize_rate_for_s(grid: &MuGrid, budget: &DerivedBudget, rates: &[f64], kind: BoundKind, s: f64) -> RatePolicy {
    ErrorTable::build(grid, budget, rates, kind).policy_for_s(s)
}

/// Among the per-`s` policies, picks the one whose delay objective is
/// smallest. `objective` returns `None` for a divergent kernel; ties keep the
/// earlier candidate.
pub fn optimize_policy<F>(table: &ErrorTable, s_candidates: &[f64], mut objective: F) -> Result<RatePolicy, RateError>
where
    F: FnMut(&RatePolicy, f64) -> Option<f64>,
{
    let mut best: Option<(RatePolicy, f64)> = None;
    for &s in s_candidates {
        let policy = table.policy_for_s(s);
        if let Some(v) = objective(&policy, s) {
            if best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((policy, v));
            }
        }
    }
    best.map(|b| b.0).ok_or(RateError::AllCandidatesUnstable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service_model::MuLaw;
    use proptest::prelude::*;

    fn setup(n_mu: usize, n_r: usize) -> (MuGrid, DerivedBudget, Vec<f64>) {
        let budget = DerivedBudget { k_sched: 4, n_data: 300, m: 5, p_per_user: 25.0, sigma_e_sq: 0.01 };
        let grid = MuGrid::quantile(n_mu, MuLaw::for_budget(&budget, true), 1e-9);
        let rates = uniform_rate_grid(grid.mu_max(), n_r);
        (grid, budget, rates)
    }

    #[test]
    fn policy_matches_brute_force() {
        let (grid, budget, rates) = setup(24, 60);
        let table = ErrorTable::build(&grid, &budget, &rates, BoundKind::UpperCorrelated);
        let s = 0.004;
        let p = table.policy_for_s(s);
        if p.repairs == 0 {
            for i in 0..grid.len() {
                let stats = EstimateStats::new(grid.points[i], &budget, false);
                let obj = |r: f64| {
                    let e = if r > 0.0 { evaluate(BoundKind::UpperCorrelated, &stats, r).unwrap().value } else { 0.0 };
                    (1.0 - e) * (-s * 300.0 * r).exp() + e
                };
                let brute = rates.iter().map(|&r| obj(r)).fold(f64::INFINITY, f64::min);
                assert!((obj(p.rates[i]) - brute).abs() < 1e-15);
            }
        }
        let sum: f64 = grid.probs.iter().zip(&p.rates).zip(&p.errors).map(|((q, r), e)| q * ((1.0 - e) * (-s * 300.0 * r).exp() + e)).sum();
        if p.repairs == 0 {
            assert!((sum - table.min_mellin(s)).abs() < 1e-14);
        }
    }

    #[test]
    fn table_is_reused_unchanged() {
        let (grid, budget, rates) = setup(16, 40);
        let table = ErrorTable::build(&grid, &budget, &rates, BoundKind::UpperCorrelated);
        let before = table.clone();
        let _ = table.policy_for_s(0.001);
        let _ = table.policy_for_s(0.1);
        assert_eq!(table, before);
        assert_eq!(table, ErrorTable::build(&grid, &budget, &rates, BoundKind::UpperCorrelated));
    }

    #[test]
    fn rates_nondecreasing_in_mu() {
        let (grid, budget, rates) = setup(64, 120);
        let table = ErrorTable::build(&grid, &budget, &rates, BoundKind::UpperCorrelated);
        for &s in &[1e-4, 1e-3, 1e-2, 0.3] {
            let p = table.policy_for_s(s);
            assert!(p.rates.windows(2).all(|w| w[1] >= w[0]), "s={s}");
        }
        let t = table.max_throughput_policy();
        assert!(t.rates.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ties_go_to_smaller_rate() {
        let grid = MuGrid::from_parts(vec![1.0], vec![1.0], vec![0.0, 2.0]);
        let table = ErrorTable {
            grid,
            rates: vec![0.0, 1.0, 2.0],
            eps: vec![0.0, 1.0, 1.0],
            clamp_count: 0,
            kind: BoundKind::UpperCorrelated,
            n_data: 10,
        };
        assert_eq!(table.policy_for_s(0.5).rates, vec![0.0]);
    }

    #[test]
    fn isotonic_examples() {
        assert_eq!(isotonic_fit(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_fit(&[3.0, 1.0], &[3.0, 1.0]), vec![2.5, 2.5]);
    }

    #[test]
    fn repair_counts_changed_cells() {
        let grid = MuGrid::from_parts(vec![1.0, 2.0, 3.0], vec![1.0 / 3.0; 3], vec![0.0, 1.5, 2.5, 3.5]);
        let table = ErrorTable {
            grid,
            rates: vec![0.0, 1.0, 2.0, 3.0],
            eps: vec![0.0; 12],
            clamp_count: 0,
            kind: BoundKind::UpperCorrelated,
            n_data: 10,
        };
        let (idx, n) = table.repair(vec![3, 0, 3]);
        assert_eq!(idx, vec![1, 1, 3]);
        assert_eq!(n, 2);
    }

    #[test]
    fn csv_roundtrip() {
        let (grid, budget, rates) = setup(12, 30);
        let table = ErrorTable::build(&grid, &budget, &rates, BoundKind::FblUpperCorrelated);
        let p = table.policy_for_s(0.0123);
        let back = RatePolicy::from_csv_str(&p.to_csv_string()).unwrap();
        assert_eq!(back, p);
        assert!(RatePolicy::from_csv_str("# rate-policy v0\n").is_err());
    }

    #[test]
    fn optimize_policy_rejects_all_divergent() {
        let (grid, budget, rates) = setup(8, 20);
        let table = ErrorTable::build(&grid, &budget, &rates, BoundKind::UpperCorrelated);
        assert_eq!(optimize_policy(&table, &[0.1, 0.2], |_, _| None), Err(RateError::AllCandidatesUnstable));
        let p = optimize_policy(&table, &[0.1, 0.2, 0.3], |_, s| Some((s - 0.2f64).abs())).unwrap();
        assert_eq!(p.s_used, 0.2);
    }

    proptest! {
        #[test]
        fn min_mellin_below_any_fixed_rate(s in 1e-4f64..0.5, j in 0usize..40) {
            let (grid, budget, rates) = setup(16, 40);
            let table = ErrorTable::build(&grid, &budget, &rates, BoundKind::UpperCorrelated);
            let fixed: f64 = (0..grid.len())
                .map(|i| grid.probs[i] * ((1.0 - table.eps(i, j)) * (-s * 300.0 * rates[j]).exp() + table.eps(i, j)))
                .sum();
            prop_assert!(table.min_mellin(s) <= fixed + 1e-15);
        }
    }
}
