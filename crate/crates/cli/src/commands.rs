use crate::output::{num, opt_num, CsvFile, Stamp};
use crate::scenario::{Family, ScenarioConfig};
use anyhow::{bail, Context, Result};
use miso_delay::config::{derive_budget, CsiMode, SystemParams};
use miso_delay::delay_bound::{
    k_avg_f64, optimize_schedule, schedule_candidates, superframe_for, IdealPlanner, PolicyPlanner, ServicePlanner,
};
use miso_delay::outage_bounds::{fbl_error_upper, pout_lower, pout_upper, EstimateStats};
use miso_delay::phy_mc::{outage_curve, OutageStudy};
use miso_delay::queue_sim::{scenario_for_schedule, simulate_queue};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// `s` used to pick the simulated rate policy when the bound is unstable.
const FALLBACK_S: f64 = 1e-3;

enum Planner {
    Ideal(IdealPlanner),
    Policy(PolicyPlanner),
}

impl Planner {
    fn new(cfg: &ScenarioConfig, params: &SystemParams) -> Self {
        if params.csi_mode.is_ideal() {
            Planner::Ideal(IdealPlanner { params: params.clone() })
        } else {
            Planner::Policy(PolicyPlanner::new(params.clone(), cfg.policy_grid(params.csi_mode)))
        }
    }

    fn as_dyn(&self) -> &dyn ServicePlanner {
        match self {
            Planner::Ideal(p) => p,
            Planner::Policy(p) => p,
        }
    }

    fn policy(&self) -> Option<&PolicyPlanner> {
        match self {
            Planner::Ideal(_) => None,
            Planner::Policy(p) => Some(p),
        }
    }
}

fn family_cells(f: &Family) -> [String; 2] {
    [f.params.n_antennas.to_string(), opt_num(f.p_uplink_db)]
}

/// Distinct, reproducible seed per family.
fn family_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn in_k_set(set: &Option<Vec<f64>>, k: f64) -> bool {
    set.as_ref().is_none_or(|ks| ks.iter().any(|&x| (x - k).abs() <= 1e-9 * k.max(1.0)))
}

pub struct RunContext {
    pub cfg: ScenarioConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl RunContext {
    fn stamp(&self, command: &'static str) -> Stamp {
        Stamp { command, config_hash: self.cfg.hash_hex(), seed: self.seed }
    }
}

pub fn analyze(ctx: &RunContext, command: &'static str) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let families = cfg.families()?;
    let alphas = cfg.alphas();
    let search = cfg.search();

    type Rows = (Vec<Vec<String>>, Vec<Vec<String>>);
    let per_family: Vec<Result<Rows>> = families
        .par_iter()
        .map(|f| {
            let planner = Planner::new(cfg, &f.params);
            let pl = planner.as_dyn();
            let mut es = Vec::new();
            for c in schedule_candidates(&f.params, pl) {
                let k = k_avg_f64(c.k_avg);
                if !in_k_set(&cfg.sweep.k_avg, k) {
                    continue;
                }
                let e = c.expected_service(pl).context("expected service of a feasible schedule")?;
                let [nt, pul] = family_cells(f);
                es.push(vec![nt, pul, num(k), c.t.to_string(), num(e)]);
            }
            let pv: Vec<Result<Vec<String>>> = alphas
                .par_iter()
                .map(|&alpha| {
                    let p = SystemParams { arrival_rate: alpha, ..f.params.clone() };
                    let (k, b) = optimize_schedule(&p, pl, &search)
                        .with_context(|| format!("n_antennas = {}: no feasible schedule", f.params.n_antennas))?;
                    let [nt, pul] = family_cells(f);
                    let t = superframe_for(&p, k).map(|t| t.to_string()).unwrap_or_default();
                    Ok(vec![nt, pul, num(alpha), num(b.pv_bound), num(b.s_star), num(k_avg_f64(k)), t, b.stable.to_string()])
                })
                .collect();
            Ok((es, pv.into_iter().collect::<Result<_>>()?))
        })
        .collect();

    let stamp = ctx.stamp(command);
    let mut es_file = CsvFile::create(
        &ctx.out,
        "expected_service.csv",
        &stamp,
        &["n_antennas", "p_uplink_db", "k_avg", "superframe_len", "expected_service"],
    )?;
    let mut pv_file = CsvFile::create(
        &ctx.out,
        "pv_vs_alpha.csv",
        &stamp,
        &["n_antennas", "p_uplink_db", "alpha", "pv_bound", "s_star", "k_avg_star", "superframe_len", "stable"],
    )?;
    for fam in per_family {
        let (es, pv) = fam?;
        for row in es {
            es_file.row(row)?;
        }
        for row in pv {
            pv_file.row(row)?;
        }
    }
    Ok(vec![es_file.finish()?, pv_file.finish()?])
}

pub fn validate(ctx: &RunContext, command: &'static str) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let Some(v) = &cfg.validate else {
        bail!("validate: the config has no [validate] section");
    };
    let families = cfg.families()?;
    if families.iter().any(|f| f.params.csi_mode.is_ideal()) {
        bail!("validate: outage validation needs csi_mode \"imperfect\" or \"imperfect-fbl\"");
    }
    let rates = v.rates();
    let mut rows = Vec::new();
    for (i, f) in families.iter().enumerate() {
        let budget = derive_budget(&f.params, v.k_sched).map_err(|e| anyhow::anyhow!("validate.k_sched: {e}"))?;
        let with_fbl = f.params.csi_mode == CsiMode::ImperfectCsiFiniteBlocklength;
        let study = OutageStudy {
            budget,
            n_antennas: f.params.n_antennas,
            target_cap_bits: v.target_cap_bits,
            tol_bits: v.tol_bits,
            n_estimates: v.n_estimates,
            n_draws: v.n_draws,
            rates: rates.clone(),
            with_fbl,
            max_attempts: v.max_attempts,
            seed: family_seed(ctx.seed, i),
        };
        let curve = outage_curve(&study).with_context(|| {
            format!(
                "n_antennas = {}: conditioning estimates on {} +- {} bits",
                f.params.n_antennas, v.target_cap_bits, v.tol_bits
            )
        })?;
        let n_est = curve.per_estimate.len() as f64;
        for (j, &rate) in rates.iter().enumerate() {
            let mean_of = |g: &dyn Fn(&EstimateStats) -> f64, fbl: bool| {
                curve.per_estimate.iter().map(|e| g(&EstimateStats::new(e.mu, &budget, fbl))).sum::<f64>() / n_est
            };
            let lower = mean_of(&|s| pout_lower(s, rate).expect("positive rate"), false);
            let upper = mean_of(&|s| pout_upper(s, rate).expect("positive rate"), false);
            let fbl_upper = mean_of(&|s| fbl_error_upper(s, rate).expect("positive rate"), true);
            let [nt, pul] = family_cells(f);
            rows.push(vec![
                nt,
                pul,
                num(rate),
                num(lower),
                num(upper),
                num(fbl_upper),
                num(curve.mean[j]),
                num(curve.stderr[j]),
                v.n_estimates.to_string(),
                v.n_draws.to_string(),
                opt_num(curve.fbl_mean.as_ref().map(|m| m[j])),
                opt_num(curve.fbl_stderr.as_ref().map(|m| m[j])),
            ]);
        }
    }
    let mut file = CsvFile::create(
        &ctx.out,
        "pout_vs_rate.csv",
        &ctx.stamp(command),
        &[
            "n_antennas",
            "p_uplink_db",
            "rate",
            "lower",
            "upper",
            "fbl_upper",
            "mc_mean",
            "mc_stderr",
            "n_estimates",
            "n_draws",
            "mc_fbl_mean",
            "mc_fbl_stderr",
        ],
    )?;
    for r in rows {
        file.row(r)?;
    }
    Ok(vec![file.finish()?])
}

pub fn simulate(ctx: &RunContext, command: &'static str) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.cfg;
    let Some(sim) = &cfg.simulate else {
        bail!("simulate: the config has no [simulate] section");
    };
    let families = cfg.families()?;
    let alphas = cfg.alphas();
    let search = cfg.search();
    let per_family: Vec<Result<Vec<Vec<String>>>> = families
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let planner = Planner::new(cfg, &f.params);
            let fam_seed = family_seed(ctx.seed, i);
            alphas
                .par_iter()
                .enumerate()
                .map(|(j, &alpha)| {
                    let p = SystemParams { arrival_rate: alpha, ..f.params.clone() };
                    let (k, b) = optimize_schedule(&p, planner.as_dyn(), &search)
                        .with_context(|| format!("n_antennas = {}: no feasible schedule", f.params.n_antennas))?;
                    let s = if b.stable { b.s_star } else { FALLBACK_S };
                    let sc = scenario_for_schedule(&p, planner.policy(), k, s, sim.draw_mode())
                        .context("optimal schedule has no simulable scenario")?;
                    let seed = fam_seed.wrapping_add(j as u64);
                    let tr = simulate_queue(&sc, alpha, sim.n_slots, seed);
                    let [nt, pul] = family_cells(f);
                    Ok(vec![
                        nt,
                        pul,
                        num(alpha),
                        num(tr.pv_hat),
                        num(tr.stderr),
                        num(b.pv_bound),
                        tr.n_slots.to_string(),
                        seed.to_string(),
                        num(k_avg_f64(k)),
                        tr.violations.to_string(),
                        tr.measured.to_string(),
                    ])
                })
                .collect()
        })
        .collect();
    let mut file = CsvFile::create(
        &ctx.out,
        "pv_sim_vs_alpha.csv",
        &ctx.stamp(command),
        &[
            "n_antennas",
            "p_uplink_db",
            "alpha",
            "pv_hat",
            "stderr",
            "pv_bound",
            "slots",
            "seed",
            "k_avg",
            "violations",
            "measured",
        ],
    )?;
    for fam in per_family {
        for r in fam? {
            file.row(r)?;
        }
    }
    Ok(vec![file.finish()?])
}

/// Runs every analysis the config describes over the full cross product.
pub fn sweep(ctx: &RunContext) -> Result<Vec<PathBuf>> {
    let mut out = analyze(ctx, "sweep")?;
    if ctx.cfg.validate.is_some() {
        out.extend(validate(ctx, "sweep")?);
    }
    if ctx.cfg.simulate.is_some() {
        out.extend(simulate(ctx, "sweep")?);
    }
    Ok(out)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}
