//! Scenario files: TOML with nested sections, unknown keys rejected.

use anyhow::{bail, Context, Result};
use miso_delay::config::{CsiMode, SystemParams};
use miso_delay::delay_bound::{PolicyGridConfig, SSearch};
use miso_delay::outage_bounds::BoundKind;
use miso_delay::phy_mc::DEFAULT_REJECTION_BUDGET;
use miso_delay::queue_sim::ServiceDrawMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// A power given either as a linear SNR or as a string such as `"20 dB"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Power {
    Linear(f64),
    Text(String),
}

impl Power {
    pub fn linear(&self, key: &str) -> Result<f64> {
        match self {
            Power::Linear(x) => Ok(*x),
            Power::Text(s) => {
                let t = s.trim();
                let Some(num) = t.strip_suffix("dB").or_else(|| t.strip_suffix("db")) else {
                    bail!("{key}: expected a number or a string like \"20 dB\", got {s:?}");
                };
                let db: f64 = num.trim().parse().with_context(|| format!("{key}: cannot parse {s:?} as decibels"))?;
                Ok(db_to_linear(db))
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiSetting {
    Ideal,
    Imperfect,
    ImperfectFbl,
}

impl From<CsiSetting> for CsiMode {
    fn from(c: CsiSetting) -> Self {
        match c {
            CsiSetting::Ideal => CsiMode::Ideal,
            CsiSetting::Imperfect => CsiMode::ImperfectCsi,
            CsiSetting::ImperfectFbl => CsiMode::ImperfectCsiFiniteBlocklength,
        }
    }
}

fn default_superframe() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_antennas: u32,
    pub n_users_total: u32,
    /// Only used where a single schedule is fixed; analyses search all feasible lengths.
    #[serde(default = "default_superframe")]
    pub superframe_len: u32,
    pub n_slot_symbols: u32,
    #[serde(default)]
    pub n_ul_train: u32,
    #[serde(default)]
    pub n_dl_train: u32,
    pub p_total: Power,
    #[serde(default)]
    pub p_uplink: Option<Power>,
    #[serde(default)]
    pub arrival_rate: f64,
    pub deadline: u32,
    pub csi_mode: CsiSetting,
}

/// Arrival rates, either listed or as an inclusive linear range.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha_min: Option<f64>,
    #[serde(default)]
    pub alpha_max: Option<f64>,
    #[serde(default)]
    pub alpha_steps: Option<u32>,
    /// Restricts the average user counts reported in `expected_service.csv`.
    #[serde(default)]
    pub k_avg: Option<Vec<f64>>,
    /// Antenna counts to cross with the other sets; defaults to `system.n_antennas`.
    #[serde(default)]
    pub n_antennas: Option<Vec<u32>>,
    /// Uplink training powers in dB; defaults to `system.p_uplink`.
    #[serde(default)]
    pub p_uplink_db: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "GridSection::default_n_mu")]
    pub n_mu: usize,
    #[serde(default = "GridSection::default_n_rates")]
    pub n_rates: usize,
    #[serde(default = "GridSection::default_s_min")]
    pub s_min: f64,
    #[serde(default = "GridSection::default_s_max")]
    pub s_max: f64,
    #[serde(default = "GridSection::default_s_points")]
    pub s_points: usize,
    #[serde(default = "GridSection::default_refine")]
    pub refine_iters: usize,
}

impl GridSection {
    fn default_n_mu() -> usize {
        PolicyGridConfig::default().n_mu
    }
    fn default_n_rates() -> usize {
        PolicyGridConfig::default().n_rates
    }
    fn default_s_min() -> f64 {
        SSearch::default().s_min
    }
    fn default_s_max() -> f64 {
        SSearch::default().s_max
    }
    fn default_s_points() -> usize {
        SSearch::default().grid_points
    }
    fn default_refine() -> usize {
        SSearch::default().refine_iters
    }
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n_mu: Self::default_n_mu(),
            n_rates: Self::default_n_rates(),
            s_min: Self::default_s_min(),
            s_max: Self::default_s_max(),
            s_points: Self::default_s_points(),
            refine_iters: Self::default_refine(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub k_sched: u32,
    pub target_cap_bits: f64,
    #[serde(default = "ValidateSection::default_tol")]
    pub tol_bits: f64,
    pub n_estimates: u32,
    pub n_draws: u64,
    pub rate_min: f64,
    pub rate_max: f64,
    pub rate_steps: u32,
    #[serde(default = "ValidateSection::default_attempts")]
    pub max_attempts: u64,
}

impl ValidateSection {
    fn default_tol() -> f64 {
        0.01
    }
    fn default_attempts() -> u64 {
        DEFAULT_REJECTION_BUDGET
    }

    pub fn rates(&self) -> Vec<f64> {
        linspace(self.rate_min, self.rate_max, self.rate_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrawSetting {
    FullChannel,
    AnalyticEps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_slots: u64,
    #[serde(default = "SimulateSection::default_mode")]
    pub mode: DrawSetting,
}

impl SimulateSection {
    fn default_mode() -> DrawSetting {
        DrawSetting::FullChannel
    }

    pub fn draw_mode(&self) -> ServiceDrawMode {
        match self.mode {
            DrawSetting::FullChannel => ServiceDrawMode::FullChannelMc,
            DrawSetting::AnalyticEps => ServiceDrawMode::AnalyticEps,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: Option<u64>,
    /// Output directory; `--out` wins when both are given.
    #[serde(default)]
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub validate: Option<ValidateSection>,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub run: RunSection,
}

/// One member of the cross product of antenna counts and uplink powers.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub params: SystemParams,
    pub p_uplink_db: Option<f64>,
}

pub fn linspace(a: f64, b: f64, n: u32) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)?;
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("{path}: {}", e.into_inner())
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical serialisation, so formatting and comments do
    /// not change the hash.
    pub fn hash_hex(&self) -> String {
        let canon = toml::to_string(self).expect("config serialises");
        Sha256::digest(canon.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(1)
    }

    pub fn base_params(&self) -> Result<SystemParams> {
        let s = &self.system;
        let csi: CsiMode = s.csi_mode.into();
        let p_uplink = match &s.p_uplink {
            Some(p) => p.linear("system.p_uplink")?,
            None if csi.is_ideal() => 0.0,
            None => bail!("system.p_uplink: required when csi_mode is not \"ideal\""),
        };
        let params = SystemParams {
            n_antennas: s.n_antennas,
            n_users_total: s.n_users_total,
            superframe_len: s.superframe_len,
            n_slot_symbols: s.n_slot_symbols,
            n_ul_train: s.n_ul_train,
            n_dl_train: s.n_dl_train,
            p_total: s.p_total.linear("system.p_total")?,
            p_uplink,
            arrival_rate: s.arrival_rate,
            deadline: s.deadline,
            csi_mode: csi,
        };
        params.validate().map_err(|e| anyhow::anyhow!("system: {e}"))?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        self.base_params()?;
        if self.system.deadline == 0 {
            bail!("system.deadline: must be at least 1 slot");
        }
        let sw = &self.sweep;
        if sw.alphas.is_some() && (sw.alpha_min.is_some() || sw.alpha_max.is_some() || sw.alpha_steps.is_some()) {
            bail!("sweep: give either `alphas` or `alpha_min`/`alpha_max`/`alpha_steps`, not both");
        }
        let range = [sw.alpha_min.is_some(), sw.alpha_max.is_some(), sw.alpha_steps.is_some()];
        if range.iter().any(|&x| x) && !range.iter().all(|&x| x) {
            bail!("sweep: `alpha_min`, `alpha_max` and `alpha_steps` must be given together");
        }
        if self.alphas().iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            bail!("sweep: arrival rates must be non-negative and finite");
        }
        if let Some(ns) = &sw.n_antennas {
            if ns.contains(&0) {
                bail!("sweep.n_antennas: antenna counts must be at least 1");
            }
        }
        if sw.p_uplink_db.is_some() && self.system.csi_mode == CsiSetting::Ideal {
            bail!("sweep.p_uplink_db: uplink power has no effect with csi_mode = \"ideal\"");
        }
        let g = &self.grid;
        if g.n_mu < 2 || g.n_rates < 2 {
            bail!("grid: n_mu and n_rates must be at least 2");
        }
        if !(g.s_min > 0.0 && g.s_max > g.s_min && g.s_points >= 2) {
            bail!("grid: need 0 < s_min < s_max and s_points >= 2");
        }
        if let Some(v) = &self.validate {
            if v.n_draws == 0 || v.n_estimates == 0 {
                bail!("validate: n_draws and n_estimates must be at least 1");
            }
            if !(v.rate_min > 0.0 && v.rate_max >= v.rate_min) {
                bail!("validate: need 0 < rate_min <= rate_max");
            }
            if !(v.tol_bits > 0.0) {
                bail!("validate.tol_bits: must be positive");
            }
        }
        if let Some(s) = &self.simulate {
            if s.n_slots == 0 {
                bail!("simulate.n_slots: must be at least 1");
            }
        }
        Ok(())
    }

    pub fn alphas(&self) -> Vec<f64> {
        let sw = &self.sweep;
        match (&sw.alphas, sw.alpha_min, sw.alpha_max, sw.alpha_steps) {
            (Some(a), ..) => a.clone(),
            (None, Some(a), Some(b), Some(n)) => linspace(a, b, n),
            _ => Vec::new(),
        }
    }

    pub fn search(&self) -> SSearch {
        let g = &self.grid;
        SSearch { s_min: g.s_min, s_max: g.s_max, grid_points: g.s_points, refine_iters: g.refine_iters, ..SSearch::default() }
    }

    pub fn policy_grid(&self, csi: CsiMode) -> PolicyGridConfig {
        let bound = match csi {
            CsiMode::ImperfectCsiFiniteBlocklength => BoundKind::FblUpperCorrelated,
            _ => BoundKind::UpperCorrelated,
        };
        PolicyGridConfig { n_mu: self.grid.n_mu, n_rates: self.grid.n_rates, bound, ..PolicyGridConfig::default() }
    }

    /// Cross product of the antenna and uplink-power sets.
    pub fn families(&self) -> Result<Vec<Family>> {
        let base = self.base_params()?;
        let nts = self.sweep.n_antennas.clone().unwrap_or_else(|| vec![base.n_antennas]);
        let puls: Vec<Option<f64>> = match &self.sweep.p_uplink_db {
            Some(v) => v.iter().map(|&d| Some(d)).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &nt in &nts {
            for &pul in &puls {
                let mut params = SystemParams { n_antennas: nt, ..base.clone() };
                if let Some(db) = pul {
                    params.p_uplink = db_to_linear(db);
                }
                params.validate().map_err(|e| anyhow::anyhow!("sweep: {e}"))?;
                let p_uplink_db = if params.csi_mode.is_ideal() { None } else { Some(10.0 * params.p_uplink.log10()) };
                out.push(Family { params, p_uplink_db });
            }
        }
        Ok(out)
    }
}
