//! Browser bindings: three curve generators for the static demo page.
//!
//! Every curve comes back as a flat `Float64Array` of fixed-width records so
//! the page can plot it without any marshalling library.

use miso_delay::config::{derive_budget, CsiMode, SystemParams};
use miso_delay::delay_bound::{
    k_avg_f64, optimize_schedule, schedule_candidates, IdealPlanner, PolicyGridConfig, PolicyPlanner, SSearch,
    ServicePlanner,
};
use miso_delay::outage_bounds::{fbl_error_upper, pout_lower, pout_upper, BoundError, BoundKind, EstimateStats};
use wasm_bindgen::prelude::*;

/// Coarser than the library default so a sweep stays interactive.
const DEMO_GRID: PolicyGridConfig =
    PolicyGridConfig { n_mu: 128, n_rates: 120, shrink: true, tail: 1e-9, bound: BoundKind::UpperCorrelated };

fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

fn csi_from_str(s: &str) -> Result<CsiMode, String> {
    match s {
        "ideal" => Ok(CsiMode::Ideal),
        "imperfect" => Ok(CsiMode::ImperfectCsi),
        "imperfect-fbl" => Ok(CsiMode::ImperfectCsiFiniteBlocklength),
        other => Err(format!("unknown CSI mode {other:?}; use ideal, imperfect or imperfect-fbl")),
    }
}

enum Planner {
    Ideal(IdealPlanner),
    Policy(Box<PolicyPlanner>),
}

impl Planner {
    fn as_dyn(&self) -> &dyn ServicePlanner {
        match self {
            Planner::Ideal(p) => p,
            Planner::Policy(p) => p.as_ref(),
        }
    }
}

/// One downlink scenario; rate-policy tables are built lazily and reused
/// across calls.
#[wasm_bindgen]
pub struct Scenario {
    params: SystemParams,
    planner: Planner,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        n_antennas: u32,
        n_users_total: u32,
        n_symbols: u32,
        p_total_db: f64,
        p_uplink_db: f64,
        n_train: u32,
        deadline: u32,
        csi: &str,
    ) -> Result<Scenario, String> {
        let csi_mode = csi_from_str(csi)?;
        let params = SystemParams {
            n_antennas,
            n_users_total,
            superframe_len: 1,
            n_slot_symbols: n_symbols,
            n_ul_train: n_train,
            n_dl_train: n_train,
            p_total: db(p_total_db),
            p_uplink: db(p_uplink_db),
            arrival_rate: 0.0,
            deadline,
            csi_mode,
        };
        params.validate().map_err(|e| e.to_string())?;
        if deadline == 0 {
            return Err("deadline must be at least one slot".into());
        }
        let planner = match csi_mode {
            CsiMode::Ideal => Planner::Ideal(IdealPlanner { params: params.clone() }),
            CsiMode::ImperfectCsi => Planner::Policy(Box::new(PolicyPlanner::new(params.clone(), DEMO_GRID))),
            CsiMode::ImperfectCsiFiniteBlocklength => Planner::Policy(Box::new(PolicyPlanner::new(
                params.clone(),
                PolicyGridConfig { bound: BoundKind::FblUpperCorrelated, ..DEMO_GRID },
            ))),
        };
        Ok(Scenario { params, planner })
    }

    /// `(k_avg, E[S] bits per slot)` for every feasible superframe length.
    pub fn service_points(&self) -> Vec<(f64, f64)> {
        let pl = self.planner.as_dyn();
        schedule_candidates(&self.params, pl)
            .into_iter()
            .filter_map(|c| Some((k_avg_f64(c.k_avg), c.expected_service(pl)?)))
            .collect()
    }

    /// `(alpha, pv_bound, k_avg*)` on `n` evenly spaced arrival rates.
    pub fn delay_points(&self, alpha_min: f64, alpha_max: f64, n: u32) -> Result<Vec<(f64, f64, f64)>, String> {
        if !(alpha_min >= 0.0 && alpha_max >= alpha_min) {
            return Err("need 0 <= alpha_min <= alpha_max".into());
        }
        let search = SSearch::default();
        (0..n)
            .map(|i| {
                let alpha = if n == 1 { alpha_min } else { alpha_min + (alpha_max - alpha_min) * i as f64 / (n - 1) as f64 };
                let p = SystemParams { arrival_rate: alpha, ..self.params.clone() };
                let (k, b) = optimize_schedule(&p, self.planner.as_dyn(), &search).map_err(|e| e.to_string())?;
                Ok((alpha, b.pv_bound, k_avg_f64(k)))
            })
            .collect()
    }

    /// `(rate, lower, upper, fbl_upper)` for an estimate whose estimated
    /// capacity is `cap_bits`, with `k` co-scheduled users.
    pub fn outage_points(&self, k: u32, cap_bits: f64, rate_min: f64, rate_max: f64, n: u32) -> Result<Vec<[f64; 4]>, String> {
        if self.params.csi_mode.is_ideal() {
            return Err("outage bounds need estimated CSI".into());
        }
        if !(rate_min > 0.0 && rate_max >= rate_min) {
            return Err("need 0 < rate_min <= rate_max".into());
        }
        let budget = derive_budget(&self.params, k).map_err(|e| e.to_string())?;
        let mu = cap_bits.exp2() - 1.0;
        let inf = EstimateStats::new(mu, &budget, false);
        let fin = EstimateStats::new(mu, &budget, true);
        (0..n)
            .map(|i| {
                let r = if n == 1 { rate_min } else { rate_min + (rate_max - rate_min) * i as f64 / (n - 1) as f64 };
                let e = |v: Result<f64, BoundError>| v.map_err(|e| e.to_string());
                Ok([r, e(pout_lower(&inf, r))?, e(pout_upper(&inf, r))?, e(fbl_error_upper(&fin, r))?])
            })
            .collect()
    }
}

#[wasm_bindgen]
impl Scenario {
    #[wasm_bindgen(constructor)]
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_antennas: u32,
        n_users_total: u32,
        n_symbols: u32,
        p_total_db: f64,
        p_uplink_db: f64,
        n_train: u32,
        deadline: u32,
        csi: &str,
    ) -> Result<Scenario, JsError> {
        Self::build(n_antennas, n_users_total, n_symbols, p_total_db, p_uplink_db, n_train, deadline, csi)
            .map_err(|e| JsError::new(&e))
    }

    /// Flat `[k_avg, expected_service, ...]`.
    #[wasm_bindgen(js_name = serviceCurve)]
    pub fn service_curve(&self) -> Vec<f64> {
        self.service_points().into_iter().flat_map(|(k, e)| [k, e]).collect()
    }

    /// Flat `[alpha, pv_bound, k_avg, ...]`.
    #[wasm_bindgen(js_name = delayCurve)]
    pub fn delay_curve(&self, alpha_min: f64, alpha_max: f64, n: u32) -> Result<Vec<f64>, JsError> {
        self.delay_points(alpha_min, alpha_max, n)
            .map(|v| v.into_iter().flat_map(|(a, p, k)| [a, p, k]).collect())
            .map_err(|e| JsError::new(&e))
    }

    /// Flat `[rate, lower, upper, fbl_upper, ...]`.
    #[wasm_bindgen(js_name = outageCurves)]
    pub fn outage_curves(&self, k: u32, cap_bits: f64, rate_min: f64, rate_max: f64, n: u32) -> Result<Vec<f64>, JsError> {
        self.outage_points(k, cap_bits, rate_min, rate_max, n)
            .map(|v| v.into_iter().flatten().collect())
            .map_err(|e| JsError::new(&e))
    }
}
