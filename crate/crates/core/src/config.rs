//! Scenario parameters and the integer bookkeeping derived from them:
//! data blocklength per slot, the split of a superframe into two slot
//! groups when `K_tot / T` is fractional, and the split of the deadline
//! into whole superframes.
//!
//! Probabilities produced here are exact rationals. Convert with
//! [`ratio_to_f64`] at the point of use.

use num_rational::Ratio;
use thiserror::Error;

/// Exact probability or fraction with `u64` numerator and denominator.
pub type Prob = Ratio<u64>;

/// Converts an exact ratio to the nearest `f64`.
pub fn ratio_to_f64(r: Prob) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// How the transmitter learns the channel and how coding errors are modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CsiMode {
    /// Perfect CSI, capacity-achieving codes, no training overhead.
    Ideal,
    /// MMSE-estimated CSI, outage treated as infinite-blocklength.
    ImperfectCsi,
    /// MMSE-estimated CSI combined with the finite-blocklength normal approximation.
    ImperfectCsiFiniteBlocklength,
}

impl CsiMode {
    pub fn is_ideal(self) -> bool {
        matches!(self, CsiMode::Ideal)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("{k} scheduled users exceed {n_antennas} antennas")]
    KExceedsAntennas { k: u32, n_antennas: u32 },
    #[error("training overhead {overhead} leaves no data symbols in a {n_slot} symbol slot")]
    TrainingOverheadExceedsSlot { overhead: u64, n_slot: u32 },
    #[error("superframe of {t} slots needs {k_a} users per slot but only {n_antennas} antennas are available")]
    InfeasibleSchedule { t: u32, k_a: u32, n_antennas: u32 },
    #[error("deadline {w} is shorter than the superframe length {t}")]
    DeadlineShorterThanSuperframe { w: u32, t: u32 },
}

/// Static scenario constants. Powers are linear (not dB).
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    pub n_antennas: u32,
    pub n_users_total: u32,
    pub superframe_len: u32,
    pub n_slot_symbols: u32,
    pub n_ul_train: u32,
    pub n_dl_train: u32,
    pub p_total: f64,
    pub p_uplink: f64,
    pub arrival_rate: f64,
    pub deadline: u32,
    pub csi_mode: CsiMode,
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(field: &'static str, reason: &str) -> ConfigError {
            ConfigError::InvalidParameter { field, reason: reason.to_string() }
        }
        if self.n_antennas == 0 {
            return Err(bad("n_antennas", "must be at least 1"));
        }
        if self.n_users_total == 0 {
            return Err(bad("n_users_total", "must be at least 1"));
        }
        if self.superframe_len == 0 {
            return Err(bad("superframe_len", "must be at least 1"));
        }
        if self.n_slot_symbols == 0 {
            return Err(bad("n_slot_symbols", "must be at least 1"));
        }
        if !(self.p_total.is_finite() && self.p_total > 0.0) {
            return Err(bad("p_total", "must be positive and finite"));
        }
        if !self.csi_mode.is_ideal() && !(self.p_uplink.is_finite() && self.p_uplink > 0.0) {
            return Err(bad("p_uplink", "must be positive and finite when CSI is estimated"));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(bad("arrival_rate", "must be non-negative and finite"));
        }
        Ok(())
    }

    /// Average users per slot `K_tot / T` as an exact ratio.
    pub fn k_avg(&self) -> Prob {
        Ratio::new(self.n_users_total as u64, self.superframe_len as u64)
    }

    /// Estimation error variance `1 / (1 + P_ul n_t)`; zero with perfect CSI.
    pub fn sigma_e_sq(&self) -> f64 {
        if self.csi_mode.is_ideal() {
            0.0
        } else {
            1.0 / (1.0 + self.p_uplink * self.n_ul_train as f64)
        }
    }
}

/// Per-slot quantities once the number of co-scheduled users is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedBudget {
    pub k_sched: u32,
    pub n_data: u32,
    /// `N_t - K + 1`.
    pub m: u32,
    /// Equal power split `P / K`.
    pub p_per_user: f64,
    pub sigma_e_sq: f64,
}

pub fn derive_budget(params: &SystemParams, k_sched: u32) -> Result<DerivedBudget, ConfigError> {
    if k_sched == 0 {
        return Err(ConfigError::InvalidParameter {
            field: "k_sched",
            reason: "must be at least 1".into(),
        });
    }
    if k_sched > params.n_antennas {
        return Err(ConfigError::KExceedsAntennas { k: k_sched, n_antennas: params.n_antennas });
    }
    let n_data = if params.csi_mode.is_ideal() {
        params.n_slot_symbols as u64
    } else {
        let overhead = k_sched as u64 * (params.n_ul_train as u64 + params.n_dl_train as u64);
        if overhead >= params.n_slot_symbols as u64 {
            return Err(ConfigError::TrainingOverheadExceedsSlot {
                overhead,
                n_slot: params.n_slot_symbols,
            });
        }
        params.n_slot_symbols as u64 - overhead
    };
    Ok(DerivedBudget {
        k_sched,
        n_data: n_data as u32,
        m: params.n_antennas - k_sched + 1,
        p_per_user: params.p_total / k_sched as f64,
        sigma_e_sq: params.sigma_e_sq(),
    })
}

/// Two slot groups inside one superframe: `t_a` slots serving `k_a` users and
/// `t_b` slots serving `k_b` users. When `K_tot / T` is an integer the split is
/// degenerate with `t_b = 0` and `p_a = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSplit {
    pub k_a: u32,
    pub k_b: u32,
    pub t_a: u32,
    pub t_b: u32,
    /// Probability that the tagged user lands in an A slot.
    pub p_a: Prob,
    pub p_b: Prob,
}

impl GroupSplit {
    pub fn is_degenerate(&self) -> bool {
        self.t_b == 0
    }
}

pub fn superframe_partition(params: &SystemParams) -> Result<GroupSplit, ConfigError> {
    let k_tot = params.n_users_total;
    let t = params.superframe_len;
    if t == 0 || k_tot == 0 {
        return Err(ConfigError::InvalidParameter {
            field: "superframe_len",
            reason: "superframe length and user count must be positive".into(),
        });
    }
    let k_b = k_tot / t;
    let rem = k_tot % t;
    let k_a = if rem == 0 { k_b } else { k_b + 1 };
    if k_a > params.n_antennas {
        return Err(ConfigError::InfeasibleSchedule { t, k_a, n_antennas: params.n_antennas });
    }
    if k_b == 0 {
        // Fewer users than slots: some slots would stay empty.
        return Err(ConfigError::InvalidParameter {
            field: "superframe_len",
            reason: format!("{t} slots exceed the {k_tot} users to schedule"),
        });
    }
    let (t_a, t_b) = if rem == 0 { (t, 0) } else { (rem, t - rem) };
    debug_assert_eq!(t_a as u64 * k_a as u64 + t_b as u64 * k_b as u64, k_tot as u64);
    let p_a = Ratio::new(k_a as u64 * t_a as u64, k_tot as u64);
    Ok(GroupSplit { k_a, k_b, t_a, t_b, p_a, p_b: Ratio::from_integer(1) - p_a })
}

/// Splits the deadline into whole superframes. A bit arriving at a uniformly
/// random slot position sees `n_frames_hi` superframes with probability
/// `p_group1` and `n_frames_lo` with probability `p_group2 = (w mod T) / T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeadlineSplit {
    pub n_frames_hi: u32,
    pub n_frames_lo: u32,
    pub p_group2: Prob,
    pub p_group1: Prob,
}

pub fn deadline_partition(w: u32, t: u32) -> Result<DeadlineSplit, ConfigError> {
    if t == 0 {
        return Err(ConfigError::InvalidParameter {
            field: "superframe_len",
            reason: "must be at least 1".into(),
        });
    }
    if w < t {
        return Err(ConfigError::DeadlineShorterThanSuperframe { w, t });
    }
    let lo = w / t;
    let hi = w.div_ceil(t);
    let p2 = Ratio::new((w % t) as u64, t as u64);
    Ok(DeadlineSplit {
        n_frames_hi: hi,
        n_frames_lo: lo,
        p_group2: p2,
        p_group1: Ratio::from_integer(1) - p2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(csi: CsiMode) -> SystemParams {
        SystemParams {
            n_antennas: 8,
            n_users_total: 120,
            superframe_len: 40,
            n_slot_symbols: 400,
            n_ul_train: 10,
            n_dl_train: 10,
            p_total: 100.0,
            p_uplink: 10f64.powf(1.5),
            arrival_rate: 0.0,
            deadline: 120,
            csi_mode: csi,
        }
    }

    #[test]
    fn budget_examples() {
        let p = params(CsiMode::ImperfectCsi);
        let b5 = derive_budget(&p, 5).unwrap();
        assert_eq!(b5.n_data, 300);
        assert_eq!(b5.m, 4);
        assert!((b5.p_per_user * 5.0 - 100.0).abs() < 1e-12);
        assert_eq!(derive_budget(&p, 1).unwrap().n_data, 380);
        assert!((b5.sigma_e_sq - 1.0 / (1.0 + p.p_uplink * 10.0)).abs() < 1e-15);
        assert!((b5.sigma_e_sq - 3.158e-3).abs() < 1e-5);
        let ideal = derive_budget(&params(CsiMode::Ideal), 5).unwrap();
        assert_eq!(ideal.n_data, 400);
        assert_eq!(ideal.sigma_e_sq, 0.0);
    }

    #[test]
    fn budget_errors() {
        let mut p = params(CsiMode::ImperfectCsi);
        assert!(matches!(derive_budget(&p, 9), Err(ConfigError::KExceedsAntennas { .. })));
        p.n_slot_symbols = 100;
        assert!(matches!(
            derive_budget(&p, 5),
            Err(ConfigError::TrainingOverheadExceedsSlot { .. })
        ));
    }

    #[test]
    fn partition_examples() {
        let mut p = params(CsiMode::Ideal);
        let s = superframe_partition(&p).unwrap();
        assert_eq!((s.k_a, s.k_b, s.t_b), (3, 3, 0));
        assert_eq!(s.p_a, Ratio::from_integer(1));

        p.superframe_len = 36;
        let s = superframe_partition(&p).unwrap();
        assert_eq!((s.k_a, s.k_b, s.t_a, s.t_b), (4, 3, 12, 24));
        assert_eq!(s.p_a, Ratio::new(2, 5));
        assert_eq!(s.p_b, Ratio::new(3, 5));

        p.n_users_total = 121;
        p.superframe_len = 40;
        let s = superframe_partition(&p).unwrap();
        assert_eq!((s.k_a, s.k_b, s.t_a, s.t_b), (4, 3, 1, 39));

        p.n_users_total = 120;
        p.superframe_len = 10;
        assert!(matches!(superframe_partition(&p), Err(ConfigError::InfeasibleSchedule { .. })));
    }

    #[test]
    fn deadline_examples() {
        let d = deadline_partition(120, 40).unwrap();
        assert_eq!((d.n_frames_hi, d.n_frames_lo), (3, 3));
        assert_eq!(d.p_group2, Ratio::from_integer(0));
        let d = deadline_partition(120, 36).unwrap();
        assert_eq!((d.n_frames_hi, d.n_frames_lo), (4, 3));
        assert_eq!(d.p_group2, Ratio::new(1, 3));
        assert_eq!(d.p_group1, Ratio::new(2, 3));
        assert!(matches!(
            deadline_partition(30, 40),
            Err(ConfigError::DeadlineShorterThanSuperframe { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_conserves_users(k_tot in 1u32..500, t in 1u32..200, n_ant in 1u32..16) {
            let mut p = params(CsiMode::Ideal);
            p.n_users_total = k_tot;
            p.superframe_len = t;
            p.n_antennas = n_ant;
            if let Ok(s) = superframe_partition(&p) {
                prop_assert_eq!(s.t_a * s.k_a + s.t_b * s.k_b, k_tot);
                prop_assert_eq!(s.t_a + s.t_b, t);
                prop_assert_eq!(s.p_a + s.p_b, Ratio::from_integer(1));
                prop_assert!(s.k_a - s.k_b <= 1);
            }
        }

        #[test]
        fn deadline_probabilities_sum_to_one(w in 1u32..1000, t in 1u32..200) {
            if let Ok(d) = deadline_partition(w, t) {
                prop_assert_eq!(d.p_group1 + d.p_group2, Ratio::from_integer(1));
                if w % t == 0 {
                    prop_assert_eq!(d.p_group2, Ratio::from_integer(0));
                }
            }
        }

        #[test]
        fn n_data_strictly_decreasing(k in 1u32..7) {
            let p = params(CsiMode::ImperfectCsi);
            let a = derive_budget(&p, k).unwrap().n_data;
            let b = derive_budget(&p, k + 1).unwrap().n_data;
            prop_assert!(b < a);
        }
    }
}
