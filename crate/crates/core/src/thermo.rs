//! Information-thermodynamic accounting for kernel change.
//!
//! Acquiring `δI` nats of mutual information costs at least `k_B T · δI` of
//! work. Information lost along a trajectory contributes nothing to the
//! acquisition bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infogeom::InfoValue;
use crate::kernelspace::{hs_distance, KernelMatrix};
use crate::linalg::CompensatedSum;

/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Slack on the power comparison in [`speed_limit_check`].
pub const POWER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermoConfig {
    /// `k_B T` in the caller's energy units.
    pub kbt: f64,
}

impl Default for ThermoConfig {
    fn default() -> Self {
        Self { kbt: 1.0 }
    }
}

impl ThermoConfig {
    pub fn new(kbt: f64) -> Result<Self> {
        let c = Self { kbt };
        c.validate()?;
        Ok(c)
    }

    /// `k_B T` in joules at `kelvin`.
    pub fn physical(kelvin: f64) -> Result<Self> {
        Self::new(BOLTZMANN * kelvin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kbt.is_finite() && self.kbt > 0.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("kBT = {} must be > 0", self.kbt)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerStep {
    pub delta_i: f64,
    pub w_min: f64,
    pub cumulative_w_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoLedger {
    pub kbt: f64,
    pub steps: Vec<LedgerStep>,
    pub cumulative_w_min: f64,
    pub cumulative_delta_i_pos: f64,
}

impl ThermoLedger {
    /// Ledger of two consecutive segments (the second starting where the
    /// first ended).
    pub fn concat(&self, next: &ThermoLedger) -> Result<ThermoLedger> {
        if self.kbt != next.kbt {
            return Err(Error::Parameter("ledgers use different kBT".into()));
        }
        let mut w = CompensatedSum::default();
        let mut d = CompensatedSum::default();
        let mut steps = Vec::with_capacity(self.steps.len() + next.steps.len());
        for s in self.steps.iter().chain(&next.steps) {
            w.add(s.w_min);
            d.add(s.delta_i.max(0.0));
            steps.push(LedgerStep {
                cumulative_w_min: w.value(),
                ..*s
            });
        }
        Ok(ThermoLedger {
            kbt: self.kbt,
            steps,
            cumulative_w_min: w.value(),
            cumulative_delta_i_pos: d.value(),
        })
    }
}

/// Per-step Landauer lower bounds along an information trajectory.
pub fn landauer_ledger(info: &[InfoValue], cfg: &ThermoConfig) -> Result<ThermoLedger> {
    cfg.validate()?;
    if info.len() < 2 {
        return Err(Error::Input(format!(
            "information trajectory needs at least 2 points, got {}",
            info.len()
        )));
    }
    let mut w = CompensatedSum::default();
    let mut d = CompensatedSum::default();
    let steps = info
        .windows(2)
        .map(|pair| {
            let delta_i = pair[1].nats() - pair[0].nats();
            let gained = delta_i.max(0.0);
            let w_min = cfg.kbt * gained;
            w.add(w_min);
            d.add(gained);
            LedgerStep {
                delta_i,
                w_min,
                cumulative_w_min: w.value(),
            }
        })
        .collect();
    Ok(ThermoLedger {
        kbt: cfg.kbt,
        steps,
        cumulative_w_min: w.value(),
        cumulative_delta_i_pos: d.value(),
    })
}

/// Upper bound on work extractable from `info` nats of correlation:
/// `ΔF + k_B T · I`.
pub fn extraction_bound(delta_f: f64, info: InfoValue, cfg: &ThermoConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(delta_f + cfg.kbt * info.nats())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimitStep {
    pub hs_speed: f64,
    pub info_rate: f64,
    pub required_power: f64,
    pub supplied_power: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimitReport {
    pub steps: Vec<SpeedLimitStep>,
}

impl SpeedLimitReport {
    pub fn all_satisfied(&self) -> bool {
        self.steps.iter().all(|s| s.satisfied)
    }
}

/// Check `k_B T · max(0, δI) ≤ supplied power` at every unit step.
///
/// `kernels` and `info` hold one entry per epoch; `supplied_power` holds one
/// entry per step between epochs. The Hilbert–Schmidt speed of the kernel is
/// reported alongside as a diagnostic.
pub fn speed_limit_check(
    kernels: &[KernelMatrix],
    info: &[InfoValue],
    supplied_power: &[f64],
    cfg: &ThermoConfig,
) -> Result<SpeedLimitReport> {
    cfg.validate()?;
    if kernels.len() != info.len() || kernels.len() < 2 || supplied_power.len() + 1 != kernels.len() {
        return Err(Error::Shape(format!(
            "need N >= 2 kernels, N info values and N-1 power entries; got {}, {}, {}",
            kernels.len(),
            info.len(),
            supplied_power.len()
        )));
    }
    let mut steps = Vec::with_capacity(supplied_power.len());
    for t in 0..supplied_power.len() {
        let hs_speed = hs_distance(&kernels[t], &kernels[t + 1])?;
        let info_rate = (info[t + 1].nats() - info[t].nats()).max(0.0);
        let required_power = cfg.kbt * info_rate;
        let supplied = supplied_power[t];
        steps.push(SpeedLimitStep {
            hs_speed,
            info_rate,
            required_power,
            supplied_power: supplied,
            satisfied: supplied >= required_power - POWER_TOL,
        });
    }
    Ok(SpeedLimitReport { steps })
}
