//! BS power accounting: hardware power per architecture, RF transmit power
//! and the active/silent total.

use serde::{Deserialize, Serialize};

use crate::analog::Architecture;
use crate::error::{invalid, Error, Result};
use crate::linalg::CVector;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Hardware constants of one BS. All powers in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HardwareProfile {
    pub p_ps: f64,
    pub p_dac: f64,
    pub p_rf: f64,
    /// Power-supply / cooling loss factor, in `[0, 1)`.
    pub loss_factor: f64,
    /// Power-amplifier efficiency, in `(0, 1]`.
    pub pa_efficiency: f64,
    /// Fraction of hardware power drawn while silent, in `[0, 1]`.
    pub silent_scalar: f64,
    /// Per-BS RF transmit power cap.
    pub p_max: f64,
    /// Load-balancing weight in the network objective.
    pub weight: f64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        Self::table1()
    }
}

impl HardwareProfile {
    /// Reference hardware constants: 40 mW phase shifters, 200 mW DACs,
    /// 40 mW RF chains, 55 dBm power cap, PA efficiency 0.3, 15 % loss.
    pub fn table1() -> Self {
        Self {
            p_ps: 0.040,
            p_dac: 0.200,
            p_rf: 0.040,
            loss_factor: 0.15,
            pa_efficiency: 0.3,
            silent_scalar: 0.5,
            p_max: dbm_to_watts(55.0),
            weight: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.p_ps, self.p_dac, self.p_rf, self.p_max]
            .iter()
            .any(|p| !(*p >= 0.0))
        {
            return Err(invalid("hardware powers must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.loss_factor) {
            return Err(invalid("loss_factor must lie in [0, 1)"));
        }
        if !(self.pa_efficiency > 0.0 && self.pa_efficiency <= 1.0) {
            return Err(invalid("pa_efficiency must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.silent_scalar) {
            return Err(invalid("silent_scalar must lie in [0, 1]"));
        }
        if !(self.weight > 0.0) {
            return Err(invalid("weight must be > 0"));
        }
        Ok(())
    }

    /// `1 / (eta (1 - Delta))`: watts drawn per radiated watt.
    pub fn eta_prime(&self) -> f64 {
        1.0 / (self.pa_efficiency * (1.0 - self.loss_factor))
    }
}

/// Phase shifters needed by an architecture.
pub fn ps_count(architecture: Architecture, n_antennas: usize, rf_chains: usize) -> usize {
    match architecture {
        Architecture::Fdp => 0,
        Architecture::Fhp => rf_chains * n_antennas,
        Architecture::Php => n_antennas,
    }
}

/// Hardware power `(N_PS P_PS + L (P_DAC + P_RF)) / (1 - Delta)`.
pub fn hw_power(
    architecture: Architecture,
    n_antennas: usize,
    rf_chains: usize,
    profile: &HardwareProfile,
) -> f64 {
    let nps = ps_count(architecture, n_antennas, rf_chains) as f64;
    (nps * profile.p_ps + rf_chains as f64 * (profile.p_dac + profile.p_rf))
        / (1.0 - profile.loss_factor)
}

/// RF transmit power `sum_k ||w_k||^2` of one BS.
pub fn tx_power(precoders: &[CVector]) -> f64 {
    precoders.iter().map(|w| w.norm_squared()).sum()
}

/// Total BS power: `eta' p_tx + P_hw` when active, `a P_hw` when silent.
pub fn bs_power(
    p_tx: f64,
    active: bool,
    architecture: Architecture,
    n_antennas: usize,
    rf_chains: usize,
    profile: &HardwareProfile,
) -> Result<f64> {
    let p_hw = hw_power(architecture, n_antennas, rf_chains, profile);
    total_power(p_tx, active, p_hw, profile)
}

/// [`bs_power`] with a precomputed hardware power.
pub fn total_power(p_tx: f64, active: bool, p_hw: f64, profile: &HardwareProfile) -> Result<f64> {
    if active {
        Ok(profile.eta_prime() * p_tx + p_hw)
    } else if p_tx > 0.0 {
        Err(Error::ContractViolation(format!(
            "silent BS cannot transmit ({p_tx} W)"
        )))
    } else {
        Ok(profile.silent_scalar * p_hw)
    }
}

/// Hardware description of one BS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub architecture: Architecture,
    pub n_antennas: usize,
    pub rf_chains: usize,
    pub profile: HardwareProfile,
}

impl BaseStation {
    pub fn new(
        architecture: Architecture,
        n_antennas: usize,
        rf_chains: usize,
        profile: HardwareProfile,
    ) -> Result<Self> {
        architecture.check(n_antennas, rf_chains)?;
        profile.validate()?;
        Ok(Self {
            architecture,
            n_antennas,
            rf_chains,
            profile,
        })
    }

    pub fn hw_power(&self) -> f64 {
        hw_power(
            self.architecture,
            self.n_antennas,
            self.rf_chains,
            &self.profile,
        )
    }

    pub fn total_power(&self, p_tx: f64, active: bool) -> Result<f64> {
        total_power(p_tx, active, self.hw_power(), &self.profile)
    }

    /// Slope of the convex envelope of the total-power curve over
    /// `[0, p_ref]`: `(1 - a) P_hw / p_ref + eta'`.
    pub fn envelope_slope(&self, p_ref: f64) -> f64 {
        (1.0 - self.profile.silent_scalar) * self.hw_power() / p_ref + self.profile.eta_prime()
    }
}

/// `sum_m b_m P_m` over a network given per-BS transmit powers and modes.
pub fn network_power(stations: &[BaseStation], p_tx: &[f64], active: &[bool]) -> Result<f64> {
    stations
        .iter()
        .zip(p_tx)
        .zip(active)
        .map(|((bs, &p), &a)| Ok(bs.profile.weight * bs.total_power(p, a)?))
        .sum()
}
