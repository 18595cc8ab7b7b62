//! Frequency-selective operation: one analog precoder per BS shared by all
//! subcarriers, independent digital solves per subcarrier and the energy
//! efficiency of the result.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analog::{egt_ofdm, AnalogPrecoder, OfdmAnalogDiagnostics};
use crate::channel::OfdmChannelSet;
use crate::digital::{evaluate_rates, SolveStatus};
use crate::error::{invalid, Error, Result};
use crate::linalg::CVector;
use crate::power::BaseStation;
use crate::silence::{run_mode, AlgoResult, Instance, Mode, SilenceParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OfdmSettings {
    pub n_subcarriers: usize,
    /// Carried as metadata; the efficiency metric is bandwidth-free.
    pub subcarrier_bandwidth_hz: f64,
    /// Charge hardware power on every subcarrier instead of once per BS.
    pub hardware_per_subcarrier: bool,
}

impl Default for OfdmSettings {
    fn default() -> Self {
        Self {
            n_subcarriers: 64,
            subcarrier_bandwidth_hz: 3e6,
            hardware_per_subcarrier: false,
        }
    }
}

impl OfdmSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return Err(invalid("n_subcarriers must be >= 1"));
        }
        if !(self.subcarrier_bandwidth_hz > 0.0) {
            return Err(invalid("subcarrier_bandwidth_hz must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct OfdmResult {
    pub analog: Vec<AnalogPrecoder>,
    pub diagnostics: OfdmAnalogDiagnostics,
    pub per_subcarrier: Vec<AlgoResult>,
    /// Achieved rates `[n_s][k]` (zero on unsolved subcarriers).
    pub rates: Vec<Vec<f64>>,
    /// RF transmit power per BS summed over subcarriers.
    pub per_bs_tx: Vec<f64>,
    /// A BS is active when it transmits on at least one subcarrier.
    pub bs_active: Vec<bool>,
    /// Weighted total power per BS.
    pub bs_power: Vec<f64>,
    pub sum_spectral_efficiency: f64,
    pub sum_power: f64,
    pub energy_efficiency: f64,
}

impl OfdmResult {
    pub fn feasible_subcarriers(&self) -> usize {
        self.per_subcarrier
            .iter()
            .filter(|r| r.is_feasible())
            .count()
    }

    /// `n_s, status, p_tx, active pattern, rate per user` as CSV.
    pub fn write_subcarrier_table<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n_users = self.rates.first().map_or(0, Vec::len);
        let mut header = vec![
            "subcarrier".to_string(),
            "feasible".into(),
            "status".into(),
            "p_tx_w".into(),
            "pattern".into(),
        ];
        header.extend((0..n_users).map(|k| format!("rate_{k}")));
        w.write_record(&header)?;
        for (ns, (r, rates)) in self.per_subcarrier.iter().zip(&self.rates).enumerate() {
            let pattern: String = r
                .pattern
                .iter()
                .map(|&z| if z { '1' } else { '0' })
                .collect();
            let status = serde_json::to_value(r.status)?
                .as_str()
                .unwrap_or("")
                .to_string();
            let mut row = vec![
                ns.to_string(),
                r.is_feasible().to_string(),
                status,
                format!("{:e}", r.p_tx_star),
                pattern,
            ];
            row.extend(rates.iter().map(|g| format!("{g}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum spectral efficiency over sum power.
pub fn energy_efficiency(sum_spectral_efficiency: f64, sum_power: f64) -> Result<f64> {
    if !(sum_power > 0.0) {
        return Err(Error::InvalidState(format!(
            "energy efficiency needs positive power, got {sum_power}"
        )));
    }
    Ok(sum_spectral_efficiency / sum_power)
}

/// Sum in ascending order, so the result does not depend on the order of
/// the subcarriers.
fn ordered_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Station seen by one subcarrier: the cap split evenly, and hardware
/// power split evenly unless it is charged per subcarrier.
fn subcarrier_station(bs: &BaseStation, settings: &OfdmSettings) -> BaseStation {
    let ns = settings.n_subcarriers as f64;
    let mut out = *bs;
    out.profile.p_max = bs.profile.p_max / ns;
    if !settings.hardware_per_subcarrier {
        out.profile.p_ps = bs.profile.p_ps / ns;
        out.profile.p_dac = bs.profile.p_dac / ns;
        out.profile.p_rf = bs.profile.p_rf / ns;
    }
    out
}

/// Shared analog precoders from the summed channels.
pub fn build_shared_analog(
    set: &OfdmChannelSet,
    stations: &[BaseStation],
) -> Result<(Vec<AnalogPrecoder>, OfdmAnalogDiagnostics)> {
    let mut diag = OfdmAnalogDiagnostics::default();
    let mut analog = Vec::with_capacity(stations.len());
    for (m, bs) in stations.iter().enumerate() {
        let per_user: Vec<Vec<CVector>> = (0..set.n_users())
            .map(|k| set.channels[k][m].clone())
            .collect();
        let (r, bad) = egt_ofdm(&per_user, bs.architecture, bs.n_antennas, bs.rf_chains)?;
        diag.degenerate_pairs
            .extend(bad.into_iter().map(|k| (k, m)));
        analog.push(r);
    }
    Ok((analog, diag))
}

/// Solves every subcarrier independently with the shared analog stage.
/// `targets` is indexed `[n_s][k]`.
pub fn solve_ofdm(
    set: &OfdmChannelSet,
    stations: &[BaseStation],
    targets: &[Vec<f64>],
    noise: &[f64],
    mode: Mode,
    params: &SilenceParams,
    settings: &OfdmSettings,
) -> Result<OfdmResult> {
    settings.validate()?;
    let ns_count = set.n_subcarriers;
    if ns_count != settings.n_subcarriers {
        return Err(invalid(format!(
            "channel set has {ns_count} subcarriers, settings ask for {}",
            settings.n_subcarriers
        )));
    }
    if targets.len() != ns_count {
        return Err(invalid("need one target vector per subcarrier"));
    }
    if stations.len() != set.n_bs() {
        return Err(invalid("need one station per BS"));
    }
    let (analog, diagnostics) = build_shared_analog(set, stations)?;
    let sc_stations: Vec<BaseStation> = stations
        .iter()
        .map(|s| subcarrier_station(s, settings))
        .collect();

    let nm = stations.len();
    let mut per_subcarrier = Vec::with_capacity(ns_count);
    let mut rates = Vec::with_capacity(ns_count);
    for (ns, tau) in targets.iter().enumerate() {
        let channels = set.subcarrier(ns);
        let inst = Instance {
            channels: &channels,
            analog: &analog,
            stations: &sc_stations,
            targets: tau,
            noise,
        };
        let r = run_mode(mode, &inst, params)?;
        let achieved = if r.is_feasible() {
            evaluate_rates(&r.precoders.transmit(&analog), &channels, noise)
        } else {
            if r.status == SolveStatus::NumericalFailure {
                log::debug!("subcarrier {ns}: numerical failure");
            }
            vec![0.0; set.n_users()]
        };
        rates.push(achieved);
        per_subcarrier.push(r);
    }

    let mut tx_on = vec![false; nm];
    for r in per_subcarrier.iter().filter(|r| r.is_feasible()) {
        for m in 0..nm {
            tx_on[m] |= r.pattern[m] && r.per_bs_tx[m] > params.silent_threshold;
        }
    }
    let per_bs_tx: Vec<f64> = (0..nm)
        .map(|m| {
            ordered_sum(
                per_subcarrier
                    .iter()
                    .filter(|r| r.is_feasible())
                    .map(|r| r.per_bs_tx[m]),
            )
        })
        .collect();
    let bs_power: Vec<f64> = if settings.hardware_per_subcarrier {
        (0..nm)
            .map(|m| {
                let bs = &stations[m];
                let per_sc = ordered_sum(per_subcarrier.iter().map(|r| {
                    let p = if r.is_feasible() { r.per_bs_tx[m] } else { 0.0 };
                    let on = r.is_feasible() && r.pattern[m] && p > params.silent_threshold;
                    if on {
                        bs.profile.eta_prime() * p + bs.hw_power()
                    } else {
                        bs.profile.silent_scalar * bs.hw_power()
                    }
                }));
                bs.profile.weight * per_sc
            })
            .collect()
    } else {
        (0..nm)
            .map(|m| {
                let bs = &stations[m];
                let p = if tx_on[m] {
                    bs.profile.eta_prime() * per_bs_tx[m] + bs.hw_power()
                } else {
                    bs.profile.silent_scalar * bs.hw_power()
                };
                bs.profile.weight * p
            })
            .collect()
    };
    let sum_spectral_efficiency = ordered_sum(rates.iter().flatten().copied());
    let sum_power: f64 = bs_power.iter().sum();
    let energy_efficiency = energy_efficiency(sum_spectral_efficiency, sum_power)?;
    Ok(OfdmResult {
        analog,
        diagnostics,
        per_subcarrier,
        rates,
        per_bs_tx,
        bs_active: tx_on,
        bs_power,
        sum_spectral_efficiency,
        sum_power,
        energy_efficiency,
    })
}
