//! Equal-gain analog precoders for fully- and partially-connected hybrid
//! arrays, plus beam-pattern evaluation.
//!
//! Every BS builds one column (FHP) or one subarray (PHP) per user, co-phased
//! with that user's channel. The global phase is fixed to zero.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::channel::{array_response, ChannelSet, OfdmChannelSet};
use crate::error::{invalid, Result};
use crate::linalg::{canonical_sum, cis, gain, CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// Fully digital: one RF chain per antenna.
    Fdp,
    /// Fully-connected hybrid.
    Fhp,
    /// Partially-connected hybrid with disjoint subarrays.
    Php,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Fdp, Architecture::Fhp, Architecture::Php];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Fdp => "fdp",
            Architecture::Fhp => "fhp",
            Architecture::Php => "php",
        }
    }

    /// Checks the antenna / RF-chain pairing this architecture needs.
    pub fn check(self, n_antennas: usize, rf_chains: usize) -> Result<()> {
        if n_antennas == 0 || rf_chains == 0 {
            return Err(invalid("antenna and RF-chain counts must be >= 1"));
        }
        match self {
            Architecture::Fdp if n_antennas != rf_chains => Err(invalid(format!(
                "FDP needs N = L, got N={n_antennas}, L={rf_chains}"
            ))),
            Architecture::Php if !n_antennas.is_multiple_of(rf_chains) => Err(invalid(format!(
                "PHP needs N/L integer, got N={n_antennas}, L={rf_chains}"
            ))),
            Architecture::Fhp if rf_chains > n_antennas => Err(invalid(format!(
                "FHP needs L <= N, got N={n_antennas}, L={rf_chains}"
            ))),
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fdp" => Ok(Architecture::Fdp),
            "fhp" => Ok(Architecture::Fhp),
            "php" => Ok(Architecture::Php),
            other => Err(invalid(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Analog precoder `R_m` (N x L) of one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrecoder {
    pub matrix: CMatrix,
    pub architecture: Architecture,
}

impl AnalogPrecoder {
    pub fn n_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rf_chains(&self) -> usize {
        self.matrix.ncols()
    }

    /// Effective channel `R^H h` seen by the digital stage.
    pub fn effective(&self, h: &CVector) -> CVector {
        self.matrix.ad_mul(h)
    }

    /// Gram matrix `R^H R`.
    pub fn gram(&self) -> CMatrix {
        self.matrix.ad_mul(&self.matrix)
    }

    /// Largest deviation from the architecture's structural constraints
    /// (constant modulus, block-diagonal support, identity).
    pub fn structure_error(&self) -> f64 {
        let (n, l) = self.matrix.shape();
        let mut worst = 0.0f64;
        match self.architecture {
            Architecture::Fdp => {
                for i in 0..n {
                    for j in 0..l {
                        let target = if i == j { 1.0 } else { 0.0 };
                        worst = worst.max((self.matrix[(i, j)] - C64::new(target, 0.0)).norm());
                    }
                }
            }
            Architecture::Fhp => {
                let modulus = 1.0 / ((n * l) as f64).sqrt();
                for v in self.matrix.iter() {
                    worst = worst.max((v.norm() - modulus).abs());
                }
            }
            Architecture::Php => {
                let modulus = 1.0 / (n as f64).sqrt();
                let sub = n / l;
                for i in 0..n {
                    for j in 0..l {
                        let v = self.matrix[(i, j)].norm();
                        if i / sub == j {
                            worst = worst.max((v - modulus).abs());
                        } else {
                            worst = worst.max(v);
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Phase of a channel entry; exact zeros map to phase zero.
fn phase(v: C64) -> f64 {
    if v.re == 0.0 && v.im == 0.0 {
        0.0
    } else {
        v.arg()
    }
}

fn check_users(n_users: usize, rf_chains: usize) -> Result<()> {
    if n_users > rf_chains {
        return Err(invalid(format!(
            "equal-gain analog precoding needs K <= L, got K={n_users}, L={rf_chains}"
        )));
    }
    Ok(())
}

fn check_lengths(channels: &[CVector], n: usize) -> Result<()> {
    if channels.iter().any(|h| h.len() != n) {
        return Err(invalid("channel length does not match antenna count"));
    }
    Ok(())
}

/// Fully-connected equal-gain precoder: column `k` co-phases user `k`'s
/// channel with entry modulus `1/sqrt(L N)`. Columns beyond `K` are filled
/// with equal zero phases.
pub fn egt_fhp(channels: &[CVector], rf_chains: usize) -> Result<AnalogPrecoder> {
    let n = channels
        .first()
        .map(|h| h.len())
        .ok_or_else(|| invalid("no user channels"))?;
    check_lengths(channels, n)?;
    check_users(channels.len(), rf_chains)?;
    Architecture::Fhp.check(n, rf_chains)?;
    let modulus = 1.0 / ((n * rf_chains) as f64).sqrt();
    let matrix = CMatrix::from_fn(n, rf_chains, |i, k| match channels.get(k) {
        Some(h) => cis(phase(h[i])) * modulus,
        None => C64::new(modulus, 0.0),
    });
    Ok(AnalogPrecoder {
        matrix,
        architecture: Architecture::Fhp,
    })
}

/// Partially-connected equal-gain precoder: subarray `k` (rows
/// `k N/L .. (k+1) N/L`) co-phases user `k`'s channel on that subarray with
/// modulus `1/sqrt(N)`; all other entries are exactly zero.
pub fn egt_php(
    channels: &[CVector],
    n_antennas: usize,
    rf_chains: usize,
) -> Result<AnalogPrecoder> {
    Architecture::Php.check(n_antennas, rf_chains)?;
    check_lengths(channels, n_antennas)?;
    check_users(channels.len(), rf_chains)?;
    let sub = n_antennas / rf_chains;
    let modulus = 1.0 / (n_antennas as f64).sqrt();
    let mut matrix = CMatrix::zeros(n_antennas, rf_chains);
    for k in 0..rf_chains {
        for i in k * sub..(k + 1) * sub {
            matrix[(i, k)] = match channels.get(k) {
                Some(h) => cis(phase(h[i])) * modulus,
                None => C64::new(modulus, 0.0),
            };
        }
    }
    Ok(AnalogPrecoder {
        matrix,
        architecture: Architecture::Php,
    })
}

pub fn fdp_identity(n_antennas: usize) -> AnalogPrecoder {
    AnalogPrecoder {
        matrix: CMatrix::identity(n_antennas, n_antennas),
        architecture: Architecture::Fdp,
    }
}

/// Builds the analog precoder of one BS from the channels of all users.
pub fn build(
    architecture: Architecture,
    channels: &[CVector],
    n_antennas: usize,
    rf_chains: usize,
) -> Result<AnalogPrecoder> {
    architecture.check(n_antennas, rf_chains)?;
    match architecture {
        Architecture::Fdp => {
            check_lengths(channels, n_antennas)?;
            Ok(fdp_identity(n_antennas))
        }
        Architecture::Fhp => egt_fhp(channels, rf_chains),
        Architecture::Php => egt_php(channels, n_antennas, rf_chains),
    }
}

/// Analog precoders of every BS for a narrow-band channel set.
pub fn build_all(
    architecture: Architecture,
    set: &ChannelSet,
    rf_chains: &[usize],
) -> Result<Vec<AnalogPrecoder>> {
    (0..set.n_bs())
        .map(|m| {
            let hs: Vec<CVector> = (0..set.n_users()).map(|k| set.h(k, m).clone()).collect();
            let n = hs.first().map_or(0, |h| h.len());
            build(architecture, &hs, n, rf_chains[m])
        })
        .collect()
}

/// Users whose summed channel cancelled exactly at some BS.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OfdmAnalogDiagnostics {
    /// `(user, bs)` pairs that fell back to the subcarrier-0 phases.
    pub degenerate_pairs: Vec<(usize, usize)>,
}

/// Summed channels below this fraction of `sum_{n_s} ||h[n_s]||` count as
/// cancelled.
pub const OFDM_CANCELLATION_TOL: f64 = 1e-9;

/// Analog precoder for one BS shared by all subcarriers, built from the
/// summed channels `sum_{n_s} h[n_s]`. When a user's summed channel
/// cancels (relative to the per-subcarrier norms) its strongest
/// subcarrier channel is used instead. Both the sum and the fallback are
/// independent of the subcarrier order.
pub fn egt_ofdm(
    per_user: &[Vec<CVector>],
    architecture: Architecture,
    n_antennas: usize,
    rf_chains: usize,
) -> Result<(AnalogPrecoder, Vec<usize>)> {
    let mut degenerate = Vec::new();
    let mut summed = Vec::with_capacity(per_user.len());
    for (k, hs) in per_user.iter().enumerate() {
        if hs.is_empty() {
            return Err(invalid("no subcarriers"));
        }
        let mut acc = canonical_sum(hs);
        let scale: f64 = hs.iter().map(|h| h.norm()).sum();
        if hs.len() > 1 && acc.norm() <= OFDM_CANCELLATION_TOL * scale {
            log::debug!("summed channel of user {k} cancels; using its strongest subcarrier");
            degenerate.push(k);
            acc = strongest(hs).clone();
        }
        summed.push(acc);
    }
    Ok((
        build(architecture, &summed, n_antennas, rf_chains)?,
        degenerate,
    ))
}

/// Largest-norm vector; exact ties go to the lexicographically largest
/// entries so the choice does not depend on the order.
fn strongest(hs: &[CVector]) -> &CVector {
    let key = |a: &CVector, b: &CVector| {
        a.norm_squared().total_cmp(&b.norm_squared()).then_with(|| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    };
    hs.iter().max_by(|a, b| key(a, b)).expect("nonempty")
}

/// OFDM analog precoders for every BS.
pub fn build_all_ofdm(
    architecture: Architecture,
    set: &OfdmChannelSet,
    rf_chains: &[usize],
) -> Result<(Vec<AnalogPrecoder>, OfdmAnalogDiagnostics)> {
    let mut diag = OfdmAnalogDiagnostics::default();
    let mut out = Vec::with_capacity(set.n_bs());
    for m in 0..set.n_bs() {
        let per_user: Vec<Vec<CVector>> = (0..set.n_users())
            .map(|k| set.channels[k][m].clone())
            .collect();
        let n = per_user
            .first()
            .and_then(|v| v.first())
            .map_or(0, |h| h.len());
        let (r, bad) = egt_ofdm(&per_user, architecture, n, rf_chains[m])?;
        diag.degenerate_pairs
            .extend(bad.into_iter().map(|k| (k, m)));
        out.push(r);
    }
    Ok((out, diag))
}

/// Gain pattern `|a(theta)^H w|^2` in dB, normalized so the grid maximum
/// is 0 dB.
pub fn beam_pattern(w: &CVector, theta_grid: &[f64]) -> Result<Vec<f64>> {
    let raw = beam_gains(w, theta_grid)?;
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    Ok(raw
        .iter()
        .map(|&g| 10.0 * (g / peak).max(1e-30).log10())
        .collect())
}

/// Linear gains `|a(theta)^H w|^2` on a grid, without normalization.
pub fn beam_gains(w: &CVector, theta_grid: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() || w.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(invalid("beam pattern of a zero precoder"));
    }
    theta_grid
        .iter()
        .map(|&t| Ok(gain(&array_response(t, w.len())?, w)))
        .collect()
}

/// Uniform angle grid in radians from `start_deg` to `stop_deg` inclusive.
pub fn degree_grid(start_deg: f64, stop_deg: f64, step_deg: f64) -> Vec<f64> {
    let n = ((stop_deg - start_deg) / step_deg).round() as usize;
    (0..=n)
        .map(|i| (start_deg + i as f64 * step_deg).to_radians())
        .collect()
}

/// Writes `(degrees, dB)` records, one per line, with a header comment.
pub fn write_beam_pattern<W: Write>(
    mut out: W,
    theta_grid: &[f64],
    gains_db: &[f64],
) -> Result<()> {
    writeln!(out, "# degrees gain_db")?;
    for (t, g) in theta_grid.iter().zip(gains_db) {
        writeln!(out, "{:.4} {:.6}", t.to_degrees(), g)?;
    }
    Ok(())
}
