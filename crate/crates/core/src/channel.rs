//! Clustered mmWave channel generation.
//!
//! Narrow-band channels follow the usual sum-of-rays form over a half-wave
//! ULA: `h = sqrt(rho N / (Ncl Nray)) * sum_i sum_l alpha_il a(theta_il)`.
//! Large-scale gain `rho` comes from a close-in reference-distance path loss
//! with an exponential LOS probability and log-normal shadowing. The OFDM
//! variant reuses one set of ray gains and angles and applies a per-cluster
//! phase ramp across subcarriers.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{c, cis, CVector, C64};
use crate::rng::{self, SimRng};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planar position in meters.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossParams {
    /// Carrier wavelength in meters.
    pub carrier_wavelength: f64,
    pub exponent_los: f64,
    pub exponent_nlos: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
    /// Blockage density in 1/m; LOS probability is `exp(-beta d)`.
    pub blockage_beta: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            carrier_wavelength: SPEED_OF_LIGHT / 28.0e9,
            exponent_los: 2.1,
            exponent_nlos: 3.4,
            shadow_sigma_los_db: 3.6,
            shadow_sigma_nlos_db: 9.7,
            blockage_beta: 0.01,
        }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_wavelength > 0.0) {
            return Err(invalid("carrier_wavelength must be > 0"));
        }
        if !(self.exponent_los > 0.0 && self.exponent_nlos > 0.0) {
            return Err(invalid("path-loss exponents must be > 0"));
        }
        if !(self.shadow_sigma_los_db >= 0.0 && self.shadow_sigma_nlos_db >= 0.0) {
            return Err(invalid("shadowing sigmas must be >= 0"));
        }
        if !(self.blockage_beta >= 0.0) {
            return Err(invalid("blockage_beta must be >= 0"));
        }
        Ok(())
    }

    /// Free-space reference term `20 log10(4 pi / lambda)` in dB.
    pub fn reference_db(&self) -> f64 {
        20.0 * (4.0 * PI / self.carrier_wavelength).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub n_clusters: usize,
    pub n_rays: usize,
    pub sector_min_deg: f64,
    pub sector_max_deg: f64,
    /// Per-cluster angular spread (standard deviation of the Laplace law).
    pub angular_spread_deg: f64,
    /// Ray angles are truncated to `mean +/- truncation * spread`.
    pub truncation: f64,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            n_clusters: 2,
            n_rays: 20,
            sector_min_deg: -90.0,
            sector_max_deg: 90.0,
            angular_spread_deg: 10.0,
            truncation: 2.0,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.n_rays == 0 {
            return Err(invalid("n_clusters and n_rays must be >= 1"));
        }
        if !(self.sector_min_deg < self.sector_max_deg) {
            return Err(invalid("sector_min_deg must be < sector_max_deg"));
        }
        if !(self.angular_spread_deg > 0.0) {
            return Err(invalid("angular_spread_deg must be > 0"));
        }
        if !(self.truncation > 0.0) {
            return Err(invalid("truncation must be > 0"));
        }
        Ok(())
    }
}

/// Normalized half-wavelength ULA response:
/// entry `i` is `exp(j pi i sin(theta)) / sqrt(N)`.
pub fn array_response(theta: f64, n_antennas: usize) -> Result<CVector> {
    if n_antennas == 0 {
        return Err(invalid("array_response needs at least one antenna"));
    }
    let scale = 1.0 / (n_antennas as f64).sqrt();
    let s = theta.sin();
    Ok(CVector::from_iterator(
        n_antennas,
        (0..n_antennas).map(|i| cis(PI * i as f64 * s) * scale),
    ))
}

/// Bernoulli draw with success probability `exp(-beta d)`.
pub fn sample_los<R: Rng + ?Sized>(
    distance: f64,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<bool> {
    if !(distance >= 0.0) {
        return Err(invalid(format!("distance must be >= 0, got {distance}")));
    }
    let p = (-params.blockage_beta * distance).exp();
    Ok(rng.random::<f64>() < p)
}

/// Close-in reference-distance path loss in dB including one shadowing draw.
///
/// With a zero shadowing sigma no randomness is consumed.
pub fn path_loss_db<R: Rng + ?Sized>(
    distance: f64,
    is_los: bool,
    params: &PathLossParams,
    rng: &mut R,
) -> Result<f64> {
    if !(distance >= 1.0) {
        return Err(invalid(format!(
            "path loss needs distance >= 1 m, got {distance}"
        )));
    }
    let (exponent, sigma) = if is_los {
        (params.exponent_los, params.shadow_sigma_los_db)
    } else {
        (params.exponent_nlos, params.shadow_sigma_nlos_db)
    };
    let shadow = if sigma > 0.0 {
        let x: f64 = StandardNormal.sample(rng);
        sigma * x
    } else {
        0.0
    };
    Ok(params.reference_db() + 10.0 * exponent * distance.log10() + shadow)
}

/// `10^(-dB/10)`.
pub fn loss_db_to_gain(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// One propagation ray: cluster index (0-based), complex gain and AOD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub cluster: usize,
    pub gain: C64,
    pub aod: f64,
}

/// Superposes rays into a channel vector for a single subcarrier.
///
/// `phase_step` is the per-cluster phase increment (`-2 pi n_s / N_s` for
/// OFDM, zero for narrow-band); cluster `i` (0-based) is rotated by
/// `(i + 1) * phase_step`.
pub fn superpose_rays(
    rays: &[Ray],
    rho: f64,
    n_antennas: usize,
    n_paths: usize,
    phase_step: f64,
) -> Result<CVector> {
    let scale = (rho * n_antennas as f64 / n_paths as f64).sqrt();
    let mut h = CVector::zeros(n_antennas);
    for ray in rays {
        let a = array_response(ray.aod, n_antennas)?;
        let rot = if phase_step == 0.0 {
            c(1.0, 0.0)
        } else {
            cis(phase_step * (ray.cluster + 1) as f64)
        };
        h.axpy(ray.gain * rot * scale, &a, c(1.0, 0.0));
    }
    Ok(h)
}

/// Large-scale state of one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGain {
    pub los: bool,
    pub distance: f64,
    pub path_loss_db: f64,
    pub rho: f64,
}

fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

fn laplace_quantile(p: f64, b: f64) -> f64 {
    if p < 0.5 {
        b * (2.0 * p).ln()
    } else {
        -b * (2.0 * (1.0 - p)).ln()
    }
}

/// Laplace offset with standard deviation `spread`, truncated to `[lo, hi]`.
fn truncated_laplace<R: Rng + ?Sized>(spread: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let b = spread / std::f64::consts::SQRT_2;
    let (p_lo, p_hi) = (laplace_cdf(lo, b), laplace_cdf(hi, b));
    let u: f64 = rng.random();
    laplace_quantile(p_lo + u * (p_hi - p_lo), b).clamp(lo, hi)
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws the large-scale link state: LOS flag, shadowed path loss and `rho`.
/// Distances below 1 m are clamped to 1 m.
pub fn draw_link<R: Rng + ?Sized>(
    bs_pos: Point,
    user_pos: Point,
    pl: &PathLossParams,
    rng: &mut R,
) -> Result<LinkGain> {
    if !(bs_pos.iter().chain(user_pos.iter()).all(|v| v.is_finite())) {
        return Err(invalid("positions must be finite"));
    }
    let distance = ((bs_pos[0] - user_pos[0]).powi(2) + (bs_pos[1] - user_pos[1]).powi(2))
        .sqrt()
        .max(1.0);
    let los = sample_los(distance, pl, rng)?;
    let path_loss_db = path_loss_db(distance, los, pl, rng)?;
    Ok(LinkGain {
        los,
        distance,
        path_loss_db,
        rho: loss_db_to_gain(path_loss_db),
    })
}

/// Draws the small-scale rays: cluster means uniform on the sector, ray
/// AODs Laplace-distributed around them, gains `CN(0, 1)`.
pub fn draw_rays<R: Rng + ?Sized>(cluster: &ClusterParams, rng: &mut R) -> Vec<Ray> {
    let smin = cluster.sector_min_deg.to_radians();
    let smax = cluster.sector_max_deg.to_radians();
    let spread = cluster.angular_spread_deg.to_radians();
    let half_width = cluster.truncation * spread;
    let mut rays = Vec::with_capacity(cluster.n_clusters * cluster.n_rays);
    for i in 0..cluster.n_clusters {
        let mean = smin + rng.random::<f64>() * (smax - smin);
        let lo = (-half_width).max(smin - mean);
        let hi = half_width.min(smax - mean);
        for _ in 0..cluster.n_rays {
            let aod = mean + truncated_laplace(spread, lo, hi, rng);
            let gain = complex_gaussian(rng);
            rays.push(Ray {
                cluster: i,
                gain,
                aod,
            });
        }
    }
    rays
}

/// One narrow-band link realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub h: CVector,
    pub los: bool,
    pub rho: f64,
}

pub fn draw_channel<R: Rng + ?Sized>(
    bs_pos: Point,
    user_pos: Point,
    n_antennas: usize,
    cluster: &ClusterParams,
    pl: &PathLossParams,
    rng: &mut R,
) -> Result<ChannelDraw> {
    let link = draw_link(bs_pos, user_pos, pl, rng)?;
    let rays = draw_rays(cluster, rng);
    let h = superpose_rays(
        &rays,
        link.rho,
        n_antennas,
        cluster.n_clusters * cluster.n_rays,
        0.0,
    )?;
    Ok(ChannelDraw {
        h,
        los: link.los,
        rho: link.rho,
    })
}

/// One frequency-selective link realization, `h[n_s]` for every subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmChannelDraw {
    pub h: Vec<CVector>,
    pub los: bool,
    pub rho: f64,
}

pub fn draw_ofdm_channel<R: Rng + ?Sized>(
    bs_pos: Point,
    user_pos: Point,
    n_antennas: usize,
    cluster: &ClusterParams,
    pl: &PathLossParams,
    n_subcarriers: usize,
    rng: &mut R,
) -> Result<OfdmChannelDraw> {
    if n_subcarriers == 0 {
        return Err(invalid("n_subcarriers must be >= 1"));
    }
    let link = draw_link(bs_pos, user_pos, pl, rng)?;
    let rays = draw_rays(cluster, rng);
    let n_paths = cluster.n_clusters * cluster.n_rays;
    let h = (0..n_subcarriers)
        .map(|ns| {
            let step = -2.0 * PI * ns as f64 / n_subcarriers as f64;
            superpose_rays(&rays, link.rho, n_antennas, n_paths, step)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OfdmChannelDraw {
        h,
        los: link.los,
        rho: link.rho,
    })
}

/// Channels of every (user, BS) pair, indexed `[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub channels: Vec<Vec<CVector>>,
    pub los: Vec<Vec<bool>>,
    pub rho: Vec<Vec<f64>>,
}

impl ChannelSet {
    pub fn n_users(&self) -> usize {
        self.channels.len()
    }

    pub fn n_bs(&self) -> usize {
        self.channels.first().map_or(0, |row| row.len())
    }

    pub fn h(&self, k: usize, m: usize) -> &CVector {
        &self.channels[k][m]
    }

    /// Builds a set directly from channel vectors (LOS unknown, `rho = 1`).
    pub fn from_channels(channels: Vec<Vec<CVector>>) -> Self {
        let los = channels.iter().map(|row| vec![false; row.len()]).collect();
        let rho = channels.iter().map(|row| vec![1.0; row.len()]).collect();
        Self { channels, los, rho }
    }
}

/// Channels per (user, BS, subcarrier), indexed `[k][m][n_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmChannelSet {
    pub channels: Vec<Vec<Vec<CVector>>>,
    pub n_subcarriers: usize,
    pub los: Vec<Vec<bool>>,
    pub rho: Vec<Vec<f64>>,
}

impl OfdmChannelSet {
    pub fn n_users(&self) -> usize {
        self.channels.len()
    }

    pub fn n_bs(&self) -> usize {
        self.channels.first().map_or(0, |row| row.len())
    }

    /// Narrow-band view of one subcarrier.
    pub fn subcarrier(&self, ns: usize) -> ChannelSet {
        ChannelSet {
            channels: self
                .channels
                .iter()
                .map(|row| row.iter().map(|per_sc| per_sc[ns].clone()).collect())
                .collect(),
            los: self.los.clone(),
            rho: self.rho.clone(),
        }
    }

    /// `sum_{n_s} h[n_s]` for every pair, independent of subcarrier order.
    pub fn summed(&self) -> ChannelSet {
        ChannelSet {
            channels: self
                .channels
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|per_sc| crate::linalg::canonical_sum(per_sc))
                        .collect()
                })
                .collect(),
            los: self.los.clone(),
            rho: self.rho.clone(),
        }
    }

    /// Reorders subcarriers: output subcarrier `i` is input `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|per_sc| perm.iter().map(|&p| per_sc[p].clone()).collect())
                        .collect()
                })
                .collect(),
            n_subcarriers: self.n_subcarriers,
            los: self.los.clone(),
            rho: self.rho.clone(),
        }
    }
}

/// Link geometry and model parameters shared by a whole channel set.
#[derive(Debug, Clone, Copy)]
pub struct LinkModel<'a> {
    pub cluster: &'a ClusterParams,
    pub path_loss: &'a PathLossParams,
}

fn pair_rng(seed: u64, k: usize, m: usize) -> SimRng {
    rng::substream(seed, &[rng::tag::CHANNEL, k as u64, m as u64])
}

/// Draws every (user, BS) channel. Pair `(k, m)` uses its own substream
/// derived from `(seed, k, m)`.
pub fn generate_channel_set(
    bs_positions: &[Point],
    user_positions: &[Point],
    antennas: &[usize],
    model: LinkModel<'_>,
    seed: u64,
) -> Result<ChannelSet> {
    if antennas.len() != bs_positions.len() {
        return Err(invalid("one antenna count per BS is required"));
    }
    model.cluster.validate()?;
    model.path_loss.validate()?;
    let mut channels = Vec::with_capacity(user_positions.len());
    let mut los = Vec::with_capacity(user_positions.len());
    let mut rho = Vec::with_capacity(user_positions.len());
    for (k, &up) in user_positions.iter().enumerate() {
        let mut hs = Vec::with_capacity(bs_positions.len());
        let mut ls = Vec::with_capacity(bs_positions.len());
        let mut rs = Vec::with_capacity(bs_positions.len());
        for (m, &bp) in bs_positions.iter().enumerate() {
            let mut r = pair_rng(seed, k, m);
            let draw = draw_channel(bp, up, antennas[m], model.cluster, model.path_loss, &mut r)?;
            hs.push(draw.h);
            ls.push(draw.los);
            rs.push(draw.rho);
        }
        channels.push(hs);
        los.push(ls);
        rho.push(rs);
    }
    Ok(ChannelSet { channels, los, rho })
}

/// OFDM counterpart of [`generate_channel_set`]; with one subcarrier it
/// reproduces the narrow-band set bit for bit.
pub fn generate_ofdm_channel_set(
    bs_positions: &[Point],
    user_positions: &[Point],
    antennas: &[usize],
    model: LinkModel<'_>,
    n_subcarriers: usize,
    seed: u64,
) -> Result<OfdmChannelSet> {
    if antennas.len() != bs_positions.len() {
        return Err(invalid("one antenna count per BS is required"));
    }
    model.cluster.validate()?;
    model.path_loss.validate()?;
    let mut channels = Vec::new();
    let mut los = Vec::new();
    let mut rho = Vec::new();
    for (k, &up) in user_positions.iter().enumerate() {
        let mut hs = Vec::new();
        let mut ls = Vec::new();
        let mut rs = Vec::new();
        for (m, &bp) in bs_positions.iter().enumerate() {
            let mut r = pair_rng(seed, k, m);
            let draw = draw_ofdm_channel(
                bp,
                up,
                antennas[m],
                model.cluster,
                model.path_loss,
                n_subcarriers,
                &mut r,
            )?;
            hs.push(draw.h);
            ls.push(draw.los);
            rs.push(draw.rho);
        }
        channels.push(hs);
        los.push(ls);
        rho.push(rs);
    }
    Ok(OfdmChannelSet {
        channels,
        n_subcarriers,
        los,
        rho,
    })
}

const DUMP_MAGIC: &str = "# hbcoop channel dump v1";

/// Writes a channel set as text.
///
/// Layout: a magic line, then per (k, m) pair in row-major order a header
/// `channel k=<k> m=<m> n=<N> seed=<seed> los=<0|1> rho=<rho>` followed by
/// `N` lines `<re> <im>`. Floats use shortest round-trip formatting.
pub fn write_channel_dump<W: Write>(mut out: W, set: &ChannelSet, seed: u64) -> Result<()> {
    writeln!(out, "{DUMP_MAGIC}")?;
    for (k, row) in set.channels.iter().enumerate() {
        for (m, h) in row.iter().enumerate() {
            writeln!(
                out,
                "channel k={k} m={m} n={} seed={seed} los={} rho={:e}",
                h.len(),
                u8::from(set.los[k][m]),
                set.rho[k][m]
            )?;
            for v in h.iter() {
                writeln!(out, "{:e} {:e}", v.re, v.im)?;
            }
        }
    }
    Ok(())
}

/// Parses the output of [`write_channel_dump`]; returns the set and seed.
pub fn read_channel_dump<R: BufRead>(input: R) -> Result<(ChannelSet, u64)> {
    let bad = |msg: &str| Error::InvalidArgument(format!("channel dump: {msg}"));
    let mut lines = input.lines();
    match lines.next() {
        Some(Ok(l)) if l.trim() == DUMP_MAGIC => {}
        _ => return Err(bad("missing header")),
    }
    let mut entries: Vec<(usize, usize, bool, f64, CVector)> = Vec::new();
    let mut seed = 0;
    while let Some(line) = lines.next() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = std::collections::HashMap::new();
        let mut parts = line.split_whitespace();
        if parts.next() != Some("channel") {
            return Err(bad("expected a channel record"));
        }
        for p in parts {
            let (key, val) = p.split_once('=').ok_or_else(|| bad("malformed field"))?;
            fields.insert(key.to_string(), val.to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .cloned()
                .ok_or_else(|| bad(&format!("missing {key}")))
        };
        let parse_usize = |s: String| s.parse::<usize>().map_err(|_| bad("bad integer"));
        let k = parse_usize(get("k")?)?;
        let m = parse_usize(get("m")?)?;
        let n = parse_usize(get("n")?)?;
        seed = get("seed")?.parse::<u64>().map_err(|_| bad("bad seed"))?;
        let los = get("los")? == "1";
        let rho = get("rho")?.parse::<f64>().map_err(|_| bad("bad rho"))?;
        let mut h = CVector::zeros(n);
        for i in 0..n {
            let l = lines.next().ok_or_else(|| bad("truncated entries"))??;
            let mut it = l.split_whitespace();
            let mut num = || -> Result<f64> {
                it.next()
                    .ok_or_else(|| bad("missing value"))?
                    .parse::<f64>()
                    .map_err(|_| bad("bad float"))
            };
            h[i] = c(num()?, num()?);
        }
        entries.push((k, m, los, rho, h));
    }
    let n_users = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let n_bs = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let mut channels = vec![vec![CVector::zeros(0); n_bs]; n_users];
    let mut los = vec![vec![false; n_bs]; n_users];
    let mut rho = vec![vec![0.0; n_bs]; n_users];
    for (k, m, l, r, h) in entries {
        channels[k][m] = h;
        los[k][m] = l;
        rho[k][m] = r;
    }
    Ok((ChannelSet { channels, los, rho }, seed))
}
