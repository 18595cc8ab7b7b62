//! Digital precoding: the power-minimization SDP over the effective channels
//! left by the analog stage, rank-1 extraction and rate evaluation.
//!
//! Every matrix in the program is block diagonal with one block per BS, so
//! each `D_k` only matters through its diagonal blocks `D_{k,m}`. The solver
//! therefore works on one Hermitian block per (user, BS) pair. Each block is
//! further restricted to the range of `R_m^H R_m` and to the span of the
//! effective channels at that BS; both restrictions are exact (components
//! outside cost power without changing any received signal), so the program
//! has blocks of size at most `min(L_m, K)` regardless of the antenna count.

use std::io::Write;
use std::sync::Once;

use serde::{Deserialize, Serialize};

use crate::analog::{AnalogPrecoder, Architecture};
use crate::channel::ChannelSet;
use crate::conic::{self, BlockSdp, ConicStatus, Row, Settings};
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, outer, trace_product, CMatrix, CVector, C64};
use crate::power::BaseStation;

/// Eigenvalue ratio above which a solved block is reported as not rank one.
pub const RANK_RATIO_TOL: f64 = 1e-4;
/// Largest common rescaling applied to restore rates after rank-1 truncation.
pub const MAX_RESCALE: f64 = 1.1;

static FDP_COST_WARNING: Once = Once::new();

/// SINR target `2^tau - 1`.
pub fn sinr_target(tau: f64) -> f64 {
    tau.exp2() - 1.0
}

/// Effective channels `g_{k,m} = R_m^H h_{k,m}`; the rank-1 blocks
/// `g g^H` form the block-diagonal matrix `H_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub gains: Vec<Vec<CVector>>,
}

impl EffectiveChannel {
    pub fn new(analog: &[AnalogPrecoder], channels: &ChannelSet) -> Self {
        let gains = channels
            .channels
            .iter()
            .map(|row| {
                row.iter()
                    .zip(analog)
                    .map(|(h, r)| r.effective(h))
                    .collect()
            })
            .collect();
        Self { gains }
    }

    pub fn n_users(&self) -> usize {
        self.gains.len()
    }

    pub fn block(&self, k: usize, m: usize) -> CMatrix {
        outer(&self.gains[k][m])
    }

    /// Full block-diagonal `H_k`.
    pub fn matrix(&self, k: usize) -> CMatrix {
        block_diag(&self.gains[k].iter().map(outer).collect::<Vec<_>>())
    }
}

/// Gram matrices `R_m^H R_m` and objective slopes (`b_m eta'_m`, or the
/// envelope slope `b_m eta_hat_m`).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerQuadratics {
    pub grams: Vec<CMatrix>,
    pub slopes: Vec<f64>,
}

impl PowerQuadratics {
    pub fn dims(&self) -> Vec<usize> {
        self.grams.iter().map(|g| g.nrows()).collect()
    }

    /// Objective matrix `R_hat = diag(slope_m R_m^H R_m)`.
    pub fn r_hat(&self) -> CMatrix {
        block_diag(
            &self
                .grams
                .iter()
                .zip(&self.slopes)
                .map(|(g, s)| g.scale(*s))
                .collect::<Vec<_>>(),
        )
    }

    /// Selector `Q_m`: `R_m^H R_m` in block `m`, zero elsewhere.
    pub fn q(&self, m: usize) -> CMatrix {
        let blocks: Vec<CMatrix> = self
            .grams
            .iter()
            .enumerate()
            .map(|(j, g)| {
                if j == m {
                    g.clone()
                } else {
                    CMatrix::zeros(g.nrows(), g.ncols())
                }
            })
            .collect();
        block_diag(&blocks)
    }
}

fn block_diag(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let l = b.nrows();
        out.view_mut((off, off), (l, l)).copy_from(b);
        off += l;
    }
    out
}

/// Which per-watt cost the objective charges for transmit power.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveWeights {
    /// `b_m eta'_m`: the exact active-mode slope.
    Exact,
    /// Convex-envelope slope `b_m eta_hat_m` for the given reference
    /// transmit powers per BS.
    Envelope(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub effective: EffectiveChannel,
    pub power: PowerQuadratics,
    /// Rate targets in bit/s/Hz.
    pub targets: Vec<f64>,
    /// Noise power per user, watts.
    pub noise: Vec<f64>,
    /// Active (`true`) or silent BSs.
    pub pattern: Vec<bool>,
    pub p_max: Vec<f64>,
    /// Pattern-dependent constant `sum_m b_m (z_m + a (1 - z_m)) P_hw,m`,
    /// kept out of the solver objective.
    pub kappa: f64,
}

/// Builds the program for one silence pattern.
#[allow(clippy::too_many_arguments)]
pub fn assemble(
    analog: &[AnalogPrecoder],
    channels: &ChannelSet,
    targets: &[f64],
    noise: &[f64],
    pattern: &[bool],
    stations: &[BaseStation],
    weights: &ObjectiveWeights,
) -> Result<SdpProblem> {
    let k = channels.n_users();
    let m = channels.n_bs();
    if analog.len() != m || stations.len() != m || pattern.len() != m {
        return Err(invalid(format!(
            "need one analog precoder, station and pattern entry per BS ({m}); got {}, {}, {}",
            analog.len(),
            stations.len(),
            pattern.len()
        )));
    }
    if targets.len() != k || noise.len() != k {
        return Err(invalid(format!(
            "need one target and noise power per user ({k})"
        )));
    }
    if !pattern.iter().any(|&z| z) {
        return Err(invalid("all-silent pattern cannot serve any user"));
    }
    if let Some(t) = targets.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(invalid(format!(
            "rate targets must be finite and >= 0, got {t}"
        )));
    }
    if let Some(s) = noise.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(invalid(format!("noise power must be > 0, got {s}")));
    }
    for (j, (r, bs)) in analog.iter().zip(stations).enumerate() {
        if r.n_antennas() != bs.n_antennas || r.rf_chains() != bs.rf_chains {
            return Err(invalid(format!(
                "analog precoder {j} does not match its station"
            )));
        }
        if channels
            .channels
            .iter()
            .any(|row| row[j].len() != bs.n_antennas)
        {
            return Err(invalid(format!("channel length mismatch at BS {j}")));
        }
    }
    let total_antennas: usize = stations.iter().map(|s| s.n_antennas).sum();
    if stations.iter().any(|s| s.architecture == Architecture::Fdp) && total_antennas > 128 {
        FDP_COST_WARNING.call_once(|| {
            log::warn!(
                "FDP with {total_antennas} antennas in total: solve cost grows cubically in the antenna count"
            )
        });
    }
    let slopes: Vec<f64> = match weights {
        ObjectiveWeights::Exact => stations
            .iter()
            .map(|s| s.profile.weight * s.profile.eta_prime())
            .collect(),
        ObjectiveWeights::Envelope(p_ref) => {
            if p_ref.len() != m || p_ref.iter().any(|p| !(*p > 0.0)) {
                return Err(invalid("envelope reference powers must be > 0, one per BS"));
            }
            stations
                .iter()
                .zip(p_ref)
                .map(|(s, p)| s.profile.weight * s.envelope_slope(*p))
                .collect()
        }
    };
    let kappa = stations
        .iter()
        .zip(pattern)
        .map(|(s, &z)| {
            s.profile.weight * if z { 1.0 } else { s.profile.silent_scalar } * s.hw_power()
        })
        .sum();
    Ok(SdpProblem {
        effective: EffectiveChannel::new(analog, channels),
        power: PowerQuadratics {
            grams: analog.iter().map(AnalogPrecoder::gram).collect(),
            slopes,
        },
        targets: targets.to_vec(),
        noise: noise.to_vec(),
        pattern: pattern.to_vec(),
        p_max: stations.iter().map(|s| s.profile.p_max).collect(),
        kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Diagonal blocks `D_{k,m}` (`L_m x L_m`), indexed `[k][m]`.
    pub d: Vec<Vec<CMatrix>>,
    /// `sum_k Tr(R_hat D_k)`, watts (without `kappa`).
    pub objective: f64,
    /// Multipliers of the rate rows.
    pub lambda: Vec<f64>,
    /// Multipliers of the power rows (zero for silent BSs).
    pub mu: Vec<f64>,
    pub iterations: usize,
}

impl SdpSolution {
    /// Full block-diagonal `D_k`.
    pub fn d_matrix(&self, k: usize) -> CMatrix {
        block_diag(&self.d[k])
    }

    /// `sum_k Tr(Q_m D_k)` per BS.
    pub fn bs_tx_power(&self, problem: &SdpProblem) -> Vec<f64> {
        (0..problem.pattern.len())
            .map(|m| {
                self.d
                    .iter()
                    .map(|dk| trace_product(&problem.power.grams[m], &dk[m]))
                    .sum()
            })
            .collect()
    }
}

/// Exact subspace restriction of one BS: `D_{k,m} = T E T^H` with
/// `Tr(P D) = Tr(E)` and `g^H D g = g_hat^H E g_hat`.
struct Reduction {
    t: CMatrix,
    g_hat: Vec<CVector>,
}

fn reduce(gram: &CMatrix, gains: &[&CVector]) -> Reduction {
    let l = gram.nrows();
    let (vals, vecs) = hermitian_eigen(gram);
    let lmax = vals.first().copied().unwrap_or(0.0);
    let r = vals
        .iter()
        .take_while(|&&v| lmax > 0.0 && v > 1e-12 * lmax)
        .count();
    // whitened coordinates of the range of P
    let mut w_map = CMatrix::zeros(l, r);
    for j in 0..r {
        w_map.set_column(j, &vecs.column(j).scale(1.0 / vals[j].sqrt()));
    }
    let whitened: Vec<CVector> = gains.iter().map(|g| w_map.ad_mul(g)).collect();
    let mut span = CMatrix::zeros(r, r);
    for w in &whitened {
        span += outer(w);
    }
    let (svals, svecs) = hermitian_eigen(&span);
    let smax = svals.first().copied().unwrap_or(0.0);
    let q = svals
        .iter()
        .take_while(|&&v| smax > 0.0 && v > 1e-13 * smax)
        .count();
    let u = svecs.columns(0, q).into_owned();
    Reduction {
        t: &w_map * &u,
        g_hat: whitened.iter().map(|w| u.ad_mul(w)).collect(),
    }
}

/// The scaled conic program plus what is needed to map its solution back.
struct Prepared {
    sdp: BlockSdp,
    reductions: Vec<Option<Reduction>>,
    /// `(k, m)` of each precoding block, in block order.
    blocks: Vec<(usize, usize)>,
    served: Vec<usize>,
    active: Vec<usize>,
    /// Per-user variable scaling `D = t_k X`.
    t: Vec<f64>,
    /// Objective scaling.
    omega: f64,
}

enum Plan {
    /// No user has a positive target: `D = 0` is optimal.
    Trivial,
    /// Some user has no effective channel to any active BS.
    Infeasible,
    Conic(Prepared),
}

impl SdpProblem {
    pub fn n_users(&self) -> usize {
        self.targets.len()
    }

    pub fn n_bs(&self) -> usize {
        self.pattern.len()
    }

    fn plan(&self) -> Plan {
        let nk = self.n_users();
        let served: Vec<usize> = (0..nk).filter(|&k| self.targets[k] > 0.0).collect();
        if served.is_empty() {
            return Plan::Trivial;
        }
        let active: Vec<usize> = (0..self.n_bs()).filter(|&m| self.pattern[m]).collect();
        let mut reductions: Vec<Option<Reduction>> = (0..self.n_bs()).map(|_| None).collect();
        for &m in &active {
            let gains: Vec<&CVector> = served
                .iter()
                .map(|&k| &self.effective.gains[k][m])
                .collect();
            reductions[m] = Some(reduce(&self.power.grams[m], &gains));
        }
        // g_hat lookup by (served index, m)
        let g_hat = |si: usize, m: usize| &reductions[m].as_ref().unwrap().g_hat[si];
        let mut t = vec![0.0; nk];
        for (si, &k) in served.iter().enumerate() {
            let best = active
                .iter()
                .map(|&m| g_hat(si, m).norm_squared())
                .fold(0.0, f64::max);
            if !(best > 0.0) {
                return Plan::Infeasible;
            }
            t[k] = sinr_target(self.targets[k]) * self.noise[k] / best;
        }

        let mut blocks = Vec::new();
        for &k in &served {
            for &m in &active {
                if reductions[m].as_ref().unwrap().t.ncols() > 0 {
                    blocks.push((k, m));
                }
            }
        }
        let omega = blocks
            .iter()
            .map(|&(k, m)| self.power.slopes[m] * t[k])
            .fold(0.0, f64::max)
            .max(1e-300);
        let mut dims: Vec<usize> = blocks
            .iter()
            .map(|&(_, m)| reductions[m].as_ref().unwrap().t.ncols())
            .collect();
        let mut objective: Vec<CMatrix> = blocks
            .iter()
            .zip(&dims)
            .map(|(&(k, m), &q)| CMatrix::identity(q, q).scale(self.power.slopes[m] * t[k] / omega))
            .collect();
        let scalar = |v: f64| CMatrix::from_element(1, 1, C64::new(v, 0.0));
        let mut rows = Vec::new();
        for (si, &k) in served.iter().enumerate() {
            let gamma = sinr_target(self.targets[k]);
            let row_scale = 1.0 / (gamma * self.noise[k]);
            let mut terms = Vec::new();
            for (b, &(kk, m)) in blocks.iter().enumerate() {
                let g = g_hat(si, m);
                let coef = if kk == k {
                    t[kk] * row_scale
                } else {
                    -gamma * t[kk] * row_scale
                };
                if g.norm_squared() > 0.0 {
                    terms.push((b, outer(g).scale(coef)));
                }
            }
            let slack = dims.len();
            dims.push(1);
            objective.push(scalar(0.0));
            terms.push((slack, scalar(-1.0)));
            rows.push(Row { terms, rhs: 1.0 });
        }
        for &m in &active {
            let mut terms = Vec::new();
            for (b, &(k, mm)) in blocks.iter().enumerate() {
                if mm == m {
                    terms.push((
                        b,
                        CMatrix::identity(dims[b], dims[b]).scale(t[k] / self.p_max[m]),
                    ));
                }
            }
            let slack = dims.len();
            dims.push(1);
            objective.push(scalar(0.0));
            terms.push((slack, scalar(1.0)));
            rows.push(Row { terms, rhs: 1.0 });
        }
        Plan::Conic(Prepared {
            sdp: BlockSdp {
                block_dims: dims,
                objective,
                rows,
            },
            reductions,
            blocks,
            served,
            active,
            t,
            omega,
        })
    }

    /// Writes the (reduced, scaled) conic program handed to the solver.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        match self.plan() {
            Plan::Trivial => writeln!(
                out,
                "# hbcoop sdp dump v1\n# trivial: all rate targets are zero"
            )?,
            Plan::Infeasible => writeln!(
                out,
                "# hbcoop sdp dump v1\n# infeasible: a served user has no channel"
            )?,
            Plan::Conic(p) => conic::write_dump(out, &p.sdp)?,
        }
        Ok(())
    }

    fn zero_blocks(&self) -> Vec<Vec<CMatrix>> {
        let dims = self.power.dims();
        (0..self.n_users())
            .map(|_| dims.iter().map(|&l| CMatrix::zeros(l, l)).collect())
            .collect()
    }
}

pub fn solve(problem: &SdpProblem) -> SdpSolution {
    solve_with(problem, &Settings::default())
}

pub fn solve_with(problem: &SdpProblem, settings: &Settings) -> SdpSolution {
    let nk = problem.n_users();
    let nm = problem.n_bs();
    let empty = |status| SdpSolution {
        status,
        d: problem.zero_blocks(),
        objective: 0.0,
        lambda: vec![0.0; nk],
        mu: vec![0.0; nm],
        iterations: 0,
    };
    let prep = match problem.plan() {
        Plan::Trivial => return empty(SolveStatus::Optimal),
        Plan::Infeasible => return empty(SolveStatus::Infeasible),
        Plan::Conic(p) => p,
    };
    let sol = conic::solve(&prep.sdp, settings);
    let status = match sol.status {
        ConicStatus::Optimal => SolveStatus::Optimal,
        ConicStatus::PrimalInfeasible => SolveStatus::Infeasible,
        ConicStatus::DualInfeasible | ConicStatus::NumericalFailure => {
            SolveStatus::NumericalFailure
        }
    };
    if status != SolveStatus::Optimal {
        let mut out = empty(status);
        out.iterations = sol.iterations;
        return out;
    }
    let mut d = problem.zero_blocks();
    for (b, &(k, m)) in prep.blocks.iter().enumerate() {
        let tm = &prep.reductions[m].as_ref().unwrap().t;
        let e = sol.x[b].scale(prep.t[k]);
        d[k][m] = crate::linalg::hermitian_part(&(tm * e * tm.adjoint()));
    }
    let mut lambda = vec![0.0; nk];
    for (row, &k) in prep.served.iter().enumerate() {
        let gamma = sinr_target(problem.targets[k]);
        lambda[k] = (prep.omega * sol.y[row] / (gamma * problem.noise[k])).max(0.0);
    }
    let mut mu = vec![0.0; nm];
    for (j, &m) in prep.active.iter().enumerate() {
        let y = sol.y[prep.served.len() + j];
        mu[m] = (-prep.omega * y / problem.p_max[m]).max(0.0);
    }
    let objective = (0..nm)
        .map(|m| {
            problem.power.slopes[m]
                * d.iter()
                    .map(|dk| trace_product(&problem.power.grams[m], &dk[m]))
                    .sum::<f64>()
        })
        .sum();
    SdpSolution {
        status,
        d,
        objective,
        lambda,
        mu,
        iterations: sol.iterations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1 {
    pub vector: CVector,
    /// `lambda_2 / lambda_1` (0 for rank one or zero input).
    pub ratio: f64,
}

impl Rank1 {
    pub fn flagged(&self) -> bool {
        self.ratio > RANK_RATIO_TOL
    }
}

/// Dominant-eigenpair factor `sqrt(lambda_1) v_1` of a PSD matrix.
pub fn extract_rank1(d: &CMatrix) -> Result<Rank1> {
    let n = d.nrows();
    if n != d.ncols() {
        return Err(invalid("extract_rank1 needs a square matrix"));
    }
    if n == 0 {
        return Ok(Rank1 {
            vector: CVector::zeros(0),
            ratio: 0.0,
        });
    }
    let (vals, vecs) = hermitian_eigen(d);
    let l1 = vals[0];
    let lmin = vals[n - 1];
    if l1 <= 0.0 {
        if lmin < -1e-300 {
            return Err(invalid(format!(
                "matrix is not PSD (lambda_min = {lmin:e})"
            )));
        }
        return Ok(Rank1 {
            vector: CVector::zeros(n),
            ratio: 0.0,
        });
    }
    if lmin < -1e-8 * l1 {
        return Err(invalid(format!(
            "matrix is not PSD (lambda_min / lambda_1 = {:e})",
            lmin / l1
        )));
    }
    let ratio = if n > 1 { vals[1].max(0.0) / l1 } else { 0.0 };
    Ok(Rank1 {
        vector: vecs.column(0).scale(l1.sqrt()),
        ratio,
    })
}

/// Digital precoders `d_{k,m}` (length `L_m`), indexed `[k][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoders {
    pub d: Vec<Vec<CVector>>,
}

impl DigitalPrecoders {
    pub fn zeros(n_users: usize, dims: &[usize]) -> Self {
        Self {
            d: (0..n_users)
                .map(|_| dims.iter().map(|&l| CVector::zeros(l)).collect())
                .collect(),
        }
    }

    /// Stacked `d_k`.
    pub fn stacked(&self, k: usize) -> CVector {
        let parts = &self.d[k];
        let n: usize = parts.iter().map(|p| p.len()).sum();
        let mut out = CVector::zeros(n);
        let mut off = 0;
        for p in parts {
            out.rows_mut(off, p.len()).copy_from(p);
            off += p.len();
        }
        out
    }

    /// Antenna-domain precoders `w_{k,m} = R_m d_{k,m}`.
    pub fn transmit(&self, analog: &[AnalogPrecoder]) -> Vec<Vec<CVector>> {
        self.d
            .iter()
            .map(|row| row.iter().zip(analog).map(|(d, r)| &r.matrix * d).collect())
            .collect()
    }

    /// RF transmit power `sum_k ||R_m d_{k,m}||^2` per BS.
    pub fn bs_tx_power(&self, analog: &[AnalogPrecoder]) -> Vec<f64> {
        let w = self.transmit(analog);
        (0..analog.len())
            .map(|m| w.iter().map(|row| row[m].norm_squared()).sum())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d: self
                .d
                .iter()
                .map(|row| row.iter().map(|v| v.scale(c)).collect())
                .collect(),
        }
    }
}

/// Achievable rate of every user: the useful power from all serving BSs
/// over inter-user interference plus noise.
pub fn evaluate_rates(w: &[Vec<CVector>], channels: &ChannelSet, noise: &[f64]) -> Vec<f64> {
    let nk = w.len();
    let nm = channels.n_bs();
    (0..nk)
        .map(|k| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for m in 0..nm {
                let h = channels.h(k, m);
                for (j, wj) in w.iter().enumerate() {
                    let p = h.dotc(&wj[m]).norm_sqr();
                    if j == k {
                        signal += p;
                    } else {
                        interference += p;
                    }
                }
            }
            (1.0 + signal / (interference + noise[k])).log2()
        })
        .collect()
}

/// Rates from digital precoders through the effective channels.
pub fn digital_rates(
    precoders: &DigitalPrecoders,
    effective: &EffectiveChannel,
    noise: &[f64],
) -> Vec<f64> {
    let nk = precoders.d.len();
    (0..nk)
        .map(|k| {
            let mut signal = 0.0;
            let mut interference = 0.0;
            for (m, g) in effective.gains[k].iter().enumerate() {
                for (j, dj) in precoders.d.iter().enumerate() {
                    let p = g.dotc(&dj[m]).norm_sqr();
                    if j == k {
                        signal += p;
                    } else {
                        interference += p;
                    }
                }
            }
            (1.0 + signal / (interference + noise[k])).log2()
        })
        .collect()
}

/// Trace-form rates `log2(1 + Tr(D_k H_k) / (sum_{j != k} Tr(D_j H_k) + sigma^2))`
/// for full block-diagonal `D_k`.
pub fn trace_form_rates(d: &[CMatrix], effective: &EffectiveChannel, noise: &[f64]) -> Vec<f64> {
    (0..d.len())
        .map(|k| {
            let hk = effective.matrix(k);
            let signal = trace_product(&d[k], &hk);
            let interference: f64 = (0..d.len())
                .filter(|&j| j != k)
                .map(|j| trace_product(&d[j], &hk))
                .sum();
            (1.0 + signal / (interference + noise[k])).log2()
        })
        .collect()
}

/// Rank-1 precoders extracted from a solved program.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub precoders: DigitalPrecoders,
    /// Largest `lambda_2 / lambda_1` over blocks carrying power.
    pub max_rank_ratio: f64,
    /// Common factor applied to restore the rate targets (1 if none).
    pub rescale: f64,
    /// Whether the final precoders meet every rate target.
    pub feasible: bool,
}

impl Extraction {
    pub fn rank_flagged(&self) -> bool {
        self.max_rank_ratio > RANK_RATIO_TOL
    }
}

/// Factors every block, then applies the smallest common factor in
/// `[1, MAX_RESCALE]` restoring all rate targets, if truncation lost rate.
pub fn extract_precoders(problem: &SdpProblem, solution: &SdpSolution) -> Result<Extraction> {
    let nk = problem.n_users();
    let dims = problem.power.dims();
    let mut precoders = DigitalPrecoders::zeros(nk, &dims);
    let largest = solution
        .d
        .iter()
        .flatten()
        .map(|b| hermitian_eigen(b).0.first().copied().unwrap_or(0.0))
        .fold(0.0, f64::max);
    let mut max_ratio = 0.0f64;
    for k in 0..nk {
        for (m, block) in solution.d[k].iter().enumerate() {
            let r1 = extract_rank1(block)?;
            if r1.vector.norm_squared() >= 1e-6 * largest {
                max_ratio = max_ratio.max(r1.ratio);
            }
            precoders.d[k][m] = r1.vector;
        }
    }
    if max_ratio > RANK_RATIO_TOL {
        log::debug!("relaxation returned a block with rank ratio {max_ratio:.2e}");
    }
    let meets = |p: &DigitalPrecoders| {
        digital_rates(p, &problem.effective, &problem.noise)
            .iter()
            .zip(&problem.targets)
            .all(|(r, t)| *r >= t - 1e-6 * t.max(1.0))
    };
    if meets(&precoders) {
        return Ok(Extraction {
            precoders,
            max_rank_ratio: max_ratio,
            rescale: 1.0,
            feasible: true,
        });
    }
    if !meets(&precoders.scaled(MAX_RESCALE)) {
        return Ok(Extraction {
            precoders,
            max_rank_ratio: max_ratio,
            rescale: 1.0,
            feasible: false,
        });
    }
    let (mut lo, mut hi) = (1.0, MAX_RESCALE);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if meets(&precoders.scaled(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    log::debug!("rank-1 truncation restored by common factor {hi:.6}");
    Ok(Extraction {
        precoders: precoders.scaled(hi),
        max_rank_ratio: max_ratio,
        rescale: hi,
        feasible: true,
    })
}

/// Constraint residuals of a solution. Rate residuals are normalized by
/// `max(gamma_k, 1) sigma_k^2`, power residuals by `P_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub rate: Vec<f64>,
    pub power: Vec<f64>,
    pub min_eigenvalue: f64,
    pub pass: bool,
}

pub fn verify_blocks(d: &[Vec<CMatrix>], problem: &SdpProblem, tol: f64) -> ResidualReport {
    let nk = problem.n_users();
    let nm = problem.n_bs();
    let rate: Vec<f64> = (0..nk)
        .map(|k| {
            let gamma = sinr_target(problem.targets[k]);
            let mut signal = 0.0;
            let mut interference = 0.0;
            for m in 0..nm {
                let g = &problem.effective.gains[k][m];
                for (j, dj) in d.iter().enumerate() {
                    let v = (g.adjoint() * &dj[m] * g)[(0, 0)].re;
                    if j == k {
                        signal += v;
                    } else {
                        interference += v;
                    }
                }
            }
            (signal - gamma * interference - gamma * problem.noise[k])
                / (gamma.max(1.0) * problem.noise[k])
        })
        .collect();
    let power: Vec<f64> = (0..nm)
        .map(|m| {
            let used: f64 = d
                .iter()
                .map(|dk| trace_product(&problem.power.grams[m], &dk[m]))
                .sum();
            let cap = if problem.pattern[m] {
                problem.p_max[m]
            } else {
                0.0
            };
            (used - cap) / problem.p_max[m]
        })
        .collect();
    let min_eigenvalue = d
        .iter()
        .flatten()
        .map(|b| hermitian_eigen(b).0.last().copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    let pass = rate.iter().all(|r| *r >= -tol)
        && power.iter().all(|p| *p <= tol)
        && min_eigenvalue >= -tol;
    ResidualReport {
        rate,
        power,
        min_eigenvalue,
        pass,
    }
}

pub fn verify_solution(
    solution: &SdpSolution,
    problem: &SdpProblem,
    tol: f64,
) -> Result<ResidualReport> {
    if solution.status != SolveStatus::Optimal {
        return Err(Error::InvalidState(
            "only optimal solutions can be verified".into(),
        ));
    }
    Ok(verify_blocks(&solution.d, problem, tol))
}

/// Blocks `d_{k,m} d_{k,m}^H` of rank-1 precoders.
pub fn outer_blocks(precoders: &DigitalPrecoders) -> Vec<Vec<CMatrix>> {
    precoders
        .d
        .iter()
        .map(|row| row.iter().map(outer).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::{build_all, fdp_identity};
    use crate::linalg::c;
    use crate::power::HardwareProfile;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn fdp_station(n: usize, profile: HardwareProfile) -> BaseStation {
        BaseStation::new(Architecture::Fdp, n, n, profile).unwrap()
    }

    fn random_vec<R: Rng>(n: usize, rng: &mut R) -> CVector {
        CVector::from_iterator(
            n,
            (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)),
        )
    }

    fn single_user(h: CVector, tau: f64, sigma2: f64, p_max: f64) -> SdpProblem {
        let n = h.len();
        let prof = HardwareProfile {
            p_max,
            ..HardwareProfile::table1()
        };
        let set = ChannelSet::from_channels(vec![vec![h]]);
        assemble(
            &[fdp_identity(n)],
            &set,
            &[tau],
            &[sigma2],
            &[true],
            &[fdp_station(n, prof)],
            &ObjectiveWeights::Exact,
        )
        .unwrap()
    }

    #[test]
    fn single_user_matches_matched_filter_oracle() {
        let h = CVector::from_vec(vec![c(2f64.sqrt(), 0.0), c(0.0, 2f64.sqrt())]);
        let p = single_user(h, 2.0, 1.0, 316.0);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let tx = sol.bs_tx_power(&p)[0];
        assert_relative_eq!(tx, 0.75, max_relative = 1e-6);
        let eta = HardwareProfile::table1().eta_prime();
        assert_relative_eq!(sol.objective, eta * 0.75, max_relative = 1e-6);
        // scalar Lagrangian stationarity: lambda = b eta' / ||h||^2, mu = 0
        assert_relative_eq!(sol.lambda[0], eta / 4.0, max_relative = 1e-5);
        assert!(sol.mu[0] < 1e-6 * eta);
    }

    #[test]
    fn single_user_beyond_cap_is_infeasible() {
        let h = CVector::from_vec(vec![c(2f64.sqrt(), 0.0), c(0.0, 2f64.sqrt())]);
        let sol = solve(&single_user(h, 2.0, 1.0, 0.5));
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn realistic_scale_single_user() {
        // -84 dBm noise and a path gain around 1e-10.
        let mut rng = substream(4, &[]);
        let h = random_vec(64, &mut rng).scale(1e-5);
        let sigma2 = 3.98e-12;
        let p = single_user(h.clone(), 3.0, sigma2, 316.2);
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let expected = 7.0 * sigma2 / h.norm_squared();
        assert_relative_eq!(sol.bs_tx_power(&p)[0], expected, max_relative = 1e-6);
    }

    #[test]
    fn orthogonal_users_decouple() {
        let h1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let h2 = CVector::from_vec(vec![c(0.0, 0.0), c(0.0, 3.0), c(0.0, 0.0)]);
        let prof = HardwareProfile::table1();
        let set = ChannelSet::from_channels(vec![vec![h1], vec![h2]]);
        let p = assemble(
            &[fdp_identity(3)],
            &set,
            &[1.0, 2.0],
            &[1.0, 1.0],
            &[true],
            &[fdp_station(3, prof)],
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        let p1: f64 = (0..3).map(|i| sol.d[0][0][(i, i)].re).sum();
        let p2: f64 = (0..3).map(|i| sol.d[1][0][(i, i)].re).sum();
        assert_relative_eq!(p1, 1.0, max_relative = 1e-6);
        assert_relative_eq!(p2, 3.0 / 9.0, max_relative = 1e-6);
    }

    #[test]
    fn zero_targets_give_zero_precoders() {
        let mut rng = substream(5, &[]);
        let set = ChannelSet::from_channels(vec![vec![random_vec(4, &mut rng)]; 2]);
        let st = fdp_station(4, HardwareProfile::table1());
        let p = assemble(
            &[fdp_identity(4)],
            &set,
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[true],
            &[st],
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.objective, 0.0);
        assert!(sol.d.iter().flatten().all(|b| b.norm() == 0.0));
        assert_relative_eq!(p.kappa, st.hw_power(), max_relative = 1e-12);
    }

    #[test]
    fn silent_bs_transmits_nothing() {
        let mut rng = substream(6, &[]);
        let prof = HardwareProfile::table1();
        let chans: Vec<Vec<CVector>> = (0..2)
            .map(|_| (0..2).map(|_| random_vec(4, &mut rng)).collect())
            .collect();
        let set = ChannelSet::from_channels(chans);
        let st = fdp_station(4, prof);
        let p = assemble(
            &[fdp_identity(4), fdp_identity(4)],
            &set,
            &[1.0, 1.0],
            &[0.01, 0.01],
            &[true, false],
            &[st, st],
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.bs_tx_power(&p)[1], 0.0);
        assert_relative_eq!(
            p.kappa,
            st.hw_power() * (1.0 + prof.silent_scalar),
            max_relative = 1e-12
        );
    }

    #[test]
    fn all_silent_pattern_is_rejected() {
        let set = ChannelSet::from_channels(vec![vec![CVector::zeros(2)]]);
        let st = fdp_station(2, HardwareProfile::table1());
        let err = assemble(
            &[fdp_identity(2)],
            &set,
            &[1.0],
            &[1.0],
            &[false],
            &[st],
            &ObjectiveWeights::Exact,
        );
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    /// Independent oracle for one BS without a binding cap: the uplink
    /// dual fixed point `q_k = 1 / ((1 + 1/gamma_k) h_k^H (I + sum_j q_j h_j h_j^H / sigma^2)^{-1} h_k / sigma^2)`
    /// whose minimum downlink power is `sum_k q_k`.
    fn dual_fixed_point(h: &[CVector], gamma: &[f64], sigma2: f64) -> Vec<f64> {
        let n = h[0].len();
        let mut q = vec![1.0; h.len()];
        for _ in 0..5000 {
            let mut a = CMatrix::identity(n, n);
            for (j, hj) in h.iter().enumerate() {
                a += outer(hj).scale(q[j] / sigma2);
            }
            let inv = a.try_inverse().unwrap();
            q = h
                .iter()
                .zip(gamma)
                .map(|(hk, g)| {
                    1.0 / ((1.0 + 1.0 / g) * (hk.adjoint() * &inv * hk)[(0, 0)].re / sigma2)
                })
                .collect();
        }
        q
    }

    #[test]
    fn multiuser_power_matches_uplink_dual_oracle() {
        let mut rng = substream(7, &[]);
        let n = 4;
        let sigma2 = 0.1;
        let hs: Vec<CVector> = (0..3).map(|_| random_vec(n, &mut rng)).collect();
        let taus = [1.0, 1.5, 0.5];
        let gammas: Vec<f64> = taus.iter().map(|t| sinr_target(*t)).collect();
        let q = dual_fixed_point(&hs, &gammas, sigma2);
        let oracle: f64 = q.iter().sum();

        let prof = HardwareProfile::table1();
        let set = ChannelSet::from_channels(hs.iter().map(|h| vec![h.clone()]).collect());
        let p = assemble(
            &[fdp_identity(n)],
            &set,
            &taus,
            &[sigma2; 3],
            &[true],
            &[fdp_station(n, prof)],
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let sol = solve(&p);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.bs_tx_power(&p)[0], oracle, max_relative = 1e-6);
        // multipliers relate through the row normalization
        for k in 0..3 {
            let fp = sol.lambda[k] * gammas[k] / prof.eta_prime() * sigma2;
            assert_relative_eq!(fp, q[k], max_relative = 1e-4);
        }
        let ex = extract_precoders(&p, &sol).unwrap();
        assert!(ex.feasible);
        assert!(!ex.rank_flagged());
        let rates = evaluate_rates(
            &ex.precoders.transmit(&[fdp_identity(n)]),
            &set,
            &[sigma2; 3],
        );
        for (r, t) in rates.iter().zip(&taus) {
            assert!(*r >= t - 1e-4, "{r} < {t}");
        }
    }

    #[test]
    fn hybrid_multi_bs_instance_verifies() {
        let mut rng = substream(8, &[]);
        let prof = HardwareProfile::table1();
        let (n, l, nk, nm) = (16, 4, 3, 2);
        let chans: Vec<Vec<CVector>> = (0..nk)
            .map(|_| {
                (0..nm)
                    .map(|_| random_vec(n, &mut rng).scale(1e-5))
                    .collect()
            })
            .collect();
        let set = ChannelSet::from_channels(chans);
        for arch in Architecture::ALL {
            let lm = if arch == Architecture::Fdp { n } else { l };
            let analog = build_all(arch, &set, &vec![lm; nm]).unwrap();
            let st = BaseStation::new(arch, n, lm, prof).unwrap();
            let p = assemble(
                &analog,
                &set,
                &[2.0; 3],
                &[4e-12; 3],
                &[true; 2],
                &[st, st],
                &ObjectiveWeights::Exact,
            )
            .unwrap();
            let sol = solve(&p);
            assert_eq!(sol.status, SolveStatus::Optimal, "{arch}");
            assert!(verify_solution(&sol, &p, 1e-5).unwrap().pass, "{arch}");
            assert!(sol.lambda.iter().chain(&sol.mu).all(|v| *v >= 0.0));
            let ex = extract_precoders(&p, &sol).unwrap();
            assert!(ex.feasible, "{arch}");
            let rates = evaluate_rates(&ex.precoders.transmit(&analog), &set, &[4e-12; 3]);
            assert!(rates.iter().all(|r| *r >= 2.0 - 1e-4), "{arch}: {rates:?}");
            // scaling one precoder down breaks its own rate row
            let mut shrunk = ex.precoders.clone();
            for v in &mut shrunk.d[1] {
                *v = v.scale(0.9);
            }
            let rep = verify_blocks(&outer_blocks(&shrunk), &p, 1e-5);
            assert!(rep.rate[1] < 0.0);
        }
    }

    #[test]
    fn exact_solution_has_zero_residuals() {
        let h = CVector::from_vec(vec![c(2.0, 0.0)]);
        let p = single_user(h, 2.0, 1.0, 10.0);
        let d = vec![vec![CMatrix::from_element(1, 1, c(0.75, 0.0))]];
        let rep = verify_blocks(&d, &p, 0.0);
        assert_eq!(rep.rate[0], 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn rank1_examples() {
        let d = CVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.25), c(0.0, 1.0)]);
        let r = extract_rank1(&outer(&d)).unwrap();
        assert_relative_eq!(r.vector.norm(), d.norm(), max_relative = 1e-12);
        let phase = r.vector.dotc(&d);
        assert_relative_eq!(phase.norm(), d.norm_squared(), max_relative = 1e-12);
        assert!(!r.flagged());
        let eye = extract_rank1(&CMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(eye.ratio, 1.0, max_relative = 1e-12);
        assert!(eye.flagged());
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-0.1, 0.0)]));
        assert!(extract_rank1(&bad).is_err());
    }

    #[test]
    fn rates_examples() {
        let mut rng = substream(9, &[]);
        let h = random_vec(4, &mut rng);
        let set = ChannelSet::from_channels(vec![vec![h.clone()]]);
        assert_eq!(
            evaluate_rates(&[vec![CVector::zeros(4)]], &set, &[1.0]),
            vec![0.0]
        );
        let p: f64 = 2.5;
        let w = h.scale(p.sqrt() / h.norm());
        let r = evaluate_rates(&[vec![w]], &set, &[0.3])[0];
        assert_relative_eq!(
            r,
            (1.0 + p * h.norm_squared() / 0.3).log2(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn trace_form_matches_direct_rates() {
        let mut rng = substream(10, &[]);
        let (n, nk, nm) = (8, 3, 2);
        let chans: Vec<Vec<CVector>> = (0..nk)
            .map(|_| (0..nm).map(|_| random_vec(n, &mut rng)).collect())
            .collect();
        let set = ChannelSet::from_channels(chans);
        let analog = build_all(Architecture::Fhp, &set, &[3, 3]).unwrap();
        let eff = EffectiveChannel::new(&analog, &set);
        let prec = DigitalPrecoders {
            d: (0..nk)
                .map(|_| (0..nm).map(|_| random_vec(3, &mut rng)).collect())
                .collect(),
        };
        let direct = evaluate_rates(&prec.transmit(&analog), &set, &[0.2; 3]);
        let d_full: Vec<CMatrix> = (0..nk).map(|k| outer(&prec.stacked(k))).collect();
        let trace = trace_form_rates(&d_full, &eff, &[0.2; 3]);
        for (a, b) in direct.iter().zip(&trace) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn block_matrices_are_consistent() {
        let mut rng = substream(11, &[]);
        let set =
            ChannelSet::from_channels(vec![(0..2).map(|_| random_vec(4, &mut rng)).collect()]);
        let analog = build_all(Architecture::Php, &set, &[2, 2]).unwrap();
        let st = BaseStation::new(Architecture::Php, 4, 2, HardwareProfile::table1()).unwrap();
        let p = assemble(
            &analog,
            &set,
            &[1.0],
            &[1.0],
            &[true, true],
            &[st, st],
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let q_sum = p.power.q(0) + p.power.q(1);
        let r_hat = p.power.r_hat();
        assert!((r_hat - q_sum.scale(p.power.slopes[0])).norm() < 1e-12);
        assert_eq!(p.effective.matrix(0).nrows(), 4);
    }

    #[test]
    fn dump_has_header() {
        let h = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0)]);
        let p = single_user(h, 1.0, 1.0, 10.0);
        let mut buf = Vec::new();
        p.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# hbcoop sdp dump v1"));
        assert!(text.contains("row 1 rhs"));
    }
}
