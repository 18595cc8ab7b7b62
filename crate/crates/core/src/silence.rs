//! BS silence search: exhaustive pattern enumeration, the iterative
//! convex-envelope heuristic, association sets and the dual (KKT)
//! association check.

use serde::{Deserialize, Serialize};

use crate::analog::AnalogPrecoder;
use crate::channel::ChannelSet;
use crate::digital::{
    assemble, extract_precoders, sinr_target, solve, DigitalPrecoders, ObjectiveWeights,
    SdpProblem, SdpSolution, SolveStatus,
};
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigen, outer, CMatrix};
use crate::power::{network_power, BaseStation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exhaustive search over all nonempty active sets.
    Algorithm1,
    /// Iterative envelope reweighting.
    Algorithm2,
    /// Every BS active.
    AllActive,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Algorithm1 => "algorithm1",
            Mode::Algorithm2 => "algorithm2",
            Mode::AllActive => "all-active",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algorithm1" => Ok(Mode::Algorithm1),
            "algorithm2" => Ok(Mode::Algorithm2),
            "all-active" => Ok(Mode::AllActive),
            other => Err(invalid(format!(
                "unknown mode `{other}` (expected algorithm1, algorithm2 or all-active)"
            ))),
        }
    }
}

/// Tuning of the iterative heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SilenceParams {
    /// Offset in the envelope slope update, watts.
    pub eps: f64,
    /// Stop when the per-BS transmit powers move less than this in total, watts.
    pub eps_stop: f64,
    pub max_iter: usize,
    /// Transmit power at or below which a BS counts as silent, watts.
    pub silent_threshold: f64,
}

impl Default for SilenceParams {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            eps_stop: 1e-4,
            max_iter: 20,
            silent_threshold: 1e-6,
        }
    }
}

impl SilenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps_stop > 0.0 && self.silent_threshold >= 0.0) {
            return Err(invalid(
                "eps and eps_stop must be > 0, silent_threshold >= 0",
            ));
        }
        if self.max_iter == 0 {
            return Err(invalid("max_iter must be >= 1"));
        }
        Ok(())
    }
}

/// Everything fixed while the silence pattern is searched.
#[derive(Debug, Clone, Copy)]
pub struct Instance<'a> {
    pub channels: &'a ChannelSet,
    pub analog: &'a [AnalogPrecoder],
    pub stations: &'a [BaseStation],
    pub targets: &'a [f64],
    pub noise: &'a [f64],
}

impl Instance<'_> {
    fn n_bs(&self) -> usize {
        self.stations.len()
    }

    fn n_users(&self) -> usize {
        self.targets.len()
    }

    pub fn problem(&self, pattern: &[bool], weights: &ObjectiveWeights) -> Result<SdpProblem> {
        assemble(
            self.analog,
            self.channels,
            self.targets,
            self.noise,
            pattern,
            self.stations,
            weights,
        )
    }
}

/// Serving sets: `bs_users[m]` (users served by BS m) and `user_bss[k]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Associations {
    pub bs_users: Vec<Vec<usize>>,
    pub user_bss: Vec<Vec<usize>>,
}

impl Associations {
    /// Users served by more than one BS.
    pub fn joint(&self) -> Vec<bool> {
        self.user_bss.iter().map(|s| s.len() > 1).collect()
    }
}

/// Pair `(k, m)` is associated when `||R_m d_{k,m}||^2 > threshold`.
pub fn extract_association(
    precoders: &DigitalPrecoders,
    analog: &[AnalogPrecoder],
    threshold: f64,
) -> Associations {
    let w = precoders.transmit(analog);
    let nm = analog.len();
    let mut bs_users = vec![Vec::new(); nm];
    let mut user_bss = vec![Vec::new(); w.len()];
    for (k, row) in w.iter().enumerate() {
        for (m, wkm) in row.iter().enumerate() {
            if wkm.norm_squared() > threshold {
                bs_users[m].push(k);
                user_bss[k].push(m);
            }
        }
    }
    Associations { bs_users, user_bss }
}

#[derive(Debug, Clone)]
pub struct AlgoResult {
    pub status: SolveStatus,
    pub precoders: DigitalPrecoders,
    /// Active (`true`) or silent BSs.
    pub pattern: Vec<bool>,
    /// RF transmit power per BS, watts.
    pub per_bs_tx: Vec<f64>,
    /// Sum RF transmit power.
    pub p_tx_star: f64,
    /// Sum total power recomputed from the precoders and the pattern with
    /// the exact active/silent power model.
    pub p_star: f64,
    /// Solver objective plus the pattern constant.
    pub objective: f64,
    /// Envelope-form total reported by the iterative heuristic.
    pub p_sub: Option<f64>,
    pub associations: Associations,
    /// Reweighting iterations (iterative heuristic only).
    pub iterations: usize,
    pub converged: bool,
    /// Modified objective after each solve of the iterative heuristic.
    pub objective_trace: Vec<f64>,
    pub rank_flagged: bool,
    pub rescale: f64,
    /// Duals of the solve that produced the precoders.
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

impl AlgoResult {
    fn unsolved(inst: &Instance, status: SolveStatus, pattern: Vec<bool>) -> Self {
        let nm = inst.n_bs();
        let dims: Vec<usize> = inst.stations.iter().map(|s| s.rf_chains).collect();
        Self {
            status,
            precoders: DigitalPrecoders::zeros(inst.n_users(), &dims),
            pattern,
            per_bs_tx: vec![0.0; nm],
            p_tx_star: 0.0,
            p_star: f64::NAN,
            objective: f64::INFINITY,
            p_sub: None,
            associations: Associations {
                bs_users: vec![Vec::new(); nm],
                user_bss: vec![Vec::new(); inst.n_users()],
            },
            iterations: 0,
            converged: false,
            objective_trace: Vec::new(),
            rank_flagged: false,
            rescale: 1.0,
            lambda: vec![0.0; inst.n_users()],
            mu: vec![0.0; nm],
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn active_count(&self) -> usize {
        self.pattern.iter().filter(|&&z| z).count()
    }
}

/// One solved pattern.
struct PatternSolve {
    problem: SdpProblem,
    solution: SdpSolution,
}

impl PatternSolve {
    fn score(&self) -> f64 {
        match self.solution.status {
            SolveStatus::Optimal => self.solution.objective + self.problem.kappa,
            _ => f64::INFINITY,
        }
    }
}

fn solve_pattern(
    inst: &Instance,
    pattern: &[bool],
    weights: &ObjectiveWeights,
) -> Result<PatternSolve> {
    let problem = inst.problem(pattern, weights)?;
    let solution = solve(&problem);
    Ok(PatternSolve { problem, solution })
}

/// Turns a solved pattern into a result with rank-1 precoders and an exact
/// power recomputation.
fn finalize(inst: &Instance, ps: &PatternSolve, silent_threshold: f64) -> Result<AlgoResult> {
    let pattern = ps.problem.pattern.clone();
    if ps.solution.status != SolveStatus::Optimal {
        return Ok(AlgoResult::unsolved(inst, ps.solution.status, pattern));
    }
    let ex = extract_precoders(&ps.problem, &ps.solution)?;
    if !ex.feasible {
        log::warn!("rank-1 extraction could not restore the rate targets");
        return Ok(AlgoResult::unsolved(
            inst,
            SolveStatus::NumericalFailure,
            pattern,
        ));
    }
    let per_bs_tx = ex.precoders.bs_tx_power(inst.analog);
    let p_star = network_power(inst.stations, &per_bs_tx, &pattern)?;
    let associations = extract_association(&ex.precoders, inst.analog, silent_threshold);
    Ok(AlgoResult {
        status: SolveStatus::Optimal,
        p_tx_star: per_bs_tx.iter().sum(),
        per_bs_tx,
        p_star,
        objective: ps.score(),
        p_sub: None,
        associations,
        iterations: 0,
        converged: true,
        objective_trace: Vec::new(),
        rank_flagged: ex.rank_flagged(),
        rescale: ex.rescale,
        lambda: ps.solution.lambda.clone(),
        mu: ps.solution.mu.clone(),
        pattern,
        precoders: ex.precoders,
    })
}

/// Pattern `index` in `1..2^M`: BS m is active iff bit m is set.
pub fn pattern_from_index(index: usize, n_bs: usize) -> Vec<bool> {
    (0..n_bs).map(|m| index >> m & 1 == 1).collect()
}

/// Whether `a` should replace the incumbent `b` (scores, patterns).
fn better(sa: f64, a: &[bool], sb: f64, b: &[bool]) -> bool {
    if !sa.is_finite() {
        return false;
    }
    if !sb.is_finite() {
        return true;
    }
    if (sa - sb).abs() <= 1e-8 * sa.abs().max(sb.abs()) {
        let silent = |z: &[bool]| z.iter().filter(|&&v| !v).count();
        return match silent(a).cmp(&silent(b)) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => a < b,
        };
    }
    sa < sb
}

/// Fixed all-active pattern.
pub fn all_active(inst: &Instance, params: &SilenceParams) -> Result<AlgoResult> {
    let ps = solve_pattern(inst, &vec![true; inst.n_bs()], &ObjectiveWeights::Exact)?;
    finalize(inst, &ps, params.silent_threshold)
}

/// Exhaustive search over the `2^M - 1` nonempty active sets.
pub fn algorithm1(inst: &Instance, params: &SilenceParams) -> Result<AlgoResult> {
    let nm = inst.n_bs();
    if nm == 0 || nm > 20 {
        return Err(invalid(format!(
            "exhaustive search needs 1 <= M <= 20, got {nm}"
        )));
    }
    let mut best: Option<PatternSolve> = None;
    let mut failures = 0;
    for index in 1..(1usize << nm) {
        let ps = solve_pattern(
            inst,
            &pattern_from_index(index, nm),
            &ObjectiveWeights::Exact,
        )?;
        if ps.solution.status == SolveStatus::NumericalFailure {
            failures += 1;
            log::debug!("pattern {index} failed numerically");
            continue;
        }
        let replace = match &best {
            None => true,
            Some(b) => better(
                ps.score(),
                &ps.problem.pattern,
                b.score(),
                &b.problem.pattern,
            ),
        };
        if replace {
            best = Some(ps);
        }
    }
    match best {
        Some(b) if b.score().is_finite() => finalize(inst, &b, params.silent_threshold),
        _ => {
            let status = if failures > 0 {
                SolveStatus::NumericalFailure
            } else {
                SolveStatus::Infeasible
            };
            Ok(AlgoResult::unsolved(inst, status, vec![true; nm]))
        }
    }
}

/// Iterative envelope reweighting. The modified problem is re-solved with
/// slopes `(1 - a) P_hw / (P_tx + eps) + eta'` until the per-BS transmit
/// powers settle; BSs left at or below the silent threshold are then
/// switched off and the precoders re-optimized for that pattern.
pub fn algorithm2(inst: &Instance, params: &SilenceParams) -> Result<AlgoResult> {
    params.validate()?;
    let nm = inst.n_bs();
    let all = vec![true; nm];
    let mut p_ref: Vec<f64> = inst.stations.iter().map(|s| s.profile.p_max).collect();
    let mut ps = solve_pattern(inst, &all, &ObjectiveWeights::Envelope(p_ref.clone()))?;
    if ps.solution.status != SolveStatus::Optimal {
        return Ok(AlgoResult::unsolved(inst, ps.solution.status, all));
    }
    let silent_hw: f64 = inst
        .stations
        .iter()
        .map(|s| s.profile.weight * s.profile.silent_scalar * s.hw_power())
        .sum();
    let mut trace = vec![ps.solution.objective + silent_hw];
    let mut prev_tx = ps.solution.bs_tx_power(&ps.problem);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iter {
        iterations += 1;
        p_ref = prev_tx.iter().map(|p| p.max(0.0) + params.eps).collect();
        let next = solve_pattern(inst, &all, &ObjectiveWeights::Envelope(p_ref.clone()))?;
        if next.solution.status != SolveStatus::Optimal {
            log::debug!(
                "reweighted solve {iterations} ended with {:?}; keeping the previous iterate",
                next.solution.status
            );
            break;
        }
        let tx = next.solution.bs_tx_power(&next.problem);
        let moved: f64 = tx.iter().zip(&prev_tx).map(|(a, b)| (a - b).abs()).sum();
        log::trace!("reweighted solve {iterations}: tx {tx:?} moved {moved:e}");
        trace.push(next.solution.objective + silent_hw);
        ps = next;
        prev_tx = tx;
        if moved < params.eps_stop {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!(
            "iterative silence search stopped after {iterations} iterations without settling"
        );
    }
    // envelope-form total: a P_hw for every BS plus the reweighted RF cost
    let p_sub = silent_hw
        + ps.problem
            .power
            .slopes
            .iter()
            .zip(&prev_tx)
            .map(|(s, p)| s * p)
            .sum::<f64>();

    let pattern: Vec<bool> = prev_tx
        .iter()
        .map(|&p| p > params.silent_threshold)
        .collect();
    let polished = if pattern.iter().any(|&z| z) {
        let fixed = solve_pattern(inst, &pattern, &ObjectiveWeights::Exact)?;
        if fixed.solution.status == SolveStatus::Optimal {
            Some(fixed)
        } else {
            log::debug!("silencing {pattern:?} lost feasibility; keeping every BS active");
            None
        }
    } else {
        None
    };
    let fixed = match polished {
        Some(f) => f,
        None => solve_pattern(inst, &all, &ObjectiveWeights::Exact)?,
    };
    let mut out = finalize(inst, &fixed, params.silent_threshold)?;
    out.p_sub = Some(p_sub);
    out.iterations = iterations;
    out.converged = converged;
    out.objective_trace = trace;
    Ok(out)
}

pub fn run_mode(mode: Mode, inst: &Instance, params: &SilenceParams) -> Result<AlgoResult> {
    match mode {
        Mode::Algorithm1 => algorithm1(inst, params),
        Mode::Algorithm2 => algorithm2(inst, params),
        Mode::AllActive => all_active(inst, params),
    }
}

/// Dual quantities behind the association rule.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    /// `B_{k,m} = (c_m + mu_m) R_m^H R_m + sum_{j != k} lambda_j gamma_j g_{j,m} g_{j,m}^H`.
    pub b_matrices: Vec<Vec<CMatrix>>,
    /// Association scores `g_{k,m}^H B_{k,m}^{-1} g_{k,m}` (inverse taken on
    /// the range of `R_m^H R_m`).
    pub scores: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct KktReport {
    pub certificate: DualCertificate,
    /// Served pairs `(k, m)`.
    pub served: Vec<(usize, usize)>,
    /// Largest `|lambda_k score_{k,m} - 1|` over served pairs.
    pub stationarity: f64,
    /// Largest relative shortfall of a serving BS's score from the user's best score.
    pub score_gap: f64,
    /// Largest `lambda_k score_{k,m} - 1` over all pairs.
    pub bound_violation: f64,
    /// Users with a positive target that no BS serves.
    pub unserved: Vec<usize>,
    pub consistent: bool,
}

pub fn dual_certificate(problem: &SdpProblem, solution: &SdpSolution) -> DualCertificate {
    let nk = problem.n_users();
    let nm = problem.n_bs();
    let gammas: Vec<f64> = problem.targets.iter().map(|t| sinr_target(*t)).collect();
    let mut b_matrices = vec![Vec::with_capacity(nm); nk];
    let mut scores = vec![vec![0.0; nm]; nk];
    for m in 0..nm {
        let gram = &problem.power.grams[m];
        let (vals, vecs) = hermitian_eigen(gram);
        let lmax = vals.first().copied().unwrap_or(0.0);
        let r = vals
            .iter()
            .take_while(|&&v| lmax > 0.0 && v > 1e-12 * lmax)
            .count();
        let basis = vecs.columns(0, r).into_owned();
        for k in 0..nk {
            let mut b = gram.scale(problem.power.slopes[m] + solution.mu[m]);
            for j in (0..nk).filter(|&j| j != k) {
                b += outer(&problem.effective.gains[j][m]).scale(solution.lambda[j] * gammas[j]);
            }
            let reduced = basis.ad_mul(&b) * &basis;
            let g = basis.ad_mul(&problem.effective.gains[k][m]);
            scores[k][m] = match reduced.clone().cholesky() {
                Some(ch) => g.dotc(&ch.solve(&g)).re,
                None => f64::NAN,
            };
            b_matrices[k].push(b);
        }
    }
    DualCertificate {
        lambda: solution.lambda.clone(),
        mu: solution.mu.clone(),
        b_matrices,
        scores,
    }
}

/// Checks the dual association conditions on an all-active optimal
/// solution. A pair is served when its transmit power exceeds
/// `power_threshold` relative to the largest pair power.
pub fn kkt_check(
    problem: &SdpProblem,
    solution: &SdpSolution,
    tol: f64,
    power_threshold: f64,
) -> Result<KktReport> {
    if solution.status != SolveStatus::Optimal {
        return Err(Error::InvalidState(
            "dual check needs an optimal solution".into(),
        ));
    }
    if !problem.pattern.iter().all(|&z| z) {
        return Err(Error::InvalidState(
            "dual check applies to the all-active pattern".into(),
        ));
    }
    let nk = problem.n_users();
    let nm = problem.n_bs();
    let cert = dual_certificate(problem, solution);
    let pair_power: Vec<Vec<f64>> = (0..nk)
        .map(|k| {
            (0..nm)
                .map(|m| crate::linalg::trace_product(&problem.power.grams[m], &solution.d[k][m]))
                .collect()
        })
        .collect();
    let largest = pair_power.iter().flatten().cloned().fold(0.0, f64::max);
    let mut served = Vec::new();
    let mut stationarity = 0.0f64;
    let mut score_gap = 0.0f64;
    let mut bound_violation = 0.0f64;
    let mut unserved = Vec::new();
    for k in 0..nk {
        if problem.targets[k] <= 0.0 {
            continue;
        }
        let best = cert.scores[k].iter().cloned().fold(0.0, f64::max);
        let mut any = false;
        for m in 0..nm {
            let s = cert.scores[k][m];
            let ls = cert.lambda[k] * s;
            bound_violation = bound_violation.max(ls - 1.0);
            if largest > 0.0 && pair_power[k][m] > power_threshold * largest {
                any = true;
                served.push((k, m));
                stationarity = stationarity.max((ls - 1.0).abs());
                score_gap = score_gap.max((best - s) / best);
            }
        }
        if !any {
            unserved.push(k);
        }
    }
    let consistent = unserved.is_empty()
        && stationarity <= tol
        && score_gap <= tol
        && bound_violation <= tol
        && [stationarity, score_gap, bound_violation]
            .iter()
            .all(|v| v.is_finite());
    if !consistent {
        log::debug!(
            "dual association check: stationarity {stationarity:.2e}, score gap {score_gap:.2e}, bound {bound_violation:.2e}, unserved {unserved:?}"
        );
    }
    Ok(KktReport {
        certificate: cert,
        served,
        stationarity,
        score_gap,
        bound_violation,
        unserved,
        consistent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analog::{build_all, fdp_identity, Architecture};
    use crate::linalg::{c, CVector};
    use crate::power::HardwareProfile;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_vec<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CVector {
        CVector::from_iterator(
            n,
            (0..n).map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5).scale(scale)),
        )
    }

    struct Fixture {
        set: ChannelSet,
        analog: Vec<AnalogPrecoder>,
        stations: Vec<BaseStation>,
        targets: Vec<f64>,
        noise: Vec<f64>,
    }

    impl Fixture {
        fn inst(&self) -> Instance<'_> {
            Instance {
                channels: &self.set,
                analog: &self.analog,
                stations: &self.stations,
                targets: &self.targets,
                noise: &self.noise,
            }
        }
    }

    fn fixture(
        seed: u64,
        arch: Architecture,
        nm: usize,
        nk: usize,
        tau: f64,
        zero_bs: Option<usize>,
    ) -> Fixture {
        let mut rng = substream(seed, &[]);
        let (n, l) = (16, 4);
        let lm = if arch == Architecture::Fdp { n } else { l };
        let chans: Vec<Vec<CVector>> = (0..nk)
            .map(|_| {
                (0..nm)
                    .map(|m| {
                        if Some(m) == zero_bs {
                            CVector::zeros(n)
                        } else {
                            random_vec(n, 2e-5, &mut rng)
                        }
                    })
                    .collect()
            })
            .collect();
        let set = ChannelSet::from_channels(chans);
        let analog = build_all(arch, &set, &vec![lm; nm]).unwrap();
        let st = BaseStation::new(arch, n, lm, HardwareProfile::table1()).unwrap();
        Fixture {
            set,
            analog,
            stations: vec![st; nm],
            targets: vec![tau; nk],
            noise: vec![3.98e-12; nk],
        }
    }

    #[test]
    fn single_bs_has_one_pattern() {
        let f = fixture(1, Architecture::Fhp, 1, 2, 2.0, None);
        let params = SilenceParams::default();
        let a1 = algorithm1(&f.inst(), &params).unwrap();
        let direct = all_active(&f.inst(), &params).unwrap();
        assert_eq!(a1.pattern, vec![true]);
        assert_relative_eq!(a1.p_star, direct.p_star, max_relative = 1e-12);
    }

    #[test]
    fn useless_bs_is_silenced() {
        let f = fixture(2, Architecture::Fhp, 2, 2, 2.0, Some(1));
        let params = SilenceParams::default();
        let a1 = algorithm1(&f.inst(), &params).unwrap();
        assert_eq!(a1.pattern, vec![true, false]);
        assert_eq!(a1.per_bs_tx[1], 0.0);
        let st = &f.stations[1];
        let expected = f.stations[0].total_power(a1.per_bs_tx[0], true).unwrap()
            + st.profile.silent_scalar * st.hw_power();
        assert_relative_eq!(a1.p_star, expected, max_relative = 1e-12);
        // compare against the three pattern objectives directly
        let scores: Vec<f64> = (1..4)
            .map(|i| {
                let p = f
                    .inst()
                    .problem(&pattern_from_index(i, 2), &ObjectiveWeights::Exact)
                    .unwrap();
                let s = solve(&p);
                if s.status == SolveStatus::Optimal {
                    s.objective + p.kappa
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(a1.objective, min, max_relative = 1e-9);
        let a2 = algorithm2(&f.inst(), &params).unwrap();
        assert_eq!(a2.pattern, vec![true, false]);
    }

    #[test]
    fn silence_search_orderings() {
        let params = SilenceParams::default();
        for seed in 0..6 {
            let f = fixture(10 + seed, Architecture::Fhp, 2, 3, 3.0, None);
            let a1 = algorithm1(&f.inst(), &params).unwrap();
            let act = all_active(&f.inst(), &params).unwrap();
            let a2 = algorithm2(&f.inst(), &params).unwrap();
            if !act.is_feasible() {
                continue;
            }
            assert!(a1.objective <= act.objective * (1.0 + 1e-9));
            assert!(
                a2.p_star >= a1.p_star * (1.0 - 1e-5),
                "seed {seed}: {} < {}",
                a2.p_star,
                a1.p_star
            );
            for r in [&a1, &a2, &act] {
                for (m, &z) in r.pattern.iter().enumerate() {
                    if !z {
                        assert!(r.per_bs_tx[m] <= 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn algorithm2_matches_algorithm1_for_one_bs() {
        let f = fixture(3, Architecture::Php, 1, 2, 2.0, None);
        let params = SilenceParams::default();
        let a1 = algorithm1(&f.inst(), &params).unwrap();
        let a2 = algorithm2(&f.inst(), &params).unwrap();
        assert!(a2.converged);
        assert_relative_eq!(a2.p_tx_star, a1.p_tx_star, max_relative = 1e-4);
    }

    #[test]
    fn ties_prefer_more_silent_then_lexicographic() {
        assert!(better(1.0, &[true, false], 1.0 + 1e-10, &[true, true]));
        assert!(!better(1.0, &[true, true], 1.0, &[true, false]));
        assert!(better(1.0, &[false, true], 1.0, &[true, false]));
        assert!(better(0.5, &[true, true], 1.0, &[true, false]));
        assert!(!better(f64::INFINITY, &[true], 1.0, &[true]));
    }

    #[test]
    fn infeasible_everywhere_is_reported() {
        let mut f = fixture(4, Architecture::Fhp, 2, 2, 2.0, None);
        for s in &mut f.stations {
            s.profile.p_max = 1e-12;
        }
        let r = algorithm1(&f.inst(), &SilenceParams::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        let r = algorithm2(&f.inst(), &SilenceParams::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
    }

    #[test]
    fn association_examples() {
        let analog = vec![fdp_identity(2), fdp_identity(2)];
        let zero = DigitalPrecoders::zeros(2, &[2, 2]);
        let a = extract_association(&zero, &analog, 0.0);
        assert!(a.bs_users.iter().all(|s| s.is_empty()));
        let mut p = zero.clone();
        p.d[0][0] = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        p.d[0][1] = CVector::from_vec(vec![c(0.01, 0.0), c(0.0, 0.0)]);
        p.d[1][1] = CVector::from_vec(vec![c(0.1, 0.0), c(0.0, 0.0)]);
        let mut prev = usize::MAX;
        for thr in [0.0, 1e-3, 0.05, 2.0] {
            let a = extract_association(&p, &analog, thr);
            let count: usize = a.user_bss.iter().map(Vec::len).sum();
            assert!(count <= prev);
            prev = count;
        }
        let a = extract_association(&p, &analog, 1e-6);
        assert_eq!(a.joint(), vec![true, false]);
        assert_eq!(a.bs_users, vec![vec![0], vec![0, 1]]);
    }

    #[test]
    fn scalar_kkt_oracle() {
        // one user, one FDP BS: lambda = b eta' / ||h||^2 and score = ||h||^2 / (b eta')
        let h = CVector::from_vec(vec![c(1.0, 0.5), c(-0.25, 0.0)]);
        let set = ChannelSet::from_channels(vec![vec![h.clone()]]);
        let st = BaseStation::new(Architecture::Fdp, 2, 2, HardwareProfile::table1()).unwrap();
        let p = assemble(
            &[fdp_identity(2)],
            &set,
            &[1.5],
            &[0.1],
            &[true],
            &[st],
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let sol = solve(&p);
        let eta = st.profile.eta_prime();
        assert_relative_eq!(sol.lambda[0], eta / h.norm_squared(), max_relative = 1e-6);
        let rep = kkt_check(&p, &sol, 1e-3, 1e-6).unwrap();
        assert!(rep.consistent);
        assert_relative_eq!(
            rep.certificate.scores[0][0],
            h.norm_squared() / eta,
            max_relative = 1e-9
        );
    }

    #[test]
    fn kkt_conditions_hold_on_random_instances() {
        for seed in 0..5 {
            let f = fixture(30 + seed, Architecture::Fhp, 2, 3, 2.0, None);
            let p = f
                .inst()
                .problem(&[true, true], &ObjectiveWeights::Exact)
                .unwrap();
            let sol = solve(&p);
            if sol.status != SolveStatus::Optimal {
                continue;
            }
            let rep = kkt_check(&p, &sol, 1e-3, 1e-6).unwrap();
            assert!(
                rep.consistent,
                "seed {seed}: {:?}",
                (rep.stationarity, rep.score_gap, rep.bound_violation)
            );
        }
    }

    #[test]
    fn zero_duals_are_inconsistent() {
        let f = fixture(5, Architecture::Fhp, 1, 1, 2.0, None);
        let p = f.inst().problem(&[true], &ObjectiveWeights::Exact).unwrap();
        let mut sol = solve(&p);
        sol.lambda = vec![0.0];
        assert!(!kkt_check(&p, &sol, 1e-3, 1e-6).unwrap().consistent);
    }

    #[test]
    fn scores_ignore_column_phase() {
        let f = fixture(6, Architecture::Fhp, 2, 2, 2.0, None);
        let p = f
            .inst()
            .problem(&[true, true], &ObjectiveWeights::Exact)
            .unwrap();
        let sol = solve(&p);
        let base = dual_certificate(&p, &sol).scores;
        let mut analog = f.analog.clone();
        let rot = crate::linalg::cis(0.7);
        for v in analog[0].matrix.column_mut(1).iter_mut() {
            *v *= rot;
        }
        let p2 = assemble(
            &analog,
            &f.set,
            &f.targets,
            &f.noise,
            &[true, true],
            &f.stations,
            &ObjectiveWeights::Exact,
        )
        .unwrap();
        let rotated = dual_certificate(&p2, &sol).scores;
        for (a, b) in base.iter().flatten().zip(rotated.iter().flatten()) {
            assert_relative_eq!(a, b, max_relative = 1e-9);
        }
    }

    #[test]
    fn mode_parses() {
        for m in [Mode::Algorithm1, Mode::Algorithm2, Mode::AllActive] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("nope".parse::<Mode>().is_err());
    }
}
