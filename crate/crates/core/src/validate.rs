//! Self-checks run by `hbcoop validate`: closed-form oracles and
//! structural properties. Each oracle takes the implementation under test
//! as a function so that deliberately broken variants can be injected.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::analog::{build_all, egt_fhp, Architecture};
use crate::channel::{array_response, path_loss_db, PathLossParams};
use crate::conic::{self, BlockSdp, ConicStatus, Row, Settings};
use crate::digital::{
    evaluate_rates, extract_precoders, sinr_target, trace_form_rates, DigitalPrecoders,
    EffectiveChannel, ObjectiveWeights, SolveStatus,
};
use crate::error::{invalid, Result};
use crate::linalg::{c, cis, outer, CMatrix, CVector, C64};
use crate::montecarlo::{realization_channels, Scenario};
use crate::power::{hw_power, BaseStation, HardwareProfile};
use crate::rng::substream;
use crate::silence::{kkt_check, Instance, Mode};

/// Path loss in dB for `(distance, is_los, params)` without shadowing.
pub type PathLossFn = dyn Fn(f64, bool, &PathLossParams) -> Result<f64> + Sync;
/// Minimum transmit power serving one user over channel `h` at rate
/// `tau` and noise power `noise`; `None` when infeasible under `p_max`.
pub type SingleUserFn = dyn Fn(&CVector, f64, f64, f64) -> Result<Option<f64>> + Sync;

/// Deliberate defects used to show that the oracles catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    None,
    /// Path-loss exponent off by one.
    PathLossExponent,
    /// Rate constraint with its inequality reversed.
    RateSign,
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mutation::None => "none",
            Mutation::PathLossExponent => "path-loss-exponent",
            Mutation::RateSign => "rate-sign",
        })
    }
}

impl FromStr for Mutation {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mutation::None),
            "path-loss-exponent" => Ok(Mutation::PathLossExponent),
            "rate-sign" => Ok(Mutation::RateSign),
            _ => Err(invalid(format!("unknown mutation '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    fn from_result(name: &str, r: Result<Check>) -> Self {
        r.unwrap_or_else(|e| Check::new(name, false, format!("error: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ch in &self.checks {
            writeln!(
                f,
                "{} {:<20} {}",
                if ch.pass { "PASS" } else { "FAIL" },
                ch.name,
                ch.detail
            )?;
        }
        Ok(())
    }
}

fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    CVector::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            c(re, im).unscale(2f64.sqrt())
        }),
    )
}

pub fn library_path_loss(d: f64, los: bool, p: &PathLossParams) -> Result<f64> {
    let quiet = PathLossParams {
        shadow_sigma_los_db: 0.0,
        shadow_sigma_nlos_db: 0.0,
        ..*p
    };
    path_loss_db(d, los, &quiet, &mut substream(0, &[]))
}

fn mutated_path_loss(d: f64, los: bool, p: &PathLossParams) -> Result<f64> {
    let wrong = PathLossParams {
        exponent_los: p.exponent_los + 1.0,
        exponent_nlos: p.exponent_nlos + 1.0,
        ..*p
    };
    library_path_loss(d, los, &wrong)
}

/// Free-space reference at 1 m plus the log-distance term, against the
/// hook at several distances for both link states.
pub fn path_loss_oracle(hook: &PathLossFn) -> Result<Check> {
    let p = PathLossParams::default();
    let lambda = 299_792_458.0 / 28e9;
    let reference = 20.0 * (4.0 * std::f64::consts::PI / lambda).log10();
    let mut worst: f64 = 0.0;
    for &d in &[1.0, 10.0, 37.5, 100.0, 250.0] {
        for (los, n) in [(true, p.exponent_los), (false, p.exponent_nlos)] {
            let expected = reference + 10.0 * n * f64::log10(d);
            worst = worst.max((hook(d, los, &p)? - expected).abs());
        }
    }
    Ok(Check::new(
        "path-loss",
        worst < 1e-9,
        format!("max deviation {worst:.3e} dB"),
    ))
}

pub fn array_norm_check() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for n in [1, 4, 16, 64, 256] {
        for i in 0..=36 {
            let theta = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / 36.0;
            worst = worst.max((array_response(theta, n)?.norm() - 1.0).abs());
        }
    }
    Ok(Check::new(
        "array-norm",
        worst < 1e-12,
        format!("max |norm-1| {worst:.3e}"),
    ))
}

/// Best gain `|h^H w|` over all unit-modulus weights of magnitude
/// `modulus` with phases on a `levels`-point grid.
pub fn phase_grid_max(h: &[C64], modulus: f64, levels: usize) -> f64 {
    let total = levels.pow(h.len() as u32);
    let mut best: f64 = 0.0;
    for idx in 0..total {
        let mut code = idx;
        let mut acc = c(0.0, 0.0);
        for hi in h {
            let phase = 2.0 * std::f64::consts::PI * (code % levels) as f64 / levels as f64;
            code /= levels;
            acc += hi.conj() * cis(phase) * modulus;
        }
        best = best.max(acc.norm());
    }
    best
}

/// Equal-gain single-user precoder against a 16-level exhaustive search.
pub fn egt_oracle(count: usize) -> Result<Check> {
    let (n, l, levels) = (4usize, 1usize, 16usize);
    let mut rng = substream(101, &[]);
    let modulus = 1.0 / ((l * n) as f64).sqrt();
    let mut closed_form_err: f64 = 0.0;
    let mut below_grid = 0;
    for _ in 0..count {
        let h = gaussian_vector(n, &mut rng);
        let a = egt_fhp(std::slice::from_ref(&h), l)?;
        let achieved = h.dotc(&a.matrix.column(0).into_owned()).norm();
        let sum_abs: f64 = h.iter().map(|v| v.norm()).sum();
        closed_form_err = closed_form_err.max((achieved - sum_abs * modulus).abs());
        let grid = phase_grid_max(h.as_slice(), modulus, levels);
        let slack = (1.0 - (std::f64::consts::PI / levels as f64).cos()) * sum_abs * modulus;
        if achieved < grid - slack {
            below_grid += 1;
        }
    }
    Ok(Check::new(
        "egt-grid",
        closed_form_err < 1e-12 && below_grid == 0,
        format!(
            "{count} channels, closed-form error {closed_form_err:.2e}, below grid {below_grid}"
        ),
    ))
}

/// Library pipeline for one FDP station and one user.
pub fn library_single_user(h: &CVector, tau: f64, noise: f64, p_max: f64) -> Result<Option<f64>> {
    let set = crate::channel::ChannelSet::from_channels(vec![vec![h.clone()]]);
    let n = h.len();
    let profile = HardwareProfile {
        p_max,
        ..HardwareProfile::table1()
    };
    let stations = [BaseStation::new(Architecture::Fdp, n, n, profile)?];
    let analog = build_all(Architecture::Fdp, &set, &[n])?;
    let inst = Instance {
        channels: &set,
        analog: &analog,
        stations: &stations,
        targets: &[tau],
        noise: &[noise],
    };
    let problem = inst.problem(&[true], &ObjectiveWeights::Exact)?;
    let sol = crate::digital::solve(&problem);
    match sol.status {
        SolveStatus::Optimal => {
            let ex = extract_precoders(&problem, &sol)?;
            Ok(Some(ex.precoders.bs_tx_power(&analog).iter().sum()))
        }
        SolveStatus::Infeasible => Ok(None),
        SolveStatus::NumericalFailure => {
            Err(crate::error::Error::InvalidState("solver failed".into()))
        }
    }
}

/// Direct conic program `min tr D` over one user's rate row, with the
/// rate inequality reversed.
fn mutated_single_user(h: &CVector, tau: f64, noise: f64, p_max: f64) -> Result<Option<f64>> {
    let gamma = sinr_target(tau);
    let t = gamma * noise / h.norm_squared();
    let n = h.len();
    let one = |v: f64| CMatrix::from_element(1, 1, c(v, 0.0));
    let rate = Row {
        terms: vec![(0, outer(h).scale(t / (gamma * noise))), (1, one(1.0))],
        rhs: 1.0,
    };
    let power = Row {
        terms: vec![(0, CMatrix::identity(n, n).scale(t / p_max)), (2, one(1.0))],
        rhs: 1.0,
    };
    let sdp = BlockSdp {
        block_dims: vec![n, 1, 1],
        objective: vec![CMatrix::identity(n, n), one(0.0), one(0.0)],
        rows: vec![rate, power],
    };
    let sol = conic::solve(&sdp, &Settings::default());
    match sol.status {
        ConicStatus::Optimal => Ok(Some(t * sol.x[0].trace().re)),
        ConicStatus::PrimalInfeasible => Ok(None),
        _ => Err(crate::error::Error::InvalidState("solver failed".into())),
    }
}

/// Matched-filter closed form `(2^tau - 1) sigma^2 / |h|^2` over physical
/// single-user channels.
pub fn single_user_oracle(hook: &SingleUserFn, count: usize) -> Result<Check> {
    let scenario = Scenario {
        n_users: 1,
        n_antennas: 16,
        rf_chains: 16,
        architecture: Architecture::Fdp,
        target: 4.0,
        realizations: count,
        seed: 7,
        mode: Mode::AllActive,
        ..Scenario::table1(1)
    };
    let noise = scenario.noise_watts();
    let p_max = scenario.profile.p_max;
    let mut worst: f64 = 0.0;
    let mut mismatched = 0;
    let mut infeasible = 0;
    for r in 0..count {
        let set = realization_channels(&scenario, r)?;
        let h = set.h(0, 0);
        let expected = sinr_target(scenario.target) * noise / h.norm_squared();
        match hook(h, scenario.target, noise, p_max)? {
            Some(p) => worst = worst.max((p - expected).abs() / expected),
            None if expected > p_max => infeasible += 1,
            None => mismatched += 1,
        }
    }
    Ok(Check::new(
        "single-user",
        worst < 1e-6 && mismatched == 0,
        format!("{count} channels, max relative error {worst:.2e}, infeasible {infeasible}, wrong status {mismatched}"),
    ))
}

/// Direct rate formula against the trace form with `D_k = d_k d_k^H`.
pub fn trace_identity_check(count: usize) -> Result<Check> {
    let mut rng = substream(103, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let (n, l, nk, nm) = (8, 3, 3, 2);
        let set = crate::channel::ChannelSet::from_channels(
            (0..nk)
                .map(|_| (0..nm).map(|_| gaussian_vector(n, &mut rng)).collect())
                .collect(),
        );
        let analog = build_all(Architecture::Fhp, &set, &[l; 2])?;
        let eff = EffectiveChannel::new(&analog, &set);
        let prec = DigitalPrecoders {
            d: (0..nk)
                .map(|_| (0..nm).map(|_| gaussian_vector(l, &mut rng)).collect())
                .collect(),
        };
        let noise: Vec<f64> = (0..nk).map(|_| rng.random_range(0.05..1.0)).collect();
        let direct = evaluate_rates(&prec.transmit(&analog), &set, &noise);
        let d_full: Vec<CMatrix> = (0..nk).map(|k| outer(&prec.stacked(k))).collect();
        let trace = trace_form_rates(&d_full, &eff, &noise);
        for (a, b) in direct.iter().zip(&trace) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(Check::new(
        "trace-identity",
        worst < 1e-10,
        format!("{count} instances, max |difference| {worst:.2e}"),
    ))
}

/// FDP transmit power never exceeds FHP on the same channels.
pub fn nesting_check(count: usize) -> Result<Check> {
    let base = Scenario {
        n_users: 2,
        n_antennas: 16,
        rf_chains: 4,
        target: 3.0,
        realizations: count,
        seed: 11,
        mode: Mode::AllActive,
        ..Scenario::table1(2)
    };
    let fdp = Scenario {
        architecture: Architecture::Fdp,
        rf_chains: base.n_antennas,
        ..base.clone()
    };
    let mut pairs = 0;
    let mut violations = 0;
    for r in 0..count {
        let a = crate::montecarlo::solve_realization(&fdp, r)?.result;
        let b = crate::montecarlo::solve_realization(&base, r)?.result;
        if a.is_feasible() && b.is_feasible() {
            pairs += 1;
            if a.p_tx_star > b.p_tx_star * (1.0 + 1e-5) {
                violations += 1;
            }
        }
    }
    Ok(Check::new(
        "nesting",
        violations == 0 && pairs > 0,
        format!("{pairs} jointly feasible pairs, {violations} violations"),
    ))
}

/// Dual association scores on all-active feasible instances.
pub fn kkt_spot_check(count: usize) -> Result<Check> {
    let scenario = Scenario {
        n_users: 3,
        n_antennas: 16,
        rf_chains: 4,
        target: 2.0,
        seed: 13,
        mode: Mode::AllActive,
        ..Scenario::table1(2)
    };
    let stations = scenario.stations()?;
    let targets = scenario.user_targets();
    let noise = vec![scenario.noise_watts(); scenario.n_users];
    let (mut checked, mut failed, mut worst) = (0, 0, 0f64);
    let mut r = 0;
    while checked < count && r < 20 * count {
        let set = realization_channels(&scenario, r)?;
        r += 1;
        let analog = build_all(
            scenario.architecture,
            &set,
            &vec![scenario.rf_chains; scenario.n_bs],
        )?;
        let inst = Instance {
            channels: &set,
            analog: &analog,
            stations: &stations,
            targets: &targets,
            noise: &noise,
        };
        let problem = inst.problem(&vec![true; scenario.n_bs], &ObjectiveWeights::Exact)?;
        let sol = crate::digital::solve(&problem);
        if sol.status != SolveStatus::Optimal {
            continue;
        }
        let rep = kkt_check(&problem, &sol, 1e-3, 1e-6)?;
        checked += 1;
        worst = worst.max(rep.stationarity).max(rep.score_gap);
        if !rep.consistent {
            failed += 1;
        }
    }
    Ok(Check::new(
        "kkt",
        checked == count && failed == 0,
        format!("{checked} instances, {failed} inconsistent, worst residual {worst:.2e}"),
    ))
}

/// Hardware power at 64 antennas and 4 RF chains with the reference
/// profile: 18.07, 13.176 and 4.141 W.
pub fn hardware_power_check() -> Result<Check> {
    let prof = HardwareProfile::table1();
    let got = [
        hw_power(Architecture::Fdp, 64, 64, &prof),
        hw_power(Architecture::Fhp, 64, 4, &prof),
        hw_power(Architecture::Php, 64, 4, &prof),
    ];
    let want = [18.07, 13.176, 4.141];
    let worst = got
        .iter()
        .zip(&want)
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    Ok(Check::new(
        "hardware-power",
        worst < 1e-3 && got[0] > got[1] && got[1] > got[2],
        format!(
            "FDP {:.3} W, FHP {:.3} W, PHP {:.3} W",
            got[0], got[1], got[2]
        ),
    ))
}

/// Every suite, with `mutation` injected where it applies.
pub fn run_suite(mutation: Mutation) -> Report {
    let path_loss: &PathLossFn = if mutation == Mutation::PathLossExponent {
        &mutated_path_loss
    } else {
        &library_path_loss
    };
    let single: &SingleUserFn = if mutation == Mutation::RateSign {
        &mutated_single_user
    } else {
        &library_single_user
    };
    let checks = vec![
        Check::from_result("path-loss", path_loss_oracle(path_loss)),
        Check::from_result("array-norm", array_norm_check()),
        Check::from_result("egt-grid", egt_oracle(50)),
        Check::from_result("single-user", single_user_oracle(single, 100)),
        Check::from_result("trace-identity", trace_identity_check(100)),
        Check::from_result("nesting", nesting_check(20)),
        Check::from_result("kkt", kkt_spot_check(20)),
        Check::from_result("hardware-power", hardware_power_check()),
    ];
    Report { checks }
}
