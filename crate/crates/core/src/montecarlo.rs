//! Scenario definition, placement, the realization loop and aggregate
//! metrics, plus CSV/JSON export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analog::{build_all, AnalogPrecoder, Architecture};
use crate::channel::{
    generate_channel_set, generate_ofdm_channel_set, ChannelSet, ClusterParams, LinkModel,
    PathLossParams, Point,
};
use crate::digital::SolveStatus;
use crate::error::{invalid, Error, Result};
use crate::ofdm::{solve_ofdm, OfdmResult, OfdmSettings};
use crate::power::{dbm_to_watts, BaseStation, HardwareProfile};
use crate::rng::{derive_seed, substream, tag};
use crate::silence::{run_mode, AlgoResult, Instance, Mode, SilenceParams};

fn default_noise_dbm() -> f64 {
    -84.0
}
fn default_realizations() -> usize {
    500
}
fn default_seed() -> u64 {
    1
}
fn default_area() -> f64 {
    200.0
}
fn default_mode() -> Mode {
    Mode::Algorithm1
}

/// One simulated network configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n_bs: usize,
    pub n_users: usize,
    pub n_antennas: usize,
    pub rf_chains: usize,
    pub architecture: Architecture,
    /// Rate target shared by every user, bit/s/Hz.
    pub target: f64,
    /// Per-user targets overriding `target`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<f64>>,
    #[serde(default = "default_noise_dbm")]
    pub noise_dbm: f64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Side of the square drop area centered on the origin, meters.
    #[serde(default = "default_area")]
    pub area_side: f64,
    /// Explicit BS coordinates replacing the built-in layouts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bs_positions: Option<Vec<Point>>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub path_loss: PathLossParams,
    #[serde(default)]
    pub cluster: ClusterParams,
    #[serde(default)]
    pub profile: HardwareProfile,
    #[serde(default)]
    pub silence: SilenceParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ofdm: Option<OfdmSettings>,
}

impl Scenario {
    /// Reference network: FHP, 64 antennas, 4 RF chains, 4 users at 4 bit/s/Hz.
    pub fn table1(n_bs: usize) -> Self {
        Self {
            n_bs,
            n_users: 4,
            n_antennas: 64,
            rf_chains: 4,
            architecture: Architecture::Fhp,
            target: 4.0,
            targets: None,
            noise_dbm: default_noise_dbm(),
            realizations: default_realizations(),
            seed: default_seed(),
            area_side: default_area(),
            bs_positions: None,
            mode: default_mode(),
            path_loss: PathLossParams::default(),
            cluster: ClusterParams::default(),
            profile: HardwareProfile::table1(),
            silence: SilenceParams::default(),
            ofdm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 {
            return Err(invalid("n_bs must be >= 1"));
        }
        if self.n_users == 0 {
            return Err(invalid("n_users must be >= 1"));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations must be >= 1"));
        }
        self.architecture.check(self.n_antennas, self.rf_chains)?;
        if !(self.target >= 0.0 && self.target.is_finite()) {
            return Err(invalid("target must be finite and >= 0"));
        }
        if let Some(t) = &self.targets {
            if t.len() != self.n_users || t.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(invalid("targets must list one finite value >= 0 per user"));
            }
        }
        if !self.noise_dbm.is_finite() {
            return Err(invalid("noise_dbm must be finite"));
        }
        if !(self.area_side > 0.0) {
            return Err(invalid("area_side must be > 0"));
        }
        self.bs_layout()?;
        self.path_loss.validate()?;
        self.cluster.validate()?;
        self.profile.validate()?;
        self.silence.validate()?;
        if let Some(o) = &self.ofdm {
            o.validate()?;
        }
        Ok(())
    }

    pub fn bs_layout(&self) -> Result<Vec<Point>> {
        match &self.bs_positions {
            Some(p) if p.len() == self.n_bs => Ok(p.clone()),
            Some(p) => Err(invalid(format!(
                "bs_positions lists {} BSs, n_bs is {}",
                p.len(),
                self.n_bs
            ))),
            None => place_bs(self.n_bs),
        }
    }

    pub fn user_targets(&self) -> Vec<f64> {
        self.targets
            .clone()
            .unwrap_or_else(|| vec![self.target; self.n_users])
    }

    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn stations(&self) -> Result<Vec<BaseStation>> {
        let bs = BaseStation::new(
            self.architecture,
            self.n_antennas,
            self.rf_chains,
            self.profile,
        )?;
        Ok(vec![bs; self.n_bs])
    }
}

/// Built-in layouts: center; (+/-50, 0); plus (0, 50); (+/-50, +/-50);
/// the four corners plus the center.
pub fn place_bs(n_bs: usize) -> Result<Vec<Point>> {
    Ok(match n_bs {
        1 => vec![[0.0, 0.0]],
        2 => vec![[-50.0, 0.0], [50.0, 0.0]],
        3 => vec![[-50.0, 0.0], [50.0, 0.0], [0.0, 50.0]],
        4 => vec![[-50.0, -50.0], [50.0, -50.0], [-50.0, 50.0], [50.0, 50.0]],
        5 => vec![
            [-50.0, -50.0],
            [50.0, -50.0],
            [-50.0, 50.0],
            [50.0, 50.0],
            [0.0, 0.0],
        ],
        _ => {
            return Err(invalid(format!(
                "built-in layouts cover 1..=5 BSs, got {n_bs}; give bs_positions"
            )))
        }
    })
}

/// I.i.d. uniform positions on the square of the given side centered on
/// the origin.
pub fn drop_users<R: Rng + ?Sized>(n_users: usize, area_side: f64, rng: &mut R) -> Vec<Point> {
    let h = area_side / 2.0;
    (0..n_users)
        .map(|_| [rng.random_range(-h..=h), rng.random_range(-h..=h)])
        .collect()
}

/// Users and channel seed of realization `index`.
pub fn realization_inputs(scenario: &Scenario, index: usize) -> (Vec<Point>, u64) {
    let mut rng = substream(scenario.seed, &[tag::REALIZATION, index as u64, tag::USERS]);
    let users = drop_users(scenario.n_users, scenario.area_side, &mut rng);
    (
        users,
        derive_seed(
            scenario.seed,
            &[tag::REALIZATION, index as u64, tag::CHANNEL],
        ),
    )
}

pub fn realization_channels(scenario: &Scenario, index: usize) -> Result<ChannelSet> {
    let (users, seed) = realization_inputs(scenario, index);
    let model = LinkModel {
        cluster: &scenario.cluster,
        path_loss: &scenario.path_loss,
    };
    generate_channel_set(
        &scenario.bs_layout()?,
        &users,
        &vec![scenario.n_antennas; scenario.n_bs],
        model,
        seed,
    )
}

/// A solved single-carrier realization.
#[derive(Debug, Clone)]
pub struct Solved {
    pub channels: ChannelSet,
    pub analog: Vec<AnalogPrecoder>,
    pub result: AlgoResult,
}

pub fn solve_realization(scenario: &Scenario, index: usize) -> Result<Solved> {
    let channels = realization_channels(scenario, index)?;
    let analog = build_all(
        scenario.architecture,
        &channels,
        &vec![scenario.rf_chains; scenario.n_bs],
    )?;
    let stations = scenario.stations()?;
    let targets = scenario.user_targets();
    let noise = vec![scenario.noise_watts(); scenario.n_users];
    let inst = Instance {
        channels: &channels,
        analog: &analog,
        stations: &stations,
        targets: &targets,
        noise: &noise,
    };
    let result = run_mode(scenario.mode, &inst, &scenario.silence)?;
    Ok(Solved {
        channels,
        analog,
        result,
    })
}

pub fn solve_ofdm_realization(scenario: &Scenario, index: usize) -> Result<OfdmResult> {
    let settings = scenario
        .ofdm
        .ok_or_else(|| invalid("scenario has no ofdm section"))?;
    let (users, seed) = realization_inputs(scenario, index);
    let model = LinkModel {
        cluster: &scenario.cluster,
        path_loss: &scenario.path_loss,
    };
    let set = generate_ofdm_channel_set(
        &scenario.bs_layout()?,
        &users,
        &vec![scenario.n_antennas; scenario.n_bs],
        model,
        settings.n_subcarriers,
        seed,
    )?;
    let targets = vec![scenario.user_targets(); settings.n_subcarriers];
    let noise = vec![scenario.noise_watts(); scenario.n_users];
    solve_ofdm(
        &set,
        &scenario.stations()?,
        &targets,
        &noise,
        scenario.mode,
        &scenario.silence,
        &settings,
    )
}

/// Per-realization log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub status: SolveStatus,
    pub pattern: Vec<bool>,
    pub per_bs_tx: Vec<f64>,
    pub p_tx: f64,
    pub p_total: Option<f64>,
    pub p_sub: Option<f64>,
    pub iterations: usize,
    pub user_bss: Vec<Vec<usize>>,
    pub rank_flagged: bool,
    pub sum_spectral_efficiency: Option<f64>,
    pub energy_efficiency: Option<f64>,
    pub feasible_subcarriers: Option<usize>,
}

impl RealizationRecord {
    pub fn from_result(index: usize, r: &AlgoResult) -> Self {
        let feasible = r.is_feasible();
        Self {
            index,
            status: r.status,
            pattern: r.pattern.clone(),
            per_bs_tx: r.per_bs_tx.clone(),
            p_tx: r.p_tx_star,
            p_total: feasible.then_some(r.p_star),
            p_sub: r.p_sub,
            iterations: r.iterations,
            user_bss: r.associations.user_bss.clone(),
            rank_flagged: r.rank_flagged,
            sum_spectral_efficiency: None,
            energy_efficiency: None,
            feasible_subcarriers: None,
        }
    }

    /// A realization counts as feasible when every subcarrier is; a
    /// numerical failure on any subcarrier marks the whole realization.
    pub fn from_ofdm(index: usize, r: &OfdmResult) -> Self {
        let statuses = r.per_subcarrier.iter().map(|s| s.status);
        let status = if statuses.clone().any(|s| s == SolveStatus::NumericalFailure) {
            SolveStatus::NumericalFailure
        } else if statuses.clone().all(|s| s == SolveStatus::Optimal) {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        };
        let mut user_bss: Vec<Vec<usize>> = vec![Vec::new(); r.rates.first().map_or(0, Vec::len)];
        for sc in r.per_subcarrier.iter().filter(|s| s.is_feasible()) {
            for (k, bss) in sc.associations.user_bss.iter().enumerate() {
                for &m in bss {
                    if !user_bss[k].contains(&m) {
                        user_bss[k].push(m);
                    }
                }
            }
        }
        for s in &mut user_bss {
            s.sort_unstable();
        }
        Self {
            index,
            status,
            pattern: r.bs_active.clone(),
            per_bs_tx: r.per_bs_tx.clone(),
            p_tx: r.per_bs_tx.iter().sum(),
            p_total: Some(r.sum_power),
            p_sub: None,
            iterations: r.per_subcarrier.iter().map(|s| s.iterations).sum(),
            user_bss,
            rank_flagged: r.per_subcarrier.iter().any(|s| s.rank_flagged),
            sum_spectral_efficiency: Some(r.sum_spectral_efficiency),
            energy_efficiency: Some(r.energy_efficiency),
            feasible_subcarriers: Some(r.feasible_subcarriers()),
        }
    }

    fn failure(index: usize, n_bs: usize, n_users: usize) -> Self {
        Self {
            index,
            status: SolveStatus::NumericalFailure,
            pattern: vec![false; n_bs],
            per_bs_tx: vec![0.0; n_bs],
            p_tx: 0.0,
            p_total: None,
            p_sub: None,
            iterations: 0,
            user_bss: vec![Vec::new(); n_users],
            rank_flagged: false,
            sum_spectral_efficiency: None,
            energy_efficiency: None,
            feasible_subcarriers: None,
        }
    }
}

/// Runs one realization and never fails: errors become numerical-failure
/// records.
pub fn realize(scenario: &Scenario, index: usize) -> RealizationRecord {
    let out = if scenario.ofdm.is_some() {
        solve_ofdm_realization(scenario, index).map(|r| RealizationRecord::from_ofdm(index, &r))
    } else {
        solve_realization(scenario, index).map(|s| RealizationRecord::from_result(index, &s.result))
    };
    out.unwrap_or_else(|e| {
        log::warn!("realization {index} failed: {e}");
        RealizationRecord::failure(index, scenario.n_bs, scenario.n_users)
    })
}

/// Aggregate statistics of a run. Probabilities exclude numerical
/// failures from their denominators; means are over feasible realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub realizations: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub numerical_failures: usize,
    pub infeasibility_probability: Option<f64>,
    pub numerical_failure_rate: f64,
    pub mean_sum_tx_w: Option<f64>,
    pub mean_total_power_w: Option<f64>,
    pub joint_transmission_probability: Option<f64>,
    pub activation_probability: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub mean_energy_efficiency: Option<f64>,
    pub mean_sum_spectral_efficiency: Option<f64>,
    pub rank_flagged: usize,
    /// Sorted per-BS RF power over every BS of feasible realizations.
    pub cdf_all_w: Vec<f64>,
    /// Sorted per-BS RF power over active BSs only.
    pub cdf_active_w: Vec<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl Metrics {
    /// Aggregates records in index order.
    pub fn from_records(records: &[RealizationRecord], mode: Mode) -> Self {
        let feasible: Vec<&RealizationRecord> = records
            .iter()
            .filter(|r| r.status == SolveStatus::Optimal)
            .collect();
        let infeasible = records
            .iter()
            .filter(|r| r.status == SolveStatus::Infeasible)
            .count();
        let failures = records
            .iter()
            .filter(|r| r.status == SolveStatus::NumericalFailure)
            .count();
        let counted = records.len() - failures;
        let users: usize = feasible.iter().map(|r| r.user_bss.len()).sum();
        let joint = feasible
            .iter()
            .flat_map(|r| r.user_bss.iter())
            .filter(|s| s.len() > 1)
            .count();
        let bs_slots: usize = feasible.iter().map(|r| r.pattern.len()).sum();
        let active = feasible
            .iter()
            .flat_map(|r| r.pattern.iter())
            .filter(|&&z| z)
            .count();
        let mut cdf_all: Vec<f64> = feasible
            .iter()
            .flat_map(|r| r.per_bs_tx.iter().copied())
            .collect();
        let mut cdf_active: Vec<f64> = feasible
            .iter()
            .flat_map(|r| {
                r.per_bs_tx
                    .iter()
                    .zip(&r.pattern)
                    .filter(|(_, &z)| z)
                    .map(|(p, _)| *p)
            })
            .collect();
        cdf_all.sort_by(f64::total_cmp);
        cdf_active.sort_by(f64::total_cmp);
        let ofdm = records.iter().any(|r| r.energy_efficiency.is_some());
        let solved = || {
            records
                .iter()
                .filter(|r| r.status != SolveStatus::NumericalFailure)
        };
        Self {
            realizations: records.len(),
            feasible: feasible.len(),
            infeasible,
            numerical_failures: failures,
            infeasibility_probability: (counted > 0).then(|| infeasible as f64 / counted as f64),
            numerical_failure_rate: failures as f64 / records.len().max(1) as f64,
            mean_sum_tx_w: mean(feasible.iter().map(|r| r.p_tx)),
            mean_total_power_w: mean(feasible.iter().filter_map(|r| r.p_total)),
            joint_transmission_probability: (users > 0).then(|| joint as f64 / users as f64),
            activation_probability: (bs_slots > 0).then(|| active as f64 / bs_slots as f64),
            mean_iterations: if mode == Mode::Algorithm2 {
                mean(feasible.iter().map(|r| r.iterations as f64))
            } else {
                None
            },
            mean_energy_efficiency: if ofdm {
                mean(solved().filter_map(|r| r.energy_efficiency))
            } else {
                None
            },
            mean_sum_spectral_efficiency: if ofdm {
                mean(solved().filter_map(|r| r.sum_spectral_efficiency))
            } else {
                None
            },
            rank_flagged: records.iter().filter(|r| r.rank_flagged).count(),
            cdf_all_w: cdf_all,
            cdf_active_w: cdf_active,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub records: Vec<RealizationRecord>,
}

/// Runs every realization on `workers` threads (0 = rayon default). The
/// reduction is sequential in realization order, so the output does not
/// depend on the worker count.
pub fn run(scenario: &Scenario, workers: usize) -> Result<RunOutput> {
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker pool: {e}")))?;
    let records: Vec<RealizationRecord> = pool.install(|| {
        (0..scenario.realizations)
            .into_par_iter()
            .map(|r| realize(scenario, r))
            .collect()
    });
    let metrics = Metrics::from_records(&records, scenario.mode);
    if metrics.numerical_failure_rate >= 0.01 {
        log::warn!(
            "numerical failures in {:.1}% of realizations",
            100.0 * metrics.numerical_failure_rate
        );
    }
    Ok(RunOutput { metrics, records })
}

/// Parameter varied across a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", content = "values", rename_all = "snake_case")]
pub enum Sweep {
    Target(Vec<f64>),
    NBs(Vec<usize>),
    NUsers(Vec<usize>),
    NAntennas(Vec<usize>),
    RfChains(Vec<usize>),
    BlockageBeta(Vec<f64>),
    Architecture(Vec<Architecture>),
    Mode(Vec<Mode>),
}

impl Sweep {
    pub fn name(&self) -> &'static str {
        match self {
            Sweep::Target(_) => "target",
            Sweep::NBs(_) => "n_bs",
            Sweep::NUsers(_) => "n_users",
            Sweep::NAntennas(_) => "n_antennas",
            Sweep::RfChains(_) => "rf_chains",
            Sweep::BlockageBeta(_) => "blockage_beta",
            Sweep::Architecture(_) => "architecture",
            Sweep::Mode(_) => "mode",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Sweep::Target(v) | Sweep::BlockageBeta(v) => v.len(),
            Sweep::NBs(v) | Sweep::NUsers(v) | Sweep::NAntennas(v) | Sweep::RfChains(v) => v.len(),
            Sweep::Architecture(v) => v.len(),
            Sweep::Mode(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scenario at point `i` and the point's label. FDP keeps one RF chain
    /// per antenna when the antenna count or architecture changes.
    pub fn point(&self, base: &Scenario, i: usize) -> (Scenario, String) {
        let mut s = base.clone();
        let label = match self {
            Sweep::Target(v) => {
                s.target = v[i];
                s.targets = None;
                v[i].to_string()
            }
            Sweep::NBs(v) => {
                s.n_bs = v[i];
                s.bs_positions = None;
                v[i].to_string()
            }
            Sweep::NUsers(v) => {
                s.n_users = v[i];
                s.targets = None;
                v[i].to_string()
            }
            Sweep::NAntennas(v) => {
                s.n_antennas = v[i];
                v[i].to_string()
            }
            Sweep::RfChains(v) => {
                s.rf_chains = v[i];
                v[i].to_string()
            }
            Sweep::BlockageBeta(v) => {
                s.path_loss.blockage_beta = v[i];
                v[i].to_string()
            }
            Sweep::Architecture(v) => {
                s.architecture = v[i];
                v[i].to_string()
            }
            Sweep::Mode(v) => {
                s.mode = v[i];
                v[i].to_string()
            }
        };
        if s.architecture == Architecture::Fdp {
            s.rf_chains = s.n_antennas;
        }
        (s, label)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

pub const METRICS_COLUMNS: [&str; 17] = [
    "parameter",
    "value",
    "realizations",
    "feasible",
    "infeasible",
    "numerical_failures",
    "infeasibility_probability",
    "numerical_failure_rate",
    "mean_sum_tx_w",
    "mean_total_power_w",
    "joint_transmission_probability",
    "activation_probability",
    "mean_iterations",
    "mean_energy_efficiency",
    "mean_sum_spectral_efficiency",
    "rank_flagged",
    "mean_sum_tx_dbm",
];

/// One row per sweep point; `(parameter, value)` label the point.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, String, Metrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for (param, value, m) in rows {
        w.write_record([
            param.clone(),
            value.clone(),
            m.realizations.to_string(),
            m.feasible.to_string(),
            m.infeasible.to_string(),
            m.numerical_failures.to_string(),
            fmt_opt(m.infeasibility_probability),
            format!("{:e}", m.numerical_failure_rate),
            fmt_opt(m.mean_sum_tx_w),
            fmt_opt(m.mean_total_power_w),
            fmt_opt(m.joint_transmission_probability),
            fmt_opt(m.activation_probability),
            fmt_opt(m.mean_iterations),
            fmt_opt(m.mean_energy_efficiency),
            fmt_opt(m.mean_sum_spectral_efficiency),
            m.rank_flagged.to_string(),
            fmt_opt(
                m.mean_sum_tx_w
                    .filter(|p| *p > 0.0)
                    .map(crate::power::watts_to_dbm),
            ),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Empirical CDF as `(watts, cumulative_fraction)` rows of sorted samples.
pub fn write_cdf<W: Write>(out: W, sorted: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["watts", "cumulative_fraction"])?;
    let n = sorted.len() as f64;
    for (i, p) in sorted.iter().enumerate() {
        w.write_record([format!("{p:e}"), format!("{}", (i + 1) as f64 / n)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(mut out: W, records: &[RealizationRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Result of one sweep point, as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub parameter: String,
    pub value: String,
    pub scenario: Scenario,
    pub metrics: Metrics,
}

/// Writes `config.json`, `metrics.csv`, `metrics.json`, the CDF files per
/// point and optionally `realizations.jsonl` into `dir`.
pub fn export_run(
    dir: &Path,
    config_echo: &serde_json::Value,
    points: &[(PointReport, Vec<RealizationRecord>)],
    with_records: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(dir.join(name))?))
    };
    let mut cfg = create("config.json")?;
    serde_json::to_writer_pretty(&mut cfg, config_echo)?;
    cfg.write_all(b"\n")?;
    cfg.flush()?;

    let rows: Vec<(String, String, Metrics)> = points
        .iter()
        .map(|(p, _)| (p.parameter.clone(), p.value.clone(), p.metrics.clone()))
        .collect();
    write_metrics_csv(create("metrics.csv")?, &rows)?;
    let reports: Vec<&PointReport> = points.iter().map(|(p, _)| p).collect();
    let mut mj = create("metrics.json")?;
    serde_json::to_writer_pretty(&mut mj, &reports)?;
    mj.flush()?;

    let single = points.len() == 1;
    for (i, (p, _)) in points.iter().enumerate() {
        let suffix = if single {
            String::new()
        } else {
            format!("_{i}")
        };
        write_cdf(
            create(&format!("cdf_all{suffix}.csv"))?,
            &p.metrics.cdf_all_w,
        )?;
        write_cdf(
            create(&format!("cdf_active{suffix}.csv"))?,
            &p.metrics.cdf_active_w,
        )?;
    }
    if with_records {
        let mut f = create("realizations.jsonl")?;
        for (p, recs) in points {
            if !single {
                writeln!(
                    f,
                    "{}",
                    serde_json::json!({ "point": p.parameter, "value": p.value })
                )?;
            }
            write_records_jsonl(&mut f, recs)?;
        }
        f.flush()?;
    }
    Ok(())
}
