use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use hbcoop_core::analog::{beam_gains, build_all, degree_grid, write_beam_pattern, Architecture};
use hbcoop_core::channel::{array_response, write_channel_dump, ChannelSet};
use hbcoop_core::digital::ObjectiveWeights;
use hbcoop_core::montecarlo::{self, export_run, PointReport, Scenario};
use hbcoop_core::ofdm::OfdmSettings;
use hbcoop_core::rng::{derive_seed, tag};
use hbcoop_core::silence::{all_active, Instance};
use hbcoop_core::validate::{run_suite, Mutation};
use hbcoop_core::BaseStation;

use crate::config::RunConfig;
use crate::CliError;

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn echo(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(cfg).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Channel dump and all-active SDP dump of one realization.
fn dump_realization(dir: &Path, s: &Scenario, index: usize) -> Result<(), CliError> {
    let set = montecarlo::realization_channels(s, index)?;
    let seed = derive_seed(s.seed, &[tag::REALIZATION, index as u64, tag::CHANNEL]);
    write_channel_dump(create(dir, &format!("channels_{index}.txt"))?, &set, seed)?;
    let analog = build_all(s.architecture, &set, &vec![s.rf_chains; s.n_bs])?;
    let stations = s.stations()?;
    let targets = s.user_targets();
    let noise = vec![s.noise_watts(); s.n_users];
    let inst = Instance {
        channels: &set,
        analog: &analog,
        stations: &stations,
        targets: &targets,
        noise: &noise,
    };
    inst.problem(&vec![true; s.n_bs], &ObjectiveWeights::Exact)?
        .write_dump(create(dir, &format!("sdp_{index}.txt"))?)?;
    Ok(())
}

fn summarize(label: &str, m: &montecarlo::Metrics) {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"));
    println!(
        "{label}: feasible {}/{}, infeasibility {}, mean RF {} W, mean total {} W, joint {}",
        m.feasible,
        m.realizations,
        opt(m.infeasibility_probability),
        opt(m.mean_sum_tx_w),
        opt(m.mean_total_power_w),
        opt(m.joint_transmission_probability),
    );
}

fn run_points(cfg: &RunConfig, base: &Scenario) -> Result<(), CliError> {
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let points: Vec<(Scenario, String, String)> = match &cfg.sweep {
        Some(sw) => (0..sw.len())
            .map(|i| {
                let (s, label) = sw.point(base, i);
                (s, sw.name().to_string(), label)
            })
            .collect(),
        None => vec![(base.clone(), "none".to_string(), String::new())],
    };
    let mut results = Vec::with_capacity(points.len());
    for (s, param, value) in points {
        let out = montecarlo::run(&s, cfg.workers)?;
        summarize(&format!("{param}={value}"), &out.metrics);
        let report = PointReport {
            parameter: param,
            value,
            scenario: s,
            metrics: out.metrics,
        };
        results.push((report, out.records));
    }
    export_run(&dir, &echo(cfg)?, &results, cfg.output.keep_realizations)?;
    if let Some(r) = cfg.output.dump_realization {
        dump_realization(&dir, base, r)?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn run(cfg: &RunConfig, require_sweep: bool) -> Result<(), CliError> {
    if require_sweep && cfg.sweep.is_none() {
        return Err(CliError::Config(
            "sweep needs a [sweep] section with parameter and values".into(),
        ));
    }
    if cfg.scenario.ofdm.is_some() {
        log::info!("scenario has an [scenario.ofdm] section; running the OFDM pipeline");
    }
    run_points(cfg, &cfg.scenario)
}

pub fn ofdm_run(cfg: &RunConfig) -> Result<(), CliError> {
    let mut s = cfg.scenario.clone();
    s.ofdm.get_or_insert_with(OfdmSettings::default);
    s.validate()
        .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    let mut with_ofdm = cfg.clone();
    with_ofdm.scenario = s.clone();
    run_points(&with_ofdm, &s)?;
    let index = cfg.output.dump_realization.unwrap_or(0);
    let table = montecarlo::solve_ofdm_realization(&s, index)?;
    table.write_subcarrier_table(create(&out_dir(cfg), &format!("subcarriers_{index}.csv"))?)?;
    Ok(())
}

/// Per BS and architecture, the summed gain over users in dB relative to
/// the pattern peak, as `beam_<arch>_bs<m>.txt`.
pub fn beam_pattern(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.scenario;
    let bp = &cfg.beam_pattern;
    let dir = out_dir(cfg);
    std::fs::create_dir_all(&dir)?;
    let n = s.n_antennas;
    let users = bp.aods_deg.len();
    let amp = bp.path_gain * (n as f64).sqrt();
    let mut rows = Vec::with_capacity(users);
    for a in &bp.aods_deg {
        let h = array_response(a.to_radians(), n)?.scale(amp);
        rows.push(vec![h; s.n_bs]);
    }
    let set = ChannelSet::from_channels(rows);
    let grid = degree_grid(-90.0, 90.0, bp.step_deg);
    let targets = vec![s.target; users];
    let noise = vec![s.noise_watts(); users];
    for arch in Architecture::ALL {
        let l = if arch == Architecture::Fdp {
            n
        } else {
            s.rf_chains
        };
        if let Err(e) = arch.check(n, l) {
            log::warn!("skipping {arch}: {e}");
            continue;
        }
        let analog = build_all(arch, &set, &vec![l; s.n_bs])?;
        let stations = vec![BaseStation::new(arch, n, l, s.profile)?; s.n_bs];
        let inst = Instance {
            channels: &set,
            analog: &analog,
            stations: &stations,
            targets: &targets,
            noise: &noise,
        };
        let res = all_active(&inst, &s.silence)?;
        if !res.is_feasible() {
            return Err(CliError::Runtime(format!(
                "{arch}: beam-pattern instance is {:?}",
                res.status
            )));
        }
        let w = res.precoders.transmit(&analog);
        for m in 0..s.n_bs {
            let mut total = vec![0.0; grid.len()];
            for wk in w
                .iter()
                .map(|row| &row[m])
                .filter(|v| v.norm_squared() > 0.0)
            {
                for (t, g) in total.iter_mut().zip(beam_gains(wk, &grid)?) {
                    *t += g;
                }
            }
            let peak = total.iter().cloned().fold(0.0, f64::max);
            if !(peak > 0.0) {
                log::warn!("{arch}: BS {m} is silent, no pattern written");
                continue;
            }
            let db: Vec<f64> = total
                .iter()
                .map(|g| 10.0 * (g / peak).max(1e-30).log10())
                .collect();
            write_beam_pattern(
                create(&dir, &format!("beam_{}_bs{m}.txt", arch.name()))?,
                &grid,
                &db,
            )?;
        }
    }
    let mut cfg_out = create(&dir, "config.json")?;
    serde_json::to_writer_pretty(&mut cfg_out, &echo(cfg)?)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn validate(inject: &str) -> Result<(), CliError> {
    let mutation: Mutation = inject
        .parse()
        .map_err(|e: hbcoop_core::Error| CliError::Config(e.to_string()))?;
    if mutation != Mutation::None {
        println!("injected defect: {mutation}");
    }
    let report = run_suite(mutation);
    print!("{report}");
    if report.all_pass() {
        println!("all checks passed");
        Ok(())
    } else {
        Err(CliError::Validation)
    }
}
