//! Run configuration: TOML (or a JSON echo) layered over an optional preset.

use std::path::{Path, PathBuf};

use hbcoop_core::montecarlo::{Scenario, Sweep};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[derive(Default)]
pub struct OutputSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write `realizations.jsonl`.
    #[serde(default)]
    pub keep_realizations: bool,
    /// Also dump the channels and the all-active SDP of this realization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_realization: Option<usize>,
}

fn default_aods() -> Vec<f64> {
    vec![-60.0, -30.0, 30.0, 60.0]
}

fn default_step() -> f64 {
    0.25
}

/// Single-path users at fixed departure angles, seen identically by every BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamPatternSettings {
    #[serde(default = "default_aods")]
    pub aods_deg: Vec<f64>,
    #[serde(default = "default_step")]
    pub step_deg: f64,
    /// Channel amplitude of every path, relative to unit-norm steering.
    #[serde(default = "default_path_gain")]
    pub path_gain: f64,
}

fn default_path_gain() -> f64 {
    1e-4
}

impl Default for BeamPatternSettings {
    fn default() -> Self {
        Self {
            aods_deg: default_aods(),
            step_deg: default_step(),
            path_gain: default_path_gain(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub output: OutputSettings,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub beam_pattern: BeamPatternSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Table1,
}

impl Preset {
    fn table(self) -> toml::Table {
        let cfg = match self {
            Preset::Table1 => RunConfig {
                scenario: Scenario::table1(2),
                sweep: None,
                output: OutputSettings::default(),
                workers: 0,
                beam_pattern: BeamPatternSettings::default(),
            },
        };
        toml::Table::try_from(&cfg).expect("preset serializes")
    }
}

/// Overlays `top` onto `base`, merging nested tables key by key.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::Table::try_from(value)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    } else {
        text.parse::<toml::Table>()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Builds the configuration from the preset and file, then applies
/// command-line overrides and validates the scenario.
pub fn load(
    path: Option<&Path>,
    preset: Option<Preset>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let mut table = preset.map(Preset::table).unwrap_or_default();
    match path {
        Some(p) => merge(&mut table, read_table(p)?),
        None if preset.is_none() => {
            return Err(CliError::Config("give --config or --preset".into()))
        }
        None => {}
    }
    let mut cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    if let Some(o) = out {
        cfg.output.dir = Some(o.to_path_buf());
    }
    cfg.scenario
        .validate()
        .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    if let Some(sw) = &cfg.sweep {
        if sw.is_empty() {
            return Err(CliError::Config("sweep.values is empty".into()));
        }
        for i in 0..sw.len() {
            let (s, label) = sw.point(&cfg.scenario, i);
            s.validate()
                .map_err(|e| CliError::Config(format!("sweep {} = {label}: {e}", sw.name())))?;
        }
    }
    let bp = &cfg.beam_pattern;
    if bp.aods_deg.is_empty() || bp.aods_deg.iter().any(|a| !(a.abs() < 90.0)) {
        return Err(CliError::Config(
            "beam_pattern.aods_deg needs angles strictly inside (-90, 90)".into(),
        ));
    }
    if !(bp.step_deg > 0.0 && bp.step_deg <= 10.0)
        || !(bp.path_gain > 0.0 && bp.path_gain.is_finite())
    {
        return Err(CliError::Config(
            "beam_pattern.step_deg must be in (0, 10] and path_gain > 0".into(),
        ));
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn preset_alone_is_valid() {
        let cfg = load(None, Some(Preset::Table1), Some(9), Some(2), None).unwrap();
        assert_eq!(cfg.scenario.seed, 9);
        assert_eq!(cfg.workers, 2);
        assert_eq!(cfg.scenario.n_antennas, 64);
    }

    #[test]
    fn file_overrides_nested_preset_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.toml",
            "[scenario]\ntarget = 2.5\n[scenario.path_loss]\nblockage_beta = 0.05\n",
        );
        let cfg = load(Some(&p), Some(Preset::Table1), None, None, None).unwrap();
        assert_eq!(cfg.scenario.target, 2.5);
        assert_eq!(cfg.scenario.path_loss.blockage_beta, 0.05);
        assert_eq!(
            cfg.scenario.path_loss.exponent_los,
            Scenario::table1(2).path_loss.exponent_los
        );
    }

    #[test]
    fn missing_field_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.toml", "[scenario]\nn_bs = 1\n");
        let err = load(Some(&p), None, None, None, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("n_users"), "{err}");
    }

    #[test]
    fn json_echo_reloads_identically() {
        let cfg = load(None, Some(Preset::Table1), Some(4), None, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "config.json",
            &serde_json::to_string(&cfg).unwrap(),
        );
        assert_eq!(load(Some(&p), None, None, None, None).unwrap(), cfg);
    }

    #[test]
    fn invalid_sweep_point_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.toml",
            "[sweep]\nparameter = \"n_bs\"\nvalues = [1, 9]\n",
        );
        let err = load(Some(&p), Some(Preset::Table1), None, None, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("n_bs = 9"), "{err}");
    }
}
