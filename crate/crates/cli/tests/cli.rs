use std::path::Path;
use std::process::{Command, Output};

fn hbcoop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hbcoop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
[scenario]
n_bs = 1
n_users = 2
n_antennas = 16
rf_chains = 2
architecture = "fhp"
target = 2.0
realizations = 8
seed = 5
area_side = 40.0
mode = "algorithm1"
"#;

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = rows[0].iter().position(|h| h == name).unwrap();
    rows[1..].iter().map(|r| r[i].clone()).collect()
}

#[test]
fn missing_required_field_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[scenario]\nn_bs = 1\nn_users = 2\n");
    let out = hbcoop(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_antennas"));
}

#[test]
fn invalid_value_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &SMALL
            .replace("rf_chains = 2", "rf_chains = 3")
            .replace("\"fhp\"", "\"php\""),
    );
    let out = hbcoop(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_without_axis_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", SMALL);
    assert_eq!(hbcoop(&["sweep", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn single_point_run_writes_outputs_and_echo_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        &format!("{SMALL}\n[output]\nkeep_realizations = true\ndump_realization = 0\n"),
    );
    let a = dir.path().join("a");
    let out = hbcoop(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "config.json",
        "metrics.csv",
        "metrics.json",
        "cdf_all.csv",
        "cdf_active.csv",
        "realizations.jsonl",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
    assert_eq!(csv_rows(&a.join("metrics.csv")).len(), 2);
    assert_eq!(
        std::fs::read_to_string(a.join("realizations.jsonl"))
            .unwrap()
            .lines()
            .count(),
        8
    );
    let channels = std::fs::read_to_string(a.join("channels_0.txt")).unwrap();
    assert!(channels.starts_with("# hbcoop channel dump v1"));
    assert!(channels.contains("channel k=1 m=0 n=16"));
    let sdp = std::fs::read_to_string(a.join("sdp_0.txt")).unwrap();
    assert!(sdp.starts_with("# hbcoop sdp dump v1"));

    let b = dir.path().join("b");
    let echo = a.join("config.json");
    let out = hbcoop(&[
        "run",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(a.join("metrics.csv")).unwrap(),
        std::fs::read_to_string(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn worker_count_leaves_metrics_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SMALL.replace("n_bs = 1", "n_bs = 2"));
    let mut files = Vec::new();
    for w in ["1", "3"] {
        let o = dir.path().join(w);
        let out = hbcoop(&[
            "run",
            "--config",
            &cfg,
            "--workers",
            w,
            "--seed",
            "77",
            "--out",
            o.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        files.push(std::fs::read(o.join("metrics.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn target_sweep_has_one_row_per_point_and_rising_power() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[sweep]\nparameter = \"target\"\nvalues = [1, 2, 3, 4, 5, 6, 7]\n",
        SMALL.replace("area_side = 40.0", "area_side = 20.0")
    );
    let cfg = write(dir.path(), "c.toml", &text);
    let out = hbcoop(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = csv_rows(&dir.path().join("metrics.csv"));
    assert_eq!(rows.len(), 8);
    assert!(column(&rows, "infeasible").iter().all(|v| v == "0"));
    let power: Vec<f64> = column(&rows, "mean_sum_tx_w")
        .iter()
        .map(|v| v.parse().unwrap())
        .collect();
    for w in power.windows(2) {
        assert!(w[1] >= w[0], "{power:?}");
    }
    assert!(dir.path().join("cdf_all_6.csv").exists());
}

fn read_pattern(path: &Path) -> Vec<(f64, f64)> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut it = l.split_whitespace().map(|x| x.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect()
}

#[test]
fn beam_patterns_are_normalized_and_hybrid_lobes_track_digital() {
    let dir = tempfile::tempdir().unwrap();
    let out = hbcoop(&[
        "beam-pattern",
        "--preset",
        "table1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for m in 0..2 {
        let mut patterns = Vec::new();
        for arch in ["fdp", "fhp", "php"] {
            let p = read_pattern(&dir.path().join(format!("beam_{arch}_bs{m}.txt")));
            let peak = p.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            assert!(peak.abs() < 1e-12, "{arch} bs{m} peak {peak}");
            patterns.push(p);
        }
        for aod in [-60.0, -30.0, 30.0, 60.0] {
            let lobe = |p: &[(f64, f64)]| {
                p.iter()
                    .filter(|x| (x.0 - aod).abs() <= 10.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0
            };
            let (fdp, fhp) = (lobe(&patterns[0]), lobe(&patterns[1]));
            assert!(
                (fdp - fhp).abs() <= 2.0,
                "bs{m} aod {aod}: fdp {fdp} fhp {fhp}"
            );
        }
    }
}

#[test]
fn validate_passes_and_catches_injected_defects() {
    let out = hbcoop(&["validate"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    let pl = hbcoop(&["validate", "--inject", "path-loss-exponent"]);
    assert_eq!(pl.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&pl.stdout).contains("FAIL path-loss"));
    let rs = hbcoop(&["validate", "--inject", "rate-sign"]);
    assert_eq!(rs.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&rs.stdout).contains("FAIL single-user"));
}

#[test]
fn ofdm_run_writes_the_subcarrier_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("realizations = 8", "realizations = 2")
        + "\n[scenario.ofdm]\nn_subcarriers = 4\n";
    let cfg = write(dir.path(), "c.toml", &text);
    let out = hbcoop(&[
        "ofdm-run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = csv_rows(&dir.path().join("subcarriers_0.csv"));
    assert_eq!(rows.len(), 5);
    let metrics = csv_rows(&dir.path().join("metrics.csv"));
    assert!(!column(&metrics, "mean_energy_efficiency")[0].is_empty());
}
