use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const CANONICAL: &str = include_str!("../../../configs/canonical.ini");
const MM1: &str = include_str!("../../../configs/mm1.ini");

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_f4tele"));
    c.env_remove("F4TELE_OUT_DIR");
    c
}

fn run(c: &mut Command) -> Output {
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn simulate(config: &Path, out: &Path, extra: &[&str]) -> Output {
    run(bin()
        .args(["simulate", "--duration", "3", "--config"])
        .arg(config)
        .arg("--out-dir")
        .arg(out)
        .args(extra))
}

/// CSV column `name` as numbers.
fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn simulate_writes_every_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", CANONICAL);
    let out = tmp.path().join("out");
    let o = simulate(&cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["sets.csv", "flows.csv", "summary.txt", "schedule.csv", "flow_trace.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let sets = fs::read_to_string(out.join("sets.csv")).unwrap();
    assert_eq!(sets.lines().count(), 1 + 6);
}

#[test]
fn bundle_wider_than_cluster_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", &CANONICAL.replace("bundle_capacity = 4", "bundle_capacity = 30"));
    let o = simulate(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("violation: bundle_capacity"), "{}", stderr(&o));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn malformed_config_names_the_line() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", "[cluster]\nn_data_racks = many\n");
    let o = simulate(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let o = simulate(&tmp.path().join("absent.ini"), &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", CANONICAL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert_eq!(code(&simulate(&cfg, dir, &["--seed", "9"])), 0);
    }
    for f in ["sets.csv", "flows.csv", "summary.txt", "schedule.csv", "flow_trace.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    assert_eq!(code(&simulate(&cfg, &c, &["--seed", "10"])), 0);
    assert_ne!(fs::read(a.join("sets.csv")).unwrap(), fs::read(c.join("sets.csv")).unwrap());
}

#[test]
fn out_dir_falls_back_to_env_and_flag_wins() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", CANONICAL);
    let env_dir = tmp.path().join("from-env");
    let o = run(bin()
        .env("F4TELE_OUT_DIR", &env_dir)
        .args(["simulate", "--duration", "1", "--config"])
        .arg(&cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(env_dir.join("sets.csv").is_file());

    let flag_dir = tmp.path().join("from-flag");
    let o = run(bin()
        .env("F4TELE_OUT_DIR", tmp.path().join("unused"))
        .args(["simulate", "--duration", "1", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&flag_dir));
    assert_eq!(code(&o), 0);
    assert!(flag_dir.join("sets.csv").is_file());
    assert!(!tmp.path().join("unused").exists());
}

#[test]
fn analyze_single_point() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", CANONICAL);
    let o = run(bin().args(["analyze", "--config"]).arg(&cfg));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(column(&csv, "pr_hot"), vec![0.5]);
    assert_eq!(column(&csv, "pr_low"), vec![0.1]);
    assert_eq!(column(&csv, "k_low"), vec![5.0]);
    // Hotspot wait is one foreign slot.
    assert!((column(&csv, "w_hot_seconds")[0] - 0.01).abs() < 1e-9);
    assert!(!tmp.path().join("analysis.csv").exists());
}

#[test]
fn analyze_writes_csv_when_asked() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", CANONICAL);
    let out = tmp.path().join("out");
    let o = run(bin().args(["analyze", "--config"]).arg(&cfg).arg("--out-dir").arg(&out));
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(out.join("analysis.csv")).unwrap(), stdout(&o));
}

#[test]
fn analyze_plan_into_saturation_exits_unstable() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", CANONICAL);
    let plan = write(tmp.path(), "p.plan", "[axes]\nload = 0.3, 0.6, 1.0\nk_hot = 1\nd = 0.01\n");
    let o = run(bin().args(["analyze", "--config"]).arg(&cfg).arg("--plan").arg(&plan));
    assert_eq!(code(&o), 3, "{}{}", stdout(&o), stderr(&o));
    let csv = stdout(&o);
    let stable: Vec<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(stable, ["true", "true", "false"]);
}

#[test]
fn validate_mm1_benchmark_within_tolerance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "mm1.ini", MM1);
    let o = run(bin()
        .args(["validate", "--mode", "benchmark", "--duration", "400", "--tolerance", "0.05", "--config"])
        .arg(&cfg));
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("worst: set 0"));
}

#[test]
fn validate_flags_the_hotspot_model_at_high_load() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", &CANONICAL.replace("lambda_low = 10", "lambda_low = 40"));
    let out = tmp.path().join("out");
    let o = run(bin()
        .args(["validate", "--duration", "10", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&out));
    assert_eq!(code(&o), 4, "{}", stdout(&o));
    assert!(stderr(&o).contains("tolerance breached"));
    assert!(out.join("validation.csv").is_file());
}

#[test]
fn validate_zero_traffic_passes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", &CANONICAL.replace("lambda_low = 10\nbeta = 0.1", "lambda_low = 0\nlambda_hot = 0"));
    let o = run(bin().args(["validate", "--duration", "5", "--config"]).arg(&cfg));
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn validate_overload_exits_unstable() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.ini", &CANONICAL.replace("lambda_low = 10", "lambda_low = 1000"));
    let o = run(bin().args(["validate", "--duration", "5", "--config"]).arg(&cfg));
    assert_eq!(code(&o), 3);
}

const SMALL_PLAN: &str = "[plan]\nconfig = c.ini\nmodes = f4tele\nseeds = 1, 2\nduration = 10\n\
                          [axes]\nload = 0.2, 0.6\nk_hot = 1, 2\nd = 0.01, 0.1\nmu_multiplier = 1, 0.1\n";

fn sweep_into(dir: &Path, out: &Path) -> Output {
    write(dir, "c.ini", CANONICAL);
    let plan = write(dir, "s.plan", SMALL_PLAN);
    run(bin().args(["sweep", "--plan"]).arg(&plan).arg("--out-dir").arg(out))
}

#[test]
fn sweep_writes_families_and_longer_slots_wait_longer() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = sweep_into(tmp.path(), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for sub in ["analytic", "f4tele"] {
        for f in ["wh10.csv", "wh100.csv", "wl10.csv", "wl100.csv", "speed.csv"] {
            assert!(out.join(sub).join(f).is_file(), "{sub}/{f}");
        }
        let read = |f: &str| fs::read_to_string(out.join(sub).join(f)).unwrap();
        let (w10, w100) = (column(&read("wl10.csv"), "w_mean"), column(&read("wl100.csv"), "w_mean"));
        assert_eq!(w10.len(), 4);
        assert!(w10.iter().zip(&w100).all(|(a, b)| b > a), "{sub}: {w10:?} {w100:?}");
    }
    // Slower links wait longer in simulation.
    let speed = fs::read_to_string(out.join("f4tele/speed.csv")).unwrap();
    let mu = column(&speed, "mu_multiplier");
    let w = column(&speed, "w_mean");
    let (fast, slow): (Vec<_>, Vec<_>) = mu.iter().zip(&w).partition(|(m, _)| **m == 1.0);
    assert_eq!(fast.len(), slow.len());
    assert!(fast.iter().zip(&slow).all(|(f, s)| s.1 > f.1));
}

#[test]
fn sweep_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&sweep_into(tmp.path(), &a)), 0);
    assert_eq!(code(&sweep_into(tmp.path(), &b)), 0);
    for sub in ["analytic", "f4tele"] {
        for f in ["wh10.csv", "wl100.csv", "speed.csv"] {
            assert_eq!(fs::read(a.join(sub).join(f)).unwrap(), fs::read(b.join(sub).join(f)).unwrap());
        }
    }
}

#[test]
fn sweep_rejects_an_empty_axis() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "c.ini", CANONICAL);
    let plan = write(tmp.path(), "s.plan", &SMALL_PLAN.replace("load = 0.2, 0.6", "load ="));
    let o = run(bin().args(["sweep", "--plan"]).arg(&plan).arg("--out-dir").arg(tmp.path().join("out")));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("violation: load"), "{}", stderr(&o));
}

#[test]
fn sweep_config_flag_overrides_plan() {
    let tmp = TempDir::new().unwrap();
    let plan = write(tmp.path(), "s.plan", &SMALL_PLAN.replace("config = c.ini\n", ""));
    let o = run(bin().args(["sweep", "--plan"]).arg(&plan).arg("--out-dir").arg(tmp.path().join("out")));
    assert_eq!(code(&o), 2, "no base config anywhere");
    let cfg = write(tmp.path(), "other.ini", CANONICAL);
    let o = run(bin()
        .args(["sweep", "--plan"])
        .arg(&plan)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(tmp.path().join("out")));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
