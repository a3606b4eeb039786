use std::path::Path;
use std::process::{Command, Output};

use fsrdp::sim::{self, format_sig12};
use fsrdp::{Accountant, ParticipationLedger};

fn fsrdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsrdp")).args(args).output().expect("spawn fsrdp")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Second line of a single-row CSV, keyed by header.
fn row(csv: &str) -> std::collections::HashMap<String, String> {
    let mut lines = csv.lines();
    let header = lines.next().unwrap().split(',');
    header.map(str::to_owned).zip(lines.next().unwrap().split(',').map(str::to_owned)).collect()
}

fn num(fields: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    fields[key].parse().unwrap()
}

#[test]
fn bound_closed_form_example() {
    let r = row(&stdout(&fsrdp(&["bound", "--alpha", "2", "--q", "0.05", "--sigma", "4"])));
    assert!((num(&r, "bound") - 7.098e-4).abs() < 1e-6);
    assert!((num(&r, "bound") - num(&r, "oracle")).abs() < 1e-10);
}

#[test]
fn bound_zero_q() {
    let r = row(&stdout(&fsrdp(&["bound", "--alpha", "4", "--q", "0", "--sigma", "2"])));
    assert_eq!(num(&r, "bound"), 0.0);
    assert_eq!(num(&r, "oracle"), 0.0);
}

#[test]
fn bound_gap_below_remainder() {
    let r = row(&stdout(&fsrdp(&["bound", "--alpha", "8", "--q", "0.02", "--sigma", "3"])));
    assert!(num(&r, "gap") <= num(&r, "remainder"));
}

#[test]
fn jsonl_output() {
    let out = stdout(&fsrdp(&["--format", "jsonl", "bound", "--alpha", "8", "--q", "0.02", "--sigma", "3", "--m", "6"]));
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["m"], 6);
    assert!(v["bound"].as_f64().unwrap() >= v["oracle"].as_f64().unwrap());
}

#[test]
fn exit_codes() {
    assert_eq!(fsrdp(&["--help"]).status.code(), Some(0));
    assert_eq!(fsrdp(&["bound", "--alpha", "2"]).status.code(), Some(1));
    assert_eq!(fsrdp(&["bound", "--alpha", "0.5", "--q", "0.1", "--sigma", "1"]).status.code(), Some(1));
    assert_eq!(fsrdp(&["bound", "--alpha", "2", "--q", "1", "--sigma", "1"]).status.code(), Some(1));
    let unreachable = fsrdp(&["calibrate", "--epsilon", "1e-9", "--steps", "1000000", "--q", "0.5"]);
    assert_eq!(unreachable.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unreachable.stderr).contains("unreachable"));
    assert_eq!(fsrdp(&["simulate", "--config", "/nonexistent/cfg.toml", "--out", "/tmp/x"]).status.code(), Some(3));
    assert_eq!(fsrdp(&["convert", "--ledger", "/nonexistent/ledger.tsv"]).status.code(), Some(3));
}

#[test]
fn calibrate_then_compose_and_convert_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (q, steps) = ("0.01", "300");
    let cal = row(&stdout(&fsrdp(&["calibrate", "--epsilon", "4", "--q", q, "--steps", steps])));
    assert!(num(&cal, "epsilon") <= 4.0);
    let curve = dir.path().join("curve.csv");
    stdout(&fsrdp(&["compose", "--q", q, "--sigma", &cal["sigma"], "--steps", steps, "-o", curve.to_str().unwrap()]));
    let conv = row(&stdout(&fsrdp(&["convert", "--curve", curve.to_str().unwrap()])));
    // 12-digit σ and curve values: agreement to well below the calibration tolerance
    assert!(num(&conv, "epsilon") <= 4.0 * (1.0 + 1e-9));

    let loose = row(&stdout(&fsrdp(&["calibrate", "--epsilon", "10", "--q", q, "--steps", steps])));
    assert!(num(&cal, "sigma") >= num(&loose, "sigma"));
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

const BASE: &str = "rounds = 40\nclients = 10\nd = 5\npoints_per_client = 200\nbatch_size = 16\nsigma = 1.2\nseed = 5\n";

fn epsilon_rows(dir: &Path) -> Vec<(u64, usize, f64)> {
    std::fs::read_to_string(dir.join(sim::EPSILON_FILE))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn simulate_report_matches_offline_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{BASE}m_t = 6\ndropout_prob = 0.2\n"));
    let out = dir.path().join("out");
    stdout(&fsrdp(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let ledger = ParticipationLedger::from_text(&std::fs::read_to_string(out.join(sim::LEDGER_FILE)).unwrap()).unwrap();
    let offline = sim::client_epsilons(&Accountant::default(), &ledger, 1e-5).unwrap();
    let text = std::fs::read_to_string(out.join(sim::EPSILON_FILE)).unwrap();
    for (line, e) in text.lines().skip(1).zip(&offline) {
        assert_eq!(line.split(',').nth(2).unwrap(), format_sig12(e.epsilon));
    }
    // the convert subcommand reads the same ledger to the same numbers
    let conv = stdout(&fsrdp(&["convert", "--ledger", out.join(sim::LEDGER_FILE).to_str().unwrap()]));
    for (line, e) in conv.lines().skip(1).zip(&offline) {
        assert_eq!(line.split(',').nth(2).unwrap(), format_sig12(e.epsilon));
    }
    let model_lines = std::fs::read_to_string(out.join(sim::MODEL_FILE)).unwrap().lines().count();
    assert_eq!(model_lines, 2 * (5 + 1));
}

#[test]
fn uniform_schedule_gives_identical_epsilons() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{BASE}m_t = 10\n"));
    let out = dir.path().join("out");
    stdout(&fsrdp(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let rows = epsilon_rows(&out);
    assert!(rows.iter().all(|r| r.1 == 40 && r.2 == rows[0].2));
}

#[test]
fn fewer_participations_mean_smaller_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{BASE}m_t = 10\ndropout_prob = 0.5\n"));
    let out = dir.path().join("out");
    stdout(&fsrdp(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let rows = epsilon_rows(&out);
    for a in &rows {
        for b in &rows {
            if a.1 < b.1 {
                assert!(a.2 < b.2, "{a:?} vs {b:?}");
            }
        }
    }
}

#[test]
fn poisson_sampler_is_rejected_for_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{BASE}m_t = 3\nsampler = \"poisson\"\n"));
    let out = fsrdp(&["simulate", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trace_matches_library_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &format!("{BASE}m_t = 3\n"));
    let fixed = stdout(&fsrdp(&["trace", "--config", &cfg, "--sampler", "fixed", "--rounds", "25"]));
    assert!(fixed.lines().skip(1).all(|l| l.ends_with(",16")));
    let a = stdout(&fsrdp(&["trace", "--config", &cfg, "--sampler", "poisson", "--seed", "8"]));
    let b = stdout(&fsrdp(&["trace", "--config", &cfg, "--sampler", "poisson", "--seed", "8"]));
    assert_eq!(a, b);
    let config = fsrdp::sim::SimConfig { seed: 8, ..fsrdp::sim::SimConfig::from_path(Path::new(&cfg)).unwrap() };
    let lib = sim::batch_size_trace(&config, sim::Sampler::Poisson, 40).unwrap();
    assert_eq!(a, sim::trace_csv(&lib));
}

#[test]
fn compose_ledger_per_client() {
    let dir = tempfile::tempdir().unwrap();
    let ledger = write(dir.path(), "l.tsv", "1\t0\t0.01\t2\t1\t10\n1\t3\t0.05\t4\t1\t50\n2\t1\t0.01\t2\t1\t10\n");
    let out = stdout(&fsrdp(&["compose", "--ledger", &ledger, "--alphas", "2,8"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "client_id,alpha,rdp");
    assert_eq!(lines.len(), 5);
    let one = stdout(&fsrdp(&["compose", "--ledger", &ledger, "--alphas", "2,8", "--client", "2"]));
    assert_eq!(one.lines().count(), 3);
    assert_eq!(fsrdp(&["compose", "--ledger", &ledger, "--client", "9"]).status.code(), Some(1));
    let bad = write(dir.path(), "bad.tsv", "1\t5\t0.01\t2\t1\t10\n1\t2\t0.01\t2\t1\t10\n");
    assert_eq!(fsrdp(&["compose", "--ledger", &bad]).status.code(), Some(3));
}

#[test]
fn oracle_subcommand_modes() {
    let r = row(&stdout(&fsrdp(&["oracle", "--alpha", "3", "--q", "1", "--sigma", "2"])));
    assert!((num(&r, "oracle") - 1.5).abs() < 1e-10);
    let a = stdout(&fsrdp(&["oracle", "--sigma", "2", "--moment", "2", "--samples", "200000", "--seed", "4"]));
    let b = stdout(&fsrdp(&["oracle", "--sigma", "2", "--moment", "2", "--samples", "200000", "--seed", "4"]));
    assert_eq!(a, b);
    let m = row(&a);
    assert!((num(&m, "mean") - (std::f64::consts::E - 1.0)).abs() < 3.0 * num(&m, "std_err"));
}
