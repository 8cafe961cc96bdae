//! The `subshrink` binary: exit codes, output files and reproducibility.

use std::path::Path;
use std::process::Command;

use subshrink_cli::commands::run_fit;
use subshrink_cli::output::{kappa_means_from_draws, verify_manifest, write_results};
use subshrink_core::model::{fit, ChainConfig, ModelSpec, NuSpec, SmoothTermSpec};
use subshrink_core::subspace::SubspaceSpec;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subshrink"))
}

fn write_data(dir: &Path) {
    let mut s = String::from("x1,x2,y\n");
    for i in 0..60 {
        let a = -1.0 + 2.0 * i as f64 / 59.0;
        let b = ((i * 37) % 60) as f64 / 30.0 - 1.0;
        let y = (2.0 * a).sin() + b * b + 0.1 * ((i * 13 % 7) as f64 - 3.0);
        s.push_str(&format!("{a},{b},{y}\n"));
    }
    std::fs::write(dir.join("data.csv"), s).unwrap();
}

const CONFIG: &str = "\
data = data.csv
output = out
iterations = 600
warmup = 300
seed = 4
nu_draws = 2000

term.1.covariate = x1
term.1.null_space = polynomial:1
term.1.c = 2

term.2.covariate = x2
term.2.null_space = polynomial:2
term.2.nu = 0.1
";

#[test]
fn fit_writes_a_verified_manifest_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, CONFIG).unwrap();
    let st = bin().args(["fit", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let out = dir.path().join("out");
    let m = verify_manifest(&out).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["summary.json", "draws.csv", "curves.csv"]);
    let first = std::fs::read(out.join("draws.csv")).unwrap();
    let header = String::from_utf8_lossy(&first).lines().next().unwrap().to_string();
    assert!(header.starts_with("chain,iteration,beta0,sigma2,xi,x1.lambda,x1.tau,x1.kappa,x1.beta_1"));
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 301);

    run_fit(&cfg).unwrap();
    assert_eq!(std::fs::read(out.join("draws.csv")).unwrap(), first);
    assert_eq!(verify_manifest(&out).unwrap(), m);
}

#[test]
fn draws_round_trip_reproduces_kappa_exactly() {
    let x: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let y: Vec<f64> = x.iter().map(|v| (6.0 * v).cos() + 0.05 * (v * 91.0).sin()).collect();
    let spec = ModelSpec::new(vec![SmoothTermSpec::shrinkage(
        "f",
        0,
        SubspaceSpec::polynomial(1),
        NuSpec::Fixed(0.2),
    )]);
    let mut cfg = ChainConfig::default();
    cfg.settings.n_iter = 700;
    cfg.settings.warmup = 200;
    cfg.chains = 2;
    let r = fit(&spec, &[x], &y, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_results(&r, dir.path()).unwrap();
    let k = kappa_means_from_draws(&dir.path().join("draws.csv")).unwrap();
    assert_eq!(k.len(), 1);
    assert_eq!(k[0].0, "f");
    assert_eq!(k[0].1, r.terms[0].kappa_mean.unwrap());

    let mut empty = r.clone();
    empty.draws.clear();
    empty.chain_of_draw.clear();
    let e = tempfile::tempdir().unwrap();
    let m = write_results(&empty, e.path()).unwrap();
    assert_eq!(m.files.len(), 1);
    assert_eq!(m.files[0].name, "summary.json");
}

#[test]
fn configuration_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let cases = [
        CONFIG.replace("data.csv", "missing.csv"),
        format!("{CONFIG}iters = 5\n"),
        format!("{CONFIG}xi0 = 1\nfixed_xi = 0.01\n"),
        CONFIG.replace("x2", "nope"),
    ];
    for (i, text) in cases.iter().enumerate() {
        let cfg = dir.path().join(format!("bad{i}.conf"));
        std::fs::write(&cfg, text).unwrap();
        let out = bin().args(["fit", "--config"]).arg(&cfg).output().unwrap();
        assert_eq!(
            out.status.code(),
            Some(2),
            "case {i}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let st = bin()
        .args(["study", "--rank", "1"])
        .current_dir(dir.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    let st = bin().args(["simulate", "--scenario", "4"]).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn runtime_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let text = std::fs::read_to_string(dir.path().join("data.csv")).unwrap();
    std::fs::write(dir.path().join("data.csv"), text.replacen("\n-1,", "\nabc,", 1)).unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = bin().args(["fit", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));

    let mut day = String::from("timestamp,consumption\n");
    for i in 0..95 {
        day.push_str(&format!("2018-11-05 {:02}:{:02},100\n", i / 4, (i % 4) * 15));
    }
    let data = dir.path().join("short.csv");
    std::fs::write(&data, day).unwrap();
    let out = bin()
        .args(["energy", "--data"])
        .arg(&data)
        .arg("--output")
        .arg(dir.path().join("e"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("95 readings"));
}

#[test]
fn study_and_energy_commands_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["study", "--rank", "10", "--xi", "1", "--output"])
        .arg(dir.path().join("s"))
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("s/study.csv")).unwrap();
    assert_eq!(table.lines().next().unwrap(), "rank,xi_tilde,d,density,score");
    assert_eq!(table.lines().count(), 101);
    verify_manifest(&dir.path().join("s")).unwrap();

    let data = dir.path().join("nov.csv");
    let out = bin()
        .args([
            "energy",
            "--make-fixture",
            "--iterations",
            "1200",
            "--warmup",
            "200",
            "--data",
        ])
        .arg(&data)
        .arg("--output")
        .arg(dir.path().join("e"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 16);
    let m = verify_manifest(&dir.path().join("e")).unwrap();
    assert_eq!(m.files.len(), 3);
}
