use std::path::Path;
use std::process::{Command, Output};

use epifit_cli::manifest::load_manifest;
use epifit_core::{parse_nyt_csv, parse_region_config};

const BIN: &str = env!("CARGO_BIN_EXE_epifit");

fn epifit(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn epifit")
}

fn ok(args: &[&str]) {
    let out = epifit(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn simulate(out: &Path, p: &str, seed: &str) {
    ok(&[
        "simulate", "--beta", "0.5", "--gamma", "0.15625", "--T0", "18.5", "--phi", "0.4", "--p",
        p, "--population", "10000000", "--t1", "2020-03-21", "--seed", seed, "--out",
        out.to_str().unwrap(),
    ]);
}

fn quick_fit(sim: &Path, out: &Path) {
    ok(&[
        "fit",
        "--data",
        sim.join("deaths.csv").to_str().unwrap(),
        "--region-config",
        sim.join("region.conf").to_str().unwrap(),
        "--p",
        "0.01",
        "--iters",
        "3000",
        "--delay-samples",
        "20000",
        "--out",
        out.to_str().unwrap(),
    ]);
}

#[test]
fn simulate_writes_conserving_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "0.01", "3");
    for f in ["deaths.csv", "trajectory.csv", "theta.csv", "region.conf", "truth.txt", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let traj = std::fs::read_to_string(tmp.path().join("trajectory.csv")).unwrap();
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("date,day,S,I,R,nu"));
    for line in lines {
        let v: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!((v[0] + v[1] + v[2] - 1e7).abs() <= 1e-6 * 1e7, "{line}");
    }
    let conf = parse_region_config(&std::fs::read_to_string(tmp.path().join("region.conf")).unwrap()).unwrap();
    let deaths = parse_nyt_csv(&std::fs::read_to_string(tmp.path().join("deaths.csv")).unwrap(), &conf.region_id).unwrap();
    assert_eq!(deaths.end_date(), conf.data_end_date);
    assert!(deaths.daily_deaths.iter().sum::<u64>() > 0);
}

#[test]
fn simulate_with_zero_ifr_has_no_deaths() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "0", "3");
    let text = std::fs::read_to_string(tmp.path().join("deaths.csv")).unwrap();
    let deaths = parse_nyt_csv(&text, "Synthetic").unwrap();
    assert!(deaths.daily_deaths.iter().all(|&d| d == 0));
}

#[test]
fn simulate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), "0.01", "9");
    simulate(b.path(), "0.01", "9");
    for f in ["deaths.csv", "trajectory.csv", "theta.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn simulate_rejects_out_of_support() {
    let tmp = tempfile::tempdir().unwrap();
    let out = epifit(&[
        "simulate", "--beta", "0.5", "--gamma", "0.15625", "--T0", "80", "--phi", "0.4", "--p",
        "0.01", "--population", "1000", "--t1", "2020-03-21", "--seed", "1", "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_rejects_invalid_ifr() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "0.01", "1");
    let out = epifit(&[
        "fit",
        "--data",
        tmp.path().join("deaths.csv").to_str().unwrap(),
        "--region-config",
        tmp.path().join("region.conf").to_str().unwrap(),
        "--p",
        "1.5",
        "--out",
        tmp.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1.5"));
}

#[test]
fn fit_reports_missing_region() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path(), "0.01", "1");
    let conf = tmp.path().join("other.conf");
    std::fs::write(
        &conf,
        "region_id = Elsewhere\npopulation = 1000\nintervention_date = 2020-03-21\ndata_end_date = 2020-04-01\n",
    )
    .unwrap();
    let out = epifit(&[
        "fit",
        "--data",
        tmp.path().join("deaths.csv").to_str().unwrap(),
        "--region-config",
        conf.to_str().unwrap(),
        "--out",
        tmp.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_forecast_summarize_round() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let run = tmp.path().join("run");
    simulate(&sim, "0.01", "4");
    quick_fit(&sim, &run);
    for f in [
        "summary.csv",
        "summary.txt",
        "undercount_Synthetic_p0.01.csv",
        "band_Synthetic_p0.01.csv",
        "theta.csv",
        "manifest.json",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let manifest = load_manifest(&run.join("manifest.json")).unwrap();
    assert_eq!(manifest.chains.len(), 1);
    assert!(run.join(&manifest.chains[0].file).exists());
    let sampler = manifest.sampler.unwrap();
    assert_eq!((sampler.n_iterations, sampler.adapt_start, sampler.burn_in), (3000, 600, 1500));

    let run_s = run.to_str().unwrap();
    let out = epifit(&["forecast", "--run", run_s, "--days", "90"]);
    assert_eq!(out.status.code(), Some(1));

    ok(&["forecast", "--run", run_s, "--days", "0", "--out", tmp.path().join("f0").to_str().unwrap()]);
    let band = std::fs::read_to_string(tmp.path().join("f0/forecast_Synthetic_p0.01.csv")).unwrap();
    assert!(band.lines().skip(1).all(|l| l.split(',').nth(5) == Some("0")));

    ok(&["forecast", "--run", run_s, "--days", "21", "--svg"]);
    let band = std::fs::read_to_string(run.join("forecast_Synthetic_p0.01.csv")).unwrap();
    assert_eq!(band.lines().filter(|l| l.split(',').nth(5) == Some("1")).count(), 21);
    assert!(run.join("forecast_Synthetic_p0.01.svg").exists());

    ok(&["summarize", "--run", run_s, "--out", tmp.path().join("s").to_str().unwrap()]);
    assert_eq!(
        std::fs::read(run.join("summary.csv")).unwrap(),
        std::fs::read(tmp.path().join("s/summary.csv")).unwrap()
    );

    std::fs::remove_dir_all(run.join("chains")).unwrap();
    let out = epifit(&["forecast", "--run", run_s]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rerun_refuses_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    simulate(&sim, "0.01", "2");
    let manifest = sim.join("manifest.json");
    ok(&["rerun", "--manifest", manifest.to_str().unwrap(), "--out", tmp.path().join("again").to_str().unwrap()]);

    let run = tmp.path().join("run");
    quick_fit(&sim, &run);
    let mut deaths = std::fs::read_to_string(sim.join("deaths.csv")).unwrap();
    deaths.push('\n');
    std::fs::write(sim.join("deaths.csv"), deaths).unwrap();
    let out = epifit(&["rerun", "--manifest", run.join("manifest.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn bundled_region_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    for f in ["wa.conf", "ny.conf", "ca.conf", "fl.conf"] {
        let conf = parse_region_config(&std::fs::read_to_string(dir.join(f)).unwrap()).unwrap();
        assert_eq!(conf.ifr, 0.01, "{f}");
    }
}

#[test]
fn impossible_start_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.csv");
    std::fs::write(
        &data,
        "date,state,fips,cases,deaths\n2020-01-01,Early,,0,0\n2020-01-02,Early,,1,1\n2020-01-03,Early,,1,1\n",
    )
    .unwrap();
    let conf = tmp.path().join("early.conf");
    std::fs::write(
        &conf,
        "region_id = Early\npopulation = 1000000\nintervention_date = 2020-01-02\ndata_end_date = 2020-01-03\n",
    )
    .unwrap();
    let out = epifit(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--region-config",
        conf.to_str().unwrap(),
        "--p",
        "0.01",
        "--iters",
        "100",
        "--out",
        tmp.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}
