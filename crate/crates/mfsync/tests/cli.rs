use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[simulate]
n = 20
horizon = 5.0

[spectrum]
gamma = 0.02

[bifurcation]
gammas = [0.0, 0.05]

[learn]
n = 20
horizon = 5.0
portrait_points = [5, 5]

[fpf]
n = 100
horizon = 5.0
snapshot_times = [1.0, 5.0]

[oracle-compare]
n = 100
horizon = 5.0
grid_points = 128
"#;

const SUBCOMMANDS: [&str; 6] = ["simulate", "spectrum", "bifurcation", "learn", "fpf", "oracle-compare"];

fn mfsync(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfsync"))
        .args(args)
        .current_dir(dir)
        .env_remove("MFSYNC_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn every_subcommand_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    for cmd in SUBCOMMANDS {
        let a = format!("a-{cmd}");
        let b = format!("b-{cmd}");
        for dir in [&a, &b] {
            let o = mfsync(&[cmd, "--config", "c.toml", "--seed", "7", "--out", dir], tmp.path());
            assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        }
        let (fa, fb) = (files(&tmp.path().join(&a)), files(&tmp.path().join(&b)));
        assert!(fa.iter().any(|(n, _)| n == "manifest.txt"));
        assert!(fa.iter().any(|(n, _)| n == "plotdata.csv"));
        assert_eq!(fa, fb, "{cmd}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    let o = mfsync(&["fpf", "--config", "c.toml", "--seed", "11", "--out", "first"], tmp.path());
    assert!(o.status.success());
    let o = mfsync(
        &["fpf", "--config", "first/manifest.txt", "--out", "second"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files(&tmp.path().join("first")), files(&tmp.path().join("second")));
}

#[test]
fn different_seeds_differ() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    for (seed, dir) in [("1", "s1"), ("2", "s2")] {
        assert!(mfsync(&["simulate", "--config", "c.toml", "--seed", seed, "--out", dir], tmp.path())
            .status
            .success());
    }
    let a = fs::read(tmp.path().join("s1/summary.csv")).unwrap();
    let b = fs::read(tmp.path().join("s2/summary.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn output_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    let header = |cmd: &str, file: &str| {
        let text = fs::read_to_string(tmp.path().join(cmd).join(file)).unwrap();
        text.lines().next().unwrap().to_string()
    };
    for cmd in SUBCOMMANDS {
        assert!(mfsync(&[cmd, "--config", "c.toml", "--out", cmd], tmp.path()).status.success());
    }
    assert!(header("simulate", "trajectory.csv").starts_with("t,theta_1,theta_2,"));
    assert_eq!(header("simulate", "summary.csv"), "t,gamma_sq,circular_mean");
    assert_eq!(header("spectrum", "eigenpath.csv"), "R,re_lambda_1,im_lambda_1,re_lambda_2,im_lambda_2");
    assert_eq!(header("bifurcation", "bifurcation.csv"), "gamma,R_c_closed,R_c_numeric,kappa_c");
    assert_eq!(header("learn", "learning.csv"), "t,A_1,zeta_1,gamma_sq");
    assert_eq!(header("learn", "portrait.csv"), "A,zeta,dA_dt,dzeta_dt");
    assert_eq!(header("fpf", "fpf.csv"), "t,theta_true,theta_hat,spread,kappa1,kappa2,dZ");
    assert_eq!(header("oracle-compare", "oracle_compare.csv"), "t,tv_distance");
    assert_eq!(header("oracle-compare", "density.csv"), "theta,p");

    let series = |cmd: &str| {
        let text = fs::read_to_string(tmp.path().join(cmd).join("plotdata.csv")).unwrap();
        let mut names: Vec<String> = text.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
        names.dedup();
        names
    };
    assert_eq!(series("learn"), ["A_1", "zeta_1", "gamma_sq"]);
    assert_eq!(series("fpf"), ["theta_true", "theta_hat"]);

    // Largest-R row of the eigenpath sits next to ±σ²/2 − i.
    let text = fs::read_to_string(tmp.path().join("spectrum/eigenpath.csv")).unwrap();
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((row[1] - 0.05).abs() < 1e-2 && (row[2] + 1.0).abs() < 1e-2, "{row:?}");
    assert!((row[3] + 0.05).abs() < 1e-2 && (row[4] + 1.0).abs() < 1e-2, "{row:?}");

    // Closed-form column recomputed by hand.
    let text = fs::read_to_string(tmp.path().join("bifurcation/bifurcation.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows[0][1], 50.0);
    let s2: f64 = 0.1;
    let expect = (2.0 * 0.05 / s2).atan() / (4.0 * s2 * 0.05);
    assert!((rows[1][1] - expect).abs() < 1e-6 * expect);
    assert!((rows[1][3] - 1.0 / (2.0 * s2 * expect)).abs() < 1e-6);
}

#[test]
fn config_errors_exit_with_two_and_a_json_record() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[simulate]\nkappa = -1\n").unwrap();
    let o = mfsync(&["simulate", "--config", "bad.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["line"], 2);

    fs::write(tmp.path().join("typo.toml"), "[fpf]\nsgima = 1\n").unwrap();
    let o = mfsync(&["fpf", "--config", "typo.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));

    fs::write(tmp.path().join("other.toml"), "[run]\nsubcommand = \"learn\"\n").unwrap();
    let o = mfsync(&["fpf", "--config", "other.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    // 512 points break the explicit-diffusion limit at σ = 0.1, dt = 0.01.
    fs::write(tmp.path().join("cfl.toml"), "[oracle-compare]\ngrid_points = 512\n").unwrap();
    let o = mfsync(&["oracle-compare", "--config", "cfl.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "domain");
    assert!(err["message"].as_str().unwrap().contains("444"));
}

#[test]
fn environment_sets_the_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), SMALL).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mfsync"))
        .args(["bifurcation", "--config", "c.toml"])
        .current_dir(tmp.path())
        .env("MFSYNC_OUT_DIR", "root")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(tmp.path().join("root/bifurcation/bifurcation.csv").exists());
}
