use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gpembed::io::{read_cloud, read_embedding, write_embedding};
use gpembed::{affinity, diffusion_maps, normalize_symmetric, sample, ManifoldKind, ManifoldSpec};
use tempfile::TempDir;

fn gpembed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gpembed"))
        .args(args)
        .env_remove("GPEMBED_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(str::to_string)
        .collect()
}

#[test]
fn sample_circle() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("c.csv");
    let res = gpembed(&["sample", "--manifold", "circle", "--n", "300", "--seed", "7", "--out", path_str(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(data_rows(&out).len(), 300);
    let cloud = read_cloud(fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(cloud, sample(&ManifoldSpec::new(ManifoldKind::Circle, 300, 7)).unwrap());
}

#[test]
fn sample_klein() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("k.csv");
    let res = gpembed(&[
        "sample", "--manifold", "klein", "--a", "10", "--b", "5", "--n", "500", "--seed", "1", "--out", path_str(&out),
    ]);
    assert_eq!(code(&res), 0);
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 500);
    assert!(rows.iter().all(|r| r.split(',').count() == 4));
}

#[test]
fn sample_rejects_small_torus_radius() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t.csv");
    let res = gpembed(&["sample", "--manifold", "flat_torus", "--r", "0.5", "--n", "10", "--seed", "1", "--out", path_str(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("r must exceed 1"));
    assert!(!out.exists());
}

#[test]
fn sample_seed_from_environment() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let res = Command::new(env!("CARGO_BIN_EXE_gpembed"))
        .args(["sample", "--manifold", "circle", "--n", "20", "--out", path_str(&a)])
        .env("GPEMBED_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    gpembed(&["sample", "--manifold", "circle", "--n", "20", "--seed", "99", "--out", path_str(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    // no seed anywhere is a usage error
    assert_eq!(code(&gpembed(&["sample", "--manifold", "circle", "--n", "20"])), 2);
}

#[test]
fn embed_two_points_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let cloud = dir.path().join("two.csv");
    fs::write(&cloud, "x1,x2\n0,0\n1,0\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let res = gpembed(&[
            "embed", "--in", path_str(&cloud), "--method", "GPS", "--k", "1", "--eps", "1", "--seed", "5", "--out",
            path_str(&out),
        ]);
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        fs::read(out).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    let e = read_embedding(first.as_slice()).unwrap();
    assert_eq!((e.coords.nrows(), e.coords.ncols()), (2, 1));
    assert_eq!(e.seed, Some(5));
}

#[test]
fn embed_matches_library_bytes() {
    let dir = TempDir::new().unwrap();
    let cloud_path = dir.path().join("c.csv");
    let out = dir.path().join("e.csv");
    gpembed(&["sample", "--manifold", "circle", "--n", "300", "--seed", "3", "--out", path_str(&cloud_path)]);
    let res = gpembed(&[
        "embed", "--in", path_str(&cloud_path), "--method", "DMS", "--k", "2", "--p", "8", "--eps", "0.25", "--out",
        path_str(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let cloud = sample(&ManifoldSpec::new(ManifoldKind::Circle, 300, 3)).unwrap();
    let a = normalize_symmetric(&affinity(&cloud, 0.25).unwrap()).unwrap();
    let e = diffusion_maps(&a, 2, 8.0).unwrap();
    let mut want = Vec::new();
    write_embedding(&e, &mut want).unwrap();
    assert_eq!(fs::read(&out).unwrap(), want);
}

#[test]
fn embed_validation_errors() {
    let dir = TempDir::new().unwrap();
    let cloud = dir.path().join("c.csv");
    gpembed(&["sample", "--manifold", "circle", "--n", "10", "--seed", "3", "--out", path_str(&cloud)]);
    let base = ["embed", "--in", path_str(&cloud), "--eps", "0.25", "--seed", "1"];
    let with = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        code(&gpembed(&args))
    };
    assert_eq!(with(&["--method", "GPS", "--k", "10"]), 2);
    assert_eq!(with(&["--method", "DMS", "--k", "12"]), 2);
    assert_eq!(with(&["--method", "XYZ", "--k", "2"]), 2);
    assert_eq!(with(&["--method", "gpsbb", "--k", "2"]), 0);
    // missing input file is an I/O failure
    assert_eq!(
        code(&gpembed(&["embed", "--in", "/nonexistent/c.csv", "--method", "DMS", "--k", "2", "--eps", "1"])),
        1
    );
}

#[test]
fn degenerate_reference_is_numerical() {
    // a huge bandwidth makes every row of A equal, so all reference distances vanish
    let res = gpembed(&[
        "experiment", "--manifold", "circle", "--n", "10", "--trials", "1", "--p", "1", "--k", "2", "--eps", "1e300",
        "--methods", "GPS", "--seed", "1",
    ]);
    assert_eq!(code(&res), 3);
    let msg = String::from_utf8_lossy(&res.stderr);
    assert!(msg.contains("trial 0") && msg.contains("reference distances"), "{msg}");
}

const OUTLIER_CFG: &str = "\
# circle with two outliers
manifold = circle_with_outliers
outliers = 0:3, 3:0
n = 200
trials = 10
p = 4
kmin = 2
kmax = 5
eps = 0.5
methods = DMS, GPS
seed = 2024
";

#[test]
fn experiment_outlier_config() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("outliers.cfg");
    fs::write(&cfg, OUTLIER_CFG).unwrap();
    let out = dir.path().join("r.csv");
    let raw = dir.path().join("raw.csv");
    let res = gpembed(&["experiment", "--config", path_str(&cfg), "--out", path_str(&out), "--raw", path_str(&raw)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("method,k,p,mean_logL,std_logL,collapse_count,trials\n"));
    for m in ["DMS", "GPS"] {
        let ks: Vec<&str> = text
            .lines()
            .filter(|l| l.starts_with(&format!("{m},")))
            .map(|l| l.split(',').nth(1).unwrap())
            .collect();
        assert_eq!(ks, ["2", "3", "4", "5"]);
    }
    assert_eq!(data_rows(&raw).len(), 10 * 2 * 4);

    // rerun gives identical bytes
    let again = dir.path().join("r2.csv");
    gpembed(&["--threads", "1", "experiment", "--config", path_str(&cfg), "--out", path_str(&again)]);
    assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn experiment_schema_errors_name_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, OUTLIER_CFG.replace("methods = DMS, GPS", "methods =")).unwrap();
    let res = gpembed(&["experiment", "--config", path_str(&cfg)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("methods"));

    fs::write(&cfg, format!("{OUTLIER_CFG}colour = blue\n")).unwrap();
    let res = gpembed(&["experiment", "--config", path_str(&cfg)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("colour"));

    // k_max must leave room below n
    fs::write(&cfg, OUTLIER_CFG.replace("n = 200", "n = 5")).unwrap();
    assert_eq!(code(&gpembed(&["experiment", "--config", path_str(&cfg)])), 2);
}

#[test]
fn experiment_flags_override_config_and_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, OUTLIER_CFG).unwrap();
    let out = dir.path().join("sweep.csv");
    let res = gpembed(&[
        "experiment", "--config", path_str(&cfg), "--manifold", "circle", "--trials", "2", "--n", "40", "--k", "2",
        "--P", "3", "--out", path_str(&out),
    ]);
    // `p` from the file conflicts with a sweep
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("p:"));

    fs::write(&cfg, OUTLIER_CFG.replace("p = 4\n", "").replace("kmin = 2\nkmax = 5\n", "")).unwrap();
    let res = gpembed(&[
        "experiment", "--config", path_str(&cfg), "--manifold", "circle", "--trials", "2", "--n", "40", "--k", "2",
        "--P", "3", "--out", path_str(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let ps: Vec<String> = data_rows(&out).iter().map(|l| l.split(',').nth(2).unwrap().to_string()).collect();
    assert_eq!(ps, ["2", "4", "8", "2", "4", "8"]);
}

#[test]
fn kernel_command_writes_symmetric_matrix() {
    let dir = TempDir::new().unwrap();
    let cloud = dir.path().join("c.csv");
    let out = dir.path().join("k.csv");
    gpembed(&["sample", "--manifold", "flat_torus", "--r", "3.5", "--n", "20", "--seed", "3", "--out", path_str(&cloud)]);
    let res = gpembed(&[
        "kernel", "--in", path_str(&cloud), "--eps", "0.3", "--normalization", "bistochastic", "--out", path_str(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows: Vec<Vec<f64>> = data_rows(&out)
        .iter()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 20);
    for r in &rows {
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
