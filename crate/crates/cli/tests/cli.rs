use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use unroll_core::io::{read_array, read_meta, Array};
use unroll_core::simulate::shepp_logan;
use unroll_core::unrolling::TomoSetup;

fn unroll(dir: &Path, args: &[&str], config: &str) -> (i32, PathBuf) {
    let out = dir.join(format!("out_{}", fs::read_dir(dir).unwrap().count()));
    (unroll_at(dir, &out, args, config), out)
}

fn unroll_at(dir: &Path, out: &Path, args: &[&str], config: &str) -> i32 {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_unroll"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    status.code().unwrap()
}

/// Runs twice into the same directory and compares every output file.
fn assert_rerun_identical(dir: &Path, out: &Path, args: &[&str], config: &str) {
    let first = file_bytes(out);
    assert_eq!(unroll_at(dir, out, args, config), 0);
    assert_eq!(first, file_bytes(out), "{args:?}");
}

fn ok(dir: &Path, args: &[&str], config: &str) -> PathBuf {
    let (code, out) = unroll(dir, args, config);
    assert_eq!(code, 0, "{args:?}");
    out
}

fn file_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn kv(path: &Path) -> std::collections::BTreeMap<String, String> {
    unroll_core::io::parse_sidecar(&fs::read_to_string(path).unwrap()).unwrap()
}

const SMALL: &str = "geometry.size=16\ngeometry.angles=8\n";

#[test]
fn simulate_is_byte_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let a = ok(t.path(), &["simulate"], SMALL);
    assert_rerun_identical(t.path(), &a, &["simulate"], SMALL);
    let c = ok(t.path(), &["simulate", "--seed", "5"], SMALL);
    assert_ne!(fs::read(a.join("sinogram.bin")).unwrap(), fs::read(c.join("sinogram.bin")).unwrap());
}

#[test]
fn noiseless_sinogram_is_forward_of_phantom() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(t.path(), &["simulate"], &format!("{SMALL}sim.noise=none\nsim.dump_matrix=true\n"));
    let setup = TomoSetup::new(16, 8, 1, 1).unwrap();
    let phantom = read_array(&out.join("phantom.bin")).unwrap();
    assert_eq!(phantom.data, shepp_logan(16).values);
    let sino = read_array(&out.join("sinogram.bin")).unwrap();
    assert_eq!(sino.data, setup.projector().apply(&phantom.data));
    assert_eq!(sino.dims[0], 8);
    let a = read_array(&out.join("matrix.bin")).unwrap();
    assert_eq!(a.data, setup.projector().to_dense());
}

#[test]
fn outputs_round_trip_through_reader() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(t.path(), &["simulate"], SMALL);
    for name in ["phantom.bin", "counts.bin", "sinogram.bin", "fbp.bin"] {
        let bytes = fs::read(out.join(name)).unwrap();
        let arr = Array::decode(&bytes).unwrap();
        assert_eq!(arr.encode(), bytes);
        assert_eq!(read_meta(&out.join(name)).unwrap()["geometry.size"], "16");
    }
}

#[test]
fn resolved_config_reproduces_run() {
    let t = tempfile::tempdir().unwrap();
    let a = ok(t.path(), &["reconstruct"], &format!("{SMALL}unroll.variant=sklspd1\n"));
    let echo = fs::read_to_string(a.join("config.resolved")).unwrap();
    let b = ok(t.path(), &["reconstruct"], &echo);
    assert_eq!(fs::read(a.join("recon.bin")).unwrap(), fs::read(b.join("recon.bin")).unwrap());
    assert_eq!(fs::read(a.join("layers.csv")).unwrap(), fs::read(b.join("layers.csv")).unwrap());
}

#[test]
fn lpd_matches_single_subset_lspd() {
    let t = tempfile::tempdir().unwrap();
    let a = ok(t.path(), &["reconstruct"], &format!("{SMALL}unroll.variant=lpd\n"));
    let b = ok(t.path(), &["reconstruct"], &format!("{SMALL}unroll.variant=lspd\ngeometry.subsets=1\n"));
    assert_eq!(
        read_array(&a.join("recon.bin")).unwrap().data,
        read_array(&b.join("recon.bin")).unwrap().data
    );
}

#[test]
fn call_counts_match_table() {
    let t = tempfile::tempdir().unwrap();
    let base = "geometry.size=16\ngeometry.angles=8\nunroll.layers=12\n";
    for (variant, calls) in [("lpd", "24"), ("lspd", "6"), ("sklspd1", "4")] {
        let out = ok(t.path(), &["reconstruct"], &format!("{base}unroll.variant={variant}\n"));
        assert_eq!(kv(&out.join("calls.txt"))["calls"], calls, "{variant}");
    }
}

#[test]
fn pdhg_residual_decreases_after_burn_in() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}unroll.variant=pdhg\nunroll.primal=all\nunroll.layers=40\nsim.noise=none\n");
    let out = ok(t.path(), &["reconstruct"], &cfg);
    let csv = fs::read_to_string(out.join("layers.csv")).unwrap();
    let res: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(res[40] < res[10]);
    assert!(res[10..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{res:?}");
}

#[test]
fn train_then_reconstruct_from_checkpoint() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}train.epochs=1\ndataset.size=2\n");
    let a = ok(t.path(), &["train"], &cfg);
    assert_rerun_identical(t.path(), &a, &["train"], &cfg);
    let ckpt = a.join("checkpoint.bin");
    let ck = ckpt.to_str().unwrap();
    ok(t.path(), &["reconstruct", "--checkpoint", ck], &cfg);
    let (code, _) = unroll(t.path(), &["reconstruct", "--checkpoint", ck], &format!("{cfg}unroll.hidden=4\n"));
    assert_eq!(code, 2);
}

#[test]
fn adapt_objective_ends_below_start() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(t.path(), &["adapt"], &format!("{SMALL}adapt.steps=10\n"));
    let csv = fs::read_to_string(out.join("objective.csv")).unwrap();
    let v: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(v.len(), 11);
    assert!(v[10] <= v[0]);
}

#[test]
fn verify_stacked_orthogonal_recovers_in_one_step() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(t.path(), &["verify"], "theory.runs=20\n");
    let summary = kv(&out.join("summary.txt"));
    assert!(summary["alpha"].parse::<f64>().unwrap().abs() < 1e-12);
    assert_eq!(summary["passed"], "true");
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let e1: f64 = csv.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(e1 <= 1e-10);
}

#[test]
fn metrics_of_identical_images() {
    let t = tempfile::tempdir().unwrap();
    let sim = ok(t.path(), &["simulate"], SMALL);
    let p = sim.join("fbp.bin");
    let p = p.to_str().unwrap();
    let out = ok(t.path(), &["metrics", "--recon", p, "--reference", p], "");
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[6], "inf");
    assert_eq!(row[7], "1");
}

#[test]
fn error_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(unroll(t.path(), &["simulate"], "unroll.K=12\n").0, 2);
    assert_eq!(unroll(t.path(), &["simulate"], "geometry.size=many\n").0, 2);
    assert_eq!(unroll(t.path(), &["reconstruct"], "unroll.variant=lspd\nunroll.factor=2\n").0, 2);
    let missing = t.path().join("absent.bin");
    let cfg = format!("input.sinogram={}\n", missing.display());
    assert_eq!(unroll(t.path(), &["reconstruct"], &cfg).0, 4);
    let junk = t.path().join("junk.bin");
    fs::write(&junk, b"not an array").unwrap();
    assert_eq!(unroll(t.path(), &["reconstruct"], &format!("input.sinogram={}\n", junk.display())).0, 4);
}
