use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn elosslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elosslab"))
        .args(args)
        .env_remove("ELOSSLAB_THREADS")
        .output()
        .expect("spawn elosslab")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_usage_errors() {
    let out = elosslab(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["shapes", "spins", "rigidity", "score-lab", "bench"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(elosslab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(elosslab(&["shapes", "gen", "--size", "many"]).status.code(), Some(2));
}

#[test]
fn generation_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = elosslab(&["shapes", "gen", "--size", "10", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    assert!(!dir.path().join("shapes.bin").exists());
}

#[test]
fn shapes_gen_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = elosslab(&["shapes", "gen", "--seed", "4", "--size", "20", "--n-vertices", "6", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("shapes.bin").exists());
    let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("seed = 4"));
    assert!(manifest.contains("n_vertices = 6"));
}

#[test]
fn train_replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let small = [
        "--set", "epochs=2", "--set", "train_size=64", "--set", "val_size=16", "--set", "test_size=16",
    ];
    let mut args = vec!["shapes", "train", "--seed", "9", "--loss", "sparse-energy", "--out", path(&a)];
    args.extend(small);
    let out = elosslab(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["metrics.csv", "manifest.txt", "checkpoint.bin", "curve.svg"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let manifest = a.join("manifest.txt");
    let out = elosslab(&["shapes", "train", "--config", path(&manifest), "--seed", "9", "--out", path(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(a.join("checkpoint.bin")).unwrap(), fs::read(b.join("checkpoint.bin")).unwrap());

    let out = elosslab(&["shapes", "train", "--config", path(&manifest), "--seed", "10", "--out", path(&b)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn spins_train_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let data = dir.path().join("data");
    let out = elosslab(&[
        "spins", "train", "--seed", "2", "--loss", "true-energy", "--out", path(&run),
        "--set", "lattice=3", "--set", "epochs=1", "--set", "train_size=32", "--set", "val_size=8", "--set", "test_size=8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = elosslab(&["spins", "gen", "--seed", "3", "--lattice", "3", "--size", "8", "--out", path(&data)]);
    assert!(out.status.success());
    let out = elosslab(&[
        "spins", "eval", "--checkpoint", path(&run.join("checkpoint.bin")), "--data", path(&data.join("spins.bin")),
        "--out", path(&data),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval = fs::read_to_string(data.join("eval.csv")).unwrap();
    assert!(eval.starts_with("samples,mean_pred_energy"));

    // shape losses are rejected for spins
    let out = elosslab(&["spins", "train", "--seed", "2", "--loss", "kabsch", "--out", path(&run)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rigidity_sample_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = elosslab(&["rigidity", "sample", "--seed", "1", "--n", "10", "--count", "3", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let edges = dir.path().join("edges.csv");
    let out = elosslab(&["rigidity", "check", "--edges", path(&edges), "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("rigidity.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.ends_with(",true,true")));
}

#[test]
fn score_lab_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let out = elosslab(&["score-lab", "run", "--seed", "1", "--trials", "4", "--mc-samples", "16", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("score_lab.csv")).unwrap();
    assert!(csv.starts_with("trial,bias_dist,bias_mse,var_dist,var_mse,sigma_t,mc_samples"));
    assert_eq!(csv.lines().count(), 5);

    let out = elosslab(&["bench", "losses", "--sizes", "20,40", "--repeats", "1", "--out", path(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bench = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(bench.lines().count(), 9);
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_elosslab"))
        .args(["bench", "losses", "--sizes", "10", "--repeats", "1"])
        .env("ELOSSLAB_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
