use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn asfv(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asfv"))
        .args(args)
        .env("ASFV_OUT_DIR", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

/// Every output file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn small(command: &str) -> Vec<&str> {
    let mut args = vec![command];
    let sets: &[&str] = match command {
        "sweep" => &["sweep.vehicles=[3,6]", "sweep.scenarios=2"],
        "train" => &["training.rounds=2", "training.local_epochs=1", "training.vehicles=4"],
        "bounds" => &["convergence.horizon=30", "convergence.trials=400", "convergence.seeds=20", "convergence.pilot_seeds=5"],
        "simulate" => &["rounds=2"],
        "optimize" => &[],
        _ => &[],
    };
    for s in sets {
        args.extend(["--set", s]);
    }
    if command == "optimize" {
        args.extend(["--vehicles", "6"]);
    }
    args
}

#[test]
fn repeated_runs_write_identical_files() {
    for command in ["profile", "optimize", "simulate", "bounds", "sweep", "train"] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let args = small(command);
        for dir in [&a, &b] {
            let out = asfv(dir.path(), &args);
            assert!(
                out.status.success(),
                "{command} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        let (x, y) = (snapshot(a.path()), snapshot(b.path()));
        assert!(x.keys().any(|k| k.ends_with(".csv")), "{command} wrote no CSV");
        assert!(x.contains_key("manifest.json"));
        assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{command}");
        for (name, bytes) in &x {
            assert!(bytes == &y[name], "{command}: {name} differs between runs");
        }
    }
}

#[test]
fn seed_changes_the_output() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(asfv(a.path(), &["optimize", "--vehicles", "4"]).status.success());
    assert!(asfv(b.path(), &["optimize", "--vehicles", "4", "--set", "seed=2"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("allocations.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(asfv(dir.path(), &["profile"]).status.success());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"profile\"") || manifest.contains("\"command\":\"profile\""));
    assert!(manifest.contains("profile.csv"));
    assert!(manifest.contains("config_hash"));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = asfv(dir.path(), &["optimize", "--set", "energy_budget_j=-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = asfv(dir.path(), &["optimize", "--set", "no_such_field=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = asfv(dir.path(), &["optimize", "--set", "missing-equals"]);
    assert_eq!(out.status.code(), Some(2));
}
