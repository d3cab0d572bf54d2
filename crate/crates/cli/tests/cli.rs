use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn quenchcorr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quenchcorr"))
        .args(args)
        .env_remove("QUENCHCORR_CONFIG")
        .env_remove("QUENCHCORR_PRESET")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A fig2-style configuration shrunk to run in well under a second.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let out = quenchcorr(&["show", "--preset", "fig2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout)
        .unwrap()
        .replace("n_sites = 50", "n_sites = 10")
        .replace("realizations = 10000", "realizations = 20");
    let path = dir.join("small.toml");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn presets_are_listed_and_validate() {
    let out = quenchcorr(&["presets"]);
    let names = String::from_utf8(out.stdout).unwrap();
    assert_eq!(names.lines().count(), 8);
    for name in names.lines() {
        let v = quenchcorr(&["validate", "--preset", name]);
        assert!(v.status.success(), "{name}: {}", stderr(&v));
    }
}

#[test]
fn negative_realizations_exit_with_config_error_and_no_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = small_config(dir.path());
    let o = quenchcorr(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--realizations=-5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("run.realizations"));
    assert!(!out_dir.exists());

    let text = fs::read_to_string(&cfg).unwrap().replace("realizations = 20", "realizations = -5");
    fs::write(&cfg, text).unwrap();
    let o = quenchcorr(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn incompatible_solver_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = quenchcorr(&["show", "--preset", "table1"]);
    let text = String::from_utf8(out.stdout).unwrap().replace("solver = \"mps\"", "solver = \"freefermion\"");
    let path = dir.path().join("bad.toml");
    fs::write(&path, text).unwrap();
    let o = quenchcorr(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.solver"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let text = fs::read_to_string(&cfg).unwrap().replace("[model]\n", "[model]\ngamme = 0.3\n");
    fs::write(&cfg, text).unwrap();
    let o = quenchcorr(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamme"), "{}", stderr(&o));
}

#[test]
fn reruns_reproduce_csv_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "3")] {
        let o = quenchcorr(&["run", "--config", cfg.to_str().unwrap(), "--workers", workers, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut csvs = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_str().unwrap();
        if name.ends_with(".csv") || name.ends_with(".dat") || name == "fits.json" {
            csvs += 1;
            assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
        }
    }
    assert!(csvs >= 17, "only {csvs} files compared");
    let header = fs::read_to_string(a.join("J0.5_discord_quenched.csv")).unwrap();
    assert!(header.starts_with("r,mean,std_error,n_realizations\n"));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(a.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["run"]["realizations"], 20);
    assert_eq!(meta["workers"], 1);
}

#[test]
fn seed_override_changes_quenched_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut bodies = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        let o = quenchcorr(&["run", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        bodies.push(fs::read(out.join("J0.5_discord_quenched.csv")).unwrap());
    }
    assert_ne!(bodies[0], bodies[1]);
}
