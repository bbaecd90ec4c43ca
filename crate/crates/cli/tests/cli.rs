use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn ionkink(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionkink")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

fn hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn check_manifest(dir: &Path, command: &str) {
    let all = files(dir);
    let manifest: serde_json::Value = serde_json::from_slice(&all["manifest.json"]).unwrap();
    assert_eq!(manifest["command"], command);
    assert_eq!(manifest["status"], "ok");
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len() + 1, all.len(), "every file but the manifest is listed");
    for o in outputs {
        let name = o["file"].as_str().unwrap();
        assert_eq!(o["sha256"].as_str().unwrap(), hex(&all[name]), "{name}");
        assert_eq!(o["bytes"].as_u64().unwrap() as usize, all[name].len());
    }
}

fn without_manifest(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut f = files(dir);
    f.remove("manifest.json");
    f
}

fn same(a: &Path, b: &Path, command: &str) {
    let (fa, fb) = (without_manifest(a), without_manifest(b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>(), "{command}");
    for (name, bytes) in &fa {
        assert!(bytes == &fb[name], "{command}: {name} differs between {} and {}", a.display(), b.display());
    }
}

/// Runs a command twice and once more from the first run's manifest, and
/// requires byte-identical outputs.
fn reproducible(command: &str, sets: &[&str]) {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec![command, "--workers", "1"];
    for s in sets {
        args.extend(["--set", s]);
    }
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        let o = ionkink(&args, dir);
        assert!(o.status.success(), "{command}: {}", String::from_utf8_lossy(&o.stderr));
    }
    check_manifest(&a, command);
    same(&a, &b, command);
    let manifest = a.join("manifest.json");
    let o = ionkink(&[command, "--workers", "1", "--config", manifest.to_str().unwrap()], &c);
    assert!(o.status.success(), "{command}: {}", String::from_utf8_lossy(&o.stderr));
    same(&a, &c, command);
}

#[test]
fn relax_is_reproducible() {
    reproducible("relax", &["run.n_ions=31", "trap.anisotropy=1.34"]);
}

#[test]
fn modes_is_reproducible() {
    reproducible("modes", &["run.n_ions=50"]);
}

#[test]
fn tune_is_reproducible() {
    reproducible("tune", &["run.n_ions=50", "tune.ratio_max=1.02"]);
}

#[test]
fn pn_is_reproducible() {
    reproducible("pn", &["run.n_ions=44", "pn.grid_points=21"]);
}

#[test]
fn sweep_is_reproducible() {
    reproducible("sweep", &["pn.n_min=44", "pn.n_max=46", "pn.grid_points=21"]);
}

#[test]
fn render_is_reproducible() {
    reproducible("render", &["run.n_ions=30", "camera.exposure_s=0.0005"]);
}

#[test]
fn quench_is_reproducible() {
    reproducible("quench", &["quench.ion_numbers=[12]", "quench.trials=2", "quench.ramp_time_s=0.0005"]);
}

#[test]
fn relax_writes_a_zigzag() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ionkink(&["relax", "--set", "run.n_ions=31", "--set", "trap.anisotropy=1.34", "--set", "run.structure=\"ground\""], tmp.path());
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["class"], "Zigzag");
    assert_eq!(summary["kink_multiplicity"], 0);
    let csv = fs::read_to_string(tmp.path().join("positions.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("ion_index,x_m,y_m,z_m"));
    assert_eq!(csv.lines().count(), 32);
}

#[test]
fn exit_codes_follow_error_families() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = tmp.path().join("unknown");
    let o = ionkink(&["bogus"], &unknown);
    assert_eq!(o.status.code(), Some(2));
    assert!(!unknown.exists(), "no outputs for an unknown command");

    let o = ionkink(&["relax", "--set", "trap.no_such_key=1"], &tmp.path().join("key"));
    assert_eq!(o.status.code(), Some(2));
    let o = ionkink(&["relax", "--set", "run.n_ions=1"], &tmp.path().join("n"));
    assert_eq!(o.status.code(), Some(2));

    let physics = tmp.path().join("physics");
    let o = ionkink(&["relax", "--set", "trap.axial_hz=700000"], &physics);
    assert_eq!(o.status.code(), Some(3));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(physics.join("manifest.json")).unwrap()).unwrap();
    assert_ne!(manifest["status"], "ok");

    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let o = ionkink(&["relax"], &blocker.join("sub"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn version_reports_format() {
    let o = Command::new(env!("CARGO_BIN_EXE_ionkink")).arg("--version").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")) && text.contains("output format 1"), "{text}");
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let sets = ["--set", "quench.ion_numbers=[10, 12]", "--set", "quench.trials=3", "--set", "quench.ramp_time_s=0.0005"];
    for (w, dir) in [("1", "one"), ("3", "three")] {
        let mut args = vec!["quench", "--workers", w];
        args.extend(sets);
        let o = ionkink(&args, &tmp.path().join(dir));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    same(&tmp.path().join("one"), &tmp.path().join("three"), "quench");
}
