use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn anderson(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anderson")).args(args).env_remove("ANDERSON_OUT").output().expect("spawn anderson")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    anderson(&args)
}

const RESONANCE: &str = r#"{"experiment": {"kind": "resonance_sweep", "deltas": [0.4, 0.2, 0.1]}, "seed": 4}"#;

#[test]
fn unknown_key_exits_with_error_naming_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"experiment": {"kind": "renorm2d_rate", "epsilonn": [0.1]}}"#);
    let out = run("renorm", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("epsilonn"), "{err}");
}

#[test]
fn subcommand_rejects_other_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.json", RESONANCE);
    let out = run("weyl", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("resonance_sweep"));
}

#[test]
fn writes_requested_formats_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.json", RESONANCE);
    let dir = tmp.path().join("out");
    let out = run("resonance", &cfg, &dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let names = files(&dir);
    assert_eq!(names.len(), 3, "{names:?}");
    let stem = names[0].trim_end_matches(".csv");
    assert!(stem.starts_with("resonance_sweep-"));
    assert_eq!(names, vec![format!("{stem}.csv"), format!("{stem}.json"), format!("{stem}.manifest.json")]);

    let m: Value = serde_json::from_str(&fs::read_to_string(dir.join(&names[2])).unwrap()).unwrap();
    assert_eq!(m["status"], "passed");
    assert_eq!(m["seed"], 4);
    assert!(m["rng"].as_str().unwrap().len() > 0);
    assert!(m["started"].is_string() && m["finished"].is_string());
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let bytes = fs::read(dir.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.json", RESONANCE);
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run("resonance", &cfg, &a, &[]).status.success());
    assert!(run("resonance", &cfg, &b, &[]).status.success());
    let names = files(&a);
    let manifest = a.join(names.iter().find(|n| n.ends_with(".manifest.json")).unwrap());
    assert!(run("resonance", &manifest, &c, &[]).status.success());
    assert_eq!(files(&c), names);
    for n in names.iter().filter(|n| !n.ends_with(".manifest.json")) {
        let want = fs::read(a.join(n)).unwrap();
        assert_eq!(fs::read(b.join(n)).unwrap(), want, "{n}");
        assert_eq!(fs::read(c.join(n)).unwrap(), want, "{n}");
    }
}

#[test]
fn seed_override_changes_run_id() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "r.json", RESONANCE);
    let dir = tmp.path().join("out");
    assert!(run("resonance", &cfg, &dir, &[]).status.success());
    assert!(run("resonance", &cfg, &dir, &["--seed", "9"]).status.success());
    let manifests: Vec<String> = files(&dir).into_iter().filter(|n| n.ends_with(".manifest.json")).collect();
    assert_eq!(manifests.len(), 2, "{manifests:?}");
}

#[test]
fn two_route_oracle_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "t.json", r#"{"experiment": {"kind": "two_route_oracle", "n": 16}, "formats": ["json"]}"#);
    let dir = tmp.path().join("out");
    let out = run("spectrum", &cfg, &dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let name = files(&dir).into_iter().find(|n| n.ends_with(".json") && !n.ends_with(".manifest.json")).unwrap();
    let doc: Value = serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap();
    let gap = doc["summary"]["max_abs_gap"].as_f64().unwrap();
    assert!(gap <= 1e-5, "{gap}");
    assert_eq!(doc["all_pass"], true);
}

#[test]
fn sweep_runs_each_entry() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"runs": [
            {"experiment": {"kind": "resonance_sweep", "deltas": [0.1]}, "formats": ["json"]},
            {"experiment": {"kind": "two_route_oracle", "times": [0.1]}, "formats": ["json"]}
        ]}"#,
    );
    let dir = tmp.path().join("out");
    assert!(run("sweep", &cfg, &dir, &[]).status.success());
    assert_eq!(files(&dir).iter().filter(|n| n.ends_with(".manifest.json")).count(), 2);
    assert_eq!(run("resonance", &cfg, &tmp.path().join("x"), &[]).status.code(), Some(2));
}

#[test]
fn svg_matches_golden() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    assert!(run("renorm", &golden.join("renorm2d.json"), &dir, &[]).status.success());
    let svg = fs::read_to_string(dir.join(files(&dir).into_iter().find(|n| n.ends_with(".svg")).unwrap())).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert!(svg.contains("epsilon (log)") && svg.contains(">c_eps<"));
    assert_eq!(svg, fs::read_to_string(golden.join("renorm2d.svg")).unwrap());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "s.json",
        r#"{"runs": [
            {"experiment": {"kind": "resonance_sweep"}},
            {"experiment": {"kind": "renorm2d_rate", "epsilons": [0.125, 0.0625]}}
        ]}"#,
    );
    let mut dirs = Vec::new();
    for threads in ["1", "3"] {
        let dir = tmp.path().join(threads);
        let out = Command::new(env!("CARGO_BIN_EXE_anderson"))
            .args(["sweep", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()])
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        dirs.push(dir);
    }
    let names = files(&dirs[0]);
    assert_eq!(files(&dirs[1]), names);
    for n in names.iter().filter(|n| !n.ends_with(".manifest.json")) {
        assert_eq!(fs::read(dirs[0].join(n)).unwrap(), fs::read(dirs[1].join(n)).unwrap(), "{n}");
    }
}

#[test]
fn sample_writes_raw_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "w.json", r#"{"experiment": {"kind": "white_noise", "n": 64}, "seed": 1}"#);
    let dir = tmp.path().join("out");
    let out = run("sample", &cfg, &dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let blob = files(&dir).into_iter().find(|n| n.ends_with("-xi.bin")).unwrap();
    assert_eq!(fs::read(dir.join(blob)).unwrap().len(), 16 + 64 * 64 * 8);
}
