use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn qjump(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qjump"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("QJUMP_OUT")
        .output()
        .expect("binary runs")
}

fn summary(o: &Output) -> Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let line = text.lines().last().unwrap_or_else(|| panic!("no summary; stderr: {}", String::from_utf8_lossy(&o.stderr)));
    serde_json::from_str(line).expect("summary is one JSON line")
}

#[test]
fn steady_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("fig1.cfg");
    let o = qjump(&["steady", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&o);
    let n = s["n_ss"].as_f64().unwrap();
    let g2 = s["g2"].as_f64().unwrap();
    assert!((n - 2.46).abs() < 0.02 * 2.46, "{n}");
    assert!((g2 - 1.75).abs() < 0.03 * 1.75, "{g2}");
    for f in s["files"].as_array().unwrap() {
        assert!(Path::new(f.as_str().unwrap()).starts_with(dir.path()));
    }
}

#[test]
fn mcwf_reruns_are_byte_identical() {
    let cfg = configs().join("fig2.cfg");
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let o = qjump(
            &["mcwf", "--config", cfg.to_str().unwrap(), "--traj", "1", "--seed", "7", "--override", "t_final=0.5"],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        let s = summary(&o);
        let files: Vec<String> = s["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap().to_owned()).collect();
        let record = files.iter().find(|f| f.ends_with(".jsonl")).unwrap().clone();
        let name = Path::new(&record).file_name().unwrap().to_str().unwrap().to_owned();
        (name, std::fs::read(&record).unwrap(), dir)
    };
    let (na, a, _da) = run();
    let (nb, b, _db) = run();
    assert_eq!(na, nb);
    assert!(na.contains("-s7-") && na.contains("-v1-"), "{na}");
    assert_eq!(a, b);
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.cfg");
    std::fs::write(&cfg, "model = jc\ng = 25\nepsilonn = 5.3\n").unwrap();
    let o = qjump(&["steady", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&o);
    assert!(s["error"].as_str().unwrap().contains("epsilonn"));
    assert!(s["error"].as_str().unwrap().contains("line 3"));
}

#[test]
fn bad_override_and_usage_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = qjump(&["steady", "--override", "g=abc"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = qjump(&["frobnicate"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = qjump(&["kerr", "--override", "model=kerr"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = qjump(
        &["heterodyne", "--override", "model=jc", "--override", "g=60", "--override", "epsilon=13.5",
          "--override", "delta_omega=-8", "--override", "l_max=10", "--override", "dt=0.5", "--override", "t_final=5"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn analytics_overlays_a_saved_record() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("null_record.cfg");
    let o = qjump(&["analytics", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&o);
    assert!((s["bound"].as_f64().unwrap() - 0.051).abs() < 0.002);
    assert!((s["intersection"].as_f64().unwrap() - 0.0743).abs() < 5e-4);
    let curve = std::fs::read_to_string(s["files"][0].as_str().unwrap()).unwrap();
    assert_eq!(curve.lines().count(), 302);

    // A decaying coherent state passes through n_mid.
    let rec_dir = dir.path().join("rec");
    let o = qjump(
        &["mcwf", "--override", "model=empty", "--override", "initial=coherent",
          "--override", "alpha1=6", "--override", "l_max=70",
          "--override", "t_final=2", "--override", "dt=0.0005", "--override", "sample_every=2", "--override", "formats=jsonl"],
        &rec_dir,
    );
    assert_eq!(o.status.code(), Some(0));
    let record = summary(&o)["files"][0].as_str().unwrap().to_owned();
    let o = qjump(
        &["analytics", "--config", cfg.to_str().unwrap(), "--override", &format!("record={record}")],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let t_mid = summary(&o)["overlay"]["t_mid"].as_f64().unwrap();
    assert!((t_mid - 0.5 * (36.0f64 / 17.2575).ln()).abs() < 1e-3, "{t_mid}");
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qjump"))
        .args(["semiclassical", "--override", "g=60", "--override", "epsilon=13.5", "--override", "delta_omega=-8",
               "--override", "t_final=1", "--override", "dt=0.001"])
        .env("QJUMP_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let s = summary(&o);
    assert_eq!(s["roots"].as_array().unwrap().len(), 3);
    assert!(s["bloch_drift"].as_f64().unwrap() < 1e-8);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn bench_matches_checked_in_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = qjump(&["bench"], dir.path());
    let s = summary(&o);
    assert_eq!(o.status.code(), Some(0), "{s}");
    assert_eq!(s["rows"].as_u64(), Some(17));
    assert!(s["diff"].as_array().unwrap().is_empty());
}
