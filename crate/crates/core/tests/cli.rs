use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SCENE: &str = r#"
duration_s = 6.0
noise_sigma = 0.05
seed = 4

[[targets]]
kind = "human"
distance_m = 1.0
angle_deg = 10.0
amplitude = [0.1, 0.0]
vibration = [
    { amplitude_m = 0.002, frequency_hz = 0.25, role = "respiration" },
    { amplitude_m = 0.0002, frequency_hz = 1.2, role = "heartbeat" },
]
"#;

// short schedule and a cheap solve so the stages run in debug builds
const CONFIG: &str = r#"
scene = "scene.toml"

[solver]
max_iters = 30

[schedule]
t_loc = 2.0
t_win = 4.0
t_int = 0.5
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fmcw-vitals"))
}

fn setup(dir: &Path, config_extra: &str, scene: &str) {
    fs::write(dir.join("scene.toml"), scene).unwrap();
    fs::write(dir.join("run.toml"), format!("{CONFIG}\n{config_extra}")).unwrap();
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = bin();
    cmd.arg("--config").arg(dir.join("run.toml"));
    cmd.args(args);
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// One line, `error[kind]: ...`, and the matching exit code.
fn assert_fails(o: &Output, kind: &str, code: i32, needle: &str) {
    let err = stderr(o);
    assert_eq!(o.status.code(), Some(code), "stderr: {err}");
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with(&format!("error[{kind}]: ")), "stderr: {err}");
    assert!(err.contains(needle), "stderr: {err}");
}

#[test]
fn same_seed_gives_identical_cubes() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "", SCENE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(dir.path(), &["--out", out.to_str().unwrap(), "simulate"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(a.join("cube.bin")).unwrap(), fs::read(b.join("cube.bin")).unwrap());
    assert_eq!(
        fs::read(a.join("truth_waveforms.csv")).unwrap(),
        fs::read(b.join("truth_waveforms.csv")).unwrap()
    );

    let c = dir.path().join("c");
    let o = run(dir.path(), &["--out", c.to_str().unwrap(), "--seed", "5", "simulate"]);
    assert!(o.status.success());
    assert_ne!(fs::read(a.join("cube.bin")).unwrap(), fs::read(c.join("cube.bin")).unwrap());
}

#[test]
fn zero_duration_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "", &SCENE.replace("duration_s = 6.0", "duration_s = 0.0"));
    let o = run(dir.path(), &["--out", dir.path().join("o").to_str().unwrap(), "simulate"]);
    assert_fails(&o, "config", 2, "duration");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "[solver.extra]\nfoo = 1\n", SCENE);
    let o = run(dir.path(), &["simulate"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error[config]: "));
}

#[test]
fn missing_cube_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "", SCENE);
    let o = run(dir.path(), &["--out", dir.path().join("nothing").to_str().unwrap(), "localize"]);
    assert_fails(&o, "data", 3, "cube");
}

#[test]
fn empty_roi_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    // a valid box that falls between angle grid points
    setup(dir.path(), "[detection.roi]\ndistance = [0.5, 2.0]\nangle = [10.2, 10.8]\n", SCENE);
    let out = dir.path().join("o");
    let o = run(dir.path(), &["--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(dir.path(), &["--out", out.to_str().unwrap(), "localize"]);
    assert_fails(&o, "config", 2, "ROI");
}

#[test]
fn empty_support_warns_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "", SCENE);
    let out = dir.path().join("o");
    let o = run(dir.path(), &["--out", out.to_str().unwrap(), "simulate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let support = dir.path().join("empty.csv");
    fs::write(&support, "subject_id,range_bin,angle_bin,distance_m,angle_deg,power\n").unwrap();
    let o = run(
        dir.path(),
        &["--out", out.to_str().unwrap(), "monitor", "--support", support.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("warning: "));
    assert!(!out.join("rates_subject0.csv").exists());
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path(), "", SCENE);
    let out = dir.path().join("o");
    let o_str = out.to_str().unwrap();
    for stage in ["simulate", "localize", "monitor", "evaluate"] {
        let o = run(dir.path(), &["--out", o_str, stage]);
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
    }
    for f in ["support.csv", "map.csv", "map.pgm", "rates_subject0.csv", "aecdf.csv", "rmse.csv", "summary.txt"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    // (6 - 4) / 0.5 + 1 estimates plus the header
    let rates = fs::read_to_string(out.join("rates_subject0.csv")).unwrap();
    assert_eq!(rates.lines().count(), 6);
}

#[test]
fn zero_threads_is_rejected() {
    let o = bin().args(["--threads", "0", "evaluate"]).output().unwrap();
    assert_fails(&o, "config", 2, "threads");
}
