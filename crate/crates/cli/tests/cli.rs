use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_firefront"));
    c.env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"
seed = 7
output = "unused"

[scenario]
name = "synthetic"

[grid]
x_min = 0.0
x_max = 1.0
y_min = 0.0
y_max = 1.0
n_x = 15
n_y = 15
t_min = 0.0
t_max = 1.0
n_t = 12

[train]
epochs = 4
hidden = [6, 5]
checkpoint_every = 2
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn simulate_writes_every_snapshot_and_fronts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("lsm");
    let o = run(&["simulate-lsm", "--config", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snaps = fs::read_dir(out.join("snapshots")).unwrap().count();
    assert_eq!(snaps, 13);
    assert!(out.join("fronts.csv").is_file());
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 7"));
    assert!(manifest.contains("command = \"simulate-lsm\""));
}

#[test]
fn invalid_grid_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("n_x = 15", "n_x = 0"));
    let o = run(&[
        "simulate-lsm",
        "--config",
        s(&cfg),
        "--output",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("n_x"));
}

#[test]
fn malformed_toml_reports_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &SMALL.replace("n_t = 12", "n_t = twelve"));
    let o = run(&["simulate-lsm", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("c.toml") && err.contains("line 17"), "{err}");
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    for cmd in ["simulate-lsm", "train"] {
        let (a, b) = (tmp.path().join(format!("{cmd}-a")), tmp.path().join(format!("{cmd}-b")));
        for out in [&a, &b] {
            let o = run(&[cmd, "--config", s(&cfg), "--output", s(out)]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        }
        let (fa, fb) = (dir_bytes(&a), dir_bytes(&b));
        assert!(!fa.is_empty());
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb);
            if na == "manifest.toml" {
                // The manifest echoes the output path, which differs here.
                let strip = |b: &[u8]| String::from_utf8_lossy(b).replace(&format!("{cmd}-b"), &format!("{cmd}-a"));
                assert_eq!(strip(ba), strip(bb));
            } else {
                assert_eq!(ba, bb, "{na} differs");
            }
        }
    }
}

#[test]
fn train_writes_log_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("t");
    let o = run(&["train", "--config", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(out.join("checkpoints/epoch_000002.txt").is_file());
    assert!(fs::read_to_string(out.join("checkpoint.txt"))
        .unwrap()
        .starts_with("firefront-params 1"));
}

#[test]
fn assimilation_without_observations_fails_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL.replace("[train]", "[train]\nvariant = \"pinn_a\"");
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = tmp.path().join("t");
    let o = run(&["train", "--config", s(&cfg), "--output", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("observations"));
    assert!(!out.exists());
}

#[test]
fn bayesian_checkpoint_pairs_mu_and_rho() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SMALL.replace("[train]", "[train]\nbayesian = true\nvariant = \"pinn_a\"")
        + "\n[observations]\nsource = \"synthetic\"\ntimes = [0.5, 1.0]\npoints_per_time = 8\nwind_rotation_deg = 15.0\n\n[evaluation]\nmc_samples = 4\n";
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = tmp.path().join("b");
    let o = run(&["train", "--config", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpt = fs::read_to_string(out.join("checkpoint.txt")).unwrap();
    let lines: Vec<&str> = ckpt.lines().collect();
    assert_eq!(lines[0], "firefront-variational 1");
    assert_eq!(lines.iter().filter(|l| **l == "mu").count(), 1);
    assert_eq!(lines.iter().filter(|l| **l == "rho").count(), 1);
    assert_eq!(lines.iter().filter(|l| l.starts_with("W1 ")).count(), 2);
    assert!(out.join("observations.csv").is_file());
    assert!(out.join("truth/fronts.csv").is_file());
    assert!(out.join("predictions/burned_fraction_012.txt").is_file());

    let ev = tmp.path().join("ev");
    let o = run(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--output",
        s(&ev),
        "--checkpoint",
        s(&out.join("checkpoint.txt")),
        "--truth",
        s(&out.join("truth")),
        "--isochrones",
        s(&out.join("observations.csv")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let with_cov = metrics.lines().skip(1).filter(|l| !l.ends_with(',')).count();
    assert_eq!(with_cov, 2);
}

#[test]
fn evaluate_reference_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let lsm = tmp.path().join("lsm");
    assert!(run(&["simulate-lsm", "--config", s(&cfg), "--output", s(&lsm)])
        .status
        .success());
    let ev = tmp.path().join("ev");
    let o = run(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--output",
        s(&ev),
        "--reference",
        s(&lsm),
        "--truth",
        s(&lsm),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 14);
    for line in metrics.lines().skip(1) {
        assert_eq!(line.split(',').nth(3), Some("1"), "{line}");
    }
}

#[test]
fn missing_reference_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let missing = tmp.path().join("nowhere");
    let o = run(&[
        "evaluate",
        "--config",
        s(&cfg),
        "--output",
        s(&tmp.path().join("ev")),
        "--reference",
        s(&missing),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere"));
}

#[test]
fn existing_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SMALL);
    let out = tmp.path().join("lsm");
    let args = ["simulate-lsm", "--config", s(&cfg), "--output", s(&out)];
    assert!(run(&args).status.success());
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(run(&forced).status.success());
}

#[test]
fn make_scenario_round_trips_through_config() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = tmp.path().join("sc.toml");
    let o = run(&[
        "make-scenario",
        "--name",
        "synthetic2",
        "--n-x",
        "11",
        "--n-y",
        "11",
        "--n-t",
        "6",
        "--seed",
        "4",
        "--output",
        s(&sc),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let body = format!("seed = 1\noutput = \"x\"\n[scenario]\nfile = \"{}\"\n", s(&sc));
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = tmp.path().join("lsm");
    let o = run(&["simulate-lsm", "--config", s(&cfg), "--output", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(out.join("snapshots")).unwrap().count(), 7);

    let o = run(&[
        "make-scenario",
        "--name",
        "nope",
        "--output",
        s(&tmp.path().join("n.toml")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    assert_eq!(run(&["simulate-lsm"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = firefront::experiment::ExperimentConfig::load(&path).unwrap();
            cfg.resolve().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
