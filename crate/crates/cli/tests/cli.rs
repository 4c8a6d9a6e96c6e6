use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use otm_cli::{model, run, RunConfig};
use otm_core::nets;

const TINY: &str = "\
experiment.name = tiny
mu.kind = gaussian
mu.mean = 0, 0
nu.kind = gaussian
nu.mean = 2, 0
g.hidden = 8, 8
psi.hidden = 8, 8
train.batch_size = 16
train.iterations = 4
train.k_g = 2
eval.samples = 64
eval.w2_samples = 16
eval.period = 2
";

fn otm(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otm")).args(args).env("OTM_OUTPUT_ROOT", root).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn repeated_training_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(otm(&["train", &conf], &a).status.success());
    assert!(otm(&["train", &conf], &b).status.success());
    for file in ["history.csv", "eval.csv", "G.model", "psi.model", "scatter.svg", "config.resolved"] {
        let left = fs::read(a.join("tiny").join(file)).unwrap();
        let right = fs::read(b.join("tiny").join(file)).unwrap();
        assert_eq!(left, right, "{file} differs");
    }
    let history = fs::read_to_string(a.join("tiny/history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("iter,L_psi,L_G,reg_value,wall_ms"));
    assert_eq!(history.lines().count(), 5);
    // Periodic evaluations at iterations 2 and 4.
    assert_eq!(fs::read_to_string(a.join("tiny/eval.csv")).unwrap().lines().count(), 3);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let first = tmp.path().join("first");
    assert!(otm(&["train", &conf], &first).status.success());
    let resolved = first.join("tiny/config.resolved");
    let second = tmp.path().join("second");
    assert!(otm(&["train", resolved.to_str().unwrap()], &second).status.success());
    assert_eq!(fs::read(first.join("tiny/history.csv")).unwrap(), fs::read(second.join("tiny/history.csv")).unwrap());
}

#[test]
fn saved_map_round_trips_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = RunConfig::parse(TINY).unwrap();
    config.output_dir = tmp.path().to_path_buf();
    let outcome = run::run_train(&config).unwrap();
    let loaded = model::load(&outcome.dir.join("G.model")).unwrap();
    assert_eq!(loaded, outcome.g);
    let probe = otm_core::Gaussian::standard(2).sampler(9).sample(33, 0);
    assert_eq!(nets::apply(&loaded, &probe).unwrap(), nets::apply(&outcome.g, &probe).unwrap());
}

#[test]
fn zero_potential_steps_are_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), &format!("{TINY}train.k_psi = 0\n"));
    let out = otm(&["train", &conf], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K_psi"));
    assert!(!tmp.path().join("tiny").exists());
}

#[test]
fn eval_prints_one_row_and_rejects_mismatched_models() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    assert!(otm(&["train", &conf], tmp.path()).status.success());
    let models = tmp.path().join("tiny");
    let out = otm(&["eval", &conf, "--models", models.to_str().unwrap()], tmp.path());
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], otm_core::EvalReport::CSV_HEADER);
    assert_eq!(lines.len(), 2);
    assert!(lines[1].ends_with(",64,1"), "{}", lines[1]);

    let wider = write_config(tmp.path(), &TINY.replace("g.hidden = 8, 8", "g.hidden = 8, 9"));
    let out = otm(&["eval", &wider, "--models", models.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims"));
}

#[test]
fn seed_sweep_writes_one_directory_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), TINY);
    let out = otm(&["train", &conf, "--seeds", "1,2", "--jobs", "2"], tmp.path());
    assert!(out.status.success());
    let one = fs::read(tmp.path().join("tiny-seed1/history.csv")).unwrap();
    let two = fs::read(tmp.path().join("tiny-seed2/history.csv")).unwrap();
    assert_ne!(one, two);
}

#[test]
fn sample_dumps_both_distributions() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = write_config(tmp.path(), &TINY.replace("nu.mean = 2, 0", "nu.mean = 2, 0, 1"));
    let out = otm(&["sample", &conf, "--n", "3"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "distribution,index,x0,x1,x2");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("mu,0,") && lines[1].ends_with(','));
    assert!(lines[6].starts_with("nu,2,"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(otm(&["--help"], tmp.path()).status.code(), Some(0));
    assert_eq!(otm(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(otm(&["train", "/nonexistent.conf"], tmp.path()).status.code(), Some(1));
    let conf = write_config(tmp.path(), "experiment.name = x\nbogus.key = 1\n");
    assert_eq!(otm(&["train", &conf], tmp.path()).status.code(), Some(1));
}

#[test]
fn verify_passes_and_detects_the_injected_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = otm(&["verify"], tmp.path());
    assert_eq!(clean.status.code(), Some(0), "{}", stdout(&clean));
    assert!(stdout(&clean).contains(", 0 failed"));
    let faulty = otm(&["verify", "--fault-injection"], tmp.path());
    assert_eq!(faulty.status.code(), Some(2));
    assert!(stdout(&faulty).contains("FAIL  adam/"));
}
