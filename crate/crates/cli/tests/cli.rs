use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn efalcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efalcon")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn oracle_prints_closed_forms() {
    let out = efalcon(&["oracle", "--env", "sensitivity_family", "--theta", "0.05"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("f-hat-star arm 1: 0.016750 0.256500"), "{text}");
    assert!(text.contains("f-hat-star arm 2: 1.000000 -0.778500"), "{text}");
    assert!(text.contains("b 0.016496"), "{text}");

    let step = stdout(&efalcon(&["oracle", "--env", "step"]));
    assert!(step.contains("f-hat-star arm 1: -0.250000 1.500000"), "{step}");
    assert!(step.contains("b 0.031250000"), "{step}");
    assert!(step.contains("B 0.062500000"), "{step}");
}

#[test]
fn validation_errors_exit_with_one() {
    assert_eq!(efalcon(&["oracle", "--env", "step", "--theta", "0.05"]).status.code(), Some(1));
    assert_eq!(efalcon(&["oracle", "--env", "nonsense"]).status.code(), Some(1));
    assert_eq!(efalcon(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(efalcon(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.txt", "agent.epsilon = 0.9\nagent.tau1 = 1\n");
    let out = efalcon(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("agent.epsilon") && err.contains("agent.tau1"), "{err}");
}

#[test]
fn run_then_diag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.txt",
        "env.kind = sensitivity_family\nagent.kind = epsilon_falcon\nrun.horizon = 1000\nrun.mc_samples = 2000\n",
    );
    let run_dir = dir.path().join("run");
    let out = efalcon(&["run", "--config", &cfg, "--seed", "3", "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["config.txt", "trace.csv", "events.csv", "models.csv", "lemma.csv", "summary.txt"] {
        assert!(run_dir.join(file).exists(), "{file}");
    }
    assert!(stdout(&out).contains("epoch 9 incomplete: 488 of 512 rounds"), "{}", stdout(&out));

    let diag = efalcon(&["diag", "--run", run_dir.to_str().unwrap()]);
    assert!(diag.status.success());
    assert_eq!(stdout(&diag).lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n") + "\n",
        fs::read_to_string(run_dir.join("lemma.csv")).unwrap());
}

#[test]
fn suite_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a.txt", "agent.kind = uniform\nrun.horizon = 400\n");
    let b = write_config(dir.path(), "b.txt", "agent.kind = oracle\nrun.horizon = 400\n");
    let suite_dir = dir.path().join("suite");
    let out = efalcon(&["suite", "--config", &a, "--reps", "3", "--out", suite_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let summary = fs::read_to_string(suite_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 401);

    let cmp_dir = dir.path().join("cmp");
    let out = efalcon(&["compare", "--config", &a, "--config", &b, "--out", cmp_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let table = stdout(&out);
    assert!(table.starts_with("checkpoint,uniform_mean,uniform_se,oracle_mean,oracle_se\n50,"), "{table}");
    assert!(cmp_dir.join("comparison.csv").exists());

    let c = write_config(dir.path(), "c.txt", "agent.kind = oracle\nrun.horizon = 300\n");
    assert_eq!(efalcon(&["compare", "--config", &a, "--config", &c]).status.code(), Some(1));
}
