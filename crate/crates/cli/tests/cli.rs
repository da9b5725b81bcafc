use std::path::Path;
use std::process::{Command, Output};

fn hybrid_rl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybrid-rl"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"
seed = 5
agents = 40
mode = "hybrid"

[env]
kind = "binary_tree"
layers = 6
reward_exponent = 2

[stop]
epoch_budget = 200
"#;

#[test]
fn printed_defaults_load_back() {
    let o = hybrid_rl(&["config", "--print-defaults"]);
    assert!(o.status.success());
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&o)
        .replace("agents = 1000", "agents = 2")
        .replace("epoch_budget = 2000", "epoch_budget = 5");
    let cfg = write_config(dir.path(), &text);
    let out = dir.path().join("out");
    let o = hybrid_rl(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn single_agent_on_fully_rewarded_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("table.txt"), "0,1\n1,1\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "agents = 1\nmode = \"classical\"\n[env]\nkind = \"reward_table\"\nfile = \"table.txt\"\n[stop]\nepoch_budget = 3\n",
    );
    let out = dir.path().join("out");
    let o = hybrid_rl(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{curve}");
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], (i + 1).to_string());
        assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0);
        assert_eq!(fields[3], "1");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = hybrid_rl(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
    }
    for name in ["agents.csv", "curve.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap()
        );
    }
    let o = hybrid_rl(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "6",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert_ne!(
        std::fs::read(a.join("agents.csv")).unwrap(),
        std::fs::read(b.join("agents.csv")).unwrap()
    );
}

#[test]
fn analyze_reads_simulated_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let sim = hybrid_rl(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(sim.status.success());
    let o = hybrid_rl(&["analyze", "--in", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("agents.csv"), "{text}");
    let summary_line = |s: &str| {
        s.lines()
            .find(|l| l.contains("agents.csv"))
            .unwrap()
            .split_once("agents.csv")
            .unwrap()
            .1
            .to_string()
    };
    assert_eq!(summary_line(&text), summary_line(&stdout(&sim)));
}

#[test]
fn quick_amplify_suite_passes() {
    let o = hybrid_rl(&["verify", "--suite", "amplify", "--scale", "quick"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));
}

#[test]
fn bad_input_is_an_error() {
    assert!(!hybrid_rl(&["verify", "--suite", "nonsense"]).status.success());
    assert!(!hybrid_rl(&["simulate", "--config", "/nonexistent.toml"])
        .status
        .success());
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "agents = 0\n");
    let o = hybrid_rl(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}
