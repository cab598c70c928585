use std::path::Path;
use std::process::{Command, Output};

fn graphrep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphrep")).args(args).env_remove("GRAPHREP_SEED").output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn grpi_smoke_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let run = graphrep(&[
        "grpi",
        "--env",
        "two-room",
        "--model",
        "n2v",
        "--dim",
        "30",
        "--seed",
        "7",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("env,model,dim,seed,metric,value"));
    let row = lines.next().unwrap();
    assert!(row.starts_with("two-room,n2v,30,7,avg_steps,"), "{row}");
}

#[test]
fn negative_dim_is_a_usage_error() {
    let run = graphrep(&["grpi", "--dim", "-3"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("--dim"));
}

#[test]
fn unknown_flag_and_subcommand_exit_one() {
    let run = graphrep(&["grpi", "--frobnicate"]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("Usage"));
    assert_eq!(graphrep(&["teleport"]).status.code(), Some(1));
    assert_eq!(graphrep(&[]).status.code(), Some(1));
}

#[test]
fn bad_config_values_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "env = two-room\nwarp = 9\n").unwrap();
    let run = graphrep(&["grpi", "--config", path_str(&cfg)]);
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 2"));
    assert_eq!(graphrep(&["grpi", "--env", "five-room"]).status.code(), Some(1));
    assert_eq!(graphrep(&["grpi", "--config", "/nonexistent/x.cfg"]).status.code(), Some(1));
}

#[test]
fn smoothness_writes_two_rows_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let run = graphrep(&["smoothness", "--env", "obstacle-room", "--out", path_str(&out)]);
    assert_eq!(run.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",smoothness_estimated,"));
    assert!(rows[1].contains(",smoothness_ideal,"));

    let cfg = dir.path().join("seeds.cfg");
    std::fs::write(&cfg, "env = obstacle-room\nseeds = 1, 2, 3\n").unwrap();
    let out3 = dir.path().join("s3.csv");
    assert_eq!(graphrep(&["smoothness", "--config", path_str(&cfg), "--out", path_str(&out3)]).status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&out3).unwrap().lines().count(), 1 + 2 * 3);
}

#[test]
fn seed_env_var_sets_default_seed() {
    let run = Command::new(env!("CARGO_BIN_EXE_graphrep"))
        .args(["smoothness", "--env", "two-room"])
        .env("GRAPHREP_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("two-room,none,0,42,")), "{text}");
}

#[test]
fn mse_accepts_model_lists_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let run = graphrep(&[
            "mse",
            "--env",
            "two-room",
            "--model",
            "pvf,pvf-ideal",
            "--dim",
            "5,57",
            "--out",
            path_str(out),
        ]);
        assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 4);
    let full: f64 =
        text.lines().find(|l| l.starts_with("two-room,pvf,57,")).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(full < 1e-10, "full PVF basis mse {full}");
}

#[test]
fn embed_writes_tsv_rows() {
    let run = graphrep(&["embed", "--env", "two-room", "--model", "pvf", "--dim", "4"]);
    assert_eq!(run.status.code(), Some(0));
    let text = String::from_utf8(run.stdout).unwrap();
    assert_eq!(text.lines().count(), 57);
    assert!(text.lines().all(|l| l.split('\t').count() == 5));
    assert_eq!(graphrep(&["embed", "--model", "pvf", "--dim", "4,8"]).status.code(), Some(1));
}

#[test]
fn embed_runtime_failure_exits_two() {
    // more PVF columns than graph nodes
    let run = graphrep(&["embed", "--env", "two-room", "--model", "pvf", "--dim", "500"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn env_dumps_layout_maps() {
    let run = graphrep(&["env", "--env", "two-room"]);
    assert_eq!(run.status.code(), Some(0));
    let map = String::from_utf8(run.stdout).unwrap();
    assert_eq!(map.lines().count(), 10);
    assert_eq!(map.chars().filter(|&c| c == '#').count(), 43);
    let obstacle = String::from_utf8(graphrep(&["env", "--env", "obstacle-room"]).stdout).unwrap();
    assert_eq!(obstacle.chars().filter(|&c| c == '~').count(), 14);
}
