use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_RUN: &str = "runs = 2
horizons = [24]
[hyperparams]
lookback = 48
model_dim = 8
hidden_dim = 4
latent_dim = 4
num_heads = 2
num_epochs = 2
[train]
pretrain_epochs = 2
";

fn evcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evcast"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn evcast")
}

fn fixture() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = evcast(dir.path(), &["make-synthetic", "--out", "fixture.csv"]);
    assert!(out.status.success());
    fs::write(dir.path().join("run.toml"), SMALL_RUN).unwrap();
    dir
}

fn train(dir: &Path, out: &str) -> Output {
    evcast(
        dir,
        &["train", "--config", "run.toml", "--data", "fixture.csv", "--out", out, "--horizon", "24", "--jobs", "2"],
    )
}

#[test]
fn help_exits_zero() {
    let out = evcast(Path::new("."), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["ingest", "train", "grid", "eval", "predict", "report"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert!(!text.contains("make-synthetic"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = fixture();
    assert_eq!(evcast(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(evcast(dir.path(), &["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(evcast(dir.path(), &["train", "--model", "mlp"]).status.code(), Some(2));
    let zero = evcast(dir.path(), &["train", "--config", "run.toml", "--data", "fixture.csv", "--out", "o", "--runs", "0"]);
    assert_eq!(zero.status.code(), Some(2));
    // Validation failures leave no output behind.
    assert!(!dir.path().join("o").exists());
    fs::write(dir.path().join("bad.toml"), "epochs = 3\n").unwrap();
    let bad = evcast(dir.path(), &["train", "--config", "bad.toml", "--data", "fixture.csv", "--out", "o"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn missing_data_exits_one() {
    let dir = fixture();
    let out = evcast(dir.path(), &["train", "--config", "run.toml", "--data", "absent.csv", "--out", "o"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn train_writes_checkpoints_and_eval_checks_horizon() {
    let dir = fixture();
    let out = train(dir.path(), "out");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 3);
    for k in 0..2 {
        assert!(dir.path().join(format!("out/checkpoints/bdt_h24_run{k}.bdtc")).is_file());
        assert!(dir.path().join(format!("out/runs/bdt_h24_run{k}.json")).is_file());
    }
    let echoed = fs::read_to_string(dir.path().join("out/train.toml")).unwrap();
    assert!(echoed.contains("horizons = [24]"));

    let ok = evcast(dir.path(), &["eval", "out/checkpoints/bdt_h24_run0.bdtc", "--data", "fixture.csv", "--out", "out"]);
    assert!(ok.status.success());
    let mismatch = evcast(
        dir.path(),
        &["eval", "out/checkpoints/bdt_h24_run0.bdtc", "--data", "fixture.csv", "--horizon", "48", "--out", "out"],
    );
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("horizon 24 does not match"));

    let predict = evcast(dir.path(), &["predict", "out/checkpoints/bdt_h24_run1.bdtc", "--data", "fixture.csv", "--out", "out"]);
    assert!(predict.status.success());
    let csv = fs::read_to_string(dir.path().join("out/predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 25);
    assert!(csv.lines().nth(1).unwrap().starts_with("2024-01-21T20:00:00Z,"));

    let corrupt = dir.path().join("out/checkpoints/bdt_h24_run0.bdtc");
    let mut bytes = fs::read(&corrupt).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    fs::write(&corrupt, bytes).unwrap();
    let bad = evcast(dir.path(), &["eval", "out/checkpoints/bdt_h24_run0.bdtc", "--data", "fixture.csv", "--out", "out"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = fixture();
    for out in ["a", "b"] {
        assert!(train(dir.path(), out).status.success());
        assert!(evcast(dir.path(), &["report", "--out", out]).status.success());
    }
    for file in [
        "checkpoints/bdt_h24_run0.bdtc",
        "checkpoints/bdt_h24_run1.bdtc",
        "report.csv",
        "plot_mae.csv",
        "plot_rmse.csv",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between invocations");
    }
}

#[test]
fn ingest_sessions_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sessions.csv"),
        "session_id,start_time,end_time,energy_kwh\n\
         a,2019-01-01T10:00:00Z,2019-01-01T12:00:00Z,4.0\n\
         b,2019-01-01T13:00:00Z,2019-01-01T12:00:00Z,1.0\n",
    )
    .unwrap();
    let out = evcast(dir.path(), &["ingest", "--data", "sessions.csv", "--out", "ingested"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 rejected"));
    let hourly = fs::read_to_string(dir.path().join("ingested/hourly.csv")).unwrap();
    assert_eq!(hourly, "timestamp,load_kwh\n2019-01-01T10:00:00Z,2\n2019-01-01T11:00:00Z,2\n");
    assert!(dir.path().join("ingested/rejected.csv").is_file());
}

#[test]
fn grid_writes_outcome() {
    let dir = fixture();
    fs::write(
        dir.path().join("grid.toml"),
        format!("{SMALL_RUN}[grid]\nnum_layers = [1]\nnum_epochs = [1]\nnum_heads = [1, 2]\nmodel_dim = [8]\n"),
    )
    .unwrap();
    let out = evcast(dir.path(), &["grid", "--config", "grid.toml", "--data", "fixture.csv", "--out", "g", "--jobs", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("best"));
    let json = fs::read_to_string(dir.path().join("g/grid/bdt_h24.json")).unwrap();
    assert!(json.contains("\"best\""));
}
