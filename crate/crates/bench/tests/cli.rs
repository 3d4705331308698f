use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use oranguide_bench::record::{load_records, METRICS_FILE};
use oranguide_bench::report::{FIG3_HEADER, FIG4_HEADER, FIG5_HEADER, FIG6_HEADER, TABLE3_HEADER};

const TINY: &str = r#"
profile = "toy"

[srm]
n_learnable = 2

[srm.encoder]
d_model = 8
layers = 1

[srm.adapter]
d_align = 4
hidden = [8]

[sac]
actor_hidden = [8]
critic_hidden = [8]
batch_size = 8
warmup_iterations = 8
iterations = 30
episode_len = 10
adapter_pairs = 16
adapter_epochs = 2

[experiment]
seeds = [0, 1, 2]
eval_epochs = 5
rpi_horizon = 20
token_counts = [1, 2]
moving_average = 5
"#;

fn oranguide(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oranguide"))
        .env("ORANGUIDE_OUT_DIR", out)
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_config_prints_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = oranguide(dir.path(), &["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("ok "));
    assert_eq!(stdout.split_whitespace().nth(2).unwrap().len(), 64);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[sac]\nunknown_key = 3\n");
    assert_eq!(oranguide(dir.path(), &["validate-config", &bad]).status.code(), Some(1));
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        oranguide(dir.path(), &["validate-config", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
    assert_eq!(oranguide(dir.path(), &["run", "--variant", "NOT_A_VARIANT"]).status.code(), Some(1));
}

#[test]
fn paper_scale_configs_warn() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "profile = \"paper\"\n");
    let out = oranguide(dir.path(), &["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8(out.stderr).unwrap().contains("warning: paper-scale"));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = oranguide(&blocker, &["-q", "run", "-c", &cfg, "--variant", "PLAIN_MARL"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn repeated_runs_write_identical_metrics_and_reuse_records() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), TINY);
    for out in [a.path(), b.path()] {
        let o = oranguide(out, &["-q", "run", "-c", &cfg, "--variant", "ORAN_GUIDE", "--seed", "4"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let metrics = |root: &Path| {
        let runs: Vec<_> = fs::read_dir(root.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
        assert_eq!(runs.len(), 1);
        fs::read(runs[0].join(METRICS_FILE)).unwrap()
    };
    assert_eq!(metrics(a.path()), metrics(b.path()));
    let before = load_records(&a.path().join("runs")).unwrap();
    let o = oranguide(a.path(), &["-q", "run", "-c", &cfg, "--variant", "ORAN_GUIDE", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(load_records(&a.path().join("runs")).unwrap(), before);
}

#[test]
fn full_pipeline_emits_every_figure_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = oranguide(dir.path(), &["-q", "ablation", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(table.contains("PLAIN_MARL,") && table.trim_end().ends_with(",0.00"));

    let o = oranguide(dir.path(), &["-q", "sweep-tokens", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);

    let o = oranguide(dir.path(), &["report", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = dir.path().join("report");
    for (file, header, min_rows) in [
        ("fig3_boxplot.csv", FIG3_HEADER, 5),
        ("fig4_convergence.csv", FIG4_HEADER, 15 * 30),
        ("fig5_token_sweep.csv", FIG5_HEADER, 2),
        ("fig6_cdf.csv", FIG6_HEADER, 5),
        ("table3_ablation.csv", TABLE3_HEADER, 5),
    ] {
        let text = fs::read_to_string(report.join(file)).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{}", file);
        assert!(text.lines().count() > min_rows, "{}", file);
    }
    assert!(report.join("table3_ablation.meta.json").is_file());
}

#[test]
fn report_on_an_empty_directory_still_writes_headers() {
    let dir = tempfile::tempdir().unwrap();
    let o = oranguide(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(0));
    let fig5 = fs::read_to_string(dir.path().join("report").join("fig5_token_sweep.csv")).unwrap();
    assert_eq!(fig5, format!("{}\n", FIG5_HEADER));
}
