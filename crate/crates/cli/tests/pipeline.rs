use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use romcp::container::sha256_file;
use romcp::metrics::{read_coverage_csv, read_summary_csv};
use tempfile::TempDir;

const SMALL: &str = r#"
seed = 3

[dataset]
n_samples = 60

[dataset.time_grid]
n_steps = 11

[cp]
cv_folds = 4
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn romcp(config: &Path, out: &Path, args: &[&str]) -> i32 {
    let mut argv = vec![
        "romcp".to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    argv.extend(args.iter().map(|s| s.to_string()));
    romcp_cli::run(argv)
}

fn file_hashes(root: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), sha256_file(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn full_pipeline_emits_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SMALL);
    let out = tmp.path().join("out");
    for stage in ["generate", "train", "calibrate", "evaluate", "report"] {
        assert_eq!(romcp(&cfg, &out, &[stage]), 0, "stage {stage}");
    }

    // 3 methods x 3 targets x 4 alphas.
    let summary = read_summary_csv(fs::File::open(out.join("evaluation/summary.csv")).unwrap()).unwrap();
    assert_eq!(summary.len(), 36);
    let cells = read_coverage_csv(fs::File::open(out.join("evaluation/coverage.csv")).unwrap()).unwrap();
    // Bands have 64 cells per step, ellipsoids one; 11 steps.
    assert_eq!(cells.len(), 3 * 4 * 11 * (64 + 1 + 64));
    assert!(cells.iter().all(|r| (0.0..=1.0).contains(&r.coverage)));

    for m in ["vanilla", "split", "cv_plus"] {
        let svg = fs::read_to_string(out.join(format!("evaluation/widths_{m}.svg"))).unwrap();
        // One panel per target, one line per alpha.
        assert_eq!(svg.matches("<polyline").count(), 12, "{m}");
    }
    assert!(out.join("models/cv_plus/fold_04.romcp").exists());
    assert!(!out.join("models/cv_plus/fold_05.romcp").exists());
    let report = fs::read_to_string(out.join("report/report.md")).unwrap();
    assert!(report.contains("| End-to-end | CV+ |"));
    assert!(report.contains("1-α = 99%"));
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(romcp(&cfg, &a, &["all"]), 0);
    assert_eq!(romcp(&cfg, &b, &["--workers", "1", "all"]), 0);
    let (ha, hb) = (file_hashes(&a), file_hashes(&b));
    assert!(ha.len() > 40);
    assert_eq!(ha, hb);

    // Rerunning a single stage in place reproduces its outputs.
    assert_eq!(romcp(&cfg, &a, &["train"]), 0);
    assert_eq!(file_hashes(&a), hb);
}

#[test]
fn vanilla_recount_on_calibration_data_meets_nominal_everywhere() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        &format!("{SMALL}methods = [\"vanilla\"]\n"),
    );
    let out = tmp.path().join("out");
    assert_eq!(romcp(&cfg, &out, &["all"]), 0);
    assert_eq!(romcp(&cfg, &out, &["evaluate", "--test-on-calibration"]), 0);
    let rows = read_coverage_csv(fs::File::open(out.join("evaluation_on_calibration/coverage.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4 * 11 * (64 + 1 + 64));
    for r in &rows {
        assert!(r.coverage >= 1.0 - r.alpha, "{r:?}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(romcp_cli::run(["romcp"]), 1);
    assert_eq!(romcp_cli::run(["romcp", "frobnicate"]), 1);
    assert_eq!(romcp_cli::run(["romcp", "--seed", "x", "generate"]), 1);
    assert_eq!(romcp_cli::run(["romcp", "--help"]), 0);
    let bad = write_config(tmp.path(), "bad.toml", "[cp]\nalphas = [0.0]\n");
    assert_eq!(romcp(&bad, tmp.path(), &["generate"]), 1);
    let typo = write_config(tmp.path(), "typo.toml", "sede = 1\n");
    assert_eq!(romcp(&typo, tmp.path(), &["generate"]), 1);
    assert_eq!(romcp(&tmp.path().join("missing.toml"), tmp.path(), &["generate"]), 1);
}

#[test]
fn missing_and_stale_artifacts_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", &format!("{SMALL}methods = [\"split\"]\n"));
    let out = tmp.path().join("out");
    assert_eq!(romcp(&cfg, &out, &["train"]), 2);
    assert_eq!(romcp(&cfg, &out, &["report"]), 2);
    assert_eq!(romcp(&cfg, &out, &["all"]), 0);

    // Dataset regenerated with another seed: models are stale.
    assert_eq!(romcp(&cfg, &out, &["--seed", "4", "generate"]), 0);
    assert_eq!(romcp(&cfg, &out, &["--seed", "4", "calibrate"]), 2);
    assert_eq!(romcp(&cfg, &out, &["train"]), 2);
    // Regenerating the seed-3 file restores the exact bytes the models saw.
    assert_eq!(romcp(&cfg, &out, &["generate"]), 0);
    assert_eq!(romcp(&cfg, &out, &["calibrate"]), 0);
    assert_eq!(romcp(&cfg, &out, &["--seed", "4", "generate"]), 0);
    assert_eq!(romcp(&cfg, &out, &["--seed", "4", "train"]), 0);
    assert_eq!(romcp(&cfg, &out, &["generate"]), 0);
    assert_eq!(romcp(&cfg, &out, &["calibrate"]), 2, "models were trained on the seed-4 file");
    assert_eq!(romcp(&cfg, &out, &["train"]), 0);
    assert_eq!(romcp(&cfg, &out, &["calibrate"]), 0);

    // ROM settings changed after training.
    let noisy = write_config(
        tmp.path(),
        "noisy.toml",
        &format!("{SMALL}methods = [\"split\"]\n[rom]\nderivative_noise = 0.01\n"),
    );
    assert_eq!(romcp(&noisy, &out, &["calibrate"]), 2);

    // Alpha list changed after evaluation.
    let alphas = write_config(
        tmp.path(),
        "alphas.toml",
        &format!("{SMALL}methods = [\"split\"]\nalphas = [0.2]\n"),
    );
    assert_eq!(romcp(&cfg, &out, &["evaluate"]), 0);
    assert_eq!(romcp(&alphas, &out, &["report"]), 2);
    assert_eq!(romcp(&alphas, &out, &["evaluate"]), 2, "no calibration at alpha 0.2");

    // An evaluation output edited by hand.
    fs::write(out.join("evaluation/summary.csv"), "method,target,alpha,mean,std,median\n").unwrap();
    assert_eq!(romcp(&cfg, &out, &["report"]), 2);
}

#[test]
fn numerical_failures_exit_with_three() {
    // Identical trajectories: the snapshots span no direction for POD.
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "flat.toml",
        r#"
[dataset]
n_samples = 20
kernel = { type = "constant", c = 0.0 }
[dataset.time_grid]
n_steps = 5
[dataset.initial]
n_modes = [1, 1]
center_ln_r = [2.0, 2.0]
width = [0.5, 0.5]
total_mass = [1e-3, 1e-3]
[cp]
methods = ["split"]
"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(romcp(&cfg, &out, &["generate"]), 0);
    assert_eq!(romcp(&cfg, &out, &["train"]), 3);
}

#[test]
fn fold_training_scales_with_workers() {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    if cores < 4 {
        eprintln!("skipping: {cores} core(s) available, the timing comparison needs 4");
        return;
    }
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "run.toml", "[cp]\nmethods = [\"cv_plus\"]\n");
    let out = tmp.path().join("out");
    assert_eq!(romcp(&cfg, &out, &["generate"]), 0);
    let time = |workers: &str| {
        let t = Instant::now();
        assert_eq!(romcp(&cfg, &out, &["--workers", workers, "train"]), 0);
        t.elapsed().as_secs_f64()
    };
    let serial = time("1");
    let parallel = time("4");
    assert!(parallel < 0.5 * serial, "4 workers {parallel:.2}s vs serial {serial:.2}s");
}
