use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn tabstack(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabstack"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Deterministic two-class data with a wide margin on `x`.
fn rows(n: usize, offset: usize) -> Vec<(f64, f64, &'static str, &'static str)> {
    (0..n)
        .map(|i| {
            let j = i + offset;
            let positive = (j * 7919) % 3 != 0;
            let noise = ((j * 104729) % 1000) as f64 / 1000.0;
            let x = if positive { 2.0 + noise } else { -2.0 - noise };
            let z = ((j * 31) % 17) as f64 / 4.0;
            let shade = ["red", "green", "blue"][j % 3];
            (x, z, shade, if positive { "pos" } else { "neg" })
        })
        .collect()
}

fn write_csv(path: &Path, data: &[(f64, f64, &str, &str)], with_label: bool) {
    let mut s = String::from(if with_label { "x,z,shade,class\n" } else { "x,z,shade\n" });
    for (x, z, c, y) in data {
        if with_label {
            s.push_str(&format!("{x},{z},{c},{y}\n"));
        } else {
            s.push_str(&format!("{x},{z},{c}\n"));
        }
    }
    fs::write(path, s).unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    test_rows: Vec<(f64, f64, &'static str, &'static str)>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    write_csv(&root.join("train.csv"), &rows(90, 0), true);
    let test_rows = rows(30, 1000);
    write_csv(&root.join("test.csv"), &test_rows, true);
    write_csv(&root.join("test_nolabel.csv"), &test_rows, false);
    Fixture {
        _dir: dir,
        root,
        test_rows,
    }
}

fn quick_fit(root: &Path, out: &str, time_limit: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "fit", "--train", "train.csv", "--label", "class", "--time-limit", time_limit, "--max-repeats", "1",
        "--no-network", "--out", out,
    ];
    args.extend_from_slice(extra);
    tabstack(&args, root)
}

fn read_predictions(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

#[test]
fn fit_predict_continue_and_leaderboard() {
    let f = fixture();
    let out = quick_fit(&f.root, "m", "30", &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(f.root.join("m/metadata.json").exists());
    assert!(f.root.join("m/checkpoint.json").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("weighted_ensemble"));

    let pred = tabstack(
        &["predict", "--model", "m", "--test", "test_nolabel.csv", "--output", "p.csv"],
        &f.root,
    );
    assert!(pred.status.success(), "{}", stderr(&pred));
    let preds = read_predictions(&f.root.join("p.csv"));
    assert_eq!(preds.len(), f.test_rows.len());
    for row in &preds {
        let total: f64 = row[1..].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    // reversed input order gives reversed output order
    let mut reversed = f.test_rows.clone();
    reversed.reverse();
    write_csv(&f.root.join("reversed.csv"), &reversed, false);
    let pred = tabstack(
        &["predict", "--model", "m", "--test", "reversed.csv", "--output", "r.csv"],
        &f.root,
    );
    assert!(pred.status.success());
    let mut back = read_predictions(&f.root.join("r.csv"));
    back.reverse();
    assert_eq!(back, preds);

    let before = fs::read_to_string(f.root.join("m/checkpoint.json")).unwrap();
    let cont = tabstack(&["fit", "--continue-training", "--out", "m"], &f.root);
    assert!(cont.status.success(), "{}", stderr(&cont));
    assert_eq!(fs::read_to_string(f.root.join("m/checkpoint.json")).unwrap(), before);

    let lb = tabstack(&["leaderboard", "--model", "m"], &f.root);
    assert!(lb.status.success());
    assert!(String::from_utf8_lossy(&lb.stdout).contains("val_loss"));

    let again = quick_fit(&f.root, "m", "30", &[]);
    assert_eq!(again.status.code(), Some(2), "{}", stderr(&again));

    let eval = tabstack(
        &["evaluate", "--model", "m", "--test", "test.csv", "--eval-metric", "accuracy"],
        &f.root,
    );
    assert!(eval.status.success(), "{}", stderr(&eval));
    assert!(String::from_utf8_lossy(&eval.stdout).contains("accuracy 1.000000"));

    let unlabeled = tabstack(&["evaluate", "--model", "m", "--test", "test_nolabel.csv"], &f.root);
    assert_eq!(unlabeled.status.code(), Some(2));
    assert!(stderr(&unlabeled).contains("error[E_USAGE]"));

    fs::write(f.root.join("missing.csv"), "x,shade\n1.0,red\n").unwrap();
    let bad = tabstack(&["predict", "--model", "m", "--test", "missing.csv"], &f.root);
    assert_eq!(bad.status.code(), Some(3));
    assert!(stderr(&bad).contains('z'), "{}", stderr(&bad));

    fs::write(f.root.join("m/checkpoint.json"), "{ not json").unwrap();
    let corrupt = tabstack(&["leaderboard", "--model", "m"], &f.root);
    assert_eq!(corrupt.status.code(), Some(5));
    assert!(stderr(&corrupt).starts_with("error[E_CORRUPT]"));
}

#[test]
fn usage_errors_exit_two() {
    let f = fixture();
    let out = tabstack(&["fit", "--train", "train.csv", "--out", "m"], &f.root);
    assert_eq!(out.status.code(), Some(2));
    let out = tabstack(&["predict", "--model", "m"], &f.root);
    assert_eq!(out.status.code(), Some(2));
    let out = quick_fit(&f.root, "m", "-1", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_and_budget_errors() {
    let f = fixture();
    let missing = tabstack(
        &["fit", "--train", "nope.csv", "--label", "class", "--out", "m"],
        &f.root,
    );
    assert_eq!(missing.status.code(), Some(3));
    assert!(stderr(&missing).starts_with("error[E_DATA]"));

    let tiny = quick_fit(&f.root, "tiny", "0.000001", &[]);
    assert_eq!(tiny.status.code(), Some(4), "{}", stderr(&tiny));
    assert!(stderr(&tiny).starts_with("error[E_BUDGET]"));
}

#[test]
fn evaluate_several_models_writes_report() {
    let f = fixture();
    for (dir, extra) in [
        ("a", vec![]),
        ("b", vec!["--no-bag"]),
        ("c", vec!["--no-bag", "--seed", "7", "--layers", "1"]),
    ] {
        let out = quick_fit(&f.root, dir, "30", &extra);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let out = tabstack(
        &[
            "evaluate", "--model", "a", "b", "c", "--test", "test.csv", "--eval-metric", "log_loss",
            "--report-dir", "rep",
        ],
        &f.root,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = read_predictions(&f.root.join("rep/report.csv"));
    assert_eq!(report.len(), 3);
    let rescaled: Vec<f64> = report.iter().map(|r| r[3].parse().unwrap()).collect();
    let lo = rescaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rescaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(lo, 0.0);
    assert_eq!(hi, 1.0);
    assert!(f.root.join("rep/report.json").exists());
}
