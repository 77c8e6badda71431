//! End-to-end contract tests for the `gradix` binary: exit codes, emitted
//! files, and determinism of the reports.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gradix() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradix"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gradix-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_run_config(dir: &Path, seed: u64) -> PathBuf {
    let cfg = serde_json::json!({
        "case": "1d-gaussian",
        "ke": 1.0,
        "counts": {"n_int": 64, "n_sb": 16},
        "arch": {"hidden_layers": 2, "width": 6},
        "loss": {"lambda": 0.1},
        "optimizer": {
            "adam": {"step": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
                      "max_iters": 10, "grad_tol": 1e-12},
            "lbfgs": {"memory": 20, "max_iters": 20, "grad_tol": 1e-9, "c1": 1e-4,
                       "c2": 0.9, "max_line_evals": 30, "stall_tol": 1e-14,
                       "stall_window": 20}
        },
        "seed": seed
    });
    let path = dir.join("run.json.config");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn assert_exit(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Strip wall-clock lines so reports can be compared across runs.
fn without_timing(text: &str) -> String {
    text.lines()
        .filter(|l| !l.contains("seconds") && !l.contains("wall_seconds"))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_writes_artifacts_and_reproduces_bitwise() {
    let dir = tmp_dir("run");
    let cfg = tiny_run_config(&dir, 7);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    let run = |out_dir: &Path| {
        let out = gradix()
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_exit(&out, 0);
    };
    run(&out_a);
    run(&out_b);
    for name in ["run.json", "field.csv", "loss.csv"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    // field.csv rows = 512 grid points + header
    let field = std::fs::read_to_string(out_a.join("field.csv")).unwrap();
    assert_eq!(field.lines().count(), 513);
    assert_eq!(field.lines().next().unwrap(), "x,I_exact,I_pred,abs_err");
    // identical reports modulo wall-clock, identical field values
    let ja = std::fs::read_to_string(out_a.join("run.json")).unwrap();
    let jb = std::fs::read_to_string(out_b.join("run.json")).unwrap();
    assert_eq!(without_timing(&ja), without_timing(&jb));
    let fb = std::fs::read_to_string(out_b.join("field.csv")).unwrap();
    assert_eq!(field, fb);
    // every numeric cell round-trips at 17 significant digits
    for line in field.lines().skip(1) {
        for cell in line.split(',') {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), cell);
        }
    }
}

#[test]
fn results_are_independent_of_thread_count() {
    // fixed-order chunk reduction: one worker and many workers must agree
    // byte-for-byte
    let dir = tmp_dir("threads");
    let cfg = tiny_run_config(&dir, 21);
    let run = |threads: &str, out_dir: &Path| {
        let out = gradix()
            .env("GRADIX_THREADS", threads)
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_exit(&out, 0);
    };
    let one = dir.join("one");
    let four = dir.join("four");
    run("1", &one);
    run("4", &four);
    let ja = std::fs::read_to_string(one.join("run.json")).unwrap();
    let jb = std::fs::read_to_string(four.join("run.json")).unwrap();
    assert_eq!(without_timing(&ja), without_timing(&jb));
    assert_eq!(
        std::fs::read_to_string(one.join("field.csv")).unwrap(),
        std::fs::read_to_string(four.join("field.csv")).unwrap()
    );
}

#[test]
fn run_rejects_bad_configs_with_exit_2() {
    let dir = tmp_dir("bad");
    let missing = gradix()
        .args(["run", "--config"])
        .arg(dir.join("nope.json"))
        .output()
        .unwrap();
    assert_exit(&missing, 2);

    let invalid = dir.join("invalid.json");
    std::fs::write(&invalid, "{\"case\": \"no-such-case\"").unwrap();
    let out = gradix()
        .args(["run", "--config"])
        .arg(&invalid)
        .output()
        .unwrap();
    assert_exit(&out, 2);

    // structurally valid JSON, but unknown case name
    let unknown = dir.join("unknown.json");
    std::fs::write(
        &unknown,
        serde_json::json!({
            "case": "no-such-case",
            "ke": 1.0,
            "counts": {"n_int": 8, "n_sb": 2},
            "arch": {"hidden_layers": 1, "width": 4},
            "loss": {"lambda": 0.1}
        })
        .to_string(),
    )
    .unwrap();
    let out = gradix()
        .args(["run", "--config"])
        .arg(&unknown)
        .output()
        .unwrap();
    assert_exit(&out, 2);
}

#[test]
fn sweep_leaderboard_is_sorted() {
    let dir = tmp_dir("sweep");
    let cfg = serde_json::json!({
        "case": "1d-gaussian",
        "ke": 1.0,
        "counts": {"n_int": 32, "n_sb": 8},
        "arch": {"hidden_layers": 1, "width": 4},
        "loss": {"lambda": 0.1},
        "optimizer": {
            "adam": {"step": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
                      "max_iters": 5, "grad_tol": 1e-12},
            "lbfgs": {"memory": 10, "max_iters": 5, "grad_tol": 1e-9, "c1": 1e-4,
                       "c2": 0.9, "max_line_evals": 20, "stall_tol": 1e-14,
                       "stall_window": 20}
        },
        "seed": 3,
        "ensemble": {"hidden_layers": [1, 2], "widths": [4], "lambdas": [0.1, 1.0], "retrain": 2}
    });
    let cfg_path = dir.join("sweep.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out_dir = dir.join("out");
    let out = gradix()
        .args(["sweep", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let text = std::fs::read_to_string(out_dir.join("leaderboard.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 8);
    let losses: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    for w in losses.windows(2) {
        assert!(w[0] <= w[1], "leaderboard out of order: {losses:?}");
    }
    assert!(out_dir.join("run.json").exists());
}

#[test]
fn sweep_without_grid_is_a_config_error() {
    let dir = tmp_dir("sweep-bad");
    let cfg = tiny_run_config(&dir, 0);
    let out = gradix()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_exit(&out, 2);
}

#[test]
fn verify_passes_on_fresh_checkout() {
    let out = gradix().arg("verify").output().unwrap();
    assert_exit(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("erf"));
    assert!(text.contains("pass"));
}

#[test]
fn oracle_emits_comparison_csv() {
    let dir = tmp_dir("oracle");
    let points = dir.join("points.csv");
    let body: String = (1..=20).map(|i| format!("{}\n", i as f64 / 21.0)).collect();
    std::fs::write(&points, body).unwrap();
    let out = gradix()
        .args(["oracle", "--case", "1d-gaussian", "--ke", "0.1", "--points"])
        .arg(&points)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let csv = std::fs::read_to_string(dir.join("oracle.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "x,I_exact,I_oracle,abs_diff");
    let mut max_diff = 0.0f64;
    let mut rows = 0;
    for line in lines {
        let diff: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        max_diff = max_diff.max(diff);
        rows += 1;
    }
    assert_eq!(rows, 20);
    assert!(max_diff < 1e-6, "max diff {max_diff:e}");
}

#[test]
fn oracle_rejects_empty_points_and_angular_cases() {
    let dir = tmp_dir("oracle-bad");
    let empty = dir.join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let out = gradix()
        .args(["oracle", "--case", "1d-gaussian", "--ke", "1", "--points"])
        .arg(&empty)
        .output()
        .unwrap();
    assert_exit(&out, 2);

    let points = dir.join("p.csv");
    std::fs::write(&points, "0.5,0.5\n").unwrap();
    let out = gradix()
        .args([
            "oracle",
            "--case",
            "manufactured-graded-linear",
            "--ke",
            "1",
            "--points",
        ])
        .arg(&points)
        .output()
        .unwrap();
    assert_exit(&out, 2);
}

#[test]
fn desk_flag_halves_iterations_and_caps_counts() {
    // desk-scaled run on a paper-scale config completes quickly and reports
    // the reduced counts in run.json
    let dir = tmp_dir("desk");
    let cfg = serde_json::json!({
        "case": "1d-gaussian",
        "ke": 1.0,
        "counts": {"n_int": 8192, "n_sb": 4096},
        "arch": {"hidden_layers": 1, "width": 4},
        "loss": {"lambda": 0.1},
        "optimizer": {
            "adam": {"step": 1e-3, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
                      "max_iters": 8, "grad_tol": 1e-12},
            "lbfgs": {"memory": 10, "max_iters": 8, "grad_tol": 1e-9, "c1": 1e-4,
                       "c2": 0.9, "max_line_evals": 20, "stall_tol": 1e-14,
                       "stall_window": 20}
        },
        "seed": 1
    });
    let cfg_path = dir.join("cfg.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out_dir = dir.join("out");
    let out = gradix()
        .args(["run", "--desk", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_exit(&out, 0);
    let run: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["report"]["N_int"], 2048);
    assert_eq!(run["report"]["N_sb"], 512);
    assert_eq!(run["train"]["hyperparameters"]["adam_max_iters"], 4);
    assert_eq!(run["train"]["hyperparameters"]["lbfgs_max_iters"], 4);
}

#[test]
fn shipped_configs_parse_and_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(cfg.get("case").is_some(), "{path:?} lacks a case");
        assert!(cfg.get("counts").is_some(), "{path:?} lacks counts");
        seen += 1;
    }
    // 3 + 4 + 3 + 3 + 2 + 2 table rows plus the sweep example
    assert_eq!(seen, 18);
}

#[test]
fn example_one_sweep_grid_has_48_rows() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let text = std::fs::read_to_string(configs.join("sweep_example1.json")).unwrap();
    let cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    let ens = &cfg["ensemble"];
    let runs = ens["hidden_layers"].as_array().unwrap().len()
        * ens["widths"].as_array().unwrap().len()
        * ens["lambdas"].as_array().unwrap().len()
        * ens["retrain"].as_u64().unwrap() as usize;
    assert_eq!(runs, 48);
}
