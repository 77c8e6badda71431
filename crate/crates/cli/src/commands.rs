//! Subcommand implementations.

use std::path::Path;

use serde::Serialize;

use gradix_core::cases::{
    oracle_integrate_characteristic, CaseSpec, DirectionSpec, Field, NetField,
};
use gradix_core::metrics::{default_test_set, report, BoundInputs, ErrorReport, TestSet};
use gradix_core::sampling::sphere_rule;
use gradix_core::training::{ensemble_train, train_forward, train_inverse, TrainResult};
use gradix_core::{Error, Result};

use crate::config::RunConfig;

/// run.json payload: the report row plus the full training outcome.
#[derive(Serialize)]
struct RunArtifact<'a> {
    report: &'a ErrorReport,
    train: &'a TrainResult,
}

fn bound_inputs_for(case: &CaseSpec, cfg: &RunConfig) -> BoundInputs {
    let sigma_g_inf = match &case.scatter_rule {
        Some(rule) => gradix_core::cases::sigma_g(case, rule),
        None => gradix_core::cases::sigma_g(case, &sphere_rule(8, 16)),
    };
    BoundInputs {
        ks_inf: case.ks,
        sigma_g_inf: if case.ks > 0.0 { sigma_g_inf } else { 0.0 },
        n_sb: cfg.counts.n_sb.max(1),
        n_tb: cfg.counts.n_tb.max(1),
        n_int: cfg.counts.n_int.max(1),
        n_s: case.scatter_rule.as_ref().map(|r| r.len()).unwrap_or(16),
        d: case.spatial_dim,
        ..BoundInputs::default()
    }
}

fn write_field_csv(
    case: &CaseSpec,
    result: &TrainResult,
    test: &TestSet,
    path: &Path,
) -> Result<()> {
    let field = NetField(&result.params);
    let exact = case
        .exact
        .as_ref()
        .ok_or_else(|| Error::Usage("field export needs an exact solution".into()))?;
    let mut out = String::new();
    out.push_str(if case.spatial_dim == 2 {
        "x,y,I_exact,I_pred,abs_err\n"
    } else {
        "x,I_exact,I_pred,abs_err\n"
    });
    for p in &test.points {
        let truth = exact.value(p);
        let pred = field.value(p);
        for c in p {
            out.push_str(&format!("{c:.16e},"));
        }
        out.push_str(&format!(
            "{truth:.16e},{pred:.16e},{:.16e}\n",
            (truth - pred).abs()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_loss_csv(result: &TrainResult, path: &Path) -> Result<()> {
    // history is downsampled every 10 accepted iterations
    let mut out = String::from("sample,loss\n");
    for (i, l) in result.loss_history.iter().enumerate() {
        out.push_str(&format!("{i},{l:.16e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn write_run_artifacts(
    case: &CaseSpec,
    cfg: &RunConfig,
    result: &TrainResult,
    out_dir: &Path,
) -> Result<ErrorReport> {
    std::fs::create_dir_all(out_dir)?;
    let test = default_test_set(case)?;
    let inputs = bound_inputs_for(case, cfg);
    let rep = report(result, case, &test, Some(&inputs))?;
    let artifact = RunArtifact {
        report: &rep,
        train: result,
    };
    std::fs::write(
        out_dir.join("run.json"),
        serde_json::to_string_pretty(&artifact)?,
    )?;
    if case.exact.is_some() && !case.has_angular_inputs() {
        write_field_csv(case, result, &test, &out_dir.join("field.csv"))?;
    }
    write_loss_csv(result, &out_dir.join("loss.csv"))?;
    Ok(rep)
}

pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let case = cfg.build_case()?;
    cfg.validate(&case)?;
    let arch = cfg.build_arch(&case)?;
    let result = if case.is_inverse() {
        train_inverse(&case, cfg.counts, &arch, &cfg.train)?
    } else {
        train_forward(&case, cfg.counts, &arch, &cfg.train)?
    };
    let rep = write_run_artifacts(&case, cfg, &result, out_dir)?;
    println!(
        "{} ke={}: loss {:.3e}, L2 abs {:.3e} rel {:.3e}, {:.1} s -> {}",
        case.name,
        case.ke,
        result.final_loss,
        rep.e_g.abs,
        rep.e_g.rel,
        result.wall_seconds,
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    let ensemble = cfg
        .ensemble
        .clone()
        .ok_or_else(|| Error::Config("sweep needs an `ensemble` grid in the config".into()))?;
    let case = cfg.build_case()?;
    cfg.validate(&case)?;
    let sweep = ensemble_train(&case, cfg.counts, &ensemble, &cfg.train)?;
    std::fs::create_dir_all(out_dir)?;
    let mut csv = String::from("hidden_layers,width,lambda,seed,final_loss,seconds\n");
    for row in &sweep.leaderboard {
        csv.push_str(&format!(
            "{},{},{:.16e},{},{:.16e},{:.3}\n",
            row.hidden_layers, row.width, row.lambda, row.seed, row.final_loss, row.wall_seconds
        ));
    }
    std::fs::write(out_dir.join("leaderboard.csv"), csv)?;
    let rep = write_run_artifacts(&case, cfg, &sweep.best, out_dir)?;
    println!(
        "{} runs ({} failed), best loss {:.3e} (layers {}, width {}, lambda {}), L2 abs {:.3e} -> {}",
        sweep.leaderboard.len(),
        sweep.failures.len(),
        sweep.best.final_loss,
        sweep.best.hyperparameters.widths.len() - 2,
        sweep.best.hyperparameters.widths[1],
        sweep.best.hyperparameters.lambda,
        rep.e_g.abs,
        out_dir.display()
    );
    Ok(())
}

/// Exit code 0 when every check passes, 1 otherwise.
pub fn cmd_verify() -> i32 {
    let report = gradix_core::verify::run_verification();
    print!("{}", report.render_table());
    if report.all_passed() {
        0
    } else {
        1
    }
}

pub fn cmd_oracle(case_name: &str, ke: f64, points_path: &Path, out_dir: &Path) -> Result<()> {
    let case = gradix_core::cases::catalog(case_name, ke)?;
    if !matches!(case.direction, DirectionSpec::Fixed { .. }) {
        return Err(Error::Usage(format!(
            "case '{case_name}' has no fixed direction"
        )));
    }
    let exact = case
        .exact
        .clone()
        .ok_or_else(|| Error::Usage(format!("case '{case_name}' has no closed form")))?;
    let text = std::fs::read_to_string(points_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", points_path.display())))?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let coords: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        let coords =
            coords.map_err(|e| Error::Config(format!("bad point on line {}: {e}", lineno + 1)))?;
        if coords.len() != case.spatial_dim {
            return Err(Error::Config(format!(
                "point on line {} has {} coordinates, case needs {}",
                lineno + 1,
                coords.len(),
                case.spatial_dim
            )));
        }
        points.push(coords);
    }
    if points.is_empty() {
        return Err(Error::Usage("points file contains no points".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut out = String::new();
    out.push_str(if case.spatial_dim == 2 {
        "x,y,I_exact,I_oracle,abs_diff\n"
    } else {
        "x,I_exact,I_oracle,abs_diff\n"
    });
    let mut worst = 0.0f64;
    for p in &points {
        let truth = exact.value(p);
        let oracle = oracle_integrate_characteristic(&case, p, 2000)?;
        let diff = (truth - oracle).abs();
        worst = worst.max(diff);
        for c in p {
            out.push_str(&format!("{c:.16e},"));
        }
        out.push_str(&format!("{truth:.16e},{oracle:.16e},{diff:.16e}\n"));
    }
    let path = out_dir.join("oracle.csv");
    std::fs::write(&path, out)?;
    println!(
        "{} points, max |exact - oracle| = {worst:.3e} -> {}",
        points.len(),
        path.display()
    );
    Ok(())
}
