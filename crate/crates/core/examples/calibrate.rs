//! Scratch harness for timing and accuracy calibration of desk-scale runs.

use std::time::Instant;

use gradix_core::cases::{catalog, NetField};
use gradix_core::metrics::{default_test_set, generalization_error};
use gradix_core::network::Architecture;
use gradix_core::sampling::Counts;
use gradix_core::training::{
    train_forward, train_inverse, AdamConfig, LbfgsConfig, LossConfig, OptimizerConfig, TrainConfig,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("1d");
    let ke: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.1);
    let adam_iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(500);
    let lbfgs_iters: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0);
    let n_int_override: Option<usize> = args.get(7).and_then(|s| s.parse().ok());
    let n_sb_override: Option<usize> = args.get(8).and_then(|s| s.parse().ok());
    let hidden_override: Option<usize> = args.get(9).and_then(|s| s.parse().ok());
    let width_override: Option<usize> = args.get(10).and_then(|s| s.parse().ok());

    let (case_name, hidden, width, counts, inverse) = match which {
        "1d" => (
            "1d-gaussian",
            4,
            20,
            Counts {
                n_int: 2048,
                n_sb: 512,
                n_tb: 0,
                n_d: 0,
            },
            false,
        ),
        "slab" => (
            "slab-discontinuous",
            8,
            24,
            Counts {
                n_int: 2048,
                n_sb: 512,
                n_tb: 0,
                n_d: 0,
            },
            false,
        ),
        "square" => (
            "square-diagonal",
            8,
            28,
            Counts {
                n_int: 2048,
                n_sb: 512,
                n_tb: 0,
                n_d: 0,
            },
            false,
        ),
        "2d" => (
            "2d-gaussian",
            4,
            20,
            Counts {
                n_int: 2048,
                n_sb: 512,
                n_tb: 0,
                n_d: 0,
            },
            false,
        ),
        "diag" => (
            "diag-gaussian",
            4,
            20,
            Counts {
                n_int: 2048,
                n_sb: 512,
                n_tb: 0,
                n_d: 0,
            },
            false,
        ),
        "inv" => (
            "2d-gaussian-inverse",
            4,
            20,
            Counts {
                n_int: 2048,
                n_sb: 0,
                n_tb: 0,
                n_d: 1024,
            },
            true,
        ),
        other => panic!("unknown case {other}"),
    };
    let mut counts = counts;
    if let Some(n) = n_int_override {
        counts.n_int = n;
    }
    if let Some(n) = n_sb_override {
        counts.n_sb = n;
    }
    let case = catalog(case_name, ke).unwrap();
    let hidden = hidden_override.unwrap_or(hidden);
    let width = width_override.unwrap_or(width);
    let arch = Architecture::uniform(case.input_dim(), hidden, width).unwrap();
    let cfg = TrainConfig {
        loss: LossConfig {
            lambda,
            lambda_reg: 0.0,
            reg_order: 2,
        },
        optimizer: OptimizerConfig {
            adam: AdamConfig {
                max_iters: adam_iters,
                ..AdamConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iters: lbfgs_iters,
                ..LbfgsConfig::default()
            },
        },
        seed,
        ..TrainConfig::default()
    };

    let start = Instant::now();
    let result = if inverse {
        train_inverse(&case, counts, &arch, &cfg).unwrap()
    } else {
        train_forward(&case, counts, &arch, &cfg).unwrap()
    };
    let secs = start.elapsed().as_secs_f64();
    let test = default_test_set(&case).unwrap();
    let field = NetField(&result.params);
    let (abs, rel) = generalization_error(&field, &case, &test).unwrap();
    let tv: f64 = if case.spatial_dim == 1 {
        let exact = case.exact.clone().unwrap();
        let errs: Vec<f64> = test
            .points
            .iter()
            .map(|p| gradix_core::cases::Field::value(&field, p) - exact.value(p))
            .collect();
        errs.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    } else {
        f64::NAN
    };
    println!(
        "{case_name} ke={ke} lambda={lambda} seed={seed}: loss={:.3e} abs_L2={abs:.3e} rel_L2={rel:.3e} \
         adam={} lbfgs={} tv={tv:.3e} wall={secs:.1}s E_T_int={:.2e} E_T_sb={:.2e} E_T_d={:.2e} grad={:.1e} conv={}",
        result.final_loss,
        result.adam_iterations,
        result.lbfgs_iterations,
        result.training_errors.interior,
        result.training_errors.spatial_boundary,
        result.training_errors.data,
        result.grad_norm,
        result.converged,
    );
}
