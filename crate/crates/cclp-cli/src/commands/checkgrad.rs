//! `cclp checkgrad`: analytic gradients against central finite
//! differences, over both the free-embedding and the extractor-backed
//! instance family. Exit status 0 means every comparison passed.

use cclp::autograd::check::{check_loss_gradients, CheckLoss, CheckSpec};
use cclp::graph::{GraphOptions, Similarity};
use serde::Serialize;

use crate::args::CheckgradArgs;
use crate::manifest::ManifestBuilder;
use crate::output::write_json;
use crate::CliError;

#[derive(Debug, Serialize)]
struct WorstEntry {
    row: usize,
    col: usize,
    analytic: f64,
    numeric: f64,
    rel_err: f64,
}

#[derive(Debug, Serialize)]
struct LeafOut {
    leaf: String,
    max_rel_err: f64,
    passed: bool,
    worst: Vec<WorstEntry>,
}

#[derive(Debug, Serialize)]
struct FamilyOut {
    family: String,
    leaves: Vec<LeafOut>,
}

#[derive(Debug, Serialize)]
pub struct CheckgradReport {
    loss: String,
    n: usize,
    d: usize,
    classes: usize,
    steps: usize,
    seed: u64,
    h: f64,
    tolerance: f64,
    corrupt_adjoint: bool,
    families: Vec<FamilyOut>,
    pub passed: bool,
}

/// Runs the check; `Ok(report)` with `report.passed == false` is a
/// completed-but-failing check (exit code 1), not an error.
pub fn execute(args: &CheckgradArgs) -> Result<CheckgradReport, CliError> {
    let loss = CheckLoss::parse(&args.loss)
        .ok_or_else(|| CliError::Usage(format!("unknown loss '{}'", args.loss)))?;

    let mut families = Vec::new();
    let mut passed = true;
    for use_mlp in [false, true] {
        let spec = CheckSpec {
            n: args.n,
            d: args.d,
            classes: args.c,
            steps: args.s,
            seed: args.seed,
            h: args.h,
            tolerance: args.tol,
            graph: GraphOptions {
                similarity: Similarity::Dot,
                self_loops: true,
                score_scale: 1.0,
            },
            use_mlp,
            corrupt_adjoint: args.corrupt_adjoint,
        };
        let reports = check_loss_gradients(loss, &spec)?;
        let leaves: Vec<LeafOut> = reports
            .into_iter()
            .map(|leaf| {
                let worst = leaf
                    .report
                    .worst_entries(5)
                    .into_iter()
                    .map(|(row, col, analytic, numeric, rel_err)| WorstEntry {
                        row,
                        col,
                        analytic,
                        numeric,
                        rel_err,
                    })
                    .collect();
                let out = LeafOut {
                    leaf: leaf.leaf,
                    max_rel_err: leaf.report.max_rel_err,
                    passed: leaf.report.passed(),
                    worst,
                };
                passed &= out.passed;
                out
            })
            .collect();
        families.push(FamilyOut {
            family: if use_mlp { "mlp".to_string() } else { "free".to_string() },
            leaves,
        });
    }

    Ok(CheckgradReport {
        loss: args.loss.clone(),
        n: args.n,
        d: args.d,
        classes: args.c,
        steps: args.s,
        seed: args.seed,
        h: args.h,
        tolerance: args.tol,
        corrupt_adjoint: args.corrupt_adjoint,
        families,
        passed,
    })
}

#[derive(Debug, Serialize)]
struct CheckgradEcho {
    loss: String,
    n: usize,
    d: usize,
    c: usize,
    s: usize,
    seed: u64,
    tol: f64,
    h: f64,
    corrupt_adjoint: bool,
}

/// Returns the process exit code (0 pass, 1 fail).
pub fn run(args: &CheckgradArgs) -> Result<i32, CliError> {
    let report = execute(args)?;
    for family in &report.families {
        for leaf in &family.leaves {
            println!(
                "{} {} {}: max rel err {:.3e} ({})",
                args.loss,
                family.family,
                leaf.leaf,
                leaf.max_rel_err,
                if leaf.passed { "ok" } else { "FAIL" }
            );
        }
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let echo = CheckgradEcho {
            loss: args.loss.clone(),
            n: args.n,
            d: args.d,
            c: args.c,
            s: args.s,
            seed: args.seed,
            tol: args.tol,
            h: args.h,
            corrupt_adjoint: args.corrupt_adjoint,
        };
        let mut manifest = ManifestBuilder::new("checkgrad", &echo, args.seed)?;
        let report_path = out.join("checkgrad.json");
        write_json(&report_path, &report)?;
        manifest.record_output(&report_path);
        super::toy::write_manifest(out, manifest)?;
    }
    println!("checkgrad {}: {}", args.loss, if report.passed { "PASS" } else { "FAIL" });
    Ok(if report.passed { 0 } else { 1 })
}
