//! `cclp ablate`: sweep the chain-step count S over repeated runs.

use rayon::prelude::*;
use serde::Serialize;

use crate::args::AblateArgs;
use crate::manifest::ManifestBuilder;
use crate::output::write_csv;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub s: usize,
    pub repeat: usize,
    pub seed: u64,
    pub holdout_error: f64,
}

#[derive(Debug, Serialize)]
pub struct AblationRow {
    pub s: usize,
    pub mean_error: f64,
    pub sd_error: f64,
}

/// Runs every (S, repeat) cell — in parallel, each cell an isolated
/// deterministic run — and returns cells in (S, repeat) order plus the
/// per-S mean and standard deviation.
pub fn execute(args: &AblateArgs) -> Result<(Vec<AblationCell>, Vec<AblationRow>), CliError> {
    if args.s_values.is_empty() {
        return Err(CliError::Usage("--s-values must not be empty".into()));
    }
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    if args.train.holdout == 0 && args.train.holdout_images.is_none() {
        return Err(CliError::Usage("ablation needs a holdout set".into()));
    }
    let mut cells = Vec::new();
    for s in &args.s_values {
        for repeat in 0..args.repeats {
            cells.push((*s, repeat));
        }
    }
    let results: Result<Vec<AblationCell>, CliError> = cells
        .par_iter()
        .map(|(s, repeat)| {
            let mut train_args = args.train.clone();
            train_args.steps = *s;
            train_args.seed = args.train.seed + *repeat as u64;
            let outcome = super::train::execute(&train_args)?;
            let holdout_error = outcome
                .summary
                .holdout_error
                .expect("holdout presence checked above");
            Ok(AblationCell { s: *s, repeat: *repeat, seed: train_args.seed, holdout_error })
        })
        .collect();
    let results = results?;

    let mut rows = Vec::new();
    for s in &args.s_values {
        let errors: Vec<f64> =
            results.iter().filter(|c| c.s == *s).map(|c| c.holdout_error).collect();
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / errors.len() as f64;
        rows.push(AblationRow { s: *s, mean_error: mean, sd_error: var.sqrt() });
    }
    Ok((results, rows))
}

#[derive(Debug, Serialize)]
struct AblateConfigEcho {
    s_values: Vec<usize>,
    repeats: usize,
    base_seed: u64,
    reg: String,
    data: String,
}

pub fn run(args: &AblateArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.train.out)?;
    let echo = AblateConfigEcho {
        s_values: args.s_values.clone(),
        repeats: args.repeats,
        base_seed: args.train.seed,
        reg: format!("{:?}", args.train.reg),
        data: format!("{:?}", args.train.data),
    };
    let mut manifest = ManifestBuilder::new("ablate", &echo, args.train.seed)?;

    let (cells, summary) = execute(args)?;

    let table_path = args.train.out.join("ablation.csv");
    let rows: Vec<String> = cells
        .iter()
        .map(|c| format!("{},{},{},{}", c.s, c.repeat, c.seed, c.holdout_error))
        .collect();
    write_csv(&table_path, "s,repeat,seed,holdout_error", &rows)?;
    manifest.record_output(&table_path);

    let summary_path = args.train.out.join("ablation_summary.csv");
    let rows: Vec<String> = summary
        .iter()
        .map(|r| format!("{},{},{}", r.s, r.mean_error, r.sd_error))
        .collect();
    write_csv(&summary_path, "s,mean_error,sd_error", &rows)?;
    manifest.record_output(&summary_path);

    super::toy::write_manifest(&args.train.out, manifest)?;
    for row in &summary {
        println!("S = {:3}: error {:.4} +- {:.4}", row.s, row.mean_error, row.sd_error);
    }
    Ok(())
}
