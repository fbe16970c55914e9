//! `cclp train`: semi-supervised training on synthetic or IDX data.

use cclp::data::{self, apply_whitening, split_labeled, whiten, Dataset};
use cclp::numkit::Rng;
use cclp::trainer::{self, IterationRecord, TrainConfig};
use serde::Serialize;

use crate::args::{DataArg, TrainArgs};
use crate::manifest::ManifestBuilder;
use crate::output::{mat_rows, write_csv, write_json};
use crate::CliError;

const DATA_STREAM: u64 = 0xDA7A;
const SPLIT_STREAM: u64 = 0x5B11;
const HOLDOUT_STREAM: u64 = 0x807D;

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub data: String,
    pub regularizer: String,
    pub seed: u64,
    pub steps: usize,
    pub w: f64,
    pub iterations: usize,
    pub n_labeled_dataset: usize,
    pub final_l_sup: f64,
    pub final_l_reg: f64,
    pub final_l_total: f64,
    pub final_train_accuracy: f64,
    /// Error rate on the holdout set, when one was requested.
    pub holdout_error: Option<f64>,
}

pub struct TrainOutcome {
    pub summary: TrainSummary,
    pub records: Vec<IterationRecord>,
    pub extractor: cclp::model::MlpExtractor,
    pub classifier: cclp::model::LinearClassifier,
}

fn data_name(args: &TrainArgs) -> &'static str {
    match args.data {
        DataArg::Moons => "moons",
        DataArg::Circles => "circles",
        DataArg::Idx => "idx",
    }
}

fn reg_name(args: &TrainArgs) -> &'static str {
    match args.reg {
        crate::args::RegArg::Cclp => "cclp",
        crate::args::RegArg::Cer => "cer",
        crate::args::RegArg::None => "none",
    }
}

fn build_datasets(args: &TrainArgs) -> Result<(Dataset, Option<Dataset>), CliError> {
    let mut rng = Rng::with_stream(args.seed, DATA_STREAM);
    match args.data {
        DataArg::Moons => {
            let train = data::two_moons(args.data_n, 0.05, &mut rng)?;
            let holdout = if args.holdout > 0 {
                if args.holdout % 2 != 0 {
                    return Err(CliError::Usage("--holdout must be even for two moons".into()));
                }
                let mut hrng = Rng::with_stream(args.seed, HOLDOUT_STREAM);
                Some(data::two_moons(args.holdout / 2, 0.05, &mut hrng)?)
            } else {
                None
            };
            Ok((train, holdout))
        }
        DataArg::Circles => {
            let train = data::two_circles(args.data_n, 1.0, 2.0, 0.02, &mut rng)?;
            let holdout = if args.holdout > 0 {
                if args.holdout % 2 != 0 {
                    return Err(CliError::Usage("--holdout must be even for two circles".into()));
                }
                let mut hrng = Rng::with_stream(args.seed, HOLDOUT_STREAM);
                Some(data::two_circles(args.holdout / 2, 1.0, 2.0, 0.02, &mut hrng)?)
            } else {
                None
            };
            Ok((train, holdout))
        }
        DataArg::Idx => {
            let images = args
                .idx_images
                .as_ref()
                .ok_or_else(|| CliError::Usage("--idx-images is required with --data idx".into()))?;
            let labels = args
                .idx_labels
                .as_ref()
                .ok_or_else(|| CliError::Usage("--idx-labels is required with --data idx".into()))?;
            let train = data::read_idx(images, labels)?;
            let holdout = match (&args.holdout_images, &args.holdout_labels) {
                (Some(hi), Some(hl)) => Some(data::read_idx(hi, hl)?),
                (None, None) => None,
                _ => {
                    return Err(CliError::Usage(
                        "--holdout-images and --holdout-labels must be given together".into(),
                    ))
                }
            };
            Ok((train, holdout))
        }
    }
}

/// Runs the full training pipeline (dataset, split, whitening, loop,
/// holdout evaluation); shared by `train`, `ablate` and the acceptance
/// suite.
pub fn execute(args: &TrainArgs) -> Result<TrainOutcome, CliError> {
    let (mut full, mut holdout) = build_datasets(args)?;

    if full.classes == 0 || args.n_labeled % full.classes != 0 {
        return Err(CliError::Usage(format!(
            "--n-labeled {} is not a positive multiple of the {} classes",
            args.n_labeled, full.classes
        )));
    }
    if args.whiten {
        let (white, means, sds) = whiten(&full.x)?;
        full.x = white;
        if let Some(h) = holdout.as_mut() {
            h.x = apply_whitening(&h.x, &means, &sds)?;
        }
    }

    let mut split_rng = Rng::with_stream(args.seed, SPLIT_STREAM);
    let per_class = args.n_labeled / full.classes;
    let (labeled, unlabeled) = split_labeled(&full, per_class, &mut split_rng)?;

    let cfg = TrainConfig {
        n_l: args.nl,
        n_u: args.nu,
        steps_s: args.steps,
        weight_w: args.w,
        lr_alpha: args.lr,
        iterations: args.iters,
        seed: args.seed,
        regularizer: args.regularizer(),
        stop_grad_phi: args.stop_grad_phi,
        self_loops: !args.no_self_loops,
        similarity: args.similarity(),
        score_scale: args.sim_scale,
        hidden: args.hidden.clone(),
        embed_dim: args.embed_dim,
    };
    let (extractor, classifier, records) =
        trainer::train(&labeled, &unlabeled, &cfg, args.snapshot_every)?;

    let holdout_error = match &holdout {
        Some(h) => Some(trainer::holdout_error(&extractor, &classifier, h)?),
        None => None,
    };

    let last = records.last();
    let summary = TrainSummary {
        data: data_name(args).to_string(),
        regularizer: reg_name(args).to_string(),
        seed: args.seed,
        steps: args.steps,
        w: args.w,
        iterations: args.iters,
        n_labeled_dataset: args.n_labeled,
        final_l_sup: last.map_or(0.0, |r| r.l_sup),
        final_l_reg: last.map_or(0.0, |r| r.l_reg),
        final_l_total: last.map_or(0.0, |r| r.l_total),
        final_train_accuracy: last.map_or(0.0, |r| r.train_accuracy),
        holdout_error,
    };
    Ok(TrainOutcome { summary, records, extractor, classifier })
}

#[derive(Debug, Serialize)]
struct ParamsOut {
    extractor_weights: Vec<Vec<Vec<f64>>>,
    extractor_biases: Vec<Vec<Vec<f64>>>,
    classifier_w: Vec<Vec<f64>>,
    classifier_b: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
struct TrainConfigEcho {
    data: String,
    reg: String,
    data_n: usize,
    n_labeled: usize,
    nl: usize,
    nu: usize,
    steps: usize,
    w: f64,
    lr: f64,
    iters: usize,
    seed: u64,
    stop_grad_phi: bool,
    self_loops: bool,
    sim: String,
    sim_scale: f64,
    hidden: Vec<usize>,
    embed_dim: usize,
    holdout: usize,
    whiten: bool,
}

fn echo(args: &TrainArgs) -> TrainConfigEcho {
    TrainConfigEcho {
        data: data_name(args).to_string(),
        reg: reg_name(args).to_string(),
        data_n: args.data_n,
        n_labeled: args.n_labeled,
        nl: args.nl,
        nu: args.nu,
        steps: args.steps,
        w: args.w,
        lr: args.lr,
        iters: args.iters,
        seed: args.seed,
        stop_grad_phi: args.stop_grad_phi,
        self_loops: !args.no_self_loops,
        sim: format!("{:?}", args.sim),
        sim_scale: args.sim_scale,
        hidden: args.hidden.clone(),
        embed_dim: args.embed_dim,
        holdout: args.holdout,
        whiten: args.whiten,
    }
}

/// Formats one metrics row; shortest round-trip float formatting keeps
/// re-runs byte-identical.
fn metrics_row(r: &IterationRecord) -> String {
    format!(
        "{},{},{},{},{}",
        r.iteration, r.l_sup, r.l_reg, r.l_total, r.train_accuracy
    )
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out)?;
    let mut manifest = ManifestBuilder::new("train", &echo(args), args.seed)?;
    for path in [&args.idx_images, &args.idx_labels, &args.holdout_images, &args.holdout_labels]
        .into_iter()
        .flatten()
    {
        manifest.hash_input_file(path)?;
    }

    let outcome = execute(args)?;

    let metrics_path = args.out.join("metrics.csv");
    let rows: Vec<String> = outcome.records.iter().map(metrics_row).collect();
    write_csv(&metrics_path, "iteration,l_sup,l_reg,l_total,train_accuracy", &rows)?;
    manifest.record_output(&metrics_path);

    let params_path = args.out.join("params.json");
    let n_layers = outcome.extractor.params().len() / 2;
    let params = ParamsOut {
        extractor_weights: outcome.extractor.params()[..n_layers].iter().map(|m| mat_rows(m)).collect(),
        extractor_biases: outcome.extractor.params()[n_layers..].iter().map(|m| mat_rows(m)).collect(),
        classifier_w: mat_rows(&outcome.classifier.w),
        classifier_b: mat_rows(&outcome.classifier.b),
    };
    write_json(&params_path, &params)?;
    manifest.record_output(&params_path);

    let summary_path = args.out.join("summary.json");
    write_json(&summary_path, &outcome.summary)?;
    manifest.record_output(&summary_path);

    super::toy::write_manifest(&args.out, manifest)?;
    match outcome.summary.holdout_error {
        Some(err) => println!(
            "train {} reg={} seed={}: holdout error {:.4}",
            outcome.summary.data, outcome.summary.regularizer, args.seed, err
        ),
        None => println!(
            "train {} reg={} seed={}: final total loss {:.6}",
            outcome.summary.data, outcome.summary.regularizer, args.seed, outcome.summary.final_l_total
        ),
    }
    Ok(())
}
