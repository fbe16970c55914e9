//! `cclp toy`: free-embedding dynamics on a structured 2D layout.

use std::path::Path;

use cclp::data::toy_batch;
use cclp::numkit::Rng;
use cclp::trainer::{free_embedding_train, FreeTrajectory, TrainConfig};
use serde::Serialize;

use crate::args::ToyArgs;
use crate::manifest::ManifestBuilder;
use crate::output::{mat_rows, write_json};
use crate::CliError;

/// RNG stream for generating the layout coordinates.
const TOY_DATA_STREAM: u64 = 0xDA7A;

#[derive(Debug, Serialize)]
struct SnapshotOut {
    iteration: usize,
    coords: Vec<Vec<f64>>,
    grad_sup: Vec<Vec<f64>>,
    grad_reg: Vec<Vec<f64>>,
    lp_posteriors: Vec<Vec<f64>>,
    classifier_w: Vec<Vec<f64>>,
    classifier_b: Vec<Vec<f64>>,
    l_sup: f64,
    l_reg: f64,
    l_total: f64,
}

#[derive(Debug, Serialize)]
struct TrajectoryOut {
    layout: String,
    regularizer: String,
    seed: u64,
    n_labeled: usize,
    true_classes: Vec<usize>,
    snapshots: Vec<SnapshotOut>,
}

#[derive(Debug, Serialize)]
pub struct ToySummary {
    pub layout: String,
    pub regularizer: String,
    pub seed: u64,
    pub iterations: usize,
    /// Every point (labeled and unlabeled) classified as its true class
    /// by the jointly trained linear classifier.
    pub linearly_separable: bool,
    pub n_correct: usize,
    pub n_points: usize,
    /// Fraction of unlabeled points whose final prediction matches
    /// their cluster of origin.
    pub cluster_preservation: f64,
    /// Mean distance to the own-class center of mass.
    pub mean_intra_class_distance: f64,
    /// Distance between the two class centers.
    pub inter_class_center_distance: f64,
    pub final_l_sup: f64,
    pub final_l_reg: f64,
}

fn reg_name(args: &ToyArgs) -> &'static str {
    match args.reg {
        crate::args::RegArg::Cclp => "cclp",
        crate::args::RegArg::Cer => "cer",
        crate::args::RegArg::None => "none",
    }
}

fn layout_name(args: &ToyArgs) -> &'static str {
    match args.layout {
        crate::args::LayoutArg::Circles => "circles",
        crate::args::LayoutArg::Moons => "moons",
    }
}

/// Runs the experiment and returns the summary together with the full
/// trajectory (also used directly by the acceptance suite).
pub fn execute(args: &ToyArgs) -> Result<(ToySummary, FreeTrajectory, Vec<usize>), CliError> {
    let mut data_rng = Rng::with_stream(args.seed, TOY_DATA_STREAM);
    let (batch, truth) = toy_batch(args.layout(), &mut data_rng)?;
    let cfg = TrainConfig {
        n_l: batch.n_labeled,
        n_u: batch.n_unlabeled,
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
        ..TrainConfig::default()
    };
    let snapshot_every = args.snapshot_every.max(1);
    let traj = free_embedding_train(&batch, &cfg, snapshot_every)?;

    let preds = traj.final_classifier.predict(&traj.final_coords)?;
    let n_correct = preds.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let unlabeled_correct = preds
        .iter()
        .zip(&truth)
        .skip(batch.n_labeled)
        .filter(|(p, t)| p == t)
        .count();

    let mut centers = vec![[0.0f64; 2]; batch.classes()];
    let mut counts = vec![0usize; batch.classes()];
    for (i, class) in truth.iter().enumerate() {
        centers[*class][0] += traj.final_coords.get(i, 0);
        centers[*class][1] += traj.final_coords.get(i, 1);
        counts[*class] += 1;
    }
    for (center, count) in centers.iter_mut().zip(&counts) {
        center[0] /= *count as f64;
        center[1] /= *count as f64;
    }
    let mut intra = 0.0;
    for (i, class) in truth.iter().enumerate() {
        let dx = traj.final_coords.get(i, 0) - centers[*class][0];
        let dy = traj.final_coords.get(i, 1) - centers[*class][1];
        intra += (dx * dx + dy * dy).sqrt();
    }
    intra /= truth.len() as f64;
    let inter = {
        let dx = centers[0][0] - centers[1][0];
        let dy = centers[0][1] - centers[1][1];
        (dx * dx + dy * dy).sqrt()
    };

    let last = traj.snapshots.last().expect("at least the initial snapshot");
    let summary = ToySummary {
        layout: layout_name(args).to_string(),
        regularizer: reg_name(args).to_string(),
        seed: args.seed,
        iterations: args.iters,
        linearly_separable: n_correct == truth.len(),
        n_correct,
        n_points: truth.len(),
        cluster_preservation: unlabeled_correct as f64 / batch.n_unlabeled.max(1) as f64,
        mean_intra_class_distance: intra,
        inter_class_center_distance: inter,
        final_l_sup: last.l_sup,
        final_l_reg: last.l_reg,
    };
    Ok((summary, traj, truth))
}

#[derive(Debug, Serialize)]
struct ToyConfigEcho<'a> {
    layout: &'a str,
    reg: &'a str,
    steps: usize,
    w: f64,
    lr: f64,
    iters: usize,
    seed: u64,
    snapshot_every: usize,
    sim: String,
    sim_scale: f64,
    self_loops: bool,
    stop_grad_phi: bool,
}

pub fn run(args: &ToyArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out)?;
    let echo = ToyConfigEcho {
        layout: layout_name(args),
        reg: reg_name(args),
        steps: args.steps,
        w: args.w,
        lr: args.lr,
        iters: args.iters,
        seed: args.seed,
        snapshot_every: args.snapshot_every,
        sim: format!("{:?}", args.sim),
        sim_scale: args.sim_scale,
        self_loops: !args.no_self_loops,
        stop_grad_phi: args.stop_grad_phi,
    };
    let mut manifest = ManifestBuilder::new("toy", &echo, args.seed)?;

    let (summary, traj, truth) = execute(args)?;

    let trajectory = TrajectoryOut {
        layout: summary.layout.clone(),
        regularizer: summary.regularizer.clone(),
        seed: args.seed,
        n_labeled: 2,
        true_classes: truth,
        snapshots: traj
            .snapshots
            .iter()
            .map(|s| SnapshotOut {
                iteration: s.iteration,
                coords: mat_rows(&s.coords),
                grad_sup: mat_rows(&s.grad_sup),
                grad_reg: mat_rows(&s.grad_reg),
                lp_posteriors: mat_rows(&s.lp_posteriors),
                classifier_w: mat_rows(&s.classifier_w),
                classifier_b: mat_rows(&s.classifier_b),
                l_sup: s.l_sup,
                l_reg: s.l_reg,
                l_total: s.l_total,
            })
            .collect(),
    };

    let traj_path = args.out.join("trajectory.json");
    write_json(&traj_path, &trajectory)?;
    manifest.record_output(&traj_path);

    let summary_path = args.out.join("summary.json");
    write_json(&summary_path, &summary)?;
    manifest.record_output(&summary_path);

    write_manifest(&args.out, manifest)?;
    println!(
        "toy {} reg={} seed={}: separable={} correct {}/{}",
        summary.layout,
        summary.regularizer,
        summary.seed,
        summary.linearly_separable,
        summary.n_correct,
        summary.n_points
    );
    Ok(())
}

pub(crate) fn write_manifest(out: &Path, builder: ManifestBuilder) -> Result<(), CliError> {
    let manifest = builder.finish();
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(())
}
