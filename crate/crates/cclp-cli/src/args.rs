//! Flag definitions for the four subcommands.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cclp",
    about = "Compact clustering via label propagation: experiments and diagnostics",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Free-embedding toy dynamics on a 2D layout, with per-snapshot
    /// coordinates, gradient arrows and propagated posteriors.
    Toy(ToyArgs),
    /// Semi-supervised training of the MLP + linear classifier.
    Train(TrainArgs),
    /// Sweep the chain-step count S over repeated training runs.
    Ablate(AblateArgs),
    /// Compare analytic gradients against central finite differences.
    Checkgrad(CheckgradArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Circles,
    Moons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegArg {
    Cclp,
    Cer,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimArg {
    /// Dot-product similarity.
    Dot,
    /// Negative squared Euclidean distance.
    Negsq,
}

#[derive(Debug, Clone, Parser)]
pub struct ToyArgs {
    /// Either of the two structured 2D arrangements.
    #[arg(long, value_enum)]
    pub layout: LayoutArg,
    /// Regularizer applied alongside the supervised loss.
    #[arg(long, value_enum, default_value = "cclp")]
    pub reg: RegArg,
    /// Markov-chain steps S.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Regularizer weight w.
    #[arg(long, default_value_t = 10.0)]
    pub w: f64,
    /// Learning rate for both the coordinates and the classifier.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 3000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Record a snapshot every k iterations (the final state is always
    /// recorded).
    #[arg(long, default_value_t = 50)]
    pub snapshot_every: usize,
    /// Similarity score for the batch graph.
    #[arg(long, value_enum, default_value = "negsq")]
    pub sim: SimArg,
    /// Multiplier on similarity scores (inverse temperature).
    #[arg(long, default_value_t = 40.0)]
    pub sim_scale: f64,
    /// Exclude the diagonal from the transition matrix.
    #[arg(long)]
    pub no_self_loops: bool,
    /// Treat propagated posteriors as constants in T and M.
    #[arg(long)]
    pub stop_grad_phi: bool,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataArg {
    Moons,
    Circles,
    Idx,
}

#[derive(Debug, Clone, Parser)]
pub struct TrainArgs {
    /// Dataset: synthetic moons/circles, or an IDX image/label pair.
    #[arg(long, value_enum)]
    pub data: DataArg,
    #[arg(long, required_if_eq("data", "idx"))]
    pub idx_images: Option<PathBuf>,
    #[arg(long, required_if_eq("data", "idx"))]
    pub idx_labels: Option<PathBuf>,
    /// Points per class for the synthetic datasets.
    #[arg(long, default_value_t = 60)]
    pub data_n: usize,
    /// Number of labeled samples kept in the training set (the rest
    /// become unlabeled); must be a multiple of the class count.
    #[arg(long, default_value_t = 2)]
    pub n_labeled: usize,
    /// Labeled batch size.
    #[arg(long, default_value_t = 2)]
    pub nl: usize,
    /// Unlabeled batch size.
    #[arg(long, default_value_t = 100)]
    pub nu: usize,
    /// Markov-chain steps S.
    #[arg(long, default_value_t = 3)]
    pub steps: usize,
    /// Regularizer weight w.
    #[arg(long, default_value_t = 1.0)]
    pub w: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 400)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "cclp")]
    pub reg: RegArg,
    #[arg(long)]
    pub stop_grad_phi: bool,
    #[arg(long)]
    pub no_self_loops: bool,
    #[arg(long, value_enum, default_value = "dot")]
    pub sim: SimArg,
    #[arg(long, default_value_t = 1.0)]
    pub sim_scale: f64,
    /// Hidden layer widths of the extractor.
    #[arg(long, value_delimiter = ',', default_values_t = vec![128usize, 64])]
    pub hidden: Vec<usize>,
    /// Embedding dimension d.
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    /// Holdout size for synthetic data (0 disables); for IDX data use
    /// --holdout-images/--holdout-labels instead.
    #[arg(long, default_value_t = 200)]
    pub holdout: usize,
    #[arg(long)]
    pub holdout_images: Option<PathBuf>,
    #[arg(long)]
    pub holdout_labels: Option<PathBuf>,
    /// Per-feature standardization fitted on the training inputs.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub whiten: bool,
    /// Record an embedding snapshot every k iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub snapshot_every: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Parser)]
pub struct AblateArgs {
    /// Comma-separated chain-step counts to sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 3, 6, 10, 20])]
    pub s_values: Vec<usize>,
    /// Independent repeats per S (seeds base_seed..base_seed+R).
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Clone, Parser)]
pub struct CheckgradArgs {
    /// Loss to check: sup, 1step, cclp, or cer.
    #[arg(long)]
    pub loss: String,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub c: usize,
    /// Chain steps for the cclp loss.
    #[arg(long, default_value_t = 3)]
    pub s: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
    /// Test hook: corrupt one adjoint so the check must fail.
    #[arg(long, hide = true)]
    pub corrupt_adjoint: bool,
    /// Optional directory for the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl TrainArgs {
    pub fn regularizer(&self) -> cclp::trainer::Regularizer {
        match self.reg {
            RegArg::Cclp => cclp::trainer::Regularizer::Cclp,
            RegArg::Cer => cclp::trainer::Regularizer::Cer,
            RegArg::None => cclp::trainer::Regularizer::None,
        }
    }

    pub fn similarity(&self) -> cclp::graph::Similarity {
        match self.sim {
            SimArg::Dot => cclp::graph::Similarity::Dot,
            SimArg::Negsq => cclp::graph::Similarity::NegSqEuclidean,
        }
    }
}

impl ToyArgs {
    pub fn regularizer(&self) -> cclp::trainer::Regularizer {
        match self.reg {
            RegArg::Cclp => cclp::trainer::Regularizer::Cclp,
            RegArg::Cer => cclp::trainer::Regularizer::Cer,
            RegArg::None => cclp::trainer::Regularizer::None,
        }
    }

    pub fn similarity(&self) -> cclp::graph::Similarity {
        match self.sim {
            SimArg::Dot => cclp::graph::Similarity::Dot,
            SimArg::Negsq => cclp::graph::Similarity::NegSqEuclidean,
        }
    }

    pub fn layout(&self) -> cclp::data::ToyLayout {
        match self.layout {
            LayoutArg::Circles => cclp::data::ToyLayout::Circles,
            LayoutArg::Moons => cclp::data::ToyLayout::Moons,
        }
    }
}
