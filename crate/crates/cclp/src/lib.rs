//! Compact clustering via label propagation (CCLP).
//!
//! A self-contained implementation of the CCLP semi-supervised
//! regularizer: build a fully connected graph over the latent embeddings
//! of each training batch, propagate the batch's few labels to a
//! closed-form equilibrium, and penalize the divergence between the
//! graph's random-walk transition matrix and the ideal
//! one-compact-cluster-per-class transition structure, over walks of one
//! or more steps. Gradients flow through the whole pipeline, including
//! the linear solve inside label propagation.
//!
//! The crate is organized bottom-up:
//!
//! * [`numkit`] — dense `f64` matrices, the LU solver, the seeded RNG;
//! * [`graph`] — batch graphs: similarity scores, adjacency, transition
//!   matrix and its labeled/unlabeled blocks;
//! * [`labelprop`] — closed-form label propagation plus an iterative
//!   reference implementation used for cross-checking;
//! * [`loss`] — the target matrix, agreement matrix, within-class chain
//!   recurrence, and the clustering / entropy losses;
//! * [`autograd`] — a tape of matrix primitives with reverse-mode
//!   adjoints, the differentiable pipeline, and a finite-difference
//!   gradient checker;
//! * [`model`] — a small MLP feature extractor and linear classifier;
//! * [`data`] — synthetic two-circles / two-moons generators, balanced
//!   batch sampling, whitening, and an IDX reader;
//! * [`trainer`] — the SGD loop with its asymmetric gradient routing,
//!   and the free-embedding variant used to study the regularizer in
//!   isolation.
//!
//! A worked guide lives in the `book/` directory of the repository; its
//! code snippets are compiled and run as doctests.

pub mod autograd;
pub mod data;
pub mod graph;
pub mod labelprop;
pub mod loss;
pub mod model;
pub mod numkit;
pub mod trainer;

pub use numkit::{Mat, NumError, Result, Rng};
