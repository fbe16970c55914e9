//! Analytic gradients against central finite differences for every loss,
//! with respect to the embeddings and all model parameters, across both
//! instance families (free embeddings, and embeddings produced by an
//! MLP) and a spread of graph configurations.

use cclp::autograd::check::{check_loss_gradients, CheckLoss, CheckSpec};
use cclp::graph::{GraphOptions, Similarity};

fn spec_for(instance: usize, use_mlp: bool, steps: usize) -> CheckSpec {
    // Squared-Euclidean similarity is invariant to translating (and
    // rotating) all embeddings at once, so an extractor's output bias has
    // structurally zero gradient there — finite differences can only
    // see rounding crumbs on such a direction. The extractor family
    // therefore runs on dot-product graphs; the free-embedding family
    // covers both similarities.
    let similarity = if use_mlp || instance % 2 == 0 {
        Similarity::Dot
    } else {
        Similarity::NegSqEuclidean
    };
    CheckSpec {
        n: 6 + (instance % 11), // up to 16
        d: 3,
        classes: 2 + (instance % 2),
        steps,
        seed: 1000 + instance as u64,
        h: 1e-5,
        tolerance: 1e-5,
        graph: GraphOptions {
            similarity,
            self_loops: instance % 3 != 0,
            // Softened inverse temperatures keep the loss surface in the
            // regime where central differences resolve 1e-5 relative.
            score_scale: match (similarity, instance % 4) {
                (Similarity::NegSqEuclidean, _) => 0.4,
                (Similarity::Dot, 0) => 0.5,
                (Similarity::Dot, _) => 1.0,
            },
        },
        use_mlp,
    }
}

fn run_suite(loss: CheckLoss, steps: usize, label: &str) {
    for instance in 0..20 {
        let spec = spec_for(instance, instance >= 10, steps);
        let reports = check_loss_gradients(loss, &spec).unwrap();
        for leaf in reports {
            assert!(
                leaf.report.passed(),
                "{} instance {} leaf {}: max rel err {:.3e} over tolerance {:.1e}\nworst: {:?}",
                label,
                instance,
                leaf.leaf,
                leaf.report.max_rel_err,
                leaf.report.tolerance,
                leaf.report.worst_entries(3),
            );
        }
    }
}

#[test]
fn supervised_loss_gradients_match_finite_differences() {
    run_suite(CheckLoss::Sup, 3, "sup");
}

#[test]
fn one_step_loss_gradients_match_finite_differences() {
    run_suite(CheckLoss::OneStep, 1, "1step");
}

#[test]
fn cclp_s1_gradients_match_finite_differences() {
    run_suite(CheckLoss::Cclp, 1, "cclp s=1");
}

#[test]
fn cclp_s3_gradients_match_finite_differences() {
    run_suite(CheckLoss::Cclp, 3, "cclp s=3");
}

#[test]
fn cclp_s5_gradients_match_finite_differences() {
    run_suite(CheckLoss::Cclp, 5, "cclp s=5");
}

#[test]
fn cer_loss_gradients_match_finite_differences() {
    run_suite(CheckLoss::Cer, 3, "cer");
}
