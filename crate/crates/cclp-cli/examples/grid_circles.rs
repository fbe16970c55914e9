use cclp::data::{toy_batch, ToyLayout};
use cclp::graph::Similarity;
use cclp::numkit::Rng;
use cclp::trainer::{free_embedding_train, Regularizer, TrainConfig};
use rayon::prelude::*;

fn run(scale: f64, w: f64, seed: u64, iters: usize) -> usize {
    let mut data_rng = Rng::with_stream(seed, 0xDA7A);
    let (batch, truth) = toy_batch(ToyLayout::Circles, &mut data_rng).unwrap();
    let cfg = TrainConfig {
        regularizer: Regularizer::Cclp,
        steps_s: 10,
        weight_w: w,
        lr_alpha: 0.1,
        iterations: iters,
        seed,
        similarity: Similarity::NegSqEuclidean,
        score_scale: scale,
        ..TrainConfig::default()
    };
    let traj = free_embedding_train(&batch, &cfg, iters.max(1)).unwrap();
    let preds = traj.final_classifier.predict(&traj.final_coords).unwrap();
    preds.iter().zip(&truth).filter(|(p, t)| p == t).count()
}

fn main() {
    let mut cells = Vec::new();
    for scale in [6.0, 8.0, 10.0, 14.0, 20.0, 30.0] {
        for w in [3.0, 6.0, 10.0, 20.0] {
            cells.push((scale, w));
        }
    }
    let results: Vec<String> = cells
        .par_iter()
        .map(|(scale, w)| {
            let corrects: Vec<usize> = (0..3).map(|s| run(*scale, *w, s, 3000)).collect();
            let ok = corrects.iter().filter(|c| **c == 80).count();
            format!("scale {:5} w {:5}: {:?} -> {}/3", scale, w, corrects, ok)
        })
        .collect();
    for line in results {
        println!("{}", line);
    }
}
