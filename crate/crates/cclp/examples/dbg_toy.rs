use cclp::data::{toy_batch, ToyLayout};
use cclp::graph::Similarity;
use cclp::numkit::Rng;
use cclp::trainer::{free_embedding_train, Regularizer, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scale: f64 = args[1].parse().unwrap();
    let w: f64 = args[2].parse().unwrap();
    let iters: usize = args[3].parse().unwrap();
    let self_loops: bool = args[4].parse().unwrap();
    let seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);

    let mut ok = 0;
    for seed in 0..seeds {
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
            self_loops,
            ..TrainConfig::default()
        };
        let traj = free_embedding_train(&batch, &cfg, iters.max(1)).unwrap();
        let preds = traj.final_classifier.predict(&traj.final_coords).unwrap();
        let correct = preds.iter().zip(&truth).filter(|(p, t)| p == t).count();
        if correct == truth.len() { ok += 1; }
        print!("{} ", correct);
    }
    println!("   scale {} w {} iters {} loops {} -> {}/{} separable", scale, w, iters, self_loops, ok, seeds);
}
