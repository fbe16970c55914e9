use cclp::data::{toy_batch, ToyLayout};
use cclp::graph::Similarity;
use cclp::numkit::Rng;
use cclp::trainer::{free_embedding_train, Regularizer, TrainConfig};

fn main() {
    let scale: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(20.0);
    let w: f64 = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(4.0);
    let mut data_rng = Rng::with_stream(0, 0xDA7A);
    let (batch, truth) = toy_batch(ToyLayout::Circles, &mut data_rng).unwrap();
    let cfg = TrainConfig {
        regularizer: Regularizer::Cclp,
        steps_s: 10,
        weight_w: w,
        lr_alpha: 0.1,
        iterations: 3000,
        seed: 0,
        similarity: Similarity::NegSqEuclidean,
        score_scale: scale,
        ..TrainConfig::default()
    };
    let traj = free_embedding_train(&batch, &cfg, 300).unwrap();
    for snap in &traj.snapshots {
        // watch row 70 (bottom outer) and row 30-ish (bottom inner = row 2+28?)
        // inner points: rows 2..41 are inner indices 1..40 (skipping labeled 0)
        // bottom inner original index 20 -> row 21.
        let w70 = (snap.coords.get(70, 0), snap.coords.get(70, 1));
        let w21 = (snap.coords.get(21, 0), snap.coords.get(21, 1));
        let phi70 = snap.lp_posteriors.get(70, 0);
        let phi21 = snap.lp_posteriors.get(21, 0);
        // distance from row70 to nearest same-class and cross-class point
        let mut d_same = f64::INFINITY;
        let mut d_cross = f64::INFINITY;
        for i in 0..batch.n() {
            if i == 70 { continue; }
            let dx = snap.coords.get(i, 0) - w70.0;
            let dy = snap.coords.get(i, 1) - w70.1;
            let d = (dx * dx + dy * dy).sqrt();
            if truth[i] == 1 { d_same = d_same.min(d); } else { d_cross = d_cross.min(d); }
        }
        println!(
            "it {:4}: r70 ({:+.2},{:+.2}) phi0 {:.3} dsame {:.3} dcross {:.3} | r21 ({:+.2},{:+.2}) phi0 {:.3} | Lsup {:.4} Lreg {:.4}",
            snap.iteration, w70.0, w70.1, phi70, d_same, d_cross, w21.0, w21.1, phi21, snap.l_sup, snap.l_reg
        );
    }
}
