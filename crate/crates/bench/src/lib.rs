//! Fixtures shared by the benchmarks.

use dynmetric::{generate_synthetic, Dataset, MahalanobisMetric, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `B B' / d + I` with `B` uniform in `[-1, 1]`.
pub fn random_pd(dim: usize, seed: u64) -> MahalanobisMetric {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut data = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in i..dim {
            let s: f64 = (0..dim).map(|k| b[i * dim + k] * b[j * dim + k]).sum::<f64>() / dim as f64;
            let v = s + if i == j { 1.0 } else { 0.0 };
            data[i * dim + j] = v;
            data[j * dim + i] = v;
        }
    }
    MahalanobisMetric::from_row_major(dim, data).expect("symmetric by construction")
}

pub fn random_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn clusters(classes: usize, per_class: usize, dim: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        classes,
        per_class,
        dim,
        informative_dim: dim.min(5),
        separation: 3.0,
        noise_scale: 1.0,
        seed,
    })
    .expect("valid generator parameters")
}
