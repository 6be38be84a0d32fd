#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use residuum::{EmbeddingMatrix, LabelSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, dims: usize) -> EmbeddingMatrix {
    let data = (0..rows * dims)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    EmbeddingMatrix::new(rows, dims, data).unwrap()
}

pub fn labels(n: usize) -> LabelSet {
    LabelSet::new((0..n).map(|c| format!("c{c}")).collect()).unwrap()
}

/// Labels covering every class at least once, the rest uniform.
pub fn random_labels(rng: &mut impl Rng, n: usize, classes: usize) -> Vec<usize> {
    (0..n)
        .map(|i| {
            if i < classes {
                i
            } else {
                rng.random_range(0..classes)
            }
        })
        .collect()
}
