//! Seeded Gaussian sampling. Every random object in the crate is drawn from
//! a ChaCha8 stream so that runs are reproducible across platforms.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::EmbeddingTable;
use crate::factored::FactoredShape;

pub struct Gaussian {
    rng: ChaCha8Rng,
}

impl Gaussian {
    pub fn seeded(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn vector(&mut self, len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|_| scale * self.sample()).collect()
    }

    pub fn table(&mut self, shape: FactoredShape, dim: usize, scale: f64) -> EmbeddingTable {
        let data = self.vector(shape.size() * dim, scale);
        EmbeddingTable::from_raw(shape, dim, data)
    }

    /// A uniformly random permutation of `0..len`.
    pub fn permutation(&mut self, len: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut self.rng);
        perm
    }

    pub fn index(&mut self, len: usize) -> usize {
        use rand::Rng;
        self.rng.random_range(0..len)
    }
}
