use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser, used to derive independent stream seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn epoch_permutation(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch));
    perm.shuffle(&mut rng);
    perm
}

/// Indices of mini-batch `iteration`, a pure function of its arguments.
///
/// Batches are consecutive windows over an endless stream made of one
/// fresh permutation per epoch, so every epoch covers each sample once.
pub fn batch_sampler(n: usize, batch_size: usize, seed: u64, iteration: usize) -> Vec<usize> {
    BatchSampler::new(n, batch_size, seed).batch(iteration)
}

/// [`batch_sampler`] with the current epoch's permutation cached.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    n: usize,
    batch_size: usize,
    seed: u64,
    cached: Option<(u64, Vec<usize>)>,
}

impl BatchSampler {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        assert!(n > 0, "cannot sample from an empty dataset");
        assert!(batch_size > 0, "batch size must be positive");
        Self {
            n,
            batch_size,
            seed,
            cached: None,
        }
    }

    fn index_at(&mut self, position: u64) -> usize {
        let epoch = position / self.n as u64;
        let offset = (position % self.n as u64) as usize;
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            self.cached = Some((epoch, epoch_permutation(self.n, self.seed, epoch)));
        }
        self.cached.as_ref().unwrap().1[offset]
    }

    pub fn batch(&mut self, iteration: usize) -> Vec<usize> {
        let start = iteration as u64 * self.batch_size as u64;
        (0..self.batch_size as u64)
            .map(|i| self.index_at(start + i))
            .collect()
    }
}
