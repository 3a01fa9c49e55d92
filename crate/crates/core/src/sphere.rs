//! Reproducible random streams and uniform sampling on the unit hypersphere.
//!
//! Every logical unit of work (a trial, a block of DOC samples, a training
//! set) owns its own [`RngStream`], keyed by `(seed, stream_id)`. Stream ids
//! are derived from the logical index, never from the worker that happens to
//! run the task, so results do not depend on the worker count.

use rand::{Error as RandError, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::nn::{euclidean_norm, WeightVector};

/// Generator family recorded in every artifact for provenance.
pub const GENERATOR_NAME: &str = "chacha8 (rand_chacha 0.3, 2^64 streams per seed)";

/// Independent, reproducible random stream.
///
/// Backed by ChaCha8 keyed from `seed` with the 64-bit stream id selecting
/// one of its 2^64 independent streams.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

pub fn derive_stream(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(seed, stream_id)
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Stream-id layout: the top byte names the purpose, the next 24 bits carry
/// a "major" index (typically the training-set size `n`), and the low 32
/// bits the logical item index.
pub mod streams {
    pub const DOC_BLOCK: u8 = 1;
    pub const TEST_SET: u8 = 2;
    pub const QN_TRAIN: u8 = 3;
    pub const QN_WEIGHTS: u8 = 4;
    pub const VOLUME_TRAIN: u8 = 5;
    pub const VOLUME_PROBES: u8 = 6;
    pub const BOOTSTRAP: u8 = 7;
    pub const RELABEL: u8 = 8;

    pub fn id(purpose: u8, major: u64, index: u64) -> u64 {
        debug_assert!(major < 1 << 24 && index < 1 << 32);
        (u64::from(purpose) << 56) | ((major & 0xFF_FFFF) << 32) | (index & 0xFFFF_FFFF)
    }
}

/// Fills `buf` with a point distributed uniformly on the unit sphere
/// `S^{len-1}` by normalizing independent standard normals.
pub fn fill_unit_sphere<R: Rng + ?Sized>(buf: &mut [f64], rng: &mut R) {
    assert!(!buf.is_empty(), "sphere dimension must be at least 1");
    loop {
        for v in buf.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = euclidean_norm(buf);
        // zero or overflowing draws have probability zero; redraw anyway
        if norm > 0.0 && norm.is_finite() {
            buf.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

pub fn sample_unit_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> WeightVector {
    let mut values = vec![0.0; dim];
    fill_unit_sphere(&mut values, rng);
    WeightVector::new(values).expect("normalized draw has unit norm")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_reproduces() {
        let mut a = derive_stream(42, 7);
        let mut b = derive_stream(42, 7);
        let xs: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = derive_stream(42, 0);
        let mut b = derive_stream(42, 1);
        let mut c = derive_stream(43, 0);
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
    }

    #[test]
    fn unit_norm() {
        let mut rng = derive_stream(1, 0);
        for dim in [1, 2, 10, 120, 7860] {
            let w = sample_unit_sphere(dim, &mut rng);
            assert_eq!(w.len(), dim);
            assert!((w.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_dimensional_sphere_is_a_fair_sign() {
        let mut rng = derive_stream(3, 0);
        let mut plus = 0;
        let draws = 10_000;
        for _ in 0..draws {
            let w = sample_unit_sphere(1, &mut rng);
            assert!(w[0] == 1.0 || w[0] == -1.0);
            if w[0] > 0.0 {
                plus += 1;
            }
        }
        // binomial(10^4, 1/2): sd = 50
        assert!((plus as i64 - 5000).abs() < 250, "plus = {plus}");
    }

    #[test]
    fn coordinate_moments_match_uniform_sphere() {
        // E[v_i] = 0, E[v_i^2] = 1/dim
        let dim = 10;
        let draws = 100_000;
        let mut rng = derive_stream(11, 0);
        let mut sum = vec![0.0; dim];
        let mut sumsq = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for _ in 0..draws {
            fill_unit_sphere(&mut buf, &mut rng);
            for i in 0..dim {
                sum[i] += buf[i];
                sumsq[i] += buf[i] * buf[i];
            }
        }
        for i in 0..dim {
            let mean = sum[i] / draws as f64;
            let var = sumsq[i] / draws as f64 - mean * mean;
            assert!(mean.abs() <= 0.01, "coordinate {i} mean {mean}");
            // sd of the variance estimate is about 0.0005 here
            assert!((var - 0.1).abs() < 0.003, "coordinate {i} variance {var}");
        }
    }

    #[test]
    fn inner_products_of_independent_samples() {
        // <u, v> for independent uniform unit vectors: mean 0, variance 1/dim
        let dim = 120;
        let pairs = 10_000;
        let mut rng = derive_stream(5, 0);
        let mut u = vec![0.0; dim];
        let mut v = vec![0.0; dim];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..pairs {
            fill_unit_sphere(&mut u, &mut rng);
            fill_unit_sphere(&mut v, &mut rng);
            let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            s += d;
            s2 += d * d;
        }
        let mean = s / pairs as f64;
        let var = s2 / pairs as f64 - mean * mean;
        assert!(mean.abs() < 4.0 * (1.0 / 120.0f64 / pairs as f64).sqrt());
        assert!((var * 120.0 - 1.0).abs() < 0.06, "variance {var}");
    }

    #[test]
    fn stream_id_layout() {
        assert_eq!(streams::id(1, 0, 0), 1 << 56);
        assert_eq!(streams::id(3, 30, 999), (3 << 56) | (30 << 32) | 999);
    }
}
