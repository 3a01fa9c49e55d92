//! Labeled datasets: the synthetic two-Gaussian problem, MNIST digit
//! subsets, and helpers for drawing training sets from a pool.

pub mod idx;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use idx::{load_idx, IdxImages};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SyntheticGaussian,
    MnistSubset,
    Crafted,
}

/// Binary-labeled samples with a common input dimension, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    inputs: Vec<f64>,
    labels: Vec<u8>,
    provenance: Provenance,
}

impl LabeledDataset {
    /// `inputs` is row-major with `labels.len()` rows of length `dim`.
    pub fn new(dim: usize, inputs: Vec<f64>, labels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("input dimension must be positive".into()));
        }
        if inputs.len() != dim * labels.len() {
            return Err(Error::Precondition(format!(
                "{} input values do not form {} rows of dimension {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Precondition(format!("label {bad} is not binary")));
        }
        Ok(LabeledDataset {
            dim,
            inputs,
            labels,
            provenance,
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<u8>, provenance: Provenance) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.len() != labels.len() {
            return Err(Error::Precondition(format!(
                "{} inputs but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Shape {
                expected: dim,
                got: rows[i].len(),
            });
        }
        LabeledDataset::new(dim, rows.concat(), labels, provenance)
    }

    pub fn empty(dim: usize, provenance: Provenance) -> Self {
        LabeledDataset {
            dim,
            inputs: Vec::new(),
            labels: Vec::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u8)> + '_ {
        self.inputs.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.len() - ones, ones]
    }

    /// True when all samples share one label (or there are none).
    pub fn is_single_class(&self) -> bool {
        let [a, b] = self.class_counts();
        a == 0 || b == 0
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(self.input(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            dim: self.dim,
            inputs,
            labels,
            provenance: self.provenance,
        }
    }

    /// Same inputs with every label replaced by a fair coin flip.
    pub fn with_random_labels<R: Rng + ?Sized>(&self, rng: &mut R) -> LabeledDataset {
        let labels = (0..self.len()).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        LabeledDataset { labels, ..self.clone() }
    }
}

/// Two isotropic Gaussians centered at `(+offset, 0, ..)` (label 0) and
/// `(-offset, 0, ..)` (label 1) with per-coordinate standard deviation
/// `class_std`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianProblem {
    pub dim: usize,
    pub center_offset: f64,
    pub class_std: f64,
}

impl Default for GaussianProblem {
    fn default() -> Self {
        GaussianProblem {
            dim: 10,
            center_offset: 1.0,
            class_std: 0.5,
        }
    }
}

impl GaussianProblem {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Precondition("gaussian dim must be positive".into()));
        }
        if !(self.class_std > 0.0 && self.class_std.is_finite()) {
            return Err(Error::Precondition(format!(
                "class_std must be positive, got {}",
                self.class_std
            )));
        }
        if !(self.center_offset >= 0.0 && self.center_offset.is_finite()) {
            return Err(Error::Precondition(format!(
                "center_offset must be non-negative, got {}",
                self.center_offset
            )));
        }
        Ok(())
    }

    /// Analytic Bayes error of the problem.
    pub fn e_min(&self) -> f64 {
        bayes_error_gaussian(self)
    }

    fn push_sample<R: Rng + ?Sized>(&self, label: u8, inputs: &mut Vec<f64>, rng: &mut R) {
        let center = if label == 0 {
            self.center_offset
        } else {
            -self.center_offset
        };
        for f in 0..self.dim {
            let z: f64 = rng.sample(StandardNormal);
            let mean = if f == 0 { center } else { 0.0 };
            inputs.push(mean + self.class_std * z);
        }
    }
}

/// `n` i.i.d. samples: label ~ Bernoulli(1/2), then the class Gaussian.
pub fn gen_gaussian<R: Rng + ?Sized>(problem: &GaussianProblem, n: usize, rng: &mut R) -> LabeledDataset {
    let mut inputs = Vec::with_capacity(n * problem.dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = u8::from(rng.gen_bool(0.5));
        problem.push_sample(label, &mut inputs, rng);
        labels.push(label);
    }
    LabeledDataset {
        dim: problem.dim,
        inputs,
        labels,
        provenance: Provenance::SyntheticGaussian,
    }
}

/// Exactly balanced sample: labels alternate 0, 1, 0, ... (odd `n` gets the
/// extra sample in class 0).
pub fn gen_gaussian_balanced<R: Rng + ?Sized>(problem: &GaussianProblem, n: usize, rng: &mut R) -> LabeledDataset {
    let mut inputs = Vec::with_capacity(n * problem.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        problem.push_sample(label, &mut inputs, rng);
        labels.push(label);
    }
    LabeledDataset {
        dim: problem.dim,
        inputs,
        labels,
        provenance: Provenance::SyntheticGaussian,
    }
}

/// Φ(-offset/std): the optimal boundary is the hyperplane `x_1 = 0`.
pub fn bayes_error_gaussian(problem: &GaussianProblem) -> f64 {
    let z = problem.center_offset / problem.class_std;
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Keeps digits `class_a` (relabeled 0) and `class_b` (relabeled 1), the
/// first `per_class_cap` of each in file order.
pub fn filter_binary(
    images: &IdxImages,
    labels: &[u8],
    class_a: u8,
    class_b: u8,
    per_class_cap: usize,
) -> Result<LabeledDataset> {
    if images.count() != labels.len() {
        return Err(Error::Idx(idx::IdxError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        }));
    }
    if class_a == class_b {
        return Err(Error::Precondition("the two digits must differ".into()));
    }
    let dim = images.pixels_per_image();
    let mut picked = [Vec::new(), Vec::new()];
    for (i, &digit) in labels.iter().enumerate() {
        let class = if digit == class_a {
            0
        } else if digit == class_b {
            1
        } else {
            continue;
        };
        if picked[class].len() < per_class_cap {
            picked[class].push(i);
        }
    }
    for (class, digit) in [(0, class_a), (1, class_b)] {
        if picked[class].len() < per_class_cap {
            return Err(Error::InsufficientSamples {
                digit,
                needed: per_class_cap,
                available: picked[class].len(),
            });
        }
    }
    let mut inputs = Vec::with_capacity(2 * per_class_cap * dim);
    let mut out_labels = Vec::with_capacity(2 * per_class_cap);
    for (class, indices) in picked.iter().enumerate() {
        for &i in indices {
            inputs.extend(images.image(i));
            out_labels.push(class as u8);
        }
    }
    LabeledDataset::new(dim, inputs, out_labels, Provenance::MnistSubset)
}

/// `n` samples drawn uniformly without replacement from `pool`.
pub fn draw_training_set<R: Rng + ?Sized>(pool: &LabeledDataset, n: usize, rng: &mut R) -> Result<LabeledDataset> {
    if n > pool.len() {
        return Err(Error::Precondition(format!(
            "cannot draw {n} samples from a pool of {}",
            pool.len()
        )));
    }
    let picked = index::sample(rng, pool.len(), n).into_vec();
    Ok(pool.select(&picked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::derive_stream;

    /// Φ(x) from the Maclaurin series of erf; independent of libm.
    fn normal_cdf_series(x: f64) -> f64 {
        let z = x / std::f64::consts::SQRT_2;
        let mut term = z;
        let mut sum = z;
        for k in 1..200 {
            term *= -z * z / k as f64;
            sum += term / (2 * k + 1) as f64;
        }
        0.5 * (1.0 + 2.0 / std::f64::consts::PI.sqrt() * sum)
    }

    #[test]
    fn bayes_error_anchors() {
        let p = GaussianProblem::default();
        let e = bayes_error_gaussian(&p);
        assert!((e - normal_cdf_series(-2.0)).abs() < 1e-14);
        assert!((e - 0.02275).abs() < 1e-5);

        let same = GaussianProblem {
            center_offset: 0.0,
            ..p
        };
        assert_eq!(bayes_error_gaussian(&same), 0.5);

        let wide = GaussianProblem { class_std: 1.0, ..p };
        assert!((bayes_error_gaussian(&wide) - normal_cdf_series(-1.0)).abs() < 1e-14);
        assert!((bayes_error_gaussian(&wide) - 0.15866).abs() < 1e-5);
    }

    #[test]
    fn bayes_error_decreases_with_separation() {
        let mut last = 0.5 + 1e-12;
        for k in 0..40 {
            let p = GaussianProblem {
                center_offset: k as f64 * 0.1,
                ..Default::default()
            };
            let e = bayes_error_gaussian(&p);
            assert!(e < last);
            last = e;
        }
    }

    #[test]
    fn empty_gaussian_sample() {
        let mut rng = derive_stream(0, 0);
        assert!(gen_gaussian(&GaussianProblem::default(), 0, &mut rng).is_empty());
    }

    #[test]
    fn gaussian_moments() {
        let p = GaussianProblem::default();
        let n = 100_000;
        let data = gen_gaussian(&p, n, &mut derive_stream(9, 0));
        let [zeros, ones] = data.class_counts();
        // label frequency: sd = 0.0016
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        let mut sum = [0.0f64; 2];
        let mut second = [0.0f64; 2];
        let mut other = 0.0f64;
        for (x, y) in data.iter() {
            sum[y as usize] += x[0];
            second[y as usize] += x[0] * x[0];
            other += x[3] * x[3];
        }
        let mean0 = sum[0] / zeros as f64;
        let mean1 = sum[1] / ones as f64;
        // sd of each class mean: 0.5/sqrt(5e4) = 0.0022
        assert!((mean0 - 1.0).abs() < 0.01, "{mean0}");
        assert!((mean1 + 1.0).abs() < 0.01, "{mean1}");
        let var0 = second[0] / zeros as f64 - mean0 * mean0;
        assert!((var0 - 0.25).abs() < 0.01, "{var0}");
        assert!((other / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn balanced_sample_is_balanced() {
        let data = gen_gaussian_balanced(&GaussianProblem::default(), 1001, &mut derive_stream(1, 1));
        assert_eq!(data.class_counts(), [501, 500]);
    }

    fn pool(len: usize) -> LabeledDataset {
        LabeledDataset::from_rows(
            (0..len).map(|i| vec![i as f64]).collect(),
            (0..len).map(|i| (i % 2) as u8).collect(),
            Provenance::Crafted,
        )
        .unwrap()
    }

    #[test]
    fn full_draw_is_a_permutation() {
        let p = pool(20);
        let d = draw_training_set(&p, 20, &mut derive_stream(4, 0)).unwrap();
        let mut seen: Vec<usize> = d.iter().map(|(x, _)| x[0] as usize).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn draw_is_deterministic_and_checked() {
        let p = pool(20);
        let a = draw_training_set(&p, 1, &mut derive_stream(4, 2)).unwrap();
        let b = draw_training_set(&p, 1, &mut derive_stream(4, 2)).unwrap();
        assert_eq!(a, b);
        assert!(draw_training_set(&p, 21, &mut derive_stream(4, 2)).is_err());
    }

    #[test]
    fn draw_inclusion_frequency() {
        // hypergeometric: each element is included with probability 10/20
        let p = pool(20);
        let mut hits = [0usize; 20];
        let mut rng = derive_stream(8, 0);
        let draws = 10_000;
        for _ in 0..draws {
            for (x, _) in draw_training_set(&p, 10, &mut rng).unwrap().iter() {
                hits[x[0] as usize] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::from_rows(vec![vec![1.0], vec![1.0, 2.0]], vec![0, 1], Provenance::Crafted).is_err());
        assert!(LabeledDataset::from_rows(vec![vec![1.0]], vec![2], Provenance::Crafted).is_err());
        assert!(LabeledDataset::from_rows(vec![vec![1.0]], vec![0, 1], Provenance::Crafted).is_err());
    }

    #[test]
    fn random_relabel_keeps_inputs() {
        let p = pool(100);
        let r = p.with_random_labels(&mut derive_stream(2, 2));
        assert_eq!(r.len(), 100);
        assert_eq!(r.input(7), p.input(7));
        assert_ne!(r.labels(), p.labels());
    }
}
