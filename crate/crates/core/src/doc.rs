//! Density of classifiers: the distribution of true error over weight
//! vectors drawn uniformly from the unit hypersphere, kept as a histogram on
//! `[0, 1]`.
//!
//! Every quantity derived from a histogram treats it as point masses at the
//! bin midpoints. A bin counts as "good" for a threshold `t` when its
//! midpoint is below `t` and as "bad" otherwise, so fractions such as
//! `g_eps` and `Omega_eps / Omega` and every bound computed in
//! [`crate::bounds`] refer to one and the same discrete measure.

use serde::{Deserialize, Serialize};

use crate::nn::{Arch, BatchEvaluator, PackedDataset};
use crate::parallel::map_indexed;
use crate::sphere::{derive_stream, fill_unit_sphere, streams, GENERATOR_NAME};
use crate::{Error, LabeledDataset, Result};

pub const DEFAULT_BINS: usize = 100;

/// Sphere samples per RNG stream in [`estimate_doc`].
pub const DOC_BLOCK_SIZE: u64 = 4096;

/// Slack allowed when checking `epsilon <= 1 - e_min`.
const RANGE_SLACK: f64 = 1e-12;

/// Where the minimal achievable error used in all thresholds comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EminPolicy {
    /// A known value, e.g. the Bayes error of a synthetic problem.
    Analytic { value: f64 },
    /// The left edge of the first non-empty bin.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistogramRepr", into = "HistogramRepr")]
pub struct DocHistogram {
    counts: Vec<u64>,
    total_samples: u64,
    observed_min: f64,
    e_min_policy: EminPolicy,
    arch: Option<Arch>,
    dataset_id: String,
    seed: u64,
    generator_name: String,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    bin_count: usize,
    total_samples: u64,
    counts: Vec<u64>,
    e_min_estimate: f64,
    observed_min: f64,
    e_min_policy: EminPolicy,
    arch: Option<Arch>,
    dataset_id: String,
    seed: u64,
    generator_name: String,
}

impl From<DocHistogram> for HistogramRepr {
    fn from(h: DocHistogram) -> Self {
        HistogramRepr {
            bin_count: h.bin_count(),
            total_samples: h.total_samples,
            e_min_estimate: h.e_min_estimate(),
            counts: h.counts,
            observed_min: h.observed_min,
            e_min_policy: h.e_min_policy,
            arch: h.arch,
            dataset_id: h.dataset_id,
            seed: h.seed,
            generator_name: h.generator_name,
        }
    }
}

impl TryFrom<HistogramRepr> for DocHistogram {
    type Error = Error;

    fn try_from(r: HistogramRepr) -> Result<Self> {
        if r.bin_count != r.counts.len() {
            return Err(Error::Precondition(format!(
                "bin_count {} but {} counts",
                r.bin_count,
                r.counts.len()
            )));
        }
        let mut h = DocHistogram::from_counts(r.counts)?;
        if h.total_samples != r.total_samples {
            return Err(Error::Precondition(format!(
                "counts sum to {} but total_samples is {}",
                h.total_samples, r.total_samples
            )));
        }
        h.observed_min = r.observed_min;
        h.e_min_policy = r.e_min_policy;
        h.arch = r.arch;
        h.dataset_id = r.dataset_id;
        h.seed = r.seed;
        h.generator_name = r.generator_name;
        Ok(h)
    }
}

impl DocHistogram {
    /// Histogram with the given per-bin counts over a uniform partition of
    /// `[0, 1]`. The observed minimum is set to the left edge of the first
    /// non-empty bin.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::Precondition(format!(
                "need at least 2 bins, got {}",
                counts.len()
            )));
        }
        let total_samples = counts.iter().sum();
        let bins = counts.len() as f64;
        let observed_min = counts.iter().position(|&c| c > 0).map_or(f64::NAN, |k| k as f64 / bins);
        Ok(DocHistogram {
            counts,
            total_samples,
            observed_min,
            e_min_policy: EminPolicy::Estimated,
            arch: None,
            dataset_id: String::new(),
            seed: 0,
            generator_name: String::new(),
        })
    }

    /// Bins a list of error values.
    pub fn from_errors(errors: &[f64], bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Precondition(format!("need at least 2 bins, got {bins}")));
        }
        let mut counts = vec![0u64; bins];
        for &e in errors {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Precondition(format!("error value {e} outside [0, 1]")));
            }
            counts[bin_of_value(e, bins)] += 1;
        }
        let mut h = DocHistogram::from_counts(counts)?;
        h.observed_min = errors.iter().copied().fold(f64::NAN, f64::min);
        Ok(h)
    }

    pub fn with_policy(mut self, policy: EminPolicy) -> Self {
        self.e_min_policy = policy;
        self
    }

    pub fn with_source(mut self, arch: Arch, dataset_id: impl Into<String>, seed: u64) -> Self {
        self.arch = Some(arch);
        self.dataset_id = dataset_id.into();
        self.seed = seed;
        self.generator_name = GENERATOR_NAME.to_string();
        self
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_samples(&self) -> u64 {
        self.total_samples
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.bin_count() as f64
    }

    pub fn bin_edges(&self, k: usize) -> (f64, f64) {
        let b = self.bin_count() as f64;
        (k as f64 / b, (k + 1) as f64 / b)
    }

    pub fn bin_mid(&self, k: usize) -> f64 {
        (k as f64 + 0.5) / self.bin_count() as f64
    }

    /// Smallest error seen while sampling.
    pub fn observed_min(&self) -> f64 {
        self.observed_min
    }

    /// Left edge of the first non-empty bin.
    pub fn e_min_estimate(&self) -> f64 {
        self.counts
            .iter()
            .position(|&c| c > 0)
            .map_or(f64::NAN, |k| self.bin_edges(k).0)
    }

    pub fn e_min_policy(&self) -> EminPolicy {
        self.e_min_policy
    }

    /// `E_min` as used in every threshold, according to the policy.
    pub fn e_min(&self) -> f64 {
        match self.e_min_policy {
            EminPolicy::Analytic { value } => value,
            EminPolicy::Estimated => self.e_min_estimate(),
        }
    }

    pub fn arch(&self) -> Option<&Arch> {
        self.arch.as_ref()
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generator_name(&self) -> &str {
        &self.generator_name
    }

    /// Per-bin probability mass; sums to one.
    pub fn masses(&self) -> Vec<f64> {
        let total = self.total_samples as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Adds the counts of `other`, which must use the same binning.
    pub fn merge(&mut self, other: &DocHistogram) -> Result<()> {
        if other.bin_count() != self.bin_count() {
            return Err(Error::Precondition(format!(
                "cannot merge {} bins into {}",
                other.bin_count(),
                self.bin_count()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_samples += other.total_samples;
        self.observed_min = self.observed_min.min(other.observed_min);
        Ok(())
    }

    pub(crate) fn check_epsilon(&self, epsilon: f64) -> Result<()> {
        if self.total_samples == 0 {
            return Err(Error::DegenerateDoc("histogram holds no samples".into()));
        }
        let upper = 1.0 - self.e_min();
        if !(epsilon >= 0.0 && epsilon <= upper + RANGE_SLACK) {
            return Err(Error::Precondition(format!("epsilon {epsilon} outside [0, {upper}]")));
        }
        Ok(())
    }

    /// True when bin `k` lies in the bad region `E >= E_min + epsilon`.
    pub fn is_bad_bin(&self, k: usize, epsilon: f64) -> bool {
        self.bin_mid(k) >= self.e_min() + epsilon
    }

    /// Fraction of sampled classifiers with error below `E_min + epsilon`.
    pub fn g_epsilon(&self, epsilon: f64) -> Result<f64> {
        self.check_epsilon(epsilon)?;
        let good: u64 = (0..self.bin_count())
            .filter(|&k| !self.is_bad_bin(k, epsilon))
            .map(|k| self.counts[k])
            .sum();
        Ok(good as f64 / self.total_samples as f64)
    }

    /// `Omega_eps / Omega`, the normalized volume of the bad region.
    pub fn omega_epsilon(&self, epsilon: f64) -> Result<f64> {
        Ok(1.0 - self.g_epsilon(epsilon)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("histogram serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `bin_left,bin_right,count,normalized_mass` rows for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,count,normalized_mass\n");
        for (k, (&c, m)) in self.counts.iter().zip(self.masses()).enumerate() {
            let (lo, hi) = self.bin_edges(k);
            out.push_str(&format!("{lo},{hi},{c},{m}\n"));
        }
        out
    }
}

fn bin_of_value(e: f64, bins: usize) -> usize {
    // errors are ratios of integers; nudge up so e.g. 0.29 lands in bin 29
    (((e * bins as f64) + 1e-9).floor() as usize).min(bins - 1)
}

fn bin_of_count(errors: usize, total: usize, bins: usize) -> usize {
    ((errors as u128 * bins as u128 / total as u128) as usize).min(bins - 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocSettings {
    pub samples: u64,
    pub bins: usize,
    pub seed: u64,
    pub workers: usize,
    pub dataset_id: String,
}

impl DocSettings {
    pub fn new(samples: u64, seed: u64) -> Self {
        DocSettings {
            samples,
            bins: DEFAULT_BINS,
            seed,
            workers: 1,
            dataset_id: String::new(),
        }
    }
}

/// Samples `settings.samples` weight vectors uniformly from the sphere and
/// histograms their error on `test_set`.
///
/// Samples are processed in blocks of [`DOC_BLOCK_SIZE`]; block `b` draws
/// from stream `(seed, DOC_BLOCK:b)`, and block histograms are merged in
/// block order, so the result is independent of `settings.workers`.
pub fn estimate_doc(arch: &Arch, test_set: &LabeledDataset, settings: &DocSettings) -> Result<DocHistogram> {
    if settings.samples == 0 {
        return Err(Error::Precondition("DOC needs at least one sample".into()));
    }
    if settings.bins < 2 {
        return Err(Error::Precondition(format!(
            "DOC needs at least 2 bins, got {}",
            settings.bins
        )));
    }
    if test_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if test_set.dim() != arch.input_dim() {
        return Err(Error::Shape {
            expected: arch.input_dim(),
            got: test_set.dim(),
        });
    }
    let packed = PackedDataset::new(test_set);
    let total = packed.len();
    let blocks = settings.samples.div_ceil(DOC_BLOCK_SIZE) as usize;
    let partials = map_indexed(settings.workers, blocks, |b| {
        let start = b as u64 * DOC_BLOCK_SIZE;
        let len = (settings.samples - start).min(DOC_BLOCK_SIZE);
        let mut rng = derive_stream(settings.seed, streams::id(streams::DOC_BLOCK, 0, b as u64));
        let mut eval = BatchEvaluator::new(arch);
        let mut w = vec![0.0; arch.weight_count()];
        let mut counts = vec![0u64; settings.bins];
        let mut min_errors = usize::MAX;
        for _ in 0..len {
            fill_unit_sphere(&mut w, &mut rng);
            let errors = eval.count_errors(&w, &packed, None);
            counts[bin_of_count(errors, total, settings.bins)] += 1;
            min_errors = min_errors.min(errors);
        }
        (counts, min_errors)
    })?;
    let mut counts = vec![0u64; settings.bins];
    let mut min_errors = usize::MAX;
    for (part, m) in partials {
        for (a, b) in counts.iter_mut().zip(part) {
            *a += b;
        }
        min_errors = min_errors.min(m);
    }
    let mut h =
        DocHistogram::from_counts(counts)?.with_source(arch.clone(), settings.dataset_id.clone(), settings.seed);
    h.observed_min = min_errors as f64 / total as f64;
    Ok(h)
}
