//! Rejection sampling of zero-training-error solutions.
//!
//! A trial draws a fresh training set, then draws weights from the sphere
//! until one classifies the whole set correctly, and records that weight's
//! error on the fixed test set. Trials never share RNG streams: trial `t`
//! at training-set size `n` uses streams `QN_TRAIN:n:t` and `QN_WEIGHTS:n:t`.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{draw_training_set, gen_gaussian};
use crate::nn::{BatchEvaluator, Evaluator, PackedDataset};
use crate::parallel::map_indexed;
use crate::sphere::{derive_stream, fill_unit_sphere, streams};
use crate::stats::{self, BootstrapSummary, Interval};
use crate::{Arch, Error, GaussianProblem, LabeledDataset, Result, WeightVector};

pub const DEFAULT_MAX_TRIALS: u64 = 10_000_000;
pub const DEFAULT_RESAMPLES: usize = 1000;

/// Where training sets come from.
#[derive(Debug, Clone)]
pub enum DataSource {
    /// Fresh i.i.d. samples of the synthetic problem.
    Gaussian(GaussianProblem),
    /// Gaussian inputs with labels replaced by fair coin flips.
    RandomLabels(GaussianProblem),
    /// Draws without replacement from a fixed pool (e.g. MNIST training images).
    Pool(LabeledDataset),
}

impl DataSource {
    pub fn dim(&self) -> usize {
        match self {
            DataSource::Gaussian(p) | DataSource::RandomLabels(p) => p.dim,
            DataSource::Pool(d) => d.dim(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LabeledDataset> {
        match self {
            DataSource::Gaussian(p) => Ok(gen_gaussian(p, n, rng)),
            DataSource::RandomLabels(p) => Ok(gen_gaussian(p, n, rng).with_random_labels(rng)),
            DataSource::Pool(d) => draw_training_set(d, n, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found { weights: WeightVector, trials: u64 },
    Exhausted { max_trials: u64 },
}

fn check_shapes(arch: &Arch, data: &LabeledDataset) -> Result<()> {
    if data.dim() != arch.input_dim() && !data.is_empty() {
        return Err(Error::Shape {
            expected: arch.input_dim(),
            got: data.dim(),
        });
    }
    Ok(())
}

/// Draws sphere samples until one has zero error on `train`, giving up
/// after `max_trials` draws.
pub fn find_zero_train_solution<R: Rng + ?Sized>(
    arch: &Arch,
    train: &LabeledDataset,
    rng: &mut R,
    max_trials: u64,
) -> Result<SearchOutcome> {
    if max_trials == 0 {
        return Err(Error::Precondition("max_trials must be at least 1".into()));
    }
    check_shapes(arch, train)?;
    let mut eval = Evaluator::new(arch);
    let mut w = vec![0.0; arch.weight_count()];
    for t in 1..=max_trials {
        fill_unit_sphere(&mut w, rng);
        if eval.fits(&w, train) {
            return Ok(SearchOutcome::Found {
                weights: WeightVector::new(w)?,
                trials: t,
            });
        }
    }
    Ok(SearchOutcome::Exhausted { max_trials })
}

/// One rejection-sampling trial. `test_error` is `None` when the draw
/// budget ran out; `trials_to_hit` then holds the budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub n: usize,
    /// Stream id of the training-set stream under the experiment seed.
    pub train_seed: u64,
    pub trials_to_hit: u64,
    pub test_error: Option<f64>,
    pub wall_time_ms: u64,
    /// All training labels equal (a constant classifier then fits).
    pub single_class: bool,
}

impl TrialRecord {
    pub const CSV_HEADER: &'static str = "trial_id,n,train_seed,trials_to_hit,test_error,wall_time_ms,single_class";

    pub fn found(&self) -> bool {
        self.test_error.is_some()
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.trial_id,
            self.n,
            self.train_seed,
            self.trials_to_hit,
            self.test_error.map(|e| e.to_string()).unwrap_or_default(),
            self.wall_time_ms,
            u8::from(self.single_class)
        )
    }

    pub fn from_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 7 {
            return None;
        }
        Some(TrialRecord {
            trial_id: f[0].parse().ok()?,
            n: f[1].parse().ok()?,
            train_seed: f[2].parse().ok()?,
            trials_to_hit: f[3].parse().ok()?,
            test_error: if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse().ok()?)
            },
            wall_time_ms: f[5].parse().ok()?,
            single_class: match f[6] {
                "0" => false,
                "1" => true,
                _ => return None,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnSettings {
    pub trials: usize,
    pub max_trials_each: u64,
    pub seed: u64,
    pub workers: usize,
    /// When false `wall_time_ms` is written as 0 so that reruns are
    /// byte-identical.
    pub record_timing: bool,
}

impl QnSettings {
    pub fn new(trials: usize, seed: u64) -> Self {
        QnSettings {
            trials,
            max_trials_each: DEFAULT_MAX_TRIALS,
            seed,
            workers: 1,
            record_timing: false,
        }
    }
}

/// Runs `settings.trials` independent trials at training-set size `n`.
/// Records come back ordered by `trial_id`; exhausted trials are kept.
pub fn sample_qn(
    arch: &Arch,
    source: &DataSource,
    test: &LabeledDataset,
    n: usize,
    settings: &QnSettings,
) -> Result<Vec<TrialRecord>> {
    if settings.trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    if source.dim() != arch.input_dim() {
        return Err(Error::Shape {
            expected: arch.input_dim(),
            got: source.dim(),
        });
    }
    check_shapes(arch, test)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let packed = PackedDataset::new(test);
    let results = map_indexed(settings.workers, settings.trials, |t| -> Result<TrialRecord> {
        let start = Instant::now();
        let train_stream = streams::id(streams::QN_TRAIN, n as u64, t as u64);
        let mut train_rng = derive_stream(settings.seed, train_stream);
        let mut weight_rng = derive_stream(settings.seed, streams::id(streams::QN_WEIGHTS, n as u64, t as u64));
        let train = source.draw(n, &mut train_rng)?;
        let outcome = find_zero_train_solution(arch, &train, &mut weight_rng, settings.max_trials_each)?;
        let (trials_to_hit, test_error) = match outcome {
            SearchOutcome::Found { weights, trials } => {
                let err = BatchEvaluator::new(arch).error_rate(&weights, &packed);
                (trials, Some(err))
            }
            SearchOutcome::Exhausted { max_trials } => (max_trials, None),
        };
        Ok(TrialRecord {
            trial_id: t as u64,
            n,
            train_seed: train_stream,
            trials_to_hit,
            test_error,
            wall_time_ms: if settings.record_timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
            single_class: train.is_single_class(),
        })
    })?;
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QnSummary {
    pub n: usize,
    pub trials: usize,
    pub found: usize,
    pub exhausted: usize,
    pub single_class: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// `(epsilon, fraction of found solutions with test error >= e_min + epsilon)`.
    pub phi_hat: Vec<(f64, f64)>,
}

/// Test errors of the found solutions, in record order.
pub fn found_errors(records: &[TrialRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.test_error).collect()
}

pub fn phi_hat(errors: &[f64], e_min: f64, epsilon: f64) -> f64 {
    let bad = errors.iter().filter(|&&e| e >= e_min + epsilon).count();
    bad as f64 / errors.len() as f64
}

pub fn summarize_qn(records: &[TrialRecord], e_min: f64, epsilons: &[f64]) -> Result<QnSummary> {
    let mut errors = found_errors(records);
    if errors.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mean = stats::mean(&errors);
    let phi = epsilons
        .iter()
        .map(|&eps| (eps, phi_hat(&errors, e_min, eps)))
        .collect();
    errors.sort_by(f64::total_cmp);
    Ok(QnSummary {
        n: records[0].n,
        trials: records.len(),
        found: errors.len(),
        exhausted: records.len() - errors.len(),
        single_class: records.iter().filter(|r| r.single_class).count(),
        mean,
        min: errors[0],
        q1: stats::quantile_sorted(&errors, 0.25),
        median: stats::quantile_sorted(&errors, 0.5),
        q3: stats::quantile_sorted(&errors, 0.75),
        max: errors[errors.len() - 1],
        phi_hat: phi,
    })
}

/// Bootstrap of the mean test error over found solutions.
pub fn mean_error_bootstrap<R: Rng + ?Sized>(
    records: &[TrialRecord],
    resamples: usize,
    rng: &mut R,
) -> Result<BootstrapSummary> {
    let errors = found_errors(records);
    if errors.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(stats::bootstrap_mean(&errors, resamples, rng))
}

/// Histogram of found test errors on `bins` equal bins of `[0, 1]`,
/// normalized to 1.
pub fn empirical_qn(records: &[TrialRecord], bins: usize) -> Result<Vec<f64>> {
    let errors = found_errors(records);
    if errors.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut h = vec![0.0; bins];
    for e in &errors {
        h[((e * bins as f64 + 1e-9).floor() as usize).min(bins - 1)] += 1.0;
    }
    h.iter_mut().for_each(|v| *v /= errors.len() as f64);
    Ok(h)
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Monte-Carlo estimate of the solution volume for one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumePair {
    pub train_seed: u64,
    pub n: usize,
    pub probes: u64,
    pub omega_hat: f64,
    pub omega_eps_hat: f64,
    pub epsilon: f64,
}

impl VolumePair {
    pub const CSV_HEADER: &'static str = "train_seed,n,probes,omega_hat,omega_eps_hat,epsilon";

    pub fn phi_hat(&self) -> Option<f64> {
        (self.omega_hat > 0.0).then(|| self.omega_eps_hat / self.omega_hat)
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.train_seed, self.n, self.probes, self.omega_hat, self.omega_eps_hat, self.epsilon
        )
    }

    pub fn from_csv_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 6 {
            return None;
        }
        Some(VolumePair {
            train_seed: f[0].parse().ok()?,
            n: f[1].parse().ok()?,
            probes: f[2].parse().ok()?,
            omega_hat: f[3].parse().ok()?,
            omega_eps_hat: f[4].parse().ok()?,
            epsilon: f[5].parse().ok()?,
        })
    }
}

/// Smallest error count `k` with `k / total >= threshold`.
fn threshold_count(threshold: f64, total: usize) -> usize {
    let mut k = (threshold * total as f64).ceil().max(0.0) as usize;
    while k > 0 && (k - 1) as f64 / total as f64 >= threshold {
        k -= 1;
    }
    while (k as f64 / total as f64) < threshold {
        k += 1;
    }
    k
}

/// Probes `probes` sphere samples against one training set and returns one
/// [`VolumePair`] per epsilon. Test error is evaluated only for probes with
/// zero training error.
#[allow(clippy::too_many_arguments)]
pub fn estimate_volume_pairs<R: Rng + ?Sized>(
    arch: &Arch,
    train: &LabeledDataset,
    test: &PackedDataset,
    probes: u64,
    epsilons: &[f64],
    e_min: f64,
    train_seed: u64,
    rng: &mut R,
) -> Result<Vec<VolumePair>> {
    if probes == 0 {
        return Err(Error::Precondition("probes must be at least 1".into()));
    }
    check_shapes(arch, train)?;
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total = test.len();
    let thresholds: Vec<usize> = epsilons
        .iter()
        .map(|&eps| threshold_count(e_min + eps, total))
        .collect();
    let mut eval = Evaluator::new(arch);
    let mut batch = BatchEvaluator::new(arch);
    let mut w = vec![0.0; arch.weight_count()];
    let mut accepted = 0u64;
    let mut bad = vec![0u64; epsilons.len()];
    for _ in 0..probes {
        fill_unit_sphere(&mut w, rng);
        if !eval.fits(&w, train) {
            continue;
        }
        accepted += 1;
        let errors = batch.count_errors(&w, test, None);
        for (b, &k) in bad.iter_mut().zip(&thresholds) {
            if errors >= k {
                *b += 1;
            }
        }
    }
    Ok(epsilons
        .iter()
        .zip(bad)
        .map(|(&epsilon, b)| VolumePair {
            train_seed,
            n: train.len(),
            probes,
            omega_hat: accepted as f64 / probes as f64,
            omega_eps_hat: b as f64 / probes as f64,
            epsilon,
        })
        .collect())
}

pub fn estimate_volume_pair<R: Rng + ?Sized>(
    arch: &Arch,
    train: &LabeledDataset,
    test: &LabeledDataset,
    probes: u64,
    epsilon: f64,
    e_min: f64,
    rng: &mut R,
) -> Result<VolumePair> {
    let packed = PackedDataset::new(test);
    let mut v = estimate_volume_pairs(arch, train, &packed, probes, &[epsilon], e_min, 0, rng)?;
    Ok(v.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSettings {
    pub training_sets: usize,
    pub probes: u64,
    pub epsilons: Vec<f64>,
    pub e_min: f64,
    pub seed: u64,
    pub workers: usize,
}

/// Volume pairs for `training_sets` fresh training sets of size `n`,
/// ordered by training-set index and then by epsilon.
pub fn sample_volume_pairs(
    arch: &Arch,
    source: &DataSource,
    test: &LabeledDataset,
    n: usize,
    settings: &VolumeSettings,
) -> Result<Vec<VolumePair>> {
    if settings.training_sets == 0 {
        return Err(Error::Precondition("training_sets must be at least 1".into()));
    }
    check_shapes(arch, test)?;
    let packed = PackedDataset::new(test);
    let per_set = map_indexed(settings.workers, settings.training_sets, |i| {
        let train_stream = streams::id(streams::VOLUME_TRAIN, n as u64, i as u64);
        let mut train_rng = derive_stream(settings.seed, train_stream);
        let mut probe_rng = derive_stream(settings.seed, streams::id(streams::VOLUME_PROBES, n as u64, i as u64));
        let train = source.draw(n, &mut train_rng)?;
        estimate_volume_pairs(
            arch,
            &train,
            &packed,
            settings.probes,
            &settings.epsilons,
            settings.e_min,
            train_stream,
            &mut probe_rng,
        )
    })?;
    let mut out = Vec::new();
    for r in per_set {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationDiagnostic {
    pub epsilon: f64,
    pub usable_pairs: usize,
    /// Sample covariance of `(phi_hat, omega_hat)`.
    pub covariance: f64,
    pub covariance_ci95: Interval,
    /// `<phi_hat>`.
    pub mean_of_ratios: f64,
    /// `<omega_eps_hat> / <omega_hat>`.
    pub ratio_of_means: f64,
    /// Bootstrap sigma of `ratio_of_means - mean_of_ratios`.
    pub difference_sigma: f64,
    /// `mean_of_ratios <= ratio_of_means + 2 * difference_sigma`.
    pub holds: bool,
}

/// Compares `<phi>` with `<omega_eps> / <omega>` over training sets.
/// Pairs with `omega_hat = 0` carry no information about `phi` and are
/// dropped; all pairs must share one epsilon.
pub fn correlation_diagnostic<R: Rng + ?Sized>(
    pairs: &[VolumePair],
    resamples: usize,
    rng: &mut R,
) -> Result<CorrelationDiagnostic> {
    let usable: Vec<&VolumePair> = pairs.iter().filter(|p| p.omega_hat > 0.0).collect();
    if usable.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: usable.len(),
        });
    }
    let epsilon = usable[0].epsilon;
    if usable.iter().any(|p| p.epsilon != epsilon) {
        return Err(Error::Precondition("volume pairs mix several epsilons".into()));
    }
    let omega: Vec<f64> = usable.iter().map(|p| p.omega_hat).collect();
    let omega_eps: Vec<f64> = usable.iter().map(|p| p.omega_eps_hat).collect();
    let phi: Vec<f64> = usable.iter().map(|p| p.omega_eps_hat / p.omega_hat).collect();

    let point = |idx: &[usize]| {
        let (mut s_phi, mut s_om, mut s_oe) = (0.0, 0.0, 0.0);
        for &i in idx {
            s_phi += phi[i];
            s_om += omega[i];
            s_oe += omega_eps[i];
        }
        (s_phi / idx.len() as f64, s_oe / s_om)
    };
    let all: Vec<usize> = (0..usable.len()).collect();
    let (mean_of_ratios, ratio_of_means) = point(&all);
    let covariance = stats::covariance(&phi, &omega);

    let mut cov_reps = Vec::with_capacity(resamples);
    let diff_reps = stats::bootstrap(usable.len(), resamples, rng, |idx| {
        let xs: Vec<f64> = idx.iter().map(|&i| phi[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| omega[i]).collect();
        cov_reps.push(stats::covariance(&xs, &ys));
        let (m, r) = point(idx);
        r - m
    });
    let difference_sigma = stats::summarize_replicates(diff_reps).sigma;
    let covariance_ci95 = stats::summarize_replicates(cov_reps).ci95;
    Ok(CorrelationDiagnostic {
        epsilon,
        usable_pairs: usable.len(),
        covariance,
        covariance_ci95,
        mean_of_ratios,
        ratio_of_means,
        difference_sigma,
        holds: mean_of_ratios <= ratio_of_means + 2.0 * difference_sigma,
    })
}
