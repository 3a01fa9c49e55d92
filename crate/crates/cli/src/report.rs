//! `report.json`: everything a reader needs to judge a run, computed only
//! from the stored artifacts (`doc.json`, `trials.csv`, `volumes.csv`) so
//! that any number in it can be recomputed independently.

use doclab::bounds::{
    bad_fraction_ratio, corollary1_from_doc, markov_tail, mean_bad_volume, mean_bad_volume_bound, predicted_mean_error,
    predicted_mean_error_sigma,
};
use doclab::erm::{
    correlation_diagnostic, found_errors, phi_hat, summarize_qn, CorrelationDiagnostic, DEFAULT_RESAMPLES,
};
use doclab::sphere::streams;
use doclab::stats::{bootstrap_mean, BootstrapSummary, Interval};
use doclab::{derive_stream, DocHistogram, EminPolicy, QnSummary, TrialRecord, VolumePair, GENERATOR_NAME};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// Bootstrap stream indices under `streams::BOOTSTRAP` (major = n).
mod boot {
    pub const MEAN: u64 = 0;
    pub const FIRST_DRAW: u64 = 1;
    pub const INVERSE_TRIALS: u64 = 2;
    pub const PHI: u64 = 16;
    pub const CORRELATION: u64 = 64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    /// The experiment config without `workers`, which never affects results.
    pub config: serde_json::Value,
    pub doc: DocSummary,
    pub per_n: Vec<NRow>,
    pub correlation: Vec<CorrelationRow>,
    pub provenance: ReportProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocSummary {
    pub bins: usize,
    pub total_samples: u64,
    pub e_min: f64,
    pub e_min_policy: EminPolicy,
    pub e_min_estimate: f64,
    pub observed_min: f64,
    pub g_table: Vec<GRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GRow {
    pub epsilon: f64,
    pub g_epsilon: f64,
    pub omega_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NRow {
    pub n: usize,
    pub trials: usize,
    /// `None` when every trial exhausted its budget.
    pub empirical: Option<Empirical>,
    pub predicted_mean_error: Option<f64>,
    /// Poisson uncertainty of the prediction from finite DOC bin counts.
    pub predicted_sigma: Option<f64>,
    /// `empirical mean <= predicted + 3 * bootstrap sigma`.
    pub mean_bound_satisfied: Option<bool>,
    /// `<omega(S)> / Omega` predicted from the DOC.
    pub predicted_mean_volume: Option<f64>,
    pub epsilons: Vec<EpsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Empirical {
    pub summary: QnSummary,
    pub mean_bootstrap: BootstrapSummary,
    /// Fraction of trials whose first draw already fitted; unbiased for
    /// `<omega(S)> / Omega`.
    pub first_draw_rate: f64,
    pub first_draw_ci95: Interval,
    /// Mean of `1 / trials_to_hit` over found trials.
    pub mean_inverse_trials: f64,
    pub mean_inverse_trials_ci95: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub epsilon: f64,
    pub phi_hat: Option<f64>,
    pub phi_sigma: Option<f64>,
    pub ratio: Option<f64>,
    /// `phi_hat <= ratio + 3 * bootstrap sigma`.
    pub ratio_bound_satisfied: Option<bool>,
    pub mean_bad_volume: Option<f64>,
    pub mean_bad_volume_bound: Option<f64>,
    pub corollary1: Vec<Corollary1Row>,
    pub markov: Vec<MarkovRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Row {
    pub a: f64,
    pub tight: f64,
    pub exp_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovRow {
    pub gamma: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub n: usize,
    pub epsilon: f64,
    pub training_sets: usize,
    pub mean_omega_hat: f64,
    pub predicted_mean_volume: Option<f64>,
    pub diagnostic: Option<CorrelationDiagnostic>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportProvenance {
    pub seed: u64,
    pub generator: String,
    pub dataset_id: String,
    pub doclab_version: String,
    /// Present only when the config sets `record_timing`.
    pub wall_time_ms: Option<u64>,
}

fn boot_rng(n: usize, index: u64, seed: u64) -> doclab::RngStream {
    derive_stream(seed, streams::id(streams::BOOTSTRAP, n as u64, index))
}

fn indicator_bootstrap(values: &[f64], n: usize, index: u64, seed: u64) -> (f64, BootstrapSummary) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (
        mean,
        bootstrap_mean(values, DEFAULT_RESAMPLES, &mut boot_rng(n, index, seed)),
    )
}

fn config_echo(config: &ExperimentConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(config).expect("config serializes");
    if let Some(obj) = v.as_object_mut() {
        obj.remove("workers");
    }
    v
}

fn empirical(records: &[TrialRecord], e_min: f64, epsilons: &[f64], seed: u64) -> Option<Empirical> {
    let summary = summarize_qn(records, e_min, epsilons).ok()?;
    let n = summary.n;
    let errors = found_errors(records);
    let mean_bootstrap = bootstrap_mean(&errors, DEFAULT_RESAMPLES, &mut boot_rng(n, boot::MEAN, seed));
    let found: Vec<&TrialRecord> = records.iter().filter(|r| r.found()).collect();
    let first: Vec<f64> = found
        .iter()
        .map(|r| f64::from(u8::from(r.trials_to_hit == 1)))
        .collect();
    let inverse: Vec<f64> = found.iter().map(|r| 1.0 / r.trials_to_hit as f64).collect();
    let (first_draw_rate, first_b) = indicator_bootstrap(&first, n, boot::FIRST_DRAW, seed);
    let (mean_inverse_trials, inv_b) = indicator_bootstrap(&inverse, n, boot::INVERSE_TRIALS, seed);
    Some(Empirical {
        summary,
        mean_bootstrap,
        first_draw_rate,
        first_draw_ci95: first_b.ci95,
        mean_inverse_trials,
        mean_inverse_trials_ci95: inv_b.ci95,
    })
}

fn eps_row(
    config: &ExperimentConfig,
    doc: &DocHistogram,
    n: usize,
    epsilon: f64,
    errors: &[f64],
    index: u64,
) -> EpsRow {
    let e_min = doc.e_min();
    let (phi, phi_sigma) = if errors.is_empty() {
        (None, None)
    } else {
        let bad: Vec<f64> = errors
            .iter()
            .map(|&e| f64::from(u8::from(e >= e_min + epsilon)))
            .collect();
        let b = bootstrap_mean(
            &bad,
            DEFAULT_RESAMPLES,
            &mut boot_rng(n, boot::PHI + index, config.seed),
        );
        (Some(phi_hat(errors, e_min, epsilon)), Some(b.sigma))
    };
    let ratio = bad_fraction_ratio(doc, n, epsilon).ok();
    let satisfied = match (phi, phi_sigma, ratio) {
        (Some(p), Some(s), Some(r)) => Some(p <= r + 3.0 * s),
        _ => None,
    };
    EpsRow {
        epsilon,
        phi_hat: phi,
        phi_sigma,
        ratio,
        ratio_bound_satisfied: satisfied,
        mean_bad_volume: mean_bad_volume(doc, n, epsilon).ok(),
        mean_bad_volume_bound: mean_bad_volume_bound(doc, n, epsilon).ok(),
        corollary1: config
            .bounds
            .a_values
            .iter()
            .filter_map(|&a| {
                corollary1_from_doc(doc, n, epsilon, a).ok().map(|c| Corollary1Row {
                    a,
                    tight: c.tight,
                    exp_form: c.exp_form,
                })
            })
            .collect(),
        markov: config
            .bounds
            .gammas
            .iter()
            .filter_map(|&gamma| {
                markov_tail(doc, n, epsilon, gamma)
                    .ok()
                    .map(|bound| MarkovRow { gamma, bound })
            })
            .collect(),
    }
}

/// Builds the report. `trials` must hold the records of every
/// `qn.n_values` entry; `volumes` may be empty.
pub fn build_report(
    config: &ExperimentConfig,
    doc: &DocHistogram,
    trials: &[TrialRecord],
    volumes: &[VolumePair],
    wall_time_ms: Option<u64>,
) -> Report {
    let e_min = doc.e_min();
    let g_table = config
        .bounds
        .epsilons
        .iter()
        .filter_map(|&epsilon| {
            Some(GRow {
                epsilon,
                g_epsilon: doc.g_epsilon(epsilon).ok()?,
                omega_epsilon: doc.omega_epsilon(epsilon).ok()?,
            })
        })
        .collect();
    let per_n = config
        .qn
        .n_values
        .iter()
        .map(|&n| {
            let records: Vec<TrialRecord> = trials.iter().filter(|r| r.n == n).cloned().collect();
            let emp = empirical(&records, e_min, &config.qn.epsilons, config.seed);
            let predicted = predicted_mean_error(doc, n).ok();
            let errors = found_errors(&records);
            NRow {
                n,
                trials: records.len(),
                mean_bound_satisfied: match (&emp, predicted) {
                    (Some(e), Some(p)) => Some(e.summary.mean <= p + 3.0 * e.mean_bootstrap.sigma),
                    _ => None,
                },
                empirical: emp,
                predicted_mean_error: predicted,
                predicted_sigma: predicted_mean_error_sigma(doc, n).ok(),
                predicted_mean_volume: mean_bad_volume(doc, n, 0.0).ok(),
                epsilons: config
                    .qn
                    .epsilons
                    .iter()
                    .enumerate()
                    .map(|(i, &eps)| eps_row(config, doc, n, eps, &errors, i as u64))
                    .collect(),
            }
        })
        .collect();
    let mut correlation = Vec::new();
    if let Some(vol) = &config.volumes {
        for &n in &vol.n_values {
            for (i, &epsilon) in vol.epsilons.iter().enumerate() {
                let pairs: Vec<VolumePair> = volumes
                    .iter()
                    .filter(|p| p.n == n && p.epsilon == epsilon)
                    .cloned()
                    .collect();
                let mean_omega_hat = if pairs.is_empty() {
                    0.0
                } else {
                    pairs.iter().map(|p| p.omega_hat).sum::<f64>() / pairs.len() as f64
                };
                let mut rng = boot_rng(n, boot::CORRELATION + i as u64, config.seed);
                let (diagnostic, error) = match correlation_diagnostic(&pairs, DEFAULT_RESAMPLES, &mut rng) {
                    Ok(d) => (Some(d), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                correlation.push(CorrelationRow {
                    n,
                    epsilon,
                    training_sets: pairs.len(),
                    mean_omega_hat,
                    predicted_mean_volume: mean_bad_volume(doc, n, 0.0).ok(),
                    diagnostic,
                    error,
                });
            }
        }
    }
    Report {
        schema_version: SCHEMA_VERSION,
        config: config_echo(config),
        doc: DocSummary {
            bins: doc.bin_count(),
            total_samples: doc.total_samples(),
            e_min,
            e_min_policy: doc.e_min_policy(),
            e_min_estimate: doc.e_min_estimate(),
            observed_min: doc.observed_min(),
            g_table,
        },
        per_n,
        correlation,
        provenance: ReportProvenance {
            seed: config.seed,
            generator: GENERATOR_NAME.to_string(),
            dataset_id: doc.dataset_id().to_string(),
            doclab_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_ms: if config.record_timing { wall_time_ms } else { None },
        },
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Human-readable per-n table.
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "e_min = {:.5} ({:?}), DOC samples = {}\n{:>4} {:>6} {:>9} {:>9} {:>9} {:>9}  ok\n",
            self.doc.e_min,
            self.doc.e_min_policy,
            self.doc.total_samples,
            "n",
            "found",
            "mean",
            "sigma",
            "pred",
            "pred_sig"
        );
        for row in &self.per_n {
            let (found, mean, sigma) = row.empirical.as_ref().map_or((0, f64::NAN, f64::NAN), |e| {
                (e.summary.found, e.summary.mean, e.mean_bootstrap.sigma)
            });
            out.push_str(&format!(
                "{:>4} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  {}\n",
                row.n,
                found,
                mean,
                sigma,
                row.predicted_mean_error.unwrap_or(f64::NAN),
                row.predicted_sigma.unwrap_or(f64::NAN),
                match row.mean_bound_satisfied {
                    Some(true) => "yes",
                    Some(false) => "NO",
                    None => "-",
                }
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use std::path::Path;

    fn config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
name = "t"
seed = 5
workers = 3
[problem]
kind = "gaussian"
test_size = 100
[arch]
layer_widths = [10, 2]
[doc]
samples = 10
[qn]
n_values = [1, 2]
trials_per_n = 3
"#,
            Path::new("."),
        )
        .unwrap()
    }

    fn rec(n: usize, id: u64, e: Option<f64>, t: u64) -> TrialRecord {
        TrialRecord {
            trial_id: id,
            n,
            train_seed: 0,
            trials_to_hit: t,
            test_error: e,
            wall_time_ms: 0,
            single_class: false,
        }
    }

    #[test]
    fn rows_follow_the_config_and_flags_recompute() {
        let mut counts = vec![0u64; 10];
        counts[1] = 5;
        counts[4] = 5;
        let doc = DocHistogram::from_counts(counts)
            .unwrap()
            .with_policy(EminPolicy::Analytic { value: 0.0 });
        let trials = vec![
            rec(1, 0, Some(0.15), 1),
            rec(1, 1, Some(0.45), 2),
            rec(1, 2, Some(0.15), 4),
            rec(2, 0, None, 10),
            rec(2, 1, None, 10),
            rec(2, 2, None, 10),
        ];
        let r = build_report(&config(), &doc, &trials, &[], Some(99));
        assert_eq!(r.per_n.len(), 2);
        assert!(r.config.get("workers").is_none());
        assert_eq!(r.provenance.wall_time_ms, None);
        let row = &r.per_n[0];
        let e = row.empirical.as_ref().unwrap();
        assert!((e.summary.mean - 0.25).abs() < 1e-15);
        assert!((e.first_draw_rate - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.mean_inverse_trials - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-15);
        let pred = row.predicted_mean_error.unwrap();
        assert_eq!(
            row.mean_bound_satisfied,
            Some(e.summary.mean <= pred + 3.0 * e.mean_bootstrap.sigma)
        );
        assert!(r.per_n[1].empirical.is_none());
        assert_eq!(r.per_n[1].mean_bound_satisfied, None);
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }
}
