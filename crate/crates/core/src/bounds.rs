//! Closed-form predictions and bounds computed from a [`DocHistogram`].
//!
//! With `D(E)` the density of classifiers, `n` the training-set size and
//! `E_min + eps` the threshold for a "bad" classifier:
//!
//! ```text
//! <omega_eps(S)>  = sum_{E >= E_min+eps} (1-E)^n D(E)            (mean_bad_volume)
//!                <= Omega_eps (1 - (E_min+eps))^n
//! ratio(n, eps)   = <omega_eps(S)> / <omega_0(S)>                (bad_fraction_ratio)
//!                <= Omega_eps / ((1-g) + g e^{(1-1/a) eps n})    (tight, g = g_{eps/a})
//!                <= e^{-(1-1/a) eps n} / g                       (exp_form)
//! E_n             = sum E (1-E)^n D(E) / sum (1-E)^n D(E)         (predicted_mean_error)
//! ```
//!
//! Sums run over histogram bins at their midpoints. Weights `(1-E)^n` are
//! handled as logarithms and combined with a max-shifted exponential sum,
//! since they underflow once `n * E` reaches a few hundred.

use serde::{Deserialize, Serialize};

use crate::doc::DocHistogram;
use crate::{Error, Result};

/// `ln((1 - mid)^n * mass)`, with `(1-1)^n = 0` for `n >= 1`.
fn log_weight(mid: f64, mass: f64, n: usize) -> f64 {
    if mass <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if n == 0 {
        return mass.ln();
    }
    if mid >= 1.0 {
        return f64::NEG_INFINITY;
    }
    n as f64 * (-mid).ln_1p() + mass.ln()
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn log_weights(doc: &DocHistogram, n: usize) -> Vec<f64> {
    doc.masses()
        .into_iter()
        .enumerate()
        .map(|(k, m)| log_weight(doc.bin_mid(k), m, n))
        .collect()
}

fn log_bad_mass(doc: &DocHistogram, weights: &[f64], epsilon: f64) -> f64 {
    let bad: Vec<f64> = weights
        .iter()
        .enumerate()
        .filter(|&(k, _)| doc.is_bad_bin(k, epsilon))
        .map(|(_, &w)| w)
        .collect();
    log_sum_exp(&bad)
}

/// Expected normalized volume of bad zero-training-error solutions,
/// `<omega_eps(S)> / Omega`. Equals `Omega_eps / Omega` at `n = 0`.
pub fn mean_bad_volume(doc: &DocHistogram, n: usize, epsilon: f64) -> Result<f64> {
    doc.check_epsilon(epsilon)?;
    Ok(log_bad_mass(doc, &log_weights(doc, n), epsilon).exp())
}

/// `Omega_eps / Omega * (1 - (E_min + eps))^n`, the right-hand side of the
/// volume bound.
pub fn mean_bad_volume_bound(doc: &DocHistogram, n: usize, epsilon: f64) -> Result<f64> {
    let omega = doc.omega_epsilon(epsilon)?;
    let base = 1.0 - (doc.e_min() + epsilon);
    Ok(omega * base.max(0.0).powi(n as i32))
}

/// `<omega_eps(S)> / <omega(S)>`: the expected share of bad solutions
/// weighted by solution volume.
pub fn bad_fraction_ratio(doc: &DocHistogram, n: usize, epsilon: f64) -> Result<f64> {
    doc.check_epsilon(epsilon)?;
    let weights = log_weights(doc, n);
    let all = log_sum_exp(&weights);
    if all == f64::NEG_INFINITY {
        return Err(Error::DegenerateDoc(format!(
            "no solution volume left at n = {n} (all mass at E = 1)"
        )));
    }
    Ok((log_bad_mass(doc, &weights, epsilon) - all).exp())
}

/// Both forms of the generalized volume-ratio bound for a given `a > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Bound {
    pub tight: f64,
    /// `None` when `g_{eps/a} = 0`.
    pub exp_form: Option<f64>,
}

impl Corollary1Bound {
    pub fn exp_form(&self) -> Result<f64> {
        self.exp_form.ok_or(Error::ZeroGoodFraction)
    }
}

/// `tight = Omega_eps/Omega / ((1 - g) + g e^{(1-1/a) eps n})` and
/// `exp_form = e^{-(1-1/a) eps n} / g` where `g = g_{eps/a}`.
pub fn corollary1_bound(
    g_eps_over_a: f64,
    omega_eps_frac: f64,
    epsilon: f64,
    n: usize,
    a: f64,
) -> Result<Corollary1Bound> {
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::Precondition(format!("a must exceed 1, got {a}")));
    }
    if !(0.0..=1.0).contains(&g_eps_over_a) || !(0.0..=1.0).contains(&omega_eps_frac) {
        return Err(Error::Precondition(format!(
            "fractions must lie in [0, 1], got g = {g_eps_over_a}, omega = {omega_eps_frac}"
        )));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::Precondition(format!(
            "epsilon must be non-negative, got {epsilon}"
        )));
    }
    let rate = (1.0 - 1.0 / a) * epsilon * n as f64;
    if g_eps_over_a == 0.0 {
        return Ok(Corollary1Bound {
            tight: omega_eps_frac,
            exp_form: None,
        });
    }
    let log_g = g_eps_over_a.ln();
    // e^{rate} may overflow to +inf, which correctly drives tight to 0
    let denom = (1.0 - g_eps_over_a) + (log_g + rate).exp();
    Ok(Corollary1Bound {
        tight: omega_eps_frac / denom,
        exp_form: Some((-rate - log_g).exp()),
    })
}

/// [`corollary1_bound`] with `g_{eps/a}` and `Omega_eps / Omega` read off `doc`.
pub fn corollary1_from_doc(doc: &DocHistogram, n: usize, epsilon: f64, a: f64) -> Result<Corollary1Bound> {
    let g = doc.g_epsilon(epsilon / a)?;
    let omega = doc.omega_epsilon(epsilon)?;
    corollary1_bound(g, omega, epsilon, n, a)
}

/// Markov bound on `P(phi_eps(S) >= gamma)`.
pub fn markov_tail(doc: &DocHistogram, n: usize, epsilon: f64, gamma: f64) -> Result<f64> {
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(Error::Precondition(format!("gamma must be positive, got {gamma}")));
    }
    Ok((bad_fraction_ratio(doc, n, epsilon)? / gamma).min(1.0))
}

/// Normalized per-bin weights `(1-E)^n D(E) / sum (1-E)^n D(E)`.
pub fn qn_predicted(doc: &DocHistogram, n: usize) -> Result<Vec<f64>> {
    if doc.total_samples() == 0 {
        return Err(Error::DegenerateDoc("histogram holds no samples".into()));
    }
    let weights = log_weights(doc, n);
    let all = log_sum_exp(&weights);
    if all == f64::NEG_INFINITY {
        return Err(Error::DegenerateDoc(format!(
            "no solution volume left at n = {n} (all mass at E = 1)"
        )));
    }
    Ok(weights.iter().map(|w| (w - all).exp()).collect())
}

/// Predicted mean true error over all zero-training-error solutions and
/// training sets of size `n`.
pub fn predicted_mean_error(doc: &DocHistogram, n: usize) -> Result<f64> {
    let q = qn_predicted(doc, n)?;
    Ok(q.iter().enumerate().map(|(k, p)| doc.bin_mid(k) * p).sum())
}

/// Standard deviation of [`predicted_mean_error`] from Poisson noise in
/// the bin counts (delta method).
pub fn predicted_mean_error_sigma(doc: &DocHistogram, n: usize) -> Result<f64> {
    let q = qn_predicted(doc, n)?;
    let e_n: f64 = q.iter().enumerate().map(|(k, p)| doc.bin_mid(k) * p).sum();
    // dE_n/dc_k = q_k (E_k - E_n) / c_k, Var c_k = c_k
    let var: f64 = doc
        .counts()
        .iter()
        .zip(&q)
        .enumerate()
        .filter(|&(_, (&c, _))| c > 0)
        .map(|(k, (&c, &p))| {
            let d = p * (doc.bin_mid(k) - e_n);
            d * d / c as f64
        })
        .sum();
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    MeanBadVolume,
    Ratio,
    Corollary1Bound,
    Corollary1Exp,
    MarkovTail,
    PredictedMeanError,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::MeanBadVolume => "mean_bad_volume",
            BoundKind::Ratio => "ratio",
            BoundKind::Corollary1Bound => "corollary1_bound",
            BoundKind::Corollary1Exp => "corollary1_exp",
            BoundKind::MarkovTail => "markov_tail",
            BoundKind::PredictedMeanError => "predicted_mean_error",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub epsilon: Option<f64>,
    pub a: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub params: BoundParams,
    pub n_values: Vec<usize>,
    pub values: Vec<f64>,
}

fn required(v: Option<f64>, name: &str, kind: BoundKind) -> Result<f64> {
    v.ok_or_else(|| Error::Precondition(format!("{} needs parameter {name}", kind.as_str())))
}

impl BoundCurve {
    pub fn compute(doc: &DocHistogram, kind: BoundKind, params: BoundParams, n_values: &[usize]) -> Result<Self> {
        let values = n_values
            .iter()
            .map(|&n| match kind {
                BoundKind::MeanBadVolume => mean_bad_volume(doc, n, required(params.epsilon, "epsilon", kind)?),
                BoundKind::Ratio => bad_fraction_ratio(doc, n, required(params.epsilon, "epsilon", kind)?),
                BoundKind::Corollary1Bound => corollary1_from_doc(
                    doc,
                    n,
                    required(params.epsilon, "epsilon", kind)?,
                    required(params.a, "a", kind)?,
                )
                .map(|b| b.tight),
                BoundKind::Corollary1Exp => corollary1_from_doc(
                    doc,
                    n,
                    required(params.epsilon, "epsilon", kind)?,
                    required(params.a, "a", kind)?,
                )?
                .exp_form(),
                BoundKind::MarkovTail => markov_tail(
                    doc,
                    n,
                    required(params.epsilon, "epsilon", kind)?,
                    required(params.gamma, "gamma", kind)?,
                ),
                BoundKind::PredictedMeanError => predicted_mean_error(doc, n),
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(BoundCurve {
            kind,
            params,
            n_values: n_values.to_vec(),
            values,
        })
    }

    pub const CSV_HEADER: &'static str = "n,value,kind,epsilon,a,gamma";

    /// CSV rows (without header) in `n,value,kind,epsilon,a,gamma` order;
    /// parameters that do not apply are left empty.
    pub fn csv_rows(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::new();
        for (n, v) in self.n_values.iter().zip(&self.values) {
            out.push_str(&format!(
                "{n},{v},{},{},{},{}\n",
                self.kind.as_str(),
                opt(self.params.epsilon),
                opt(self.params.a),
                opt(self.params.gamma)
            ));
        }
        out
    }
}

pub fn curves_to_csv(curves: &[BoundCurve]) -> String {
    let mut out = format!("{}\n", BoundCurve::CSV_HEADER);
    for c in curves {
        out.push_str(&c.csv_rows());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doc::EminPolicy;

    fn hist(counts: Vec<u64>, e_min: f64) -> DocHistogram {
        DocHistogram::from_counts(counts)
            .unwrap()
            .with_policy(EminPolicy::Analytic { value: e_min })
    }

    fn single_bin(k: usize, bins: usize) -> DocHistogram {
        let mut c = vec![0; bins];
        c[k] = 10;
        hist(c, 0.0)
    }

    #[test]
    fn zero_n_gives_omega_eps() {
        let h = hist((0..100).map(|k| (k % 7) as u64 + 1).collect(), 0.02);
        for eps in [0.0, 0.1, 0.3] {
            let omega = h.omega_epsilon(eps).unwrap();
            assert!((mean_bad_volume(&h, 0, eps).unwrap() - omega).abs() < 1e-12);
            assert!((bad_fraction_ratio(&h, 0, eps).unwrap() - omega).abs() < 1e-12);
            assert!((markov_tail(&h, 0, eps, 1.0).unwrap() - omega).abs() < 1e-12);
        }
    }

    #[test]
    fn single_bin_closed_form() {
        let h = single_bin(35, 100);
        let e0: f64 = 0.355;
        for n in [0, 1, 7, 40, 300] {
            let v = mean_bad_volume(&h, n, 0.2).unwrap();
            let expect = (1.0 - e0).powi(n as i32);
            assert!((v - expect).abs() <= 1e-13 * expect, "n={n}: {v} vs {expect}");
            assert!((predicted_mean_error(&h, n).unwrap() - e0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_bin_mean_error_matches_exact_two_term_formula() {
        // 5 bins: midpoints 0.1, 0.3, 0.5, 0.7, 0.9; masses 0.1 at E=0.1, 0.9 at E=0.5
        let h = hist(vec![1, 0, 9, 0, 0], 0.0);
        // exact: (0.1*0.1*0.9^20 + 0.9*0.5*0.5^20) / (0.1*0.9^20 + 0.9*0.5^20)
        // evaluated with integers: 0.9^20 = 9^20/10^20, 0.5^20 = 5^20/10^20
        let a = 9u128.pow(20);
        let b = 5u128.pow(20);
        let num = a + 45 * b; // common factor 10^-22 cancels
        let den = 10 * a + 90 * b;
        let expect = num as f64 / den as f64;
        let got = predicted_mean_error(&h, 20).unwrap();
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
    }

    #[test]
    fn qn_is_normalized_and_consistent() {
        let h = hist((0..100).map(|k| ((k * 37) % 11) as u64).collect(), 0.0);
        for n in [0, 3, 30, 500] {
            let q = qn_predicted(&h, n).unwrap();
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let m: f64 = q.iter().enumerate().map(|(k, p)| h.bin_mid(k) * p).sum();
            assert!((m - predicted_mean_error(&h, n).unwrap()).abs() < 1e-12);
        }
        for (q, m) in qn_predicted(&h, 0).unwrap().iter().zip(h.masses()) {
            assert!((q - m).abs() < 1e-15);
        }
    }

    #[test]
    fn qn_concentrates_on_lowest_bin() {
        let h = hist(
            (0..100).map(|k| if (20..80).contains(&k) { 5 } else { 0 }).collect(),
            0.0,
        );
        let mut last = usize::MAX;
        for n in [0, 5, 20, 100, 1000, 5000] {
            let q = qn_predicted(&h, n).unwrap();
            let argmax = q.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert!(argmax <= last);
            last = argmax;
        }
        assert_eq!(last, 20);
    }

    #[test]
    fn degenerate_histogram() {
        let mut c = vec![0; 10];
        c[9] = 4;
        // midpoints never reach 1, so the E = 1 case is checked on log_weight
        let h = hist(c, 0.0);
        assert!(predicted_mean_error(&h, 10).is_ok());
        assert_eq!(log_weight(1.0, 0.5, 3), f64::NEG_INFINITY);
        assert_eq!(log_weight(1.0, 0.5, 0), 0.5f64.ln());
        let empty = DocHistogram::from_counts(vec![0; 10]).unwrap();
        assert!(matches!(predicted_mean_error(&empty, 1), Err(Error::DegenerateDoc(_))));
    }

    #[test]
    fn corollary1_special_cases() {
        let b = corollary1_bound(0.3, 0.7, 0.2, 0, 2.0).unwrap();
        assert!((b.tight - 0.7).abs() < 1e-15);
        assert!((b.exp_form().unwrap() - 1.0 / 0.3).abs() < 1e-12);
        let z = corollary1_bound(0.0, 0.7, 0.2, 10, 2.0).unwrap();
        assert!(matches!(z.exp_form(), Err(Error::ZeroGoodFraction)));
        assert!(corollary1_bound(0.3, 0.7, 0.2, 10, 1.0).is_err());
        // a = 2 reproduces e^{-eps n / 2} / g
        let c = corollary1_bound(0.25, 0.9, 0.2, 30, 2.0).unwrap();
        assert!((c.exp_form.unwrap() - (-3.0f64).exp() / 0.25).abs() < 1e-12);
        assert!((c.tight - 0.9 / (0.75 + 0.25 * 3.0f64.exp())).abs() < 1e-12);
        // huge n: tight underflows to 0 rather than NaN
        let big = corollary1_bound(0.25, 0.9, 0.4, 100_000, 2.0).unwrap();
        assert_eq!(big.tight, 0.0);
    }

    #[test]
    fn corollary1_tight_decreases_in_a() {
        // fixed g: the rate (1 - 1/a) grows with a
        let mut last = f64::INFINITY;
        for a in [1.5, 2.0, 4.0, 8.0] {
            let t = corollary1_bound(0.2, 0.8, 0.3, 25, a).unwrap().tight;
            let direct = 0.8 / (0.8 + 0.2 * ((1.0 - 1.0 / a) * 0.3 * 25.0f64).exp());
            assert!((t - direct).abs() < 1e-14);
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn curve_csv() {
        let h = hist((0..100).map(|k| (k % 3) as u64 + 1).collect(), 0.0);
        let c = BoundCurve::compute(
            &h,
            BoundKind::MarkovTail,
            BoundParams {
                epsilon: Some(0.2),
                gamma: Some(0.5),
                a: None,
            },
            &[0, 1, 2],
        )
        .unwrap();
        let csv = curves_to_csv(&[c]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,value,kind,epsilon,a,gamma");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1,markov_tail,0.2,,0.5"));
        assert!(BoundCurve::compute(&h, BoundKind::Ratio, BoundParams::default(), &[1]).is_err());
    }
}
