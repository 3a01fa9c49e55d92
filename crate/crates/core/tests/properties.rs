use doclab::bounds::{
    bad_fraction_ratio, corollary1_from_doc, mean_bad_volume, mean_bad_volume_bound, predicted_mean_error, qn_predicted,
};
use doclab::data::idx::{encode_images, encode_labels, parse_images, parse_labels, IdxImages};
use doclab::erm::correlation_diagnostic;
use doclab::nn::{empirical_error, predict, BatchEvaluator, PackedDataset};
use doclab::sphere::fill_unit_sphere;
use doclab::{derive_stream, Arch, DocHistogram, EminPolicy, LabeledDataset, Provenance, VolumePair};
use proptest::prelude::*;

const REL: f64 = 1e-12;

fn le(a: f64, b: f64) -> bool {
    a <= b + REL * b.abs().max(1e-300)
}

/// Random histograms with at least one non-empty bin, under either E_min
/// policy. Analytic values never exceed the lowest non-empty bin.
fn histogram() -> impl Strategy<Value = DocHistogram> {
    (10usize..=100)
        .prop_flat_map(|bins| {
            (
                prop::collection::vec(0u64..50, bins),
                0usize..bins,
                any::<bool>(),
                0.0..1.0f64,
            )
        })
        .prop_map(|(mut counts, k, analytic, frac)| {
            if counts.iter().all(|&c| c == 0) {
                counts[k] = 1;
            }
            let h = DocHistogram::from_counts(counts).unwrap();
            if analytic {
                let v = h.e_min_estimate() * frac;
                h.with_policy(EminPolicy::Analytic { value: v })
            } else {
                h
            }
        })
}

fn naive_bad_volume(h: &DocHistogram, n: usize, eps: f64) -> f64 {
    h.masses()
        .iter()
        .enumerate()
        .filter(|&(k, _)| h.is_bad_bin(k, eps))
        .map(|(k, m)| (1.0 - h.bin_mid(k)).powi(n as i32) * m)
        .sum()
}

fn naive_mean_error(h: &DocHistogram, n: usize) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (k, m) in h.masses().iter().enumerate() {
        let w = (1.0 - h.bin_mid(k)).powi(n as i32) * m;
        num += h.bin_mid(k) * w;
        den += w;
    }
    (den > 1e-290).then(|| num / den)
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(64) })]

    #[test]
    fn bound_chain(h in histogram(), n in 0usize..=200, eps_i in 0usize..4, a_i in 0usize..3) {
        let eps = [0.05, 0.1, 0.2, 0.4][eps_i];
        let a = [1.5, 2.0, 4.0][a_i];
        prop_assume!(eps <= 1.0 - h.e_min());
        let v = mean_bad_volume(&h, n, eps).unwrap();
        prop_assert!(le(v, mean_bad_volume_bound(&h, n, eps).unwrap()));
        let ratio = bad_fraction_ratio(&h, n, eps).unwrap();
        let c = corollary1_from_doc(&h, n, eps, a).unwrap();
        prop_assert!(le(ratio, c.tight), "ratio {} tight {}", ratio, c.tight);
        if let Some(e) = c.exp_form {
            prop_assert!(le(c.tight, e));
        }
        prop_assert!((0.0..=1.0).contains(&ratio));
    }

    #[test]
    fn monotone_in_n(h in histogram(), eps_i in 0usize..4) {
        let eps = [0.05, 0.1, 0.2, 0.4][eps_i];
        prop_assume!(eps <= 1.0 - h.e_min());
        let mut last_ratio = f64::INFINITY;
        let mut last_mean = f64::INFINITY;
        for n in 0..=200 {
            let r = bad_fraction_ratio(&h, n, eps).unwrap();
            let m = predicted_mean_error(&h, n).unwrap();
            prop_assert!(le(r, last_ratio), "n={} ratio {} after {}", n, r, last_ratio);
            prop_assert!(le(m, last_mean), "n={} mean {} after {}", n, m, last_mean);
            last_ratio = r;
            last_mean = m;
        }
    }

    #[test]
    fn log_space_matches_naive(h in histogram(), n in 0usize..=200, eps_i in 0usize..4) {
        let eps = [0.05, 0.1, 0.2, 0.4][eps_i];
        prop_assume!(eps <= 1.0 - h.e_min());
        let naive = naive_bad_volume(&h, n, eps);
        let logged = mean_bad_volume(&h, n, eps).unwrap();
        if naive > 1e-290 {
            prop_assert!((naive - logged).abs() <= REL * naive, "{} vs {}", naive, logged);
        }
        if let Some(m) = naive_mean_error(&h, n) {
            let got = predicted_mean_error(&h, n).unwrap();
            prop_assert!((m - got).abs() <= REL * m.max(1e-3));
        }
    }

    #[test]
    fn qn_is_a_distribution(h in histogram(), n in 0usize..=5000) {
        let q = qn_predicted(&h, n).unwrap();
        prop_assert!(q.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn g_is_monotone_and_complements_omega(h in histogram(), e1 in 0.0..1.0f64, e2 in 0.0..1.0f64) {
        let hi = 1.0 - h.e_min();
        let (a, b) = (e1.min(e2) * hi, e1.max(e2) * hi);
        let (ga, gb) = (h.g_epsilon(a).unwrap(), h.g_epsilon(b).unwrap());
        prop_assert!(ga <= gb);
        prop_assert!((ga + h.omega_epsilon(a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn merge_equals_binning_the_union(xs in prop::collection::vec(0.0..=1.0f64, 1..50), ys in prop::collection::vec(0.0..=1.0f64, 1..50)) {
        let mut a = DocHistogram::from_errors(&xs, 20).unwrap();
        a.merge(&DocHistogram::from_errors(&ys, 20).unwrap()).unwrap();
        let all: Vec<f64> = xs.iter().chain(&ys).copied().collect();
        let b = DocHistogram::from_errors(&all, 20).unwrap();
        prop_assert_eq!(a.counts(), b.counts());
        prop_assert_eq!(a.observed_min(), b.observed_min());
    }

    #[test]
    fn histogram_json_round_trip(h in histogram()) {
        prop_assert_eq!(DocHistogram::from_json(&h.to_json()).unwrap(), h);
    }

    #[test]
    fn unit_sphere_samples(seed in any::<u64>(), stream in any::<u64>(), dim in 1usize..300) {
        let mut buf = vec![0.0; dim];
        fill_unit_sphere(&mut buf, &mut derive_stream(seed, stream));
        let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decisions_are_invariant_under_positive_scaling(seed in any::<u64>(), k in -20i32..20) {
        // powers of two scale exactly, so the comparison is free of rounding
        let arch = Arch::with_widths(&[4, 6, 5, 2]).unwrap();
        let mut rng = derive_stream(seed, 0);
        let mut w = vec![0.0; arch.weight_count()];
        fill_unit_sphere(&mut w, &mut rng);
        let mut x = vec![0.0; 4];
        fill_unit_sphere(&mut x, &mut rng);
        let s = 2f64.powi(k);
        let scaled: Vec<f64> = w.iter().map(|v| v * s).collect();
        prop_assert_eq!(predict(&arch, &w, &x).unwrap(), predict(&arch, &scaled, &x).unwrap());
    }

    #[test]
    fn batch_and_scalar_errors_agree(seed in any::<u64>(), len in 1usize..100) {
        let arch = Arch::with_widths(&[3, 7, 2]).unwrap();
        let mut rng = derive_stream(seed, 1);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..len {
            let mut x = vec![0.0; 3];
            fill_unit_sphere(&mut x, &mut rng);
            rows.push(x);
            labels.push((i % 2) as u8);
        }
        let data = LabeledDataset::from_rows(rows, labels, Provenance::Crafted).unwrap();
        let mut w = vec![0.0; arch.weight_count()];
        fill_unit_sphere(&mut w, &mut rng);
        let scalar = empirical_error(&arch, &w, &data).unwrap();
        let packed = PackedDataset::new(&data);
        let batch = BatchEvaluator::new(&arch).count_errors(&w, &packed, None);
        prop_assert_eq!(scalar, batch as f64 / len as f64);
        prop_assert!((0.0..=1.0).contains(&scalar));
    }

    #[test]
    fn idx_round_trip(count in 0usize..6, rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        use rand::RngCore;
        let mut bytes = vec![0u8; count * rows * cols];
        derive_stream(seed, 2).fill_bytes(&mut bytes);
        let images = IdxImages::new(rows, cols, bytes);
        let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
        prop_assert_eq!(parse_images(&encode_images(&images)).unwrap(), images);
        prop_assert_eq!(parse_labels(&encode_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn ratio_gap_is_covariance_over_mean(
        raw in prop::collection::vec((0.001..1.0f64, 0.0..1.0f64), 2..40)
    ) {
        // sum(phi w)/sum(w) - mean(phi) = cov_pop(phi, w) / mean(w)
        let pairs: Vec<VolumePair> = raw.iter().map(|&(w, phi)| VolumePair {
            train_seed: 0, n: 5, probes: 1, omega_hat: w, omega_eps_hat: w * phi, epsilon: 0.1,
        }).collect();
        let d = correlation_diagnostic(&pairs, 20, &mut derive_stream(0, 0)).unwrap();
        let m = raw.len() as f64;
        let mw = raw.iter().map(|p| p.0).sum::<f64>() / m;
        let phis: Vec<f64> = pairs.iter().map(|p| p.omega_eps_hat / p.omega_hat).collect();
        let mphi = phis.iter().sum::<f64>() / m;
        let cov_pop = raw.iter().zip(&phis).map(|(p, f)| (p.0 - mw) * (f - mphi)).sum::<f64>() / m;
        prop_assert!((d.ratio_of_means - d.mean_of_ratios - cov_pop / mw).abs() < 1e-9);
        prop_assert!((d.covariance - cov_pop * m / (m - 1.0)).abs() < 1e-12);
    }
}
