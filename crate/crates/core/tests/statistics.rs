use markflow::metrics::{distribution_summary, mark_frequencies};
use markflow::model::corrupt_mark;
use markflow::rng;
use markflow::synthgen::{simulate_hawkes, simulate_poisson, HawkesSpec};

/// Two-sided Kolmogorov–Smirnov statistic against a continuous CDF.
fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// 1% critical value of the one-sample KS test.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

fn paper_hawkes() -> HawkesSpec {
    HawkesSpec::new(vec![0.5, 0.5], vec![vec![0.4, 0.0], vec![0.0, 0.4]], 1.0).unwrap()
}

#[test]
fn poisson_gaps_are_exponential() {
    let s = simulate_poisson(1.0, &[1.0], 20_000, 11).unwrap();
    let d = ks_statistic(s.inter_times().to_vec(), |x| 1.0 - (-x).exp());
    assert!(d < ks_critical(s.len()), "D = {d}");
}

#[test]
fn hawkes_gaps_are_not_exponential() {
    let s = simulate_hawkes(&paper_hawkes(), 20_000, 11);
    let x = s.inter_times().to_vec();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    // clustering makes gaps overdispersed
    assert!(var.sqrt() / mean > 1.05, "cv {}", var.sqrt() / mean);
    let d = ks_statistic(x, |v| 1.0 - (-v / mean).exp());
    assert!(d > ks_critical(s.len()), "D = {d}");
}

#[test]
fn corrupted_marks_follow_the_mixture() {
    let base = [0.2, 0.3, 0.5];
    let t = 0.4;
    let n = 100_000;
    let mut r = rng::stream(2, 0);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[corrupt_mark(0, t, &base, &mut r)] += 1;
    }
    let expected = [0.6 * 0.2 + 0.4, 0.6 * 0.3, 0.6 * 0.5];
    let mut chi2 = 0.0;
    for k in 0..3 {
        let e = expected[k] * n as f64;
        chi2 += (counts[k] as f64 - e).powi(2) / e;
    }
    // chi-square with 2 degrees of freedom, 0.1% tail
    assert!(chi2 < 13.82, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn uniform_marks_have_uniform_frequencies() {
    let seqs: Vec<_> = (0..30)
        .map(|i| simulate_poisson(1.0, &[1.0 / 3.0; 3], 1000, i).unwrap())
        .collect();
    let f = mark_frequencies(&seqs, 3);
    for p in f {
        assert!((p - 1.0 / 3.0).abs() < 0.01, "{p}");
    }
    let d = distribution_summary(&seqs, None).unwrap();
    assert_eq!(d.times.total(), 30_000);
    // everything past the 99th percentile lands in the overflow bin
    let overflow = d.times.overflow as f64 / 30_000.0;
    assert!((overflow - 0.01).abs() < 0.002, "{overflow}");
}
