mod oracles;

use proptest::prelude::*;
use windtunnel::powerlaw::{self, fit_yule_simon, sample_yule_simon, DegreeSample};

fn fit(sample: &DegreeSample) -> powerlaw::PowerLawFit<f64> {
    fit_yule_simon(sample, 1e-10, 2000).unwrap()
}

#[test]
fn fit_agrees_with_grid_search() {
    let mut rng = oracles::rng(21);
    use rand::Rng;
    for i in 0..20 {
        let rho = rng.random_range(0.6..4.0);
        let n = rng.random_range(500..5000);
        let sample = sample_yule_simon(rho, n, i).unwrap();
        let got = fit(&sample);
        let grid = oracles::grid_mle(sample.histogram(), 0.05, 10.0);
        assert!((got.rho - grid).abs() < 2e-3, "rho {rho} n {n}: fit {} grid {grid}", got.rho);
    }
}

#[test]
fn log_likelihood_matches_product_form() {
    let sample = sample_yule_simon(1.3, 2000, 4).unwrap();
    for rho in [0.2, 1.0, 2.5, 7.0] {
        let a: f64 = powerlaw::log_likelihood(&sample, rho).unwrap();
        let b = oracles::yule_simon_loglik(sample.histogram(), rho);
        assert!((a - b).abs() < 1e-7 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn recovers_shape_from_large_sample() {
    let sample = sample_yule_simon(2.0, 100_000, 2024).unwrap();
    let f = fit(&sample);
    assert!((1.95..=2.05).contains(&f.rho), "{}", f.rho);
    assert!((f.gamma - f.rho - 1.0).abs() < 1e-12);
    assert!(f.std_error > 0.0 && f.std_error < 0.05);
}

#[test]
fn sampler_matches_pmf() {
    let n = 200_000;
    let sample = sample_yule_simon(1.5, n, 99).unwrap();
    for k in 1..=5 {
        let p: f64 = powerlaw::yule_simon_pmf(k, 1.5).unwrap();
        let freq = *sample.histogram().get(&k).unwrap_or(&0) as f64 / n as f64;
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 5.0 * sd, "k={k}: {freq} vs {p}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn em_never_decreases_likelihood(rho in 0.3f64..6.0, n in 50usize..3000, seed in any::<u64>()) {
        let f = fit(&sample_yule_simon(rho, n, seed).unwrap());
        for w in f.log_likelihood_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn pmf_sums_to_one(rho in 0.5f64..10.0) {
        let total: f64 = (1..20_000).map(|k| powerlaw::yule_simon_pmf(k, rho).unwrap()).sum();
        // the tail beyond the cutoff is O(k^-rho)
        prop_assert!((total - 1.0).abs() < 20_000f64.powf(-rho) * 2.0 + 1e-9);
    }
}

#[test]
fn degenerate_samples_hit_the_bound() {
    let all_ones = DegreeSample::new(std::iter::repeat_n(1, 100)).unwrap();
    let f = fit(&all_ones);
    assert!(f.boundary_warning);
    assert_eq!(f.rho, powerlaw::RHO_MAX);
}
