//! Monte Carlo checks of the noise model against closed-form moments.
//!
//! Statistical properties run with a fixed proptest seed so that a 3-SE
//! tolerance cannot flake between runs.

use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use snapdiff::rng::CounterRng;
use snapdiff::simulator::{sample_pixel, simulate_moments, Readout};
use snapdiff::skellam::skellam_moments;
use snapdiff::stats::summarize;
use snapdiff::{ExpectedWells, SensorConfig};

fn draws(plus: f64, minus: f64, cfg: &SensorConfig, readout: Readout, seed: u64, n: u64) -> Vec<f64> {
    (0..n)
        .map(|f| {
            let mut rng = CounterRng::for_pixel(seed, f, 0);
            sample_pixel(plus, minus, cfg, readout, &mut rng)
        })
        .collect()
}

#[test]
fn million_captures_match_forward_moments() {
    let cfg = SensorConfig::new(0.5, 10.0, 1, 1).unwrap();
    let s = summarize(&draws(100.0, 40.0, &cfg, Readout::Snapshot, 2024, 1_000_000));
    assert!((s.mean - 30.0).abs() < 3.0 * s.se_mean, "mean {} ± {}", s.mean, s.se_mean);
    assert!((s.variance - 45.0).abs() < 3.0 * s.se_variance, "var {} ± {}", s.variance, s.se_variance);
}

#[test]
fn low_light_ratio_tends_to_two() {
    let cfg = SensorConfig::new(0.5, 10.0, 32, 32).unwrap();
    let ratio = |level: f64| {
        let wells = ExpectedWells::uniform(32, 32, level, level).unwrap();
        let mean_var = |r, seed| {
            let acc = simulate_moments(&wells, &cfg, seed, 400, r).unwrap();
            acc.iter().map(|m| m.variance()).sum::<f64>() / acc.len() as f64
        };
        mean_var(Readout::Sequential, 1) / mean_var(Readout::Snapshot, 2)
    };
    let (bright, dim, dark) = (ratio(400.0), ratio(10.0), ratio(0.0));
    assert!(bright < dim && dim < dark);
    assert!((dark - 2.0).abs() < 0.05, "{dark}");
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 12,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    })]

    #[test]
    fn sequential_minus_snapshot_is_read_variance(
        plus in 0.0f64..300.0,
        minus in 0.0f64..300.0,
        contrast in 0.1f64..1.0,
        read in 0.0f64..40.0,
        seed in any::<u64>(),
    ) {
        let cfg = SensorConfig::new(contrast, read, 1, 1).unwrap();
        let pre = summarize(&draws(plus, minus, &cfg, Readout::Snapshot, seed, 40_000));
        let post = summarize(&draws(plus, minus, &cfg, Readout::Sequential, seed ^ 1, 40_000));
        let se = pre.se_variance.hypot(post.se_variance);
        prop_assert!((post.variance - pre.variance - read).abs() < 3.0 * se,
            "diff {} vs {read} ± {se}", post.variance - pre.variance);
    }

    #[test]
    fn empirical_moments_converge(
        plus in 0.0f64..2000.0,
        minus in 0.0f64..2000.0,
        contrast in 0.05f64..1.0,
        gain in 0.2f64..4.0,
        read in 0.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let cfg = SensorConfig::new(contrast, read, 1, 1).unwrap().with_gain(gain).unwrap();
        let s = summarize(&draws(plus, minus, &cfg, Readout::Snapshot, seed, 40_000));
        let (mu, var) = skellam_moments(plus, minus, &cfg).unwrap();
        prop_assert!((s.mean - mu).abs() < 3.0 * s.se_mean);
        prop_assert!((s.variance - var).abs() < 3.0 * s.se_variance);
    }
}
