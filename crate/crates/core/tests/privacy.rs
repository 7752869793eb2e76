use proptest::prelude::*;
use qkd_core::bits::xor;
use qkd_core::privacy::*;
use qkd_core::seed::Seed;
use rand::Rng;

/// Poisson terms built by repeated multiplication, summed over `range`.
fn series(m: f64, range: std::ops::RangeInclusive<u32>) -> f64 {
    let mut term = (-m).exp();
    let mut sum = 0.0;
    for n in 0..=*range.end() {
        if n > 0 {
            term *= m / n as f64;
        }
        if range.contains(&n) {
            sum += term;
        }
    }
    sum
}

fn multi_oracle(m: f64) -> f64 {
    series(m, 2..=50)
}

fn secure_oracle(m: f64, t: f64) -> f64 {
    1.0 - multi_oracle(m) / (series(m, 1..=50) * t)
}

const MS: [f64; 5] = [0.05, 0.1, 0.3, 0.5, 1.0];
const TS: [f64; 3] = [0.5, 0.8, 1.0];

#[test]
fn multi_photon_probability_matches_series() {
    for m in MS {
        assert!((poisson_multi_prob(m) - multi_oracle(m)).abs() < 1e-6, "M={m}");
    }
    assert!((poisson_multi_prob(0.3) - 0.036936).abs() < 1e-6);
}

#[test]
fn secure_fraction_matches_series() {
    for m in MS {
        for t in TS {
            let want = secure_oracle(m, t).clamp(0.0, 1.0);
            assert!((secure_fraction(m, t) - want).abs() < 1e-6, "M={m} T={t}");
        }
    }
    assert!((secure_fraction(0.3, 1.0) - 0.85749).abs() < 1e-5);
}

#[test]
fn secure_fraction_falls_with_mean_photon_number() {
    for t in TS {
        let grid: Vec<f64> = (0..=95).map(|k| 0.05 + 0.01 * k as f64).collect();
        for w in grid.windows(2) {
            assert!(secure_fraction(w[1], t) <= secure_fraction(w[0], t), "T={t} M={}", w[1]);
        }
    }
}

#[test]
fn poisson_terms_sum_to_one() {
    for k in 1..=200 {
        let m = 0.01 * k as f64;
        let total = poisson_pmf(m, 0) + poisson_pmf(m, 1) + poisson_multi_prob(m);
        assert!((total - 1.0).abs() < 1e-12, "M={m}");
    }
}

fn inputs(n_rec: u64, n_err: u64, epsilon: f64) -> YieldInputs {
    YieldInputs {
        n_rec,
        n_err,
        epsilon,
        e_ec: 0.5,
        mean_photon_number: 0.3,
        channel_transmission: 1.0,
        safety_margin_bits: 100,
    }
}

#[test]
fn default_operating_point_length() {
    let y = inputs(16_875, 4_219, 0.027);
    let b = secure_oracle(0.3, 1.0);
    let x = 0.027 / b;
    let h = (1.0 + 4.0 * x - 4.0 * x * x).ln() / std::f64::consts::LN_2;
    let want = ((16_875.0 - 4_219.0) * b * (0.5 - h) - 100.0).floor();
    assert_eq!(final_length(&y) as f64, want);
    assert!((3_400..3_650).contains(&final_length(&y)));
}

#[test]
fn error_beyond_half_of_b_yields_nothing() {
    let b = secure_fraction(0.3, 1.0);
    for frac in [0.5, 0.6, 0.9] {
        let e = frac * b;
        assert!(information_bracket(e, b, 1.0) <= 1e-12);
        assert_eq!(final_length(&inputs(100_000, 0, e)), 0);
    }
}

#[test]
fn empty_output() {
    let key = vec![1u8; 300];
    assert!(compress(&key, 0, Seed::from_u64(1)).unwrap().is_empty());
}

#[test]
fn identity_toeplitz() {
    let n = 200;
    let mut d = vec![0u8; 2 * n - 1];
    d[n - 1] = 1;
    let h = ToeplitzHash::from_diagonals(n, n, d).unwrap();
    let mut rng = Seed::from_u64(2).rng();
    let key: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    assert_eq!(h.apply(&key).unwrap(), key);
}

#[test]
fn output_longer_than_input_rejected() {
    assert!(compress(&[0, 1, 1], 4, Seed::from_u64(3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn compression_is_linear(seed in any::<u64>(), n in 1usize..700, frac in 0.0f64..1.0) {
        let out = (n as f64 * frac) as usize;
        let mut rng = Seed::from_u64(seed ^ 1).rng();
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let s = Seed::from_u64(seed);
        let ca = compress(&a, out, s).unwrap();
        let cb = compress(&b, out, s).unwrap();
        prop_assert_eq!(compress(&xor(&a, &b), out, s).unwrap(), xor(&ca, &cb));
        prop_assert_eq!(ca.len(), out);
    }

    #[test]
    fn final_length_monotone(
        n_rec in 1_000u64..200_000,
        err_frac in 0.0f64..0.5,
        eps in 0.0f64..0.6,
        d_rec in 0u64..10_000,
        d_err in 0u64..1_000,
        d_eps in 0.0f64..0.05,
    ) {
        let n_err = (n_rec as f64 * err_frac) as u64;
        let base = final_length(&inputs(n_rec, n_err, eps));
        prop_assert!(final_length(&inputs(n_rec, n_err, eps + d_eps)) <= base);
        prop_assert!(final_length(&inputs(n_rec, n_err + d_err, eps)) <= base);
        prop_assert!(final_length(&inputs(n_rec + d_rec, n_err, eps)) >= base);
    }
}
