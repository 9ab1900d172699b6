use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relshift::stats::{paired_t_test, student_t_cdf, TTestOutcome};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Reference route: statistic by hand, p from statrs' Student t.
fn reference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    (t, 2.0 * dist.cdf(-t.abs()))
}

#[test]
fn matches_statrs_on_random_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let n = rng.random_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let b: Vec<f64> = a.iter().map(|x| x + rng.random_range(-12.0..10.0)).collect();
        let (t, p) = reference(&a, &b);
        match paired_t_test(&a, &b).unwrap() {
            TTestOutcome::Regular { t: got_t, p: got_p } => {
                assert!((got_t - t).abs() <= 1e-6 * t.abs().max(1.0), "t {got_t} vs {t}");
                assert!((got_p - p).abs() <= 1e-6, "p {got_p} vs {p}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

proptest! {
    #[test]
    fn cdf_matches_statrs(t in -40.0f64..40.0, dof in 1u32..200) {
        let want = StudentsT::new(0.0, 1.0, dof as f64).unwrap().cdf(t);
        prop_assert!((student_t_cdf(t, dof as f64) - want).abs() < 1e-9);
    }
}

#[test]
fn identical_samples_give_zero_and_one() {
    let a = [3.0, 1.5, 9.0, 4.25];
    let out = paired_t_test(&a, &a).unwrap();
    assert_eq!(out.statistic(), 0.0);
    assert_eq!(out.p_value(), 1.0);
}

#[test]
fn constant_shift_is_degenerate() {
    let b: Vec<f64> = (0..15).map(|i| i as f64 * 1.7).collect();
    let a: Vec<f64> = b.iter().map(|x| x + 1.0).collect();
    match paired_t_test(&a, &b).unwrap() {
        TTestOutcome::ZeroVariance { mean_difference, p } => {
            assert!((mean_difference - 1.0).abs() < 1e-12);
            assert_eq!(p, 0.0);
        }
        other => panic!("expected the degenerate case, got {other:?}"),
    }
}

#[test]
fn rejects_short_or_ragged_input() {
    assert!(paired_t_test(&[1.0], &[2.0]).is_err());
    assert!(paired_t_test(&[1.0, 2.0], &[2.0]).is_err());
}
