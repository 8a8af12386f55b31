//! Small deterministic numeric helpers shared across modules.

/// Pairwise (cascade) summation.
///
/// The split points depend only on the slice length, so the result is a pure
/// function of the input values and independent of thread count or iteration
/// batching. Used wherever Monte Carlo reductions must be reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean via pairwise summation; 0 for an empty slice.
pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (n−1 denominator) via pairwise summation of
/// squared deviations; 0 when fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = pairwise_mean(xs);
    let sq: Vec<f64> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

/// Standard error of the mean: sample std divided by sqrt(len).
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    sample_std(xs) / (xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_sequential_on_small_input() {
        let xs = [1.0, 2.0, 3.5, -0.5];
        assert_eq!(pairwise_sum(&xs), 6.0);
        assert_eq!(pairwise_mean(&xs), 1.5);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
    }

    #[test]
    fn pairwise_sum_close_to_kahan_reference() {
        // Alternating large/small magnitudes: pairwise must stay within a few
        // ulps of a compensated reference sum.
        let xs: Vec<f64> = (0..10_000)
            .map(|i| if i % 2 == 0 { 1.0e8 } else { 0.123_456_789 })
            .collect();
        let mut kahan = 0.0f64;
        let mut c = 0.0f64;
        for &x in &xs {
            let y = x - c;
            let t = kahan + y;
            c = (t - kahan) - y;
            kahan = t;
        }
        let rel = ((pairwise_sum(&xs) - kahan) / kahan).abs();
        assert!(rel < 1e-12, "rel err {rel}");
    }

    #[test]
    fn std_matches_two_point_formula() {
        // std of {a, b} is |a-b|/sqrt(2)
        let xs = [1.0, 3.0];
        assert!((sample_std(&xs) - 2.0f64 / 2.0f64.sqrt()).abs() < 1e-15);
        assert_eq!(sample_std(&[5.0]), 0.0);
    }

    #[test]
    fn empty_inputs_are_zero() {
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_mean(&[]), 0.0);
        assert_eq!(std_error(&[]), 0.0);
    }

    mod properties {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            // Pairwise summation agrees with a compensated reference to
            // near machine precision on arbitrary bounded inputs.
            #[test]
            fn pairwise_tracks_compensated_sum(xs in prop::collection::vec(-1.0e6f64..1.0e6, 0..300)) {
                let mut kahan = 0.0f64;
                let mut c = 0.0f64;
                for &x in &xs {
                    let y = x - c;
                    let t = kahan + y;
                    c = (t - kahan) - y;
                    kahan = t;
                }
                let scale = xs.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
                prop_assert!((pairwise_sum(&xs) - kahan).abs() <= 1e-9 * scale);
            }

            // The mean lies between the extremes and the standard
            // deviation is shift-invariant.
            #[test]
            fn mean_bounded_and_std_shift_invariant(
                xs in prop::collection::vec(-1.0e3f64..1.0e3, 2..100),
                shift in -1.0e3f64..1.0e3,
            ) {
                let m = pairwise_mean(&xs);
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
                let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
                prop_assert!((sample_std(&xs) - sample_std(&shifted)).abs() <= 1e-7);
            }
        }
    }
}
