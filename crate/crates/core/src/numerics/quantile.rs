use crate::{Error, Result};

// Guards the rank computation against representation error in (n + 1) * level,
// e.g. 20 * 0.95 landing a hair above 19.
const RANK_EPS: f64 = 1e-9;

/// 1-based order-statistic rank used by [`conformal_quantile`].
///
/// Upper-tail levels (`level >= 0.5`) use `ceil((n + 1) * level)` clamped to
/// `n`; lower-tail levels use `floor((n + 1) * level)` clamped to at least 1.
pub fn conformal_rank(n: usize, level: f64) -> usize {
    debug_assert!(n > 0);
    let pos = (n as f64 + 1.0) * level;
    if level >= 0.5 {
        ((pos - RANK_EPS).ceil() as usize).clamp(1, n)
    } else {
        ((pos + RANK_EPS).floor() as usize).clamp(1, n)
    }
}

/// Finite-sample conformal quantile of `scores` at `level`.
///
/// Returns an element of `scores` (an order statistic), never an
/// interpolated value, so the marginal coverage guarantee holds exactly
/// under exchangeability.
pub fn conformal_quantile(scores: &[f64], level: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile level {level} outside (0, 1)"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[conformal_rank(sorted.len(), level) - 1])
}

/// Same as [`conformal_quantile`] for data already sorted ascending.
pub(crate) fn conformal_quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    sorted[conformal_rank(sorted.len(), level) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_element_is_returned_for_any_level() {
        assert_eq!(conformal_quantile(&[5.0], 0.9).unwrap(), 5.0);
        assert_eq!(conformal_quantile(&[5.0], 0.05).unwrap(), 5.0);
    }

    #[test]
    fn nine_scores_at_ninety_percent() {
        let scores: Vec<f64> = (1..=9).map(f64::from).collect();
        assert_eq!(conformal_rank(9, 0.9), 9);
        assert_eq!(conformal_quantile(&scores, 0.9).unwrap(), 9.0);
    }

    #[test]
    fn rank_is_robust_to_representation_error() {
        // 20 * 0.95 = 19 exactly in exact arithmetic.
        assert_eq!(conformal_rank(19, 0.95), 19);
        assert_eq!(conformal_rank(99, 0.95), 95);
        assert_eq!(conformal_rank(99, 0.05), 5);
        assert_eq!(conformal_rank(3, 0.01), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            conformal_quantile(&[], 0.9),
            Err(Error::EmptyCalibration)
        ));
        assert!(matches!(
            conformal_quantile(&[1.0, f64::NAN], 0.9),
            Err(Error::NonFiniteScore)
        ));
        assert!(conformal_quantile(&[1.0], 1.0).is_err());
        assert!(conformal_quantile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn monte_carlo_coverage_of_n19_at_level_090() {
        // k = ceil(20 * 0.9) = 18, so P(fresh <= threshold) = 18/20.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let reps = 100_000;
        let mut covered = 0usize;
        let mut scores = vec![0.0; 19];
        for _ in 0..reps {
            scores.iter_mut().for_each(|s| *s = rng.random::<f64>());
            let q = conformal_quantile(&scores, 0.9).unwrap();
            if rng.random::<f64>() <= q {
                covered += 1;
            }
        }
        let rate = covered as f64 / reps as f64;
        assert!((rate - 0.90).abs() < 0.01, "coverage {rate}");
    }

    proptest! {
        #[test]
        fn monotone_in_level_and_member_of_input(
            scores in prop::collection::vec(-1e3f64..1e3, 1..60),
            a in 0.001f64..0.999,
            b in 0.001f64..0.999,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let q_lo = conformal_quantile(&scores, lo).unwrap();
            let q_hi = conformal_quantile(&scores, hi).unwrap();
            prop_assert!(q_lo <= q_hi);
            prop_assert!(scores.contains(&q_lo));
            prop_assert!(scores.contains(&q_hi));
        }
    }
}
