//! Seeded initial-state sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siws_core::dynamics::LayeredState;
use siws_core::model::SystemShape;

use crate::config::InitialRanges;

/// Resampling attempts per individual before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("ranges need one entry per virus ({expected}), found {found}")]
    Count { expected: usize, found: usize },
    #[error("range [{lo}, {hi}] is empty or outside the domain")]
    BadRange { lo: f64, hi: f64 },
    #[error("infeasible ranges: smallest cross-virus infection sum is {min_sum} > 1")]
    Infeasible { min_sum: f64 },
    #[error("individual {} kept exceeding a total infection of 1 after {MAX_REJECTIONS} draws", index + 1)]
    Rejected { index: usize },
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Draws every coordinate uniformly from its virus's range and redraws an
/// individual's infections while their cross-virus sum exceeds one.
pub fn sample_initial(ranges: &InitialRanges, shape: &SystemShape, seed: u64) -> Result<LayeredState, SamplingError> {
    for list in [&ranges.x_ranges, &ranges.w_ranges] {
        if list.len() != shape.m {
            return Err(SamplingError::Count {
                expected: shape.m,
                found: list.len(),
            });
        }
    }
    for &[lo, hi] in ranges.x_ranges.iter().chain(&ranges.w_ranges) {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(SamplingError::BadRange { lo, hi });
        }
    }
    for &[lo, hi] in &ranges.x_ranges {
        if hi > 1.0 {
            return Err(SamplingError::BadRange { lo, hi });
        }
    }
    let min_sum: f64 = ranges.x_ranges.iter().map(|r| r[0]).sum();
    if min_sum > 1.0 {
        return Err(SamplingError::Infeasible { min_sum });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = LayeredState::zeros(shape);
    for i in 0..shape.n {
        let mut tries = 0;
        loop {
            let draws: Vec<f64> = ranges.x_ranges.iter().map(|&r| uniform(&mut rng, r)).collect();
            if draws.iter().sum::<f64>() <= 1.0 {
                for (r, v) in draws.into_iter().enumerate() {
                    state.x[r][i] = v;
                }
                break;
            }
            tries += 1;
            if tries >= MAX_REJECTIONS {
                return Err(SamplingError::Rejected { index: i });
            }
        }
    }
    for r in 0..shape.m {
        for j in 0..shape.q {
            state.w[r][j] = uniform(&mut rng, ranges.w_ranges[r]);
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> SystemShape {
        SystemShape::new(10, 5, 2, 0.001).unwrap()
    }

    fn ranges(x: [[f64; 2]; 2]) -> InitialRanges {
        InitialRanges {
            x_ranges: x.to_vec(),
            w_ranges: vec![[0.0, 2.0]; 2],
        }
    }

    #[test]
    fn reference_ranges_need_no_rejection() {
        let s = sample_initial(&ranges([[0.0, 0.5], [0.0, 0.4]]), &shape(), 7).unwrap();
        for i in 0..10 {
            assert!(s.total_infection(i) <= 0.9);
            assert!((0.0..=0.5).contains(&s.x[0][i]));
            assert!((0.0..=0.4).contains(&s.x[1][i]));
        }
        assert!(s.w.iter().flatten().all(|w| (0.0..=2.0).contains(w)));
    }

    #[test]
    fn infeasible_ranges_error() {
        let err = sample_initial(&ranges([[0.8, 0.9], [0.8, 0.9]]), &shape(), 1).unwrap_err();
        assert!(matches!(err, SamplingError::Infeasible { .. }));
    }

    #[test]
    fn same_seed_same_state() {
        let r = ranges([[0.0, 0.7], [0.0, 0.7]]);
        assert_eq!(
            sample_initial(&r, &shape(), 3).unwrap(),
            sample_initial(&r, &shape(), 3).unwrap()
        );
        assert_ne!(
            sample_initial(&r, &shape(), 3).unwrap(),
            sample_initial(&r, &shape(), 4).unwrap()
        );
    }

    #[test]
    fn rejection_keeps_sums_feasible() {
        let s = sample_initial(&ranges([[0.0, 0.9], [0.0, 0.9]]), &shape(), 11).unwrap();
        assert!((0..10).all(|i| s.total_infection(i) <= 1.0));
    }
}
