use chanex_core::channel::{centered_dft, CMatrix};
use chanex_core::selection::{
    apply_mask, harden, random_pattern, soft_sample, uniform_pattern, zero_pad, Axis, SelectionLogits,
    SelectionPattern,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, 2..24)
}

proptest! {
    #[test]
    fn every_pattern_source_honors_the_budget(n in 1usize..70, seed in any::<u64>(), frac in 0.0f64..=1.0) {
        let r = ((n as f64 * frac) as usize).max(1).min(n);
        for p in [uniform_pattern(n, r).unwrap(), random_pattern(n, r, seed).unwrap()] {
            prop_assert_eq!(p.len(), n);
            prop_assert_eq!(p.budget(), r);
            prop_assert_eq!(p.mask().iter().filter(|&&b| b).count(), r);
            let idx = p.indices();
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
        prop_assert!(uniform_pattern(n, n + 1).is_err());
    }

    #[test]
    fn harden_keeps_the_largest_logits(logits in logits_strategy(), pick in 0usize..24) {
        let n = logits.len();
        let r = pick % n + 1;
        let p = harden(&SelectionLogits::new(logits.clone(), 1.0).unwrap(), r).unwrap();
        prop_assert_eq!(p.budget(), r);
        let kept_min = p.indices().iter().map(|&i| logits[i]).fold(f64::INFINITY, f64::min);
        let dropped_max = (0..n).filter(|i| !p.mask()[*i]).map(|i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(kept_min >= dropped_max);
    }

    #[test]
    fn harden_ignores_a_common_shift(logits in logits_strategy(), shift in -50.0f64..50.0, pick in 0usize..24) {
        let r = pick % logits.len() + 1;
        let mut sorted = logits.clone();
        sorted.sort_by(f64::total_cmp);
        // Rounding in the shift can only reorder near-ties.
        prop_assume!(sorted.windows(2).all(|w| w[1] - w[0] > 1e-9));
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let a = harden(&SelectionLogits::new(logits, 1.0).unwrap(), r).unwrap();
        let b = harden(&SelectionLogits::new(shifted, 1.0).unwrap(), r).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn soft_mask_stays_in_the_unit_box_with_mass_at_most_r(logits in logits_strategy(), seed in any::<u64>(), pick in 0usize..24) {
        let r = pick % logits.len() + 1;
        let (mask, _) = soft_sample(&SelectionLogits::new(logits.clone(), 0.5).unwrap(), r, seed).unwrap();
        prop_assert!(mask.iter().all(|&m| (0.0..=1.0).contains(&m)));
        let total: f64 = mask.iter().sum();
        prop_assert!(total <= r as f64 + 1e-9, "mass {}", total);

        // Cold draws are one-hot on distinct elements.
        let (cold, _) = soft_sample(&SelectionLogits::new(logits, 1e-6).unwrap(), r, seed).unwrap();
        let total: f64 = cold.iter().sum();
        prop_assert!((total - r as f64).abs() < 1e-3, "cold mass {}", total);
    }

    #[test]
    fn mask_then_pad_restores_selected_entries(rows in 1usize..8, cols in 1usize..8, seed in any::<u64>()) {
        let m = CMatrix::from_fn(rows, cols, |i, j| Complex64::new(i as f64 + 1.0, j as f64 - 2.0));
        for (axis, n) in [(Axis::Antenna, rows), (Axis::Subcarrier, cols)] {
            let p = random_pattern(n, n.div_ceil(2), seed).unwrap();
            let back = zero_pad(&apply_mask(&m, &p, axis).unwrap(), &p, axis).unwrap();
            for i in 0..rows {
                for j in 0..cols {
                    let selected = p.mask()[if axis == Axis::Antenna { i } else { j }];
                    let want = if selected { m[(i, j)] } else { Complex64::new(0.0, 0.0) };
                    prop_assert_eq!(back[(i, j)], want);
                }
            }
        }
    }

    #[test]
    fn dft_is_linear(a in prop::collection::vec(-1.0f64..1.0, 1..10), b in prop::collection::vec(-1.0f64..1.0, 1..10), n in 8usize..40) {
        let len = a.len().min(b.len());
        let ta: Vec<Complex64> = a[..len].iter().map(|&x| Complex64::new(x, 0.5 * x)).collect();
        let tb: Vec<Complex64> = b[..len].iter().map(|&x| Complex64::new(-x, x)).collect();
        let sum: Vec<Complex64> = ta.iter().zip(&tb).map(|(x, y)| x + 2.0 * y).collect();
        let (fa, fb, fs) = (centered_dft(&ta, n), centered_dft(&tb, n), centered_dft(&sum, n));
        for k in 0..n {
            prop_assert!((fs[k] - (fa[k] + 2.0 * fb[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn pattern_serialization_round_trips(n in 1usize..40, seed in any::<u64>()) {
        let p = random_pattern(n, n.div_ceil(3), seed).unwrap();
        let back: SelectionPattern = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(back, p);
    }
}
