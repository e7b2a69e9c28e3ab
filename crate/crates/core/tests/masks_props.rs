use hgin_core::masks::{gen_brush_mask, gen_center_mask, hole_ratio, MaskSpec};
use hgin_core::schedule::{IncrementalSchedule, Stage};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brush_masks_binary_and_in_range(seed in any::<u64>(), lo in 0.05f64..0.5, width in 0.05f64..0.1) {
        let range = (lo, lo + width);
        let m = gen_brush_mask(&MaskSpec::brush(48, range, seed)).unwrap();
        prop_assert_eq!(m.shape(), &[48, 48, 1]);
        prop_assert!(m.data().iter().all(|&v| v == 0.0 || v == 1.0));
        let r = hole_ratio(&m);
        prop_assert!(range.0 <= r && r <= range.1, "ratio {} outside {:?}", r, range);
    }

    #[test]
    fn center_mask_is_a_quarter(half in 1usize..64) {
        let size = 2 * half;
        let m = gen_center_mask(size).unwrap();
        if half % 2 == 0 {
            prop_assert_eq!(hole_ratio(&m), 0.25);
        } else {
            let side = half;
            prop_assert_eq!(hole_ratio(&m), (side * side) as f64 / (size * size) as f64);
        }
    }

    #[test]
    fn schedule_lower_bound_never_decreases(
        k in prop::collection::vec(1u64..50, 1..5),
        lows in prop::collection::vec(0.01f64..0.3, 1..5),
        a in 0u64..400, b in 0u64..400,
    ) {
        let mut lows: Vec<f64> = lows.into_iter().take(k.len()).collect();
        lows.resize(k.len(), 0.3);
        lows.sort_by(f64::total_cmp);
        let stages = k.iter().zip(&lows).map(|(&iterations, &lo)| Stage { iterations, ratio_range: (lo, lo + 0.1) }).collect();
        let s = IncrementalSchedule::new(stages).unwrap();
        let (a, b) = (a.min(b), a.max(b));
        prop_assert!(s.ratio_range(a).0 <= s.ratio_range(b).0);
        prop_assert!(s.stage_index(a) <= s.stage_index(b));
    }
}
