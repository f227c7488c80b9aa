//! Randomized invariants over the combinatorial core.

use proptest::prelude::*;

use npgroup::anovatest::build_windows;
use npgroup::selection::by_cutoff;

proptest! {
    /// Every window has exactly p members, windows cover n - p + 1 cells,
    /// and the underlying order is a permutation sorted by (score, index).
    #[test]
    fn window_layout_invariants(
        scores in prop::collection::vec(-1e3..1e3f64, 5..60),
        half in 1..3usize,
    ) {
        let p = 2 * half + 1;
        prop_assume!(scores.len() >= p);
        let layout = build_windows(&scores, p).unwrap();
        let n = scores.len();
        prop_assert_eq!(layout.n_cells(), n - p + 1);
        prop_assert!(layout.windows().all(|w| w.len() == p));
        let mut seen = vec![false; n];
        for &i in &layout.order {
            prop_assert!(!seen[i]);
            seen[i] = true;
        }
        let sorted_with_ties =
            layout.order.windows(2).all(|w| (scores[w[0]], w[0]) < (scores[w[1]], w[1]));
        prop_assert!(sorted_with_ties);
    }

    /// The step-up cutoff equals direct enumeration of the defining maximum
    /// and never exceeds d; it is monotone in alpha.
    #[test]
    fn by_cutoff_matches_enumeration(
        pvalues in prop::collection::vec(0.0..1.0f64, 1..50),
        alpha in 0.01..0.5f64,
    ) {
        let d = pvalues.len();
        let mut sorted = pvalues.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let harm: f64 = (1..=d).map(|j| 1.0 / j as f64).sum();
        let brute = (1..=d)
            .filter(|&l| sorted[l - 1] <= l as f64 * alpha / (d as f64 * harm))
            .max()
            .unwrap_or(0);
        let k = by_cutoff(&pvalues, alpha);
        prop_assert_eq!(k, brute);
        prop_assert!(k <= d);
        prop_assert!(by_cutoff(&pvalues, alpha / 2.0) <= k);
    }
}
