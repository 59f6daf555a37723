use proptest::prelude::*;
use rgds::infinite::{grow_tree, TreeLimits, TreeStop};
use rgds::sampler::cover_from_tree;
use rgds::system::catalog;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn leaves_respect_the_stopping_window(seed in any::<u64>(), j in 1i32..4) {
        let spec = catalog::cantor_pair();
        let eps = 0.25f64.powi(j);
        let t = grow_tree(&spec, seed, 0, TreeStop::Epsilon(eps), TreeLimits::default()).unwrap();
        prop_assert!(!t.extinct);
        for l in &t.frontier {
            let r = l.map.ratio();
            prop_assert!(r <= eps * (1.0 + 1e-12) && r > spec.c_min() * eps);
        }
        // leaves of a surviving tree tile disjoint parts of the seed box
        let cover = cover_from_tree(&spec, &t, eps);
        let mut iv: Vec<(f64, f64)> = cover.boxes.iter().map(|b| b.image.interval()).collect();
        iv.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in iv.windows(2) {
            prop_assert!(w[0].1 < w[1].0 + 1e-12);
        }
    }

    #[test]
    fn same_seed_same_tree(seed in any::<u64>()) {
        let spec = catalog::g2();
        let limits = TreeLimits { record_nodes: true, ..TreeLimits::default() };
        let a = grow_tree(&spec, seed, 1, TreeStop::Depth(6), limits).unwrap();
        let b = grow_tree(&spec, seed, 1, TreeStop::Depth(6), limits).unwrap();
        prop_assert_eq!(a.dump(&spec), b.dump(&spec));
    }
}
