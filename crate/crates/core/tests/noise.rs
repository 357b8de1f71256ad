use pathctl::noise::{sample_wiener, NoiseTree, Node};
use pathctl::path::TimeGrid;
use proptest::prelude::*;

#[test]
fn tree_moments_are_exact() {
    let t = NoiseTree::new(4, 2, 0.25).unwrap();
    let leaves: Vec<Node> = t.nodes_at(4).collect();
    let p = t.probability(4);
    let mean: f64 = leaves.iter().map(|&n| t.w_at(n)[1]).sum::<f64>() * p;
    let second: f64 = leaves.iter().map(|&n| t.w_at(n)[0].powi(2)).sum::<f64>() * p;
    let cross: f64 = leaves.iter().map(|&n| t.w_at(n)[0] * t.w_at(n)[1]).sum::<f64>() * p;
    assert_eq!(mean, 0.0);
    assert!((second - 1.0).abs() < 1e-15);
    assert_eq!(cross, 0.0);
}

#[test]
fn product_tree_separates_factors() {
    let t = NoiseTree::product(2, 1, 2, 0.5, 1 << 12).unwrap();
    assert_eq!(t.branching(), 8);
    let n = Node { level: 2, index: 8 * 5 + 3 };
    assert_eq!(t.branches(n), vec![5, 3]);
    let s = 0.5f64.sqrt();
    assert_eq!(t.w_increment(5), vec![s]);
    assert_eq!(t.b_increment(5), vec![-s, s]);
    assert_eq!(t.b_history(n)[1], vec![-s, s]);
    assert_eq!(t.b_history(n)[2], vec![0.0, 0.0]);
    assert_eq!(t.parent(n), Some(Node { level: 1, index: 5 }));
}

#[test]
fn wiener_paths_are_reproducible() {
    let g = TimeGrid::from_origin(1.0, 1.0 / 16.0).unwrap();
    assert_eq!(sample_wiener(g, 2, 5).unwrap(), sample_wiener(g, 2, 5).unwrap());
    assert_ne!(sample_wiener(g, 2, 5).unwrap(), sample_wiener(g, 2, 6).unwrap());
}

proptest! {
    #[test]
    fn coarsening_keeps_values_at_coarse_nodes(seed in 0u64..500, stride in prop::sample::select(vec![1usize, 2, 4, 8])) {
        let g = TimeGrid::from_origin(1.0, 1.0 / 32.0).unwrap();
        let w = sample_wiener(g, 2, seed).unwrap();
        let c = w.coarsen(stride).unwrap();
        for (j, v) in c.values().iter().enumerate() {
            for (a, b) in v.iter().zip(&w.values()[j * stride]) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
        let ns = w.noise_state();
        prop_assert_eq!(ns.w_at(1.0), w.terminal());
    }

    #[test]
    fn node_roundtrip(level in 0usize..=5, idx in 0u64..1024) {
        let t = NoiseTree::new(5, 2, 0.2).unwrap();
        let node = Node { level, index: idx % t.level_size(level) };
        prop_assert_eq!(t.node_of(&t.noise_state(node), level), node);
    }
}
