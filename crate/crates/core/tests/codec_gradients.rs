mod common;

#[test]
fn backprop_matches_finite_differences() {
    for seed in 0..5 {
        let g = common::gradient_check(seed);
        assert!(g.max_rel < 1e-4, "seed {seed}: {} ({})", g.max_rel, g.worst);
        assert!(g.checked > 100);
    }
}
