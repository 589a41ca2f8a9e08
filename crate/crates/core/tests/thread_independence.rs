use bernet::detection::msra::{build_significance_graph, sample_scene, Hypothesis};
use bernet::longest_run::length_distribution;
use bernet::net::NetConfig;
use bernet::pseudo_tree::{pc_bracket, theta_series, PseudoTreeConfig};

fn with_threads<T: Send>(n: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

#[test]
fn histogram_ignores_pool_size() {
    let config = NetConfig::planar(48, 40, 1, 0.3, 11);
    let a = with_threads(1, || length_distribution(&config, 200).unwrap());
    let b = with_threads(4, || length_distribution(&config, 200).unwrap());
    assert_eq!(a, b);
}

#[test]
fn splitting_series_ignores_pool_size() {
    let config = PseudoTreeConfig::new(vec![2, 1], 0.05).unwrap();
    let a = with_threads(1, || theta_series(&config, 14, 3000, 5).unwrap());
    let b = with_threads(3, || theta_series(&config, 14, 3000, 5).unwrap());
    assert_eq!(a, b);
}

#[test]
fn bracket_and_counts_ignore_pool_size() {
    let a = with_threads(1, || pc_bracket(&[1], 48, 0.05, 100, 2).unwrap());
    let b = with_threads(4, || pc_bracket(&[1], 48, 0.05, 100, 2).unwrap());
    assert_eq!(a, b);
    let points = sample_scene(600, 2.0, 1.0, 1.0, 0.5, 3, Hypothesis::Alternative).unwrap().points;
    let g1 = with_threads(1, || build_significance_graph(&points, 2, 9, 1.0, 6).unwrap());
    let g4 = with_threads(4, || build_significance_graph(&points, 2, 9, 1.0, 6).unwrap());
    assert_eq!(g1, g4);
}
