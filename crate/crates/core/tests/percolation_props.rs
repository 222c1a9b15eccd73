use hardsphere::percolation2d::{
    cluster_with_parents, estimate_theta, infinite_cluster_proxy, neighborhood_density, SiteConfig, SiteGraph,
};
use proptest::prelude::*;

#[test]
fn subcritical_clusters_rarely_cross() {
    // site threshold of the hexagonal lattice is about 0.697
    let t = estimate_theta(0.6, 120.0, 400, 3).unwrap();
    assert!(t.theta_hat < 0.05, "{t:?}");
}

#[test]
fn supercritical_clusters_cross_often() {
    let t = estimate_theta(0.85, 80.0, 400, 4).unwrap();
    assert!(t.theta_hat > 0.5, "{t:?}");
}

#[test]
fn theta_is_monotone_under_coupling() {
    let ps = [0.5, 0.7, 0.8, 0.9, 1.0];
    let th: Vec<f64> = ps.iter().map(|&p| estimate_theta(p, 30.0, 200, 9).unwrap().theta_hat).collect();
    assert!(th.windows(2).all(|w| w[0] <= w[1]), "{th:?}");
    assert_eq!(th[4], 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parent_chain_is_an_open_path(seed in any::<u64>(), p in 0.6f64..0.95) {
        let g = SiteGraph::build(25.0).unwrap();
        let cfg = SiteConfig::sample(&g, seed, 0);
        let (c, parent) = cluster_with_parents(&g, &cfg, p);
        prop_assert_eq!(c.size, c.members.len());
        for &m in &c.members {
            let mut v = m;
            let mut hops = 0;
            while v != g.origin {
                prop_assert!(cfg.is_open(v, p));
                let u = parent[&v];
                prop_assert!(g.neighbors[v].contains(&u));
                v = u;
                hops += 1;
                prop_assert!(hops <= g.len());
            }
        }
    }

    #[test]
    fn density_grows_with_radius(seed in any::<u64>()) {
        let g = SiteGraph::build(30.0).unwrap();
        let cfg = SiteConfig::sample(&g, seed, 0);
        let pts = infinite_cluster_proxy(&g, &cfg, 0.8);
        let ds: Vec<f64> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&a| neighborhood_density(&pts, a, 20.0, 80).unwrap())
            .collect();
        prop_assert!(ds.windows(2).all(|w| w[0] <= w[1]), "{:?}", ds);
    }
}
