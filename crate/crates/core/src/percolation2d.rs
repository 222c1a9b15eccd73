//! Bernoulli site percolation on the hexagonal lattice (edge length 2).
//!
//! Every site of a window carries a uniform variable drawn from the trial's
//! stream; a site is open at parameter `p` iff its uniform is below `p`. The
//! same seed therefore couples all values of `p` monotonically.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hexlattice::{StarLattice, VertexKind};
use crate::rng;

/// Sites of a lattice window with site-to-site adjacency.
#[derive(Debug, Clone)]
pub struct SiteGraph {
    pub radius: f64,
    pub positions: Vec<[f64; 2]>,
    pub neighbors: Vec<Vec<usize>>,
    /// Index of the origin site.
    pub origin: usize,
}

impl SiteGraph {
    pub fn build(radius: f64) -> Result<Self> {
        let lattice = StarLattice::build(radius)?;
        Ok(Self::from_lattice(&lattice))
    }

    pub fn from_lattice(lattice: &StarLattice) -> Self {
        let mut index = HashMap::new();
        let mut positions = Vec::new();
        for v in lattice.vertices() {
            if v.kind == VertexKind::Site {
                index.insert(v.index, positions.len());
                positions.push(v.position);
            }
        }
        let mut neighbors = vec![Vec::new(); positions.len()];
        for v in lattice.vertices().iter().filter(|v| v.kind == VertexKind::Bond) {
            if let [a, b] = lattice.neighbors(v.index) {
                let (a, b) = (index[a], index[b]);
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        SiteGraph { radius: lattice.generation_radius(), positions, neighbors, origin: index[&lattice.origin()] }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Within one lattice edge of the window boundary.
    pub fn near_boundary(&self, site: usize) -> bool {
        let [x, y] = self.positions[site];
        (x * x + y * y).sqrt() > self.radius - 2.0
    }
}

/// The uniforms of one trial; site `i` is open at `p` iff `u[i] < p`.
#[derive(Debug, Clone)]
pub struct SiteConfig {
    pub seed: u64,
    pub trial: u64,
    pub uniforms: Vec<f64>,
}

impl SiteConfig {
    pub fn sample(graph: &SiteGraph, seed: u64, trial: u64) -> Self {
        let mut rng = rng::stream(seed, trial);
        let uniforms = (0..graph.len()).map(|_| rng.random::<f64>()).collect();
        SiteConfig { seed, trial, uniforms }
    }

    pub fn is_open(&self, site: usize, p: f64) -> bool {
        self.uniforms[site] < p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub members: Vec<usize>,
    pub reached_boundary: bool,
    pub size: usize,
}

/// Breadth-first open cluster of the origin.
pub fn cluster_of_origin(graph: &SiteGraph, config: &SiteConfig, p: f64) -> ClusterResult {
    cluster_with_parents(graph, config, p).0
}

/// Like [`cluster_of_origin`] but also returns the BFS parent of each member.
pub fn cluster_with_parents(graph: &SiteGraph, config: &SiteConfig, p: f64) -> (ClusterResult, HashMap<usize, usize>) {
    let mut parent = HashMap::new();
    let o = graph.origin;
    if !config.is_open(o, p) {
        return (ClusterResult { members: vec![], reached_boundary: false, size: 0 }, parent);
    }
    let mut seen = vec![false; graph.len()];
    let mut queue = VecDeque::from([o]);
    seen[o] = true;
    let mut members = Vec::new();
    let mut reached_boundary = false;
    while let Some(s) = queue.pop_front() {
        members.push(s);
        reached_boundary |= graph.near_boundary(s);
        for &n in &graph.neighbors[s] {
            if !seen[n] && config.is_open(n, p) {
                seen[n] = true;
                parent.insert(n, s);
                queue.push_back(n);
            }
        }
    }
    let size = members.len();
    (ClusterResult { members, reached_boundary, size }, parent)
}

/// Open cluster of the origin for one seeded configuration of a fresh window.
pub fn origin_cluster(p: f64, radius: f64, seed: u64) -> Result<ClusterResult> {
    check_p(p)?;
    let graph = SiteGraph::build(radius)?;
    let config = SiteConfig::sample(&graph, seed, 0);
    Ok(cluster_of_origin(&graph, &config, p))
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("p = {p} is not a probability"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub p: f64,
    pub radius: f64,
    pub trials: u64,
    pub theta_hat: f64,
    pub std_error: f64,
    pub seed: u64,
}

/// Fraction of trials whose origin cluster reaches the window boundary.
pub fn estimate_theta(p: f64, radius: f64, trials: u64, seed: u64) -> Result<ThetaEstimate> {
    check_p(p)?;
    if trials == 0 {
        return domain("need at least one trial");
    }
    let graph = SiteGraph::build(radius)?;
    let hits: u64 = (0..trials)
        .into_par_iter()
        .map(|t| {
            let config = SiteConfig::sample(&graph, seed, t);
            u64::from(cluster_of_origin(&graph, &config, p).reached_boundary)
        })
        .sum();
    let theta_hat = hits as f64 / trials as f64;
    Ok(ThetaEstimate {
        p,
        radius,
        trials,
        theta_hat,
        std_error: (theta_hat * (1.0 - theta_hat) / trials as f64).sqrt(),
        seed,
    })
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    pub fn size_of(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

/// Positions of the largest open cluster touching the boundary, a finite
/// stand-in for the infinite cluster. Empty if no open cluster touches it.
pub fn infinite_cluster_proxy(graph: &SiteGraph, config: &SiteConfig, p: f64) -> Vec<[f64; 2]> {
    let mut uf = UnionFind::new(graph.len());
    for s in 0..graph.len() {
        if !config.is_open(s, p) {
            continue;
        }
        for &n in &graph.neighbors[s] {
            if n > s && config.is_open(n, p) {
                uf.union(s, n);
            }
        }
    }
    let best = (0..graph.len())
        .filter(|&s| config.is_open(s, p) && graph.near_boundary(s))
        .map(|s| (uf.size_of(s), uf.find(s)))
        .max();
    match best {
        None => Vec::new(),
        Some((_, root)) => (0..graph.len())
            .filter(|&s| config.is_open(s, p) && uf.find(s) == root)
            .map(|s| graph.positions[s])
            .collect(),
    }
}

/// Fraction of a `grid x grid` lattice of sample points inside
/// `B(0, window_radius)` that lie within distance `a` of `points`.
pub fn neighborhood_density(points: &[[f64; 2]], a: f64, window_radius: f64, grid: usize) -> Result<f64> {
    if !(a > 0.0) {
        return domain("neighbourhood radius must be positive");
    }
    if grid < 10 {
        return domain("grid must be at least 10");
    }
    if !(window_radius > 0.0) {
        return domain("empty window");
    }
    let key = |p: [f64; 2]| ((p[0] / a).floor() as i64, (p[1] / a).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<[f64; 2]>> = HashMap::new();
    for &p in points {
        buckets.entry(key(p)).or_default().push(p);
    }
    let step = 2.0 * window_radius / grid as f64;
    let (mut inside, mut covered) = (0u64, 0u64);
    for i in 0..grid {
        for j in 0..grid {
            let q = [-window_radius + (i as f64 + 0.5) * step, -window_radius + (j as f64 + 0.5) * step];
            if q[0] * q[0] + q[1] * q[1] > window_radius * window_radius {
                continue;
            }
            inside += 1;
            let (kx, ky) = key(q);
            let hit = (-1..=1).any(|dx| {
                (-1..=1).any(|dy| {
                    buckets.get(&(kx + dx, ky + dy)).is_some_and(|b| {
                        b.iter().any(|p| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) <= a * a)
                    })
                })
            });
            covered += u64::from(hit);
        }
    }
    if inside == 0 {
        return domain("no grid point falls inside the window");
    }
    Ok(covered as f64 / inside as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extremes() {
        let all = origin_cluster(1.0, 20.0, 1).unwrap();
        let g = SiteGraph::build(20.0).unwrap();
        assert!(all.reached_boundary);
        assert_eq!(all.size, g.len());
        let none = origin_cluster(0.0, 20.0, 1).unwrap();
        assert_eq!(none.size, 0);
        assert!(!none.reached_boundary);
        assert!(origin_cluster(1.5, 20.0, 1).is_err());
    }

    #[test]
    fn site_degrees() {
        let g = SiteGraph::build(12.0).unwrap();
        for s in 0..g.len() {
            let [x, y] = g.positions[s];
            if (x * x + y * y).sqrt() < 12.0 - 3.0 {
                assert_eq!(g.neighbors[s].len(), 3);
            }
        }
    }

    #[test]
    fn theta_at_one() {
        let t = estimate_theta(1.0, 10.0, 50, 3).unwrap();
        assert_eq!(t.theta_hat, 1.0);
        assert_eq!(t.std_error, 0.0);
        assert!(estimate_theta(0.5, 10.0, 0, 3).is_err());
    }

    #[test]
    fn theta_is_monotone_under_coupling() {
        let a = estimate_theta(0.5, 30.0, 300, 9).unwrap().theta_hat;
        let b = estimate_theta(0.7, 30.0, 300, 9).unwrap().theta_hat;
        let c = estimate_theta(0.9, 30.0, 300, 9).unwrap().theta_hat;
        assert!(a <= b && b <= c, "{a} {b} {c}");
    }

    #[test]
    fn cluster_is_connected_through_open_sites() {
        let g = SiteGraph::build(60.0).unwrap();
        let cfg = SiteConfig::sample(&g, 17, 0);
        let p = 0.75;
        let (cluster, parent) = cluster_with_parents(&g, &cfg, p);
        assert!(cluster.size > 0);
        for &m in cluster.members.iter().step_by((cluster.size / 100).max(1)).take(100) {
            let mut cur = m;
            while cur != g.origin {
                assert!(cfg.is_open(cur, p));
                let up = parent[&cur];
                assert!(g.neighbors[cur].contains(&up));
                cur = up;
            }
        }
    }

    #[test]
    fn density_trivial_cases() {
        assert_eq!(neighborhood_density(&[], 1.0, 10.0, 20).unwrap(), 0.0);
        assert_eq!(neighborhood_density(&[[0.0, 0.0]], 100.0, 10.0, 20).unwrap(), 1.0);
        assert!(neighborhood_density(&[], 1.0, 10.0, 5).is_err());
        assert!(neighborhood_density(&[], 1.0, 0.0, 20).is_err());
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(uf.union(3, 4));
        assert!(!uf.union(1, 0));
        assert_eq!(uf.size_of(1), 2);
        assert_ne!(uf.find(0), uf.find(3));
    }
}
