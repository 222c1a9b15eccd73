//! The hexagonal lattice with edge length 2, decorated with a bond vertex at
//! the midpoint of every edge.
//!
//! Site vertices use the embedding `A(i, j) = i t1 + j t2`,
//! `B(i, j) = A(i, j) + (0, 2)` with `t1 = (sqrt 3, 3)` and `t2 = (-sqrt 3, 3)`,
//! so the origin is a site and one of its edges points along `+y`. Vertex ids
//! are ranks in the exploration order (distance, then angle, then kind).

use std::collections::HashMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Site,
    Bond,
}

impl VertexKind {
    pub fn full_degree(self) -> usize {
        match self {
            VertexKind::Site => 3,
            VertexKind::Bond => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VertexKind::Site => "site",
            VertexKind::Bond => "bond",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarVertex {
    pub kind: VertexKind,
    pub position: [f64; 2],
    pub index: usize,
}

/// Ordering key: quantized distance, quantized angle in `[0, 2 pi)`, kind.
pub type OrderKey = (i64, i64, VertexKind);

pub fn order_key(kind: VertexKind, position: [f64; 2]) -> OrderKey {
    let [x, y] = position;
    let r = (x * x + y * y).sqrt();
    let mut theta = if r < 1e-12 { 0.0 } else { y.atan2(x) };
    if theta < 0.0 {
        theta += std::f64::consts::TAU;
    }
    ((r * 1e9).round() as i64, (theta * 1e9).round() as i64, kind)
}

#[derive(Debug, Clone)]
pub struct StarLattice {
    generation_radius: f64,
    vertices: Vec<StarVertex>,
    adjacency: Vec<Vec<usize>>,
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

fn site_a(i: i64, j: i64) -> [f64; 2] {
    [SQRT3 * (i - j) as f64, 3.0 * (i + j) as f64]
}

fn site_b(i: i64, j: i64) -> [f64; 2] {
    let [x, y] = site_a(i, j);
    [x, y + 2.0]
}

fn norm(p: [f64; 2]) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

impl StarLattice {
    /// All vertices within `generation_radius` of the origin; adjacency is
    /// restricted to generated vertices.
    pub fn build(generation_radius: f64) -> Result<Self> {
        if !(generation_radius >= 2.0) {
            return domain(format!("lattice radius must be >= 2, got {generation_radius}"));
        }
        let keep = |p: [f64; 2]| norm(p) <= generation_radius + 1e-9;
        let n = (generation_radius / SQRT3).ceil() as i64 + 2;

        // raw vertices keyed structurally: (i, j, 0) = A, (i, j, 1) = B
        let mut raw: Vec<(VertexKind, [f64; 2])> = Vec::new();
        let mut site_id: HashMap<(i64, i64, u8), usize> = HashMap::new();
        for i in -n..=n {
            for j in -n..=n {
                for (tag, p) in [(0u8, site_a(i, j)), (1u8, site_b(i, j))] {
                    if keep(p) {
                        site_id.insert((i, j, tag), raw.len());
                        raw.push((VertexKind::Site, p));
                    }
                }
            }
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for i in -n - 1..=n + 1 {
            for j in -n - 1..=n + 1 {
                let a = site_a(i, j);
                for (bi, bj) in [(i, j), (i - 1, j), (i, j - 1)] {
                    let b = site_b(bi, bj);
                    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                    if !keep(mid) {
                        continue;
                    }
                    let id = raw.len();
                    raw.push((VertexKind::Bond, mid));
                    if let Some(&s) = site_id.get(&(i, j, 0)) {
                        edges.push((id, s));
                    }
                    if let Some(&s) = site_id.get(&(bi, bj, 1)) {
                        edges.push((id, s));
                    }
                }
            }
        }

        let mut order: Vec<usize> = (0..raw.len()).collect();
        order.sort_by_key(|&k| order_key(raw[k].0, raw[k].1));
        let mut rank = vec![0; raw.len()];
        for (r, &k) in order.iter().enumerate() {
            rank[k] = r;
        }
        let vertices: Vec<StarVertex> = order
            .iter()
            .enumerate()
            .map(|(index, &k)| StarVertex { kind: raw[k].0, position: raw[k].1, index })
            .collect();
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (a, b) in edges {
            adjacency[rank[a]].push(rank[b]);
            adjacency[rank[b]].push(rank[a]);
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let lattice = StarLattice { generation_radius, vertices, adjacency };
        if lattice.vertices[0].kind != VertexKind::Site || norm(lattice.vertices[0].position) > 1e-12 {
            return Err(crate::Error::Internal("origin is not the first site".into()));
        }
        if !lattice.is_complete(0) {
            return domain("radius too small to contain the origin's three bonds");
        }
        Ok(lattice)
    }

    pub fn generation_radius(&self) -> f64 {
        self.generation_radius
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn origin(&self) -> usize {
        0
    }

    pub fn vertex(&self, id: usize) -> &StarVertex {
        &self.vertices[id]
    }

    pub fn vertices(&self) -> &[StarVertex] {
        &self.vertices
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    /// Whether every lattice neighbour of `id` was generated.
    pub fn is_complete(&self, id: usize) -> bool {
        self.adjacency[id].len() == self.vertices[id].kind.full_degree()
    }

    /// Number of neighbours of `id` that lie outside the generated window.
    pub fn missing_neighbors(&self, id: usize) -> usize {
        self.vertices[id].kind.full_degree() - self.adjacency[id].len()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let p = self.vertices[a].position;
        let q = self.vertices[b].position;
        norm([p[0] - q[0], p[1] - q[1]])
    }

    pub fn is_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Minimum distance over pairs of distinct non-adjacent vertices (brute force).
    pub fn min_nonadjacent_distance(&self) -> Result<f64> {
        if self.generation_radius < 6.0 {
            return domain("need a lattice of radius >= 6");
        }
        let mut best = f64::INFINITY;
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                if !self.is_adjacent(a, b) {
                    best = best.min(self.distance(a, b));
                }
            }
        }
        Ok(best)
    }

    /// Vertex ids in exploration order. Ids are ranks, so this is `0..len`.
    pub fn vertex_order(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn order_key_of(&self, id: usize) -> OrderKey {
        let v = &self.vertices[id];
        order_key(v.kind, v.position)
    }

    /// Line-oriented export: `v <id> <kind> <x> <y>` then `e <id> <id>`.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# star lattice, radius {:.16e}", self.generation_radius)?;
        for v in &self.vertices {
            writeln!(w, "v {} {} {:.16e} {:.16e}", v.index, v.kind.as_str(), v.position[0], v.position[1])?;
        }
        for (a, adj) in self.adjacency.iter().enumerate() {
            for &b in adj.iter().filter(|&&b| b > a) {
                writeln!(w, "e {a} {b}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_two_has_origin_star() {
        let l = StarLattice::build(2.0).unwrap();
        assert_eq!(l.vertex(0).kind, VertexKind::Site);
        assert_eq!(l.neighbors(0), &[1, 2, 3]);
        for &b in l.neighbors(0) {
            assert_eq!(l.vertex(b).kind, VertexKind::Bond);
            assert!((l.distance(0, b) - 1.0).abs() < 1e-12);
        }
        assert!(StarLattice::build(1.5).is_err());
    }

    #[test]
    fn radius_four_reaches_second_sites() {
        let l = StarLattice::build(4.0).unwrap();
        for &b in l.neighbors(0) {
            assert!(l.is_complete(b), "bond {b}");
            let far = *l.neighbors(b).iter().find(|&&s| s != 0).unwrap();
            assert_eq!(l.vertex(far).kind, VertexKind::Site);
            assert!((l.distance(0, far) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn origin_edge_points_up() {
        let l = StarLattice::build(2.0).unwrap();
        let up = l.neighbors(0).iter().any(|&b| {
            let p = l.vertex(b).position;
            p[0].abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12
        });
        assert!(up);
    }

    #[test]
    fn degrees_and_distances() {
        let l = StarLattice::build(10.0).unwrap();
        for id in 0..l.len() {
            let v = l.vertex(id);
            for &n in l.neighbors(id) {
                assert_ne!(l.vertex(n).kind, v.kind);
                assert!((l.distance(id, n) - 1.0).abs() < 1e-9);
            }
            if norm(v.position) < 10.0 - 2.0 {
                assert!(l.is_complete(id), "interior vertex {id} incomplete");
            }
        }
    }

    #[test]
    fn nonadjacent_separation() {
        let l = StarLattice::build(6.0).unwrap();
        let m = l.min_nonadjacent_distance().unwrap();
        assert!((m - 3f64.sqrt()).abs() < 1e-9);
        assert!(2.0 * (0.75 + 0.1 + 0.01) < m);
        assert!(StarLattice::build(5.0).unwrap().min_nonadjacent_distance().is_err());
    }

    #[test]
    fn order_starts_at_origin_then_bonds() {
        let l = StarLattice::build(8.0).unwrap();
        assert_eq!(l.vertex_order()[0], 0);
        for id in 1..=3 {
            assert_eq!(l.vertex(id).kind, VertexKind::Bond);
        }
        let sqrt3 = 3f64.sqrt();
        for id in 4..l.len() {
            assert!(l.distance(0, id) >= sqrt3 - 1e-9);
        }
        let keys: Vec<_> = (0..l.len()).map(|i| l.order_key_of(i)).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "order must be strict");
    }

    #[test]
    fn order_is_reproducible() {
        let a = StarLattice::build(12.0).unwrap();
        let b = StarLattice::build(12.0).unwrap();
        assert_eq!(a.vertices(), b.vertices());
    }

    #[test]
    fn text_export_lists_everything() {
        let l = StarLattice::build(4.0).unwrap();
        let mut buf = Vec::new();
        l.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let v = text.lines().filter(|s| s.starts_with("v ")).count();
        let e = text.lines().filter(|s| s.starts_with("e ")).count();
        assert_eq!(v, l.len());
        let degree_sum: usize = (0..l.len()).map(|i| l.neighbors(i).len()).sum();
        assert_eq!(2 * e, degree_sum);
    }
}
