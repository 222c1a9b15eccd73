//! Lazy, exactly consistent sampling of a homogeneous Poisson process.
//!
//! Every point of the process carries an independent uniform mark in `(0, 1]`,
//! which turns the process into a homogeneous Poisson process on
//! `R^d x (0, 1]`. The registry remembers which parts of that product space
//! have been revealed: a [`RevealedRegion`] with level `t` means every point
//! of the region with mark `<= t` is stored. Everything not yet revealed is
//! still an independent Poisson process, so a new query samples its shape
//! afresh and thins away points falling in already revealed parts
//! (sample-then-thin). Full queries reveal a region up to level 1.
//!
//! Picking a uniform point of `Π ∩ S` without knowing `|S|` uses the marks:
//! the point of `Π ∩ S` with the smallest mark is uniform among them. It is
//! found by scanning an envelope `E ⊇ S` of known volume in increasing mark
//! order and stopping at the first hit, which reveals `E` only up to the
//! hit's mark. This keeps cells holding astronomically many points cheap.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};
use crate::geometry::{dist2, Cell, Closure, Point, Region};
use crate::rng::{self, SimRng};

/// Default cap on stored points per registry.
pub const DEFAULT_POINT_BUDGET: u64 = 1_000_000;

const BUCKET: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonPoint {
    pub id: usize,
    pub location: Point,
    pub mark: f64,
    pub origin_region: usize,
    pub consumed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevealedRegion {
    pub id: usize,
    pub region: Region,
    pub level: f64,
    #[serde(skip)]
    footprint: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct RegionRegistry {
    intensity: f64,
    dim: usize,
    seed: u64,
    rng: SimRng,
    regions: Vec<RevealedRegion>,
    points: Vec<PoissonPoint>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    budget: u64,
    draws: u64,
}

fn bucket_of(x: f64, y: f64) -> (i64, i64) {
    ((x / BUCKET).floor() as i64, (y / BUCKET).floor() as i64)
}

fn in_footprint(f: &[f64; 4], p: &[f64]) -> bool {
    f[0] <= p[0] && p[0] <= f[2] && f[1] <= p[1] && p[1] <= f[3]
}

impl RegionRegistry {
    pub fn new(intensity: f64, dim: usize, seed: u64) -> Result<Self> {
        Self::with_stream(intensity, dim, seed, 0)
    }

    /// A registry drawing from stream `stream` of `seed`.
    pub fn with_stream(intensity: f64, dim: usize, seed: u64, stream: u64) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return domain(format!("intensity must be finite and >= 0, got {intensity}"));
        }
        if dim < 2 {
            return domain("registry needs d >= 2");
        }
        Ok(RegionRegistry {
            intensity,
            dim,
            seed,
            rng: rng::stream(seed, stream),
            regions: Vec::new(),
            points: Vec::new(),
            buckets: HashMap::new(),
            budget: DEFAULT_POINT_BUDGET,
            draws: 0,
        })
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn regions(&self) -> &[RevealedRegion] {
        &self.regions
    }

    pub fn points(&self) -> &[PoissonPoint] {
        &self.points
    }

    pub fn point(&self, id: usize) -> &PoissonPoint {
        &self.points[id]
    }

    /// Number of stored points.
    pub fn materialized(&self) -> usize {
        self.points.len()
    }

    /// Number of fresh candidates drawn so far, including thinned ones.
    pub fn fresh_draws(&self) -> u64 {
        self.draws
    }

    pub fn mark_consumed(&mut self, id: usize) {
        self.points[id].consumed = true;
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    fn check_region(&self, region: &Region) -> Result<f64> {
        check_dim(self.dim, region.dim())?;
        region.validate()?;
        match region {
            Region::Ball { .. } | Region::Cell(_) => Ok(region.volume().unwrap()),
            _ => domain("queries and envelopes must be balls or cells"),
        }
    }

    /// Whether `(x, mark)` lies in an already revealed part of the product space.
    fn covered(&self, x: &[f64], mark: f64) -> bool {
        self.regions.iter().any(|r| {
            mark <= r.level && in_footprint(&r.footprint, x) && r.region.contains_unchecked(x, Closure::Closed)
        })
    }

    fn store(&mut self, location: Vec<f64>, mark: f64, origin_region: usize) -> Result<usize> {
        if self.points.len() as u64 >= self.budget {
            return Err(Error::PointBudget { needed: self.points.len() as u64 + 1, budget: self.budget });
        }
        let id = self.points.len();
        self.buckets.entry(bucket_of(location[0], location[1])).or_default().push(id);
        self.points.push(PoissonPoint { id, location: Point(location), mark, origin_region, consumed: false });
        Ok(id)
    }

    fn register(&mut self, region: Region, level: f64) -> usize {
        let id = self.regions.len();
        let footprint = region.footprint();
        self.regions.push(RevealedRegion { id, region, level, footprint });
        id
    }

    /// Ids of stored points inside `region` (closed), in id order.
    pub fn stored_in(&self, region: &Region) -> Vec<usize> {
        let f = region.footprint();
        let (lo, hi) = (bucket_of(f[0], f[1]), bucket_of(f[2], f[3]));
        let mut out = Vec::new();
        for bx in lo.0..=hi.0 {
            for by in lo.1..=hi.1 {
                if let Some(ids) = self.buckets.get(&(bx, by)) {
                    out.extend(
                        ids.iter()
                            .copied()
                            .filter(|&i| region.contains_unchecked(&self.points[i].location.0, Closure::Closed)),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn next_arrival(&mut self, t: f64, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        let u: f64 = self.rng.random();
        t - (1.0 - u).ln() / rate
    }

    /// Reveals `region` completely and returns ids of all its points.
    pub fn reveal(&mut self, region: &Region) -> Result<Vec<usize>> {
        let volume = self.check_region(region)?;
        let cached = self.regions.iter().any(|r| r.level >= 1.0 && &r.region == region);
        if !cached {
            let rate = self.intensity * volume;
            let room = self.budget.saturating_sub(self.points.len() as u64);
            if rate > room as f64 {
                return Err(Error::PointBudget { needed: rate.ceil() as u64, budget: self.budget });
            }
            let id = self.regions.len();
            let mut fresh = Vec::new();
            let mut buf = vec![0.0; self.dim];
            let mut t = self.next_arrival(0.0, rate);
            while t <= 1.0 {
                region.sample_into(&mut self.rng, &mut buf);
                self.draws += 1;
                if !self.covered(&buf, t) {
                    fresh.push((buf.clone(), t));
                }
                t = self.next_arrival(t, rate);
            }
            for (x, m) in fresh {
                self.store(x, m, id)?;
            }
            self.register(region.clone(), 1.0);
        }
        Ok(self.stored_in(region))
    }

    /// All points of the process in a cell.
    pub fn points_in_cell(&mut self, cell: &Cell) -> Result<Vec<PoissonPoint>> {
        let ids = self.reveal(&Region::Cell(cell.clone()))?;
        Ok(ids.into_iter().map(|i| self.points[i].clone()).collect())
    }

    /// All points of the process in the closed ball `B(center, radius)`.
    pub fn points_in_ball(&mut self, center: &Point, radius: f64) -> Result<Vec<PoissonPoint>> {
        check_dim(self.dim, center.dim())?;
        if !(radius >= 0.0) {
            return domain("radius must be >= 0");
        }
        let ids = self.reveal(&Region::ball(center.clone(), radius))?;
        Ok(ids.into_iter().map(|i| self.points[i].clone()).collect())
    }

    /// The point of `Π ∩ target` with the smallest mark, i.e. a uniformly
    /// random point of `Π ∩ target`, or `None` if that set is empty.
    ///
    /// `envelope` must be a ball or cell containing `target`; it is revealed up
    /// to the mark of the returned point (fully if none exists).
    pub fn pick_uniform(&mut self, target: &Region, envelope: &Region) -> Result<Option<usize>> {
        self.pick_uniform_excluding(target, envelope, &[])
    }

    /// [`pick_uniform`](Self::pick_uniform) ignoring the stored points in
    /// `exclude`. With `target == envelope` this is an emptiness test that stops
    /// at the first other point instead of revealing the whole region.
    pub fn pick_uniform_excluding(&mut self, target: &Region, envelope: &Region, exclude: &[usize]) -> Result<Option<usize>> {
        let volume = self.check_region(envelope)?;
        check_dim(self.dim, target.dim())?;
        target.validate()?;

        let known = self
            .stored_in(target)
            .into_iter()
            .filter(|i| !exclude.contains(i))
            .map(|i| (self.points[i].mark, i))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        let stop = known.map_or(1.0, |(m, _)| m.min(1.0));

        let id = self.regions.len();
        let rate = self.intensity * volume;
        let mut buf = vec![0.0; self.dim];
        let mut revealed = Vec::new();
        let mut hit = None;
        let mut t = self.next_arrival(0.0, rate);
        while t <= stop {
            envelope.sample_into(&mut self.rng, &mut buf);
            self.draws += 1;
            if !self.covered(&buf, t) {
                let inside = target.contains_unchecked(&buf, Closure::Closed);
                revealed.push((buf.clone(), t));
                if inside {
                    hit = Some(revealed.len() - 1);
                    break;
                }
                if revealed.len() as u64 + self.points.len() as u64 > self.budget {
                    return Err(Error::PointBudget { needed: revealed.len() as u64 + self.points.len() as u64, budget: self.budget });
                }
            }
            t = self.next_arrival(t, rate);
        }
        let level = match hit {
            Some(k) => revealed[k].1,
            None => stop,
        };
        let mut picked = known.filter(|_| hit.is_none()).map(|(_, i)| i);
        for (k, (x, m)) in revealed.into_iter().enumerate() {
            let pid = self.store(x, m, id)?;
            if Some(k) == hit {
                picked = Some(pid);
            }
        }
        self.register(envelope.clone(), level);
        Ok(picked)
    }

    /// Uniform choice among `candidates` using this registry's stream.
    pub fn choose(&mut self, candidates: &[PoissonPoint]) -> Result<PoissonPoint> {
        uniform_choice(candidates, &mut self.rng)
    }

    /// Declares `region` fully revealed with exactly `points` in it, each given a
    /// fresh uniform mark. Used to replay recorded configurations.
    pub fn insert_revealed(&mut self, region: Region, points: Vec<Point>) -> Result<Vec<usize>> {
        self.check_region(&region)?;
        for p in &points {
            if !region.contains(p, Closure::Closed)? {
                return domain("inserted point lies outside its region");
            }
            if self.covered(&p.0, 1.0) {
                return domain("inserted point overlaps an already revealed region");
            }
        }
        let id = self.regions.len();
        let mut ids = Vec::new();
        for p in points {
            let m: f64 = self.rng.random();
            ids.push(self.store(p.0, m, id)?);
        }
        self.register(region, 1.0);
        Ok(ids)
    }

    /// Whether the closed ball `B(center, radius)` lies inside one fully revealed
    /// ball or cell, so every point of the process in it is stored.
    pub fn ball_fully_revealed(&self, center: &Point, radius: f64) -> bool {
        self.regions.iter().filter(|r| r.level >= 1.0).any(|r| match &r.region {
            Region::Ball { center: c, radius: big } => center.dist(c) + radius <= *big,
            Region::Cell(cell) => {
                let dp = ((center.0[0] - cell.site[0]).powi(2) + (center.0[1] - cell.site[1]).powi(2)).sqrt();
                let dt = dist2(&center.0[2..], &cell.layer_center).sqrt();
                dp + radius <= cell.eps && dt + radius <= cell.half_width
            }
            _ => false,
        })
    }

    /// Line-oriented dump: one `region` line per revealed region (shape as
    /// JSON), then one `point` line per stored point.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# registry dim={} intensity={:.16e} seed={} rng={}",
            self.dim,
            self.intensity,
            self.seed,
            rng::RNG_ALGORITHM
        )?;
        for r in &self.regions {
            let shape = serde_json::to_string(&r.region).map_err(io::Error::other)?;
            writeln!(w, "region {} {:.16e} {}", r.id, r.level, shape)?;
        }
        for p in &self.points {
            write!(w, "point {} {} {:.16e} {}", p.id, p.origin_region, p.mark, u8::from(p.consumed))?;
            for c in &p.location.0 {
                write!(w, " {c:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Uniform choice that depends only on the set of candidates: they are sorted
/// lexicographically by coordinates before drawing.
pub fn uniform_choice<R: Rng + ?Sized>(candidates: &[PoissonPoint], rng: &mut R) -> Result<PoissonPoint> {
    if candidates.is_empty() {
        return domain("uniform choice from an empty set");
    }
    let mut sorted: Vec<&PoissonPoint> = candidates.iter().collect();
    sorted.sort_by(|a, b| {
        a.location
            .0
            .iter()
            .zip(&b.location.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(sorted[rng.random_range(0..sorted.len())].clone())
}
