//! Euclidean geometry in `R^d`: ball volumes, the region shapes used by the
//! construction (balls, cells, annuli and their combinations), uniform
//! samplers, hit-or-miss volume estimation, and the closed-form radii and
//! volume bounds for cell/ball intersections.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{check_dim, domain, Result};
use crate::rng;

/// Radius of the first sphere and centre of the radius window.
pub const MU: f64 = 0.75;
/// Half-width of the radius window `[MU - DELTA, MU + DELTA]`.
pub const DELTA: f64 = 0.1;
/// Radius of the planar disc of every cell.
pub const EPS: f64 = 0.01;

/// A point of `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn origin(dim: usize) -> Self {
        Point(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dist(&self, other: &Point) -> f64 {
        dist2(&self.0, &other.0).sqrt()
    }

    /// First two coordinates (the lattice plane).
    pub fn planar(&self) -> [f64; 2] {
        [self.0[0], self.0[1]]
    }

    /// Coordinates after the first two.
    pub fn transverse(&self) -> &[f64] {
        &self.0[2..]
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Volume of the unit ball in dimension `d >= 1`, via `pi^(d/2) / Gamma(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d == 0 {
        return domain("unit ball volume needs d >= 1");
    }
    Ok(omega(d))
}

/// `ln` of the unit ball volume; defined for every `d >= 0` and safe for large `d`.
pub fn ln_unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

/// Unit ball volume for `d >= 0` (the 0-ball is a point of measure 1).
pub(crate) fn omega(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    if d <= 300 {
        std::f64::consts::PI.powf(h) / gamma(h + 1.0)
    } else {
        ln_unit_ball_volume(d).exp()
    }
}

pub fn ball_volume(dim: usize, radius: f64) -> f64 {
    omega(dim) * radius.powi(dim as i32)
}

/// Whether ball boundaries count as inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Closure {
    Open,
    #[default]
    Closed,
}

/// A cell `B_2(site, eps) x B_{d-2}(layer_center, half_width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub site: [f64; 2],
    pub eps: f64,
    pub layer_center: Vec<f64>,
    pub half_width: f64,
}

impl Cell {
    pub fn dim(&self) -> usize {
        2 + self.layer_center.len()
    }

    pub fn volume(&self) -> f64 {
        ball_volume(2, self.eps) * ball_volume(self.layer_center.len(), self.half_width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Ball { center: Point, radius: f64 },
    Cell(Cell),
    /// Closed shell `inner <= |p - center| <= outer`.
    Annulus { center: Point, inner: f64, outer: f64 },
    Intersection(Vec<Region>),
    Difference { outer: Box<Region>, subtracted: Vec<Region> },
}

impl Region {
    pub fn ball(center: Point, radius: f64) -> Self {
        Region::Ball { center, radius }
    }

    pub fn cell(site: [f64; 2], eps: f64, layer_center: Vec<f64>, half_width: f64) -> Self {
        Region::Cell(Cell { site, eps, layer_center, half_width })
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Ball { center, .. } | Region::Annulus { center, .. } => center.dim(),
            Region::Cell(c) => c.dim(),
            Region::Intersection(parts) => parts.first().map_or(0, Region::dim),
            Region::Difference { outer, .. } => outer.dim(),
        }
    }

    /// Checks radii and that all parts share one ambient dimension.
    pub fn validate(&self) -> Result<()> {
        match self {
            Region::Ball { radius, .. } if !(*radius >= 0.0) => domain("ball radius must be >= 0"),
            Region::Annulus { inner, outer, .. } if !(0.0 < *inner && inner <= outer) => {
                domain("annulus needs 0 < inner <= outer")
            }
            Region::Cell(c) if !(c.eps >= 0.0 && c.half_width >= 0.0) => {
                domain("cell radii must be >= 0")
            }
            Region::Intersection(parts) => {
                if parts.is_empty() {
                    return domain("empty intersection");
                }
                let d = parts[0].dim();
                for p in parts {
                    check_dim(d, p.dim())?;
                    p.validate()?;
                }
                Ok(())
            }
            Region::Difference { outer, subtracted } => {
                outer.validate()?;
                for s in subtracted {
                    check_dim(outer.dim(), s.dim())?;
                    s.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Membership test; `closure` selects open or closed balls and cells.
    pub fn contains(&self, p: &Point, closure: Closure) -> Result<bool> {
        check_dim(self.dim(), p.dim())?;
        Ok(self.contains_unchecked(&p.0, closure))
    }

    pub(crate) fn contains_unchecked(&self, p: &[f64], closure: Closure) -> bool {
        let within = |d2: f64, r: f64| match closure {
            Closure::Open => d2 < r * r,
            Closure::Closed => d2 <= r * r,
        };
        match self {
            Region::Ball { center, radius } => within(dist2(&center.0, p), *radius),
            Region::Cell(c) => {
                let dx = p[0] - c.site[0];
                let dy = p[1] - c.site[1];
                within(dx * dx + dy * dy, c.eps)
                    && within(dist2(&c.layer_center, &p[2..]), c.half_width)
            }
            Region::Annulus { center, inner, outer } => {
                let d2 = dist2(&center.0, p);
                inner * inner <= d2 && d2 <= outer * outer
            }
            Region::Intersection(parts) => parts.iter().all(|r| r.contains_unchecked(p, closure)),
            Region::Difference { outer, subtracted } => {
                outer.contains_unchecked(p, closure)
                    && !subtracted.iter().any(|r| r.contains_unchecked(p, closure))
            }
        }
    }

    /// Exact Lebesgue measure where it has a closed form.
    pub fn volume(&self) -> Option<f64> {
        match self {
            Region::Ball { center, radius } => Some(ball_volume(center.dim(), *radius)),
            Region::Cell(c) => Some(c.volume()),
            Region::Annulus { center, inner, outer } => {
                let d = center.dim();
                Some(ball_volume(d, *outer) - ball_volume(d, *inner))
            }
            _ => None,
        }
    }

    /// Uniform point of the region, for shapes with an exact sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Point> {
        match self {
            Region::Ball { center, radius } => {
                let mut out = vec![0.0; center.dim()];
                sample_ball_into(rng, &center.0, *radius, &mut out);
                Some(Point(out))
            }
            Region::Cell(c) => {
                let mut out = vec![0.0; c.dim()];
                sample_cell_into(rng, c, &mut out);
                Some(Point(out))
            }
            _ => None,
        }
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> bool {
        match self {
            Region::Ball { center, radius } => {
                sample_ball_into(rng, &center.0, *radius, out);
                true
            }
            Region::Cell(c) => {
                sample_cell_into(rng, c, out);
                true
            }
            _ => false,
        }
    }

    /// Axis-aligned box `[lo, hi]` containing the region.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Region::Ball { center, radius: r } | Region::Annulus { center, outer: r, .. } => (
                center.0.iter().map(|c| c - r).collect(),
                center.0.iter().map(|c| c + r).collect(),
            ),
            Region::Cell(c) => {
                let mut lo = vec![c.site[0] - c.eps, c.site[1] - c.eps];
                let mut hi = vec![c.site[0] + c.eps, c.site[1] + c.eps];
                lo.extend(c.layer_center.iter().map(|z| z - c.half_width));
                hi.extend(c.layer_center.iter().map(|z| z + c.half_width));
                (lo, hi)
            }
            Region::Intersection(parts) => {
                let (mut lo, mut hi) = parts[0].bounding_box();
                for p in &parts[1..] {
                    let (l, h) = p.bounding_box();
                    for i in 0..lo.len() {
                        lo[i] = lo[i].max(l[i]);
                        hi[i] = hi[i].min(h[i]);
                    }
                }
                (lo, hi)
            }
            Region::Difference { outer, .. } => outer.bounding_box(),
        }
    }

    /// Bounding rectangle in the first two coordinates, used for spatial indexing.
    pub(crate) fn footprint(&self) -> [f64; 4] {
        match self {
            Region::Ball { center, radius: r } | Region::Annulus { center, outer: r, .. } => {
                [center.0[0] - r, center.0[1] - r, center.0[0] + r, center.0[1] + r]
            }
            Region::Cell(c) => [
                c.site[0] - c.eps,
                c.site[1] - c.eps,
                c.site[0] + c.eps,
                c.site[1] + c.eps,
            ],
            Region::Intersection(parts) => parts.iter().skip(1).fold(parts[0].footprint(), |a, p| {
                let b = p.footprint();
                [a[0].max(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].min(b[3])]
            }),
            Region::Difference { outer, .. } => outer.footprint(),
        }
    }
}

/// Uniform point in a ball: isotropic direction scaled by `U^(1/d) * radius`.
pub fn sample_ball_into<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64, out: &mut [f64]) {
    let d = center.len();
    if d == 0 {
        return;
    }
    let mut n2 = 0.0;
    for o in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *o = g;
        n2 += g * g;
    }
    while n2 == 0.0 {
        n2 = 0.0;
        for o in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *o = g;
            n2 += g * g;
        }
    }
    let u: f64 = rng.random();
    let scale = radius * u.powf(1.0 / d as f64) / n2.sqrt();
    for (o, c) in out.iter_mut().zip(center) {
        *o = c + *o * scale;
    }
}

fn sample_cell_into<R: Rng + ?Sized>(rng: &mut R, c: &Cell, out: &mut [f64]) {
    let (planar, rest) = out.split_at_mut(2);
    sample_ball_into(rng, &c.site, c.eps, planar);
    sample_ball_into(rng, &c.layer_center, c.half_width, rest);
}

/// Hit-or-miss volume estimate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl VolumeEstimate {
    fn from_hits(hits: u64, samples: u64, scale: f64) -> Self {
        let p = hits as f64 / samples as f64;
        VolumeEstimate {
            mean: scale * p,
            std_error: scale * (p * (1.0 - p) / samples as f64).sqrt(),
            samples,
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        VolumeEstimate { mean: self.mean * k, std_error: self.std_error * k, ..self }
    }
}

const MC_CHUNK: u64 = 1 << 15;

/// Counts how many of `n` uniform samples of `bounding` fall in `region`.
///
/// Work is split into fixed-size chunks, chunk `i` drawing from stream `i` of
/// `seed`, so the count is independent of the thread pool.
pub(crate) fn mc_hits(region: &Region, bounding: &Region, n: u64, seed: u64) -> u64 {
    let chunks = n.div_ceil(MC_CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i);
            let len = MC_CHUNK.min(n - i * MC_CHUNK);
            let mut buf = vec![0.0; bounding.dim()];
            let mut hits = 0u64;
            for _ in 0..len {
                bounding.sample_into(&mut rng, &mut buf);
                if region.contains_unchecked(&buf, Closure::Closed) {
                    hits += 1;
                }
            }
            hits
        })
        .sum()
}

/// Estimates the volume of `region` by sampling uniformly in `bounding`,
/// which must be a ball or a cell containing `region`.
pub fn mc_region_volume(region: &Region, bounding: &Region, n: u64, seed: u64) -> Result<VolumeEstimate> {
    if n == 0 {
        return domain("need at least one sample");
    }
    check_dim(bounding.dim(), region.dim())?;
    region.validate()?;
    bounding.validate()?;
    let vol = match bounding {
        Region::Ball { .. } | Region::Cell(_) => bounding.volume().unwrap(),
        _ => return domain("bounding region must be a ball or a cell"),
    };
    let hits = mc_hits(region, bounding, n, seed);
    Ok(VolumeEstimate::from_hits(hits, n, vol))
}

/// The reduced transverse radii `sqrt(R^2 - (1 + 2 eps)^2)` and
/// `sqrt(R^2 - (1 - 2 eps)^2)` that sandwich a ball of radius `R` cut by a
/// cell one unit away.
pub fn sphcyl_radii(r: f64, eps: f64) -> Result<(f64, f64)> {
    if !(eps >= 0.0) || !(r > 1.0 + 2.0 * eps) {
        return domain(format!("sphcyl radii need R > 1 + 2 eps (R = {r}, eps = {eps})"));
    }
    let r1 = (r * r - (1.0 + 2.0 * eps).powi(2)).sqrt();
    let r2 = (r * r - (1.0 - 2.0 * eps).powi(2)).sqrt();
    Ok((r1, r2))
}

/// Uniform lower bound on the volume of the admissible-centre set `S` in
/// dimension `d >= 11`, with `eps = 0.01`.
pub fn volcalc_lower_bound(d: usize) -> Result<f64> {
    if d < 11 {
        return domain(format!("volume lower bound needs d >= 11, got {d}"));
    }
    Ok(ln_volcalc_lower_bound(d).exp())
}

pub(crate) fn ln_volcalc_lower_bound(d: usize) -> f64 {
    let growth = 1.2f64.powf((d - 2) as f64 / 2.0) - 1.0;
    std::f64::consts::PI.ln() + ln_unit_ball_volume(d - 2) + (EPS * EPS / 3.0).ln() + growth.ln()
}

/// The two transverse radii and `g(r) = upper^(d-2)/3 - lower^(d-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GProfile {
    pub upper: f64,
    pub lower: f64,
    pub value: f64,
}

pub fn g_profile(r: f64, d: usize) -> Result<GProfile> {
    if d < 11 {
        return domain(format!("g profile needs d >= 11, got {d}"));
    }
    let tol = 1e-12;
    if !(r >= MU - DELTA - tol && r <= MU + DELTA + tol) {
        return domain(format!("r = {r} outside [mu - delta, mu + delta]"));
    }
    let upper = ((r + MU + DELTA).powi(2) - (1.0 + 2.0 * EPS).powi(2)).sqrt();
    let lower = ((r + MU - DELTA).powi(2) - (1.0 - 2.0 * EPS).powi(2)).sqrt();
    let k = (d - 2) as i32;
    Ok(GProfile { upper, lower, value: upper.powi(k) / 3.0 - lower.powi(k) })
}

/// Monte Carlo estimate of `L(B(0,C) ∩ B(x,R)) / L(B(x,R))` with `|x| = x_dist`.
pub fn twosph_fraction_check(dim: usize, c: f64, r: f64, x_dist: f64, n: u64, seed: u64) -> Result<VolumeEstimate> {
    if dim == 0 {
        return domain("dimension must be >= 1");
    }
    if !(x_dist >= 0.0) || x_dist > c {
        return domain(format!("x_dist = {x_dist} must lie in [0, C = {c}]"));
    }
    if !(r > 0.0) {
        return domain("R must be positive");
    }
    let mut x = vec![0.0; dim];
    x[0] = x_dist;
    let outer = Region::ball(Point::origin(dim), c);
    let probe = Region::ball(Point(x), r);
    let hits = mc_hits(&outer, &probe, n.max(1), seed);
    Ok(VolumeEstimate::from_hits(hits, n.max(1), 1.0))
}

/// Result of the doubling search for a cell half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfWidthSearch {
    pub dim: usize,
    pub radius: f64,
    pub half_width: f64,
    pub fraction: VolumeEstimate,
    pub tried: Vec<(f64, VolumeEstimate)>,
}

/// Smallest power of two `C >= 1` such that a ball of radius `radius` centred
/// on the surface of `B_dim(0, C)` keeps at least a third of its volume inside,
/// with the estimate's `4 sigma` lower confidence bound above `1/3`.
pub fn search_twosph_c(dim: usize, radius: f64, n: u64, seed: u64) -> Result<HalfWidthSearch> {
    let mut tried = Vec::new();
    let mut c = 1.0;
    for k in 0..40u64 {
        let est = twosph_fraction_check(dim, c, radius, c, n, rng::mix64(seed ^ k))?;
        tried.push((c, est));
        if est.mean - 4.0 * est.std_error >= 1.0 / 3.0 {
            return Ok(HalfWidthSearch { dim, radius, half_width: c, fraction: est, tried });
        }
        c *= 2.0;
    }
    domain("no half-width up to 2^40 passed")
}

/// Searched cell half-width `C` for ambient dimension `d >= 3`: the twosph search
/// in the transverse dimension `d - 2` at the largest reduced radius
/// `R_1(2 (mu + delta))`.
pub fn search_cell_half_width(d: usize, n: u64, seed: u64) -> Result<HalfWidthSearch> {
    if d < 3 {
        return domain("cells need d >= 3");
    }
    let (r1, _) = sphcyl_radii(2.0 * (MU + DELTA), EPS)?;
    search_twosph_c(d - 2, r1, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ball_volume_small_dims() {
        assert!((unit_ball_volume(2).unwrap() - PI).abs() < 1e-14);
        assert!((unit_ball_volume(1).unwrap() - 2.0).abs() < 1e-14);
        // recurrence omega_4 = omega_2 * 2 pi / 4
        let w4 = unit_ball_volume(4).unwrap();
        assert!((w4 - PI * 2.0 * PI / 4.0).abs() < 1e-13);
        assert!((w4 - 4.934_802_200_544_679).abs() < 1e-12);
        assert!(unit_ball_volume(0).is_err());
    }

    #[test]
    fn ln_volume_matches_direct() {
        for d in 1..=120 {
            let a = unit_ball_volume(d).unwrap();
            let b = ln_unit_ball_volume(d).exp();
            assert!(((a - b) / a).abs() < 1e-11, "d = {d}");
        }
    }

    #[test]
    fn membership_examples() {
        let ball = Region::ball(Point::origin(3), 1.0);
        assert!(ball.contains(&Point::origin(3), Closure::Open).unwrap());
        let surface = Point(vec![1.0, 0.0, 0.0]);
        assert!(ball.contains(&surface, Closure::Closed).unwrap());
        assert!(!ball.contains(&surface, Closure::Open).unwrap());

        let shell = Region::Annulus { center: Point::origin(2), inner: 1.4, outer: 1.6 };
        assert!(shell.contains(&Point(vec![1.5, 0.0]), Closure::Closed).unwrap());
        assert!(shell.contains(&Point(vec![0.0, 1.4]), Closure::Open).unwrap());

        let cell = Region::cell([0.0, 0.0], 0.01, vec![0.0], 5.0);
        assert!(!cell.contains(&Point(vec![0.02, 0.0, 0.0]), Closure::Closed).unwrap());
        assert!(cell.contains(&Point(vec![0.005, 0.0, 4.9]), Closure::Closed).unwrap());
        assert!(cell.contains(&Point(vec![0.0, 0.0]), Closure::Closed).is_err());
    }

    #[test]
    fn samplers_stay_inside() {
        let mut rng = rng::stream(3, 0);
        let cell = Region::cell([1.0, -2.0], 0.01, vec![3.0; 7], 2.5);
        let ball = Region::ball(Point(vec![0.5; 5]), 0.3);
        for _ in 0..2000 {
            assert!(cell.contains(&cell.sample(&mut rng).unwrap(), Closure::Closed).unwrap());
            assert!(ball.contains(&ball.sample(&mut rng).unwrap(), Closure::Closed).unwrap());
        }
    }

    #[test]
    fn mc_disc_area() {
        let disc = Region::ball(Point::origin(2), 1.0);
        let square_ish = Region::ball(Point::origin(2), 1.5);
        let est = mc_region_volume(&disc, &square_ish, 1_000_000, 11).unwrap();
        assert!((est.mean - PI).abs() < 3.0 * est.std_error, "{est:?}");
        assert!(mc_region_volume(&disc, &square_ish, 0, 11).is_err());
    }

    #[test]
    fn mc_empty_difference() {
        let b = Region::ball(Point::origin(3), 1.0);
        let empty = Region::Difference { outer: Box::new(b.clone()), subtracted: vec![b.clone()] };
        let est = mc_region_volume(&empty, &b, 10_000, 1).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn mc_is_deterministic() {
        let b = Region::ball(Point::origin(4), 1.0);
        let c = Region::ball(Point::origin(4), 1.2);
        let a1 = mc_region_volume(&b, &c, 100_000, 5).unwrap();
        let a2 = mc_region_volume(&b, &c, 100_000, 5).unwrap();
        assert_eq!(a1, a2);
    }

    #[test]
    fn sphcyl_radii_examples() {
        let (r1, r2) = sphcyl_radii(1.3, 0.01).unwrap();
        assert!((r1 - 0.6496f64.sqrt()).abs() < 1e-12);
        assert!((r2 - 0.7296f64.sqrt()).abs() < 1e-12);
        assert!((r1 - 0.80598).abs() < 1e-5 && (r2 - 0.85417).abs() < 1e-5);
        let (a, b) = sphcyl_radii(2f64.sqrt(), 0.0).unwrap();
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        let (r1, _) = sphcyl_radii(1.7, 0.01).unwrap();
        assert!((r1 - 1.36).abs() < 1e-12);
        assert!(sphcyl_radii(1.02, 0.01).is_err());
        assert!(sphcyl_radii(0.9, 0.01).is_err());
    }

    #[test]
    fn volcalc_bound_d11() {
        let w9 = unit_ball_volume(9).unwrap();
        let expect = PI * w9 * 1e-4 / 3.0 * (1.2f64.powf(4.5) - 1.0);
        let got = volcalc_lower_bound(11).unwrap();
        assert!(((got - expect) / expect).abs() < 1e-12);
        assert!(volcalc_lower_bound(10).is_err());
    }

    #[test]
    fn volcalc_bound_decreases_in_d() {
        // omega_{d-2} shrinks faster than 1.2^((d-2)/2) grows once d >= 8, so the
        // bound falls monotonically over the whole scanned range.
        let v: Vec<f64> = (11..=60).map(|d| volcalc_lower_bound(d).unwrap()).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]));
        assert!((v[0] - 4.392_054_931_506e-4).abs() < 1e-15);
    }

    #[test]
    fn g_profile_endpoints() {
        let g = g_profile(0.65, 11).unwrap();
        let floor = 1.2f64.sqrt().powi(9) / 3.0 - 0.73f64.sqrt().powi(9);
        assert!(g.value >= floor);
        assert!(g_profile(0.85, 11).unwrap().value > g.value);
        assert!(g_profile(0.6, 11).is_err());
        assert!(g_profile(0.7, 10).is_err());
    }

    #[test]
    fn g_ratio_exceeds_1_4() {
        for i in 0..1000 {
            let r = 0.65 + 0.2 * i as f64 / 999.0;
            let g = g_profile(r, 11).unwrap();
            assert!(g.upper * g.upper / (g.lower * g.lower) > 1.4, "r = {r}");
        }
        assert!(1.4f64.powf(3.5) > 3.0);
    }

    #[test]
    fn twosph_trivial_cases() {
        let f = twosph_fraction_check(5, 3.0, 1.0, 0.0, 20_000, 2).unwrap();
        assert_eq!(f.mean, 1.0);
        assert!(twosph_fraction_check(5, 3.0, 1.0, 3.5, 100, 2).is_err());
    }
}
