//! Monte Carlo verification suites for the volume bounds, the isolation
//! bounds and the lazy sampler. Each check compares an estimate against a
//! closed form (or an independent brute-force sampler) at a fixed number of
//! standard errors.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bounds::{mc_correlation_check, mc_isolated_check};
use crate::error::{domain, Result};
use crate::geometry::{
    g_profile, mc_region_volume, omega, search_cell_half_width, sphcyl_radii, twosph_fraction_check,
    unit_ball_volume, volcalc_lower_bound, Closure, Point, Region, DELTA, EPS, MU,
};
use crate::rng;
use crate::sampler::RegionRegistry;

/// Number of standard errors allowed in every statistical comparison.
pub const SIGMAS: f64 = 4.0;
/// Significance level of the sampler's chi-square tests.
pub const CHI2_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub pass: bool,
}

impl Check {
    fn within(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Check { name: name.into(), value, lower, upper, pass: lower <= value && value <= upper }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: value {:.6e} in [{:.6e}, {:.6e}]",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.lower,
            self.upper
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Positions `x ∈ W` used by the volume checks: planar centre or far edge,
/// transverse centre or boundary. The neighbour cell is at planar `(0, 1)`.
pub fn probe_positions(d: usize, c: f64) -> Vec<(String, Point)> {
    let mut out = Vec::new();
    for (pn, py) in [("centre", 0.0), ("far-edge", -EPS)] {
        for (tn, t) in [("axis", 0.0), ("rim", c)] {
            let mut x = vec![0.0; d];
            x[1] = py;
            x[2] = t;
            out.push((format!("{pn}/{tn}"), Point(x)));
        }
    }
    out
}

/// Neighbour cell `W'` one unit from the origin cell.
fn neighbour_cell(d: usize, c: f64) -> Region {
    Region::cell([0.0, 1.0], EPS, vec![0.0; d - 2], c)
}

/// A cell over `W'`'s disc that contains `B(x, radius) ∩ W'`.
fn neighbour_envelope(x: &Point, radius: f64) -> Option<Region> {
    let planar = (x.0[0].powi(2) + (x.0[1] - 1.0).powi(2)).sqrt();
    let dmin = (planar - EPS).max(0.0);
    (radius > dmin).then(|| Region::cell([0.0, 1.0], EPS, x.transverse().to_vec(), (radius * radius - dmin * dmin).sqrt()))
}

/// MC estimate of `L(W' ∩ B(x, outer) \ B(x, inner))`, with `inner = 0` for a plain ball.
fn lens_volume(d: usize, c: f64, x: &Point, inner: f64, outer: f64, n: u64, seed: u64) -> Result<crate::VolumeEstimate> {
    let Some(env) = neighbour_envelope(x, outer) else {
        return Ok(crate::VolumeEstimate { mean: 0.0, std_error: 0.0, samples: n });
    };
    let mut parts = vec![neighbour_cell(d, c), Region::ball(x.clone(), outer)];
    if inner > 0.0 {
        parts[1] = Region::Annulus { center: x.clone(), inner, outer };
    }
    mc_region_volume(&Region::Intersection(parts), &env, n, seed)
}

/// Ball volumes, the volume lower bound for `S`, the cylinder sandwich, the
/// two-ball fraction at the searched `C`, and the profile `g`.
pub fn geometry_suite(n: u64, seed: u64) -> Result<SuiteReport> {
    if n == 0 {
        return domain("sample budget must be >= 1");
    }
    let mut checks = Vec::new();

    for d in [2usize, 3, 5, 11] {
        let unit = Region::ball(Point::origin(d), 1.0);
        let bounding = Region::ball(Point::origin(d), 1.1);
        let est = mc_region_volume(&unit, &bounding, n, rng::mix64(seed ^ d as u64))?;
        let exact = unit_ball_volume(d)?;
        checks.push(Check::within(
            format!("ball-volume/d{d}"),
            est.mean,
            exact - SIGMAS * est.std_error,
            exact + SIGMAS * est.std_error,
        ));
    }

    let worst = (3..=100usize)
        .map(|d| ((omega(d - 2) * 2.0 * std::f64::consts::PI / d as f64) / omega(d) - 1.0).abs())
        .fold(0.0, f64::max);
    checks.push(Check::within("ball-volume/recurrence-3..100", worst, 0.0, 1e-12));

    let c11 = search_cell_half_width(11, n, seed)?;
    checks.push(Check::within(
        format!("twosph/d11/C{}", c11.half_width),
        c11.fraction.mean,
        1.0 / 3.0 + SIGMAS * c11.fraction.std_error,
        1.0,
    ));
    let c11 = c11.half_width;

    let bound = volcalc_lower_bound(11)?;
    for (ri, r) in [MU - DELTA, MU, MU + DELTA].into_iter().enumerate() {
        for (pi, (pname, x)) in probe_positions(11, c11).into_iter().enumerate() {
            let s = rng::stream_id(seed, &[11, ri as i64, pi as i64]);
            let est = lens_volume(11, c11, &x, r + MU - DELTA, r + MU + DELTA, n, s)?;
            checks.push(Check::within(
                format!("volcalc/d11/r{r:.2}/{pname}"),
                est.mean + SIGMAS * est.std_error,
                bound,
                f64::INFINITY,
            ));
        }
    }

    for d in [11usize, 13] {
        let c = search_cell_half_width(d, n, rng::mix64(seed ^ 0x5c))?.half_width;
        let k = (d - 2) as i32;
        let scale = omega(2) * omega(d - 2) * EPS * EPS;
        for (ri, big_r) in [1.3, 1.5, 1.7].into_iter().enumerate() {
            let (r1, r2) = sphcyl_radii(big_r, EPS)?;
            let (lo, hi) = (scale * r1.powi(k) / 3.0, scale * r2.powi(k));
            for (pi, (pname, x)) in probe_positions(d, c).into_iter().enumerate() {
                let s = rng::stream_id(seed, &[d as i64, 100 + ri as i64, pi as i64]);
                let est = lens_volume(d, c, &x, 0.0, big_r, n, s)?;
                let slack = SIGMAS * est.std_error;
                checks.push(Check::within(format!("sphcyl/d{d}/R{big_r}/{pname}"), est.mean, lo - slack, hi + slack));
            }
        }
    }

    let grid: Vec<f64> = (0..1000).map(|i| MU - DELTA + 2.0 * DELTA * i as f64 / 999.0).collect();
    let mut increasing = true;
    let mut min_ratio = f64::INFINITY;
    for d in 11..=60 {
        let mut prev = f64::NEG_INFINITY;
        for &r in &grid {
            let g = g_profile(r, d)?;
            increasing &= g.value > prev;
            prev = g.value;
            min_ratio = min_ratio.min(g.upper.powi(2) / g.lower.powi(2));
        }
    }
    checks.push(Check::within("g-profile/increasing-d11..60", f64::from(u8::from(increasing)), 1.0, 1.0));
    checks.push(Check::within("g-profile/ratio-min", min_ratio, 1.4, f64::INFINITY));
    checks.push(Check::within("g-profile/1.4^3.5", 1.4f64.powf(3.5), 3.0, f64::INFINITY));

    let far = twosph_fraction_check(3, 64.0, 1.0, 64.0, n, seed)?;
    checks.push(Check::within(
        "twosph/d3/large-C-half",
        far.mean,
        0.5 - 0.02 - SIGMAS * far.std_error,
        0.5 + SIGMAS * far.std_error,
    ));

    Ok(SuiteReport { suite: "geometry".into(), checks })
}

/// Isolation bound and the conditioning inequality at `d = 2`.
pub fn isolation_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let s = Region::ball(Point::origin(2), 1.0);
    let mut checks = Vec::new();
    let iso = mc_isolated_check(1.0, 2, &s, 0.3, trials, seed)?;
    checks.push(Check::within(
        "isolated/d2/lambda1/r0.3",
        iso.empirical + SIGMAS * iso.std_error,
        iso.bound,
        f64::INFINITY,
    ));
    let dense = mc_isolated_check(50.0, 2, &s, 0.02, trials, rng::mix64(seed ^ 1))?;
    checks.push(Check::within(
        "isolated/d2/lambda50/r0.02",
        dense.empirical + SIGMAS * dense.std_error,
        dense.bound,
        f64::INFINITY,
    ));

    for (name, z) in [
        ("correlation/d2/near-annulus", Region::Annulus { center: Point::origin(2), inner: 1.0, outer: 1.3 }),
        ("correlation/d2/far-ball", Region::ball(Point(vec![3.0, 0.0]), 0.5)),
    ] {
        let c = mc_correlation_check(1.0, 2, &s, &z, 0.3, trials, rng::mix64(seed ^ 2))?;
        let sigma = (c.unconditional_se.powi(2) + c.conditional_se.powi(2)).sqrt();
        checks.push(Check::within(name, c.conditional + SIGMAS * sigma, c.unconditional, f64::INFINITY));
    }
    Ok(SuiteReport { suite: "isolation".into(), checks })
}

/// One step of the scripted sampler workload.
#[derive(Debug, Clone)]
pub enum Query {
    /// Full reveal; its point count is recorded.
    Count(Region),
    /// Minimum-mark pick of `target` inside `envelope`; not recorded.
    Pick { target: Region, envelope: Region },
}

/// Ten overlapping ball and cell queries in the plane, with two interleaved picks.
pub fn scripted_queries() -> Vec<Query> {
    let b = |x: f64, y: f64, r: f64| Region::ball(Point(vec![x, y]), r);
    let c = |x: f64, y: f64, e: f64| Region::cell([x, y], e, Vec::new(), 1.0);
    vec![
        Query::Count(b(0.0, 0.0, 0.6)),
        Query::Count(c(0.5, 0.0, 0.5)),
        Query::Count(b(0.3, 0.3, 0.4)),
        Query::Pick { target: b(-0.3, 0.0, 0.3), envelope: b(-0.3, 0.0, 0.6) },
        Query::Count(b(-0.4, 0.0, 0.5)),
        Query::Count(c(0.0, 0.5, 0.45)),
        Query::Count(b(0.0, 0.0, 0.25)),
        Query::Pick {
            target: Region::Intersection(vec![b(0.4, -0.3, 0.5), b(0.0, 0.0, 0.6)]),
            envelope: b(0.4, -0.3, 0.5),
        },
        Query::Count(b(0.6, -0.4, 0.5)),
        Query::Count(c(-0.5, -0.5, 0.4)),
        Query::Count(b(0.0, 0.0, 0.6)),
        Query::Count(b(0.0, -0.2, 0.9)),
    ]
}

fn counted(queries: &[Query]) -> Vec<&Region> {
    queries
        .iter()
        .filter_map(|q| match q {
            Query::Count(r) => Some(r),
            Query::Pick { .. } => None,
        })
        .collect()
}

/// Count vector of one lazy replay.
pub fn lazy_counts(queries: &[Query], lambda: f64, seed: u64, trial: u64) -> Result<Vec<u32>> {
    let mut reg = RegionRegistry::with_stream(lambda, 2, seed, trial)?;
    let mut out = Vec::new();
    for q in queries {
        match q {
            Query::Count(r) => out.push(reg.reveal(r)?.len() as u32),
            Query::Pick { target, envelope } => {
                reg.pick_uniform(target, envelope)?;
            }
        }
    }
    Ok(out)
}

/// Count vector from one global Poisson sample in a box around every query.
pub fn oracle_counts(queries: &[Query], lambda: f64, seed: u64, trial: u64) -> Vec<u32> {
    let regions = counted(queries);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in &regions {
        let (a, b) = r.bounding_box();
        for k in 0..2 {
            lo[k] = lo[k].min(a[k]);
            hi[k] = hi[k].max(b[k]);
        }
    }
    let mut rng = rng::stream(seed, trial);
    let mean = lambda * (hi[0] - lo[0]) * (hi[1] - lo[1]);
    let n = if mean > 0.0 { Poisson::new(mean).unwrap().sample(&mut rng) as usize } else { 0 };
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])]).collect();
    regions
        .iter()
        .map(|r| pts.iter().filter(|p| r.contains_unchecked(&p[..], Closure::Closed)).count() as u32)
        .collect()
}

/// Two-sample chi-square homogeneity test; categories with fewer than
/// `min_pooled` combined observations are merged. Returns `(statistic, df, p)`.
pub fn chi2_homogeneity<K: std::hash::Hash + Eq + Clone + Ord>(a: &[K], b: &[K], min_pooled: u64) -> (f64, usize, f64) {
    let mut table: HashMap<K, (u64, u64)> = HashMap::new();
    for k in a {
        table.entry(k.clone()).or_default().0 += 1;
    }
    for k in b {
        table.entry(k.clone()).or_default().1 += 1;
    }
    let mut keys: Vec<K> = table.keys().cloned().collect();
    keys.sort();
    let mut cells: Vec<(u64, u64)> = Vec::new();
    let mut pooled = (0u64, 0u64);
    for k in keys {
        let c = table[&k];
        if c.0 + c.1 >= min_pooled {
            cells.push(c);
        } else {
            pooled.0 += c.0;
            pooled.1 += c.1;
        }
    }
    if pooled.0 + pooled.1 > 0 {
        cells.push(pooled);
    }
    if cells.len() < 2 {
        return (0.0, 0, 1.0);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut stat = 0.0;
    for (x, y) in &cells {
        let col = (x + y) as f64;
        let (ea, eb) = (na * col / total, nb * col / total);
        stat += (*x as f64 - ea).powi(2) / ea + (*y as f64 - eb).powi(2) / eb;
    }
    let df = cells.len() - 1;
    let p = ChiSquared::new(df as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN);
    (stat, df, p)
}

/// Lazy registry against the brute-force oracle over `seeds` replays: joint
/// count vector, every marginal, and every consecutive pair.
pub fn sampler_suite(seeds: u64, seed: u64) -> Result<SuiteReport> {
    if seeds == 0 {
        return domain("seed budget must be >= 1");
    }
    let lambda = 3.0;
    let queries = scripted_queries();
    let lazy: Vec<Vec<u32>> = (0..seeds)
        .into_par_iter()
        .map(|t| lazy_counts(&queries, lambda, seed, t))
        .collect::<Result<_>>()?;
    let oracle_seed = rng::mix64(seed ^ 0x0a);
    let oracle: Vec<Vec<u32>> = (0..seeds).into_par_iter().map(|t| oracle_counts(&queries, lambda, oracle_seed, t)).collect();

    let mut checks = Vec::new();
    let mut add = |name: String, (_, df, p): (f64, usize, f64)| {
        checks.push(Check { name: format!("{name}/df{df}"), value: p, lower: CHI2_ALPHA, upper: 1.0, pass: p >= CHI2_ALPHA });
    };
    // joint law through the vector of "count above floor(lambda |Q|)" indicators
    let cuts: Vec<u32> = counted(&queries).iter().map(|r| (lambda * r.volume().unwrap()).floor() as u32).collect();
    let split = |v: &Vec<u32>| -> Vec<bool> { v.iter().zip(&cuts).map(|(x, c)| x > c).collect() };
    let a: Vec<Vec<bool>> = lazy.iter().map(split).collect();
    let b: Vec<Vec<bool>> = oracle.iter().map(split).collect();
    add("chi2/joint-split".into(), chi2_homogeneity(&a, &b, 10));
    let m = lazy[0].len();
    for q in 0..m {
        let a: Vec<u32> = lazy.iter().map(|v| v[q]).collect();
        let b: Vec<u32> = oracle.iter().map(|v| v[q]).collect();
        add(format!("chi2/marginal-{q}"), chi2_homogeneity(&a, &b, 10));
    }
    for q in 0..m - 1 {
        let a: Vec<(u32, u32)> = lazy.iter().map(|v| (v[q], v[q + 1])).collect();
        let b: Vec<(u32, u32)> = oracle.iter().map(|v| (v[q], v[q + 1])).collect();
        add(format!("chi2/pair-{q}-{}", q + 1), chi2_homogeneity(&a, &b, 10));
    }
    // repeated query must reproduce the first one exactly
    let same = lazy.iter().all(|v| v[0] == v[m - 2]);
    checks.push(Check::within("cache/repeat-identical", f64::from(u8::from(same)), 1.0, 1.0));
    Ok(SuiteReport { suite: "sampler".into(), checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_identical_samples() {
        let a: Vec<u32> = (0..1000).map(|i| i % 4).collect();
        let (stat, df, p) = chi2_homogeneity(&a, &a, 5);
        assert_eq!(stat, 0.0);
        assert_eq!(df, 3);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chi2_detects_shift() {
        let a: Vec<u32> = (0..2000).map(|i| i % 4).collect();
        let b: Vec<u32> = (0..2000).map(|i| (i % 4).min(2)).collect();
        assert!(chi2_homogeneity(&a, &b, 5).2 < 1e-6);
    }

    #[test]
    fn oracle_and_lazy_agree_in_mean() {
        let q = scripted_queries();
        let n = 2000;
        let mut sums = [vec![0u64; 10], vec![0u64; 10]];
        for t in 0..n {
            for (k, v) in lazy_counts(&q, 3.0, 1, t).unwrap().into_iter().enumerate() {
                sums[0][k] += v as u64;
            }
            for (k, v) in oracle_counts(&q, 3.0, 2, t).into_iter().enumerate() {
                sums[1][k] += v as u64;
            }
        }
        for (k, r) in counted(&q).into_iter().enumerate() {
            let mean = 3.0 * r.volume().unwrap();
            let sd = (mean / n as f64).sqrt();
            for s in &sums {
                assert!((s[k] as f64 / n as f64 - mean).abs() < 5.0 * sd, "query {k}");
            }
        }
    }

    #[test]
    fn positions_lie_in_origin_cell() {
        let w = Region::cell([0.0, 0.0], EPS, vec![0.0; 9], 4.0);
        for (_, x) in probe_positions(11, 4.0) {
            assert!(w.contains(&x, Closure::Closed).unwrap());
        }
    }
}
