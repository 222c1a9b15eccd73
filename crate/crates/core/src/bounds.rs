//! Closed-form success bounds for one exploration step, their optimisation
//! over the intensity, the resulting dimension thresholds, and Monte Carlo
//! checks of the isolation bound.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Result};
use crate::geometry::{ln_unit_ball_volume, ln_volcalc_lower_bound, omega, volcalc_lower_bound, Closure, Region, DELTA, MU};
use crate::rng;

/// Required per-step success probability `q`.
pub const DEFAULT_THRESHOLD: f64 = 0.892;

/// Largest dimension scanned by [`min_dimension`].
pub const MAX_SCAN_DIM: usize = 10_000;

/// `(A, B)`: the volume lower bound for the candidate set and the volume of
/// the isolation ball of radius `MU + DELTA`.
pub fn constants_ab(d: usize) -> Result<(f64, f64)> {
    let a = volcalc_lower_bound(d)?;
    Ok((a, omega(d) * (MU + DELTA).powi(d as i32)))
}

fn ln_ab(d: usize) -> (f64, f64) {
    (ln_volcalc_lower_bound(d), ln_unit_ball_volume(d) + d as f64 * (MU + DELTA).ln())
}

/// `A / B` computed from logs of the two constants.
pub fn ratio(d: usize) -> Result<f64> {
    if d < 11 {
        return domain("A and B need d >= 11");
    }
    let (la, lb) = ln_ab(d);
    Ok((la - lb).exp())
}

/// `A / B` from the simplified expression `1e-4 d (1.2^((d-2)/2) - 1) / (6 * 0.85^d)`.
pub fn simplified_ratio(d: usize) -> f64 {
    let d_f = d as f64;
    1e-4 * d_f * (1.2f64.powf((d_f - 2.0) / 2.0) - 1.0) / (6.0 * 0.85f64.powf(d_f))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return domain(format!("intensity must be finite and >= 0, got {lambda}"));
    }
    Ok(())
}

/// `F(lambda) = 1 - lambda B - exp(-lambda A)`.
pub fn f_bound(lambda: f64, d: usize) -> Result<f64> {
    check_lambda(lambda)?;
    let (a, b) = constants_ab(d)?;
    Ok(1.0 - lambda * b - (-lambda * a).exp())
}

/// `G(lambda) = exp(-lambda B) - exp(-lambda A)`, the bound before linearising.
pub fn g_bound(lambda: f64, d: usize) -> Result<f64> {
    check_lambda(lambda)?;
    let (a, b) = constants_ab(d)?;
    Ok((-lambda * b).exp() - (-lambda * a).exp())
}

/// `lambda* = ln(A/B) / A`, or `None` when `A/B <= 1`.
pub fn lambda_star(d: usize) -> Result<Option<f64>> {
    if d < 11 {
        return domain("A and B need d >= 11");
    }
    let (la, lb) = ln_ab(d);
    if la - lb <= 0.0 {
        return Ok(None);
    }
    Ok(Some((la - lb) / la.exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub ratio: f64,
    pub lambda_star: Option<f64>,
    pub f_star: Option<f64>,
    pub exact_g_star: Option<f64>,
    pub passes_threshold: bool,
}

impl BoundsReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.f_star.is_some_and(|f| f >= threshold)
    }

    pub fn csv_header() -> &'static str {
        "d,A,B,ratio,lambda_star,F_star,exact_G_star,passes_threshold"
    }

    /// One CSV row; absent values are empty fields.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        format!(
            "{},{:.16e},{:.16e},{:.16e},{},{},{},{}",
            self.d,
            self.a,
            self.b,
            self.ratio,
            opt(self.lambda_star),
            opt(self.f_star),
            opt(self.exact_g_star),
            self.passes_threshold
        )
    }
}

/// Full report at `d`, judged against `threshold`.
pub fn bounds_report_with(d: usize, threshold: f64) -> Result<BoundsReport> {
    let (a, b) = constants_ab(d)?;
    let r = ratio(d)?;
    let lambda_star = lambda_star(d)?;
    let f_star = lambda_star.map(|_| 1.0 - (r.ln() + 1.0) / r);
    // G - F = exp(-x) - (1 - x) with x = lambda* B, evaluated without cancellation
    let exact_g_star = lambda_star.zip(f_star).map(|(l, f)| {
        let x = l * b;
        f + ((-x).exp_m1() + x)
    });
    let mut report = BoundsReport { d, a, b, ratio: r, lambda_star, f_star, exact_g_star, passes_threshold: false };
    report.passes_threshold = report.passes(threshold);
    Ok(report)
}

pub fn bounds_report(d: usize) -> Result<BoundsReport> {
    bounds_report_with(d, DEFAULT_THRESHOLD)
}

/// Smallest `d >= 11` with a valid `lambda*` and `F(lambda*) >= threshold`.
pub fn min_dimension(threshold: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&threshold) {
        return domain(format!("threshold must lie in [0, 1), got {threshold}"));
    }
    for d in 11..=MAX_SCAN_DIM {
        let r = ratio(d)?;
        if r > 1.0 && 1.0 - (r.ln() + 1.0) / r >= threshold {
            return Ok(d);
        }
    }
    domain(format!("no dimension up to {MAX_SCAN_DIM} reaches {threshold}"))
}

/// Whether `F(lambda*)` is strictly increasing over `d_lo..=d_hi` (all with `A/B > 1`).
///
/// `F(lambda*)` rounds to 1 for large `d`, so the check runs on the deficit
/// `1 - F(lambda*) = (ln r + 1) / r`, which stays representable.
pub fn f_star_increasing(d_lo: usize, d_hi: usize) -> Result<bool> {
    let mut prev = f64::INFINITY;
    for d in d_lo..=d_hi {
        let r = ratio(d)?;
        let deficit = (r.ln() + 1.0) / r;
        if r <= 1.0 || deficit >= prev {
            return Ok(false);
        }
        prev = deficit;
    }
    Ok(true)
}

/// `exp(-lambda omega_d r^d) - exp(-lambda volS)`; may be negative.
pub fn isolated_bound(lambda: f64, d: usize, r: f64, vol_s: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if !(vol_s > 0.0) {
        return domain("volS must be > 0");
    }
    if !(r >= 0.0) || d == 0 {
        return domain("need r >= 0 and d >= 1");
    }
    Ok((-lambda * omega(d) * r.powi(d as i32)).exp() - (-lambda * vol_s).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationCheck {
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub trials: u64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCheck {
    pub unconditional: f64,
    pub unconditional_se: f64,
    pub conditional: f64,
    pub conditional_se: f64,
    /// Trials in which the conditioning region was empty.
    pub accepted: u64,
    pub trials: u64,
    pub pass: bool,
}

const MAX_BRUTE_FORCE_DIM: usize = 5;

struct BoxSampler {
    lo: Vec<f64>,
    hi: Vec<f64>,
    volume: f64,
}

impl BoxSampler {
    fn around(regions: &[&Region], pad: f64) -> Self {
        let d = regions[0].dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in regions {
            let (a, b) = r.bounding_box();
            for k in 0..d {
                lo[k] = lo[k].min(a[k] - pad);
                hi[k] = hi[k].max(b[k] + pad);
            }
        }
        let volume = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
        BoxSampler { lo, hi, volume }
    }

    fn sample<R: Rng>(&self, lambda: f64, rng: &mut R) -> Vec<Vec<f64>> {
        let mean = lambda * self.volume;
        let n = if mean > 0.0 { Poisson::new(mean).unwrap().sample(rng) as usize } else { 0 };
        (0..n)
            .map(|_| self.lo.iter().zip(&self.hi).map(|(a, b)| rng.random_range(*a..*b)).collect())
            .collect()
    }
}

/// Outcome of one brute-force trial: `(x exists and is r-isolated, z was empty)`.
fn isolation_trial(
    sampler: &BoxSampler,
    lambda: f64,
    s: &Region,
    z: Option<&Region>,
    r: f64,
    seed: u64,
    trial: u64,
) -> (bool, bool) {
    let mut rng = rng::stream(seed, trial);
    let pts = sampler.sample(lambda, &mut rng);
    let z_empty = z.is_none_or(|z| !pts.iter().any(|p| z.contains_unchecked(p, Closure::Closed)));
    let inside: Vec<usize> = (0..pts.len()).filter(|&i| s.contains_unchecked(&pts[i], Closure::Closed)).collect();
    if inside.is_empty() {
        return (false, z_empty);
    }
    let x = inside[rng.random_range(0..inside.len())];
    let r2 = r * r;
    let isolated = pts.iter().enumerate().all(|(i, p)| {
        i == x || p.iter().zip(&pts[x]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() > r2
    });
    (isolated, z_empty)
}

fn validate_check(lambda: f64, d: usize, s: &Region, r: f64, trials: u64) -> Result<f64> {
    check_lambda(lambda)?;
    check_dim(d, s.dim())?;
    s.validate()?;
    if d > MAX_BRUTE_FORCE_DIM {
        return domain("brute-force isolation checks are limited to d <= 5");
    }
    if trials == 0 || !(r >= 0.0) {
        return domain("need trials >= 1 and r >= 0");
    }
    match s.volume() {
        Some(v) if v > 0.0 => Ok(v),
        _ => domain("S must be a bounded ball or cell of positive volume"),
    }
}

fn proportion(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Estimates `P(X exists and is r-isolated)` for `X` uniform in `Π ∩ S`
/// by brute-force sampling, and compares it with [`isolated_bound`] at 4 sigma.
pub fn mc_isolated_check(lambda: f64, d: usize, s: &Region, r: f64, trials: u64, seed: u64) -> Result<IsolationCheck> {
    let vol_s = validate_check(lambda, d, s, r, trials)?;
    let bound = isolated_bound(lambda, d, r, vol_s)?;
    let sampler = BoxSampler::around(&[s], r);
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&t| isolation_trial(&sampler, lambda, s, None, r, seed, t).0)
        .count() as u64;
    let (empirical, std_error) = proportion(hits, trials);
    Ok(IsolationCheck { empirical, std_error, bound, trials, pass: empirical >= bound - 4.0 * std_error })
}

/// Compares the isolation probability conditioned on `Π(Z) = 0` (by rejection)
/// with the unconditional one from the same trials. Passes when the
/// conditional estimate is at least the unconditional one minus 4 sigma.
pub fn mc_correlation_check(
    lambda: f64,
    d: usize,
    s: &Region,
    z: &Region,
    r: f64,
    trials: u64,
    seed: u64,
) -> Result<CorrelationCheck> {
    validate_check(lambda, d, s, r, trials)?;
    check_dim(d, z.dim())?;
    z.validate()?;
    let sampler = BoxSampler::around(&[s, z], r);
    let outcomes: Vec<(bool, bool)> = (0..trials)
        .into_par_iter()
        .map(|t| isolation_trial(&sampler, lambda, s, Some(z), r, seed, t))
        .collect();
    let hits = outcomes.iter().filter(|o| o.0).count() as u64;
    let accepted = outcomes.iter().filter(|o| o.1).count() as u64;
    let cond_hits = outcomes.iter().filter(|o| o.0 && o.1).count() as u64;
    let (unconditional, unconditional_se) = proportion(hits, trials);
    let (conditional, conditional_se) = proportion(cond_hits, accepted);
    let sigma = (unconditional_se.powi(2) + conditional_se.powi(2)).sqrt();
    let pass = accepted > 0 && conditional >= unconditional - 4.0 * sigma;
    Ok(CorrelationCheck { unconditional, unconditional_se, conditional, conditional_se, accepted, trials, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;

    #[test]
    fn a_is_the_volcalc_bound() {
        for d in [11, 30, 45, 60] {
            assert_eq!(constants_ab(d).unwrap().0, volcalc_lower_bound(d).unwrap());
        }
        assert!(constants_ab(10).is_err());
        assert!(constants_ab(2).is_err());
    }

    #[test]
    fn ratio_matches_simplified_form() {
        for d in 11..=200 {
            let (a, b) = constants_ab(d).unwrap();
            let two = simplified_ratio(d);
            assert!(((a / b) - two).abs() <= 1e-12 * two, "d={d}");
            assert!((ratio(d).unwrap() - two).abs() <= 1e-12 * two, "d={d}");
        }
    }

    #[test]
    fn ratio_crosses_one_at_31() {
        assert!(ratio(30).unwrap() < 1.0);
        assert!(ratio(31).unwrap() > 1.0);
        assert!((ratio(31).unwrap() - 1.04).abs() < 0.01);
        assert!(bounds_report(30).unwrap().lambda_star.is_none());
        assert!(bounds_report(31).unwrap().lambda_star.is_some());
    }

    #[test]
    fn threshold_is_45() {
        assert!(!bounds_report(44).unwrap().passes_threshold);
        let r45 = bounds_report(45).unwrap();
        assert!(r45.passes_threshold);
        assert!((r45.f_star.unwrap() - 0.910).abs() < 1e-3);
        assert_eq!(min_dimension(DEFAULT_THRESHOLD).unwrap(), 45);
        for d in 11..=200 {
            assert_eq!(bounds_report(d).unwrap().passes_threshold, d >= 45, "d={d}");
        }
    }

    #[test]
    fn min_dimension_edges() {
        assert_eq!(min_dimension(0.0).unwrap(), 31);
        assert!(min_dimension(0.999999).unwrap() <= 200);
        assert!(min_dimension(1.0).is_err());
    }

    #[test]
    fn f_at_zero_and_stationarity() {
        assert_eq!(f_bound(0.0, 45).unwrap(), 0.0);
        assert!(f_bound(-1.0, 45).is_err());
        for d in [35, 45, 60] {
            let l = lambda_star(d).unwrap().unwrap();
            let h = l * 1e-6;
            let deriv = (f_bound(l + h, d).unwrap() - f_bound(l - h, d).unwrap()) / (2.0 * h);
            // scale-free: derivative relative to B, the size of each term's slope
            let b = constants_ab(d).unwrap().1;
            assert!((deriv / b).abs() < 1e-6, "d={d} deriv={deriv}");
            let report = bounds_report(d).unwrap();
            assert!((f_bound(l, d).unwrap() - report.f_star.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_and_ordered() {
        let mut prev = 0.0;
        for d in 11..=200 {
            let r = ratio(d).unwrap();
            assert!(r > prev, "d={d}");
            prev = r;
            let rep = bounds_report(d).unwrap();
            if r > std::f64::consts::E {
                let (f, g) = (rep.f_star.unwrap(), rep.exact_g_star.unwrap());
                assert!(g >= f && f >= 0.0, "d={d}");
            }
        }
        assert!(f_star_increasing(31, 200).unwrap());
    }

    #[test]
    fn isolated_bound_values() {
        assert_eq!(isolated_bound(0.0, 3, 0.5, 1.0).unwrap(), 0.0);
        let v = isolated_bound(1.0, 2, 0.5, 10.0).unwrap();
        let expect = (-std::f64::consts::PI / 4.0).exp() - (-10.0f64).exp();
        assert!((v - expect).abs() < 1e-15);
        assert!((v - 0.455892727836).abs() < 1e-11);
        let far = isolated_bound(1.0, 2, 0.5, 1e6).unwrap();
        assert!((far - (-std::f64::consts::PI / 4.0).exp()).abs() < 1e-15);
        assert!(isolated_bound(1.0, 2, 0.5, 0.0).is_err());
    }

    #[test]
    fn csv_row_blanks_absent_values() {
        let row = bounds_report(30).unwrap().csv_row();
        assert_eq!(row.split(',').count(), 8);
        assert!(row.ends_with(",,,false"));
    }

    #[test]
    fn isolation_check_small() {
        let s = Region::ball(Point::origin(2), 1.0);
        let c = mc_isolated_check(1.0, 2, &s, 0.3, 20_000, 3).unwrap();
        assert!(c.pass, "{c:?}");
        let bound = (-0.09 * std::f64::consts::PI).exp() - (-std::f64::consts::PI).exp();
        assert!((c.bound - bound).abs() < 1e-15);
        assert!(mc_isolated_check(1.0, 6, &Region::ball(Point::origin(6), 1.0), 0.3, 10, 1).is_err());
    }

    #[test]
    fn far_conditioning_changes_nothing() {
        let s = Region::ball(Point::origin(2), 1.0);
        let z = Region::ball(Point(vec![3.0, 0.0]), 0.5);
        let c = mc_correlation_check(1.0, 2, &s, &z, 0.3, 20_000, 5).unwrap();
        let sigma = (c.unconditional_se.powi(2) + c.conditional_se.powi(2)).sqrt();
        assert!((c.conditional - c.unconditional).abs() < 4.0 * sigma, "{c:?}");
    }
}
