//! Parameter sets shared by the benchmarks.

use hardsphere::bounds::lambda_star;
use hardsphere::construction::ConstructionParams;

/// Half-width found by the two-ball search at `d = 45`.
pub const C45: f64 = 16.0;

pub fn d45_params(max_steps: usize) -> ConstructionParams {
    let lambda = lambda_star(45).unwrap().unwrap();
    let mut p = ConstructionParams::new(45, C45, lambda).unwrap();
    p.max_steps = max_steps;
    p
}
