//! Layered exploration: grows a cluster of tangent hard spheres over the
//! decorated hexagonal lattice, one vertex per step, on top of a lazily
//! sampled Poisson process, and assembles the resulting sphere process.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{Cell, Closure, Point, Region, DELTA, EPS, MU};
use crate::hexlattice::{StarLattice, VertexKind};
use crate::rng;
use crate::sampler::{RegionRegistry, DEFAULT_POINT_BUDGET};

const LAYER_TAG: u64 = 0x006c_6179_6572;
const RADIUS_FAIL_TOL: f64 = 1e-9;

/// How a uniform point of `S ∩ Π` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Minimum-mark scan of an envelope; never enumerates `S ∩ Π`.
    #[default]
    Lazy,
    /// Reveal the envelope completely, then choose among the candidates.
    Materialize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionParams {
    pub d: usize,
    pub mu: f64,
    pub delta: f64,
    pub eps: f64,
    /// Transverse radius of every cell.
    pub c: f64,
    pub lambda: f64,
    /// Extra isolation margin; 0 gives the plain construction.
    pub eta: f64,
    /// Layer spacing.
    pub l: f64,
    pub lattice_radius: f64,
    pub max_steps: usize,
    pub point_budget: u64,
    pub selection: Selection,
}

impl ConstructionParams {
    pub fn new(d: usize, c: f64, lambda: f64) -> Result<Self> {
        let p = ConstructionParams {
            d,
            mu: MU,
            delta: DELTA,
            eps: EPS,
            c,
            lambda,
            eta: 0.0,
            l: 2.0 * (c + MU + DELTA + 1.0),
            lattice_radius: 12.0,
            max_steps: 100_000,
            point_budget: DEFAULT_POINT_BUDGET,
            selection: Selection::Lazy,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn min_spacing(&self) -> f64 {
        2.0 * (self.c + self.mu + self.delta + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 3 {
            return domain("construction needs d >= 3");
        }
        if !(2.0 * (self.mu + self.delta + self.eps) < 3f64.sqrt()) {
            return domain("need 2(mu + delta + eps) < sqrt 3");
        }
        if !(self.mu - self.delta > 0.0 && self.delta >= 0.0 && self.eps >= 0.0) {
            return domain("need mu > delta >= 0 and eps >= 0");
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return domain("C must be positive and finite");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return domain("lambda must be finite and >= 0");
        }
        if !(self.eta >= 0.0) {
            return domain("eta must be >= 0");
        }
        if !(self.l >= self.min_spacing() - 1e-12) {
            return domain(format!("L must be >= 2(C + mu + delta + 1) = {}", self.min_spacing()));
        }
        if !(self.lattice_radius >= 2.0) {
            return domain("lattice radius must be >= 2");
        }
        Ok(())
    }

    pub fn layer_center(&self, layer: &[i64]) -> Vec<f64> {
        layer.iter().map(|&k| self.l * k as f64).collect()
    }

    fn cell(&self, site: [f64; 2], z: &[f64]) -> Cell {
        Cell { site, eps: self.eps, layer_center: z.to_vec(), half_width: self.c }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Unexplored,
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// Neither selection rule applies.
    NoCandidate,
    StepBudget,
    /// The chosen vertex has neighbours outside the generated lattice.
    LatticeTruncation,
    PointBudget,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::NoCandidate => "no-candidate",
            StopReason::StepBudget => "step-budget",
            StopReason::LatticeTruncation => "lattice-truncation",
            StopReason::PointBudget => "point-budget",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Origin,
    /// Site next to a good bond and two unexplored bonds.
    Site,
    /// Bond next to a good site and an unexplored site.
    Bond,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepCase {
    /// No Poisson point in the candidate set.
    Empty,
    Picked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub vertex: usize,
    pub kind: VertexKind,
    pub rule: Rule,
    pub parent: Option<usize>,
    pub good_neighbors: usize,
    pub bad_neighbors: usize,
    pub case: StepCase,
    /// `|S ∩ Π|`, known only when candidates are materialized.
    pub candidates: Option<usize>,
    pub radius: Option<f64>,
    pub point: Option<usize>,
    pub outcome: Status,
    /// Site declared bad together with a bad bond.
    pub propagated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placed {
    pub point: usize,
    pub center: Point,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationState {
    pub status: Vec<Status>,
    pub placed: Vec<Option<Placed>>,
    pub steps: usize,
    pub stop: Option<StopReason>,
    pub log: Vec<StepRecord>,
    frontier: BTreeSet<usize>,
}

impl ExplorationState {
    fn new(n: usize) -> Self {
        ExplorationState {
            status: vec![Status::Unexplored; n],
            placed: vec![None; n],
            steps: 0,
            stop: None,
            log: Vec::new(),
            frontier: BTreeSet::new(),
        }
    }

    pub fn good_count(&self) -> usize {
        self.status.iter().filter(|s| **s == Status::Good).count()
    }

    pub fn bad_count(&self) -> usize {
        self.status.iter().filter(|s| **s == Status::Bad).count()
    }
}

/// `(good, bad, unexplored)` neighbours; missing lattice neighbours count as unexplored.
fn neighbor_census(state: &ExplorationState, lattice: &StarLattice, w: usize) -> (usize, usize, usize) {
    let mut good = 0;
    let mut bad = 0;
    for &n in lattice.neighbors(w) {
        match state.status[n] {
            Status::Good => good += 1,
            Status::Bad => bad += 1,
            Status::Unexplored => {}
        }
    }
    (good, bad, lattice.vertex(w).kind.full_degree() - good - bad)
}

fn rule_for(state: &ExplorationState, lattice: &StarLattice, w: usize) -> Option<Rule> {
    if state.status[w] != Status::Unexplored {
        return None;
    }
    match (lattice.vertex(w).kind, neighbor_census(state, lattice, w)) {
        (VertexKind::Site, (1, 0, 2)) => Some(Rule::Site),
        (VertexKind::Bond, (1, 0, 1)) => Some(Rule::Bond),
        _ => None,
    }
}

/// Brute-force check that no vertex satisfies either selection rule.
pub fn rules_exhausted(state: &ExplorationState, lattice: &StarLattice) -> bool {
    (0..lattice.len()).all(|w| rule_for(state, lattice, w).is_none())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Vertex(usize, Rule),
    Stop(StopReason),
}

/// Construction of one layer: owns the layer's registry and exploration state.
#[derive(Debug, Clone)]
pub struct Explorer<'a> {
    params: &'a ConstructionParams,
    lattice: &'a StarLattice,
    layer: Vec<i64>,
    z: Vec<f64>,
    registry: RegionRegistry,
    state: ExplorationState,
}

impl<'a> Explorer<'a> {
    pub fn new(params: &'a ConstructionParams, lattice: &'a StarLattice, seed: u64, layer: &[i64]) -> Result<Self> {
        params.validate()?;
        if layer.len() != params.d - 2 {
            return domain(format!("layer vector needs {} entries", params.d - 2));
        }
        let registry = RegionRegistry::with_stream(params.lambda, params.d, seed, rng::stream_id(LAYER_TAG, layer))?
            .with_budget(params.point_budget);
        Ok(Self::with_registry(params, lattice, layer, registry))
    }

    /// An explorer over a caller-prepared registry (for scripted configurations).
    pub fn with_registry(
        params: &'a ConstructionParams,
        lattice: &'a StarLattice,
        layer: &[i64],
        registry: RegionRegistry,
    ) -> Self {
        Explorer {
            params,
            lattice,
            layer: layer.to_vec(),
            z: params.layer_center(layer),
            registry,
            state: ExplorationState::new(lattice.len()),
        }
    }

    pub fn state(&self) -> &ExplorationState {
        &self.state
    }

    pub fn registry(&self) -> &RegionRegistry {
        &self.registry
    }

    pub fn cell_of(&self, w: usize) -> Cell {
        self.params.cell(self.lattice.vertex(w).position, &self.z)
    }

    /// Uniform point of `target ∩ Π`, scanning `envelope ⊇ target`.
    fn pick(&mut self, target: &Region, envelope: &Region) -> Result<(Option<usize>, Option<usize>)> {
        match self.params.selection {
            Selection::Lazy => Ok((self.registry.pick_uniform(target, envelope)?, None)),
            Selection::Materialize => {
                let ids = self.registry.reveal(envelope)?;
                let cands: Vec<_> = ids
                    .into_iter()
                    .filter(|&i| target.contains_unchecked(&self.registry.point(i).location.0, Closure::Closed))
                    .map(|i| self.registry.point(i).clone())
                    .collect();
                let n = cands.len();
                if n == 0 {
                    return Ok((None, Some(0)));
                }
                Ok((Some(self.registry.choose(&cands)?.id), Some(n)))
            }
        }
    }

    /// Whether the closed ball `B(y, r + eta)` holds no Poisson point besides
    /// `y`. Scans in mark order and stops at the first other point, so a
    /// success leaves the ball fully revealed.
    fn isolated(&mut self, point: usize, radius: f64) -> Result<bool> {
        let center = self.registry.point(point).location.clone();
        let ball = Region::ball(center, radius + self.params.eta);
        Ok(self.registry.pick_uniform_excluding(&ball, &ball, &[point])?.is_none())
    }

    fn mark_good(&mut self, w: usize, point: usize, radius: f64) {
        let center = self.registry.point(point).location.clone();
        self.registry.mark_consumed(point);
        self.state.status[w] = Status::Good;
        self.state.placed[w] = Some(Placed { point, center, radius });
        for &n in self.lattice.neighbors(w) {
            if self.state.status[n] == Status::Unexplored {
                self.state.frontier.insert(n);
            }
        }
    }

    fn mark_bad(&mut self, w: usize) {
        self.state.status[w] = Status::Bad;
        self.state.frontier.remove(&w);
    }

    fn budget_guard<T>(&mut self, r: Result<T>) -> Result<Option<T>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(Error::PointBudget { .. }) => {
                self.state.stop = Some(StopReason::PointBudget);
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Step 0 at the origin site, with radius `mu`.
    pub fn step0(&mut self) -> Result<()> {
        let w = self.lattice.origin();
        if self.state.status[w] != Status::Unexplored {
            return domain("origin already explored");
        }
        let cell = Region::Cell(self.cell_of(w));
        let Some((picked, candidates)) = ({
            let r = self.pick(&cell, &cell);
            self.budget_guard(r)?
        }) else {
            return Ok(());
        };
        let mut record = StepRecord {
            step: 0,
            vertex: w,
            kind: VertexKind::Site,
            rule: Rule::Origin,
            parent: None,
            good_neighbors: 0,
            bad_neighbors: 0,
            case: StepCase::Empty,
            candidates,
            radius: None,
            point: None,
            outcome: Status::Bad,
            propagated: None,
        };
        match picked {
            None => self.mark_bad(w),
            Some(y) => {
                record.case = StepCase::Picked;
                record.point = Some(y);
                record.radius = Some(self.params.mu);
                let r = self.isolated(y, self.params.mu);
                let Some(ok) = self.budget_guard(r)? else {
                    return Ok(());
                };
                if ok {
                    self.mark_good(w, y, self.params.mu);
                    record.outcome = Status::Good;
                } else {
                    self.mark_bad(w);
                }
            }
        }
        self.state.log.push(record);
        Ok(())
    }

    /// Selection rules: first matching site by rule (i), else first matching bond.
    pub fn choose_next_vertex(&self) -> Choice {
        let by_rule = |want: Rule| {
            self.state
                .frontier
                .iter()
                .copied()
                .find(|&w| rule_for(&self.state, self.lattice, w) == Some(want))
        };
        let chosen = by_rule(Rule::Site).map(|w| (w, Rule::Site)).or_else(|| by_rule(Rule::Bond).map(|w| (w, Rule::Bond)));
        match chosen {
            None => Choice::Stop(StopReason::NoCandidate),
            Some((w, _)) if !self.lattice.is_complete(w) => Choice::Stop(StopReason::LatticeTruncation),
            Some((w, rule)) => Choice::Vertex(w, rule),
        }
    }

    /// Envelope of `S = W(w) ∩ U(v)`: the smaller of `W(w)` and the cell over
    /// `w` whose transverse ball around `x_v` bounds `U(v)`. `None` if `S` is
    /// empty for geometric reasons.
    fn envelope(&self, w: usize, parent: &Placed) -> Option<Region> {
        let site = self.lattice.vertex(w).position;
        let outer = parent.radius + self.params.mu + self.params.delta;
        let planar = ((site[0] - parent.center.0[0]).powi(2) + (site[1] - parent.center.0[1]).powi(2)).sqrt();
        let dmin = (planar - self.params.eps).max(0.0);
        if dmin > outer {
            return None;
        }
        let h = (outer * outer - dmin * dmin).sqrt();
        if h < self.params.c {
            Some(Region::cell(site, self.params.eps, parent.center.transverse().to_vec(), h))
        } else {
            Some(Region::Cell(self.cell_of(w)))
        }
    }

    /// Parts (b) and (c) of a step at `w`, chosen by `rule`.
    pub fn explore_step(&mut self, w: usize, rule: Rule) -> Result<()> {
        let (good, bad, _) = neighbor_census(&self.state, self.lattice, w);
        let v = *self
            .lattice
            .neighbors(w)
            .iter()
            .find(|&&n| self.state.status[n] == Status::Good)
            .ok_or_else(|| Error::Internal(format!("vertex {w} has no good neighbour")))?;
        let parent = self.state.placed[v].clone().expect("good vertices carry a sphere");
        let p = self.params;
        let annulus = Region::Annulus {
            center: parent.center.clone(),
            inner: parent.radius + p.mu - p.delta,
            outer: parent.radius + p.mu + p.delta,
        };
        let target = Region::Intersection(vec![Region::Cell(self.cell_of(w)), annulus]);
        let picked = match self.envelope(w, &parent) {
            None => (None, Some(0)),
            Some(env) => {
                let r = self.pick(&target, &env);
                match self.budget_guard(r)? {
                    Some(x) => x,
                    None => return Ok(()),
                }
            }
        };
        let step = self.state.steps + 1;
        let mut record = StepRecord {
            step,
            vertex: w,
            kind: self.lattice.vertex(w).kind,
            rule,
            parent: Some(v),
            good_neighbors: good,
            bad_neighbors: bad,
            case: StepCase::Empty,
            candidates: picked.1,
            radius: None,
            point: None,
            outcome: Status::Bad,
            propagated: None,
        };
        let mut good_now = false;
        if let Some(y) = picked.0 {
            let rho = parent.center.dist(&self.registry.point(y).location);
            let raw = rho - parent.radius;
            let (lo, hi) = (p.mu - p.delta, p.mu + p.delta);
            if raw < lo - RADIUS_FAIL_TOL || raw > hi + RADIUS_FAIL_TOL {
                return Err(Error::Internal(format!("radius {raw} outside [{lo}, {hi}] at vertex {w}")));
            }
            let radius = raw.clamp(lo, hi);
            record.case = StepCase::Picked;
            record.point = Some(y);
            record.radius = Some(radius);
            let r = self.isolated(y, radius);
            let Some(ok) = self.budget_guard(r)? else {
                return Ok(());
            };
            if ok {
                self.mark_good(w, y, radius);
                good_now = true;
            }
        }
        self.state.frontier.remove(&w);
        if good_now {
            record.outcome = Status::Good;
        } else {
            self.mark_bad(w);
            if record.kind == VertexKind::Bond {
                let far = self.lattice.neighbors(w).iter().copied().find(|&n| n != v);
                if let Some(s) = far.filter(|&s| self.state.status[s] == Status::Unexplored) {
                    self.mark_bad(s);
                    record.propagated = Some(s);
                }
            }
        }
        self.state.steps = step;
        self.state.log.push(record);
        Ok(())
    }

    /// Runs until a stop rule fires or `max_steps` steps after step 0.
    pub fn run(&mut self) -> Result<()> {
        self.step0()?;
        while self.state.stop.is_none() {
            if self.state.steps >= self.params.max_steps {
                self.state.stop = Some(StopReason::StepBudget);
                break;
            }
            match self.choose_next_vertex() {
                Choice::Stop(reason) => self.state.stop = Some(reason),
                Choice::Vertex(w, rule) => self.explore_step(w, rule)?,
            }
        }
        Ok(())
    }

    pub fn finish(self) -> LayerRun {
        let spheres = self
            .state
            .placed
            .iter()
            .enumerate()
            .filter_map(|(w, p)| {
                p.as_ref().map(|p| SphereRecord {
                    center: p.center.clone(),
                    radius: p.radius,
                    vertex: Some(w),
                    kind: Some(self.lattice.vertex(w).kind),
                    layer: self.layer.clone(),
                    point: p.point,
                    resolved: true,
                })
            })
            .collect();
        LayerRun { layer: self.layer, z: self.z, state: self.state, spheres, registry: self.registry }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereRecord {
    pub center: Point,
    pub radius: f64,
    /// Lattice vertex for constructed spheres, `None` for leftover points.
    pub vertex: Option<usize>,
    pub kind: Option<VertexKind>,
    pub layer: Vec<i64>,
    /// Point id in the layer's registry.
    pub point: usize,
    /// False for leftovers whose positive radius could not be decided in-window.
    pub resolved: bool,
}

#[derive(Debug, Clone)]
pub struct LayerRun {
    pub layer: Vec<i64>,
    pub z: Vec<f64>,
    pub state: ExplorationState,
    pub spheres: Vec<SphereRecord>,
    pub registry: RegionRegistry,
}

/// One layer with stream derived from `seed` and the layer vector.
pub fn run_layer(params: &ConstructionParams, lattice: &StarLattice, seed: u64, layer: &[i64]) -> Result<LayerRun> {
    let mut ex = Explorer::new(params, lattice, seed, layer)?;
    ex.run()?;
    Ok(ex.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: Vec<i64>,
    pub stop: Option<StopReason>,
    pub steps: usize,
    pub good: usize,
    pub bad: usize,
    pub materialized: usize,
    pub regions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaProcess {
    pub d: usize,
    /// Largest radius a constructed sphere can have.
    pub max_radius: f64,
    pub spheres: Vec<SphereRecord>,
    pub layers: Vec<LayerSummary>,
    /// Leftovers left at radius 0 because their neighbourhood was not fully revealed.
    pub unresolved: usize,
}

impl GammaProcess {
    pub fn constructed(&self) -> impl Iterator<Item = &SphereRecord> {
        self.spheres.iter().filter(|s| s.vertex.is_some())
    }

    pub fn leftovers(&self) -> impl Iterator<Item = &SphereRecord> {
        self.spheres.iter().filter(|s| s.vertex.is_none())
    }
}

/// Runs every layer in parallel and assembles the result.
pub fn run_multilayer(
    params: &ConstructionParams,
    lattice: &StarLattice,
    seed: u64,
    layers: &[Vec<i64>],
) -> Result<(GammaProcess, Vec<LayerRun>)> {
    let mut seen = HashSet::new();
    for k in layers {
        if !seen.insert(k) {
            return domain(format!("duplicate layer {k:?}"));
        }
    }
    let runs: Vec<LayerRun> = layers
        .par_iter()
        .map(|k| run_layer(params, lattice, seed, k))
        .collect::<Result<_>>()?;
    Ok((assemble_gamma(params, &runs), runs))
}

/// Constructed spheres plus a zero-radius sphere at every stored, unconsumed
/// Poisson point. With `eta > 0`, leftovers then get half the distance to the
/// nearest other sphere when that distance is decided by fully revealed regions.
pub fn assemble_gamma(params: &ConstructionParams, runs: &[LayerRun]) -> GammaProcess {
    let mut spheres = Vec::new();
    let mut owner = Vec::new();
    for (li, run) in runs.iter().enumerate() {
        spheres.extend(run.spheres.iter().cloned());
        owner.extend(std::iter::repeat_n(li, run.spheres.len()));
        for p in run.registry.points().iter().filter(|p| !p.consumed) {
            spheres.push(SphereRecord {
                center: p.location.clone(),
                radius: 0.0,
                vertex: None,
                kind: None,
                layer: run.layer.clone(),
                point: p.id,
                resolved: params.eta == 0.0,
            });
            owner.push(li);
        }
    }
    let mut unresolved = 0;
    if params.eta > 0.0 {
        let new_radii: Vec<Option<f64>> = (0..spheres.len())
            .into_par_iter()
            .map(|i| {
                if spheres[i].vertex.is_some() {
                    return None;
                }
                let gap = spheres
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| spheres[i].center.dist(&s.center) - s.radius)
                    .fold(f64::INFINITY, f64::min);
                (gap.is_finite() && runs[owner[i]].registry.ball_fully_revealed(&spheres[i].center, gap))
                    .then_some(gap / 2.0)
            })
            .collect();
        for (s, r) in spheres.iter_mut().zip(new_radii) {
            if s.vertex.is_none() {
                match r {
                    Some(r) => {
                        s.radius = r;
                        s.resolved = true;
                    }
                    None => unresolved += 1,
                }
            }
        }
    }
    let layers = runs
        .iter()
        .map(|r| LayerSummary {
            layer: r.layer.clone(),
            stop: r.state.stop,
            steps: r.state.steps,
            good: r.state.good_count(),
            bad: r.state.bad_count(),
            materialized: r.registry.materialized(),
            regions: r.registry.regions().len(),
        })
        .collect();
    GammaProcess { d: params.d, max_radius: params.mu + params.delta, spheres, layers, unresolved }
}

/// Grid over the first `min(d, 3)` coordinates; any pair closer than `cell` in
/// full space shares or neighbours a grid cell. Pairs of two zero-radius
/// spheres are skipped: they cannot overlap, and distinct Poisson points
/// coincide with probability zero.
fn grid_pairs(spheres: &[SphereRecord], cell: f64) -> Vec<(usize, usize)> {
    let k = spheres.first().map_or(0, |s| s.center.dim().min(3));
    let key = |s: &SphereRecord| -> Vec<i64> { s.center.0[..k].iter().map(|x| (x / cell).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, s) in spheres.iter().enumerate() {
        grid.entry(key(s)).or_default().push(i);
    }
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(k as u32))
        .map(|mut m| {
            (0..k)
                .map(|_| {
                    let o = (m % 3) as i64 - 1;
                    m /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    for (i, s) in spheres.iter().enumerate().filter(|(_, s)| s.radius > 0.0) {
        let base = key(s);
        for off in &offsets {
            let nk: Vec<i64> = base.iter().zip(off).map(|(a, b)| a + b).collect();
            if let Some(ids) = grid.get(&nk) {
                pairs.extend(
                    ids.iter()
                        .filter(|&&j| j != i && (spheres[j].radius == 0.0 || j > i))
                        .map(|&j| (i.min(j), i.max(j))),
                );
            }
        }
    }
    pairs
}

fn max_radius_of(spheres: &[SphereRecord]) -> f64 {
    spheres.iter().map(|s| s.radius).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub a: usize,
    pub b: usize,
    /// `r + s - distance`.
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardSphereReport {
    pub spheres: usize,
    pub pairs_checked: usize,
    pub violations: Vec<Violation>,
}

impl HardSphereReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Flags pairs whose interiors overlap by more than `tol`; tangency is legal.
pub fn verify_hard_sphere(spheres: &[SphereRecord], tol: f64) -> Result<HardSphereReport> {
    if !(tol > 0.0) {
        return domain("tolerance must be > 0");
    }
    let cell = (2.0 * max_radius_of(spheres)).max(1e-6);
    let pairs = grid_pairs(spheres, cell);
    let violations = pairs
        .iter()
        .filter_map(|&(a, b)| {
            let (x, y) = (&spheres[a], &spheres[b]);
            let deficit = x.radius + y.radius - x.center.dist(&y.center);
            (deficit > tol).then_some(Violation { a, b, deficit })
        })
        .collect();
    Ok(HardSphereReport { spheres: spheres.len(), pairs_checked: pairs.len(), violations })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub size: usize,
    /// `max |x| + r` over members.
    pub bounding_radius: f64,
}

/// Connected components of the touching graph (`distance <= r + s + touch_tol`),
/// largest first.
pub fn cluster_components(spheres: &[SphereRecord], touch_tol: f64) -> Result<Vec<Cluster>> {
    if !(touch_tol > 0.0) {
        return domain("touch tolerance must be > 0");
    }
    let n = spheres.len();
    let mut uf = crate::percolation2d::UnionFind::new(n);
    let cell = (2.0 * max_radius_of(spheres) + touch_tol).max(1e-6);
    for (a, b) in grid_pairs(spheres, cell) {
        let (x, y) = (&spheres[a], &spheres[b]);
        if x.center.dist(&y.center) <= x.radius + y.radius + touch_tol {
            uf.union(a, b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(uf.find(i)).or_default().push(i);
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|members| {
            let bounding_radius = members
                .iter()
                .map(|&i| spheres[i].center.0.iter().map(|c| c * c).sum::<f64>().sqrt() + spheres[i].radius)
                .fold(0.0, f64::max);
            Cluster { size: members.len(), members, bounding_radius }
        })
        .collect();
    clusters.sort_by(|a, b| b.size.cmp(&a.size).then(a.members[0].cmp(&b.members[0])));
    Ok(clusters)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub step: usize,
    pub kind: VertexKind,
    pub explored: u64,
    pub good: u64,
    pub rate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub trials: u64,
    pub explored: u64,
    pub good: u64,
    pub rate: f64,
    pub std_error: f64,
    pub strata: Vec<Stratum>,
    /// Bond steps whose far site was later explored or the bond failed.
    pub pairs: u64,
    /// Bond good and then its far site good.
    pub pair_good: u64,
    pub pair_rate: f64,
    pub pair_std_error: f64,
    pub stops: BTreeMap<String, u64>,
}

fn binomial(good: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let p = good as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Seed of trial `t` under a master seed.
pub fn trial_seed(seed: u64, t: u64) -> u64 {
    rng::mix64(seed ^ rng::mix64(t))
}

/// Fraction of explored vertices declared good over `trials` independent
/// single-layer runs, stratified by step index and vertex kind.
pub fn empirical_success_rate(
    params: &ConstructionParams,
    lattice: &StarLattice,
    trials: u64,
    seed: u64,
) -> Result<SuccessRate> {
    if trials == 0 {
        return domain("trials must be >= 1");
    }
    let origin = vec![0i64; params.d - 2];
    let runs: Vec<ExplorationState> = (0..trials)
        .into_par_iter()
        .map(|t| run_layer(params, lattice, trial_seed(seed, t), &origin).map(|r| r.state))
        .collect::<Result<_>>()?;
    let mut strata: BTreeMap<(usize, VertexKind), (u64, u64)> = BTreeMap::new();
    let mut stops = BTreeMap::new();
    let (mut pairs, mut pair_good) = (0u64, 0u64);
    for st in &runs {
        if let Some(s) = st.stop {
            *stops.entry(s.as_str().to_string()).or_insert(0) += 1;
        }
        for rec in &st.log {
            let e = strata.entry((rec.step, rec.kind)).or_insert((0, 0));
            e.0 += 1;
            e.1 += u64::from(rec.outcome == Status::Good);
        }
        for rec in st.log.iter().filter(|r| r.kind == VertexKind::Bond) {
            if rec.outcome != Status::Good {
                pairs += 1;
                continue;
            }
            let far = lattice.neighbors(rec.vertex).iter().copied().find(|&n| Some(n) != rec.parent);
            if let Some(site) = far.and_then(|s| st.log.iter().find(|r| r.vertex == s)) {
                pairs += 1;
                pair_good += u64::from(site.outcome == Status::Good);
            }
        }
    }
    let explored: u64 = strata.values().map(|v| v.0).sum();
    let good: u64 = strata.values().map(|v| v.1).sum();
    let (rate, std_error) = binomial(good, explored);
    let (pair_rate, pair_std_error) = binomial(pair_good, pairs);
    let strata = strata
        .into_iter()
        .map(|((step, kind), (n, g))| {
            let (rate, std_error) = binomial(g, n);
            Stratum { step, kind, explored: n, good: g, rate, std_error }
        })
        .collect();
    Ok(SuccessRate { trials, explored, good, rate, std_error, strata, pairs, pair_good, pair_rate, pair_std_error, stops })
}

/// Geometric and bookkeeping invariants of one finished layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub spheres: usize,
    pub hard_sphere_violations: usize,
    pub radius_out_of_window: usize,
    pub nonzero_leftovers: usize,
    pub max_tangency_residual: f64,
    pub discipline_violations: usize,
    pub nonadjacent_touching: usize,
    pub centers_outside_cell: usize,
    /// Stopped by the no-candidate rule although a rule still applied.
    pub stop_mismatch: bool,
}

pub const INVARIANT_TOL: f64 = 1e-9;

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.hard_sphere_violations == 0
            && self.radius_out_of_window == 0
            && self.nonzero_leftovers == 0
            && self.max_tangency_residual <= INVARIANT_TOL
            && self.discipline_violations == 0
            && self.nonadjacent_touching == 0
            && self.centers_outside_cell == 0
            && !self.stop_mismatch
    }
}

/// Checks a single-layer run (with `eta = 0` leftovers must keep radius 0).
pub fn check_invariants(params: &ConstructionParams, lattice: &StarLattice, run: &LayerRun) -> Result<InvariantReport> {
    let g = assemble_gamma(params, std::slice::from_ref(run));
    let hs = verify_hard_sphere(&g.spheres, INVARIANT_TOL)?;
    let (lo, hi) = (params.mu - params.delta - INVARIANT_TOL, params.mu + params.delta + INVARIANT_TOL);
    let radius_out_of_window = g.constructed().filter(|s| s.radius < lo || s.radius > hi).count();
    let nonzero_leftovers = if params.eta == 0.0 { g.leftovers().filter(|s| s.radius != 0.0).count() } else { 0 };

    let placed = &run.state.placed;
    let mut max_tangency_residual: f64 = 0.0;
    let mut discipline_violations = 0;
    for rec in run.state.log.iter().filter(|r| r.step > 0) {
        if rec.good_neighbors != 1 || rec.bad_neighbors != 0 {
            discipline_violations += 1;
        }
        if let (Some(w), Some(v)) = (placed[rec.vertex].as_ref(), rec.parent.and_then(|v| placed[v].as_ref())) {
            let residual = (w.center.dist(&v.center) - (w.radius + v.radius)).abs();
            max_tangency_residual = max_tangency_residual.max(residual);
        }
    }

    let good: Vec<usize> = (0..placed.len()).filter(|&w| placed[w].is_some()).collect();
    let mut nonadjacent_touching = 0;
    for (i, &a) in good.iter().enumerate() {
        for &b in &good[i + 1..] {
            if !lattice.is_adjacent(a, b) {
                let (x, y) = (placed[a].as_ref().unwrap(), placed[b].as_ref().unwrap());
                if x.center.dist(&y.center) <= x.radius + y.radius {
                    nonadjacent_touching += 1;
                }
            }
        }
    }

    let centers_outside_cell = good
        .iter()
        .filter(|&&w| {
            let cell = params.cell(lattice.vertex(w).position, &run.z);
            let c = &placed[w].as_ref().unwrap().center;
            let planar = ((c.0[0] - cell.site[0]).powi(2) + (c.0[1] - cell.site[1]).powi(2)).sqrt();
            let transverse = c.transverse().iter().zip(&cell.layer_center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            planar > cell.eps + INVARIANT_TOL || transverse > cell.half_width + INVARIANT_TOL
        })
        .count();

    let stop_mismatch = run.state.stop == Some(StopReason::NoCandidate) && !rules_exhausted(&run.state, lattice);
    Ok(InvariantReport {
        spheres: g.spheres.len(),
        hard_sphere_violations: hs.violations.len(),
        radius_out_of_window,
        nonzero_leftovers,
        max_tangency_residual,
        discipline_violations,
        nonadjacent_touching,
        centers_outside_cell,
        stop_mismatch,
    })
}

fn fmt_layer(layer: &[i64]) -> String {
    layer.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

/// Sphere dump: `<layer> <vertex|-> <site|bond|leftover> <radius> <coords...>`.
pub fn write_sphere_dump<W: Write>(g: &GammaProcess, mut w: W) -> io::Result<()> {
    writeln!(w, "# layer vertex kind radius coords[{}]", g.d)?;
    for s in &g.spheres {
        let vertex = s.vertex.map_or("-".to_string(), |v| v.to_string());
        let kind = s.kind.map_or("leftover", VertexKind::as_str);
        write!(w, "{} {} {} {:.16e}", fmt_layer(&s.layer), vertex, kind, s.radius)?;
        for c in &s.center.0 {
            write!(w, " {c:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub const STEP_CSV_HEADER: &str =
    "layer,step,vertex,kind,rule,parent,good_neighbors,bad_neighbors,case,candidates,radius,outcome,propagated";

/// Per-step log rows for one layer.
pub fn write_step_csv<W: Write>(run: &LayerRun, mut w: W) -> io::Result<()> {
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &run.state.log {
        writeln!(
            w,
            "\"{}\",{},{},{},{:?},{},{},{},{:?},{},{},{:?},{}",
            fmt_layer(&run.layer),
            r.step,
            r.vertex,
            r.kind.as_str(),
            r.rule,
            opt(r.parent),
            r.good_neighbors,
            r.bad_neighbors,
            r.case,
            opt(r.candidates),
            r.radius.map(|x| format!("{x:.16e}")).unwrap_or_default(),
            r.outcome,
            opt(r.propagated),
        )?;
    }
    Ok(())
}
