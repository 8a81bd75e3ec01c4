//! E-paths, path families, the endpoint pseudometric W, congestion ratios,
//! mesh lifting, and the sampled validators for the regularity conditions a
//! path family must satisfy before the generalized comparison constant is
//! meaningful.
//!
//! Two congestion quantities live here. [`congestion_ratio_finite`] is the
//! classical one for a pair of finite reversible chains: the worst, over
//! kernel edges, of the flow-weighted path load through that edge relative to
//! the edge's own flow. [`congestion_constant_general`] is its continuous
//! generalization: flows are density products `Q(x,y) = k(x) f(x,y)`, each
//! edge carries the multiplicity padding `2(ceil(m(e)) + 1)` and each path
//! the length slack `|path| + M`, and the sup runs over the finite set of
//! edges the family actually uses (edges off the family's support carry no
//! load).
//!
//! The validators are best-effort samplers with explicit witnesses, never
//! proofs: the conditions quantify over uncountable sets. Checks that only
//! involve the finitely many stored paths (separation, length bound, length
//! stability, short-edge control) are exhaustive over those paths; the rest
//! (density floor, goodset membership, perturbation multiplicity) are checked
//! on seeded samples.

use crate::chain::{FiniteChain, STAT_TOL};
use crate::grid::{DensityKernel, GridError, MeshPartition, Point, ProductSpace};
use crate::rng::SplitMix64;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PathsError {
    #[error("path must contain at least one point")]
    EmptyPath,
    #[error("duplicate family entry for pair ({0}, {1})")]
    DuplicatePair(String, String),
    #[error("family does not cover target pair ({i}, {j}) with positive flow")]
    UncoveredPair { i: usize, j: usize },
    #[error("family edge ({i}, {j}) has zero flow in the base chain")]
    ZeroFlowState { i: usize, j: usize },
    #[error("family edge ({0}) has zero flow density in the base kernel")]
    ZeroFlowEdge(String),
    #[error("chain is not reversible (detailed-balance residual {residual:.3e})")]
    NotReversible { residual: f64 },
    #[error("assumption validation failed:\n{0}")]
    AssumptionsFailed(String),
    #[error("state path {0:?} is not a chain of consecutive edges")]
    BrokenStatePath(Vec<usize>),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Ordered edge between two points of the product space.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: Point,
    pub head: Point,
}

impl Edge {
    pub fn new(tail: Point, head: Point) -> Self {
        Self { tail, head }
    }

    pub fn is_diagonal(&self) -> bool {
        self.tail == self.head
    }

    /// Edge length under the space metric.
    pub fn length(&self, space: &ProductSpace) -> f64 {
        space.distance(&self.tail, &self.head)
    }
}

/// A path is a point sequence; consecutive points are its edges. A single
/// point is the empty (diagonal) path of length zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<Point>,
}

impl Path {
    pub fn new(points: Vec<Point>) -> Result<Self, PathsError> {
        if points.is_empty() {
            return Err(PathsError::EmptyPath);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn source(&self) -> &Point {
        &self.points[0]
    }

    pub fn target(&self) -> &Point {
        self.points.last().expect("nonempty")
    }

    pub fn edge_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn edges(&self) -> impl Iterator<Item = (&Point, &Point)> {
        self.points.windows(2).map(|w| (&w[0], &w[1]))
    }
}

/// W distance between edges: the larger of the two endpoint distances.
pub fn distance_w_edges(space: &ProductSpace, a: &Edge, b: &Edge) -> f64 {
    space
        .distance(&a.tail, &b.tail)
        .max(space.distance(&a.head, &b.head))
}

/// W distance between paths: pays attention to the endpoints only, so it is
/// a pseudometric (paths with equal endpoints are at distance zero).
pub fn distance_w_paths(space: &ProductSpace, a: &Path, b: &Path) -> f64 {
    space
        .distance(a.source(), b.source())
        .max(space.distance(a.target(), b.target()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct PointKey {
    component: usize,
    bits: Vec<u64>,
}

impl PointKey {
    fn of(p: &Point) -> Self {
        Self {
            component: p.component,
            bits: p.coords.iter().map(|c| c.to_bits()).collect(),
        }
    }
}

type EdgeKey = (PointKey, PointKey);

/// Path family over points, stored sparsely or produced on demand by a
/// generator (quadratic-size families at mesh scale are never materialized).
#[derive(Clone)]
pub struct PathFamily {
    inner: FamilyInner,
}

type FamilyWalker = dyn Fn(&mut dyn FnMut(&Path)) + Send + Sync;

#[derive(Clone)]
enum FamilyInner {
    Stored(Arc<Vec<Path>>),
    Generated {
        count: usize,
        walk: Arc<FamilyWalker>,
    },
}

impl std::fmt::Debug for PathFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.inner {
            FamilyInner::Stored(paths) => write!(f, "PathFamily::Stored({} paths)", paths.len()),
            FamilyInner::Generated { count, .. } => {
                write!(f, "PathFamily::Generated({count} paths)")
            }
        }
    }
}

impl PathFamily {
    /// Store explicit paths; ordered endpoint pairs must be unique.
    pub fn from_paths(paths: Vec<Path>) -> Result<Self, PathsError> {
        let mut seen = BTreeSet::new();
        for p in &paths {
            let key = (PointKey::of(p.source()), PointKey::of(p.target()));
            if !seen.insert(key) {
                return Err(PathsError::DuplicatePair(
                    format!("{:?}", p.source()),
                    format!("{:?}", p.target()),
                ));
            }
        }
        Ok(Self {
            inner: FamilyInner::Stored(Arc::new(paths)),
        })
    }

    /// Wrap a deterministic path generator. `count` must match the number of
    /// paths the walker produces.
    pub fn from_generator(
        count: usize,
        walk: impl Fn(&mut dyn FnMut(&Path)) + Send + Sync + 'static,
    ) -> Self {
        Self {
            inner: FamilyInner::Generated {
                count,
                walk: Arc::new(walk),
            },
        }
    }

    pub fn len(&self) -> usize {
        match &self.inner {
            FamilyInner::Stored(paths) => paths.len(),
            FamilyInner::Generated { count, .. } => *count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn for_each(&self, mut f: impl FnMut(&Path)) {
        match &self.inner {
            FamilyInner::Stored(paths) => {
                for p in paths.iter() {
                    f(p);
                }
            }
            FamilyInner::Generated { walk, .. } => walk(&mut f),
        }
    }
}

/// Path family over the states of a finite chain, keyed by ordered pairs.
/// Paths are full state sequences including both endpoints; a single state is
/// the empty diagonal path.
#[derive(Debug, Clone, Default)]
pub struct StatePathFamily {
    paths: BTreeMap<(usize, usize), Vec<usize>>,
}

impl StatePathFamily {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, states: Vec<usize>) -> Result<(), PathsError> {
        if states.is_empty() {
            return Err(PathsError::EmptyPath);
        }
        if states.windows(2).any(|w| w[0] == w[1]) {
            return Err(PathsError::BrokenStatePath(states));
        }
        let key = (states[0], *states.last().expect("nonempty"));
        self.paths.insert(key, states);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&[usize]> {
        self.paths.get(&(i, j)).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<usize>)> {
        self.paths.iter()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

fn require_reversible(chain: &FiniteChain) -> Result<(), PathsError> {
    let residual = chain.detailed_balance_residual();
    if residual > STAT_TOL {
        return Err(PathsError::NotReversible { residual });
    }
    Ok(())
}

/// Congestion report for a pair of finite chains.
#[derive(Debug, Clone)]
pub struct FiniteCongestion {
    pub b: f64,
    /// All edges achieving the max within 1e-9 relative.
    pub argmax_edges: Vec<(usize, usize)>,
    /// Largest number of paths through any single edge (the naive count that
    /// ignores flow weights and multiplicities).
    pub max_paths_per_edge: usize,
    pub n_edges_used: usize,
}

/// Classical congestion ratio
/// `B = max_e (1/Q(e)) sum_{(x,y): e in path(x,y)} Q~(x,y) |path(x,y)|`
/// over ordered kernel edges, with flows `Q(i,j) = pi_i P_ij`. Requires the
/// family to cover every ordered target pair with positive flow and every
/// family edge to have positive base flow.
pub fn congestion_ratio_finite(
    base: &FiniteChain,
    target: &FiniteChain,
    family: &StatePathFamily,
) -> Result<FiniteCongestion, PathsError> {
    require_reversible(base)?;
    require_reversible(target)?;

    for (i, j, p) in target.triplets() {
        if i != j && p > 0.0 && family.get(i, j).is_none() {
            return Err(PathsError::UncoveredPair { i, j });
        }
    }

    let mut load: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for (&(x, y), states) in family.iter() {
        let hops = states.len() - 1;
        if hops == 0 {
            continue;
        }
        let weight = target.stationary()[x] * target.prob(x, y) * hops as f64;
        for w in states.windows(2) {
            let e = (w[0], w[1]);
            if base.stationary()[e.0] * base.prob(e.0, e.1) <= 0.0 {
                return Err(PathsError::ZeroFlowState { i: e.0, j: e.1 });
            }
            let slot = load.entry(e).or_insert((0.0, 0));
            slot.0 += weight;
            slot.1 += 1;
        }
    }

    let mut b = 0.0_f64;
    let mut per_edge: Vec<((usize, usize), f64)> = Vec::with_capacity(load.len());
    let mut max_count = 0usize;
    for (&e, &(w, count)) in &load {
        let q = base.stationary()[e.0] * base.prob(e.0, e.1);
        let value = w / q;
        per_edge.push((e, value));
        b = b.max(value);
        max_count = max_count.max(count);
    }
    let argmax_edges = per_edge
        .iter()
        .filter(|&&(_, v)| v >= b * (1.0 - 1e-9))
        .map(|&(e, _)| e)
        .collect();
    Ok(FiniteCongestion {
        b,
        argmax_edges,
        max_paths_per_edge: max_count,
        n_edges_used: load.len(),
    })
}

/// Built-in scalar functions nameable in config files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionSpec {
    Constant(f64),
    Identity,
    Affine { a: f64, b: f64 },
}

impl FunctionSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            FunctionSpec::Constant(c) => c,
            FunctionSpec::Identity => x,
            FunctionSpec::Affine { a, b } => a * x + b,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        if s == "identity" {
            return Some(FunctionSpec::Identity);
        }
        if let Some(rest) = s.strip_prefix("constant:") {
            return rest.trim().parse().ok().map(FunctionSpec::Constant);
        }
        if let Some(rest) = s.strip_prefix("affine:") {
            let mut it = rest.split(',');
            let a = it.next()?.trim().parse().ok()?;
            let b = it.next()?.trim().parse().ok()?;
            return Some(FunctionSpec::Affine { a, b });
        }
        None
    }
}

impl std::fmt::Display for FunctionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FunctionSpec::Constant(c) => write!(f, "constant:{c}"),
            FunctionSpec::Identity => write!(f, "identity"),
            FunctionSpec::Affine { a, b } => write!(f, "affine:{a},{b}"),
        }
    }
}

/// Built-in edge regions nameable in config files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionSpec {
    /// Every edge.
    All,
    /// Edges with positive base transition density.
    PositiveFlow,
    /// Edges no longer than the given metric length.
    MaxLength(f64),
}

impl RegionSpec {
    pub fn contains(&self, base: &DensityKernel, tail: &Point, head: &Point) -> bool {
        match *self {
            RegionSpec::All => true,
            RegionSpec::PositiveFlow => base.transition_density(tail, head) > 0.0,
            RegionSpec::MaxLength(limit) => base.space().distance(tail, head) <= limit,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(RegionSpec::All),
            "positive-flow" => Some(RegionSpec::PositiveFlow),
            _ => s
                .strip_prefix("max-length:")
                .and_then(|rest| rest.trim().parse().ok())
                .map(RegionSpec::MaxLength),
        }
    }
}

impl std::fmt::Display for RegionSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionSpec::All => write!(f, "all"),
            RegionSpec::PositiveFlow => write!(f, "positive-flow"),
            RegionSpec::MaxLength(x) => write!(f, "max-length:{x}"),
        }
    }
}

/// The constants and functions the generalized comparison requires of a
/// path family: separation radius, enlargement radius, uniform length bound,
/// length-stability slack, multiplicity function with its cap, short-edge
/// control, and the good edge regions.
#[derive(Debug, Clone)]
pub struct AssumptionConfig {
    /// Separation radius: distinct endpoints of paths sharing an edge must be
    /// farther apart than this.
    pub epsilon: f64,
    /// Enlargement radius for the set of target pairs the family must serve.
    pub epsilon0: f64,
    /// Uniform bound on path edge counts (R).
    pub length_bound: f64,
    /// Allowed length difference between W-close paths (M).
    pub length_slack: f64,
    /// Multiplicity function m(e), evaluated on the edge's metric length.
    pub multiplicity: FunctionSpec,
    /// Upper bound K on m over all edges.
    pub multiplicity_cap: f64,
    /// Short-edge function L: every edge of a path from a to b must be at
    /// least L(d(a, b)) long.
    pub short_edge: FunctionSpec,
    /// Good edges every family path must consist of.
    pub goodset: RegionSpec,
    /// Region where the base densities are continuous and bounded away from
    /// zero; must contain the goodset.
    pub big_goodset: RegionSpec,
}

impl AssumptionConfig {
    /// Multiplicity at an edge.
    pub fn multiplicity_at(&self, space: &ProductSpace, e: &Edge) -> f64 {
        self.multiplicity.eval(e.length(space))
    }
}

/// Which condition a verdict refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AssumptionKind {
    /// Densities bounded away from zero on the big goodset.
    DensityFloor,
    /// Family paths consist of goodset edges (and the goodset sits inside the
    /// big goodset).
    GoodsetMembership,
    /// Paths through a common edge have equal-or-separated endpoints.
    EdgeSeparation,
    /// Uniform bound on path edge counts.
    LengthBound,
    /// W-close paths have edge counts within the slack.
    LengthStability,
    /// Perturbing an edge of a path finds a W-close path through the
    /// perturbed edge, within the multiplicity allowance.
    PerturbationCover,
    /// No path uses an edge shorter than the short-edge function of its
    /// endpoint distance.
    ShortEdgeControl,
}

pub const ALL_ASSUMPTIONS: [AssumptionKind; 7] = [
    AssumptionKind::DensityFloor,
    AssumptionKind::GoodsetMembership,
    AssumptionKind::EdgeSeparation,
    AssumptionKind::LengthBound,
    AssumptionKind::LengthStability,
    AssumptionKind::PerturbationCover,
    AssumptionKind::ShortEdgeControl,
];

#[derive(Debug, Clone)]
pub enum Verdict {
    /// Exhaustively verified on the family's stored paths.
    PassExact {
        checked: usize,
    },
    /// Verified on seeded samples; not a proof.
    PassOnSamples {
        checked: usize,
    },
    Fail {
        witness: String,
    },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        !matches!(self, Verdict::Fail { .. })
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionReport {
    pub verdicts: BTreeMap<AssumptionKind, Verdict>,
    pub seed: u64,
    pub samples: usize,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.verdicts.values().all(Verdict::passed)
    }

    pub fn verdict(&self, kind: AssumptionKind) -> &Verdict {
        &self.verdicts[&kind]
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (kind, verdict) in &self.verdicts {
            match verdict {
                Verdict::PassExact { checked } => {
                    writeln!(f, "{kind:?}: pass (exact over {checked} paths)")?
                }
                Verdict::PassOnSamples { checked } => {
                    writeln!(f, "{kind:?}: pass-on-samples ({checked} samples)")?
                }
                Verdict::Fail { witness } => writeln!(f, "{kind:?}: FAIL: {witness}")?,
            }
        }
        write!(f, "seed {}; {} samples", self.seed, self.samples)
    }
}

/// Everything the validators need besides the family and config.
pub struct AssumptionContext<'a> {
    pub base: &'a DensityKernel,
    pub target: Option<&'a DensityKernel>,
    pub seed: u64,
    pub samples: usize,
}

impl<'a> AssumptionContext<'a> {
    pub fn new(base: &'a DensityKernel, target: Option<&'a DensityKernel>, seed: u64) -> Self {
        Self {
            base,
            target,
            seed,
            samples: 10_000,
        }
    }
}

struct EdgeRecord {
    tail: Point,
    head: Point,
    owners: Vec<(Point, Point)>,
}

/// Paths grouped by endpoint components: (source, target, edge count).
type EndpointGroups = BTreeMap<(usize, usize), Vec<(Point, Point, usize)>>;

fn fmt_point(p: &Point) -> String {
    format!("c{}{:?}", p.component, p.coords)
}

fn fmt_edge(tail: &Point, head: &Point) -> String {
    format!("{} -> {}", fmt_point(tail), fmt_point(head))
}

/// Run every validator and collect per-condition verdicts with witnesses.
/// Separation, length bound, length stability, and short-edge control are
/// exhaustive over the family's stored paths; density floor, goodset
/// membership, and perturbation cover are sampled with the recorded seed.
pub fn validate_assumptions(
    family: &PathFamily,
    config: &AssumptionConfig,
    ctx: &AssumptionContext<'_>,
) -> AssumptionReport {
    let space = ctx.base.space().clone();
    let mut rng = SplitMix64::new(ctx.seed);

    // reservoir of paths for the sampled checks
    let total = family.len();
    let keep = ctx.samples.min(total).max(1);
    let mut sample_ids: BTreeSet<usize> = BTreeSet::new();
    if total > 0 {
        if keep >= total {
            sample_ids.extend(0..total);
        } else {
            while sample_ids.len() < keep {
                sample_ids.insert(rng.next_index(total));
            }
        }
    }

    let mut edge_map: BTreeMap<EdgeKey, EdgeRecord> = BTreeMap::new();
    let mut groups: EndpointGroups = BTreeMap::new();
    let mut sampled_paths: Vec<Path> = Vec::with_capacity(keep);
    let mut ub_fail: Option<String> = None;
    let mut short_fail: Option<String> = None;
    let mut path_count = 0usize;

    family.for_each(|path| {
        let idx = path_count;
        path_count += 1;
        let len = path.edge_count();
        if len as f64 > config.length_bound && ub_fail.is_none() {
            ub_fail = Some(format!(
                "path {} -> {} has {} edges, bound {}",
                fmt_point(path.source()),
                fmt_point(path.target()),
                len,
                config.length_bound
            ));
        }
        let endpoint_dist = space.distance(path.source(), path.target());
        let floor = config.short_edge.eval(endpoint_dist);
        for (tail, head) in path.edges() {
            let elen = space.distance(tail, head);
            if elen + 1e-12 < floor && short_fail.is_none() {
                short_fail = Some(format!(
                    "edge {} of length {:.6} in a path with endpoint distance {:.6} (floor {:.6})",
                    fmt_edge(tail, head),
                    elen,
                    endpoint_dist,
                    floor
                ));
            }
            let key = (PointKey::of(tail), PointKey::of(head));
            edge_map
                .entry(key)
                .or_insert_with(|| EdgeRecord {
                    tail: tail.clone(),
                    head: head.clone(),
                    owners: Vec::new(),
                })
                .owners
                .push((path.source().clone(), path.target().clone()));
        }
        groups
            .entry((path.source().component, path.target().component))
            .or_default()
            .push((path.source().clone(), path.target().clone(), len));
        if sample_ids.contains(&idx) {
            sampled_paths.push(path.clone());
        }
    });

    let mut verdicts = BTreeMap::new();

    verdicts.insert(
        AssumptionKind::LengthBound,
        match ub_fail {
            Some(witness) => Verdict::Fail { witness },
            None => Verdict::PassExact {
                checked: path_count,
            },
        },
    );
    verdicts.insert(
        AssumptionKind::ShortEdgeControl,
        match short_fail {
            Some(witness) => Verdict::Fail { witness },
            None => {
                // spot-check positivity of the short-edge function itself
                let mut bad = None;
                for _ in 0..64 {
                    let x = rng.next_f64() * space.far_distance();
                    if x > 0.0 && config.short_edge.eval(x) <= 0.0 {
                        bad = Some(format!("short-edge function is nonpositive at {x}"));
                        break;
                    }
                }
                match bad {
                    Some(witness) => Verdict::Fail { witness },
                    None => Verdict::PassExact {
                        checked: path_count,
                    },
                }
            }
        },
    );

    // endpoint separation, exhaustive per shared edge
    let mut sp_fail: Option<String> = None;
    'sp: for rec in edge_map.values() {
        for (i, a) in rec.owners.iter().enumerate() {
            for b in rec.owners.iter().skip(i + 1) {
                let src_ok = a.0 == b.0 || space.distance(&a.0, &b.0) > config.epsilon;
                let tgt_ok = a.1 == b.1 || space.distance(&a.1, &b.1) > config.epsilon;
                if !(src_ok && tgt_ok) {
                    sp_fail = Some(format!(
                        "edge {} shared by pairs ({}, {}) and ({}, {}) closer than epsilon = {}",
                        fmt_edge(&rec.tail, &rec.head),
                        fmt_point(&a.0),
                        fmt_point(&a.1),
                        fmt_point(&b.0),
                        fmt_point(&b.1),
                        config.epsilon
                    ));
                    break 'sp;
                }
            }
        }
    }
    verdicts.insert(
        AssumptionKind::EdgeSeparation,
        match sp_fail {
            Some(witness) => Verdict::Fail { witness },
            None => Verdict::PassExact {
                checked: path_count,
            },
        },
    );

    // length stability: within each endpoint-component class, W-close paths
    // must have edge counts within the slack. Classes whose lengths already
    // sit within the slack need no pairwise scan.
    let probe = config.epsilon;
    let mut pl_fail: Option<String> = None;
    'pl: for members in groups.values() {
        let mut lens: Vec<usize> = members.iter().map(|m| m.2).collect();
        lens.sort_unstable();
        lens.dedup();
        if lens.len() < 2 {
            continue;
        }
        let spread = lens[lens.len() - 1] - lens[0];
        if (spread as f64) <= config.length_slack {
            continue;
        }
        for (i, a) in members.iter().enumerate() {
            for b in members.iter().skip(i + 1) {
                let diff = a.2.abs_diff(b.2) as f64;
                if diff <= config.length_slack {
                    continue;
                }
                let w = space.distance(&a.0, &b.0).max(space.distance(&a.1, &b.1));
                if w < probe {
                    pl_fail = Some(format!(
                        "paths ({}, {}) [{} edges] and ({}, {}) [{} edges] at W distance {:.6} differ beyond slack {}",
                        fmt_point(&a.0), fmt_point(&a.1), a.2,
                        fmt_point(&b.0), fmt_point(&b.1), b.2,
                        w, config.length_slack
                    ));
                    break 'pl;
                }
            }
        }
    }
    verdicts.insert(
        AssumptionKind::LengthStability,
        match pl_fail {
            Some(witness) => Verdict::Fail { witness },
            None => Verdict::PassExact {
                checked: path_count,
            },
        },
    );

    // goodset membership on sampled paths, plus goodset-inside-big-goodset
    let mut gp_fail: Option<String> = None;
    'gp: for path in &sampled_paths {
        for (tail, head) in path.edges() {
            if !config.goodset.contains(ctx.base, tail, head) {
                gp_fail = Some(format!(
                    "edge {} lies outside the goodset",
                    fmt_edge(tail, head)
                ));
                break 'gp;
            }
            if !config.big_goodset.contains(ctx.base, tail, head) {
                gp_fail = Some(format!(
                    "edge {} is in the goodset but outside the big goodset",
                    fmt_edge(tail, head)
                ));
                break 'gp;
            }
        }
    }
    verdicts.insert(
        AssumptionKind::GoodsetMembership,
        match gp_fail {
            Some(witness) => Verdict::Fail { witness },
            None => Verdict::PassOnSamples {
                checked: sampled_paths.len(),
            },
        },
    );

    // density floor on sampled edges inside the big goodset
    let mut dp_fail: Option<String> = None;
    let mut dp_checked = 0usize;
    for path in &sampled_paths {
        if dp_fail.is_some() {
            break;
        }
        for (tail, head) in path.edges() {
            if !config.big_goodset.contains(ctx.base, tail, head) {
                continue;
            }
            dp_checked += 1;
            let f = ctx.base.transition_density(tail, head);
            let k = ctx.base.stationary_density(tail);
            if f <= 0.0 || k <= 0.0 {
                dp_fail = Some(format!(
                    "densities vanish on big-goodset edge {}: f = {f}, k = {k}",
                    fmt_edge(tail, head)
                ));
                break;
            }
        }
    }
    verdicts.insert(
        AssumptionKind::DensityFloor,
        match dp_fail {
            Some(witness) => Verdict::Fail { witness },
            None => Verdict::PassOnSamples {
                checked: dp_checked,
            },
        },
    );

    // perturbation cover: an edge perturbed within the configured radius must
    // be served by a family path W-close to the original within the
    // multiplicity allowance m(e) * epsilon. Candidate perturbations are
    // drawn from the family's own edge set; the per-radius quantifier of the
    // underlying condition is sampled only at the recorded epsilon scale.
    let mut rp_fail: Option<String> = None;
    let edge_list: Vec<&EdgeKey> = edge_map.keys().collect();
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, key) in edge_list.iter().enumerate() {
        buckets
            .entry((key.0.component, key.1.component))
            .or_default()
            .push(i);
    }
    let mut rp_checked = 0usize;
    if !edge_list.is_empty() {
        for _ in 0..ctx.samples {
            if rp_fail.is_some() {
                break;
            }
            let ei = rng.next_index(edge_list.len());
            let rec = &edge_map[edge_list[ei]];
            let e = Edge::new(rec.tail.clone(), rec.head.clone());
            if e.is_diagonal() {
                continue;
            }
            let m_e = config.multiplicity_at(&space, &e);
            if m_e > config.multiplicity_cap + 1e-12 {
                rp_fail = Some(format!(
                    "multiplicity {m_e} at edge {} exceeds cap {}",
                    fmt_edge(&e.tail, &e.head),
                    config.multiplicity_cap
                ));
                break;
            }
            let owner = &rec.owners[rng.next_index(rec.owners.len())];
            let bucket = &buckets[&(e.tail.component, e.head.component)];
            // deterministic rotated scan for a distinct edge within epsilon
            let start = rng.next_index(bucket.len());
            let mut candidate: Option<&EdgeRecord> = None;
            for step in 0..bucket.len() {
                let cand = &edge_map[edge_list[bucket[(start + step) % bucket.len()]]];
                if cand.tail == e.tail && cand.head == e.head {
                    continue;
                }
                let w = space
                    .distance(&cand.tail, &e.tail)
                    .max(space.distance(&cand.head, &e.head));
                if w > 0.0 && w < config.epsilon {
                    candidate = Some(cand);
                    break;
                }
            }
            let Some(cand) = candidate else { continue };
            rp_checked += 1;
            let allowance = m_e * config.epsilon + 1e-12;
            let covered = cand.owners.iter().any(|(src, tgt)| {
                space
                    .distance(src, &owner.0)
                    .max(space.distance(tgt, &owner.1))
                    <= allowance
            });
            if !covered {
                rp_fail = Some(format!(
                    "no path through perturbed edge {} lies within {:.6} of the pair ({}, {})",
                    fmt_edge(&cand.tail, &cand.head),
                    allowance,
                    fmt_point(&owner.0),
                    fmt_point(&owner.1)
                ));
            }
        }
    }
    verdicts.insert(
        AssumptionKind::PerturbationCover,
        match rp_fail {
            Some(witness) => Verdict::Fail { witness },
            None => Verdict::PassOnSamples {
                checked: rp_checked,
            },
        },
    );

    AssumptionReport {
        verdicts,
        seed: ctx.seed,
        samples: ctx.samples,
    }
}

/// Congestion report for the generalized (density-based) constant.
#[derive(Debug, Clone)]
pub struct GeneralCongestion {
    pub b: f64,
    pub argmax_edges: Vec<Edge>,
    pub max_paths_per_edge: usize,
    pub n_edges_used: usize,
    pub n_paths: usize,
    pub report: AssumptionReport,
}

/// Generalized comparison constant
/// `B = max_e 2(ceil(m(e)) + 1)/Q(e) * sum_{(x,y): e in path} Q~(x,y)(|path| + M)`
/// with flows evaluated from the stationary and transition densities. The
/// max runs over the finite edge set the family uses; assumption validation
/// runs first and any failed condition is an error.
pub fn congestion_constant_general(
    base: &DensityKernel,
    target: &DensityKernel,
    family: &PathFamily,
    config: &AssumptionConfig,
    seed: u64,
) -> Result<GeneralCongestion, PathsError> {
    struct Slot {
        tail: Point,
        head: Point,
        load: f64,
        count: usize,
    }
    let mut slots: BTreeMap<EdgeKey, Slot> = BTreeMap::new();
    let mut n_paths = 0usize;
    family.for_each(|path| {
        n_paths += 1;
        if path.edge_count() == 0 {
            return;
        }
        let src = path.source();
        let tgt = path.target();
        let q_t = target.stationary_density(src) * target.transition_density(src, tgt);
        let weight = q_t * (path.edge_count() as f64 + config.length_slack);
        for (tail, head) in path.edges() {
            let key = (PointKey::of(tail), PointKey::of(head));
            let slot = slots.entry(key).or_insert_with(|| Slot {
                tail: tail.clone(),
                head: head.clone(),
                load: 0.0,
                count: 0,
            });
            slot.load += weight;
            slot.count += 1;
        }
    });

    let space = base.space();
    let mut b = 0.0_f64;
    let mut max_count = 0usize;
    let mut evaluated: Vec<(Edge, f64)> = Vec::with_capacity(slots.len());
    for slot in slots.values() {
        let q =
            base.stationary_density(&slot.tail) * base.transition_density(&slot.tail, &slot.head);
        if q <= 0.0 {
            return Err(PathsError::ZeroFlowEdge(fmt_edge(&slot.tail, &slot.head)));
        }
        let e = Edge::new(slot.tail.clone(), slot.head.clone());
        let mult = 2.0 * (config.multiplicity_at(space, &e).ceil() + 1.0);
        let value = mult * slot.load / q;
        b = b.max(value);
        max_count = max_count.max(slot.count);
        evaluated.push((e, value));
    }
    let argmax_edges = evaluated
        .iter()
        .filter(|(_, v)| *v >= b * (1.0 - 1e-9))
        .map(|(e, _)| e.clone())
        .collect();

    let ctx = AssumptionContext::new(base, Some(target), seed);
    let report = validate_assumptions(family, config, &ctx);
    if !report.all_pass() {
        return Err(PathsError::AssumptionsFailed(report.to_string()));
    }
    Ok(GeneralCongestion {
        b,
        argmax_edges,
        max_paths_per_edge: max_count,
        n_edges_used: slots.len(),
        n_paths,
        report,
    })
}

/// Diagnostic sweep around the reported maximum: jitter the argmax edges
/// inside the goodset and re-price the same load at the perturbed edge's own
/// flow. Edges off the family's support carry no load, so this estimates how
/// sensitive the constant is to the exact edge locations without changing
/// its definition.
pub fn congestion_sweep_diagnostic(
    base: &DensityKernel,
    congestion: &GeneralCongestion,
    config: &AssumptionConfig,
    samples: usize,
    seed: u64,
) -> f64 {
    let space = base.space();
    let mut rng = SplitMix64::new(seed);
    let mut worst = congestion.b;
    if congestion.argmax_edges.is_empty() {
        return worst;
    }
    let jitter = |rng: &mut SplitMix64, p: &Point, radius: f64| -> Point {
        let coords = p
            .coords
            .iter()
            .map(|&c| (c + radius * (2.0 * rng.next_f64() - 1.0)).clamp(0.0, 1.0))
            .collect();
        Point::new(p.component, coords)
    };
    let radius = config.epsilon.min(0.25);
    for _ in 0..samples {
        let e = &congestion.argmax_edges[rng.next_index(congestion.argmax_edges.len())];
        let tail = jitter(&mut rng, &e.tail, radius);
        let head = jitter(&mut rng, &e.head, radius);
        if !config.goodset.contains(base, &tail, &head) {
            continue;
        }
        let q_orig = base.stationary_density(&e.tail) * base.transition_density(&e.tail, &e.head);
        let q_new = base.stationary_density(&tail) * base.transition_density(&tail, &head);
        if q_new <= 0.0 || q_orig <= 0.0 {
            continue;
        }
        let m_orig = 2.0 * (config.multiplicity_at(space, e).ceil() + 1.0);
        let m_new = 2.0 * (config.multiplicity_at(space, &Edge::new(tail, head)).ceil() + 1.0);
        worst = worst.max(congestion.b * (q_orig / q_new) * (m_new / m_orig));
    }
    worst
}

/// Largest number of family paths through any single edge, ignoring flows
/// and multiplicities. The naive congestion count.
pub fn naive_max_paths_per_edge(family: &PathFamily) -> usize {
    let mut counts: BTreeMap<EdgeKey, usize> = BTreeMap::new();
    family.for_each(|path| {
        for (tail, head) in path.edges() {
            *counts
                .entry((PointKey::of(tail), PointKey::of(head)))
                .or_insert(0) += 1;
        }
    });
    counts.values().copied().max().unwrap_or(0)
}

/// Project a continuous family onto a mesh: endpoints map to their cells,
/// interior points to the anchors of their cells, and self-edges produced by
/// the collapse are deleted, so the lifted path is never longer than the
/// original. When several paths lift to the same ordered cell pair the first
/// one (in family enumeration order) wins.
pub fn lift_path_family(
    family: &PathFamily,
    partition: &MeshPartition,
) -> Result<StatePathFamily, PathsError> {
    let mut lifted = StatePathFamily::new();
    let mut first_err: Option<PathsError> = None;
    family.for_each(|path| {
        if first_err.is_some() {
            return;
        }
        let mut states = Vec::with_capacity(path.points().len());
        for p in path.points() {
            match partition.cell_of(p) {
                Ok(cell) => {
                    if states.last() != Some(&cell) {
                        states.push(cell);
                    }
                }
                Err(e) => {
                    first_err = Some(e.into());
                    return;
                }
            }
        }
        let key = (states[0], *states.last().expect("nonempty"));
        if lifted.get(key.0, key.1).is_none() {
            lifted.insert(states).expect("collapse removes repeats");
        }
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(lifted),
    }
}
