//! Barbell benchmark instances: two n-cliques joined by one edge.
//!
//! Three flavors share the same underlying walk:
//!
//! * `discrete`: the simple random walk on the 2n-vertex graph, with the
//!   canonical path family (direct edges within a side, three hops through
//!   the bridge across sides).
//! * `continuous`: the product walk on one unit interval per vertex: jump to
//!   a neighbor of the current vertex, then land uniformly in its interval.
//!   Its canonical cross-side paths all funnel through the two hub intervals,
//!   so single edges get shared by unboundedly many paths as n grows; this is
//!   the non-example the split flavor repairs.
//! * `split`: the hub intervals are each cut into n-1 clone intervals (one
//!   per opposite-clique vertex, in ascending vertex order), re-scaled to
//!   unit length. The path family matches endpoint coordinates through the
//!   clones: the intermediate clone index and coordinate are functions of
//!   both endpoints, so every edge serves a bounded number of paths no matter
//!   how large n is, and the endpoint-separation condition holds exactly.
//!
//! Split-family interior coordinates use the midpoint `(a + b) / 2` of the
//! two endpoint coordinates. Any pairing that recovers each endpoint from the
//! edge plus the other endpoint works; the midpoint is continuous in both
//! endpoints and keeps grid families on a half-step grid.

use crate::chain::FiniteChain;
use crate::grid::{DensityKernel, Point, ProductSpace};
use crate::paths::{AssumptionConfig, FunctionSpec, Path, PathFamily, RegionSpec, StatePathFamily};
use thiserror::Error;

/// Family grid used by the split flavor unless overridden.
pub const DEFAULT_FAMILY_GRID: usize = 16;

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error("barbell requires n >= 3 (got {n})")]
    TooSmall { n: usize },
    #[error("not a probability vector: {reason}")]
    InvalidDistribution { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarbellFlavor {
    Discrete,
    Continuous,
    Split,
}

impl std::fmt::Display for BarbellFlavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BarbellFlavor::Discrete => write!(f, "discrete"),
            BarbellFlavor::Continuous => write!(f, "continuous"),
            BarbellFlavor::Split => write!(f, "split"),
        }
    }
}

impl std::str::FromStr for BarbellFlavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "discrete" => Ok(BarbellFlavor::Discrete),
            "continuous" => Ok(BarbellFlavor::Continuous),
            "split" => Ok(BarbellFlavor::Split),
            other => Err(format!("unknown flavor '{other}'")),
        }
    }
}

/// One benchmark instance: the chain or kernel, the canonical path family in
/// the matching representation, and the prefilled validator config.
#[derive(Debug)]
pub struct BarbellInstance {
    pub n: usize,
    pub flavor: BarbellFlavor,
    pub chain: Option<FiniteChain>,
    pub kernel: Option<DensityKernel>,
    pub state_family: Option<StatePathFamily>,
    pub family: Option<PathFamily>,
    pub config: AssumptionConfig,
    /// Grid on which point-family endpoints live (continuous/split flavors).
    pub family_grid: usize,
}

/// Graph data shared by all flavors: vertices 0..2n-1, left clique 0..n-1
/// with hub 0, right clique n..2n-1 with hub n, bridge (0, n).
#[derive(Debug, Clone, Copy)]
pub struct BarbellGraph {
    pub n: usize,
}

impl BarbellGraph {
    pub fn new(n: usize) -> Result<Self, BenchmarkError> {
        if n < 3 {
            return Err(BenchmarkError::TooSmall { n });
        }
        Ok(Self { n })
    }

    pub fn n_vertices(&self) -> usize {
        2 * self.n
    }

    pub fn left_hub(&self) -> usize {
        0
    }

    pub fn right_hub(&self) -> usize {
        self.n
    }

    pub fn is_left(&self, v: usize) -> bool {
        v < self.n
    }

    pub fn is_hub(&self, v: usize) -> bool {
        v == 0 || v == self.n
    }

    pub fn degree(&self, v: usize) -> usize {
        if self.is_hub(v) {
            self.n
        } else {
            self.n - 1
        }
    }

    pub fn n_edges(&self) -> usize {
        (self.n - 1) * (self.n - 1) + self.n
    }

    pub fn adjacent(&self, v: usize, w: usize) -> bool {
        if v == w {
            return false;
        }
        if self.is_left(v) == self.is_left(w) {
            return true;
        }
        (v == 0 && w == self.n) || (v == self.n && w == 0)
    }

    /// Walk probability 1/deg(v) on adjacency, 0 otherwise.
    pub fn transition(&self, v: usize, w: usize) -> f64 {
        if self.adjacent(v, w) {
            1.0 / self.degree(v) as f64
        } else {
            0.0
        }
    }

    /// Stationary mass deg(v) / (2 |E|).
    pub fn stationary(&self, v: usize) -> f64 {
        self.degree(v) as f64 / (2 * self.n_edges()) as f64
    }

    pub fn hub_of_side(&self, v: usize) -> usize {
        if self.is_left(v) {
            0
        } else {
            self.n
        }
    }
}

fn split_config(n: usize) -> AssumptionConfig {
    AssumptionConfig {
        epsilon: 0.5,
        epsilon0: 0.5,
        length_bound: 3.0,
        length_slack: 2.0,
        multiplicity: FunctionSpec::Constant((n + 1) as f64),
        multiplicity_cap: (n + 1) as f64,
        short_edge: FunctionSpec::Identity,
        goodset: RegionSpec::PositiveFlow,
        big_goodset: RegionSpec::PositiveFlow,
    }
}

/// Simple random walk on the barbell graph with its canonical path family:
/// direct edges within a side, hub-bridge-hub across sides, self-edges
/// deleted. Probabilities and masses are ratios of integers.
pub fn barbell_discrete(n: usize) -> Result<BarbellInstance, BenchmarkError> {
    let g = BarbellGraph::new(n)?;
    let nv = g.n_vertices();
    let mut triplets = Vec::new();
    for v in 0..nv {
        for w in 0..nv {
            let p = g.transition(v, w);
            if p > 0.0 {
                triplets.push((v, w, p));
            }
        }
    }
    let pi: Vec<f64> = (0..nv).map(|v| g.stationary(v)).collect();
    let chain = FiniteChain::from_triplets(nv, &triplets, pi)
        .expect("barbell construction is well-formed")
        .with_reversible_flag(true);

    let mut family = StatePathFamily::new();
    for x in 0..nv {
        for y in 0..nv {
            let mut states = if x == y {
                vec![x]
            } else if g.is_left(x) == g.is_left(y) {
                vec![x, y]
            } else {
                vec![x, g.hub_of_side(x), g.hub_of_side(y), y]
            };
            states.dedup();
            family.insert(states).expect("canonical paths are chains");
        }
    }

    Ok(BarbellInstance {
        n,
        flavor: BarbellFlavor::Discrete,
        chain: Some(chain),
        kernel: None,
        state_family: Some(family),
        family: None,
        config: split_config(n),
        family_grid: 0,
    })
}

/// Density kernel of the continuous product walk: one unit interval per
/// vertex, transition density equal to the walk probability of the target
/// interval's vertex, stationary density equal to the vertex's mass.
fn continuous_kernel(g: BarbellGraph) -> DensityKernel {
    let space = ProductSpace::new(vec![1; g.n_vertices()]).expect("nonempty");
    let g2 = g;
    let g3 = g;
    DensityKernel::from_fns(
        space,
        format!("barbell:{}:continuous", g.n),
        true,
        move |x, y| g.transition(x.component, y.component),
        move |x| g2.stationary(x.component),
        move |x, y| g3.adjacent(x.component, y.component),
    )
}

/// Continuous flavor with the literal hub-funnel path family on a coordinate
/// grid: cross-side paths step to the hub interval at the source coordinate,
/// cross the bridge at the target coordinate, then finish. First legs depend
/// only on the source, so they are shared by every target: the family that
/// makes naive congestion counting collapse.
pub fn barbell_continuous(n: usize) -> Result<BarbellInstance, BenchmarkError> {
    barbell_continuous_with_grid(n, 4)
}

pub fn barbell_continuous_with_grid(
    n: usize,
    grid: usize,
) -> Result<BarbellInstance, BenchmarkError> {
    let g = BarbellGraph::new(n)?;
    let kernel = continuous_kernel(g);
    let nv = g.n_vertices();
    let gf = grid as f64;
    let count = {
        // ordered cross-side pairs over the anchor grid, both directions
        let per_side = n * grid;
        2 * per_side * per_side
    };
    let walk = move |f: &mut dyn FnMut(&Path)| {
        for (src_side, tgt_side) in [(0usize, 1usize), (1, 0)] {
            for c1 in 0..nv {
                if (c1 < n) != (src_side == 0) {
                    continue;
                }
                for ia in 0..grid {
                    for c2 in 0..nv {
                        if (c2 < n) != (tgt_side == 0) {
                            continue;
                        }
                        for ib in 0..grid {
                            let a = ia as f64 / gf;
                            let b = ib as f64 / gf;
                            let src = Point::d1(c1, a);
                            let tgt = Point::d1(c2, b);
                            let hub_src = Point::d1(g.hub_of_side(c1), a);
                            let hub_tgt = Point::d1(g.hub_of_side(c2), b);
                            let mut points = vec![src, hub_src, hub_tgt, tgt];
                            points.dedup();
                            f(&Path::new(points).expect("nonempty"));
                        }
                    }
                }
            }
        }
    };
    Ok(BarbellInstance {
        n,
        flavor: BarbellFlavor::Continuous,
        chain: None,
        kernel: Some(kernel),
        state_family: None,
        family: Some(PathFamily::from_generator(count, walk)),
        config: split_config(n),
        family_grid: grid,
    })
}

/// Component layout of the split space: left ordinaries, left clones, right
/// ordinaries, right clones, each block of size n-1 in ascending vertex
/// order.
#[derive(Debug, Clone, Copy)]
pub struct SplitLayout {
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    LeftOrdinary,
    LeftClone,
    RightOrdinary,
    RightClone,
}

impl SplitLayout {
    pub fn block(&self) -> usize {
        self.n - 1
    }

    pub fn n_components(&self) -> usize {
        4 * self.block()
    }

    pub fn kind(&self, comp: usize) -> SplitKind {
        match comp / self.block() {
            0 => SplitKind::LeftOrdinary,
            1 => SplitKind::LeftClone,
            2 => SplitKind::RightOrdinary,
            _ => SplitKind::RightClone,
        }
    }

    /// Position within the block: for ordinaries the clique ordering of the
    /// vertex, for clones the ordering of the vertex they serve.
    pub fn aligned(&self, comp: usize) -> usize {
        comp % self.block()
    }

    pub fn is_left(&self, comp: usize) -> bool {
        comp < 2 * self.block()
    }

    pub fn is_clone(&self, comp: usize) -> bool {
        matches!(
            self.kind(comp),
            SplitKind::LeftClone | SplitKind::RightClone
        )
    }

    pub fn component(&self, kind: SplitKind, aligned: usize) -> usize {
        let base = match kind {
            SplitKind::LeftOrdinary => 0,
            SplitKind::LeftClone => 1,
            SplitKind::RightOrdinary => 2,
            SplitKind::RightClone => 3,
        };
        base * self.block() + aligned
    }

    /// Vertex of the barbell graph this component belongs to.
    pub fn vertex(&self, comp: usize) -> usize {
        match self.kind(comp) {
            SplitKind::LeftOrdinary => 1 + self.aligned(comp),
            SplitKind::LeftClone => 0,
            SplitKind::RightOrdinary => self.n + 1 + self.aligned(comp),
            SplitKind::RightClone => self.n,
        }
    }

    /// Map a split-space point to the unsplit continuous space: ordinary
    /// intervals map identically, a clone at coordinate t maps into its hub
    /// interval at t/(n-1) + aligned/(n-1).
    pub fn to_unsplit(&self, p: &Point) -> Point {
        let q = self.block() as f64;
        match self.kind(p.component) {
            SplitKind::LeftOrdinary | SplitKind::RightOrdinary => {
                Point::d1(self.vertex(p.component), p.coords[0])
            }
            SplitKind::LeftClone | SplitKind::RightClone => Point::d1(
                self.vertex(p.component),
                p.coords[0] / q + self.aligned(p.component) as f64 / q,
            ),
        }
    }
}

fn split_kernel(g: BarbellGraph) -> DensityKernel {
    let layout = SplitLayout { n: g.n };
    let space = ProductSpace::new(vec![1; layout.n_components()]).expect("nonempty");
    let frac = 1.0 / layout.block() as f64;
    let l2 = layout;
    let l3 = layout;
    DensityKernel::from_fns(
        space,
        format!("barbell:{}:split", g.n),
        true,
        move |x, y| {
            let p = g.transition(layout.vertex(x.component), layout.vertex(y.component));
            if layout.is_clone(y.component) {
                p * frac
            } else {
                p
            }
        },
        move |x| {
            let k = g.stationary(l2.vertex(x.component));
            if l2.is_clone(x.component) {
                k * frac
            } else {
                k
            }
        },
        move |x, y| g.adjacent(l3.vertex(x.component), l3.vertex(y.component)),
    )
}

/// Split flavor with [`DEFAULT_FAMILY_GRID`] endpoint coordinates per
/// component.
pub fn barbell_split(n: usize) -> Result<BarbellInstance, BenchmarkError> {
    barbell_split_with_grid(n, DEFAULT_FAMILY_GRID)
}

/// The enumerated split family, pair by pair (`t` denotes aligned block
/// positions, interior coordinates are the endpoint midpoint `(a + b) / 2`):
///
/// * same side, ordinary to ordinary, different components: the direct edge;
/// * same side, same ordinary component: two hops via the side's clone at
///   the source's block position and the midpoint coordinate;
/// * same side, ordinary/clone mixed: the direct edge (hub adjacency);
/// * same side, clone to clone: two hops via the ordinary component at block
///   position `(t1 + t2) mod (n-1)`, midpoint coordinate;
/// * cross side, clone to clone: the direct bridge edge;
/// * cross side, ordinary to the opposite clone at the same block position:
///   two hops via the source side's clone at that position, midpoint
///   coordinate (and the mirror clone-to-ordinary variant via the target
///   side's clone).
///
/// Cross-side ordinary-to-ordinary pairs are not enumerated: each would
/// weight a clone-to-clone bridge edge with an ordinary-mass flow, and the
/// multiplicity-padded constant over those terms grows one order faster than
/// the relaxation time it certifies. The clone-matched pairs above carry the
/// same bridge bottleneck at the correct order.
pub fn barbell_split_with_grid(n: usize, grid: usize) -> Result<BarbellInstance, BenchmarkError> {
    let g = BarbellGraph::new(n)?;
    let layout = SplitLayout { n };
    let kernel = split_kernel(g);
    let q = layout.block();
    let nc = layout.n_components();

    let emit_all = move |f: &mut dyn FnMut(&Path)| {
        let gf = grid as f64;
        let point = |comp: usize, idx: usize| Point::d1(comp, idx as f64 / gf);
        // midpoint of two grid coordinates, on the half-step grid
        let mid_point =
            |comp: usize, ia: usize, ib: usize| Point::d1(comp, (ia + ib) as f64 / (2.0 * gf));
        for c1 in 0..nc {
            for ia in 0..grid {
                for c2 in 0..nc {
                    for ib in 0..grid {
                        if c1 == c2 && ia == ib {
                            continue; // diagonal pairs carry the empty path
                        }
                        let same_side = layout.is_left(c1) == layout.is_left(c2);
                        let (k1, k2) = (layout.kind(c1), layout.kind(c2));
                        let (t1, t2) = (layout.aligned(c1), layout.aligned(c2));
                        let cl1 = layout.is_clone(c1);
                        let cl2 = layout.is_clone(c2);
                        let src = point(c1, ia);
                        let tgt = point(c2, ib);
                        let path = if same_side {
                            if !cl1 && !cl2 && c1 == c2 {
                                let mid_comp = layout.component(clone_kind(k1), t1);
                                Some(vec![src, mid_point(mid_comp, ia, ib), tgt])
                            } else if !cl1 && !cl2 {
                                Some(vec![src, tgt])
                            } else if cl1 && cl2 {
                                let mid_comp = layout.component(ordinary_kind(k1), (t1 + t2) % q);
                                Some(vec![src, mid_point(mid_comp, ia, ib), tgt])
                            } else {
                                Some(vec![src, tgt])
                            }
                        } else if cl1 && cl2 {
                            Some(vec![src, tgt])
                        } else if !cl1 && cl2 && t1 == t2 {
                            let mid_comp = layout.component(clone_kind(k1), t1);
                            Some(vec![src, mid_point(mid_comp, ia, ib), tgt])
                        } else if cl1 && !cl2 && t1 == t2 {
                            let mid_comp = layout.component(clone_kind(k2), t2);
                            Some(vec![src, mid_point(mid_comp, ia, ib), tgt])
                        } else {
                            None
                        };
                        if let Some(points) = path {
                            f(&Path::new(points).expect("nonempty"));
                        }
                    }
                }
            }
        }
    };

    let mut count = 0usize;
    emit_all(&mut |_: &Path| count += 1);

    Ok(BarbellInstance {
        n,
        flavor: BarbellFlavor::Split,
        chain: None,
        kernel: Some(kernel),
        state_family: None,
        family: Some(PathFamily::from_generator(count, emit_all)),
        config: split_config(n),
        family_grid: grid,
    })
}

fn clone_kind(k: SplitKind) -> SplitKind {
    match k {
        SplitKind::LeftOrdinary | SplitKind::LeftClone => SplitKind::LeftClone,
        SplitKind::RightOrdinary | SplitKind::RightClone => SplitKind::RightClone,
    }
}

fn ordinary_kind(k: SplitKind) -> SplitKind {
    match k {
        SplitKind::LeftOrdinary | SplitKind::LeftClone => SplitKind::LeftOrdinary,
        SplitKind::RightOrdinary | SplitKind::RightClone => SplitKind::RightOrdinary,
    }
}

/// The chain whose every row is the given distribution.
pub fn iid_chain(pi: &[f64]) -> Result<FiniteChain, BenchmarkError> {
    let n = pi.len();
    if n == 0 {
        return Err(BenchmarkError::InvalidDistribution {
            reason: "empty vector".into(),
        });
    }
    let sum: f64 = pi.iter().sum();
    if pi.iter().any(|&x| x < 0.0 || x.is_nan() || !x.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(BenchmarkError::InvalidDistribution {
            reason: format!("entries must be nonnegative and sum to 1 (sum = {sum})"),
        });
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|_| pi.to_vec()).collect();
    Ok(FiniteChain::from_dense(&rows, pi.to_vec())
        .expect("iid rows are well-formed")
        .with_reversible_flag(true))
}

/// The kernel that draws i.i.d. samples from the given kernel's stationary
/// density: f(x, y) = k(y).
pub fn iid_kernel(reference: &DensityKernel) -> DensityKernel {
    let stat = reference.clone();
    let stat2 = reference.clone();
    DensityKernel::from_fns(
        reference.space().clone(),
        format!("iid({})", reference.name()),
        true,
        move |_, y| stat.stationary_density(y),
        move |x| stat2.stationary_density(x),
        |_, _| true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{dirichlet_form, validate_chain, variance, ScalarField, Tolerances};
    use crate::grid::{build_partition, discretize_kernel};
    use crate::paths::naive_max_paths_per_edge;
    use crate::rng::SplitMix64;
    use crate::spectral::spectral_gap;

    #[test]
    fn rejects_small_n() {
        assert!(barbell_discrete(2).is_err());
        assert!(barbell_continuous(1).is_err());
        assert!(barbell_split(2).is_err());
    }

    #[test]
    fn discrete_graph_shape() {
        for n in [3usize, 5, 8] {
            let g = BarbellGraph::new(n).unwrap();
            assert_eq!(g.n_edges(), (n - 1) * (n - 1) + n);
            let mut edge_count = 0;
            for v in 0..g.n_vertices() {
                let deg = (0..g.n_vertices()).filter(|&w| g.adjacent(v, w)).count();
                assert_eq!(deg, g.degree(v));
                if g.is_hub(v) {
                    assert_eq!(deg, n);
                } else {
                    assert_eq!(deg, n - 1);
                }
                edge_count += deg;
            }
            assert_eq!(edge_count, 2 * g.n_edges());
        }
    }

    #[test]
    fn discrete_probabilities_and_masses() {
        let n = 6;
        let inst = barbell_discrete(n).unwrap();
        let chain = inst.chain.as_ref().unwrap();
        let report = validate_chain(chain, Tolerances::default());
        assert!(report.is_clean(), "{report}");
        let inv_n = 1.0 / n as f64;
        let inv_n1 = 1.0 / (n - 1) as f64;
        for (_, _, p) in chain.triplets() {
            assert!(
                (p - inv_n).abs() < 1e-15 || (p - inv_n1).abs() < 1e-15,
                "unexpected probability {p}"
            );
        }
        let denom = 2.0 * ((n - 1) * (n - 1) + n) as f64;
        for v in 0..2 * n {
            let expect = if v == 0 || v == n {
                n as f64 / denom
            } else {
                (n - 1) as f64 / denom
            };
            assert!((chain.stationary()[v] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn discrete_family_shape() {
        let n = 8;
        let inst = barbell_discrete(n).unwrap();
        let family = inst.state_family.as_ref().unwrap();
        let mut center_count = 0;
        for (_, states) in family.iter() {
            assert!(states.len() - 1 <= 3, "path too long: {states:?}");
            for w in states.windows(2) {
                if w[0] == 0 && w[1] == n {
                    center_count += 1;
                }
            }
        }
        // crossing pairs from the left side all use the bridge: about n^2
        assert_eq!(center_count, n * n);
    }

    #[test]
    fn clique_indicator_dirichlet_matches_brute_force() {
        // independent oracle: the dense double sum over every ordered pair
        let n = 5;
        let inst = barbell_discrete(n).unwrap();
        let chain = inst.chain.as_ref().unwrap();
        let f: Vec<f64> = (0..2 * n).map(|v| if v < n { 1.0 } else { 0.0 }).collect();
        let mut brute = 0.0;
        for i in 0..2 * n {
            for j in 0..2 * n {
                let d = f[i] - f[j];
                brute += 0.5 * d * d * chain.prob(i, j) * chain.stationary()[i];
            }
        }
        let fast = dirichlet_form(chain, &ScalarField::new(f)).unwrap();
        assert!((fast - brute).abs() < 1e-15, "{fast} vs {brute}");
        // frozen value: only the bridge contributes, (1/2)*2*Q(bridge)
        // with Q(bridge) = (n/(2((n-1)^2+n))) * (1/n) = 1/42 for n = 5
        assert!((brute - 1.0 / 42.0).abs() < 1e-15);
    }

    #[test]
    fn continuous_density_matches_walk_and_balances() {
        let n = 5;
        let inst = barbell_continuous(n).unwrap();
        let kernel = inst.kernel.as_ref().unwrap();
        let g = BarbellGraph::new(n).unwrap();
        let mut rng = SplitMix64::new(3);
        for _ in 0..200 {
            let x = Point::d1(rng.next_index(2 * n), rng.next_f64());
            let y = Point::d1(rng.next_index(2 * n), rng.next_f64());
            let f = kernel.transition_density(&x, &y);
            assert_eq!(f, g.transition(x.component, y.component));
            // detailed balance of the flow density
            let fwd = kernel.stationary_density(&x) * f;
            let bwd = kernel.stationary_density(&y) * kernel.transition_density(&y, &x);
            assert!((fwd - bwd).abs() < 1e-15);
        }
    }

    #[test]
    fn continuous_discretization_aggregates_to_discrete() {
        let n = 3;
        let inst = barbell_continuous(n).unwrap();
        let kernel = inst.kernel.as_ref().unwrap();
        let discrete = barbell_discrete(n).unwrap();
        let dchain = discrete.chain.as_ref().unwrap();
        for per_axis in [2usize, 5] {
            let mesh = build_partition(kernel.space(), per_axis).unwrap();
            let disc = discretize_kernel(kernel, &mesh, 2).unwrap();
            // closed form: the density is constant per component pair, so
            // every cell receives exactly the walk probability over the cell
            // count, independent of the quadrature order
            let disc_hi = discretize_kernel(kernel, &mesh, 5).unwrap();
            for i in 0..mesh.n_cells() {
                let ci = mesh.component_of(i);
                for j in 0..mesh.n_cells() {
                    let cj = mesh.component_of(j);
                    let expect = dchain.prob(ci, cj) / per_axis as f64;
                    assert!((disc.chain.prob(i, j) - expect).abs() < 1e-15);
                    assert!((disc_hi.chain.prob(i, j) - expect).abs() < 1e-15);
                }
            }
            // sum cells per target component: exactly the walk probability
            for i in 0..mesh.n_cells() {
                let ci = mesh.component_of(i);
                for d in 0..2 * n {
                    let total: f64 = mesh.component_cells(d).map(|j| disc.chain.prob(i, j)).sum();
                    assert!(
                        (total - dchain.prob(ci, d)).abs() < 1e-12,
                        "aggregate mismatch at ({ci}, {d})"
                    );
                }
            }
            // aggregated stationary masses match, too
            for d in 0..2 * n {
                let total: f64 = mesh
                    .component_cells(d)
                    .map(|j| disc.chain.stationary()[j])
                    .sum();
                assert!((total - dchain.stationary()[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn split_clone_map_formula() {
        let n = 5;
        let layout = SplitLayout { n };
        let q = (n - 1) as f64;
        for t in 0..n - 1 {
            for coord in [0.0, 0.25, 0.9] {
                let p = Point::d1(layout.component(SplitKind::LeftClone, t), coord);
                let mapped = layout.to_unsplit(&p);
                assert_eq!(mapped.component, 0);
                let expect = coord / q + t as f64 / q;
                assert!((mapped.coords[0] - expect).abs() < 1e-15);
            }
            let p = Point::d1(layout.component(SplitKind::LeftOrdinary, t), 0.3);
            assert_eq!(layout.to_unsplit(&p).component, 1 + t);
        }
    }

    #[test]
    fn split_clone_map_preserves_mass() {
        // the split stationary density of a clone cell equals the unsplit
        // density of its image times the 1/(n-1) length contraction
        let n = 4;
        let split = barbell_split(n).unwrap();
        let unsplit = barbell_continuous(n).unwrap();
        let ks = split.kernel.as_ref().unwrap();
        let ku = unsplit.kernel.as_ref().unwrap();
        let layout = SplitLayout { n };
        let mut rng = SplitMix64::new(9);
        for _ in 0..100 {
            let comp = rng.next_index(layout.n_components());
            let p = Point::d1(comp, rng.next_f64());
            let image = layout.to_unsplit(&p);
            let scale = if layout.is_clone(comp) {
                (n - 1) as f64
            } else {
                1.0
            };
            assert!(
                (ks.stationary_density(&p) * scale - ku.stationary_density(&image)).abs() < 1e-15
            );
        }
    }

    #[test]
    fn split_family_paths_are_short_and_positive_flow() {
        let inst = barbell_split_with_grid(4, 4).unwrap();
        let kernel = inst.kernel.as_ref().unwrap();
        let family = inst.family.as_ref().unwrap();
        let mut seen = 0usize;
        family.for_each(|path| {
            seen += 1;
            assert!(path.edge_count() <= 3);
            for (tail, head) in path.edges() {
                assert!(
                    kernel.transition_density(tail, head) > 0.0,
                    "family edge without flow: {tail:?} -> {head:?}"
                );
            }
        });
        assert_eq!(seen, family.len());
    }

    #[test]
    fn split_family_edge_reuse_is_bounded() {
        let c4 = naive_max_paths_per_edge(
            barbell_split_with_grid(4, 8)
                .unwrap()
                .family
                .as_ref()
                .unwrap(),
        );
        let c6 = naive_max_paths_per_edge(
            barbell_split_with_grid(6, 8)
                .unwrap()
                .family
                .as_ref()
                .unwrap(),
        );
        assert_eq!(c4, c6, "edge reuse must not grow with n");
        assert!(c4 <= 4, "reuse {c4}");
    }

    #[test]
    fn continuous_family_reuse_grows_with_n() {
        let reuse = |n: usize| {
            naive_max_paths_per_edge(
                barbell_continuous_with_grid(n, 4)
                    .unwrap()
                    .family
                    .as_ref()
                    .unwrap(),
            )
        };
        assert!(reuse(6) > reuse(3), "hub-funnel reuse should grow with n");
    }

    #[test]
    fn lifted_split_family_lands_on_positive_rows() {
        let inst = barbell_split_with_grid(4, 8).unwrap();
        let kernel = inst.kernel.as_ref().unwrap();
        let mesh = build_partition(kernel.space(), 8).unwrap();
        let lifted = crate::paths::lift_path_family(inst.family.as_ref().unwrap(), &mesh).unwrap();
        let h = crate::grid::reversibilize(kernel, &mesh, 2).unwrap();
        assert!(!lifted.is_empty());
        for (_, states) in lifted.iter() {
            for w in states.windows(2) {
                assert!(
                    h.chain.prob(w[0], w[1]) > 0.0,
                    "lifted edge ({}, {}) has zero reversibilized mass",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn left_clique_indicator_is_a_near_optimal_mode() {
        // the indicator of one clique is the natural slow mode: its Rayleigh
        // quotient sits within a factor 4 of the true gap
        let n = 8;
        let inst = barbell_discrete(n).unwrap();
        let chain = inst.chain.as_ref().unwrap();
        let f = ScalarField::new((0..2 * n).map(|v| if v < n { 1.0 } else { 0.0 }).collect());
        let quotient = crate::spectral::rayleigh_quotient(chain, &f).unwrap();
        let gap = spectral_gap(chain).unwrap().gap;
        assert!(quotient >= gap - 1e-12);
        assert!(quotient <= 4.0 * gap, "quotient {quotient} vs gap {gap}");
    }

    #[test]
    fn iid_chain_properties() {
        let pi = vec![0.1, 0.2, 0.3, 0.4];
        let chain = iid_chain(&pi).unwrap();
        let spec = spectral_gap(&chain).unwrap();
        assert!((spec.gap - 1.0).abs() < 1e-12);
        // Dirichlet form of the iid chain equals the stationary variance
        let mut rng = SplitMix64::new(77);
        for _ in 0..20 {
            let f = ScalarField::new((0..4).map(|_| rng.next_f64() * 3.0).collect());
            let e = dirichlet_form(&chain, &f).unwrap();
            let v = variance(&chain, &f).unwrap();
            assert!((e - v).abs() < 1e-12, "E = {e}, Var = {v}");
        }
        assert!(iid_chain(&[0.5, 0.6]).is_err());
    }

    #[test]
    fn iid_kernel_is_reversible_product() {
        let base = DensityKernel::affine_xy();
        let iid = iid_kernel(&base);
        let mut rng = SplitMix64::new(13);
        for _ in 0..100 {
            let x = Point::d1(0, rng.next_f64());
            let y = Point::d1(0, rng.next_f64());
            let fwd = iid.stationary_density(&x) * iid.transition_density(&x, &y);
            let bwd = iid.stationary_density(&y) * iid.transition_density(&y, &x);
            assert!((fwd - bwd).abs() < 1e-15);
        }
    }
}
