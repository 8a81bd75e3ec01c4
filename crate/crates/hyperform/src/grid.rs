//! Finite-mesh discretization of continuous-state kernels on disjoint unions
//! of unit hypercubes.
//!
//! A [`ProductSpace`] is a list of components, each a copy of `[0,1]^k`. Its
//! metric is Euclidean within a component and a constant `1 + max_i sqrt(k_i)`
//! across components, so every point is closer to all of its own component
//! than to any point of another. A [`MeshPartition`] cuts each component into
//! half-open axis-aligned cells of side `delta = 1/per_axis` (closed on the
//! top face of the space), each with its lower-left anchor.
//!
//! [`discretize_kernel`] projects a transition density onto cell-to-cell
//! probabilities by midpoint quadrature; [`reversibilize`] replaces the
//! anchor-sampled kernel with its stationary-weighted cell average, which is
//! in exact detailed balance with its own row masses.

use crate::chain::{FiniteChain, StateLabel};
use std::sync::Arc;
use thiserror::Error;

/// Default midpoint panels per axis per cell.
pub const DEFAULT_QUAD_ORDER: usize = 3;
/// Stationary cell mass below which the reversibilized row falls back to the
/// anchor-sampled row.
pub const ZERO_MASS_THRESHOLD: f64 = 1e-14;
/// Row renormalization factors may deviate from 1 by at most this much;
/// larger drift means mass left the space and is a hard error.
pub const RENORM_TOL: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("component list must be nonempty")]
    NoComponents,
    #[error("component {component} must have dimension >= 1")]
    ZeroDimension { component: usize },
    #[error("per_axis must be >= 1")]
    ZeroPerAxis,
    #[error("point has {got} coordinates, component {component} has dimension {expected}")]
    WrongDimension {
        component: usize,
        got: usize,
        expected: usize,
    },
    #[error("component {component} out of range ({count} components)")]
    UnknownComponent { component: usize, count: usize },
    #[error("coordinate {value} outside [0, 1]")]
    OutsideUnitBox { value: f64 },
    #[error("quadrature produced a zero row at cell {row}: kernel mass escaped the space")]
    ZeroRow { row: usize },
    #[error("row {row} renormalization factor {factor} deviates from 1 beyond {tol}")]
    MassLeak { row: usize, factor: f64, tol: f64 },
    #[error("kernel is not flagged reversible")]
    NotReversible,
    #[error("cell {cell}: reference mass is zero but target mass {target} is positive")]
    DominationFailure { cell: usize, target: f64 },
    #[error("masses must be distributions over the {expected} cells (got {got})")]
    MassDimension { got: usize, expected: usize },
    #[error("mass vector sums to {sum}; pass normalize=true to accept unnormalized input")]
    Unnormalized { sum: f64 },
}

/// A point of the disjoint union: component id plus coordinates in [0,1]^k.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub component: usize,
    pub coords: Vec<f64>,
}

impl Point {
    pub fn new(component: usize, coords: Vec<f64>) -> Self {
        Self { component, coords }
    }

    /// One-dimensional convenience constructor.
    pub fn d1(component: usize, x: f64) -> Self {
        Self {
            component,
            coords: vec![x],
        }
    }
}

/// Disjoint union of unit hypercubes with the far-distance metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSpace {
    dims: Vec<usize>,
}

impl ProductSpace {
    pub fn new(dims: Vec<usize>) -> Result<Self, GridError> {
        if dims.is_empty() {
            return Err(GridError::NoComponents);
        }
        for (component, &k) in dims.iter().enumerate() {
            if k == 0 {
                return Err(GridError::ZeroDimension { component });
            }
        }
        Ok(Self { dims })
    }

    /// A single copy of [0,1].
    pub fn unit_interval() -> Self {
        Self { dims: vec![1] }
    }

    pub fn components(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_components(&self) -> usize {
        self.dims.len()
    }

    /// Distance between points of different components: 1 + max_i sqrt(k_i).
    /// Strictly larger than any within-component diameter.
    pub fn far_distance(&self) -> f64 {
        1.0 + self
            .dims
            .iter()
            .map(|&k| (k as f64).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn contains(&self, p: &Point) -> Result<(), GridError> {
        let count = self.dims.len();
        if p.component >= count {
            return Err(GridError::UnknownComponent {
                component: p.component,
                count,
            });
        }
        let k = self.dims[p.component];
        if p.coords.len() != k {
            return Err(GridError::WrongDimension {
                component: p.component,
                got: p.coords.len(),
                expected: k,
            });
        }
        for &x in &p.coords {
            if !(0.0..=1.0).contains(&x) || !x.is_finite() {
                return Err(GridError::OutsideUnitBox { value: x });
            }
        }
        Ok(())
    }

    /// Euclidean within a component, far-distance across components.
    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        if x.component != y.component {
            return self.far_distance();
        }
        x.coords
            .iter()
            .zip(&y.coords)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// delta-mesh over a product space: `per_axis` cells per axis, cell ids
/// component-major then row-major over the multi-index.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshPartition {
    space: ProductSpace,
    per_axis: usize,
    offsets: Vec<usize>,
    n_cells: usize,
}

impl MeshPartition {
    pub fn space(&self) -> &ProductSpace {
        &self.space
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Mesh width 1/per_axis.
    pub fn delta(&self) -> f64 {
        1.0 / self.per_axis as f64
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn component_of(&self, cell: usize) -> usize {
        match self.offsets.binary_search(&cell) {
            Ok(c) => c,
            Err(c) => c - 1,
        }
    }

    pub fn multi_index(&self, cell: usize) -> (usize, Vec<usize>) {
        let component = self.component_of(cell);
        let mut rem = cell - self.offsets[component];
        let k = self.space.dims[component];
        let mut idx = vec![0usize; k];
        for slot in idx.iter_mut() {
            *slot = rem % self.per_axis;
            rem /= self.per_axis;
        }
        (component, idx)
    }

    pub fn cell_id(&self, component: usize, idx: &[usize]) -> usize {
        let mut rem = 0usize;
        for &i in idx.iter().rev() {
            rem = rem * self.per_axis + i;
        }
        self.offsets[component] + rem
    }

    /// Lower-left corner of the cell; lies inside the (half-open) cell.
    pub fn anchor(&self, cell: usize) -> Point {
        let (component, idx) = self.multi_index(cell);
        let m = self.per_axis as f64;
        Point {
            component,
            coords: idx.iter().map(|&i| i as f64 / m).collect(),
        }
    }

    /// Lebesgue volume delta^k of the cell.
    pub fn volume(&self, cell: usize) -> f64 {
        let component = self.component_of(cell);
        self.delta().powi(self.space.dims[component] as i32)
    }

    /// Cell diameter delta * sqrt(k).
    pub fn diameter(&self, cell: usize) -> f64 {
        let component = self.component_of(cell);
        self.delta() * (self.space.dims[component] as f64).sqrt()
    }

    /// The unique cell containing `x`: cells are half-open with anchors on the
    /// low side, closed on the top face of the space. Boundary points resolve
    /// to the cell whose anchor is <= x coordinatewise.
    pub fn cell_of(&self, x: &Point) -> Result<usize, GridError> {
        self.space.contains(x)?;
        let m = self.per_axis;
        let mf = m as f64;
        let mut idx = Vec::with_capacity(x.coords.len());
        for &c in &x.coords {
            let mut i = (c * mf).floor() as isize;
            if i < 0 {
                i = 0;
            }
            let mut i = (i as usize).min(m - 1);
            // align with exact anchor arithmetic: anchor(i) <= c < anchor(i+1)
            if i + 1 < m && (i + 1) as f64 / mf <= c {
                i += 1;
            }
            if i as f64 / mf > c {
                i -= 1;
            }
            idx.push(i);
        }
        Ok(self.cell_id(x.component, &idx))
    }

    /// Midpoint quadrature nodes and weights over one cell: `order` panels per
    /// axis; weights sum to the cell volume.
    pub fn quad_points(&self, cell: usize, order: usize) -> Vec<(Point, f64)> {
        let (component, idx) = self.multi_index(cell);
        let k = self.space.dims[component];
        let delta = self.delta();
        let step = delta / order as f64;
        let weight = step.powi(k as i32);
        let total = order.pow(k as u32);
        let mut out = Vec::with_capacity(total);
        for t in 0..total {
            let mut rem = t;
            let mut coords = Vec::with_capacity(k);
            for &axis_idx in idx.iter() {
                let panel = rem % order;
                rem /= order;
                let base = axis_idx as f64 * delta;
                coords.push(base + (panel as f64 + 0.5) * step);
            }
            out.push((Point { component, coords }, weight));
        }
        out
    }

    /// All cell ids of one component.
    pub fn component_cells(&self, component: usize) -> std::ops::Range<usize> {
        let lo = self.offsets[component];
        let hi = if component + 1 < self.offsets.len() {
            self.offsets[component + 1]
        } else {
            self.n_cells
        };
        lo..hi
    }

    pub fn labels(&self) -> Vec<StateLabel> {
        (0..self.n_cells)
            .map(|cell| {
                let (component, index) = self.multi_index(cell);
                let anchor = self.anchor(cell).coords;
                StateLabel {
                    component,
                    index,
                    anchor,
                }
            })
            .collect()
    }
}

/// Cut each component into `per_axis` cells per axis.
pub fn build_partition(space: &ProductSpace, per_axis: usize) -> Result<MeshPartition, GridError> {
    if per_axis == 0 {
        return Err(GridError::ZeroPerAxis);
    }
    let mut offsets = Vec::with_capacity(space.dims.len());
    let mut total = 0usize;
    for &k in &space.dims {
        offsets.push(total);
        total += per_axis.pow(k as u32);
    }
    Ok(MeshPartition {
        space: space.clone(),
        per_axis,
        offsets,
        n_cells: total,
    })
}

/// Convenience alias matching the partition method.
pub fn cell_of(partition: &MeshPartition, x: &Point) -> Result<usize, GridError> {
    partition.cell_of(x)
}

type PairFn = dyn Fn(&Point, &Point) -> f64 + Send + Sync;
type PointFn = dyn Fn(&Point) -> f64 + Send + Sync;
type RegionFn = dyn Fn(&Point, &Point) -> bool + Send + Sync;

/// Transition density `f(x, y)` and stationary density `k(x)` with respect to
/// Lebesgue measure on the product space, plus the region where both are
/// jointly continuous and bounded away from zero.
#[derive(Clone)]
pub struct DensityKernel {
    space: ProductSpace,
    name: String,
    reversible: bool,
    transition: Arc<PairFn>,
    stationary: Arc<PointFn>,
    region: Arc<RegionFn>,
}

impl std::fmt::Debug for DensityKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DensityKernel")
            .field("name", &self.name)
            .field("reversible", &self.reversible)
            .field("components", &self.space.components())
            .finish()
    }
}

impl DensityKernel {
    pub fn from_fns(
        space: ProductSpace,
        name: impl Into<String>,
        reversible: bool,
        transition: impl Fn(&Point, &Point) -> f64 + Send + Sync + 'static,
        stationary: impl Fn(&Point) -> f64 + Send + Sync + 'static,
        region: impl Fn(&Point, &Point) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            space,
            name: name.into(),
            reversible,
            transition: Arc::new(transition),
            stationary: Arc::new(stationary),
            region: Arc::new(region),
        }
    }

    /// The i.i.d. kernel on [0,1]: f(x, y) = 1, k(x) = 1.
    pub fn uniform_unit() -> Self {
        Self::uniform_on(ProductSpace::unit_interval())
    }

    /// The i.i.d. kernel with the uniform stationary law on any product
    /// space: densities are the reciprocal of the total volume.
    pub fn uniform_on(space: ProductSpace) -> Self {
        let density = 1.0 / space.n_components() as f64;
        Self::from_fns(
            space,
            "uniform",
            true,
            move |_, _| density,
            move |_| density,
            |_, _| true,
        )
    }

    /// Reversible kernel on [0,1] with flow density 4(1+xy)/5:
    /// k(x) = (4+2x)/5, f(x,y) = (1+xy)/(1+x/2).
    pub fn affine_xy() -> Self {
        Self::from_fns(
            ProductSpace::unit_interval(),
            "affine-xy",
            true,
            |x, y| {
                let (a, b) = (x.coords[0], y.coords[0]);
                (1.0 + a * b) / (1.0 + a / 2.0)
            },
            |x| (4.0 + 2.0 * x.coords[0]) / 5.0,
            |_, _| true,
        )
    }

    pub fn space(&self) -> &ProductSpace {
        &self.space
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn transition_density(&self, x: &Point, y: &Point) -> f64 {
        (self.transition)(x, y)
    }

    pub fn stationary_density(&self, x: &Point) -> f64 {
        (self.stationary)(x)
    }

    pub fn in_continuity_region(&self, x: &Point, y: &Point) -> bool {
        (self.region)(x, y)
    }
}

/// Quadrature spot-checks of a kernel's own contract: rows should integrate
/// to one, and flagged-reversible kernels should balance their flow density.
#[derive(Debug, Clone, Copy)]
pub struct KernelDiagnostics {
    /// Worst |integral of f(x, .) - 1| over sampled x.
    pub worst_row_mass_defect: f64,
    /// Worst |k(x)f(x,y) - k(y)f(y,x)| over sampled pairs (zero when the
    /// kernel is not flagged reversible).
    pub worst_balance_residual: f64,
    pub samples: usize,
}

/// Sample points of the space and integrate the transition density over a
/// throwaway mesh to estimate how far the kernel drifts from its contract.
pub fn kernel_diagnostics(
    kernel: &DensityKernel,
    samples: usize,
    seed: u64,
    per_axis: usize,
    quadrature_order: usize,
) -> Result<KernelDiagnostics, GridError> {
    let partition = build_partition(kernel.space(), per_axis)?;
    let mut rng = crate::rng::SplitMix64::new(seed);
    let space = kernel.space();
    let draw = |rng: &mut crate::rng::SplitMix64| {
        let component = rng.next_index(space.n_components());
        let k = space.components()[component];
        Point {
            component,
            coords: (0..k).map(|_| rng.next_f64()).collect(),
        }
    };
    let mut worst_mass = 0.0_f64;
    let mut worst_balance = 0.0_f64;
    for _ in 0..samples {
        let x = draw(&mut rng);
        let mass: f64 = (0..partition.n_cells())
            .map(|j| {
                partition
                    .quad_points(j, quadrature_order)
                    .iter()
                    .map(|(y, w)| kernel.transition_density(&x, y) * w)
                    .sum::<f64>()
            })
            .sum();
        worst_mass = worst_mass.max((mass - 1.0).abs());
        if kernel.is_reversible() {
            let y = draw(&mut rng);
            let fwd = kernel.stationary_density(&x) * kernel.transition_density(&x, &y);
            let bwd = kernel.stationary_density(&y) * kernel.transition_density(&y, &x);
            worst_balance = worst_balance.max((fwd - bwd).abs());
        }
    }
    Ok(KernelDiagnostics {
        worst_row_mass_defect: worst_mass,
        worst_balance_residual: worst_balance,
        samples,
    })
}

/// Which projection a discretized chain holds: the anchor-sampled kernel or
/// its reversibilized cell average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSide {
    AnchorSampled,
    Reversibilized,
}

/// A finite chain obtained by projecting a density kernel onto a mesh.
#[derive(Debug, Clone)]
pub struct DiscretizedChain {
    pub chain: FiniteChain,
    pub partition: MeshPartition,
    pub quadrature_order: usize,
    pub side: KernelSide,
    /// Per-row renormalization factors applied after quadrature.
    pub row_renorm: Vec<f64>,
    /// Renormalization factor applied to the stationary masses.
    pub measure_renorm: f64,
}

fn thread_cap() -> usize {
    std::env::var("HYPERFORM_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Evaluate one value per row, in parallel when worthwhile. Rows are
/// independent and written to distinct slots, so the result does not depend
/// on the schedule.
fn map_rows<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<T> {
    let threads = thread_cap().min(n.max(1));
    if threads <= 1 || n < 64 {
        return (0..n).map(f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, piece) in slots.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (off, slot) in piece.iter_mut().enumerate() {
                    *slot = Some(f(t * chunk + off));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("row computed"))
        .collect()
}

/// Integrate the stationary density over every cell; returns the normalized
/// masses and the renormalization factor applied.
pub fn discretize_measure(
    kernel: &DensityKernel,
    partition: &MeshPartition,
    quadrature_order: usize,
) -> Result<(Vec<f64>, f64), GridError> {
    let n = partition.n_cells();
    let raw: Vec<f64> = (0..n)
        .map(|cell| {
            partition
                .quad_points(cell, quadrature_order)
                .iter()
                .map(|(p, w)| kernel.stationary_density(p) * w)
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 || total.is_nan() {
        return Err(GridError::ZeroRow { row: 0 });
    }
    let factor = 1.0 / total;
    if (factor - 1.0).abs() > RENORM_TOL {
        return Err(GridError::MassLeak {
            row: 0,
            factor,
            tol: RENORM_TOL,
        });
    }
    Ok((raw.iter().map(|x| x * factor).collect(), factor))
}

fn anchor_row(
    kernel: &DensityKernel,
    partition: &MeshPartition,
    quadrature_order: usize,
    cell: usize,
) -> Vec<f64> {
    let anchor = partition.anchor(cell);
    (0..partition.n_cells())
        .map(|j| {
            partition
                .quad_points(j, quadrature_order)
                .iter()
                .map(|(y, w)| kernel.transition_density(&anchor, y) * w)
                .sum()
        })
        .collect()
}

/// Project the kernel onto the mesh by sampling the density at cell anchors:
/// row `i` holds the quadrature of `f(anchor_i, .)` over each cell, then is
/// renormalized to sum to one (factors recorded, bounded drift enforced).
pub fn discretize_kernel(
    kernel: &DensityKernel,
    partition: &MeshPartition,
    quadrature_order: usize,
) -> Result<DiscretizedChain, GridError> {
    let n = partition.n_cells();
    let rows = map_rows(n, |i| anchor_row(kernel, partition, quadrature_order, i));
    let mut renorm = Vec::with_capacity(n);
    let mut dense = Vec::with_capacity(n);
    for (i, mut row) in rows.into_iter().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 || sum.is_nan() {
            return Err(GridError::ZeroRow { row: i });
        }
        let factor = 1.0 / sum;
        if (factor - 1.0).abs() > RENORM_TOL {
            return Err(GridError::MassLeak {
                row: i,
                factor,
                tol: RENORM_TOL,
            });
        }
        for p in row.iter_mut() {
            *p *= factor;
        }
        renorm.push(factor);
        dense.push(row);
    }
    let (pi, measure_renorm) = discretize_measure(kernel, partition, quadrature_order)?;
    let chain = FiniteChain::from_dense(&dense, pi)
        .expect("discretization produces well-formed rows")
        .with_labels(partition.labels())
        .expect("label count matches");
    Ok(DiscretizedChain {
        chain,
        partition: partition.clone(),
        quadrature_order,
        side: KernelSide::AnchorSampled,
        row_renorm: renorm,
        measure_renorm,
    })
}

/// Replace each row by the stationary-weighted average of the kernel over its
/// cell. The resulting chain is in exact detailed balance with its own row
/// masses, which also makes those masses exactly stationary. Cells whose
/// stationary mass falls below [`ZERO_MASS_THRESHOLD`] copy the
/// anchor-sampled row instead.
pub fn reversibilize(
    kernel: &DensityKernel,
    partition: &MeshPartition,
    quadrature_order: usize,
) -> Result<DiscretizedChain, GridError> {
    if !kernel.is_reversible() {
        return Err(GridError::NotReversible);
    }
    let n = partition.n_cells();

    // Numerators N_ij = integral over cell i of k(x) * g(x, cell j) dx and
    // cell masses D_i = integral of k over cell i, same quadrature nodes.
    struct RowOut {
        numer: Vec<f64>,
        mass: f64,
    }
    let rows = map_rows(n, |i| {
        let xs = partition.quad_points(i, quadrature_order);
        let mut numer = vec![0.0; n];
        let mut mass = 0.0;
        for (x, wx) in &xs {
            let kx = kernel.stationary_density(x) * wx;
            mass += kx;
            if kx == 0.0 {
                continue;
            }
            for (j, slot) in numer.iter_mut().enumerate() {
                let inner: f64 = partition
                    .quad_points(j, quadrature_order)
                    .iter()
                    .map(|(y, wy)| kernel.transition_density(x, y) * wy)
                    .sum();
                *slot += kx * inner;
            }
        }
        RowOut { numer, mass }
    });

    let mut dense: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut renorm = Vec::with_capacity(n);
    let mut flow_mass = vec![0.0; n];
    for (i, out) in rows.iter().enumerate() {
        if out.mass < ZERO_MASS_THRESHOLD {
            // vanishing stationary mass: fall back to the anchor-sampled row
            let mut row = anchor_row(kernel, partition, quadrature_order, i);
            let sum: f64 = row.iter().sum();
            if sum <= 0.0 || sum.is_nan() {
                return Err(GridError::ZeroRow { row: i });
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
            renorm.push(1.0 / sum);
            flow_mass[i] = out.mass.max(0.0);
            dense.push(row);
        } else {
            let rowsum: f64 = out.numer.iter().sum();
            if rowsum <= 0.0 || rowsum.is_nan() {
                return Err(GridError::ZeroRow { row: i });
            }
            let factor = out.mass / rowsum;
            if (factor - 1.0).abs() > RENORM_TOL {
                return Err(GridError::MassLeak {
                    row: i,
                    factor,
                    tol: RENORM_TOL,
                });
            }
            renorm.push(factor);
            // dividing by the row's own mass keeps pi_i H_ij symmetric in (i, j)
            dense.push(out.numer.iter().map(|x| x / rowsum).collect());
            flow_mass[i] = rowsum;
        }
    }
    let total: f64 = flow_mass.iter().sum();
    let pi: Vec<f64> = flow_mass.iter().map(|x| x / total).collect();
    let chain = FiniteChain::from_dense(&dense, pi)
        .expect("reversibilization produces well-formed rows")
        .with_labels(partition.labels())
        .expect("label count matches")
        .with_reversible_flag(true);
    Ok(DiscretizedChain {
        chain,
        partition: partition.clone(),
        quadrature_order,
        side: KernelSide::Reversibilized,
        row_renorm: renorm,
        measure_renorm: 1.0 / total,
    })
}

/// Per-cell ratio of two mass vectors: a step-function estimate of the
/// density of the target with respect to the reference.
#[derive(Debug, Clone)]
pub struct StepFunction {
    partition: MeshPartition,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: &Point) -> Result<f64, GridError> {
        Ok(self.values[self.partition.cell_of(x)?])
    }

    /// sum_i phi_i q_i for masses q: equals 1 when q is the reference.
    pub fn integral_against(&self, masses: &[f64]) -> f64 {
        self.values.iter().zip(masses).map(|(a, b)| a * b).sum()
    }
}

/// Build the per-cell mass ratio phi_i = p_i / q_i. Requires q_i > 0 wherever
/// p_i > 0; with `normalize` both vectors are scaled to unit total first,
/// otherwise they must already be distributions.
pub fn histogram_density(
    target_mass: &[f64],
    reference_mass: &[f64],
    partition: &MeshPartition,
    normalize: bool,
) -> Result<StepFunction, GridError> {
    let n = partition.n_cells();
    if target_mass.len() != n {
        return Err(GridError::MassDimension {
            got: target_mass.len(),
            expected: n,
        });
    }
    if reference_mass.len() != n {
        return Err(GridError::MassDimension {
            got: reference_mass.len(),
            expected: n,
        });
    }
    let (pt, qt): (f64, f64) = (target_mass.iter().sum(), reference_mass.iter().sum());
    if !normalize {
        for (label, total) in [("target", pt), ("reference", qt)] {
            if (total - 1.0).abs() > 1e-9 {
                let _ = label;
                return Err(GridError::Unnormalized { sum: total });
            }
        }
    }
    let mut values = Vec::with_capacity(n);
    for cell in 0..n {
        let p = target_mass[cell] / pt;
        let q = reference_mass[cell] / qt;
        if q <= 0.0 {
            if p > 0.0 {
                return Err(GridError::DominationFailure { cell, target: p });
            }
            values.push(0.0);
        } else {
            values.push(p / q);
        }
    }
    Ok(StepFunction {
        partition: partition.clone(),
        values,
    })
}

/// Deterministic midpoint quadrature of the continuous Dirichlet form
/// (1/2) double-integral of [f(x)-f(y)]^2 f(x,y) k(x) over X x X, with
/// `panels_per_axis` midpoint panels on every axis of every component.
pub fn reference_dirichlet(
    kernel: &DensityKernel,
    field: &dyn Fn(&Point) -> f64,
    panels_per_axis: usize,
) -> f64 {
    let space = kernel.space();
    let mut nodes: Vec<(Point, f64)> = Vec::new();
    for (component, &k) in space.components().iter().enumerate() {
        let step = 1.0 / panels_per_axis as f64;
        let weight = step.powi(k as i32);
        let total = panels_per_axis.pow(k as u32);
        for t in 0..total {
            let mut rem = t;
            let mut coords = Vec::with_capacity(k);
            for _ in 0..k {
                let panel = rem % panels_per_axis;
                rem /= panels_per_axis;
                coords.push((panel as f64 + 0.5) * step);
            }
            nodes.push((Point { component, coords }, weight));
        }
    }
    let values: Vec<f64> = nodes.iter().map(|(p, _)| field(p)).collect();
    let mut acc = 0.0;
    for (i, (x, wx)) in nodes.iter().enumerate() {
        let kx = kernel.stationary_density(x);
        if kx == 0.0 {
            continue;
        }
        for (j, (y, wy)) in nodes.iter().enumerate() {
            let d = values[i] - values[j];
            if d == 0.0 {
                continue;
            }
            acc += d * d * kernel.transition_density(x, y) * kx * wx * wy;
        }
    }
    0.5 * acc
}
