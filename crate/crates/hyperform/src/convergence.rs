//! Mesh-refinement studies: run a grid operation across a list of mesh
//! widths and record the measured value, the reference it should approach,
//! and the absolute error per row. Limit statements about vanishing mesh
//! width become measured error curves; no convergence rate is claimed, the
//! observed errors are simply reported.

use crate::chain::{total_variation, FiniteChain};
use crate::grid::{
    build_partition, discretize_kernel, discretize_measure, histogram_density, reference_dirichlet,
    reversibilize, DensityKernel, GridError, MeshPartition, Point,
};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub per_axis: usize,
    pub delta: f64,
    pub value: f64,
    pub reference: f64,
    pub abs_error: f64,
}

/// Error curve across mesh widths, sorted by mesh width descending (coarse
/// first), with the inputs that produced it.
#[derive(Debug, Clone)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub kernel_id: String,
    pub field_id: String,
    pub quadrature_order: usize,
    pub seed: u64,
}

impl StudyTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.abs_error).collect()
    }
}

/// Refinement should not make things worse: the last error must beat the
/// first, and at most one increase is tolerated, within the relative slack
/// (midpoint-rule error oscillates for some integrands).
pub fn errors_improve(errors: &[f64], rel_slack: f64) -> bool {
    if errors.len() < 2 {
        return true;
    }
    let mut inversions = 0;
    for w in errors.windows(2) {
        if w[1] > w[0] {
            inversions += 1;
            if inversions > 1 || w[1] > w[0] * (1.0 + rel_slack) + 1e-15 {
                return false;
            }
        }
    }
    errors[errors.len() - 1] <= errors[0]
}

fn sorted_meshes(per_axis: &[usize]) -> Vec<usize> {
    let mut m: Vec<usize> = per_axis.to_vec();
    m.sort_unstable();
    m.dedup();
    m
}

fn dense_row(chain: &FiniteChain, i: usize) -> Vec<f64> {
    let mut row = vec![0.0; chain.n_states()];
    for &(j, p) in chain.row(i) {
        row[j] = p;
    }
    row
}

/// Mesh Dirichlet form of the reversibilized projection against the field's
/// anchor values, compared to the continuous form by high-order quadrature.
pub fn dirichlet_convergence_study(
    kernel: &DensityKernel,
    field: &dyn Fn(&Point) -> f64,
    field_id: &str,
    per_axis: &[usize],
    quadrature_order: usize,
) -> Result<StudyTable, GridError> {
    let meshes = sorted_meshes(per_axis);
    let max_mesh = meshes.last().copied().unwrap_or(1);
    // reference resolution doubles the finest study resolution
    let reference = reference_dirichlet(kernel, field, 2 * quadrature_order * max_mesh);
    let mut rows = Vec::with_capacity(meshes.len());
    for &m in &meshes {
        let partition = build_partition(kernel.space(), m)?;
        let h = reversibilize(kernel, &partition, quadrature_order)?;
        let value = mesh_dirichlet_form(&h.chain, &partition, field);
        rows.push(StudyRow {
            per_axis: m,
            delta: partition.delta(),
            value,
            reference,
            abs_error: (value - reference).abs(),
        });
    }
    Ok(StudyTable {
        rows,
        kernel_id: kernel.name().to_string(),
        field_id: field_id.to_string(),
        quadrature_order,
        seed: 0,
    })
}

/// Dirichlet form of a mesh chain with the field sampled at cell anchors.
pub fn mesh_dirichlet_form(
    chain: &FiniteChain,
    partition: &MeshPartition,
    field: &dyn Fn(&Point) -> f64,
) -> f64 {
    let values: Vec<f64> = (0..partition.n_cells())
        .map(|c| field(&partition.anchor(c)))
        .collect();
    let pi = chain.stationary();
    let mut acc = 0.0;
    for i in 0..chain.n_states() {
        if pi[i] == 0.0 {
            continue;
        }
        for &(j, p) in chain.row(i) {
            let d = values[i] - values[j];
            acc += d * d * p * pi[i];
        }
    }
    0.5 * acc
}

/// Worst row-wise total variation between the anchor-sampled and
/// reversibilized projections, per mesh.
pub fn reversibilization_drift_study(
    kernel: &DensityKernel,
    per_axis: &[usize],
    quadrature_order: usize,
) -> Result<StudyTable, GridError> {
    let meshes = sorted_meshes(per_axis);
    let mut rows = Vec::with_capacity(meshes.len());
    for &m in &meshes {
        let partition = build_partition(kernel.space(), m)?;
        let g = discretize_kernel(kernel, &partition, quadrature_order)?;
        let h = reversibilize(kernel, &partition, quadrature_order)?;
        let mut worst = 0.0_f64;
        for i in 0..partition.n_cells() {
            let tv = total_variation(&dense_row(&g.chain, i), &dense_row(&h.chain, i))
                .expect("same mesh");
            worst = worst.max(tv);
        }
        rows.push(StudyRow {
            per_axis: m,
            delta: partition.delta(),
            value: worst,
            reference: 0.0,
            abs_error: worst,
        });
    }
    Ok(StudyTable {
        rows,
        kernel_id: kernel.name().to_string(),
        field_id: "max-row-tv".to_string(),
        quadrature_order,
        seed: 0,
    })
}

/// What a density study measures.
pub enum StudyTarget<'a> {
    /// Step-function estimate of the stationary density of `target` with
    /// respect to the reference's stationary measure, probed at sampled
    /// points.
    Measure(&'a DensityKernel),
    /// Transition-density ratio of the reversibilized projection,
    /// `H_ij / vol(cell j)`, probed at sampled anchor pairs inside the
    /// continuity region.
    Kernel(&'a DensityKernel),
}

/// Per mesh, the worst probe-point deviation between the mesh density
/// estimate and the true density.
pub fn density_convergence_study(
    target: StudyTarget<'_>,
    reference: &DensityKernel,
    per_axis: &[usize],
    probes: usize,
    seed: u64,
    quadrature_order: usize,
) -> Result<StudyTable, GridError> {
    let meshes = sorted_meshes(per_axis);
    let mut rows = Vec::with_capacity(meshes.len());
    let kernel_id;
    let field_id;
    match target {
        StudyTarget::Measure(t) => {
            kernel_id = t.name().to_string();
            field_id = format!("stationary-density-vs-{}", reference.name());
            for &m in &meshes {
                let partition = build_partition(t.space(), m)?;
                let (p, _) = discretize_measure(t, &partition, quadrature_order)?;
                let (q, _) = discretize_measure(reference, &partition, quadrature_order)?;
                let phi = histogram_density(&p, &q, &partition, false)?;
                let mut rng = SplitMix64::new(seed ^ m as u64);
                let mut worst = 0.0_f64;
                for _ in 0..probes {
                    let comp = rng.next_index(t.space().n_components());
                    let k = t.space().components()[comp];
                    let x = Point::new(comp, (0..k).map(|_| rng.next_f64()).collect());
                    let truth =
                        t.stationary_density(&x) / reference.stationary_density(&x).max(1e-300);
                    worst = worst.max((phi.eval(&x)? - truth).abs());
                }
                rows.push(StudyRow {
                    per_axis: m,
                    delta: partition.delta(),
                    value: worst,
                    reference: 0.0,
                    abs_error: worst,
                });
            }
        }
        StudyTarget::Kernel(t) => {
            kernel_id = t.name().to_string();
            field_id = "transition-density-ratio".to_string();
            for &m in &meshes {
                let partition = build_partition(t.space(), m)?;
                let h = reversibilize(t, &partition, quadrature_order)?;
                let mut rng = SplitMix64::new(seed ^ m as u64);
                let mut worst = 0.0_f64;
                let cells = partition.n_cells();
                for _ in 0..probes {
                    let i = rng.next_index(cells);
                    let j = rng.next_index(cells);
                    let (ai, aj) = (partition.anchor(i), partition.anchor(j));
                    if !t.in_continuity_region(&ai, &aj) {
                        continue;
                    }
                    let estimate = h.chain.prob(i, j) / partition.volume(j);
                    worst = worst.max((estimate - t.transition_density(&ai, &aj)).abs());
                }
                rows.push(StudyRow {
                    per_axis: m,
                    delta: partition.delta(),
                    value: worst,
                    reference: 0.0,
                    abs_error: worst,
                });
            }
        }
    }
    Ok(StudyTable {
        rows,
        kernel_id,
        field_id,
        quadrature_order,
        seed,
    })
}

/// Empirical continuity modulus of the projected kernel: worst total
/// variation between the discretized rows of a sampled point and of its cell
/// anchor. Small values support, never prove, that anchor sampling is
/// faithful at this mesh.
pub fn strong_feller_probe(
    kernel: &DensityKernel,
    partition: &MeshPartition,
    pair_count: usize,
    seed: u64,
    quadrature_order: usize,
) -> Result<f64, GridError> {
    let mut rng = SplitMix64::new(seed);
    let space = kernel.space();
    let mut worst = 0.0_f64;
    let row_for = |x: &Point| -> Vec<f64> {
        let mut row: Vec<f64> = (0..partition.n_cells())
            .map(|j| {
                partition
                    .quad_points(j, quadrature_order)
                    .iter()
                    .map(|(y, w)| kernel.transition_density(x, y) * w)
                    .sum()
            })
            .collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        row
    };
    for _ in 0..pair_count {
        let comp = rng.next_index(space.n_components());
        let k = space.components()[comp];
        let x = Point::new(comp, (0..k).map(|_| rng.next_f64()).collect());
        let anchor = partition.anchor(partition.cell_of(&x)?);
        let tv = total_variation(&row_for(&x), &row_for(&anchor)).expect("same mesh");
        worst = worst.max(tv);
    }
    Ok(worst)
}
