//! File formats: JSON for chains, fields, path families, assumption configs,
//! and kernel/mesh specs; CSV for study tables and spectral results. Floats
//! are written in shortest round-trip form, so writing and re-reading a file
//! reproduces it bit for bit.

use crate::benchmarks::{self, BarbellFlavor};
use crate::chain::{ChainError, FiniteChain, StateLabel};
use crate::convergence::StudyTable;
use crate::grid::{DensityKernel, Point};
use crate::paths::{
    AssumptionConfig, FunctionSpec, Path, PathFamily, PathsError, RegionSpec, StatePathFamily,
};
use serde::{Deserialize, Serialize};
use std::path::Path as FsPath;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Paths(#[from] PathsError),
    #[error("unknown function spec '{0}' (expected constant:<c>, identity, or affine:<a>,<b>)")]
    BadFunction(String),
    #[error("unknown region spec '{0}' (expected all, positive-flow, or max-length:<x>)")]
    BadRegion(String),
    #[error("unknown kernel '{0}' (expected uniform, affine-xy, or barbell:<n>:<flavor>)")]
    BadKernel(String),
    #[error("family mixes state and point endpoints")]
    MixedFamily,
    #[error("{0}")]
    Invalid(String),
}

/// Chain interchange file: sparse triplets, stationary vector, optional
/// labels and initial distribution. Indices are 0-based.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainFile {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub pi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<StateLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reversible: Option<bool>,
}

impl ChainFile {
    pub fn from_chain(chain: &FiniteChain) -> Self {
        Self {
            n: chain.n_states(),
            triplets: chain.triplets().collect(),
            pi: chain.stationary().to_vec(),
            labels: chain.labels().map(|l| l.to_vec()),
            initial: chain.initial().map(|v| v.to_vec()),
            reversible: Some(chain.is_flagged_reversible()),
        }
    }

    pub fn into_chain(self) -> Result<FiniteChain, ChainError> {
        let mut chain = FiniteChain::from_triplets(self.n, &self.triplets, self.pi)?
            .with_reversible_flag(self.reversible.unwrap_or(false));
        if let Some(labels) = self.labels {
            chain = chain.with_labels(labels)?;
        }
        if let Some(initial) = self.initial {
            chain = chain.with_initial(initial)?;
        }
        Ok(chain)
    }
}

/// Scalar field file: one value per state.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldFile {
    pub values: Vec<f64>,
}

/// A family endpoint: either a state id of a finite chain or a point of a
/// product space.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum NodeRef {
    State(usize),
    Point { component: usize, coords: Vec<f64> },
}

impl NodeRef {
    fn as_state(&self) -> Option<usize> {
        match self {
            NodeRef::State(s) => Some(*s),
            NodeRef::Point { .. } => None,
        }
    }

    fn as_point(&self) -> Option<Point> {
        match self {
            NodeRef::State(_) => None,
            NodeRef::Point { component, coords } => Some(Point::new(*component, coords.clone())),
        }
    }

    fn from_point(p: &Point) -> Self {
        NodeRef::Point {
            component: p.component,
            coords: p.coords.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FamilyEntry {
    pub from: NodeRef,
    pub to: NodeRef,
    #[serde(default)]
    pub via: Vec<NodeRef>,
}

/// Path family file: one entry per ordered pair, interior nodes in `via`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FamilyFile {
    pub pairs: Vec<FamilyEntry>,
}

impl FamilyFile {
    pub fn from_state_family(family: &StatePathFamily) -> Self {
        let pairs = family
            .iter()
            .map(|(&(from, to), states)| {
                let via = if states.len() > 2 {
                    states[1..states.len() - 1]
                        .iter()
                        .map(|&s| NodeRef::State(s))
                        .collect()
                } else {
                    Vec::new()
                };
                FamilyEntry {
                    from: NodeRef::State(from),
                    to: NodeRef::State(to),
                    via,
                }
            })
            .collect();
        Self { pairs }
    }

    pub fn from_point_family(family: &PathFamily) -> Self {
        let mut pairs = Vec::with_capacity(family.len());
        family.for_each(|path| {
            let pts = path.points();
            let via = if pts.len() > 2 {
                pts[1..pts.len() - 1]
                    .iter()
                    .map(NodeRef::from_point)
                    .collect()
            } else {
                Vec::new()
            };
            pairs.push(FamilyEntry {
                from: NodeRef::from_point(&pts[0]),
                to: NodeRef::from_point(pts.last().expect("nonempty")),
                via,
            });
        });
        Self { pairs }
    }

    pub fn into_state_family(self) -> Result<StatePathFamily, IoError> {
        let mut family = StatePathFamily::new();
        for entry in self.pairs {
            let from = entry.from.as_state().ok_or(IoError::MixedFamily)?;
            let to = entry.to.as_state().ok_or(IoError::MixedFamily)?;
            let mut states = vec![from];
            for v in &entry.via {
                states.push(v.as_state().ok_or(IoError::MixedFamily)?);
            }
            if to != from || !entry.via.is_empty() {
                states.push(to);
            }
            states.dedup();
            family.insert(states)?;
        }
        Ok(family)
    }

    pub fn into_point_family(self) -> Result<PathFamily, IoError> {
        let mut paths = Vec::with_capacity(self.pairs.len());
        for entry in self.pairs {
            let from = entry.from.as_point().ok_or(IoError::MixedFamily)?;
            let to = entry.to.as_point().ok_or(IoError::MixedFamily)?;
            let mut points = vec![from.clone()];
            for v in &entry.via {
                points.push(v.as_point().ok_or(IoError::MixedFamily)?);
            }
            if to != from || !entry.via.is_empty() {
                points.push(to);
            }
            paths.push(Path::new(points)?);
        }
        Ok(PathFamily::from_paths(paths)?)
    }
}

/// Assumption config file with named built-in functions for m and L and
/// named regions for the goodsets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConfigFile {
    pub epsilon: f64,
    pub epsilon0: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "M")]
    pub m_slack: f64,
    #[serde(rename = "K")]
    pub k_cap: f64,
    pub m: String,
    #[serde(rename = "L")]
    pub l: String,
    pub goodset: String,
    pub big_goodset: String,
}

impl ConfigFile {
    pub fn from_config(config: &AssumptionConfig) -> Self {
        Self {
            epsilon: config.epsilon,
            epsilon0: config.epsilon0,
            r: config.length_bound,
            m_slack: config.length_slack,
            k_cap: config.multiplicity_cap,
            m: config.multiplicity.to_string(),
            l: config.short_edge.to_string(),
            goodset: config.goodset.to_string(),
            big_goodset: config.big_goodset.to_string(),
        }
    }

    pub fn into_config(self) -> Result<AssumptionConfig, IoError> {
        let multiplicity =
            FunctionSpec::parse(&self.m).ok_or_else(|| IoError::BadFunction(self.m.clone()))?;
        let short_edge =
            FunctionSpec::parse(&self.l).ok_or_else(|| IoError::BadFunction(self.l.clone()))?;
        let goodset = RegionSpec::parse(&self.goodset)
            .ok_or_else(|| IoError::BadRegion(self.goodset.clone()))?;
        let big_goodset = RegionSpec::parse(&self.big_goodset)
            .ok_or_else(|| IoError::BadRegion(self.big_goodset.clone()))?;
        Ok(AssumptionConfig {
            epsilon: self.epsilon,
            epsilon0: self.epsilon0,
            length_bound: self.r,
            length_slack: self.m_slack,
            multiplicity,
            multiplicity_cap: self.k_cap,
            short_edge,
            goodset,
            big_goodset,
        })
    }
}

/// Kernel and mesh spec: a named built-in kernel plus mesh parameters.
/// Kernel names: `uniform`, `affine-xy`, `barbell:<n>:<flavor>`. The
/// `components` list (one dimension per component) applies to the `uniform`
/// kernel only; the other built-ins fix their own spaces.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelSpecFile {
    pub kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<usize>>,
    pub per_axis: usize,
    #[serde(default = "default_quad_order")]
    pub quadrature_order: usize,
}

fn default_quad_order() -> usize {
    crate::grid::DEFAULT_QUAD_ORDER
}

impl KernelSpecFile {
    pub fn resolve(&self) -> Result<DensityKernel, IoError> {
        match (&self.components, self.kernel.as_str()) {
            (Some(dims), "uniform") => {
                let space = crate::grid::ProductSpace::new(dims.clone())
                    .map_err(|e| IoError::Invalid(e.to_string()))?;
                Ok(DensityKernel::uniform_on(space))
            }
            (Some(_), other) => Err(IoError::Invalid(format!(
                "kernel '{other}' fixes its own space; drop the components field"
            ))),
            (None, _) => resolve_kernel(&self.kernel),
        }
    }
}

/// Resolve a built-in kernel by name.
pub fn resolve_kernel(name: &str) -> Result<DensityKernel, IoError> {
    match name {
        "uniform" => return Ok(DensityKernel::uniform_unit()),
        "affine-xy" => return Ok(DensityKernel::affine_xy()),
        _ => {}
    }
    if let Some(rest) = name.strip_prefix("barbell:") {
        let mut it = rest.split(':');
        let n: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IoError::BadKernel(name.to_string()))?;
        let flavor: BarbellFlavor = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| IoError::BadKernel(name.to_string()))?;
        let instance = match flavor {
            BarbellFlavor::Continuous => benchmarks::barbell_continuous(n),
            BarbellFlavor::Split => benchmarks::barbell_split(n),
            BarbellFlavor::Discrete => {
                return Err(IoError::Invalid(
                    "the discrete flavor has no density kernel; use the barbell subcommand".into(),
                ))
            }
        }
        .map_err(|e| IoError::Invalid(e.to_string()))?;
        return Ok(instance.kernel.expect("continuous flavors carry a kernel"));
    }
    Err(IoError::BadKernel(name.to_string()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &FsPath) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Fixed-header CSV for study tables.
pub fn study_csv(table: &StudyTable) -> String {
    let mut out = String::from("per_axis,delta,value,reference,abs_error\n");
    for row in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.per_axis, row.delta, row.value, row.reference, row.abs_error
        ));
    }
    out
}

/// One spectral result row.
#[derive(Debug, Clone)]
pub struct SpectralCsvRow {
    pub instance: String,
    pub n_states: usize,
    pub gap: f64,
    pub t_rel: f64,
    pub method: String,
    pub residual: f64,
}

pub fn spectral_csv(rows: &[SpectralCsvRow]) -> String {
    let mut out = String::from("instance,n_states,gap,t_rel,method,residual\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.instance, r.n_states, r.gap, r.t_rel, r.method, r.residual
        ));
    }
    out
}
