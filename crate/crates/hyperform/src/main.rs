//! Batch front-end: every pipeline as a subcommand with file I/O.
//!
//! Exit codes: 0 on success, 1 on validation failure (report on stderr),
//! 2 on structural or I/O errors.

use clap::{Parser, Subcommand};
use hyperform::benchmarks::{self, BarbellFlavor};
use hyperform::chain::{validate_chain, ScalarField, Tolerances};
use hyperform::convergence::{
    self, density_convergence_study, dirichlet_convergence_study, reversibilization_drift_study,
    StudyTarget,
};
use hyperform::grid::{build_partition, discretize_kernel, reversibilize, DensityKernel, Point};
use hyperform::io::{
    read_json, spectral_csv, study_csv, write_json, ChainFile, ConfigFile, FamilyFile, FieldFile,
    KernelSpecFile, SpectralCsvRow,
};
use hyperform::paths::{congestion_constant_general, congestion_ratio_finite, AssumptionContext};
use hyperform::spectral::{comparison_bound, spectral_gap};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "hyperform",
    about = "Dirichlet forms, kernel discretization, and comparison bounds for reversible Markov chains",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every chain invariant and report violations.
    Validate {
        #[arg(long)]
        input: PathBuf,
        /// Override both tolerances (structural and statistical).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Dirichlet form of a field on a chain.
    Dirichlet {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        field: PathBuf,
    },
    /// Project a named kernel onto a mesh; writes the anchor-sampled and
    /// reversibilized chains as g.json and h.json.
    Discretize {
        /// Kernel/mesh spec file {"kernel", "per_axis", "quadrature_order"}.
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Finite congestion ratio of two chain files over a state path family,
    /// plus the induced relaxation-time bound.
    Compare {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Spectral gap and relaxation time of a reversible chain.
    Spectrum {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a barbell instance and run its full pipeline.
    Barbell {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        flavor: BarbellFlavor,
        /// Mesh cells per axis (continuous flavors).
        #[arg(long, default_value_t = 16)]
        per_axis: usize,
        #[arg(long, default_value_t = 3)]
        quad_order: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Directory for instance files and results.
        #[arg(long)]
        output: PathBuf,
    },
    /// Mesh-refinement study of a named kernel; writes a CSV error curve.
    Converge {
        #[arg(long)]
        kernel: PathBuf,
        /// Which curve: dirichlet, drift, density, or feller.
        #[arg(long)]
        study: String,
        /// Mesh widths; repeatable.
        #[arg(long = "per-axis", required = true)]
        per_axis: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        probes: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Failure that should exit with code 1: the input parsed but violates the
/// invariants being checked.
#[derive(Debug)]
struct ValidationFailure(String);

fn structural<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn emit(path: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(structural),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn run() -> Result<Result<(), ValidationFailure>, String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { input, tol } => {
            let chain = read_json::<ChainFile>(&input)
                .map_err(structural)?
                .into_chain()
                .map_err(structural)?;
            let tolerances = match tol {
                Some(t) => Tolerances {
                    structural: t,
                    statistical: t,
                },
                None => Tolerances::default(),
            };
            let report = validate_chain(&chain, tolerances);
            if report.is_clean() {
                println!("ok");
                Ok(Ok(()))
            } else {
                Ok(Err(ValidationFailure(report.to_string())))
            }
        }
        Command::Dirichlet { input, field } => {
            let chain = read_json::<ChainFile>(&input)
                .map_err(structural)?
                .into_chain()
                .map_err(structural)?;
            let field = read_json::<FieldFile>(&field).map_err(structural)?;
            let value = hyperform::dirichlet_form(&chain, &ScalarField::new(field.values))
                .map_err(structural)?;
            println!("{value}");
            Ok(Ok(()))
        }
        Command::Discretize { kernel, output } => {
            let spec: KernelSpecFile = read_json(&kernel).map_err(structural)?;
            let k = spec.resolve().map_err(structural)?;
            let mesh = build_partition(k.space(), spec.per_axis).map_err(structural)?;
            let g = discretize_kernel(&k, &mesh, spec.quadrature_order).map_err(structural)?;
            let h = reversibilize(&k, &mesh, spec.quadrature_order).map_err(structural)?;
            std::fs::create_dir_all(&output).map_err(structural)?;
            write_json(&output.join("g.json"), &ChainFile::from_chain(&g.chain))
                .map_err(structural)?;
            write_json(&output.join("h.json"), &ChainFile::from_chain(&h.chain))
                .map_err(structural)?;
            let worst_renorm = g
                .row_renorm
                .iter()
                .chain(&h.row_renorm)
                .map(|f| (f - 1.0).abs())
                .fold(0.0_f64, f64::max);
            println!(
                "{} cells, quadrature order {}, worst row renormalization drift {:.3e}",
                mesh.n_cells(),
                spec.quadrature_order,
                worst_renorm
            );
            Ok(Ok(()))
        }
        Command::Compare {
            base,
            target,
            family,
            output,
        } => {
            let base = read_json::<ChainFile>(&base)
                .map_err(structural)?
                .into_chain()
                .map_err(structural)?;
            let target = read_json::<ChainFile>(&target)
                .map_err(structural)?
                .into_chain()
                .map_err(structural)?;
            let family = read_json::<FamilyFile>(&family)
                .map_err(structural)?
                .into_state_family()
                .map_err(structural)?;
            let congestion = match congestion_ratio_finite(&base, &target, &family) {
                Ok(c) => c,
                Err(e) => return Ok(Err(ValidationFailure(e.to_string()))),
            };
            let bound = match comparison_bound(congestion.b, &base, &target) {
                Ok(b) => b,
                Err(e) => return Ok(Err(ValidationFailure(e.to_string()))),
            };
            let mut out = String::from("b,c_pi,t_rel_bound,max_paths_per_edge,argmax_edges\n");
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                congestion.b,
                bound.c_pi,
                bound.t_rel_bound,
                congestion.max_paths_per_edge,
                congestion
                    .argmax_edges
                    .iter()
                    .map(|(i, j)| format!("{i}-{j}"))
                    .collect::<Vec<_>>()
                    .join(";")
            ));
            emit(&output, &out)?;
            eprintln!("note: the stationary correction c_pi is a crude standard device layered on the Dirichlet comparison");
            Ok(Ok(()))
        }
        Command::Spectrum { input, output } => {
            let chain = read_json::<ChainFile>(&input)
                .map_err(structural)?
                .into_chain()
                .map_err(structural)?;
            let spec = match spectral_gap(&chain) {
                Ok(s) => s,
                Err(e) => return Ok(Err(ValidationFailure(e.to_string()))),
            };
            let csv = spectral_csv(&[SpectralCsvRow {
                instance: input.display().to_string(),
                n_states: chain.n_states(),
                gap: spec.gap,
                t_rel: spec.relaxation_time,
                method: spec.method.to_string(),
                residual: spec.residual,
            }]);
            emit(&output, &csv)?;
            Ok(Ok(()))
        }
        Command::Barbell {
            n,
            flavor,
            per_axis,
            quad_order,
            seed,
            output,
        } => run_barbell(n, flavor, per_axis, quad_order, seed, &output),
        Command::Converge {
            kernel,
            study,
            per_axis,
            seed,
            probes,
            output,
        } => {
            let spec: KernelSpecFile = read_json(&kernel).map_err(structural)?;
            let k = spec.resolve().map_err(structural)?;
            let table = match study.as_str() {
                "dirichlet" => dirichlet_convergence_study(
                    &k,
                    &|p: &Point| p.coords[0],
                    "x",
                    &per_axis,
                    spec.quadrature_order,
                )
                .map_err(structural)?,
                "drift" => reversibilization_drift_study(&k, &per_axis, spec.quadrature_order)
                    .map_err(structural)?,
                "density" => density_convergence_study(
                    StudyTarget::Measure(&k),
                    &DensityKernel::uniform_unit(),
                    &per_axis,
                    probes,
                    seed,
                    spec.quadrature_order,
                )
                .map_err(structural)?,
                "feller" => {
                    let mut rows = Vec::new();
                    for &m in &per_axis {
                        let mesh = build_partition(k.space(), m).map_err(structural)?;
                        let modulus = convergence::strong_feller_probe(
                            &k,
                            &mesh,
                            probes,
                            seed,
                            spec.quadrature_order,
                        )
                        .map_err(structural)?;
                        rows.push(convergence::StudyRow {
                            per_axis: m,
                            delta: 1.0 / m as f64,
                            value: modulus,
                            reference: 0.0,
                            abs_error: modulus,
                        });
                    }
                    convergence::StudyTable {
                        rows,
                        kernel_id: k.name().to_string(),
                        field_id: "feller-modulus".into(),
                        quadrature_order: spec.quadrature_order,
                        seed,
                    }
                }
                other => return Err(format!("unknown study '{other}'")),
            };
            emit(&output, &study_csv(&table))?;
            Ok(Ok(()))
        }
    }
}

fn run_barbell(
    n: usize,
    flavor: BarbellFlavor,
    per_axis: usize,
    quad_order: usize,
    seed: u64,
    output: &Path,
) -> Result<Result<(), ValidationFailure>, String> {
    std::fs::create_dir_all(output).map_err(structural)?;
    match flavor {
        BarbellFlavor::Discrete => {
            let inst = benchmarks::barbell_discrete(n).map_err(structural)?;
            let chain = inst.chain.as_ref().expect("discrete flavor");
            let family = inst.state_family.as_ref().expect("discrete flavor");
            write_json(&output.join("chain.json"), &ChainFile::from_chain(chain))
                .map_err(structural)?;
            write_json(
                &output.join("family.json"),
                &FamilyFile::from_state_family(family),
            )
            .map_err(structural)?;
            let iid = benchmarks::iid_chain(chain.stationary()).map_err(structural)?;
            let congestion = congestion_ratio_finite(chain, &iid, family).map_err(structural)?;
            let spec = spectral_gap(chain).map_err(structural)?;
            let bound = comparison_bound(congestion.b, chain, &iid).map_err(structural)?;
            let mut csv =
                String::from("n,flavor,n_states,gap,t_rel,b,c_pi,t_rel_bound,max_paths_per_edge\n");
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                n,
                flavor,
                chain.n_states(),
                spec.gap,
                spec.relaxation_time,
                congestion.b,
                bound.c_pi,
                bound.t_rel_bound,
                congestion.max_paths_per_edge
            ));
            std::fs::write(output.join("results.csv"), csv).map_err(structural)?;
            if spec.relaxation_time > bound.t_rel_bound + 1e-8 {
                return Ok(Err(ValidationFailure(format!(
                    "relaxation time {} exceeds its bound {}",
                    spec.relaxation_time, bound.t_rel_bound
                ))));
            }
            println!(
                "n = {n}: t_rel = {:.6} <= bound {:.6} (B = {:.6})",
                spec.relaxation_time, bound.t_rel_bound, congestion.b
            );
        }
        BarbellFlavor::Continuous => {
            let inst = benchmarks::barbell_continuous(n).map_err(structural)?;
            let kernel = inst.kernel.as_ref().expect("continuous flavor");
            let mesh = build_partition(kernel.space(), per_axis).map_err(structural)?;
            let g = discretize_kernel(kernel, &mesh, quad_order).map_err(structural)?;
            let h = reversibilize(kernel, &mesh, quad_order).map_err(structural)?;
            write_json(&output.join("g.json"), &ChainFile::from_chain(&g.chain))
                .map_err(structural)?;
            write_json(&output.join("h.json"), &ChainFile::from_chain(&h.chain))
                .map_err(structural)?;
            let table = reversibilization_drift_study(kernel, &[per_axis], quad_order)
                .map_err(structural)?;
            std::fs::write(output.join("drift.csv"), study_csv(&table)).map_err(structural)?;
            println!(
                "{} cells; drift {:.3e}",
                mesh.n_cells(),
                table.rows[0].value
            );
        }
        BarbellFlavor::Split => {
            let inst = benchmarks::barbell_split_with_grid(n, per_axis).map_err(structural)?;
            let kernel = inst.kernel.as_ref().expect("split flavor");
            let family = inst.family.as_ref().expect("split flavor");
            let iid = benchmarks::iid_kernel(kernel);
            write_json(
                &output.join("config.json"),
                &ConfigFile::from_config(&inst.config),
            )
            .map_err(structural)?;
            let ctx = AssumptionContext::new(kernel, Some(&iid), seed);
            let report = hyperform::validate_assumptions(family, &inst.config, &ctx);
            std::fs::write(output.join("assumptions.txt"), format!("{report}\n"))
                .map_err(structural)?;
            if !report.all_pass() {
                return Ok(Err(ValidationFailure(report.to_string())));
            }
            let congestion = congestion_constant_general(kernel, &iid, family, &inst.config, seed)
                .map_err(structural)?;
            let mut csv = String::from("n,flavor,grid,b,max_paths_per_edge,n_paths,n_edges_used\n");
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                n,
                flavor,
                per_axis,
                congestion.b,
                congestion.max_paths_per_edge,
                congestion.n_paths,
                congestion.n_edges_used
            ));
            std::fs::write(output.join("results.csv"), csv).map_err(structural)?;
            println!(
                "n = {n}: B = {:.6} over {} paths, worst edge reuse {}",
                congestion.b, congestion.n_paths, congestion.max_paths_per_edge
            );
        }
    }
    Ok(Ok(()))
}

fn main() -> ExitCode {
    match run() {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(ValidationFailure(report))) => {
            eprintln!("{report}");
            ExitCode::from(1)
        }
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
