//! Acceptance suite: one test per criterion, each printing a `[PASS]` /
//! `[FAIL]` line with the measured quantities (run with `--nocapture` to see
//! the lines for passing criteria).

use hyperform::benchmarks::{barbell_discrete, barbell_split_with_grid, iid_chain, iid_kernel};
use hyperform::chain::{dirichlet_form, FiniteChain, ScalarField};
use hyperform::convergence::{
    density_convergence_study, dirichlet_convergence_study, errors_improve,
    reversibilization_drift_study, StudyTarget,
};
use hyperform::grid::{
    build_partition, discretize_measure, histogram_density, reversibilize, DensityKernel, Point,
    ProductSpace,
};
use hyperform::paths::{
    congestion_constant_general, congestion_ratio_finite, validate_assumptions, AssumptionConfig,
    AssumptionContext, AssumptionKind, FunctionSpec, Path, PathFamily, RegionSpec, StatePathFamily,
    Verdict,
};
use hyperform::rng::SplitMix64;
use hyperform::spectral::{comparison_bound, rayleigh_quotient, spectral_gap};
use std::time::{Duration, Instant};

fn criterion(name: &str, budget: Option<Duration>, run: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = run();
    let elapsed = start.elapsed();
    match outcome {
        Ok(detail) => {
            println!("[PASS] {name}: {detail} ({elapsed:.2?})");
            if let Some(limit) = budget {
                assert!(
                    elapsed <= limit,
                    "[FAIL] {name}: runtime {elapsed:.2?} exceeds budget {limit:.2?}"
                );
            }
        }
        Err(reason) => {
            println!("[FAIL] {name}: {reason} ({elapsed:.2?})");
            panic!("{name}: {reason}");
        }
    }
}

/// Random reversible chain from a weighted graph (spanning tree + extras +
/// lazy loops): connected, detailed balance exact by construction.
fn random_reversible(n: usize, rng: &mut SplitMix64) -> FiniteChain {
    let mut w = vec![vec![0.0; n]; n];
    for i in 1..n {
        let j = rng.next_index(i);
        let weight = 0.2 + rng.next_f64();
        w[i][j] += weight;
        w[j][i] += weight;
    }
    for _ in 0..n {
        let i = rng.next_index(n);
        let j = rng.next_index(n);
        if i != j {
            let weight = rng.next_f64();
            w[i][j] += weight;
            w[j][i] += weight;
        }
    }
    for (i, row) in w.iter_mut().enumerate() {
        row[i] += 0.3 * rng.next_f64();
    }
    let strength: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let total: f64 = strength.iter().sum();
    let rows: Vec<Vec<f64>> = w
        .iter()
        .enumerate()
        .map(|(i, r)| r.iter().map(|x| x / strength[i]).collect())
        .collect();
    let pi: Vec<f64> = strength.iter().map(|s| s / total).collect();
    FiniteChain::from_dense(&rows, pi)
        .unwrap()
        .with_reversible_flag(true)
}

/// Shortest paths in the base kernel graph for every target pair with
/// positive flow.
fn shortest_path_family(base: &FiniteChain, target: &FiniteChain) -> StatePathFamily {
    let n = base.n_states();
    let mut family = StatePathFamily::new();
    for x in 0..n {
        let mut prev = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::new();
        prev[x] = x;
        queue.push_back(x);
        while let Some(u) = queue.pop_front() {
            for &(v, p) in base.row(u) {
                if p > 0.0 && v != u && prev[v] == usize::MAX {
                    prev[v] = u;
                    queue.push_back(v);
                }
            }
        }
        for y in 0..n {
            if target.prob(x, y) <= 0.0 {
                continue;
            }
            if x == y {
                family.insert(vec![x]).unwrap();
                continue;
            }
            assert_ne!(prev[y], usize::MAX, "base chain must be connected");
            let mut states = vec![y];
            let mut cur = y;
            while cur != x {
                cur = prev[cur];
                states.push(cur);
            }
            states.reverse();
            family.insert(states).unwrap();
        }
    }
    family
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn criterion_1_finite_comparison_inequality() {
    criterion(
        "criterion 1 (finite comparison inequality)",
        Some(Duration::from_secs(30)),
        || {
            let mut rng = SplitMix64::new(0xACCE_0001);
            let mut worst_slack = f64::INFINITY;
            for pair in 0..200 {
                let n = 2 + rng.next_index(7); // up to 8 states
                let base = random_reversible(n, &mut rng);
                let target = random_reversible(n, &mut rng);
                let family = shortest_path_family(&base, &target);
                let congestion = congestion_ratio_finite(&base, &target, &family)
                    .map_err(|e| format!("pair {pair}: {e}"))?;
                for field_idx in 0..100 {
                    let f = ScalarField::new((0..n).map(|_| 2.0 * rng.next_f64() - 1.0).collect());
                    let e_base = dirichlet_form(&base, &f).unwrap();
                    let e_target = dirichlet_form(&target, &f).unwrap();
                    let slack = congestion.b * e_base + 1e-10 - e_target;
                    worst_slack = worst_slack.min(slack);
                    if slack < 0.0 {
                        return Err(format!(
                            "pair {pair}, field {field_idx}: target form {e_target} exceeds B*base = {}",
                            congestion.b * e_base
                        ));
                    }
                }
            }
            Ok(format!(
                "200 chain pairs x 100 fields, worst slack {worst_slack:.3e}"
            ))
        },
    );
}

#[test]
fn criterion_2_discrete_barbell_scaling() {
    criterion(
        "criterion 2 (discrete barbell scaling)",
        Some(Duration::from_secs(60)),
        || {
            let sizes = [4usize, 8, 16, 32];
            let mut ln_n = Vec::new();
            let mut ln_trel = Vec::new();
            let mut ln_b = Vec::new();
            for &n in &sizes {
                let inst = barbell_discrete(n).map_err(|e| e.to_string())?;
                let chain = inst.chain.as_ref().unwrap();
                let family = inst.state_family.as_ref().unwrap();
                let iid = iid_chain(chain.stationary()).map_err(|e| e.to_string())?;
                let spec = spectral_gap(chain).map_err(|e| e.to_string())?;
                let congestion =
                    congestion_ratio_finite(chain, &iid, family).map_err(|e| e.to_string())?;
                let bound =
                    comparison_bound(congestion.b, chain, &iid).map_err(|e| e.to_string())?;
                if spec.relaxation_time > bound.t_rel_bound + 1e-8 {
                    return Err(format!(
                        "n = {n}: t_rel {} exceeds bound {}",
                        spec.relaxation_time, bound.t_rel_bound
                    ));
                }
                ln_n.push((n as f64).ln());
                ln_trel.push(spec.relaxation_time.ln());
                ln_b.push(congestion.b.ln());
            }
            let trel_slope = least_squares_slope(&ln_n, &ln_trel);
            let b_slope = least_squares_slope(&ln_n, &ln_b);
            if !(1.8..=2.2).contains(&trel_slope) {
                return Err(format!("t_rel slope {trel_slope:.4} outside [1.8, 2.2]"));
            }
            if !(1.8..=2.2).contains(&b_slope) {
                return Err(format!("B slope {b_slope:.4} outside [1.8, 2.2]"));
            }
            Ok(format!(
                "t_rel slope {trel_slope:.3}, B slope {b_slope:.3}, bound holds at every n"
            ))
        },
    );
}

#[test]
fn criterion_3_split_barbell_generalized_constant() {
    criterion(
        "criterion 3 (split barbell generalized constant)",
        None,
        || {
            let mut b = Vec::new();
            let mut reuse = Vec::new();
            for n in [4usize, 8] {
                let inst = barbell_split_with_grid(n, 16).map_err(|e| e.to_string())?;
                let kernel = inst.kernel.as_ref().unwrap();
                let family = inst.family.as_ref().unwrap();
                let iid = iid_kernel(kernel);
                let congestion =
                    congestion_constant_general(kernel, &iid, family, &inst.config, 0xACCE_0003)
                        .map_err(|e| e.to_string())?;
                b.push(congestion.b);
                reuse.push(congestion.max_paths_per_edge);
            }
            let ratio = b[1] / b[0];
            if !(2.5..=6.5).contains(&ratio) {
                return Err(format!(
                    "B(8)/B(4) = {ratio:.4} outside [2.5, 6.5] (B = {b:?})"
                ));
            }
            if reuse[0] != reuse[1] {
                return Err(format!(
                    "naive max paths-per-edge differs: {} at n=4 vs {} at n=8",
                    reuse[0], reuse[1]
                ));
            }
            Ok(format!(
                "B(4) = {:.2}, B(8) = {:.2}, ratio {ratio:.3}; naive edge reuse {} at both sizes",
                b[0], b[1], reuse[0]
            ))
        },
    );
}

#[test]
fn criterion_4_dirichlet_convergence() {
    criterion("criterion 4 (Dirichlet convergence)", None, || {
        let kernel = DensityKernel::uniform_unit();
        let table = dirichlet_convergence_study(
            &kernel,
            &|p: &Point| p.coords[0],
            "x",
            &[8, 16, 32, 64],
            3,
        )
        .map_err(|e| e.to_string())?;
        // the analytic value of the double integral for f(x) = x
        let analytic = 1.0 / 12.0;
        let errors: Vec<f64> = table
            .rows
            .iter()
            .map(|r| (r.value - analytic).abs())
            .collect();
        let final_err = *errors.last().unwrap();
        if final_err > 0.02 {
            return Err(format!("final error {final_err:.4e} exceeds 0.02"));
        }
        if !errors_improve(&errors, 0.10) {
            return Err(format!("errors do not improve: {errors:?}"));
        }
        Ok(format!(
            "errors vs 1/12 across meshes {{8,16,32,64}}: {errors:?}, final {final_err:.3e}"
        ))
    });
}

#[test]
fn criterion_5_reversibilization() {
    criterion("criterion 5 (reversibilization)", None, || {
        let kernel = DensityKernel::affine_xy();
        let meshes = [8usize, 16, 32, 64];
        for &m in &meshes {
            let partition = build_partition(kernel.space(), m).map_err(|e| e.to_string())?;
            let h = reversibilize(&kernel, &partition, 3).map_err(|e| e.to_string())?;
            let db = h.chain.detailed_balance_residual();
            let stat = h.chain.stationarity_residual();
            if db > 1e-10 {
                return Err(format!("mesh {m}: detailed balance residual {db:.3e}"));
            }
            if stat > 1e-10 {
                return Err(format!("mesh {m}: stationarity residual {stat:.3e}"));
            }
        }
        let drift =
            reversibilization_drift_study(&kernel, &meshes, 3).map_err(|e| e.to_string())?;
        let values = drift.errors();
        for w in values.windows(2) {
            if w[1] >= w[0] {
                return Err(format!("drift not decreasing: {values:?}"));
            }
        }
        let last = *values.last().unwrap();
        if last > 0.05 {
            return Err(format!("final drift {last:.4} exceeds 0.05"));
        }
        Ok(format!(
            "balance and stationarity within 1e-10 at every mesh; drift {values:?} ends {last:.3e}"
        ))
    });
}

#[test]
fn criterion_6_histogram_density() {
    criterion("criterion 6 (histogram density)", None, || {
        let affine = DensityKernel::affine_xy();
        let uniform = DensityKernel::uniform_unit();
        let meshes = [8usize, 16, 32, 64];
        for &m in &meshes {
            let partition = build_partition(affine.space(), m).map_err(|e| e.to_string())?;
            let (p, _) = discretize_measure(&affine, &partition, 3).map_err(|e| e.to_string())?;
            let (q, _) = discretize_measure(&uniform, &partition, 3).map_err(|e| e.to_string())?;
            let phi = histogram_density(&p, &q, &partition, false).map_err(|e| e.to_string())?;
            let integral_err = (phi.integral_against(&q) - 1.0).abs();
            if integral_err > 1e-12 {
                return Err(format!("mesh {m}: phi integral off by {integral_err:.3e}"));
            }
        }
        let study = density_convergence_study(
            StudyTarget::Measure(&affine),
            &uniform,
            &meshes,
            200,
            0xACCE_0006,
            3,
        )
        .map_err(|e| e.to_string())?;
        let final_err = study.rows.last().unwrap().value;
        if final_err > 0.05 {
            return Err(format!(
                "probe error {final_err:.4} at mesh 64 exceeds 0.05"
            ));
        }
        Ok(format!(
            "phi integrates to 1 within 1e-12 at every mesh; probe error {final_err:.3e} at mesh 64"
        ))
    });
}

#[test]
fn criterion_7_spectral_sanity() {
    criterion("criterion 7 (spectral sanity)", None, || {
        let pi = vec![0.1, 0.25, 0.4, 0.25];
        let iid = iid_chain(&pi).map_err(|e| e.to_string())?;
        let gap = spectral_gap(&iid).map_err(|e| e.to_string())?.gap;
        if (gap - 1.0).abs() > 1e-10 {
            return Err(format!("iid gap {gap} differs from 1"));
        }
        for p in [0.1, 0.5] {
            let chain =
                FiniteChain::from_dense(&[vec![1.0 - p, p], vec![p, 1.0 - p]], vec![0.5, 0.5])
                    .unwrap()
                    .with_reversible_flag(true);
            let spec = spectral_gap(&chain).map_err(|e| e.to_string())?;
            if (spec.gap - 2.0 * p).abs() > 1e-10 {
                return Err(format!(
                    "flip-{p} gap {} differs from {}",
                    spec.gap,
                    2.0 * p
                ));
            }
        }
        let mut rng = SplitMix64::new(0xACCE_0007);
        let mut fields_checked = 0usize;
        for _ in 0..10 {
            let n = 3 + rng.next_index(6);
            let chain = random_reversible(n, &mut rng);
            let gap = spectral_gap(&chain).map_err(|e| e.to_string())?.gap;
            let mut done = 0;
            while done < 100 {
                let f = ScalarField::new((0..n).map(|_| rng.next_f64()).collect());
                match rayleigh_quotient(&chain, &f) {
                    Ok(q) => {
                        if q < gap - 1e-8 {
                            return Err(format!("Rayleigh quotient {q} below gap {gap}"));
                        }
                        done += 1;
                        fields_checked += 1;
                    }
                    Err(_) => continue, // constant draw, resample
                }
            }
        }
        Ok(format!(
            "iid gap = 1, flip gaps = 2p, {fields_checked} Rayleigh quotients above gap - 1e-8"
        ))
    });
}

fn fixture_kernel_two_components() -> DensityKernel {
    DensityKernel::from_fns(
        ProductSpace::new(vec![1, 1]).unwrap(),
        "fixture-uniform-2",
        true,
        |_, _| 0.5,
        |_| 0.5,
        |_, _| true,
    )
}

fn fixture_config() -> AssumptionConfig {
    AssumptionConfig {
        epsilon: 0.5,
        epsilon0: 0.5,
        length_bound: 3.0,
        length_slack: 2.0,
        multiplicity: FunctionSpec::Constant(5.0),
        multiplicity_cap: 5.0,
        short_edge: FunctionSpec::Identity,
        goodset: RegionSpec::All,
        big_goodset: RegionSpec::All,
    }
}

fn expect_fail(
    kind: AssumptionKind,
    kernel: &DensityKernel,
    family: &PathFamily,
    config: &AssumptionConfig,
) -> Result<(), String> {
    let ctx = AssumptionContext::new(kernel, None, 0xACCE_0008);
    let report = validate_assumptions(family, config, &ctx);
    match report.verdict(kind) {
        Verdict::Fail { witness } if !witness.is_empty() => Ok(()),
        other => Err(format!("{kind:?} did not fail with a witness: {other:?}")),
    }
}

#[test]
fn criterion_8_assumption_validators() {
    criterion("criterion 8 (assumption validators)", None, || {
        // the prefilled config passes on the split instances
        for n in [4usize, 8] {
            let inst = barbell_split_with_grid(n, 16).map_err(|e| e.to_string())?;
            let kernel = inst.kernel.as_ref().unwrap();
            let iid = iid_kernel(kernel);
            let ctx = AssumptionContext::new(kernel, Some(&iid), 0xACCE_0008);
            let report = validate_assumptions(inst.family.as_ref().unwrap(), &inst.config, &ctx);
            if !report.all_pass() {
                return Err(format!("split n = {n} config rejected:\n{report}"));
            }
        }

        // each condition fails with a concrete witness on a violating fixture
        let kernel = fixture_kernel_two_components();
        let config = fixture_config();
        let d1 = Point::d1;

        // more edges than the bound allows
        let zig = Path::new((0..6).map(|i| d1(i % 2, 0.1 * i as f64)).collect()).unwrap();
        expect_fail(
            AssumptionKind::LengthBound,
            &kernel,
            &PathFamily::from_paths(vec![zig]).unwrap(),
            &config,
        )?;

        // a within-component hop far shorter than the endpoint distance
        let short = Path::new(vec![d1(0, 0.0), d1(0, 0.001), d1(1, 0.9)]).unwrap();
        expect_fail(
            AssumptionKind::ShortEdgeControl,
            &kernel,
            &PathFamily::from_paths(vec![short]).unwrap(),
            &config,
        )?;

        // two paths share an edge while their targets are close but unequal
        let p1 = Path::new(vec![d1(0, 0.0), d1(1, 0.5)]).unwrap();
        let p2 = Path::new(vec![d1(0, 0.0), d1(1, 0.5), d1(0, 0.2), d1(1, 0.51)]).unwrap();
        expect_fail(
            AssumptionKind::EdgeSeparation,
            &kernel,
            &PathFamily::from_paths(vec![p1, p2]).unwrap(),
            &config,
        )?;

        // a diagonal (empty) path next to a three-hop path: length jump 3 > M
        let diag = Path::new(vec![d1(0, 0.3)]).unwrap();
        let nearby = Path::new(vec![d1(0, 0.3001), d1(1, 0.1), d1(0, 0.9), d1(0, 0.3002)]).unwrap();
        expect_fail(
            AssumptionKind::LengthStability,
            &kernel,
            &PathFamily::from_paths(vec![diag, nearby]).unwrap(),
            &config,
        )?;

        // zero multiplicity leaves no allowance for a perturbed edge
        let mut zero_mult = config.clone();
        zero_mult.multiplicity = FunctionSpec::Constant(0.0);
        zero_mult.multiplicity_cap = 1.0;
        let q1 = Path::new(vec![d1(0, 0.0), d1(1, 0.0)]).unwrap();
        let q2 = Path::new(vec![d1(0, 0.1), d1(1, 0.1)]).unwrap();
        expect_fail(
            AssumptionKind::PerturbationCover,
            &kernel,
            &PathFamily::from_paths(vec![q1, q2]).unwrap(),
            &zero_mult,
        )?;

        // a cross-component edge when the goodset only allows short ones
        let mut short_goodset = config.clone();
        short_goodset.goodset = RegionSpec::MaxLength(1.0);
        let long_edge = Path::new(vec![d1(0, 0.0), d1(1, 0.0)]).unwrap();
        expect_fail(
            AssumptionKind::GoodsetMembership,
            &kernel,
            &PathFamily::from_paths(vec![long_edge]).unwrap(),
            &short_goodset,
        )?;

        // a kernel whose density vanishes on an edge inside the big goodset
        let dead_kernel = DensityKernel::from_fns(
            ProductSpace::new(vec![1, 1]).unwrap(),
            "fixture-dead-diagonal",
            true,
            |x, y| if x.component == y.component { 0.0 } else { 1.0 },
            |_| 0.5,
            |_, _| true,
        );
        let dead_edge = Path::new(vec![d1(0, 0.1), d1(0, 0.9)]).unwrap();
        expect_fail(
            AssumptionKind::DensityFloor,
            &dead_kernel,
            &PathFamily::from_paths(vec![dead_edge]).unwrap(),
            &config,
        )?;

        Ok("prefilled config passes at n = 4 and 8; all 7 conditions fail with witnesses on violating fixtures".to_string())
    });
}
