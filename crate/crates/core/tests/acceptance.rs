//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cslab::config::Particle;
use cslab::csl::{
    build_dephasing_matrix, build_density_operator, csl_lindblad_model, pairwise_dephasing_rate, profile_eigenvalue,
    profile_overlap, DensityKind, QuadratureGrid, RateMethod,
};
use cslab::dfs::{csl_dfs_scan, dfs_report, joint_degenerate_subspaces};
use cslab::lindblad::{dissipator, evolve, evolve_config_basis, extract_decay_rate};
use cslab::model::{diag, CMatrix, CVector};
use cslab::rates::{coherence_limit, collapse_rate, gamma_from_lambda, lambda_from_gamma};
use cslab::theorem2::{brute_force_no_dfs, rectangular_lattice, witness_trials, Construction, WITNESS_RTOL};
use cslab::{CslParams, DensityMatrix, LindbladModel, ParticleConfiguration, Position, SpeciesTable};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || format!("runtime {:.2}s exceeds {limit_s}s", elapsed.as_secs_f64()))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn dephasing_law() -> Outcome {
    let start = Instant::now();
    let rc = 100.0;
    let params = CslParams::from_rc(rc, 1e-9, 3).map_err(|e| e.to_string())?;
    let mut worst_fit = 0.0f64;
    let mut worst_quad = 0.0f64;
    for ratio in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let s = ratio * rc;
        let basis = vec![
            ParticleConfiguration::from_coords([vec![0.0, 0.0, 0.0]]).unwrap(),
            ParticleConfiguration::from_coords([vec![s, 0.0, 0.0]]).unwrap(),
        ];
        let target = common::single_particle_rate(1e-9, rc, s);
        let dm = build_dephasing_matrix(&basis, &params, &RateMethod::ClosedForm, DensityKind::Number).map_err(|e| e.to_string())?;
        // Equal superposition of the two branches.
        let one = C64::new(1.0, 0.0);
        let rho0 = DensityMatrix::pure(&CVector::from_vec(vec![one, one])).unwrap();
        let t_max = 3.0 / target;
        let res = evolve_config_basis(&basis, &dm, None, &rho0, t_max, t_max / 1000.0).map_err(|e| e.to_string())?;
        let fit = extract_decay_rate(&res.times, &res.entry(0, 1)).map_err(|e| e.to_string())?;
        worst_fit = worst_fit.max(rel(fit.rate, target));

        let grid = QuadratureGrid::default_for(basis.iter(), &params).map_err(|e| e.to_string())?;
        let quad = pairwise_dephasing_rate(&basis[0], &basis[1], &params, &RateMethod::Quadrature(grid), DensityKind::Number)
            .map_err(|e| e.to_string())?;
        worst_quad = worst_quad.max(rel(quad, dm.get(0, 1)));
    }
    ensure(worst_fit < 0.01, || format!("fit error {worst_fit:.3e} >= 1%"))?;
    ensure(worst_quad < 1e-4, || format!("quadrature vs closed form {worst_quad:.3e} >= 1e-4"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("max fit error {worst_fit:.2e}, max quadrature deviation {worst_quad:.2e}"))
}

fn collective_dephasing() -> Outcome {
    let start = Instant::now();
    let f = diag(&[2.0, 0.0, 0.0, -2.0]);
    let model = LindbladModel::new(CMatrix::zeros(4, 4), vec![f.clone()], CMatrix::identity(1, 1)).map_err(|e| e.to_string())?;
    // Encoded state (|01> + i|10>)/sqrt(2).
    let psi = CVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)]);
    let rho0 = DensityMatrix::pure(&psi).unwrap();
    let res = evolve(&model, &rho0, 10.0, 1e-3).map_err(|e| e.to_string())?;
    let drift = res
        .states
        .iter()
        .map(|s| (cslab::model::purity(s) - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(drift <= 1e-10, || format!("purity drift {drift:.3e}"))?;

    let spaces = joint_degenerate_subspaces(&[f]).map_err(|e| e.to_string())?;
    let dfs: Vec<_> = spaces.iter().filter(|s| s.dim() >= 2).collect();
    ensure(dfs.len() == 1 && dfs[0].dim() == 2, || format!("expected one 2-dim subspace, got {:?}", spaces.iter().map(|s| s.dim()).collect::<Vec<_>>()))?;
    let expected = diag(&[0.0, 1.0, 1.0, 0.0]);
    let err = (dfs[0].projector() - &expected).iter().map(|z| z.norm()).fold(0.0, f64::max);
    ensure(err <= 1e-12, || format!("projector error {err:.3e}"))?;
    let report = dfs_report(&model).map_err(|e| e.to_string())?;
    ensure(report.max_dimension == 2, || "report max dimension != 2".into())?;
    within(start.elapsed(), 60.0)?;
    Ok(format!("purity drift {drift:.2e}, projector error {err:.2e}"))
}

fn witness_suite() -> Outcome {
    let start = Instant::now();
    let mut combos = Vec::new();
    for construction in [Construction::Sphere, Construction::Mirror] {
        for dim in 1..=3 {
            for n in 1..=3 {
                // A 0-sphere holds two points, so one-particle configurations are the only sphere pairs in 1D.
                if construction == Construction::Sphere && dim == 1 && n > 1 {
                    continue;
                }
                combos.push((construction, dim, n));
            }
        }
    }
    let total = 500;
    let mut pairs = 0;
    let mut anomalies = 0;
    for (i, &(construction, dim, n)) in combos.iter().enumerate() {
        let trials = total / combos.len() + usize::from(i < total % combos.len());
        let params = CslParams::standard().with_dim(dim).unwrap();
        let results = witness_trials(construction, n, trials, 1000 + i as u64, &params).map_err(|e| e.to_string())?;
        for t in &results {
            pairs += 1;
            ensure(t.anchor_gap <= 1e-10, || format!("{construction:?} d={dim} N={n}: anchor gap {:.3e}", t.anchor_gap))?;
            let qa: Vec<Vec<f64>> = t.pair.q_a.positions().map(|p| p.coords().to_vec()).collect();
            let qb: Vec<Vec<f64>> = t.pair.q_b.positions().map(|p| p.coords().to_vec()).collect();
            let verified = t.report.witness.as_ref().is_some_and(|w| {
                let na = common::density(w.coords(), &qa, &common::ones(n), params.alpha());
                let nb = common::density(w.coords(), &qb, &common::ones(n), params.alpha());
                w != &t.pair.anchor && (na - nb).abs() > WITNESS_RTOL * na.max(nb)
            });
            if !verified {
                anomalies += 1;
            }
        }
    }
    ensure(pairs == total, || format!("ran {pairs} pairs"))?;
    ensure(anomalies == 0, || format!("{anomalies} pairs without a verified witness"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("{pairs}/{total} verified witnesses over {} construction settings", combos.len()))
}

fn brute_force() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    for (shape, dim) in [(vec![4usize], 1usize), (vec![3, 3], 2)] {
        let params = CslParams::from_rc(100.0, 1e-9, dim).unwrap();
        let sites = rectangular_lattice(&shape, 100.0).map_err(|e| e.to_string())?;
        let cert = brute_force_no_dfs(&sites, 2, &params).map_err(|e| e.to_string())?;
        let min = cert.min_pairwise_rate.ok_or("no pairs enumerated")?;
        ensure(min > 0.0, || format!("{shape:?}: min rate {min}"))?;
        ensure(cert.dfs_max_dimension == 1, || format!("{shape:?}: DFS dimension {}", cert.dfs_max_dimension))?;
        lines.push(format!("{shape:?}: {} configs, min rate {min:.3e}", cert.n_configs));
    }
    within(start.elapsed(), 60.0)?;
    Ok(lines.join("; "))
}

fn rate_arithmetic() -> Outcome {
    let params = CslParams::from_rc(100.0, 1.0, 3).unwrap();
    let lambda = lambda_from_gamma(1e-9, &params).map_err(|e| e.to_string())?;
    ensure((1e-17..=3e-17).contains(&lambda), || format!("lambda {lambda:.3e} outside [1e-17, 3e-17]"))?;
    let gamma = collapse_rate(1e-17, 1e8, 1.0).map_err(|e| e.to_string())?;
    let limit = coherence_limit(gamma).ok_or("zero collapse rate")?;
    ensure(rel(limit, 10.0) <= 1e-12, || format!("coherence limit {limit}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let rc = 10f64.powf(rng.random_range(0.0..6.0));
        let g = 10f64.powf(rng.random_range(-12.0..3.0));
        let p = CslParams::from_rc(rc, 1.0, 3).unwrap();
        let back = gamma_from_lambda(lambda_from_gamma(g, &p).unwrap(), &p).unwrap();
        worst = worst.max(rel(back, g));
    }
    ensure(worst <= 1e-12, || format!("round trip error {worst:.3e}"))?;
    Ok(format!("lambda = {lambda:.4e} 1/s, coherence limit {limit} s, round trip {worst:.1e}"))
}

fn integrator_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut trace, mut herm, mut min_eig, mut diss_trace) = (0.0f64, 0.0f64, f64::INFINITY, 0.0f64);
    for i in 0..100 {
        let k = rng.random_range(1..=6);
        let model = common::random_model(&mut rng, k);
        // Alternate pure and full-rank initial states.
        let rank = if i % 2 == 0 { 1 } else { k };
        let rho0 = common::random_state(&mut rng, k, rank);
        let l = dissipator(rho0.matrix(), &model).map_err(|e| e.to_string())?;
        diss_trace = diss_trace.max(l.trace().norm());
        let dt = 0.05 / model.rate_scale();
        let res = evolve(&model, &rho0, 2.0, dt).map_err(|e| format!("model {i}: {e}"))?;
        trace = trace.max(res.diagnostics.max_trace_deviation);
        herm = herm.max(res.diagnostics.max_hermiticity_deviation);
        min_eig = min_eig.min(res.diagnostics.min_eigenvalue);
    }
    ensure(trace <= 1e-8, || format!("trace drift {trace:.3e}"))?;
    ensure(herm <= 1e-10, || format!("Hermiticity deviation {herm:.3e}"))?;
    ensure(min_eig >= -1e-7, || format!("min eigenvalue {min_eig:.3e}"))?;
    ensure(diss_trace <= 1e-12, || format!("dissipator trace {diss_trace:.3e}"))?;
    within(start.elapsed(), 120.0)?;
    Ok(format!("trace {trace:.1e}, Hermiticity {herm:.1e}, min eigenvalue {min_eig:.1e}, dissipator trace {diss_trace:.1e}"))
}

fn mass_reduction() -> Outcome {
    let params = CslParams::standard();
    let unit = SpeciesTable::new().with_species(1, 1.0).unwrap().with_species(2, 1.0).unwrap();
    let mass = DensityKind::Mass(&unit);
    let number = DensityKind::Number;
    let mk = |c: &[(f64, f64, f64, u32)]| {
        ParticleConfiguration::new(c.iter().map(|&(x, y, z, s)| Particle::with_species(Position::new(vec![x, y, z]).unwrap(), s)).collect()).unwrap()
    };
    let basis = vec![
        mk(&[(0.0, 0.0, 0.0, 0), (80.0, 0.0, 0.0, 1)]),
        mk(&[(30.0, 40.0, 0.0, 2), (-50.0, 0.0, 10.0, 0)]),
        mk(&[(200.0, -10.0, 5.0, 1)]),
    ];
    let x = Position::new(vec![15.0, 5.0, -5.0]).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    let mut checks = 0;
    for q in &basis {
        let (a, b) = (profile_eigenvalue(&x, q, &params, number).unwrap(), profile_eigenvalue(&x, q, &params, mass).unwrap());
        ensure(close(a, b), || format!("eigenvalue {a} vs {b}"))?;
        checks += 1;
        for r in &basis {
            let (a, b) = (profile_overlap(q, r, &params, number).unwrap(), profile_overlap(q, r, &params, mass).unwrap());
            ensure(close(a, b), || format!("overlap {a} vs {b}"))?;
            checks += 1;
        }
    }
    let dn = build_dephasing_matrix(&basis, &params, &RateMethod::ClosedForm, number).unwrap();
    let dmass = build_dephasing_matrix(&basis, &params, &RateMethod::ClosedForm, mass).unwrap();
    let grid = QuadratureGrid::default_for(basis.iter(), &params).unwrap();
    let dq = build_dephasing_matrix(&basis, &params, &RateMethod::Quadrature(grid.clone()), number).unwrap();
    let dqm = build_dephasing_matrix(&basis, &params, &RateMethod::Quadrature(grid), mass).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                ensure(close(dn.get(i, j), dmass.get(i, j)), || format!("closed-form rate ({i},{j})"))?;
                ensure(close(dq.get(i, j), dqm.get(i, j)), || format!("quadrature rate ({i},{j})"))?;
                checks += 2;
            }
        }
    }
    let on = build_density_operator(&x, &basis, &params, number).unwrap();
    let om = build_density_operator(&x, &basis, &params, mass).unwrap();
    ensure(on.iter().zip(om.iter()).all(|(a, b)| close(a.re, b.re)), || "density operator differs".into())?;
    let mn = csl_lindblad_model(&basis, &params, number, None).unwrap();
    let mm = csl_lindblad_model(&basis, &params, mass, None).unwrap();
    let rho = DensityMatrix::new(CMatrix::from_element(3, 3, C64::new(1.0 / 3.0, 0.0))).unwrap();
    let (ln, lm) = (dissipator(rho.matrix(), &mn).unwrap(), dissipator(rho.matrix(), &mm).unwrap());
    let scale = ln.iter().map(|z| z.norm()).fold(0.0, f64::max);
    ensure((ln - lm).iter().all(|z| z.norm() <= 1e-12 * scale), || "dissipator differs".into())?;
    checks += 2;

    let heavy = SpeciesTable::new().with_species(1, 2.0).unwrap();
    let mut worst = 0.0f64;
    for s in [25.0, 100.0, 400.0] {
        let qa = mk(&[(0.0, 0.0, 0.0, 1)]);
        let qb = mk(&[(s, 0.0, 0.0, 1)]);
        let d = pairwise_dephasing_rate(&qa, &qb, &params, &RateMethod::ClosedForm, DensityKind::Mass(&heavy)).unwrap();
        worst = worst.max(rel(d, 4.0 * common::single_particle_rate(params.gamma(), 100.0, s)));
    }
    ensure(worst <= 1e-12, || format!("ratio-2 rate deviates from 4x closed form by {worst:.3e}"))?;
    let _ = csl_dfs_scan(&basis, &[x], &params, mass).map_err(|e| e.to_string())?;
    Ok(format!("{checks} unit-ratio comparisons, ratio-2 scaling error {worst:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("CSL dephasing law", dephasing_law),
        ("collective-dephasing DFS", collective_dephasing),
        ("witness suite", witness_suite),
        ("brute-force no-go", brute_force),
        ("rate arithmetic", rate_arithmetic),
        ("integrator invariants", integrator_invariants),
        ("mass-density reduction", mass_reduction),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.2}s)"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name}: {reason} ({secs:.2}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
