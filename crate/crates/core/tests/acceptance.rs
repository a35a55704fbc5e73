//! Acceptance gate. Run with `cargo test -p nlpc --test acceptance -- --nocapture`
//! to see one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use nlpc::bench::{self, ExperimentSpec, Method, Model};
use nlpc::crn::parse_network;
use nlpc::dynamics::{integrate, IntegratorConfig};
use nlpc::problem::{finite_difference_jacobian, RootProblem};
use nlpc::solver::{SolverConfig, StepKind};
use nlpc::{networks, BoxDomain, ProjectorKind, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROJECTOR_CASES: usize = 10_000;
const PROJECTOR_TOL: f64 = 1e-12;
const PROJECTOR_BUDGET: Duration = Duration::from_secs(5);

const STARTS: usize = 50;
const ROOT_TOL: f64 = 1e-12;
const MOIETY_TOL: f64 = 1e-10;
const ROOT_BUDGET: Duration = Duration::from_secs(60);

const AGREEMENT_TOL: f64 = 1e-8;
const AGREEMENT_FLOOR: f64 = 1e-9;

const MONOTONE_TOL: f64 = 1e-12;

const COMPARE_HORIZON: f64 = 1e4;

const ABLATION_STARTS: usize = 20;

const DYNAMICS_TOL: f64 = 1e-6;
const DRIFT_TOL: f64 = 1e-6;
const DYNAMICS_BUDGET: Duration = Duration::from_secs(10);

const JACOBIAN_POINTS: usize = 100;
const JACOBIAN_TOL: f64 = 1e-5;

const SEED: u64 = 20240501;

fn models() -> Vec<Model> {
    networks::ALL.iter().map(|n| Model::bundled(n.name).unwrap()).collect()
}

fn spec(starts: usize) -> ExperimentSpec {
    ExperimentSpec {
        starts,
        seed: SEED,
        ..Default::default()
    }
}

fn random_box(rng: &mut ChaCha8Rng, n: usize) -> BoxDomain {
    let mut lo = Vec::with_capacity(n);
    let mut hi = Vec::with_capacity(n);
    for _ in 0..n {
        let a = rng.random_range(-5.0..5.0);
        let w = rng.random_range(0.1..5.0);
        match rng.random_range(0..4) {
            0 => {
                lo.push(a);
                hi.push(a + w);
            }
            1 => {
                lo.push(a);
                hi.push(f64::INFINITY);
            }
            2 => {
                lo.push(f64::NEG_INFINITY);
                hi.push(a);
            }
            _ => {
                lo.push(f64::NEG_INFINITY);
                hi.push(f64::INFINITY);
            }
        }
    }
    BoxDomain::new(lo, hi).unwrap()
}

fn random_point_in(rng: &mut ChaCha8Rng, dom: &BoxDomain) -> Vector {
    Vector::from_fn(dom.dim(), |i, _| {
        let (l, u) = (dom.lower()[i], dom.upper()[i]);
        // Put some coordinates exactly on a finite bound.
        if l.is_finite() && rng.random_bool(0.25) {
            return l;
        }
        if u.is_finite() && rng.random_bool(0.25) {
            return u;
        }
        let l = if l.is_finite() { l } else { -10.0 };
        let u = if u.is_finite() { u } else { 10.0 };
        rng.random_range(l..=u).clamp(dom.lower()[i], dom.upper()[i])
    })
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(-5.0..5.0) })
}

fn projector_suite() -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = 0;
    let mut checks = 0;
    for _ in 0..PROJECTOR_CASES {
        let n = rng.random_range(1..=8);
        let dom = random_box(&mut rng, n);
        let x = random_point_in(&mut rng, &dom);
        let d = random_direction(&mut rng, n);
        let a1 = rng.random_range(1e-3..3.0);
        let a2 = a1 * rng.random_range(1.0..4.0);

        let z = &x + a1 * &d;
        let p = dom.project_nonlinear(&z, &x).unwrap();
        let ortho = (&x - &p).dot(&(&z - &p));
        let ortho_ok = ortho.abs() <= PROJECTOR_TOL * (x.norm() * d.norm()).max(1.0);

        let direct = (&p - &x).norm();
        let arc = dom.arc_displacement_norm(&x, &d, a1).unwrap();
        let norm_ok = (arc - direct).abs() <= PROJECTOR_TOL * direct + 2.0 * f64::EPSILON * x.norm();

        let arc2 = dom.arc_displacement_norm(&x, &d, a2).unwrap();
        let phi_ok = arc / a1 >= arc2 / a2 * (1.0 - PROJECTOR_TOL);

        let sets = dom.index_sets(&x, &d, a1).unwrap();
        let mut seen = vec![0u8; n];
        for &i in sets.blocked.iter().chain(&sets.moved).chain(&sets.shrinkable) {
            seen[i] += 1;
        }
        let partition_ok = seen.iter().all(|&c| c == 1);

        checks += 4;
        failures += [ortho_ok, norm_ok, phi_ok, partition_ok].iter().filter(|ok| !**ok).count();
    }
    (checks, failures)
}

fn relative_agreement(a: &Vector, b: &Vector) -> f64 {
    a.iter()
        .zip(b.iter())
        .filter(|(x, y)| x.abs() > AGREEMENT_FLOOR || y.abs() > AGREEMENT_FLOOR)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()))
        .fold(0.0, f64::max)
}

fn report(id: usize, name: &str, ok: bool, detail: String) {
    println!("[{}] criterion {id}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

fn solve_all(models: &[Model]) -> (Vec<Vec<bench::StartResult>>, Duration) {
    let clock = Instant::now();
    let runs = models.iter().map(|m| bench::run_solve(m, &spec(STARTS)).unwrap()).collect();
    (runs, clock.elapsed())
}

#[test]
fn criterion_1_projector_identities() {
    let clock = Instant::now();
    let (checks, failures) = projector_suite();
    let elapsed = clock.elapsed();
    report(
        1,
        "projector identities",
        failures == 0 && elapsed < PROJECTOR_BUDGET,
        format!("{failures} failures in {checks} checks, {:.2}s", elapsed.as_secs_f64()),
    );
}

#[test]
fn criterion_2_root_finding() {
    let models = models();
    let (runs, elapsed) = solve_all(&models);
    let mut bad = Vec::new();
    for (model, rows) in models.iter().zip(&runs) {
        let c_norm = model.target.moieties().norm();
        for r in rows {
            let x = &r.outcome.point;
            let f = model.problem.residual_norm(x).unwrap_or(f64::INFINITY);
            let drift = model.problem.moiety_residual(x);
            if !(r.outcome.converged()
                && f <= ROOT_TOL
                && x.iter().all(|&v| v >= 0.0)
                && drift <= MOIETY_TOL * c_norm)
            {
                bad.push(format!("{}#{} ({}, |f|={f:.2e})", model.name, r.start_index, r.outcome.status.name()));
            }
        }
    }
    let total: usize = runs.iter().map(Vec::len).sum();
    report(
        2,
        "root-finding correctness",
        bad.is_empty() && elapsed < ROOT_BUDGET,
        format!(
            "{}/{total} starts on {} networks converged, {:.2}s{}",
            total - bad.len(),
            models.len(),
            elapsed.as_secs_f64(),
            if bad.is_empty() { String::new() } else { format!("; failing: {}", bad.join(", ")) }
        ),
    );
}

#[test]
fn criterion_3_uniqueness() {
    let models = models();
    let (runs, _) = solve_all(&models);
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    for (model, rows) in models.iter().zip(&runs) {
        let roots: Vec<&Vector> = rows.iter().filter(|r| r.outcome.converged()).map(|r| &r.outcome.point).collect();
        for (i, a) in roots.iter().enumerate() {
            for b in &roots[i + 1..] {
                let spread = relative_agreement(a, b);
                if spread > worst {
                    worst = spread;
                    worst_at = model.name.clone();
                }
            }
        }
    }
    report(
        3,
        "uniqueness consistency",
        worst <= AGREEMENT_TOL,
        format!("worst pairwise relative difference {worst:.2e} {worst_at}"),
    );
}

#[test]
fn criterion_4_monotonicity() {
    let models = models();
    let (runs, _) = solve_all(&models);
    let sigma = SolverConfig::default().sigma_newton;
    let mut violations = 0;
    let mut audited = 0;
    for r in runs.iter().flatten() {
        for w in r.outcome.trace.windows(2) {
            let (prev, cur) = (&w[0], &w[1]);
            let theta_ok = cur.theta <= prev.theta * (1.0 + MONOTONE_TOL);
            let ok = match cur.kind {
                StepKind::Newton => {
                    let bound = (1.0 - cur.stepsize * sigma).sqrt() * prev.residual_norm;
                    cur.residual_norm <= bound * (1.0 + MONOTONE_TOL) && theta_ok
                }
                StepKind::Gradient => theta_ok,
                StepKind::Start | StepKind::GradientForced => continue,
            };
            audited += 1;
            if !ok {
                violations += 1;
            }
        }
    }
    report(
        4,
        "monotonicity audit",
        violations == 0,
        format!("{violations} violations in {audited} accepted steps"),
    );
}

#[test]
fn criterion_5_nlpc_vs_dynamics() {
    let compare_spec = ExperimentSpec {
        integrator: IntegratorConfig {
            horizon: COMPARE_HORIZON,
            ..Default::default()
        },
        ..spec(STARTS)
    };
    let mut pairs = 0;
    let mut losses = Vec::new();
    for model in &models() {
        let rows = bench::run_compare(model, &compare_spec).unwrap();
        for pair in rows.chunks(2) {
            let (n, d) = (&pair[0], &pair[1]);
            assert_eq!((n.method, d.method), (Method::Nlpc, Method::Dynamic));
            pairs += 1;
            // An integrator failure counts as an unbounded dynamic residual.
            let dyn_res = if d.residual_norm.is_nan() { f64::INFINITY } else { d.residual_norm };
            if !(n.residual_norm <= ROOT_TOL && n.residual_norm <= dyn_res) {
                losses.push(format!("{}#{} ({:.2e} vs {:.2e})", model.name, n.start_index, n.residual_norm, dyn_res));
            }
        }
    }
    report(
        5,
        "NLPC residual not above dynamic residual",
        losses.is_empty(),
        format!(
            "{}/{pairs} paired starts{}",
            pairs - losses.len(),
            if losses.is_empty() { String::new() } else { format!("; losing: {}", losses.join(", ")) }
        ),
    );
}

#[test]
fn criterion_6_projector_ablation() {
    let stiff = Model::bundled(networks::STIFF).unwrap();
    let rows = bench::run_ablation(&stiff, &spec(ABLATION_STARTS)).unwrap();
    let mean = |kind: ProjectorKind, f: &dyn Fn(&bench::AblationRow) -> f64| {
        let sel: Vec<f64> = rows.iter().filter(|r| r.variant == kind).map(f).collect();
        sel.iter().sum::<f64>() / sel.len() as f64
    };
    let zero_nl = mean(ProjectorKind::Nonlinear, &|r| r.max_zero_component_pct);
    let zero_or = mean(ProjectorKind::Orthogonal, &|r| r.max_zero_component_pct);
    let rs_nl = mean(ProjectorKind::Nonlinear, &|r| r.restarts as f64);
    let rs_or = mean(ProjectorKind::Orthogonal, &|r| r.restarts as f64);
    report(
        6,
        "projector ablation",
        zero_or > zero_nl && rs_or >= rs_nl,
        format!("zero components {zero_or:.2}% vs {zero_nl:.2}%, restarts {rs_or:.2} vs {rs_nl:.2} (orthogonal vs nonlinear)"),
    );
}

#[test]
fn criterion_7_dynamics() {
    let clock = Instant::now();
    let (oracle_err, worst_drift) = dynamics_checks(&models());
    let elapsed = clock.elapsed();
    report(
        7,
        "dynamics oracle and moiety drift",
        oracle_err <= DYNAMICS_TOL && worst_drift <= DRIFT_TOL && elapsed < DYNAMICS_BUDGET,
        format!(
            "analytic error {oracle_err:.2e}, worst drift {worst_drift:.2e}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_8_jacobian() {
    let models = models();
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for model in &models {
        let n = model.network.n_species();
        for _ in 0..JACOBIAN_POINTS {
            let x = Vector::from_fn(n, |_, _| rng.random_range(0.05..3.0));
            let analytic = model.problem.jacobian(&x).unwrap();
            let fd = finite_difference_jacobian(model.problem.as_ref(), &x, 1e-6);
            worst = worst.max((&analytic - &fd).norm() / analytic.norm().max(1.0));
        }
    }
    report(
        8,
        "Jacobian verification",
        worst <= JACOBIAN_TOL,
        format!("worst relative error {worst:.2e} over {} points", JACOBIAN_POINTS * models.len()),
    );
}

#[test]
fn criterion_9_determinism() {
    let models = models();
    let deterministic = models.iter().all(|m| csv_snapshot(m) == csv_snapshot(m));
    report(9, "determinism", deterministic, "solve, compare and ablation CSV repeated".into());
}

fn dynamics_checks(models: &[Model]) -> (f64, f64) {
    let cfg = IntegratorConfig {
        horizon: 3.0,
        samples: 1,
        ..Default::default()
    };
    let one_way = parse_network("reaction 1.5 : A -> B").unwrap();
    let x0 = Vector::from_column_slice(&[2.0, 0.5]);
    let end = integrate(&one_way, &x0, &cfg).unwrap().final_state().clone();
    let a = 2.0 * (-1.5f64 * 3.0).exp();
    let exact = Vector::from_column_slice(&[a, 2.5 - a]);
    let mut err = (&end - &exact).norm() / exact.norm();

    let pair = parse_network("reaction 2 : A -> B\nreaction 1 : B -> A").unwrap();
    let x0 = Vector::from_column_slice(&[3.0, 0.0]);
    let end = integrate(&pair, &x0, &cfg).unwrap().final_state().clone();
    // x_A(t) = 1 + 2 e^{−3t}
    let a = 1.0 + 2.0 * (-3.0f64 * 3.0).exp();
    let exact = Vector::from_column_slice(&[a, 3.0 - a]);
    err = err.max((&end - &exact).norm() / exact.norm());

    let mut drift: f64 = 0.0;
    let drift_cfg = IntegratorConfig {
        horizon: COMPARE_HORIZON,
        samples: 50,
        ..Default::default()
    };
    for model in models {
        let x0 = bench::initial_point(model, SEED).unwrap();
        let n = model.basis.matrix_f64();
        let c = &n * &x0;
        if c.is_empty() {
            continue;
        }
        let traj = integrate(&model.network, &x0, &drift_cfg).unwrap();
        for x in &traj.states {
            drift = drift.max((&n * x - &c).norm() / c.norm());
        }
    }
    (err, drift)
}

/// Drops the `wall_time_s` column from a CSV document.
fn without_timing(csv: Vec<u8>) -> String {
    let text = String::from_utf8(csv).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let skip = header.iter().position(|h| *h == "wall_time_s");
    text.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| Some(*i) != skip)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn csv_snapshot(model: &Model) -> Vec<String> {
    let s = spec(8);
    let compare = ExperimentSpec {
        integrator: IntegratorConfig {
            horizon: 10.0,
            ..Default::default()
        },
        ..s.clone()
    };
    let mut solve = Vec::new();
    bench::write_solve_csv(model, &bench::run_solve(model, &s).unwrap(), &mut solve).unwrap();
    let mut cmp = Vec::new();
    bench::write_compare_csv(&bench::run_compare(model, &compare).unwrap(), &mut cmp).unwrap();
    let mut abl = Vec::new();
    bench::write_ablation_csv(&bench::run_ablation(model, &s).unwrap(), &mut abl).unwrap();
    vec![without_timing(solve), without_timing(cmp), without_timing(abl)]
}
