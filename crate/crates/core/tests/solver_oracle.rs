//! Interior-point solver checked against an independent dense two-phase
//! simplex (Bland's rule) shared with the acceptance suite.

#[path = "support/simplex.rs"]
mod simplex;

use percept_core::solver::{solve_qp, QpProblem, SolveStatus, SolverSettings, Triplets};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simplex::{random_lp, Oracle};

#[test]
fn half_line_minimum() {
    // min x  s.t.  -x <= -3
    let mut t = Triplets::new(1, 1);
    t.push(0, 0, -1.0);
    let prob = QpProblem { p_diag: vec![], q: vec![1.0], a: t.to_csc(), b: vec![-3.0], n_eq: 0 };
    let sol = solve_qp(&prob, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.objective - 3.0).abs() < 1e-8);
}

#[test]
fn unbounded_ray_is_reported() {
    let mut t = Triplets::new(1, 1);
    t.push(0, 0, 1.0);
    let prob = QpProblem { p_diag: vec![], q: vec![1.0], a: t.to_csc(), b: vec![5.0], n_eq: 0 };
    let sol = solve_qp(&prob, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::DualInfeasible);
    let ray = sol.certificate.unwrap();
    assert!((ray[0] + 1.0).abs() < 1e-9);
}

#[test]
fn infeasible_pair_has_farkas_certificate() {
    // x <= -1 and -x <= -1
    let mut t = Triplets::new(2, 1);
    t.push(0, 0, 1.0);
    t.push(1, 0, -1.0);
    let prob = QpProblem { p_diag: vec![], q: vec![0.0], a: t.to_csc(), b: vec![-1.0, -1.0], n_eq: 0 };
    let sol = solve_qp(&prob, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    let y = sol.certificate.unwrap();
    assert!(y.iter().all(|&v| v >= -1e-12));
    assert!((y[0] - y[1]).abs() < 1e-8);
    assert!((-y[0] - y[1] + 1.0).abs() < 1e-8);
}

#[test]
fn separable_qp_matches_closed_form() {
    // min 1/2 (x - 2)^2 + 1/2 (y + 1)^2  s.t.  x + y = 3, x <= 2.5
    let mut t = Triplets::new(2, 2);
    t.push(0, 0, 1.0);
    t.push(0, 1, 1.0);
    t.push(1, 0, 1.0);
    let prob = QpProblem {
        p_diag: vec![1.0, 1.0],
        q: vec![-2.0, 1.0],
        a: t.to_csc(),
        b: vec![3.0, 2.5],
        n_eq: 1,
    };
    let sol = solve_qp(&prob, &SolverSettings::default()).unwrap();
    assert_eq!(sol.status, SolveStatus::Optimal);
    // Unconstrained projection onto x + y = 3 gives (3, 0); the cap binds.
    assert!((sol.x[0] - 2.5).abs() < 1e-8 && (sol.x[1] - 0.5).abs() < 1e-8);
}

#[test]
fn two_hundred_random_lps_match_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let settings = SolverSettings::default();
    let mut counts = [0usize; 3];
    for case in 0..200 {
        let kind = match case % 10 {
            0 => 1,
            1 => 2,
            _ => 0,
        };
        let lp = random_lp(&mut rng, kind);
        let oracle = lp.oracle();
        let sol = solve_qp(&lp.to_problem(), &settings).unwrap();
        match oracle {
            Oracle::Optimal(v) => {
                counts[0] += 1;
                assert_eq!(sol.status, SolveStatus::Optimal, "case {case}: {lp:?}", lp = lp.c);
                assert!((sol.objective - v).abs() <= 1e-6, "case {case}: {} vs {v}", sol.objective);
                let (eq, ineq) = lp.to_problem().violation(&sol.x);
                assert!(eq <= 1e-8 && ineq <= 1e-8, "case {case}: violation {eq} {ineq}");
            }
            Oracle::Infeasible => {
                counts[1] += 1;
                assert_eq!(sol.status, SolveStatus::PrimalInfeasible, "case {case}");
            }
            Oracle::Unbounded => {
                counts[2] += 1;
                assert_eq!(sol.status, SolveStatus::DualInfeasible, "case {case}");
            }
        }
    }
    assert!(counts[0] >= 150 && counts[1] >= 15, "coverage {counts:?}");
}

#[test]
fn repeated_solves_are_bitwise_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lp = random_lp(&mut rng, 0).to_problem();
    let a = solve_qp(&lp, &SolverSettings::default()).unwrap();
    let b = solve_qp(&lp, &SolverSettings::default()).unwrap();
    assert_eq!(a.x, b.x);
    assert_eq!(a.iterations, b.iterations);
}
