mod common;

use std::f64::consts::PI;

use nalgebra::DVector;
use pccb::array::beampattern_values;
use pccb::objective::{energy_term, fidelity_term, to_complex, to_real, PccbProblem};
use pccb::phase_center::phase_vector_values;

use common::{finite_difference, look, reference_problem, rel_err};

const H: f64 = 1e-6;

/// Feasible points whose masked phases stay clear of the ±π cut, so a
/// frozen-mask objective is smooth around them.
fn stable_points(problem: &PccbProblem, n: usize) -> Vec<DVector<f64>> {
    let scale = 1.0 / (problem.n_elements() as f64).sqrt();
    (0u64..)
        .map(|seed| problem.feasible_init(seed, scale).unwrap())
        .filter(|w| {
            let b = beampattern_values(w, problem.steering().entries());
            let pv = phase_vector_values(&b, problem.anchor(), problem.mask_threshold()).unwrap();
            pv.phases
                .iter()
                .zip(&pv.mask)
                .all(|(p, &m)| !m || PI - p.abs() > 1e-3)
        })
        .take(n)
        .map(|w| to_real(&w))
        .collect()
}

fn problems() -> Vec<PccbProblem> {
    vec![
        reference_problem(look(25.0, -10.0), &[]),
        reference_problem(look(-40.0, 30.0), &[look(10.0, -40.0)]),
    ]
}

#[test]
fn energy_gradient_matches_central_differences() {
    for p in problems() {
        let v = p.steering();
        for x in stable_points(&p, 10) {
            let (_, g) = energy_term(&to_complex(&x), v).unwrap();
            let fd = finite_difference(|y| energy_term(&to_complex(y), v).unwrap().0, &x, H);
            assert!(rel_err(&fd, &g) <= 1e-5, "{}", rel_err(&fd, &g));
        }
    }
}

#[test]
fn fidelity_gradient_matches_central_differences() {
    for p in problems() {
        let (v, d) = (p.steering(), p.desired_unit());
        for x in stable_points(&p, 10) {
            let (_, g) = fidelity_term(&to_complex(&x), v, d).unwrap();
            let fd = finite_difference(|y| fidelity_term(&to_complex(y), v, d).unwrap().0, &x, H);
            assert!(rel_err(&fd, &g) <= 1e-5, "{}", rel_err(&fd, &g));
        }
    }
}

#[test]
fn phase_center_gradient_matches_central_differences_with_frozen_mask() {
    for p in problems() {
        for x in stable_points(&p, 10) {
            let w = to_complex(&x);
            let mask = p.mask_at(&w).unwrap();
            let (_, g) = p.phase_center_term_masked(&w, &mask).unwrap();
            let fd = finite_difference(
                |y| p.phase_center_term_masked(&to_complex(y), &mask).unwrap().0,
                &x,
                H,
            );
            assert!(rel_err(&fd, &g) <= 1e-5, "{}", rel_err(&fd, &g));
        }
    }
}

#[test]
fn total_gradient_is_weighted_sum_of_terms() {
    let p = reference_problem(look(15.0, 20.0), &[]);
    for x in stable_points(&p, 3) {
        let w = to_complex(&x);
        let (b, g) = p.total_objective(&w).unwrap();
        let (_, ge) = energy_term(&w, p.steering()).unwrap();
        let (_, gb) = fidelity_term(&w, p.steering(), p.desired_unit()).unwrap();
        let (_, gpc) = p
            .phase_center_term_masked(&w, &p.mask_at(&w).unwrap())
            .unwrap();
        let sum = gpc + ge * p.lambda_e() + gb * p.lambda_b();
        assert!(rel_err(&sum, &g) <= 1e-12);
        let fd = finite_difference(|y| p.total_objective_real(y).unwrap().0.j_total, &x, H);
        assert!(rel_err(&fd, &g) <= 1e-5);
        assert!(b.j_total > 0.0);
    }
}
