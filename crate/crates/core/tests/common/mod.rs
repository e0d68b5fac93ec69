#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use pccb::array::{build_grid_array, ElementModel, Wavefield};
use pccb::objective::{PccbProblem, Regularization};
use pccb::sphere::{direction_from_angles, sample_equal_area, DirectionSet, Region};
use pccb::GNSS_L1_HZ;

pub fn l1() -> Wavefield {
    Wavefield::from_frequency(GNSS_L1_HZ).unwrap()
}

pub fn hemisphere(k: usize) -> Arc<DirectionSet> {
    Arc::new(sample_equal_area(k, Region::UpperHemisphere).unwrap())
}

pub fn look(theta_deg: f64, phi_deg: f64) -> Vector3<f64> {
    direction_from_angles(theta_deg.to_radians(), phi_deg.to_radians()).unwrap()
}

/// 3×3 grid at 7 cm, L1, cosine elements, K=500 hemisphere, default weights.
pub fn reference_problem(look_dir: Vector3<f64>, nulls: &[Vector3<f64>]) -> PccbProblem {
    PccbProblem::new(
        &build_grid_array(3, 3, 0.07).unwrap(),
        l1(),
        hemisphere(500),
        &ElementModel::default(),
        &[look_dir],
        nulls,
        Regularization::default(),
    )
    .unwrap()
}

/// Central differences with step `h` on every coordinate.
pub fn finite_difference(
    mut f: impl FnMut(&DVector<f64>) -> f64,
    x: &DVector<f64>,
    h: f64,
) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
