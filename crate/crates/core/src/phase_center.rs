//! Least-squares phase-center offset (PCO) of a complex beampattern.
//!
//! A point source at `P` seen from unit direction `u_k` carries the phase
//! `2π/λ·u_k·P`. Stacking the sampled directions into `D` (K×3) gives
//! `D·P = λ/2π·Φ`; `P` is the least-squares solution through the
//! pseudo-inverse `Ω = D⁺`. The PCCB objective minimizes `Φᵀ·S·Φ` with
//! `S = ΩᵀΩ`, i.e. `‖2π/λ·P‖²`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::array::Beampattern;
use crate::sphere::DirectionSet;
use crate::{Complex64, Error, Result};

/// Default relative magnitude below which a direction is left out of the fit.
pub const DEFAULT_MASK_THRESHOLD: f64 = 1e-3;

/// Relative singular value below which the direction matrix is rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Anchored, wrapped phases of a beampattern plus the directions trusted for
/// the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    pub phases: DVector<f64>,
    pub mask: Vec<bool>,
}

/// Wrap an angle to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Phase of every sample relative to `anchor`, wrapped to `(−π, π]`.
///
/// `mask[k]` is set where `|B[k]| >= mask_rel_threshold·max|B|`; the anchor is
/// always kept.
pub fn phase_vector(
    pattern: &Beampattern,
    anchor: usize,
    mask_rel_threshold: f64,
) -> Result<PhaseVector> {
    phase_vector_values(pattern.values(), anchor, mask_rel_threshold)
}

pub fn phase_vector_values(
    values: &DVector<Complex64>,
    anchor: usize,
    mask_rel_threshold: f64,
) -> Result<PhaseVector> {
    if anchor >= values.len() {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} out of range for {} directions",
            values.len()
        )));
    }
    let peak = values.iter().map(|b| b.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::DegeneratePattern(format!(
            "beampattern peak magnitude is {peak}"
        )));
    }
    let reference = values[anchor];
    if reference.norm() == 0.0 {
        return Err(Error::DegeneratePattern(format!(
            "beampattern vanishes at anchor {anchor}"
        )));
    }
    let cutoff = mask_rel_threshold * peak;
    let mut mask: Vec<bool> = values.iter().map(|b| b.norm() >= cutoff).collect();
    mask[anchor] = true;
    let ref_conj = reference.conj();
    let phases = values.map(|b| {
        let a = (b * ref_conj).arg();
        if a == -PI {
            PI
        } else {
            a
        }
    });
    let mut phases = phases;
    phases[anchor] = 0.0;
    Ok(PhaseVector { phases, mask })
}

/// Direction matrix `D` restricted to a mask, and its pseudo-inverse.
#[derive(Debug, Clone)]
pub struct DirectionMatrix {
    d: DMatrix<f64>,
    /// 3×K, zero columns outside the mask.
    omega: DMatrix<f64>,
    mask: Vec<bool>,
    n_used: usize,
}

impl DirectionMatrix {
    /// K×3, rows `u_kᵀ` (all directions, masked or not).
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_used(&self) -> usize {
        self.n_used
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    /// `S = ΩᵀΩ` (K×K).
    pub fn s_matrix(&self) -> DMatrix<f64> {
        self.omega.tr_mul(&self.omega)
    }

    /// `Ω·x` for a K-vector.
    pub fn apply_omega(&self, x: &DVector<f64>) -> Vector3<f64> {
        let y = &self.omega * x;
        Vector3::new(y[0], y[1], y[2])
    }

    /// `(Φᵀ·S·Φ, S·Φ)` without materializing `S`.
    pub fn quadratic_form(&self, phases: &DVector<f64>) -> (f64, DVector<f64>) {
        let op = &self.omega * phases;
        (op.norm_squared(), self.omega.tr_mul(&op))
    }
}

pub fn build_direction_matrix(dirs: &DirectionSet, mask: &[bool]) -> Result<DirectionMatrix> {
    if mask.len() != dirs.len() {
        return Err(Error::DimensionMismatch {
            expected: dirs.len(),
            got: mask.len(),
        });
    }
    let used: Vec<usize> = (0..mask.len()).filter(|&k| mask[k]).collect();
    if used.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "phase-center fit needs at least 4 directions, {} masked in",
            used.len()
        )));
    }
    let rows = dirs.unit_vectors();
    let d = DMatrix::from_fn(dirs.len(), 3, |k, j| rows[k][j]);
    let dm = DMatrix::from_fn(used.len(), 3, |r, j| rows[used[r]][j]);

    let svd = dm.svd(true, true);
    let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
    let s = &svd.singular_values;
    let s_max = s.max();
    let mut rank = 0;
    let mut weakest = (f64::INFINITY, 0);
    for (i, &si) in s.iter().enumerate() {
        if si > RANK_TOL * s_max {
            rank += 1;
        }
        if si < weakest.0 {
            weakest = (si, i);
        }
    }
    if rank < 3 {
        let axis = vt.row(weakest.1);
        return Err(Error::RankDeficient {
            rank,
            n_used: used.len(),
            deficient_axis: [axis[0], axis[1], axis[2]],
        });
    }
    // Ω_used = V·Σ⁻¹·Uᵀ
    let mut sinv_ut = u.transpose();
    for i in 0..3 {
        sinv_ut.row_mut(i).scale_mut(1.0 / s[i]);
    }
    let omega_used = vt.transpose() * sinv_ut;
    let mut omega = DMatrix::zeros(3, dirs.len());
    for (r, &k) in used.iter().enumerate() {
        omega.set_column(k, &omega_used.column(r));
    }
    Ok(DirectionMatrix {
        d,
        omega,
        n_used: used.len(),
        mask: mask.to_vec(),
    })
}

/// Fitted phase-center offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCenterResult {
    #[serde(rename = "pc_m")]
    pub offset: [f64; 3],
    #[serde(rename = "norm_m")]
    pub norm: f64,
    #[serde(rename = "residual_rms_rad")]
    pub residual_rms: f64,
    pub n_used: usize,
}

impl PhaseCenterResult {
    pub fn offset_vector(&self) -> Vector3<f64> {
        Vector3::from(self.offset)
    }
}

/// `P_c = λ/2π·Ω·Φ` over the masked directions.
pub fn solve_pco(
    dm: &DirectionMatrix,
    phases: &DVector<f64>,
    wavelength: f64,
) -> Result<PhaseCenterResult> {
    if phases.len() != dm.len() {
        return Err(Error::DimensionMismatch {
            expected: dm.len(),
            got: phases.len(),
        });
    }
    if let Some(k) = (0..dm.len()).find(|&k| dm.mask[k] && !phases[k].is_finite()) {
        return Err(Error::InvalidArgument(format!("phase {k} is not finite")));
    }
    let mut masked = phases.clone();
    for (k, &m) in dm.mask.iter().enumerate() {
        if !m {
            masked[k] = 0.0;
        }
    }
    let scale = wavelength / (2.0 * PI);
    let p = dm.apply_omega(&masked) * scale;
    let model = &dm.d * (p / scale);
    let sse: f64 = (0..dm.len())
        .filter(|&k| dm.mask[k])
        .map(|k| (model[k] - phases[k]).powi(2))
        .sum();
    Ok(PhaseCenterResult {
        offset: [p.x, p.y, p.z],
        norm: p.norm(),
        residual_rms: (sse / dm.n_used as f64).sqrt(),
        n_used: dm.n_used,
    })
}

/// Phase extraction, masking and fit in one call.
pub fn estimate_pco(
    pattern: &Beampattern,
    anchor: usize,
    mask_rel_threshold: f64,
    wavelength: f64,
) -> Result<PhaseCenterResult> {
    let pv = phase_vector(pattern, anchor, mask_rel_threshold)?;
    let dm = build_direction_matrix(pattern.directions(), &pv.mask)?;
    solve_pco(&dm, &pv.phases, wavelength)
}

/// `(DᵀD)` over the masked rows; used by callers that need a cheap Gram matrix.
pub fn masked_gram(dirs: &DirectionSet, mask: &[bool]) -> Matrix3<f64> {
    dirs.unit_vectors()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(u, _)| u * u.transpose())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{
        beampattern, build_grid_array, steering_matrix, steering_vector_unit, ElementModel,
    };
    use crate::sphere::{sample_equal_area, Region};
    use std::sync::Arc;

    const LAMBDA: f64 = crate::SPEED_OF_LIGHT / crate::GNSS_L1_HZ;

    fn hemi(k: usize) -> Arc<DirectionSet> {
        Arc::new(sample_equal_area(k, Region::UpperHemisphere).unwrap())
    }

    fn synth(dirs: &DirectionSet, t: &Vector3<f64>) -> DVector<Complex64> {
        let k = 2.0 * PI / LAMBDA;
        DVector::from_iterator(
            dirs.len(),
            dirs.unit_vectors()
                .iter()
                .map(|u| Complex64::from_polar(1.0, k * u.dot(t))),
        )
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(PI), PI);
        assert_eq!(wrap_phase(-PI), PI);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_phase(0.25), 0.25);
    }

    #[test]
    fn constant_phase_pattern_gives_zero_phases() {
        let dirs = hemi(50);
        let b = Beampattern::new(
            DVector::from_element(50, Complex64::from_polar(2.0, 0.7)),
            dirs,
        )
        .unwrap();
        let pv = phase_vector(&b, 3, DEFAULT_MASK_THRESHOLD).unwrap();
        assert!(pv.phases.iter().all(|p| p.abs() < 1e-15));
        assert!(pv.mask.iter().all(|&m| m));
    }

    #[test]
    fn synthesized_phases_are_recovered() {
        let dirs = hemi(200);
        let t = Vector3::new(0.0, 0.01, -0.005);
        let b = Beampattern::new(synth(&dirs, &t), dirs.clone()).unwrap();
        let anchor = 40;
        let pv = phase_vector(&b, anchor, DEFAULT_MASK_THRESHOLD).unwrap();
        let k = 2.0 * PI / LAMBDA;
        let ua = dirs.unit_vectors()[anchor];
        for (kk, u) in dirs.unit_vectors().iter().enumerate() {
            let expected = k * (u - ua).dot(&t);
            assert!((pv.phases[kk] - expected).abs() < 1e-12);
        }
        assert_eq!(pv.phases[anchor], 0.0);
    }

    #[test]
    fn deep_null_is_masked_out() {
        let dirs = hemi(20);
        let mut vals = DVector::from_element(20, Complex64::new(1.0, 0.0));
        vals[7] = Complex64::new(1e-9, 0.0);
        let b = Beampattern::new(vals, dirs).unwrap();
        let pv = phase_vector(&b, 0, DEFAULT_MASK_THRESHOLD).unwrap();
        assert!(!pv.mask[7]);
        assert_eq!(pv.mask.iter().filter(|&&m| m).count(), 19);
        // anchor kept even when weak
        let pv = phase_vector(&b, 7, DEFAULT_MASK_THRESHOLD).unwrap();
        assert!(pv.mask[7]);
    }

    #[test]
    fn zero_pattern_rejected() {
        let dirs = hemi(10);
        let b = Beampattern::new(DVector::zeros(10), dirs).unwrap();
        assert!(matches!(
            phase_vector(&b, 0, 1e-3),
            Err(Error::DegeneratePattern(_))
        ));
        let b = Beampattern::new(
            DVector::from_element(10, Complex64::new(1.0, 0.0)),
            hemi(10),
        )
        .unwrap();
        assert!(phase_vector(&b, 10, 1e-3).is_err());
    }

    #[test]
    fn axis_aligned_design_has_half_transpose_inverse() {
        let axes = vec![
            Vector3::x(),
            -Vector3::x(),
            Vector3::y(),
            -Vector3::y(),
            Vector3::z(),
            -Vector3::z(),
        ];
        let dirs = DirectionSet::from_unit_vectors(axes, 4.0 * PI).unwrap();
        let dm = build_direction_matrix(&dirs, &[true; 6]).unwrap();
        let expected = dm.d().transpose() * 0.5;
        assert!((dm.omega() - expected).amax() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_identity_on_fibonacci_hemisphere() {
        let dirs = hemi(500);
        let dm = build_direction_matrix(&dirs, &vec![true; 500]).unwrap();
        let d = dm.d();
        let dod = d * dm.omega() * d;
        assert!((dod - d).amax() < 1e-9);
        let s = dm.s_matrix();
        assert!((&s - s.transpose()).amax() < 1e-12);
    }

    #[test]
    fn masked_pseudo_inverse_ignores_excluded_rows() {
        let dirs = hemi(100);
        let mask: Vec<bool> = (0..100).map(|k| k % 3 != 0).collect();
        let dm = build_direction_matrix(&dirs, &mask).unwrap();
        for (k, &kept) in mask.iter().enumerate() {
            if !kept {
                assert!(dm.omega().column(k).iter().all(|&x| x == 0.0));
            }
        }
        // identity restricted to kept rows: Ω·D_masked = I3
        let g = masked_gram(&dirs, &mask);
        let omega_d: Matrix3<f64> = (0..100)
            .filter(|&k| mask[k])
            .map(|k| {
                let u = dirs.unit_vectors()[k];
                Vector3::new(dm.omega()[(0, k)], dm.omega()[(1, k)], dm.omega()[(2, k)])
                    * u.transpose()
            })
            .sum();
        assert!((omega_d - Matrix3::identity()).amax() < 1e-12);
        assert!(g.determinant() > 0.0);
    }

    #[test]
    fn coplanar_directions_rejected() {
        let dirs = DirectionSet::from_unit_vectors(
            vec![
                Vector3::x(),
                Vector3::y(),
                Vector3::new(1.0, 1.0, 0.0),
                Vector3::new(1.0, -2.0, 0.0),
            ],
            1.0,
        )
        .unwrap();
        match build_direction_matrix(&dirs, &[true; 4]) {
            Err(Error::RankDeficient {
                rank,
                deficient_axis,
                ..
            }) => {
                assert_eq!(rank, 2);
                assert!((deficient_axis[2].abs() - 1.0).abs() < 1e-12);
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
        let three = DirectionSet::from_unit_vectors(
            vec![Vector3::x(), Vector3::y(), Vector3::new(1.0, 1.0, 0.0)],
            1.0,
        )
        .unwrap();
        assert!(build_direction_matrix(&three, &[true; 3]).is_err());
    }

    #[test]
    fn solve_pco_examples() {
        let dirs = hemi(300);
        let dm = build_direction_matrix(&dirs, &vec![true; 300]).unwrap();
        let r = solve_pco(&dm, &DVector::zeros(300), LAMBDA).unwrap();
        assert_eq!(r.offset, [0.0; 3]);
        assert_eq!(r.residual_rms, 0.0);

        // forward synthesis oracle, no anchoring so the model is exact
        let t = Vector3::new(0.0, 0.01, -0.005);
        let k = 2.0 * PI / LAMBDA;
        let phases = DVector::from_iterator(300, dirs.unit_vectors().iter().map(|u| k * u.dot(&t)));
        assert!(phases.amax() < PI);
        let r = solve_pco(&dm, &phases, LAMBDA).unwrap();
        assert!((r.offset_vector() - t).norm() <= 1e-9);
        assert!(r.residual_rms < 1e-12);
        assert_eq!(r.n_used, 300);

        let one = build_grid_array(1, 1, 0.07).unwrap();
        let v = steering_matrix(&one, LAMBDA, dirs.clone(), &ElementModel::Isotropic).unwrap();
        let w = steering_vector_unit(&one, LAMBDA, &Vector3::x());
        let b = beampattern(&w, &v).unwrap();
        let r = estimate_pco(&b, 0, DEFAULT_MASK_THRESHOLD, LAMBDA).unwrap();
        assert!(r.norm <= 1e-12);
    }

    #[test]
    fn constant_phase_shift_is_linear() {
        let dirs = hemi(120);
        let dm = build_direction_matrix(&dirs, &[true; 120]).unwrap();
        let phases = DVector::from_fn(120, |k, _| ((k * 37) % 11) as f64 * 0.1 - 0.5);
        let c = 0.3;
        let base = solve_pco(&dm, &phases, LAMBDA).unwrap().offset_vector();
        let shifted = solve_pco(&dm, &phases.add_scalar(c), LAMBDA)
            .unwrap()
            .offset_vector();
        let expected = dm.apply_omega(&DVector::from_element(120, 1.0)) * (c * LAMBDA / (2.0 * PI));
        assert!((shifted - base - expected).norm() < 1e-12);
    }

    #[test]
    fn json_record_layout() {
        let r = PhaseCenterResult {
            offset: [0.0, 0.01, -0.02],
            norm: 0.5,
            residual_rms: 0.1,
            n_used: 12,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(
            s,
            r#"{"pc_m":[0.0,0.01,-0.02],"norm_m":0.5,"residual_rms_rad":0.1,"n_used":12}"#
        );
    }
}
