//! The regularized PCCB functional `J_t = ΦᵀSΦ + λe·J_e + λb·J_b` and its
//! linear gain/null constraints `w^H·C = g`.
//!
//! Weights are optimized in the real parameterization `x = [Re w; Im w]`
//! (length 2N). Every term is a real function of the beampattern
//! `B = w^H·V`; writing its pattern derivative as
//! `G_k = ∂J/∂Re B_k + i·∂J/∂Im B_k`, the parameter gradient is
//! `[Re h; Im h]` with `h = V·conj(G)`. The terms below only differ in `G`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::{
    beampattern_values, steering_matrix, steering_vector_unit, ArrayGeometry, Beampattern,
    ElementModel, SteeringMatrix, Wavefield,
};
use crate::phase_center::{
    build_direction_matrix, phase_vector_values, solve_pco, DirectionMatrix, PhaseCenterResult,
    PhaseVector,
};
use crate::sphere::DirectionSet;
use crate::{Complex64, Error, Result};

/// Regularization weights used for the reported experiments.
pub const DEFAULT_LAMBDA_E: f64 = 10.0;
pub const DEFAULT_LAMBDA_B: f64 = 0.1;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// `[Re w; Im w]`.
pub fn to_real(w: &DVector<Complex64>) -> DVector<f64> {
    let n = w.len();
    DVector::from_fn(2 * n, |i, _| if i < n { w[i].re } else { w[i - n].im })
}

pub fn to_complex(x: &DVector<f64>) -> DVector<Complex64> {
    let n = x.len() / 2;
    DVector::from_fn(n, |i, _| Complex64::new(x[i], x[i + n]))
}

/// Chain a pattern derivative `G` through `B = w^H·V` onto `[Re w; Im w]`.
fn pattern_to_weight_gradient(v: &DMatrix<Complex64>, g: &DVector<Complex64>) -> DVector<f64> {
    let h = v * g.conjugate();
    let n = h.len();
    DVector::from_fn(2 * n, |i, _| if i < n { h[i].re } else { h[i - n].im })
}

fn energy_parts(b: &DVector<Complex64>, n: usize) -> (f64, DVector<Complex64>) {
    let scale = 1.0 / n as f64;
    (
        b.norm_squared() * scale,
        b * Complex64::new(2.0 * scale, 0.0),
    )
}

fn fidelity_parts(
    b: &DVector<Complex64>,
    desired_unit: &DVector<Complex64>,
) -> Result<(f64, DVector<Complex64>)> {
    let s = b.norm();
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::DegeneratePattern(format!("beampattern norm is {s}")));
    }
    // ‖d − B/s‖² = 2 − 2·Re(d^H B)/s for unit d
    let p = desired_unit.dotc(b).re;
    let value = (2.0 - 2.0 * p / s).max(0.0);
    let g = (desired_unit * Complex64::new(-2.0 / s, 0.0))
        + b * Complex64::new(2.0 * p / (s * s * s), 0.0);
    Ok((value, g))
}

/// `ΦᵀSΦ` for phases already zeroed outside `mask`, and its pattern derivative.
fn phase_center_gradient(
    b: &DVector<Complex64>,
    phases: &DVector<f64>,
    mask: &[bool],
    dm: &DirectionMatrix,
    anchor: usize,
) -> (f64, DVector<Complex64>) {
    let (value, r) = dm.quadratic_form(phases);
    // dΦ_k = dθ_k − dθ_anchor, dθ_k = Im(dB_k/B_k)  →  G^θ_k = i / conj(B_k)
    let mut g = DVector::zeros(b.len());
    let mut r_sum = 0.0;
    for k in 0..b.len() {
        if mask[k] {
            g[k] = I * (2.0 * r[k]) / b[k].conj();
            r_sum += r[k];
        }
    }
    g[anchor] -= I * (2.0 * r_sum) / b[anchor].conj();
    (value, g)
}

fn masked_phases(pv: &PhaseVector, mask: &[bool]) -> DVector<f64> {
    DVector::from_fn(
        pv.phases.len(),
        |k, _| if mask[k] { pv.phases[k] } else { 0.0 },
    )
}

fn phase_center_parts(
    b: &DVector<Complex64>,
    dirs: &DirectionSet,
    anchor: usize,
    mask_threshold: f64,
    cached: Option<&DirectionMatrix>,
) -> Result<(f64, DVector<Complex64>)> {
    let pv = phase_vector_values(b, anchor, mask_threshold)?;
    let phases = masked_phases(&pv, &pv.mask);
    match cached {
        Some(dm) if dm.mask() == pv.mask.as_slice() => {
            Ok(phase_center_gradient(b, &phases, &pv.mask, dm, anchor))
        }
        _ => {
            let dm = build_direction_matrix(dirs, &pv.mask)?;
            Ok(phase_center_gradient(b, &phases, &pv.mask, &dm, anchor))
        }
    }
}

/// `J_e = (1/N)·w^H·V·V^H·w` and its gradient.
pub fn energy_term(w: &DVector<Complex64>, v: &SteeringMatrix) -> Result<(f64, DVector<f64>)> {
    check_len(w, v)?;
    let b = beampattern_values(w, v.entries());
    let (value, g) = energy_parts(&b, w.len());
    Ok((value, pattern_to_weight_gradient(v.entries(), &g)))
}

/// `J_b = ‖B_d/‖B_d‖ − B_w/‖B_w‖‖²` and its gradient.
pub fn fidelity_term(
    w: &DVector<Complex64>,
    v: &SteeringMatrix,
    desired: &DVector<Complex64>,
) -> Result<(f64, DVector<f64>)> {
    check_len(w, v)?;
    let dn = desired.norm();
    if !(dn > 0.0) {
        return Err(Error::InvalidArgument("desired beampattern is zero".into()));
    }
    let b = beampattern_values(w, v.entries());
    let (value, g) = fidelity_parts(&b, &(desired / Complex64::new(dn, 0.0)))?;
    Ok((value, pattern_to_weight_gradient(v.entries(), &g)))
}

/// `J_pc = ΦᵀSΦ` over the directions masked in at `w`, and its gradient with
/// that mask held fixed.
pub fn phase_center_term(
    w: &DVector<Complex64>,
    v: &SteeringMatrix,
    anchor: usize,
    mask_threshold: f64,
) -> Result<(f64, DVector<f64>)> {
    check_len(w, v)?;
    let b = beampattern_values(w, v.entries());
    let (value, g) = phase_center_parts(&b, v.directions(), anchor, mask_threshold, None)?;
    Ok((value, pattern_to_weight_gradient(v.entries(), &g)))
}

fn check_len(w: &DVector<Complex64>, v: &SteeringMatrix) -> Result<()> {
    if w.len() != v.n_elements() {
        return Err(Error::DimensionMismatch {
            expected: v.n_elements(),
            got: w.len(),
        });
    }
    Ok(())
}

/// Value of each term of the PCCB functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub j_total: f64,
    pub j_pc: f64,
    pub j_e: f64,
    pub j_b: f64,
}

/// Inputs of one PCCB solve. Immutable once built and shared between restarts.
#[derive(Debug, Clone)]
pub struct PccbProblem {
    steering: SteeringMatrix,
    wavefield: Wavefield,
    look_dirs: Vec<Vector3<f64>>,
    null_dirs: Vec<Vector3<f64>>,
    constraints: DMatrix<Complex64>,
    response: DVector<Complex64>,
    desired_unit: DVector<Complex64>,
    anchor: usize,
    lambda_e: f64,
    lambda_b: f64,
    mask_threshold: f64,
    full_dm: DirectionMatrix,
}

/// Builder-style settings for [`PccbProblem::new`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub lambda_e: f64,
    pub lambda_b: f64,
    pub mask_threshold: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            lambda_e: DEFAULT_LAMBDA_E,
            lambda_b: DEFAULT_LAMBDA_B,
            mask_threshold: crate::phase_center::DEFAULT_MASK_THRESHOLD,
        }
    }
}

impl PccbProblem {
    /// `w^H v(ψ) = 1` towards every `look_dirs` entry and `0` towards every
    /// `null_dirs` entry, with `v` the element-free steering vector. Phases are anchored at the sampled direction nearest
    /// to the first look direction.
    pub fn new(
        geom: &ArrayGeometry,
        wavefield: Wavefield,
        dirs: Arc<DirectionSet>,
        elem: &ElementModel,
        look_dirs: &[Vector3<f64>],
        null_dirs: &[Vector3<f64>],
        reg: Regularization,
    ) -> Result<Self> {
        if look_dirs.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one look direction is required".into(),
            ));
        }
        if !(reg.lambda_e >= 0.0 && reg.lambda_b >= 0.0) {
            return Err(Error::InvalidArgument(
                "regularization weights must be >= 0".into(),
            ));
        }
        if !(reg.mask_threshold >= 0.0 && reg.mask_threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mask threshold must be in [0, 1), got {}",
                reg.mask_threshold
            )));
        }
        elem.validate()?;
        let lambda = wavefield.wavelength();
        let steering = steering_matrix(geom, lambda, dirs.clone(), elem)?;
        let n = geom.len();
        let columns: Vec<DVector<Complex64>> = look_dirs
            .iter()
            .chain(null_dirs)
            .map(|u| steering_vector_unit(geom, lambda, &u.normalize()))
            .collect();
        if columns.len() > n {
            return Err(Error::RankDeficientConstraints(format!(
                "{} constraints exceed {n} degrees of freedom",
                columns.len()
            )));
        }
        let constraints = DMatrix::from_columns(&columns);
        check_full_column_rank(&constraints)?;
        let mut response = DVector::zeros(columns.len());
        for l in 0..look_dirs.len() {
            response[l] = Complex64::new(1.0, 0.0);
        }

        let mut desired = DVector::zeros(dirs.len());
        for c in columns.iter().take(look_dirs.len()) {
            desired += beampattern_values(c, steering.entries());
        }
        let dn = desired.norm();
        if !(dn > 0.0) {
            return Err(Error::InvalidArgument(
                "desired beampattern vanishes on the direction set".into(),
            ));
        }
        let desired_unit = desired / Complex64::new(dn, 0.0);
        let anchor = dirs.nearest(&look_dirs[0].normalize());
        let full_dm = build_direction_matrix(&dirs, &vec![true; dirs.len()])?;
        Ok(Self {
            steering,
            wavefield,
            look_dirs: look_dirs.iter().map(|u| u.normalize()).collect(),
            null_dirs: null_dirs.iter().map(|u| u.normalize()).collect(),
            constraints,
            response,
            desired_unit,
            anchor,
            lambda_e: reg.lambda_e,
            lambda_b: reg.lambda_b,
            mask_threshold: reg.mask_threshold,
            full_dm,
        })
    }

    pub fn steering(&self) -> &SteeringMatrix {
        &self.steering
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        self.steering.directions()
    }

    pub fn wavelength(&self) -> f64 {
        self.wavefield.wavelength()
    }

    pub fn n_elements(&self) -> usize {
        self.steering.n_elements()
    }

    pub fn look_dirs(&self) -> &[Vector3<f64>] {
        &self.look_dirs
    }

    pub fn null_dirs(&self) -> &[Vector3<f64>] {
        &self.null_dirs
    }

    /// N×(L+M): look columns first, then nulls.
    pub fn constraint_matrix(&self) -> &DMatrix<Complex64> {
        &self.constraints
    }

    pub fn response(&self) -> &DVector<Complex64> {
        &self.response
    }

    pub fn desired_unit(&self) -> &DVector<Complex64> {
        &self.desired_unit
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn lambda_e(&self) -> f64 {
        self.lambda_e
    }

    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }

    pub fn mask_threshold(&self) -> f64 {
        self.mask_threshold
    }

    pub fn pattern(&self, w: &DVector<Complex64>) -> Beampattern {
        Beampattern::new(
            beampattern_values(w, self.steering.entries()),
            self.directions().clone(),
        )
        .expect("pattern length matches direction set")
    }

    /// Conventional beamformer for the first look direction, scaled to unit
    /// look gain: `w = c/(c^H·c)`.
    pub fn cbf_weights(&self) -> DVector<Complex64> {
        let c = self.constraints.column(0).into_owned();
        let cc = c.norm_squared();
        c / Complex64::new(cc, 0.0)
    }

    /// Phase-center offset of the pattern produced by `w`, with the same
    /// anchor and mask policy as the objective.
    pub fn pco(&self, w: &DVector<Complex64>) -> Result<PhaseCenterResult> {
        let b = beampattern_values(w, self.steering.entries());
        let pv = phase_vector_values(&b, self.anchor, self.mask_threshold)?;
        if pv.mask.iter().all(|&m| m) {
            solve_pco(&self.full_dm, &pv.phases, self.wavelength())
        } else {
            let dm = build_direction_matrix(self.directions(), &pv.mask)?;
            solve_pco(&dm, &pv.phases, self.wavelength())
        }
    }

    /// Mask used by the objective at `w`.
    pub fn mask_at(&self, w: &DVector<Complex64>) -> Result<Vec<bool>> {
        let b = beampattern_values(w, self.steering.entries());
        Ok(phase_vector_values(&b, self.anchor, self.mask_threshold)?.mask)
    }

    /// `J_pc` with an externally fixed mask (used to check gradients away
    /// from mask switches).
    pub fn phase_center_term_masked(
        &self,
        w: &DVector<Complex64>,
        mask: &[bool],
    ) -> Result<(f64, DVector<f64>)> {
        if mask.len() != self.directions().len() {
            return Err(Error::DimensionMismatch {
                expected: self.directions().len(),
                got: mask.len(),
            });
        }
        let b = beampattern_values(w, self.steering.entries());
        let dm = build_direction_matrix(self.directions(), mask)?;
        let pv = phase_vector_values(&b, self.anchor, 0.0)?;
        let (value, g) =
            phase_center_gradient(&b, &masked_phases(&pv, mask), mask, &dm, self.anchor);
        Ok((
            value,
            pattern_to_weight_gradient(self.steering.entries(), &g),
        ))
    }

    /// Full functional and gradient at complex weights `w`.
    pub fn total_objective(
        &self,
        w: &DVector<Complex64>,
    ) -> Result<(ObjectiveBreakdown, DVector<f64>)> {
        if w.len() != self.n_elements() {
            return Err(Error::DimensionMismatch {
                expected: self.n_elements(),
                got: w.len(),
            });
        }
        if !w.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
            return Err(Error::InvalidArgument("weights are not finite".into()));
        }
        let b = beampattern_values(w, self.steering.entries());
        let (j_pc, g_pc) = phase_center_parts(
            &b,
            self.directions(),
            self.anchor,
            self.mask_threshold,
            Some(&self.full_dm),
        )?;
        let (j_e, g_e) = energy_parts(&b, w.len());
        let (j_b, g_b) = fidelity_parts(&b, &self.desired_unit)?;
        let g = g_pc
            + g_e * Complex64::new(self.lambda_e, 0.0)
            + g_b * Complex64::new(self.lambda_b, 0.0);
        let breakdown = ObjectiveBreakdown {
            j_total: j_pc + self.lambda_e * j_e + self.lambda_b * j_b,
            j_pc,
            j_e,
            j_b,
        };
        Ok((
            breakdown,
            pattern_to_weight_gradient(self.steering.entries(), &g),
        ))
    }

    /// [`Self::total_objective`] on the real parameterization.
    pub fn total_objective_real(
        &self,
        x: &DVector<f64>,
    ) -> Result<(ObjectiveBreakdown, DVector<f64>)> {
        self.total_objective(&to_complex(x))
    }

    /// `Γ(x)` and its (constant) Jacobian for this problem's constraints.
    pub fn constraint_residuals(
        &self,
        w: &DVector<Complex64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        constraint_residuals(w, &self.constraints, &self.response)
    }

    /// Random feasible start for restart `seed`.
    pub fn feasible_init(&self, seed: u64, scale: f64) -> Result<DVector<Complex64>> {
        feasible_init(seed, &self.constraints, &self.response, scale)
    }
}

fn check_full_column_rank(c: &DMatrix<Complex64>) -> Result<()> {
    let sv = c.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        return Err(Error::RankDeficientConstraints(format!(
            "singular values range {min:e}..{max:e}; look/null directions must be distinct"
        )));
    }
    Ok(())
}

/// `Γ = [Re(w^H C − g); Im(w^H C − g)]` and `∂Γ/∂[Re w; Im w]`.
pub fn constraint_residuals(
    w: &DVector<Complex64>,
    c: &DMatrix<Complex64>,
    g: &DVector<Complex64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, m) = c.shape();
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: w.len(),
        });
    }
    if g.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: g.len(),
        });
    }
    let r = c.ad_mul(w).conjugate() - g; // (w^H C)ᵀ − g
    let gamma = DVector::from_fn(2 * m, |i, _| if i < m { r[i].re } else { r[i - m].im });
    // w^H c = Σ (a − ib)(cr + i ci) = Σ (a·cr + b·ci) + i·Σ (a·ci − b·cr)
    let mut jac = DMatrix::zeros(2 * m, 2 * n);
    for j in 0..m {
        for k in 0..n {
            let cjk = c[(k, j)];
            jac[(j, k)] = cjk.re;
            jac[(j, n + k)] = cjk.im;
            jac[(m + j, k)] = cjk.im;
            jac[(m + j, n + k)] = -cjk.re;
        }
    }
    Ok((gamma, jac))
}

/// Gaussian draw projected onto `{w : w^H C = g}` along the minimum-norm
/// correction. Real and imaginary parts have std `scale/√N`.
pub fn feasible_init(
    seed: u64,
    c: &DMatrix<Complex64>,
    g: &DVector<Complex64>,
    scale: f64,
) -> Result<DVector<Complex64>> {
    let n = c.nrows();
    let std = scale / (n as f64).sqrt();
    let normal = Normal::new(0.0, std)
        .map_err(|e| Error::InvalidArgument(format!("init scale {scale}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_r = DVector::from_fn(n, |_, _| {
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        Complex64::new(re, im)
    });
    project_feasible(&w_r, c, g)
}

/// `w − C·(C^H C)⁻¹·(C^H w − conj(g))`.
pub fn project_feasible(
    w: &DVector<Complex64>,
    c: &DMatrix<Complex64>,
    g: &DVector<Complex64>,
) -> Result<DVector<Complex64>> {
    check_full_column_rank(c)?;
    let gram = c.ad_mul(c);
    let rhs = c.ad_mul(w) - g.conjugate();
    let y = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::RankDeficientConstraints("C^H C is singular".into()))?;
    Ok(w - c * y)
}
