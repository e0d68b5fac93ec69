//! Direction sampling on the unit sphere.
//!
//! Angles follow the array frame: azimuth `θ` in the XY plane measured from
//! +X, elevation `φ` towards +Z, so `u = (cosθ·cosφ, sinθ·cosφ, sinφ)` and
//! boresight (+X) sits at `θ = φ = 0`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Portion of the sphere covered by a [`DirectionSet`]. Caps and hemispheres
/// are centered on boresight (+X).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    FullSphere,
    UpperHemisphere,
    Cap { max_angle_rad: f64 },
}

impl Region {
    /// Cosine of the cap's half-angle.
    fn min_cos(&self) -> f64 {
        match *self {
            Region::FullSphere => -1.0,
            Region::UpperHemisphere => 0.0,
            Region::Cap { max_angle_rad } => max_angle_rad.cos(),
        }
    }

    pub fn solid_angle(&self) -> f64 {
        2.0 * PI * (1.0 - self.min_cos())
    }

    pub fn contains(&self, u: &Vector3<f64>) -> bool {
        u.x >= self.min_cos()
    }

    fn validate(&self) -> Result<()> {
        if let Region::Cap { max_angle_rad } = *self {
            if !(max_angle_rad > 0.0 && max_angle_rad <= PI) {
                return Err(Error::InvalidArgument(format!(
                    "cap half-angle must be in (0, π], got {max_angle_rad}"
                )));
            }
        }
        Ok(())
    }
}

/// K sampled directions with equal solid-angle weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    unit_vectors: Vec<Vector3<f64>>,
    angles: Vec<(f64, f64)>,
    weights: Vec<f64>,
    region: Option<Region>,
}

impl DirectionSet {
    /// Arbitrary direction set sharing `total_solid_angle` equally. Vectors
    /// are normalized.
    pub fn from_unit_vectors(vectors: Vec<Vector3<f64>>, total_solid_angle: f64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::InvalidArgument("direction set is empty".into()));
        }
        let mut unit_vectors = Vec::with_capacity(vectors.len());
        for (i, v) in vectors.into_iter().enumerate() {
            let n = v.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "direction {i} has no valid orientation"
                )));
            }
            unit_vectors.push(v / n);
        }
        let w = total_solid_angle / unit_vectors.len() as f64;
        Ok(Self {
            angles: unit_vectors.iter().map(angles_from_direction).collect(),
            weights: vec![w; unit_vectors.len()],
            unit_vectors,
            region: None,
        })
    }

    pub fn unit_vectors(&self) -> &[Vector3<f64>] {
        &self.unit_vectors
    }

    /// `(θ, φ)` per direction, radians.
    pub fn angles(&self) -> &[(f64, f64)] {
        &self.angles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn region(&self) -> Option<Region> {
        self.region
    }

    pub fn len(&self) -> usize {
        self.unit_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unit_vectors.is_empty()
    }

    /// Index of the sampled direction closest to `u`.
    pub fn nearest(&self, u: &Vector3<f64>) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (k, d) in self.unit_vectors.iter().enumerate() {
            let dot = d.dot(u);
            if dot > best_dot {
                best_dot = dot;
                best = k;
            }
        }
        best
    }

    /// CSV with header `k,theta_rad,phi_rad,ux,uy,uz,weight_sr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,theta_rad,phi_rad,ux,uy,uz,weight_sr\n");
        for (k, ((u, (t, p)), w)) in self
            .unit_vectors
            .iter()
            .zip(&self.angles)
            .zip(&self.weights)
            .enumerate()
        {
            let _ = writeln!(out, "{k},{t},{p},{},{},{},{w}", u.x, u.y, u.z);
        }
        out
    }
}

/// Spherical Fibonacci lattice over `region`, polar axis along +X.
///
/// Points sit at the centers of `K` equal-area latitude strata
/// (`u_x = 1 − h·(i + ½)/K`) and advance by the golden angle in azimuth about
/// X. For the hemisphere this is exactly the first half of a `2K` full-sphere
/// lattice.
pub fn sample_equal_area(k: usize, region: Region) -> Result<DirectionSet> {
    if k < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 directions for a phase-center fit, got {k}"
        )));
    }
    region.validate()?;
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let height = 1.0 - region.min_cos();
    let mut unit_vectors = Vec::with_capacity(k);
    for i in 0..k {
        let x = 1.0 - height * (i as f64 + 0.5) / k as f64;
        let r = (1.0 - x * x).max(0.0).sqrt();
        let (s, c) = (golden_angle * i as f64).sin_cos();
        unit_vectors.push(Vector3::new(x, r * c, r * s));
    }
    let w = region.solid_angle() / k as f64;
    Ok(DirectionSet {
        angles: unit_vectors.iter().map(angles_from_direction).collect(),
        weights: vec![w; k],
        unit_vectors,
        region: Some(region),
    })
}

pub fn direction_from_angles(theta: f64, phi: f64) -> Result<Vector3<f64>> {
    if !(-PI / 2.0..=PI / 2.0).contains(&phi) {
        return Err(Error::InvalidArgument(format!(
            "elevation {phi} outside [-π/2, π/2]"
        )));
    }
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Ok(Vector3::new(ct * cp, st * cp, sp))
}

/// Inverse of [`direction_from_angles`], `θ ∈ (−π, π]`.
pub fn angles_from_direction(u: &Vector3<f64>) -> (f64, f64) {
    let theta = u.y.atan2(u.x);
    let phi = u.z.atan2(u.x.hypot(u.y));
    (theta, phi)
}

/// Great-circle angle between two unit vectors, in `[0, π]`.
pub fn angular_distance(u1: &Vector3<f64>, u2: &Vector3<f64>) -> f64 {
    u1.cross(u2).norm().atan2(u1.dot(u2))
}

/// Lambert azimuthal equal-area projection of `u` about `center`.
///
/// For `center = +X` this is `√(2/(1+u_x))·(u_y, u_z)`; other centers use the
/// tangent frame `e1 ∝ ẑ×center`, `e2 = center×e1`.
pub fn lambert_project(u: &Vector3<f64>, center: &Vector3<f64>) -> Result<(f64, f64)> {
    let cos_c = u.dot(center);
    if 1.0 + cos_c <= 1e-9 {
        return Err(Error::InvalidArgument(
            "direction is antipodal to the projection center".into(),
        ));
    }
    let (e1, e2) = tangent_frame(center);
    let scale = (2.0 / (1.0 + cos_c)).sqrt();
    Ok((scale * u.dot(&e1), scale * u.dot(&e2)))
}

fn tangent_frame(center: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let z_cross = Vector3::z().cross(center);
    let e1 = if z_cross.norm() > 1e-12 {
        z_cross.normalize()
    } else {
        Vector3::y()
    };
    (e1, center.cross(&e1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_vec(a: Vector3<f64>, b: Vector3<f64>, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn weights_sum_to_region_solid_angle() {
        let full = sample_equal_area(1000, Region::FullSphere).unwrap();
        let total: f64 = full.weights().iter().sum();
        assert!((total - 4.0 * PI).abs() <= 1e-6 * 4.0 * PI);

        let cap = sample_equal_area(300, Region::Cap { max_angle_rad: 1.0 }).unwrap();
        let total: f64 = cap.weights().iter().sum();
        assert!((total - 2.0 * PI * (1.0 - 1f64.cos())).abs() < 1e-9);
        assert!(cap
            .unit_vectors()
            .iter()
            .all(|u| angular_distance(u, &Vector3::x()) <= 1.0 + 1e-12));
    }

    #[test]
    fn hemisphere_points_face_boresight() {
        let hemi = sample_equal_area(500, Region::UpperHemisphere).unwrap();
        assert_eq!(hemi.len(), 500);
        assert!(hemi.unit_vectors().iter().all(|u| u.x >= 0.0));
        for u in hemi.unit_vectors() {
            assert!((u.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hemisphere_is_filtered_full_lattice() {
        let hemi = sample_equal_area(250, Region::UpperHemisphere).unwrap();
        let full = sample_equal_area(500, Region::FullSphere).unwrap();
        let kept: Vec<_> = full.unit_vectors().iter().filter(|u| u.x > 0.0).collect();
        assert_eq!(kept.len(), 250);
        for (a, b) in hemi.unit_vectors().iter().zip(kept) {
            assert_vec(*a, *b, 1e-12);
        }
    }

    #[test]
    fn nearest_neighbour_spacing_is_uniform() {
        let dirs = sample_equal_area(1000, Region::FullSphere).unwrap();
        let u = dirs.unit_vectors();
        // brute-force pairwise search
        let nn: Vec<f64> = (0..u.len())
            .map(|i| {
                (0..u.len())
                    .filter(|&j| j != i)
                    .map(|j| angular_distance(&u[i], &u[j]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let mean = nn.iter().sum::<f64>() / nn.len() as f64;
        let var = nn.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / nn.len() as f64;
        assert!(
            var.sqrt() / mean <= 0.10,
            "relative std {}",
            var.sqrt() / mean
        );
    }

    #[test]
    fn too_few_directions_rejected() {
        assert!(sample_equal_area(3, Region::FullSphere).is_err());
        assert!(sample_equal_area(10, Region::Cap { max_angle_rad: 0.0 }).is_err());
    }

    #[test]
    fn angle_examples() {
        assert_vec(
            direction_from_angles(0.0, 0.0).unwrap(),
            Vector3::x(),
            1e-15,
        );
        assert_vec(
            direction_from_angles(FRAC_PI_2, 0.0).unwrap(),
            Vector3::y(),
            1e-15,
        );
        assert_vec(
            direction_from_angles(0.0, FRAC_PI_2).unwrap(),
            Vector3::z(),
            1e-15,
        );
        assert!(direction_from_angles(0.0, 1.6).is_err());
        assert!(direction_from_angles(0.0, -1.6).is_err());
    }

    #[test]
    fn stored_angles_round_trip() {
        let dirs = sample_equal_area(777, Region::FullSphere).unwrap();
        for (u, &(t, p)) in dirs.unit_vectors().iter().zip(dirs.angles()) {
            assert_vec(direction_from_angles(t, p).unwrap(), *u, 1e-12);
        }
    }

    #[test]
    fn angular_distance_examples() {
        let u = Vector3::new(0.2, -0.3, 0.5).normalize();
        assert_eq!(angular_distance(&u, &u), 0.0);
        assert!((angular_distance(&Vector3::x(), &Vector3::y()) - FRAC_PI_2).abs() < 1e-15);
        assert!((angular_distance(&Vector3::x(), &-Vector3::x()) - PI).abs() < 1e-15);
    }

    #[test]
    fn lambert_examples() {
        let c = Vector3::x();
        assert_eq!(lambert_project(&c, &c).unwrap(), (0.0, 0.0));
        let (a, b) = lambert_project(&Vector3::y(), &c).unwrap();
        assert!((a - 2f64.sqrt()).abs() < 1e-15 && b.abs() < 1e-15);
        assert!(lambert_project(&-c, &c).is_err());
        let other = Vector3::new(0.0, 0.6, 0.8);
        let (a, b) = lambert_project(&other, &other).unwrap();
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn lambert_preserves_area_element() {
        // |∂(a,b)/∂(θ,φ)| must equal the spherical area element cosφ.
        let center = Vector3::x();
        let h = 1e-6;
        let proj = |t: f64, p: f64| {
            lambert_project(&direction_from_angles(t, p).unwrap(), &center).unwrap()
        };
        let dirs = sample_equal_area(60, Region::Cap { max_angle_rad: 1.4 }).unwrap();
        for &(t, p) in dirs.angles() {
            let (at1, bt1) = proj(t + h, p);
            let (at0, bt0) = proj(t - h, p);
            let (ap1, bp1) = proj(t, p + h);
            let (ap0, bp0) = proj(t, p - h);
            let det = ((at1 - at0) * (bp1 - bp0) - (ap1 - ap0) * (bt1 - bt0)) / (4.0 * h * h);
            assert!(
                (det.abs() - p.cos()).abs() < 1e-6,
                "det {det} cos {}",
                p.cos()
            );
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let dirs = sample_equal_area(8, Region::UpperHemisphere).unwrap();
        let csv = dirs.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,theta_rad,phi_rad,ux,uy,uz,weight_sr"
        );
        assert_eq!(lines.count(), 8);
    }
}
