//! Array geometry, element response, steering vectors and beampatterns.
//!
//! Directions use the array frame: boresight along +X, the array itself in
//! the YZ plane. A plane wave from unit direction `u` induces the phase
//! `2π/λ · u·p` on the element at `p`, so the steering vector entry for
//! element `n` is `exp(+i·2π/λ·u·p_n)`. For the planar (x = 0) arrays used
//! throughout this reduces to `sinθ·cosφ·p_y + sinφ·p_z`.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::sphere::{direction_from_angles, DirectionSet};
use crate::{Complex64, Error, Result, SPEED_OF_LIGHT};

/// Sensor positions in meters, one row per element.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<Vector3<f64>>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument(
                "array needs at least one element".into(),
            ));
        }
        if let Some(i) = positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "element {i} has a non-finite coordinate"
            )));
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.positions.iter().sum::<Vector3<f64>>() / self.positions.len() as f64
    }

    /// Same array with every element shifted by `offset`.
    pub fn translated(&self, offset: &Vector3<f64>) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + offset).collect(),
        }
    }

    /// Parse a whitespace separated `x y z` table (meters). Blank lines and
    /// anything after `#` are ignored.
    pub fn parse_table(text: &str, origin: &Path) -> Result<Self> {
        let mut positions = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: lineno + 1,
                msg,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(parse_err(format!(
                    "expected 3 columns (x y z), found {}",
                    fields.len()
                )));
            }
            let mut xyz = [0.0; 3];
            for (slot, field) in xyz.iter_mut().zip(&fields) {
                *slot = field
                    .parse::<f64>()
                    .map_err(|e| parse_err(format!("bad number {field:?}: {e}")))?;
            }
            positions.push(Vector3::from(xyz));
        }
        Self::new(positions).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: 0,
            msg: e.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_table(&text, path)
    }
}

/// Uniform `n_y × n_z` grid in the YZ plane, centered on the origin.
///
/// Rows are z-major: element `iz * n_y + iy`.
pub fn build_grid_array(n_y: usize, n_z: usize, spacing: f64) -> Result<ArrayGeometry> {
    if n_y == 0 || n_z == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid counts must be >= 1, got {n_y}x{n_z}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid spacing must be positive, got {spacing}"
        )));
    }
    let y0 = 0.5 * (n_y - 1) as f64;
    let z0 = 0.5 * (n_z - 1) as f64;
    let mut positions = Vec::with_capacity(n_y * n_z);
    for iz in 0..n_z {
        for iy in 0..n_y {
            positions.push(Vector3::new(
                0.0,
                (iy as f64 - y0) * spacing,
                (iz as f64 - z0) * spacing,
            ));
        }
    }
    ArrayGeometry::new(positions)
}

/// Monochromatic plane wave.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavefield {
    frequency_hz: f64,
    wavelength_m: f64,
}

impl Wavefield {
    pub fn from_frequency(frequency_hz: f64) -> Result<Self> {
        if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "frequency must be positive, got {frequency_hz}"
            )));
        }
        Ok(Self {
            frequency_hz,
            wavelength_m: SPEED_OF_LIGHT / frequency_hz,
        })
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength_m
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_m
    }
}

/// Per-element amplitude response. All elements share one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementModel {
    Isotropic,
    /// `max(0, u_x)^exponent`: a patch-like element facing +X with no back lobe.
    CosinePower {
        exponent: f64,
    },
}

impl Default for ElementModel {
    fn default() -> Self {
        ElementModel::CosinePower { exponent: 1.0 }
    }
}

impl ElementModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ElementModel::Isotropic => Ok(()),
            ElementModel::CosinePower { exponent } if exponent >= 0.0 && exponent.is_finite() => {
                Ok(())
            }
            ElementModel::CosinePower { exponent } => Err(Error::InvalidArgument(format!(
                "cosine_power exponent must be >= 0, got {exponent}"
            ))),
        }
    }
}

/// Amplitude gain of one element towards unit direction `u`.
pub fn element_gain(u: &Vector3<f64>, elem: &ElementModel) -> f64 {
    match *elem {
        ElementModel::Isotropic => 1.0,
        ElementModel::CosinePower { exponent } => {
            if u.x < 0.0 {
                0.0
            } else {
                u.x.powf(exponent)
            }
        }
    }
}

/// Steering vector towards unit direction `u`, isotropic elements.
pub fn steering_vector_unit(
    geom: &ArrayGeometry,
    wavelength: f64,
    u: &Vector3<f64>,
) -> DVector<Complex64> {
    let k = 2.0 * PI / wavelength;
    DVector::from_iterator(
        geom.len(),
        geom.positions()
            .iter()
            .map(|p| Complex64::from_polar(1.0, k * u.dot(p))),
    )
}

/// Steering vector for azimuth `theta` and elevation `phi` (radians).
pub fn steering_vector(
    geom: &ArrayGeometry,
    wavelength: f64,
    theta: f64,
    phi: f64,
) -> Result<DVector<Complex64>> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let u = direction_from_angles(theta, phi)?;
    Ok(steering_vector_unit(geom, wavelength, &u))
}

/// Element-weighted steering vector: the column a direction would occupy in
/// a [`SteeringMatrix`].
pub fn element_steering_vector(
    geom: &ArrayGeometry,
    wavelength: f64,
    u: &Vector3<f64>,
    elem: &ElementModel,
) -> DVector<Complex64> {
    steering_vector_unit(geom, wavelength, u) * Complex64::new(element_gain(u, elem), 0.0)
}

/// N×K matrix of element-weighted steering vectors over a direction set.
#[derive(Debug, Clone)]
pub struct SteeringMatrix {
    entries: DMatrix<Complex64>,
    directions: Arc<DirectionSet>,
}

impl SteeringMatrix {
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.directions
    }

    pub fn n_elements(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_directions(&self) -> usize {
        self.entries.ncols()
    }
}

pub fn steering_matrix(
    geom: &ArrayGeometry,
    wavelength: f64,
    dirs: Arc<DirectionSet>,
    elem: &ElementModel,
) -> Result<SteeringMatrix> {
    if dirs.is_empty() {
        return Err(Error::InvalidArgument("direction set is empty".into()));
    }
    if !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let mut entries = DMatrix::zeros(geom.len(), dirs.len());
    for (k, u) in dirs.unit_vectors().iter().enumerate() {
        entries.set_column(k, &element_steering_vector(geom, wavelength, u, elem));
    }
    Ok(SteeringMatrix {
        entries,
        directions: dirs,
    })
}

/// Complex array response `w^H·V` over the sampled directions.
#[derive(Debug, Clone)]
pub struct Beampattern {
    values: DVector<Complex64>,
    directions: Arc<DirectionSet>,
}

impl Beampattern {
    pub fn new(values: DVector<Complex64>, directions: Arc<DirectionSet>) -> Result<Self> {
        if values.len() != directions.len() {
            return Err(Error::DimensionMismatch {
                expected: directions.len(),
                got: values.len(),
            });
        }
        Ok(Self { values, directions })
    }

    pub fn values(&self) -> &DVector<Complex64> {
        &self.values
    }

    pub fn directions(&self) -> &Arc<DirectionSet> {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }
}

/// `values[k] = Σ_n conj(w[n])·V[n,k]`.
pub fn beampattern_values(w: &DVector<Complex64>, v: &DMatrix<Complex64>) -> DVector<Complex64> {
    v.tr_mul(&w.conjugate())
}

pub fn beampattern(w: &DVector<Complex64>, v: &SteeringMatrix) -> Result<Beampattern> {
    if w.len() != v.n_elements() {
        return Err(Error::DimensionMismatch {
            expected: v.n_elements(),
            got: w.len(),
        });
    }
    Beampattern::new(beampattern_values(w, v.entries()), v.directions.clone())
}

/// Array response `w^H·c` to a single steering column.
pub fn response(w: &DVector<Complex64>, column: &DVector<Complex64>) -> Complex64 {
    w.dotc(column)
}
