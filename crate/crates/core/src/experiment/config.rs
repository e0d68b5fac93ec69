//! Experiment configuration, read from TOML.
//!
//! Every field has a default reproducing the reference setup: a 3×3 grid at
//! 7 cm, GNSS L1, cosine patch elements, 500 hemisphere samples, `λe = 10`,
//! `λb = 0.1`, 50 restarts at a step tolerance of 1e-9. Unknown keys are
//! rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::array::{build_grid_array, ArrayGeometry, ElementModel, Wavefield};
use crate::objective::{Regularization, DEFAULT_LAMBDA_B, DEFAULT_LAMBDA_E};
use crate::phase_center::DEFAULT_MASK_THRESHOLD;
use crate::solver::SolverConfig;
use crate::sphere::{direction_from_angles, sample_equal_area, DirectionSet, Region};
use crate::{Error, Result, GNSS_L1_HZ};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArraySpec {
    Grid {
        n_y: usize,
        n_z: usize,
        spacing_m: f64,
    },
    File {
        path: PathBuf,
    },
}

impl Default for ArraySpec {
    fn default() -> Self {
        ArraySpec::Grid {
            n_y: 3,
            n_z: 3,
            spacing_m: 0.07,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    FullSphere,
    UpperHemisphere,
    Cap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub k: usize,
    pub region: RegionKind,
    /// Half-angle of the cap around boresight; only read when `region = "cap"`.
    pub cap_max_angle_deg: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            k: 500,
            region: RegionKind::UpperHemisphere,
            cap_max_angle_deg: 90.0,
        }
    }
}

impl SamplingConfig {
    pub fn region(&self) -> Region {
        match self.region {
            RegionKind::FullSphere => Region::FullSphere,
            RegionKind::UpperHemisphere => Region::UpperHemisphere,
            RegionKind::Cap => Region::Cap {
                max_angle_rad: self.cap_max_angle_deg.to_radians(),
            },
        }
    }
}

/// A direction given as `[azimuth_deg, elevation_deg]`.
pub type AnglePairDeg = [f64; 2];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SteeringSpec {
    /// Boresight plus rings at 10°, 22.5°, 37.5° and 52.5° off boresight
    /// holding 6, 8, 10 and 12 directions (37 in total).
    #[default]
    SkyGrid,
    /// Named direction set, see [`preset_directions`].
    Preset {
        name: String,
    },
    List {
        directions: Vec<AnglePairDeg>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub hist_bin_width_m: f64,
    /// Steering-range bin edges, degrees off boresight.
    pub sr_edges_deg: Vec<f64>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            hist_bin_width_m: 0.002,
            sr_edges_deg: vec![0.0, 15.0, 30.0, 45.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArraySpec,
    pub frequency_hz: f64,
    pub element: ElementModel,
    pub sampling: SamplingConfig,
    pub steering: SteeringSpec,
    pub nulls: Vec<AnglePairDeg>,
    pub lambda_e: f64,
    pub lambda_b: f64,
    pub mask_threshold: f64,
    pub solver: SolverConfig,
    pub stats: StatsConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            array: ArraySpec::default(),
            frequency_hz: GNSS_L1_HZ,
            element: ElementModel::default(),
            sampling: SamplingConfig::default(),
            steering: SteeringSpec::default(),
            nulls: Vec::new(),
            lambda_e: DEFAULT_LAMBDA_E,
            lambda_b: DEFAULT_LAMBDA_B,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            solver: SolverConfig::default(),
            stats: StatsConfig::default(),
            output_dir: PathBuf::from("pccb-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if let ArraySpec::Grid {
            n_y,
            n_z,
            spacing_m,
        } = self.array
        {
            if n_y == 0 || n_z == 0 || !(spacing_m > 0.0) {
                return bad(format!(
                    "array grid {n_y}x{n_z} at {spacing_m} m is invalid"
                ));
            }
        }
        if !(self.frequency_hz > 0.0 && self.frequency_hz.is_finite()) {
            return bad(format!(
                "frequency_hz must be positive, got {}",
                self.frequency_hz
            ));
        }
        self.element
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.sampling.k < 4 {
            return bad(format!("sampling.k must be >= 4, got {}", self.sampling.k));
        }
        if self.sampling.region == RegionKind::Cap
            && !(self.sampling.cap_max_angle_deg > 0.0 && self.sampling.cap_max_angle_deg <= 180.0)
        {
            return bad(format!(
                "sampling.cap_max_angle_deg must be in (0, 180], got {}",
                self.sampling.cap_max_angle_deg
            ));
        }
        if !(self.lambda_e >= 0.0 && self.lambda_b >= 0.0) {
            return bad("lambda_e and lambda_b must be >= 0".into());
        }
        if !(self.mask_threshold >= 0.0 && self.mask_threshold < 1.0) {
            return bad(format!(
                "mask_threshold must be in [0, 1), got {}",
                self.mask_threshold
            ));
        }
        self.solver
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        if !(self.stats.hist_bin_width_m > 0.0) {
            return bad("stats.hist_bin_width_m must be > 0".into());
        }
        let edges = &self.stats.sr_edges_deg;
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("stats.sr_edges_deg must hold at least two increasing edges".into());
        }
        for pair in self.nulls.iter() {
            check_pair(pair).map_err(Error::Config)?;
        }
        match &self.steering {
            SteeringSpec::SkyGrid => {}
            SteeringSpec::Preset { name } => {
                preset_directions(name)?;
            }
            SteeringSpec::List { directions } => {
                if directions.is_empty() {
                    return bad("steering list is empty".into());
                }
                for pair in directions {
                    check_pair(pair).map_err(Error::Config)?;
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        match &self.array {
            ArraySpec::Grid {
                n_y,
                n_z,
                spacing_m,
            } => build_grid_array(*n_y, *n_z, *spacing_m),
            ArraySpec::File { path } => ArrayGeometry::from_file(path),
        }
    }

    pub fn wavefield(&self) -> Result<Wavefield> {
        Wavefield::from_frequency(self.frequency_hz)
    }

    pub fn direction_set(&self) -> Result<Arc<DirectionSet>> {
        Ok(Arc::new(sample_equal_area(
            self.sampling.k,
            self.sampling.region(),
        )?))
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            lambda_e: self.lambda_e,
            lambda_b: self.lambda_b,
            mask_threshold: self.mask_threshold,
        }
    }

    /// Steering directions as `(θ, φ)` radians.
    pub fn steering_directions(&self) -> Result<Vec<(f64, f64)>> {
        let deg = match &self.steering {
            SteeringSpec::SkyGrid => sky_grid_deg(),
            SteeringSpec::Preset { name } => preset_directions(name)?,
            SteeringSpec::List { directions } => directions.clone(),
        };
        Ok(deg
            .iter()
            .map(|p| (p[0].to_radians(), p[1].to_radians()))
            .collect())
    }

    pub fn null_directions(&self) -> Result<Vec<Vector3<f64>>> {
        self.nulls
            .iter()
            .map(|p| direction_from_angles(p[0].to_radians(), p[1].to_radians()))
            .collect()
    }
}

fn check_pair(pair: &AnglePairDeg) -> std::result::Result<(), String> {
    if !pair.iter().all(|x| x.is_finite()) || pair[1].abs() > 90.0 {
        return Err(format!(
            "direction {pair:?} is not a valid [azimuth_deg, elevation_deg] pair"
        ));
    }
    Ok(())
}

/// Rings around boresight: `(off-boresight angle, count)`.
const SKY_GRID_RINGS: [(f64, usize); 4] = [(10.0, 6), (22.5, 8), (37.5, 10), (52.5, 12)];

/// Default steering set: boresight plus [`SKY_GRID_RINGS`], as
/// `[azimuth_deg, elevation_deg]`.
pub fn sky_grid_deg() -> Vec<AnglePairDeg> {
    let mut out = vec![[0.0, 0.0]];
    for (ring, &(off_deg, count)) in SKY_GRID_RINGS.iter().enumerate() {
        let off = off_deg.to_radians();
        // stagger alternate rings by half a step
        let offset = if ring % 2 == 1 {
            PI / count as f64
        } else {
            0.0
        };
        for j in 0..count {
            let psi = offset + 2.0 * PI * j as f64 / count as f64;
            let u = Vector3::new(off.cos(), off.sin() * psi.cos(), off.sin() * psi.sin());
            let (t, p) = crate::sphere::angles_from_direction(&u);
            out.push([t.to_degrees(), p.to_degrees()]);
        }
    }
    out
}

/// Named steering sets. `quad` holds four off-boresight directions used for
/// pattern comparisons; `ci` is a small set for quick checks.
pub fn preset_directions(name: &str) -> Result<Vec<AnglePairDeg>> {
    match name {
        "quad" => Ok(vec![
            [-30.0, 10.0],
            [20.0, 25.0],
            [40.0, -20.0],
            [-10.0, -45.0],
        ]),
        "ci" => Ok(vec![
            [25.0, 0.0],
            [-20.0, 30.0],
            [35.0, -25.0],
            [0.0, -45.0],
        ]),
        "boresight" => Ok(vec![[0.0, 0.0]]),
        other => Err(Error::Config(format!(
            "unknown steering preset {other:?} (known: quad, ci, boresight)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::angular_distance;

    #[test]
    fn defaults_are_reference_setup() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.frequency_hz, 1_575_420_000.0);
        assert_eq!(
            cfg.array,
            ArraySpec::Grid {
                n_y: 3,
                n_z: 3,
                spacing_m: 0.07
            }
        );
        assert_eq!(cfg.lambda_e, 10.0);
        assert_eq!(cfg.lambda_b, 0.1);
        assert_eq!(cfg.solver.step_tol, 1e-9);
        assert_eq!(cfg.solver.n_restarts, 50);
        assert_eq!(cfg.sampling.k, 500);
        assert_eq!(cfg.element, ElementModel::CosinePower { exponent: 1.0 });
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_file_gives_defaults_and_echo_round_trips() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let echo = cfg.to_toml_string();
        assert_eq!(ExperimentConfig::from_toml_str(&echo).unwrap(), cfg);
    }

    #[test]
    fn parses_overrides() {
        let text = r#"
            lambda_e = 1.0
            nulls = [[40.0, 10.0]]
            [array]
            kind = "grid"
            n_y = 2
            n_z = 4
            spacing_m = 0.05
            [element]
            kind = "isotropic"
            [sampling]
            k = 200
            region = "cap"
            cap_max_angle_deg = 60.0
            [steering]
            kind = "list"
            directions = [[10.0, 5.0], [0.0, -20.0]]
            [solver]
            n_restarts = 5
            base_seed = 42
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.lambda_e, 1.0);
        assert_eq!(cfg.element, ElementModel::Isotropic);
        assert_eq!(cfg.solver.n_restarts, 5);
        assert_eq!(cfg.solver.step_tol, 1e-9);
        assert_eq!(cfg.steering_directions().unwrap().len(), 2);
        assert_eq!(cfg.null_directions().unwrap().len(), 1);
        assert!(matches!(cfg.sampling.region(), Region::Cap { .. }));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("lambda_x = 1.0").is_err());
        assert!(ExperimentConfig::from_toml_str("[solver]\nstep_tolerance = 1e-9").is_err());
        assert!(ExperimentConfig::from_toml_str(
            "[array]\nkind = \"grid\"\nn_y = 3\nn_z = 3\nspacing_m = 0.07\nfoo = 1"
        )
        .is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "frequency_hz = -1.0",
            "[sampling]\nk = 3",
            "[solver]\nbacktrack_factor = 1.5",
            "[steering]\nkind = \"preset\"\nname = \"nope\"",
            "nulls = [[0.0, 95.0]]",
            "[stats]\nsr_edges_deg = [0.0, 30.0, 15.0]",
            "mask_threshold = 1.0",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn sky_grid_layout() {
        let grid = sky_grid_deg();
        assert_eq!(grid.len(), 37);
        let mut per_ring = [0usize; 5];
        for p in &grid {
            let u = direction_from_angles(p[0].to_radians(), p[1].to_radians()).unwrap();
            let off = angular_distance(&u, &Vector3::x()).to_degrees();
            let idx = [0.0, 10.0, 22.5, 37.5, 52.5]
                .iter()
                .position(|r| (off - r).abs() < 1e-9)
                .expect("direction on a ring");
            per_ring[idx] += 1;
        }
        assert_eq!(per_ring, [1, 6, 8, 10, 12]);
    }
}
