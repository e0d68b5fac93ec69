//! CBF vs PCCB comparison over a set of steering directions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{steering_matrix, SteeringMatrix};
use crate::objective::PccbProblem;
use crate::solver::{multi_start, OptimizationOutcome, Status};
use crate::sphere::{direction_from_angles, DirectionSet};
use crate::{Complex64, Error, Result};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cbf,
    Pccb,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cbf => "cbf",
            Method::Pccb => "pccb",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cbf" => Ok(Method::Cbf),
            "pccb" => Ok(Method::Pccb),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// One row of `records.csv`. CBF rows carry no seed and no solver status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub dir_idx: usize,
    pub theta_rad: f64,
    pub phi_rad: f64,
    pub method: Method,
    pub seed: Option<u64>,
    pub pco_m: [f64; 3],
    pub pco_norm_m: f64,
    pub j_pc: f64,
    pub j_e: f64,
    pub j_b: f64,
    pub gain_look_abs: f64,
    /// NaN when no nulls are configured.
    pub gain_null_abs_max: f64,
    pub status: Option<Status>,
    pub iterations: usize,
}

impl ComparisonRecord {
    /// Whether the record counts towards statistics: CBF rows always, PCCB
    /// rows when the solver converged.
    pub fn is_converged(&self) -> bool {
        match self.method {
            Method::Cbf => true,
            Method::Pccb => self.status.is_some_and(Status::is_converged),
        }
    }

    fn sort_key(&self) -> (usize, Method, u64) {
        (self.dir_idx, self.method, self.seed.unwrap_or(0))
    }
}

/// Sort into export order: direction, then CBF before PCCB, then seed.
pub fn sort_records(records: &mut [ComparisonRecord]) {
    records.sort_by_key(|r| r.sort_key());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    CbfOnly,
    Full,
}

#[derive(Debug, Clone)]
pub struct DirectionRun {
    pub dir_idx: usize,
    pub theta_rad: f64,
    pub phi_rad: f64,
    pub cbf_weights: DVector<Complex64>,
    pub best_pccb: Option<OptimizationOutcome>,
    pub outcomes: Vec<OptimizationOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionFailure {
    pub dir_idx: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ComparisonRun {
    /// Canonically sorted.
    pub records: Vec<ComparisonRecord>,
    pub directions: Vec<DirectionRun>,
    pub failures: Vec<DirectionFailure>,
    pub steering: SteeringMatrix,
}

impl ComparisonRun {
    /// Every restart of every direction, in record order.
    pub fn outcomes(&self) -> impl Iterator<Item = (usize, &OptimizationOutcome)> {
        self.directions
            .iter()
            .flat_map(|d| d.outcomes.iter().map(move |o| (d.dir_idx, o)))
    }
}

/// `|w^H c|` for the look column and the largest `|w^H c|` over null columns.
fn gains(problem: &PccbProblem, w: &DVector<Complex64>) -> (f64, f64) {
    let c = problem.constraint_matrix();
    let n_look = problem.look_dirs().len();
    let resp: Vec<f64> = (0..c.ncols())
        .map(|j| w.dotc(&c.column(j)).norm())
        .collect();
    let null_max = resp[n_look..].iter().copied().fold(f64::NAN, f64::max);
    (resp[0], null_max)
}

fn cbf_record(
    problem: &PccbProblem,
    dir_idx: usize,
    theta: f64,
    phi: f64,
    w: &DVector<Complex64>,
) -> Result<ComparisonRecord> {
    let pco = problem.pco(w)?;
    let (b, _) = problem.total_objective(w)?;
    let (gain_look_abs, gain_null_abs_max) = gains(problem, w);
    Ok(ComparisonRecord {
        dir_idx,
        theta_rad: theta,
        phi_rad: phi,
        method: Method::Cbf,
        seed: None,
        pco_m: pco.offset,
        pco_norm_m: pco.norm,
        j_pc: b.j_pc,
        j_e: b.j_e,
        j_b: b.j_b,
        gain_look_abs,
        gain_null_abs_max,
        status: None,
        iterations: 0,
    })
}

fn pccb_record(
    problem: &PccbProblem,
    dir_idx: usize,
    theta: f64,
    phi: f64,
    o: &OptimizationOutcome,
) -> ComparisonRecord {
    let (gain_look_abs, gain_null_abs_max) = gains(problem, &o.weights());
    ComparisonRecord {
        dir_idx,
        theta_rad: theta,
        phi_rad: phi,
        method: Method::Pccb,
        seed: Some(o.seed),
        pco_m: o.pco.offset,
        pco_norm_m: o.pco.norm,
        j_pc: o.breakdown.j_pc,
        j_e: o.breakdown.j_e,
        j_b: o.breakdown.j_b,
        gain_look_abs,
        gain_null_abs_max,
        status: Some(o.status),
        iterations: o.iterations,
    }
}

struct DirectionResult {
    run: Option<DirectionRun>,
    records: Vec<ComparisonRecord>,
    failures: Vec<DirectionFailure>,
}

fn run_direction(
    cfg: &ExperimentConfig,
    ctx: &Context,
    dir_idx: usize,
    theta: f64,
    phi: f64,
    mode: RunMode,
) -> DirectionResult {
    let mut out = DirectionResult {
        run: None,
        records: Vec::new(),
        failures: Vec::new(),
    };
    let fail = |e: Error| DirectionFailure {
        dir_idx,
        message: e.to_string(),
    };
    let problem = match direction_from_angles(theta, phi).and_then(|look| {
        PccbProblem::new(
            &ctx.geom,
            ctx.wavefield,
            ctx.dirs.clone(),
            &cfg.element,
            &[look],
            &ctx.nulls,
            cfg.regularization(),
        )
    }) {
        Ok(p) => p,
        Err(e) => {
            out.failures.push(fail(e));
            return out;
        }
    };
    let cbf_weights = problem.cbf_weights();
    match cbf_record(&problem, dir_idx, theta, phi, &cbf_weights) {
        Ok(r) => out.records.push(r),
        Err(e) => out.failures.push(fail(e)),
    }
    let mut run = DirectionRun {
        dir_idx,
        theta_rad: theta,
        phi_rad: phi,
        cbf_weights,
        best_pccb: None,
        outcomes: Vec::new(),
    };
    if mode == RunMode::Full {
        match multi_start(&problem, &cfg.solver) {
            Ok(ms) => {
                out.records.extend(
                    ms.all
                        .iter()
                        .map(|o| pccb_record(&problem, dir_idx, theta, phi, o)),
                );
                run.best_pccb = Some(ms.best);
                run.outcomes = ms.all;
            }
            Err(e) => out.failures.push(fail(e)),
        }
    }
    out.run = Some(run);
    out
}

struct Context {
    geom: crate::array::ArrayGeometry,
    wavefield: crate::array::Wavefield,
    dirs: Arc<DirectionSet>,
    nulls: Vec<nalgebra::Vector3<f64>>,
}

/// Run CBF (and, in [`RunMode::Full`], multi-start PCCB) for every configured
/// steering direction. Directions run on the current rayon pool. A direction
/// that fails is listed in [`ComparisonRun::failures`] and the rest continue.
pub fn run_comparison(cfg: &ExperimentConfig, mode: RunMode) -> Result<ComparisonRun> {
    cfg.validate()?;
    let ctx = Context {
        geom: cfg.geometry()?,
        wavefield: cfg.wavefield()?,
        dirs: cfg.direction_set()?,
        nulls: cfg.null_directions()?,
    };
    let steering = steering_matrix(
        &ctx.geom,
        ctx.wavefield.wavelength(),
        ctx.dirs.clone(),
        &cfg.element,
    )?;
    let looks = cfg.steering_directions()?;
    let results: Vec<DirectionResult> = looks
        .par_iter()
        .enumerate()
        .map(|(i, &(t, p))| run_direction(cfg, &ctx, i, t, p, mode))
        .collect();

    let mut records = Vec::new();
    let mut directions = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        records.extend(r.records);
        directions.extend(r.run);
        failures.extend(r.failures);
    }
    sort_records(&mut records);
    directions.sort_by_key(|d| d.dir_idx);
    failures.sort_by_key(|f| f.dir_idx);
    Ok(ComparisonRun {
        records,
        directions,
        failures,
        steering,
    })
}
