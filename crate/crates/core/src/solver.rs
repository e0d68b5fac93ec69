//! Equality-constrained SQP with a damped BFGS Hessian and an ℓ1 merit
//! line search, plus the multi-start driver for PCCB.
//!
//! Each iteration solves the local quadratic model
//!
//! ```text
//! min_d  gᵀd + ½ dᵀHd   s.t.  c + A·d = 0
//! ```
//!
//! through its KKT system, then backtracks on `φ(x) = f(x) + μ‖c(x)‖₁`.
//! `H` is updated with Powell's damping so it stays positive definite.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::objective::{to_complex, to_real, ObjectiveBreakdown, PccbProblem};
use crate::phase_center::PhaseCenterResult;
use crate::{Complex64, Error, Result};

/// Constraint violation accepted on entry.
const START_FEASIBILITY_TOL: f64 = 1e-8;
/// Constraint violation allowed for any converged status.
pub const CONVERGED_FEASIBILITY_TOL: f64 = 1e-6;
const ARMIJO: f64 = 1e-4;
const MAX_DEGENERATE_STREAK: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub step_tol: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub merit_penalty_init: f64,
    pub backtrack_factor: f64,
    pub n_restarts: usize,
    pub base_seed: u64,
    /// Scale of the random start; `None` uses `1/√N`.
    pub init_scale: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_tol: 1e-9,
            kkt_tol: 1e-9,
            max_iters: 500,
            merit_penalty_init: 1.0,
            backtrack_factor: 0.5,
            n_restarts: 50,
            base_seed: 0,
            init_scale: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.step_tol > 0.0) {
            return bad(format!("step_tol must be > 0, got {}", self.step_tol));
        }
        if !(self.kkt_tol > 0.0) {
            return bad(format!("kkt_tol must be > 0, got {}", self.kkt_tol));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad(format!(
                "backtrack_factor must be in (0, 1), got {}",
                self.backtrack_factor
            ));
        }
        if !(self.merit_penalty_init > 0.0) {
            return bad(format!(
                "merit_penalty_init must be > 0, got {}",
                self.merit_penalty_init
            ));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if self.n_restarts == 0 {
            return bad("n_restarts must be >= 1".into());
        }
        if let Some(s) = self.init_scale {
            if !(s > 0.0) {
                return bad(format!("init_scale must be > 0, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    ConvergedStepTol,
    ConvergedKkt,
    MaxIters,
    DegenerateAbort,
}

impl Status {
    pub fn is_converged(self) -> bool {
        matches!(self, Status::ConvergedStepTol | Status::ConvergedKkt)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::ConvergedStepTol => "converged_step_tol",
            Status::ConvergedKkt => "converged_kkt",
            Status::MaxIters => "max_iters",
            Status::DegenerateAbort => "degenerate_abort",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged_step_tol" => Ok(Status::ConvergedStepTol),
            "converged_kkt" => Ok(Status::ConvergedKkt),
            "max_iters" => Ok(Status::MaxIters),
            "degenerate_abort" => Ok(Status::DegenerateAbort),
            other => Err(Error::InvalidArgument(format!("unknown status {other:?}"))),
        }
    }
}

/// Result of one SQP run on a generic problem.
#[derive(Debug, Clone)]
pub struct SqpReport {
    pub x: DVector<f64>,
    pub f: f64,
    pub multipliers: DVector<f64>,
    pub status: Status,
    pub iterations: usize,
    pub constraint_inf_norm: f64,
    pub kkt_residual: f64,
    /// Merit value at the start and after every accepted step.
    pub merit_history: Vec<f64>,
}

/// Objective callback failure: the point cannot be evaluated (e.g. a zero
/// beampattern) and the line search should back off.
#[derive(Debug, Clone)]
pub struct Degenerate;

/// Minimize `f(x)` subject to `c(x) = 0`.
///
/// `objective` returns `(f, ∇f)` or [`Degenerate`]; `constraints` returns
/// `(c, ∂c/∂x)` with one row per constraint.
pub fn minimize_equality_constrained<F, C>(
    mut objective: F,
    mut constraints: C,
    x0: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<SqpReport>
where
    F: FnMut(&DVector<f64>) -> std::result::Result<(f64, DVector<f64>), Degenerate>,
    C: FnMut(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0.clone();
    let (mut c, mut a) = constraints(&x);
    let m = c.len();
    if a.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: a.len(),
        });
    }
    let viol0 = inf_norm(&c);
    if viol0 > START_FEASIBILITY_TOL {
        return Err(Error::InfeasibleStart(viol0));
    }
    let (mut f, mut g) = match objective(&x) {
        Ok(v) => v,
        Err(Degenerate) => {
            return Ok(SqpReport {
                x,
                f: f64::NAN,
                multipliers: DVector::zeros(m),
                status: Status::DegenerateAbort,
                iterations: 0,
                constraint_inf_norm: viol0,
                kkt_residual: f64::NAN,
                merit_history: Vec::new(),
            })
        }
    };

    let mut h = DMatrix::<f64>::identity(n, n);
    let mut h_is_identity = true;
    let mut first_update = true;
    let mut mu = cfg.merit_penalty_init;
    let mut lambda = DVector::zeros(m);
    let mut merit_history = vec![f + mu * c.lp_norm(1)];
    let mut degenerate_streak = 0usize;
    let mut status = Status::MaxIters;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let kkt = least_squares_kkt_residual(&g, &a);
        if kkt <= cfg.kkt_tol && inf_norm(&c) <= CONVERGED_FEASIBILITY_TOL {
            status = Status::ConvergedKkt;
            break;
        }
        iterations += 1;

        let (mut d, mut lam) = solve_kkt(&h, &g, &a, &c);
        let mut slope = g.dot(&d) - mu * c.lp_norm(1);
        if (slope >= 0.0 || !slope.is_finite()) && !h_is_identity {
            h = DMatrix::identity(n, n);
            h_is_identity = true;
            first_update = true;
            (d, lam) = solve_kkt(&h, &g, &a, &c);
            slope = g.dot(&d) - mu * c.lp_norm(1);
        }
        let lam_inf = inf_norm(&lam);
        if mu < lam_inf {
            mu = 1.5 * lam_inf + 1e-8;
            slope = g.dot(&d) - mu * c.lp_norm(1);
        }
        let merit = f + mu * c.lp_norm(1);

        let mut alpha = 1.0;
        let mut accepted = None;
        loop {
            if alpha * inf_norm(&d) <= cfg.step_tol {
                break;
            }
            let x_try = &x + &d * alpha;
            match objective(&x_try) {
                Err(Degenerate) => {
                    degenerate_streak += 1;
                    if degenerate_streak >= MAX_DEGENERATE_STREAK {
                        break;
                    }
                }
                Ok((f_try, g_try)) => {
                    degenerate_streak = 0;
                    let (c_try, a_try) = constraints(&x_try);
                    let merit_try = f_try + mu * c_try.lp_norm(1);
                    if merit_try <= merit + ARMIJO * alpha * slope.min(0.0) && merit_try.is_finite()
                    {
                        accepted = Some((x_try, f_try, g_try, c_try, a_try, merit_try));
                        break;
                    }
                }
            }
            alpha *= cfg.backtrack_factor;
        }

        if degenerate_streak >= MAX_DEGENERATE_STREAK {
            status = Status::DegenerateAbort;
            break;
        }
        let Some((x_new, f_new, g_new, c_new, a_new, merit_new)) = accepted else {
            // Line search collapsed below the step tolerance.
            if !h_is_identity {
                h = DMatrix::identity(n, n);
                h_is_identity = true;
                first_update = true;
                continue;
            }
            if inf_norm(&c) <= CONVERGED_FEASIBILITY_TOL {
                status = Status::ConvergedStepTol;
                break;
            }
            continue;
        };

        let s = &x_new - &x;
        let y = (&g_new + a_new.tr_mul(&lam)) - (&g + a.tr_mul(&lam));
        damped_bfgs_update(&mut h, &s, &y, first_update);
        first_update = false;
        h_is_identity = false;

        let step_inf = inf_norm(&s);
        x = x_new;
        f = f_new;
        g = g_new;
        c = c_new;
        a = a_new;
        lambda = lam;
        merit_history.push(merit_new);

        if step_inf <= cfg.step_tol && inf_norm(&c) <= CONVERGED_FEASIBILITY_TOL {
            status = Status::ConvergedStepTol;
            break;
        }
    }

    Ok(SqpReport {
        kkt_residual: least_squares_kkt_residual(&g, &a),
        constraint_inf_norm: inf_norm(&c),
        x,
        f,
        multipliers: lambda,
        status,
        iterations,
        merit_history,
    })
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Solve `[H Aᵀ; A 0]·[d; λ] = [−g; −c]`.
fn solve_kkt(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    c: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let n = g.len();
    let m = c.len();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).copy_from(h);
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-g));
    rhs.rows_mut(n, m).copy_from(&(-c));
    let sol = match k.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|v| v.is_finite()) => s,
        _ => k
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .unwrap_or_else(|_| DVector::zeros(n + m)),
    };
    (sol.rows(0, n).into_owned(), sol.rows(n, m).into_owned())
}

/// `min_λ ‖g + Aᵀλ‖∞` evaluated at the least-squares multipliers.
fn least_squares_kkt_residual(g: &DVector<f64>, a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return inf_norm(g);
    }
    let at = a.transpose();
    let lam = match at.clone().svd(true, true).solve(&(-g), 1e-12) {
        Ok(l) => l,
        Err(_) => return inf_norm(g),
    };
    inf_norm(&(g + at * lam))
}

/// Powell-damped BFGS update of `h`.
fn damped_bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: bool) {
    let sy = s.dot(y);
    if first && sy > 0.0 {
        let scale = y.norm_squared() / sy;
        if scale.is_finite() && scale > 0.0 {
            *h = DMatrix::identity(s.len(), s.len()) * scale;
        }
    }
    let hs = &*h * s;
    let shs = s.dot(&hs);
    if !(shs > 0.0) || !shs.is_finite() {
        return;
    }
    let r = if sy >= 0.2 * shs {
        y.clone()
    } else {
        let theta = 0.8 * shs / (shs - sy);
        y * theta + &hs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if !(sr > 0.0) || !sr.is_finite() {
        return;
    }
    *h -= &hs * hs.transpose() / shs;
    *h += &r * r.transpose() / sr;
}

/// One PCCB restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    /// `[re, im]` per element.
    pub w_opt: Vec<[f64; 2]>,
    pub breakdown: ObjectiveBreakdown,
    pub pco: PhaseCenterResult,
    pub constraint_inf_norm: f64,
    pub status: Status,
    pub iterations: usize,
    pub seed: u64,
}

impl OptimizationOutcome {
    pub fn weights(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.w_opt.len(),
            self.w_opt.iter().map(|p| Complex64::new(p[0], p[1])),
        )
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }
}

fn nan_pco() -> PhaseCenterResult {
    PhaseCenterResult {
        offset: [f64::NAN; 3],
        norm: f64::NAN,
        residual_rms: f64::NAN,
        n_used: 0,
    }
}

/// Solve the PCCB problem from the random feasible start drawn with `seed`.
pub fn solve_pccb(
    problem: &PccbProblem,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<OptimizationOutcome> {
    let scale = cfg
        .init_scale
        .unwrap_or_else(|| 1.0 / (problem.n_elements() as f64).sqrt());
    let w0 = problem.feasible_init(seed, scale)?;
    solve_pccb_from(problem, &w0, seed, cfg)
}

/// Solve the PCCB problem from a given feasible start.
pub fn solve_pccb_from(
    problem: &PccbProblem,
    w0: &DVector<Complex64>,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<OptimizationOutcome> {
    let report = minimize_equality_constrained(
        |x| match problem.total_objective_real(x) {
            Ok((b, g)) if b.j_total.is_finite() => Ok((b.j_total, g)),
            _ => Err(Degenerate),
        },
        |x| {
            problem
                .constraint_residuals(&to_complex(x))
                .expect("constraint dimensions fixed by problem")
        },
        &to_real(w0),
        cfg,
    )?;
    let w = to_complex(&report.x);
    let breakdown = problem
        .total_objective(&w)
        .map(|(b, _)| b)
        .unwrap_or(ObjectiveBreakdown {
            j_total: f64::NAN,
            j_pc: f64::NAN,
            j_e: f64::NAN,
            j_b: f64::NAN,
        });
    let pco = problem.pco(&w).unwrap_or_else(|_| nan_pco());
    Ok(OptimizationOutcome {
        w_opt: w.iter().map(|c| [c.re, c.im]).collect(),
        breakdown,
        pco,
        constraint_inf_norm: report.constraint_inf_norm,
        status: report.status,
        iterations: report.iterations,
        seed,
    })
}

#[derive(Debug, Clone)]
pub struct MultiStartResult {
    pub best: OptimizationOutcome,
    /// Sorted by seed.
    pub all: Vec<OptimizationOutcome>,
}

/// Run `cfg.n_restarts` solves with seeds `base_seed + r` (in parallel on the
/// current rayon pool) and pick the lowest PCO norm among converged runs.
pub fn multi_start(problem: &PccbProblem, cfg: &SolverConfig) -> Result<MultiStartResult> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.n_restarts as u64)
        .map(|r| cfg.base_seed.wrapping_add(r))
        .collect();
    let mut all = seeds
        .par_iter()
        .map(|&seed| solve_pccb(problem, seed, cfg))
        .collect::<Result<Vec<_>>>()?;
    all.sort_by_key(|o| o.seed);
    let best = select_best(&all)?.clone();
    Ok(MultiStartResult { best, all })
}

/// Lowest PCO norm among converged outcomes (ties: lowest seed); if none
/// converged, lowest total objective among non-degenerate ones.
pub fn select_best(outcomes: &[OptimizationOutcome]) -> Result<&OptimizationOutcome> {
    if let Some(b) = min_by_key(outcomes.iter().filter(|o| o.status.is_converged()), |o| {
        o.pco.norm
    }) {
        return Ok(b);
    }
    min_by_key(
        outcomes
            .iter()
            .filter(|o| o.status != Status::DegenerateAbort),
        |o| o.breakdown.j_total,
    )
    .ok_or(Error::AllRestartsDegenerate(outcomes.len()))
}

fn min_by_key<'a>(
    it: impl Iterator<Item = &'a OptimizationOutcome>,
    key: impl Fn(&OptimizationOutcome) -> f64,
) -> Option<&'a OptimizationOutcome> {
    let mut best: Option<&OptimizationOutcome> = None;
    for o in it {
        let k = key(o);
        if !k.is_finite() {
            continue;
        }
        best = match best {
            Some(b) if key(b) < k || (key(b) == k && b.seed <= o.seed) => Some(b),
            _ => Some(o),
        };
    }
    best
}
