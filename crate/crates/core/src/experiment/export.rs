//! File outputs. Floats are written with Rust's shortest round-trip
//! formatting, so every value parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use serde::Serialize;

use crate::array::{beampattern_values, SteeringMatrix};
use crate::sphere::lambert_project;
use crate::{Complex64, Error, Result};

use super::config::ExperimentConfig;
use super::run::{ComparisonRecord, ComparisonRun, Method};
use super::stats::StatsBundle;

pub const RECORDS_HEADER: &str = "dir_idx,theta_rad,phi_rad,method,seed,pco_x_m,pco_y_m,pco_z_m,pco_norm_m,j_pc,j_e,j_b,gain_look_abs,gain_null_abs_max,status,iterations";
pub const BEAMPATTERN_HEADER: &str = "k,theta,phi,lambert_a,lambert_b,re,im,abs,phase";

/// Status cell of CBF rows, which have no solver run.
const CLOSED_FORM: &str = "closed_form";

pub fn records_to_csv(records: &[ComparisonRecord]) -> String {
    let mut out = String::with_capacity(200 * (records.len() + 1));
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        let status = r.status.map_or(CLOSED_FORM, |s| s.as_str());
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.dir_idx,
            r.theta_rad,
            r.phi_rad,
            r.method,
            seed,
            r.pco_m[0],
            r.pco_m[1],
            r.pco_m[2],
            r.pco_norm_m,
            r.j_pc,
            r.j_e,
            r.j_b,
            r.gain_look_abs,
            r.gain_null_abs_max,
            status,
            r.iterations
        )
        .expect("writing to a String");
    }
    out
}

/// Parse the output of [`records_to_csv`]. `origin` only labels errors.
pub fn parse_records_csv(text: &str, origin: &Path) -> Result<Vec<ComparisonRecord>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == RECORDS_HEADER => {}
        _ => return Err(err(1, "missing or unexpected header".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != 16 {
            return Err(err(
                ln,
                format!("expected 16 columns, found {}", cells.len()),
            ));
        }
        let f = |j: usize| -> Result<f64> {
            cells[j]
                .parse::<f64>()
                .map_err(|e| err(ln, format!("column {j}: {e}: {:?}", cells[j])))
        };
        let u = |j: usize| -> Result<usize> {
            cells[j]
                .parse::<usize>()
                .map_err(|e| err(ln, format!("column {j}: {e}: {:?}", cells[j])))
        };
        let method: Method = cells[3]
            .parse()
            .map_err(|e: Error| err(ln, e.to_string()))?;
        let seed = match cells[4] {
            "" => None,
            s => Some(
                s.parse::<u64>()
                    .map_err(|e| err(ln, format!("seed: {e}")))?,
            ),
        };
        let status = match cells[14] {
            CLOSED_FORM => None,
            s => Some(s.parse().map_err(|e: Error| err(ln, e.to_string()))?),
        };
        out.push(ComparisonRecord {
            dir_idx: u(0)?,
            theta_rad: f(1)?,
            phi_rad: f(2)?,
            method,
            seed,
            pco_m: [f(5)?, f(6)?, f(7)?],
            pco_norm_m: f(8)?,
            j_pc: f(9)?,
            j_e: f(10)?,
            j_b: f(11)?,
            gain_look_abs: f(12)?,
            gain_null_abs_max: f(13)?,
            status,
            iterations: u(15)?,
        });
    }
    Ok(out)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ComparisonRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records_csv(&text, path)
}

/// Pattern of `w` over the sampled directions, with Lambert coordinates
/// centered on boresight.
pub fn beampattern_csv(w: &DVector<Complex64>, steering: &SteeringMatrix) -> String {
    let dirs = steering.directions();
    let b = beampattern_values(w, steering.entries());
    let mut out = String::new();
    out.push_str(BEAMPATTERN_HEADER);
    out.push('\n');
    for (k, (u, &(theta, phi))) in dirs.unit_vectors().iter().zip(dirs.angles()).enumerate() {
        let (la, lb) = lambert_project(u, &Vector3::x()).unwrap_or((f64::NAN, f64::NAN));
        let v = b[k];
        writeln!(
            out,
            "{k},{theta},{phi},{la},{lb},{},{},{},{}",
            v.re,
            v.im,
            v.norm(),
            v.arg()
        )
        .expect("writing to a String");
    }
    out
}

#[derive(Serialize)]
struct OutcomeLine<'a> {
    dir_idx: usize,
    #[serde(flatten)]
    outcome: &'a crate::solver::OptimizationOutcome,
}

/// One JSON object per restart, tagged with its direction index.
pub fn outcomes_jsonl(run: &ComparisonRun) -> String {
    let mut out = String::new();
    for (dir_idx, outcome) in run.outcomes() {
        out.push_str(
            &serde_json::to_string(&OutcomeLine { dir_idx, outcome }).expect("outcome serializes"),
        );
        out.push('\n');
    }
    out
}

pub fn stats_json(bundle: &StatsBundle) -> String {
    let mut s = serde_json::to_string_pretty(bundle).expect("stats serialize");
    s.push('\n');
    s
}

fn write(path: PathBuf, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write `stats.json` into `dir`.
pub fn write_stats(bundle: &StatsBundle, dir: &Path) -> Result<PathBuf> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    write(dir.join("stats.json"), &stats_json(bundle), &mut written)?;
    Ok(written.remove(0))
}

/// Write every artefact of a run into `dir`: `records.csv`, one
/// `beampattern_<dir>_<method>.csv` per direction and method, `stats.json`,
/// `outcomes.jsonl`, `failures.json` and the effective `config.toml`.
/// Returns the paths written.
pub fn export_outputs(
    bundle: &StatsBundle,
    run: &ComparisonRun,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    write(
        dir.join("records.csv"),
        &records_to_csv(&run.records),
        &mut written,
    )?;
    for d in &run.directions {
        let name = format!("beampattern_{}_{}.csv", d.dir_idx, Method::Cbf);
        write(
            dir.join(name),
            &beampattern_csv(&d.cbf_weights, &run.steering),
            &mut written,
        )?;
        if let Some(best) = &d.best_pccb {
            let name = format!("beampattern_{}_{}.csv", d.dir_idx, Method::Pccb);
            write(
                dir.join(name),
                &beampattern_csv(&best.weights(), &run.steering),
                &mut written,
            )?;
        }
    }
    write(dir.join("stats.json"), &stats_json(bundle), &mut written)?;
    write(
        dir.join("outcomes.jsonl"),
        &outcomes_jsonl(run),
        &mut written,
    )?;
    let failures = serde_json::to_string_pretty(&run.failures).expect("failures serialize") + "\n";
    write(dir.join("failures.json"), &failures, &mut written)?;
    write(dir.join("config.toml"), &cfg.to_toml_string(), &mut written)?;
    Ok(written)
}
