//! Summary statistics over comparison records: PCO scatter projections, norm
//! histograms, best-of-restarts selection and steering-range boxplots.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::sphere::{angular_distance, direction_from_angles};

use super::config::StatsConfig;
use super::run::{ComparisonRecord, Method};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Projections {
    /// `[x, y]` per record.
    pub xy: Vec<[f64; 2]>,
    /// `[y, z]` per record.
    pub yz: Vec<[f64; 2]>,
}

impl Projections {
    fn push(&mut self, p: &[f64; 3]) {
        self.xy.push([p[0], p[1]]);
        self.yz.push([p[1], p[2]]);
    }
}

/// Counts over bins `[i·w, (i+1)·w)` starting at zero. Non-finite norms are
/// counted separately so that the totals always match the input size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_m: f64,
    pub counts: Vec<u64>,
    pub non_finite: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.non_finite
    }
}

fn histograms(width: f64, groups: &[&[f64]]) -> Vec<Histogram> {
    let bin = |v: f64| (v / width).floor().max(0.0) as usize;
    let n_bins = groups
        .iter()
        .flat_map(|g| g.iter())
        .filter(|v| v.is_finite())
        .map(|&v| bin(v) + 1)
        .max()
        .unwrap_or(0);
    groups
        .iter()
        .map(|g| {
            let mut h = Histogram {
                bin_width_m: width,
                counts: vec![0; n_bins],
                non_finite: 0,
            };
            for &v in g.iter() {
                if v.is_finite() {
                    h.counts[bin(v)] += 1;
                } else {
                    h.non_finite += 1;
                }
            }
            h
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Five-number summary of the finite entries; `None` when there are none.
pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(FiveNumber {
        min: v[0],
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
        max: v[v.len() - 1],
        n: v.len(),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    five_number(values).map(|f| f.median)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub dir_idx: usize,
    pub theta_rad: f64,
    pub phi_rad: f64,
    pub steering_range_deg: f64,
    pub cbf_norm_m: Option<f64>,
    pub pccb_best_norm_m: Option<f64>,
    pub pccb_best_seed: Option<u64>,
    /// Spread of the PCO norm over all restarts of this direction.
    pub pccb_all: Option<FiveNumber>,
    pub pccb_std_m: Option<f64>,
    pub n_restarts: usize,
    pub n_converged: usize,
    /// `cbf_norm / pccb_best_norm`.
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringRangeBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub n_directions: usize,
    pub cbf: Option<FiveNumber>,
    pub pccb_best: Option<FiveNumber>,
    pub pccb_all: Option<FiveNumber>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodProjections {
    pub cbf: Projections,
    pub pccb_all: Projections,
    pub pccb_best: Projections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramPair {
    pub cbf: Histogram,
    pub pccb: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_directions: usize,
    pub n_cbf_records: usize,
    pub n_pccb_records: usize,
    pub n_pccb_converged: usize,
    /// Median of per-direction reductions over directions 15° to 60° off boresight.
    pub median_reduction_15_60: Option<f64>,
    pub n_directions_15_60: usize,
    /// Largest over smallest steering-range bin median of best-of PCCB norms.
    pub sr_bin_median_ratio: Option<f64>,
    pub pccb_best_median_m: Option<f64>,
    pub pccb_all_median_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsBundle {
    pub projections: MethodProjections,
    /// CBF records against every PCCB restart.
    pub hist_all: HistogramPair,
    /// CBF records against the best PCCB restart of each direction.
    pub hist_best: HistogramPair,
    pub steering_range_bins: Vec<SteeringRangeBin>,
    pub per_direction: Vec<DirectionStats>,
    pub summary: Summary,
}

/// Best PCCB record of one direction: lowest PCO norm among converged
/// restarts (ties go to the lowest seed), or among all finite restarts when
/// none converged.
pub fn best_record<'a>(pccb: &[&'a ComparisonRecord]) -> Option<&'a ComparisonRecord> {
    let pick = |converged_only: bool| {
        pccb.iter()
            .copied()
            .filter(|r| r.pco_norm_m.is_finite() && (!converged_only || r.is_converged()))
            .min_by(|a, b| {
                a.pco_norm_m
                    .total_cmp(&b.pco_norm_m)
                    .then(a.seed.cmp(&b.seed))
            })
    };
    pick(true).or_else(|| pick(false))
}

pub fn steering_range_deg(theta: f64, phi: f64) -> f64 {
    direction_from_angles(theta, phi)
        .map(|u| angular_distance(&u, &Vector3::x()).to_degrees())
        .unwrap_or(f64::NAN)
}

fn std_dev(values: &[f64]) -> Option<f64> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some((v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

/// Aggregate records into plot-ready statistics. Record order does not matter.
pub fn aggregate_stats(records: &[ComparisonRecord], cfg: &StatsConfig) -> StatsBundle {
    let mut by_dir: BTreeMap<usize, Vec<&ComparisonRecord>> = BTreeMap::new();
    for r in records {
        by_dir.entry(r.dir_idx).or_default().push(r);
    }
    for group in by_dir.values_mut() {
        group.sort_by_key(|r| (r.method, r.seed));
    }

    let mut projections = MethodProjections {
        cbf: Projections::default(),
        pccb_all: Projections::default(),
        pccb_best: Projections::default(),
    };
    let mut cbf_norms = Vec::new();
    let mut pccb_norms = Vec::new();
    let mut best_norms = Vec::new();
    let mut per_direction = Vec::new();

    for (&dir_idx, group) in &by_dir {
        let cbf = group.iter().copied().find(|r| r.method == Method::Cbf);
        let pccb: Vec<&ComparisonRecord> = group
            .iter()
            .copied()
            .filter(|r| r.method == Method::Pccb)
            .collect();
        let best = best_record(&pccb);
        let all_norms: Vec<f64> = pccb.iter().map(|r| r.pco_norm_m).collect();

        if let Some(c) = cbf {
            projections.cbf.push(&c.pco_m);
            cbf_norms.push(c.pco_norm_m);
        }
        for r in &pccb {
            projections.pccb_all.push(&r.pco_m);
        }
        pccb_norms.extend(&all_norms);
        if let Some(b) = best {
            projections.pccb_best.push(&b.pco_m);
            best_norms.push(b.pco_norm_m);
        }

        let first = group[0];
        let cbf_norm = cbf.map(|c| c.pco_norm_m);
        let best_norm = best.map(|b| b.pco_norm_m);
        per_direction.push(DirectionStats {
            dir_idx,
            theta_rad: first.theta_rad,
            phi_rad: first.phi_rad,
            steering_range_deg: steering_range_deg(first.theta_rad, first.phi_rad),
            cbf_norm_m: cbf_norm,
            pccb_best_norm_m: best_norm,
            pccb_best_seed: best.and_then(|b| b.seed),
            pccb_all: five_number(&all_norms),
            pccb_std_m: std_dev(&all_norms),
            n_restarts: pccb.len(),
            n_converged: pccb.iter().filter(|r| r.is_converged()).count(),
            reduction: match (cbf_norm, best_norm) {
                (Some(c), Some(b)) if b > 0.0 => Some(c / b),
                _ => None,
            },
        });
    }

    let edges = &cfg.sr_edges_deg;
    let last = edges.len() - 2;
    let bin_of = |sr: f64| {
        (0..=last)
            .find(|&i| sr >= edges[i] && (sr < edges[i + 1] || (i == last && sr <= edges[i + 1])))
    };
    let mut steering_range_bins: Vec<SteeringRangeBin> = (0..=last)
        .map(|i| SteeringRangeBin {
            lo_deg: edges[i],
            hi_deg: edges[i + 1],
            n_directions: 0,
            cbf: None,
            pccb_best: None,
            pccb_all: None,
        })
        .collect();
    let mut bin_values = vec![(Vec::new(), Vec::new(), Vec::new()); last + 1];
    for d in &per_direction {
        if let Some(i) = bin_of(d.steering_range_deg) {
            steering_range_bins[i].n_directions += 1;
            let (c, b, a) = &mut bin_values[i];
            c.extend(d.cbf_norm_m);
            b.extend(d.pccb_best_norm_m);
            a.extend(
                by_dir[&d.dir_idx]
                    .iter()
                    .filter(|r| r.method == Method::Pccb)
                    .map(|r| r.pco_norm_m),
            );
        }
    }
    for (bin, (c, b, a)) in steering_range_bins.iter_mut().zip(&bin_values) {
        bin.cbf = five_number(c);
        bin.pccb_best = five_number(b);
        bin.pccb_all = five_number(a);
    }

    let bin_medians: Vec<f64> = steering_range_bins
        .iter()
        .filter_map(|b| b.pccb_best.map(|f| f.median))
        .collect();
    let sr_bin_median_ratio = match bin_medians.len() {
        0 => None,
        _ => {
            let max = bin_medians
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            let min = bin_medians.iter().copied().fold(f64::INFINITY, f64::min);
            Some(max / min)
        }
    };
    let mid: Vec<f64> = per_direction
        .iter()
        .filter(|d| (15.0..=60.0).contains(&d.steering_range_deg))
        .filter_map(|d| d.reduction)
        .collect();

    let all = histograms(cfg.hist_bin_width_m, &[&cbf_norms, &pccb_norms]);
    let best = histograms(cfg.hist_bin_width_m, &[&cbf_norms, &best_norms]);
    let summary = Summary {
        n_directions: per_direction.len(),
        n_cbf_records: cbf_norms.len(),
        n_pccb_records: pccb_norms.len(),
        n_pccb_converged: records
            .iter()
            .filter(|r| r.method == Method::Pccb && r.is_converged())
            .count(),
        median_reduction_15_60: median(&mid),
        n_directions_15_60: mid.len(),
        sr_bin_median_ratio,
        pccb_best_median_m: median(&best_norms),
        pccb_all_median_m: median(&pccb_norms),
    };
    StatsBundle {
        projections,
        hist_all: HistogramPair {
            cbf: all[0].clone(),
            pccb: all[1].clone(),
        },
        hist_best: HistogramPair {
            cbf: best[0].clone(),
            pccb: best[1].clone(),
        },
        steering_range_bins,
        per_direction,
        summary,
    }
}
