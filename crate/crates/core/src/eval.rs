//! Displacement metrics, best-of-n sampling evaluation and the linear
//! baseline.
//!
//! All metrics are computed in absolute world coordinates.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{self, BiGaussSeq};
use crate::model::{predict_window, ModelConfig, ModelParams};
use crate::trajdata::{Track, TrajectoryWindow};

fn check_shapes(op: &'static str, pred: &[Track], gt: &[Track]) -> Result<()> {
    let dims = |x: &[Track]| vec![x.len(), x.first().map_or(0, Vec::len), 2];
    let ragged = |x: &[Track]| x.iter().any(|t| t.len() != x[0].len());
    if pred.len() != gt.len() || pred.is_empty() || ragged(pred) || ragged(gt) || pred[0].len() != gt[0].len() || pred[0].is_empty() {
        return Err(Error::shape(op, &dims(pred), &dims(gt)));
    }
    Ok(())
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean Euclidean error over every pedestrian and step.
pub fn ade(pred: &[Track], gt: &[Track]) -> Result<f64> {
    check_shapes("ade", pred, gt)?;
    let total: f64 = pred
        .iter()
        .zip(gt)
        .flat_map(|(p, g)| p.iter().zip(g).map(|(a, b)| dist(*a, *b)))
        .sum();
    Ok(total / (pred.len() * pred[0].len()) as f64)
}

/// Mean Euclidean error at the final step.
pub fn fde(pred: &[Track], gt: &[Track]) -> Result<f64> {
    check_shapes("fde", pred, gt)?;
    let total: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| dist(*p.last().expect("non-empty"), *g.last().expect("non-empty")))
        .sum();
    Ok(total / pred.len() as f64)
}

/// Per-pedestrian errors: (mean over steps, final step).
fn per_ped(pred: &[Track], gt: &[Track]) -> Vec<(f64, f64)> {
    pred.iter()
        .zip(gt)
        .map(|(p, g)| {
            let sum: f64 = p.iter().zip(g).map(|(a, b)| dist(*a, *b)).sum();
            (sum / p.len() as f64, dist(*p.last().unwrap(), *g.last().unwrap()))
        })
        .collect()
}

/// How the closest of n samples is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BestOfMode {
    /// Minimum ADE and minimum FDE over samples, taken independently.
    #[default]
    PerMetric,
    /// Sample with the lowest ADE, scored on both metrics.
    Joint,
    /// Minimum over samples taken separately for each pedestrian.
    PerPedestrian,
}

impl BestOfMode {
    pub fn name(self) -> &'static str {
        match self {
            BestOfMode::PerMetric => "per_metric",
            BestOfMode::Joint => "joint",
            BestOfMode::PerPedestrian => "per_pedestrian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_metric" => Ok(BestOfMode::PerMetric),
            "joint" => Ok(BestOfMode::Joint),
            "per_pedestrian" => Ok(BestOfMode::PerPedestrian),
            other => Err(Error::Config(format!(
                "unknown best-of mode `{other}` (expected per_metric|joint|per_pedestrian)"
            ))),
        }
    }
}

/// Best (ADE, FDE) of `samples` against `gt`.
pub fn best_of_samples(samples: &[Vec<Track>], gt: &[Track], mode: BestOfMode) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Contract("best-of-n needs at least one sample".into()));
    }
    match mode {
        BestOfMode::PerMetric => {
            let mut best = (f64::INFINITY, f64::INFINITY);
            for s in samples {
                best.0 = best.0.min(ade(s, gt)?);
                best.1 = best.1.min(fde(s, gt)?);
            }
            Ok(best)
        }
        BestOfMode::Joint => {
            let mut best = (f64::INFINITY, f64::INFINITY);
            for s in samples {
                let a = ade(s, gt)?;
                if a < best.0 {
                    best = (a, fde(s, gt)?);
                }
            }
            Ok(best)
        }
        BestOfMode::PerPedestrian => {
            let mut best = vec![(f64::INFINITY, f64::INFINITY); gt.len()];
            for s in samples {
                check_shapes("best_of_n", s, gt)?;
                for (b, (a, f)) in best.iter_mut().zip(per_ped(s, gt)) {
                    b.0 = b.0.min(a);
                    b.1 = b.1.min(f);
                }
            }
            let n = gt.len() as f64;
            Ok((best.iter().map(|b| b.0).sum::<f64>() / n, best.iter().map(|b| b.1).sum::<f64>() / n))
        }
    }
}

/// Draws `n` samples from `seq` and scores the best against `gt`.
pub fn best_of_n_seq(seq: &BiGaussSeq, gt: &[Track], n: usize, seed: u64, mode: BestOfMode) -> Result<(f64, f64)> {
    if n < 1 {
        return Err(Error::Contract(format!("best-of-n needs n >= 1, got {n}")));
    }
    best_of_samples(&gaussian::sample(seq, seed, n), gt, mode)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub ade: f64,
    pub fde: f64,
    pub n_windows: usize,
    /// Pedestrian-windows scored; the averages are weighted by this.
    pub n_peds: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl MetricReport {
    pub const CSV_HEADER: [&'static str; 7] = ["label", "ade", "fde", "n_windows", "n_peds", "n_samples", "seed"];

    fn csv_record(&self, label: &str) -> [String; 7] {
        [
            label.to_string(),
            format!("{:.6}", self.ade),
            format!("{:.6}", self.fde),
            self.n_windows.to_string(),
            self.n_peds.to_string(),
            self.n_samples.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Writes labelled reports as CSV.
pub fn write_reports_csv<W: Write>(rows: &[(String, MetricReport)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MetricReport::CSV_HEADER)?;
    for (label, r) in rows {
        w.write_record(r.csv_record(label))?;
    }
    w.flush()?;
    Ok(())
}

/// Seed for window `index` of an evaluation seeded with `seed`.
pub fn window_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best-of-n metrics for one window.
pub fn best_of_n(
    params: &ModelParams,
    config: &ModelConfig,
    window: &TrajectoryWindow,
    n: usize,
    seed: u64,
    mode: BestOfMode,
) -> Result<MetricReport> {
    let seq = predict_window(window, params, config)?;
    let (ade, fde) = best_of_n_seq(&seq, &window.pred, n, seed, mode)?;
    Ok(MetricReport {
        ade,
        fde,
        n_windows: 1,
        n_peds: window.n_peds(),
        n_samples: n,
        seed,
    })
}

fn aggregate(per_window: &[(f64, f64, usize)], n_samples: usize, seed: u64) -> MetricReport {
    let peds: usize = per_window.iter().map(|w| w.2).sum();
    let weighted = |f: fn(&(f64, f64, usize)) -> f64| {
        per_window.iter().map(|w| f(w) * w.2 as f64).sum::<f64>() / peds.max(1) as f64
    };
    MetricReport {
        ade: weighted(|w| w.0),
        fde: weighted(|w| w.1),
        n_windows: per_window.len(),
        n_peds: peds,
        n_samples,
        seed,
    }
}

/// Best-of-n over many windows. Window `i` samples with
/// [`window_seed`]`(seed, i)`; results are averaged over pedestrians.
pub fn evaluate(
    params: &ModelParams,
    config: &ModelConfig,
    windows: &[TrajectoryWindow],
    n: usize,
    seed: u64,
    mode: BestOfMode,
) -> Result<MetricReport> {
    if windows.is_empty() {
        return Err(Error::Contract("evaluation needs at least one window".into()));
    }
    let per_window: Vec<(f64, f64, usize)> = windows
        .par_iter()
        .enumerate()
        .map(|(i, w)| best_of_n(params, config, w, n, window_seed(seed, i), mode).map(|r| (r.ade, r.fde, w.n_peds())))
        .collect::<Result<_>>()?;
    Ok(aggregate(&per_window, n, seed))
}

/// Least-squares line through the observed positions of each pedestrian,
/// extrapolated over the prediction horizon.
pub fn linear_baseline(window: &TrajectoryWindow) -> Vec<Track> {
    let t_pred = window.t_pred();
    window
        .obs
        .iter()
        .map(|obs| {
            let m = obs.len() as f64;
            let t_mean = (m - 1.0) / 2.0;
            let stt: f64 = (0..obs.len()).map(|t| (t as f64 - t_mean).powi(2)).sum();
            let fit = |c: usize| {
                let mean = obs.iter().map(|p| p[c]).sum::<f64>() / m;
                let slope = if stt > 0.0 {
                    obs.iter().enumerate().map(|(t, p)| (t as f64 - t_mean) * (p[c] - mean)).sum::<f64>() / stt
                } else {
                    0.0
                };
                (mean, slope)
            };
            let (fx, fy) = (fit(0), fit(1));
            (0..t_pred)
                .map(|k| {
                    let t = (obs.len() + k) as f64 - t_mean;
                    [fx.0 + fx.1 * t, fy.0 + fy.1 * t]
                })
                .collect()
        })
        .collect()
}

/// Linear-baseline ADE/FDE over windows, averaged over pedestrians.
pub fn evaluate_linear(windows: &[TrajectoryWindow]) -> Result<MetricReport> {
    if windows.is_empty() {
        return Err(Error::Contract("evaluation needs at least one window".into()));
    }
    let per_window: Vec<(f64, f64, usize)> = windows
        .iter()
        .map(|w| {
            let p = linear_baseline(w);
            Ok((ade(&p, &w.pred)?, fde(&p, &w.pred)?, w.n_peds()))
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(&per_window, 0, 0))
}
