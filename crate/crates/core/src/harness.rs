//! Study drivers built on training and evaluation: the per-scene benchmark
//! table, layer and kernel ablations, data efficiency, and inference timing.
//!
//! Every report renders both as CSV and as an aligned text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_linear, BestOfMode, MetricReport};
use crate::graph::KernelKind;
use crate::model::{init_params, param_count, predict_window, ModelConfig, ModelParams};
use crate::train::{train, TrainConfig};
use crate::trajdata::{extract_windows, leave_one_out_split, TrajectoryScene, TrajectoryWindow, SCENE_GROUPS};

/// Inference time reported in the literature for this model, in seconds
/// per window. Shown for reference only.
pub const REFERENCE_INFERENCE_SECONDS: f64 = 0.0020;
pub const ABLATION_DEPTHS: [usize; 4] = [1, 3, 5, 7];
pub const DATA_FRACTIONS: [f64; 4] = [0.05, 0.10, 0.20, 0.50];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub samples: usize,
    pub seed: u64,
    pub mode: BestOfMode,
    pub window_stride: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            samples: 20,
            seed: 0,
            mode: BestOfMode::PerMetric,
            window_stride: 1,
        }
    }
}

fn cell(m: Option<(f64, f64)>) -> String {
    match m {
        Some((a, f)) => format!("{a:.2}/{f:.2}"),
        None => "absent".into(),
    }
}

fn text_table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let width: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let line: Vec<String> = row.iter().zip(&width).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Windows of every scene in `scenes`.
pub fn windows_of(scenes: &[TrajectoryScene], config: &ModelConfig, stride: usize) -> Vec<TrajectoryWindow> {
    scenes
        .iter()
        .flat_map(|s| extract_windows(s, config.t_obs, config.t_pred, stride))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: String,
    /// (ADE, FDE) per held-out group, in [`SCENE_GROUPS`] order.
    pub scenes: Vec<Option<(f64, f64)>>,
}

impl BenchmarkRow {
    /// Mean over the five groups, or `None` if any is absent.
    pub fn average(&self) -> Option<(f64, f64)> {
        let vals: Option<Vec<(f64, f64)>> = self.scenes.iter().copied().collect();
        vals.map(|v| {
            let n = v.len() as f64;
            (v.iter().map(|x| x.0).sum::<f64>() / n, v.iter().map(|x| x.1).sum::<f64>() / n)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
    /// Groups for which no model checkpoint was supplied.
    pub absent: Vec<String>,
}

impl BenchmarkTable {
    fn header() -> Vec<String> {
        let mut h = vec!["method".to_string()];
        h.extend(SCENE_GROUPS.iter().map(|s| s.to_uppercase()));
        h.push("AVG".into());
        h
    }

    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = vec![r.method.clone()];
                v.extend(r.scenes.iter().map(|m| cell(*m)));
                v.push(cell(r.average()));
                v
            })
            .collect();
        let mut out = text_table(&Self::header(), &rows);
        if !self.absent.is_empty() {
            let _ = writeln!(out, "no checkpoint for: {}", self.absent.join(", "));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "scene", "ade", "fde"])?;
        for r in &self.rows {
            let named = SCENE_GROUPS.iter().map(|s| s.to_string()).zip(r.scenes.iter().copied());
            for (scene, m) in named.chain([("avg".to_string(), r.average())]) {
                let (a, f) = match m {
                    Some((a, f)) => (format!("{a:.6}"), format!("{f:.6}")),
                    None => ("absent".into(), "absent".into()),
                };
                w.write_record([r.method.as_str(), &scene, &a, &f])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates the linear baseline and, where a checkpoint is supplied, the
/// model on each leave-one-out test split.
pub fn benchmark_table(
    scenes: &[TrajectoryScene],
    models: &BTreeMap<String, Checkpoint>,
    opts: &EvalOptions,
) -> Result<BenchmarkTable> {
    let mut linear = BenchmarkRow {
        method: "linear".into(),
        scenes: Vec::new(),
    };
    let mut model = BenchmarkRow {
        method: "stgcnn".into(),
        scenes: Vec::new(),
    };
    let mut absent = Vec::new();
    for group in SCENE_GROUPS {
        let (_, test) = leave_one_out_split(scenes, group)?;
        let ck = models.get(group);
        let cfg = ck.map(|c| c.config).unwrap_or_default();
        let windows = windows_of(&test, &cfg, opts.window_stride);
        if windows.is_empty() {
            return Err(Error::Contract(format!("held-out group `{group}` has no complete windows")));
        }
        let lin = evaluate_linear(&windows)?;
        linear.scenes.push(Some((lin.ade, lin.fde)));
        match ck {
            Some(ck) => {
                let r = evaluate(&ck.params, &ck.config, &windows, opts.samples, opts.seed, opts.mode)?;
                model.scenes.push(Some((r.ade, r.fde)));
            }
            None => {
                absent.push(group.to_string());
                model.scenes.push(None);
            }
        }
    }
    Ok(BenchmarkTable {
        rows: vec![linear, model],
        absent,
    })
}

/// Trains under `budget` epochs (0 keeps the initial parameters).
pub fn train_budgeted(config: &ModelConfig, windows: &[TrajectoryWindow], budget: usize, seed: u64) -> Result<ModelParams> {
    if budget == 0 {
        config.validate()?;
        return Ok(init_params(config, seed));
    }
    Ok(train(config, &TrainConfig::with_budget(budget, seed), windows)?.params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    /// `cells[i][j]` holds metrics for `ABLATION_DEPTHS[i]` ST-GCNN layers and
    /// `ABLATION_DEPTHS[j]` extrapolator layers.
    pub cells: Vec<Vec<MetricReport>>,
    pub budget: usize,
}

impl AblationGrid {
    pub fn to_text(&self) -> String {
        let mut header = vec!["stgcnn \\ txpcnn".to_string()];
        header.extend(ABLATION_DEPTHS.iter().map(usize::to_string));
        let rows: Vec<Vec<String>> = self
            .cells
            .iter()
            .zip(ABLATION_DEPTHS)
            .map(|(row, s)| {
                let mut v = vec![s.to_string()];
                v.extend(row.iter().map(|m| cell(Some((m.ade, m.fde)))));
                v
            })
            .collect();
        text_table(&header, &rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n_stgcnn", "n_txpcnn", "ade", "fde", "budget_epochs"])?;
        for (row, s) in self.cells.iter().zip(ABLATION_DEPTHS) {
            for (m, t) in row.iter().zip(ABLATION_DEPTHS) {
                w.write_record([s.to_string(), t.to_string(), format!("{:.6}", m.ade), format!("{:.6}", m.fde), self.budget.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains and evaluates every depth combination in [`ABLATION_DEPTHS`]².
pub fn ablation_grid(
    base: &ModelConfig,
    train_windows: &[TrajectoryWindow],
    test_windows: &[TrajectoryWindow],
    budget: usize,
    train_seed: u64,
    opts: &EvalOptions,
) -> Result<AblationGrid> {
    let mut cells = Vec::new();
    for s in ABLATION_DEPTHS {
        let mut row = Vec::new();
        for t in ABLATION_DEPTHS {
            let cfg = ModelConfig {
                n_stgcnn: s,
                n_txpcnn: t,
                ..*base
            };
            log::info!("ablation cell stgcnn={s} txpcnn={t}");
            let params = train_budgeted(&cfg, train_windows, budget, train_seed)?;
            row.push(evaluate(&params, &cfg, test_windows, opts.samples, opts.seed, opts.mode)?);
        }
        cells.push(row);
    }
    Ok(AblationGrid { cells, budget })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub rows: Vec<(KernelKind, MetricReport)>,
    pub budget: usize,
}

impl KernelTable {
    pub fn to_text(&self) -> String {
        let header = vec!["kernel".to_string(), "ADE".into(), "FDE".into()];
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(k, m)| vec![k.to_string(), format!("{:.2}", m.ade), format!("{:.2}", m.fde)])
            .collect();
        text_table(&header, &rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["kernel", "ade", "fde", "budget_epochs"])?;
        for (k, m) in &self.rows {
            w.write_record([k.name().to_string(), format!("{:.6}", m.ade), format!("{:.6}", m.fde), self.budget.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One model per kernel, otherwise identical.
pub fn kernel_ablation(
    base: &ModelConfig,
    kinds: &[KernelKind],
    train_windows: &[TrajectoryWindow],
    test_windows: &[TrajectoryWindow],
    budget: usize,
    train_seed: u64,
    opts: &EvalOptions,
) -> Result<KernelTable> {
    let mut rows = Vec::new();
    for &kernel in kinds {
        let cfg = ModelConfig { kernel, ..*base };
        log::info!("kernel ablation {kernel}");
        let params = train_budgeted(&cfg, train_windows, budget, train_seed)?;
        rows.push((kernel, evaluate(&params, &cfg, test_windows, opts.samples, opts.seed, opts.mode)?));
    }
    Ok(KernelTable { rows, budget })
}

/// Indices of a seeded random subset of `n` items containing
/// `ceil(fraction · n)` elements (at least one), in ascending order.
/// Subsets for increasing fractions under one seed are nested.
pub fn nested_subset(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((fraction * n as f64).ceil() as usize).clamp(1.min(n), n);
    let mut chosen = order[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub fraction: f64,
    pub repeat: usize,
    pub n_windows: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCurve {
    pub rows: Vec<EfficiencyRow>,
    pub budget: usize,
}

impl EfficiencyCurve {
    /// Per fraction: (fraction, mean ADE, std ADE, mean FDE, std FDE).
    pub fn summary(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let mut by: BTreeMap<u64, Vec<&EfficiencyRow>> = BTreeMap::new();
        for r in &self.rows {
            by.entry(r.fraction.to_bits()).or_default().push(r);
        }
        let stats = |xs: Vec<f64>| {
            let n = xs.len() as f64;
            let m = xs.iter().sum::<f64>() / n;
            (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
        };
        by.values()
            .map(|rows| {
                let (ma, sa) = stats(rows.iter().map(|r| r.report.ade).collect());
                let (mf, sf) = stats(rows.iter().map(|r| r.report.fde).collect());
                (rows[0].fraction, ma, sa, mf, sf)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let header = vec!["fraction".to_string(), "ADE".into(), "FDE".into()];
        let rows: Vec<Vec<String>> = self
            .summary()
            .into_iter()
            .map(|(f, ma, sa, mf, sf)| vec![format!("{f}"), format!("{ma:.2} ± {sa:.2}"), format!("{mf:.2} ± {sf:.2}")])
            .collect();
        text_table(&header, &rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fraction", "repeat", "n_windows", "ade", "fde", "budget_epochs"])?;
        for r in &self.rows {
            w.write_record([
                r.fraction.to_string(),
                r.repeat.to_string(),
                r.n_windows.to_string(),
                format!("{:.6}", r.report.ade),
                format!("{:.6}", r.report.fde),
                self.budget.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// For each fraction, draws one nested subset of the training windows and
/// trains `repeats` models on it with seeds `seed, seed + 1, …`.
#[allow(clippy::too_many_arguments)]
pub fn data_efficiency(
    config: &ModelConfig,
    train_windows: &[TrajectoryWindow],
    test_windows: &[TrajectoryWindow],
    fractions: &[f64],
    repeats: usize,
    budget: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<EfficiencyCurve> {
    if repeats < 1 {
        return Err(Error::Config("data efficiency needs at least one repeat".into()));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        let subset: Vec<TrajectoryWindow> = nested_subset(train_windows.len(), fraction, seed)?
            .into_iter()
            .map(|i| train_windows[i].clone())
            .collect();
        for repeat in 0..repeats {
            log::info!("data efficiency fraction {fraction} repeat {repeat}");
            let params = train_budgeted(config, &subset, budget, seed + repeat as u64)?;
            let report = evaluate(&params, config, test_windows, opts.samples, opts.seed, opts.mode)?;
            rows.push(EfficiencyRow {
                fraction,
                repeat,
                n_windows: subset.len(),
                report,
            });
        }
    }
    Ok(EfficiencyCurve { rows, budget })
}

/// Best-effort CPU description.
pub fn hardware_string() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| std::env::consts::ARCH.to_string());
    format!("{cpu}, {threads} threads, {}", std::env::consts::OS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub hardware: String,
    pub param_count: usize,
    pub repetitions: usize,
    /// (pedestrians, mean seconds per forward pass).
    pub timings: Vec<(usize, f64)>,
    pub reference_seconds: f64,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "hardware: {}\nparameters: {}\nrepetitions: {}\nreference: {:.4} s per window (published, different hardware)\n",
            self.hardware, self.param_count, self.repetitions, self.reference_seconds
        );
        let header = vec!["peds".to_string(), "seconds".into()];
        let rows: Vec<Vec<String>> = self.timings.iter().map(|(n, s)| vec![n.to_string(), format!("{s:.6}")]).collect();
        out.push_str(&text_table(&header, &rows));
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["peds", "seconds", "param_count", "repetitions", "reference_seconds", "hardware"])?;
        for (n, s) in &self.timings {
            w.write_record([
                n.to_string(),
                format!("{s:.9}"),
                self.param_count.to_string(),
                self.repetitions.to_string(),
                self.reference_seconds.to_string(),
                self.hardware.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A deterministic window of `n` pedestrians walking in loose lanes.
pub fn bench_window(n: usize, config: &ModelConfig) -> TrajectoryWindow {
    let len = config.t_obs + config.t_pred;
    let tracks: Vec<Vec<[f64; 2]>> = (0..n)
        .map(|i| {
            let dir = if i % 2 == 0 { 1.0 } else { -1.0 };
            let lane = (i / 2) as f64 * 0.8;
            (0..len)
                .map(|t| {
                    let t = t as f64;
                    [dir * 0.5 * t + 0.1 * (i as f64), lane + 0.05 * (t * 0.3 + i as f64).sin()]
                })
                .collect()
        })
        .collect();
    TrajectoryWindow {
        obs: tracks.iter().map(|t| t[..config.t_obs].to_vec()).collect(),
        pred: tracks.iter().map(|t| t[config.t_obs..].to_vec()).collect(),
        ped_ids: (0..n as i64).collect(),
        start_frame: 0,
    }
}

/// Mean wall time of graph construction plus forward pass for one window,
/// per pedestrian count, after `reps / 10` warm-up passes.
pub fn inference_bench(params: &ModelParams, config: &ModelConfig, sizes: &[usize], reps: usize) -> Result<BenchReport> {
    if reps < 1 {
        return Err(Error::Config("benchmark needs at least one repetition".into()));
    }
    let mut timings = Vec::new();
    for &n in sizes {
        let w = bench_window(n, config);
        for _ in 0..reps / 10 {
            predict_window(&w, params, config)?;
        }
        let start = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(predict_window(std::hint::black_box(&w), params, config)?);
        }
        timings.push((n, start.elapsed().as_secs_f64() / reps as f64));
    }
    Ok(BenchReport {
        hardware: hardware_string(),
        param_count: param_count(config),
        repetitions: reps,
        timings,
        reference_seconds: REFERENCE_INFERENCE_SECONDS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn windows(count: usize, n: usize, offset: f64) -> Vec<TrajectoryWindow> {
        let cfg = ModelConfig::default();
        (0..count)
            .map(|i| {
                let mut w = bench_window(n, &cfg);
                for tr in w.obs.iter_mut().chain(w.pred.iter_mut()) {
                    for p in tr.iter_mut() {
                        p[1] += offset + i as f64 * 0.3;
                    }
                }
                w
            })
            .collect()
    }

    #[test]
    fn nested_subsets() {
        let a = nested_subset(200, 0.05, 9).unwrap();
        let b = nested_subset(200, 0.10, 9).unwrap();
        let c = nested_subset(200, 0.5, 9).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (10, 20, 100));
        assert!(a.iter().all(|i| b.contains(i)) && b.iter().all(|i| c.contains(i)));
        assert_eq!(nested_subset(200, 1.0, 9).unwrap(), (0..200).collect::<Vec<_>>());
        assert_eq!(nested_subset(3, 0.05, 9).unwrap().len(), 1);
        assert!(nested_subset(10, 0.0, 0).is_err());
        assert!(nested_subset(10, 1.5, 0).is_err());
    }

    #[test]
    fn zero_budget_ablation_grid_is_finite() {
        let tw = windows(3, 2, 0.0);
        let te = windows(2, 3, 5.0);
        let opts = EvalOptions {
            samples: 3,
            ..Default::default()
        };
        let g = ablation_grid(&ModelConfig::default(), &tw, &te, 0, 1, &opts).unwrap();
        assert_eq!(g.cells.len(), 4);
        assert!(g.cells.iter().all(|r| r.len() == 4));
        assert!(g.cells.iter().flatten().all(|m| m.ade.is_finite() && m.fde.is_finite() && m.ade >= 0.0));
        let text = g.to_text();
        assert_eq!(text.lines().count(), 5);
        let mut csv = Vec::new();
        g.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 17);
        assert_eq!(g, ablation_grid(&ModelConfig::default(), &tw, &te, 0, 1, &opts).unwrap());
    }

    #[test]
    fn kernel_table_has_a_row_per_kind() {
        let tw = windows(3, 2, 0.0);
        let te = windows(2, 3, 5.0);
        let opts = EvalOptions {
            samples: 2,
            ..Default::default()
        };
        let t = kernel_ablation(&ModelConfig::default(), &KernelKind::all(), &tw, &te, 0, 0, &opts).unwrap();
        assert_eq!(t.rows.len(), 5);
        let names: Vec<&str> = t.rows.iter().map(|r| r.0.name()).collect();
        assert_eq!(names, ["l2", "exp", "sim_eps", "ones", "sim"]);
        assert_eq!(t.to_text().lines().count(), 6);
    }

    #[test]
    fn data_efficiency_rows_and_full_fraction() {
        let tw = windows(6, 2, 0.0);
        let te = windows(2, 2, 5.0);
        let opts = EvalOptions {
            samples: 2,
            ..Default::default()
        };
        let cfg = ModelConfig::default();
        let curve = data_efficiency(&cfg, &tw, &te, &[0.5, 1.0], 2, 1, 4, &opts).unwrap();
        assert_eq!(curve.rows.len(), 4);
        let mut csv = Vec::new();
        curve.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
        assert_eq!(curve.summary().len(), 2);
        let full = train_budgeted(&cfg, &tw, 1, 4).unwrap();
        let direct = evaluate(&full, &cfg, &te, 2, 0, BestOfMode::PerMetric).unwrap();
        assert_eq!(curve.rows[2].report, direct);
    }

    #[test]
    fn bench_report_contents() {
        let cfg = ModelConfig::default();
        let p = init_params(&cfg, 0);
        let r = inference_bench(&p, &cfg, &[2, 8], 20).unwrap();
        assert_eq!(r.param_count, param_count(&cfg));
        assert!(r.timings.iter().all(|t| t.1 > 0.0 && t.1.is_finite()));
        assert!(!r.hardware.is_empty());
        assert!(r.to_text().contains("0.0020"));
    }

    #[test]
    fn benchmark_table_layout_with_absent_models() {
        let dir = tempfile::tempdir().unwrap();
        crate::synthetic::generate_dataset(dir.path(), 1, 60).unwrap();
        let scenes = crate::trajdata::load_dataset(dir.path()).unwrap();
        let cfg = ModelConfig::default();
        let mut models = BTreeMap::new();
        models.insert(
            "hotel".to_string(),
            Checkpoint {
                config: cfg,
                params: init_params(&cfg, 0),
                epoch: 0,
            },
        );
        let opts = EvalOptions {
            samples: 2,
            window_stride: 5,
            ..Default::default()
        };
        let t = benchmark_table(&scenes, &models, &opts).unwrap();
        assert_eq!(t.rows[0].scenes.len(), 5);
        let lin = &t.rows[0];
        let avg = lin.average().unwrap();
        let mean = lin.scenes.iter().map(|m| m.unwrap().0).sum::<f64>() / 5.0;
        assert!((avg.0 - mean).abs() < 1e-12);
        assert_eq!(t.absent, ["eth", "univ", "zara1", "zara2"]);
        assert!(t.rows[1].scenes[1].is_some() && t.rows[1].average().is_none());
        let text = t.to_text();
        assert!(text.lines().next().unwrap().ends_with("AVG"));
        assert!(text.contains("absent"));
        assert_eq!(t, benchmark_table(&scenes, &models, &opts).unwrap());
    }
}
