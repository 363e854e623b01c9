//! Prediction export files and SVG rendering.
//!
//! A prediction directory holds three CSV files:
//!
//! * `prediction.csv`: one row per (t, ped) with the Gaussian parameters
//!   (see [`BiGaussSeq::write_csv`]);
//! * `samples.csv`: `sample, ped, t, x, y` absolute sampled positions;
//! * `truth.csv`: `ped, t, phase, x, y` with `phase` either `obs` or
//!   `future`.
//!
//! The SVG draws, per pedestrian, the observed track, the dashed
//! ground-truth future, the sample scatter, the mean prediction and 1σ/2σ
//! position ellipses at every predicted step.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gaussian::BiGaussSeq;
use crate::trajdata::{Point, Track, TrajectoryWindow};

pub const PREDICTION_FILE: &str = "prediction.csv";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const TRUTH_FILE: &str = "truth.csv";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 30.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];

/// `samples` is `count × N × T_p`.
pub fn write_samples_csv<W: Write>(samples: &[Vec<Track>], ped_ids: &[i64], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample", "ped", "t", "x", "y"])?;
    for (k, s) in samples.iter().enumerate() {
        for (n, track) in s.iter().enumerate() {
            for (t, p) in track.iter().enumerate() {
                w.write_record([k.to_string(), ped_ids[n].to_string(), t.to_string(), p[0].to_string(), p[1].to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv<W: Write>(window: &TrajectoryWindow, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["ped", "t", "phase", "x", "y"])?;
    for (n, id) in window.ped_ids.iter().enumerate() {
        let obs = window.obs[n].iter().map(|p| ("obs", p));
        let fut = window.pred[n].iter().map(|p| ("future", p));
        for (t, (phase, p)) in obs.chain(fut).enumerate() {
            w.write_record([id.to_string(), t.to_string(), phase.to_string(), p[0].to_string(), p[1].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the three prediction files into `dir`.
pub fn write_prediction_dir(dir: &Path, window: &TrajectoryWindow, seq: &BiGaussSeq, samples: &[Vec<Track>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    seq.write_csv(&window.ped_ids, std::fs::File::create(dir.join(PREDICTION_FILE))?)?;
    write_samples_csv(samples, &window.ped_ids, std::fs::File::create(dir.join(SAMPLES_FILE))?)?;
    write_truth_csv(window, std::fs::File::create(dir.join(TRUTH_FILE))?)
}

/// Predicted distribution of one pedestrian at one step, absolute frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDist {
    pub mean: Point,
    /// Position covariance `[[a, b], [b, c]]` as `(a, b, c)`.
    pub cov: (f64, f64, f64),
}

/// Everything drawn for one pedestrian.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PedPlot {
    pub id: i64,
    pub observed: Track,
    pub future: Track,
    pub predicted: Vec<StepDist>,
    pub samples: Vec<Point>,
}

fn parse_f64(s: &str, what: &str, line: u64, source: &str) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        path: source.into(),
        line: line as usize,
        msg: format!("bad {what} `{s}`"),
    })
}

fn records<R: Read>(reader: R, expected: &[&str], source: &str) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    if header.len() < expected.len() || expected.iter().zip(header.iter()).any(|(a, b)| *a != b.trim()) {
        return Err(Error::Parse {
            path: source.into(),
            line: 1,
            msg: format!("expected columns {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < expected.len() {
            return Err(Error::Parse {
                path: source.into(),
                line: line as usize,
                msg: format!("expected {} fields, found {}", expected.len(), rec.len()),
            });
        }
        out.push((line, rec));
    }
    Ok(out)
}

/// Reads the prediction file. Position covariance accumulates over steps
/// for displacement-space predictions (detected by means differing from
/// the absolute means) and is per step otherwise.
pub fn read_prediction<R: Read>(reader: R, source: &str) -> Result<BTreeMap<i64, Vec<StepDist>>> {
    let cols = ["t", "ped", "mu_x", "mu_y", "sigma_x", "sigma_y", "rho", "abs_mu_x", "abs_mu_y"];
    let rows = records(reader, &cols, source)?;
    let mut parsed = Vec::with_capacity(rows.len());
    let mut displacement = false;
    for (line, r) in &rows {
        let f = |i: usize| parse_f64(&r[i], cols[i], *line, source);
        let t = parse_f64(&r[0], "t", *line, source)? as usize;
        let ped = parse_f64(&r[1], "ped", *line, source)? as i64;
        let (mx, my, sx, sy, rho, ax, ay) = (f(2)?, f(3)?, f(4)?, f(5)?, f(6)?, f(7)?, f(8)?);
        if !(sx > 0.0 && sy > 0.0 && rho.abs() < 1.0) {
            return Err(Error::Parse {
                path: source.into(),
                line: *line as usize,
                msg: "sigma must be positive and |rho| < 1".into(),
            });
        }
        displacement |= mx != ax || my != ay;
        parsed.push((t, ped, [ax, ay], (sx * sx, rho * sx * sy, sy * sy)));
    }
    parsed.sort_by_key(|p| (p.1, p.0));
    let mut out: BTreeMap<i64, Vec<StepDist>> = BTreeMap::new();
    for (_, ped, mean, cov) in parsed {
        let list = out.entry(ped).or_default();
        let cov = match (displacement, list.last()) {
            (true, Some(prev)) => (prev.cov.0 + cov.0, prev.cov.1 + cov.1, prev.cov.2 + cov.2),
            _ => cov,
        };
        list.push(StepDist { mean, cov });
    }
    Ok(out)
}

pub fn read_samples<R: Read>(reader: R, source: &str) -> Result<BTreeMap<i64, Vec<Point>>> {
    let cols = ["sample", "ped", "t", "x", "y"];
    let mut out: BTreeMap<i64, Vec<Point>> = BTreeMap::new();
    for (line, r) in records(reader, &cols, source)? {
        let ped = parse_f64(&r[1], "ped", line, source)? as i64;
        let p = [parse_f64(&r[3], "x", line, source)?, parse_f64(&r[4], "y", line, source)?];
        out.entry(ped).or_default().push(p);
    }
    Ok(out)
}

/// Returns per pedestrian (observed, future).
pub fn read_truth<R: Read>(reader: R, source: &str) -> Result<BTreeMap<i64, (Track, Track)>> {
    let cols = ["ped", "t", "phase", "x", "y"];
    let mut rows = Vec::new();
    for (line, r) in records(reader, &cols, source)? {
        let ped = parse_f64(&r[0], "ped", line, source)? as i64;
        let t = parse_f64(&r[1], "t", line, source)? as usize;
        let p = [parse_f64(&r[3], "x", line, source)?, parse_f64(&r[4], "y", line, source)?];
        let future = match r[2].trim() {
            "obs" => false,
            "future" => true,
            other => {
                return Err(Error::Parse {
                    path: source.into(),
                    line: line as usize,
                    msg: format!("unknown phase `{other}`"),
                })
            }
        };
        rows.push((ped, t, future, p));
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let mut out: BTreeMap<i64, (Track, Track)> = BTreeMap::new();
    for (ped, _, future, p) in rows {
        let e = out.entry(ped).or_default();
        if future {
            e.1.push(p);
        } else {
            e.0.push(p);
        }
    }
    Ok(out)
}

fn open(dir: &Path, name: &str) -> Result<(std::fs::File, String)> {
    let path = dir.join(name);
    Ok((std::fs::File::open(&path)?, path.display().to_string()))
}

/// Loads a prediction directory written by [`write_prediction_dir`].
pub fn read_prediction_dir(dir: &Path) -> Result<Vec<PedPlot>> {
    let (f, src) = open(dir, PREDICTION_FILE)?;
    let predicted = read_prediction(f, &src)?;
    let (f, src) = open(dir, SAMPLES_FILE)?;
    let mut samples = read_samples(f, &src)?;
    let (f, src) = open(dir, TRUTH_FILE)?;
    let mut truth = read_truth(f, &src)?;
    Ok(predicted
        .into_iter()
        .map(|(id, predicted)| {
            let (observed, future) = truth.remove(&id).unwrap_or_default();
            PedPlot {
                id,
                observed,
                future,
                predicted,
                samples: samples.remove(&id).unwrap_or_default(),
            }
        })
        .collect())
}

struct Frame {
    min: Point,
    scale: f64,
}

impl Frame {
    fn fit(peds: &[PedPlot]) -> Self {
        let pts = peds.iter().flat_map(|p| {
            p.observed
                .iter()
                .chain(&p.future)
                .chain(&p.samples)
                .copied()
                .chain(p.predicted.iter().map(|d| d.mean))
        });
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in pts.filter(|p| p[0].is_finite() && p[1].is_finite()) {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        if !lo[0].is_finite() {
            lo = [0.0, 0.0];
            hi = [1.0, 1.0];
        }
        let span = [(hi[0] - lo[0]).max(1.0), (hi[1] - lo[1]).max(1.0)];
        let scale = ((WIDTH - 2.0 * MARGIN) / span[0]).min((HEIGHT - 2.0 * MARGIN) / span[1]);
        Self { min: lo, scale }
    }

    fn map(&self, p: Point) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.min[0]) * self.scale,
            HEIGHT - MARGIN - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn points_attr(frame: &Frame, track: &[Point]) -> String {
    let parts: Vec<String> = track
        .iter()
        .map(|&p| {
            let (x, y) = frame.map(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    parts.join(" ")
}

/// Semi-axes (major, minor) and the major-axis angle in radians of a 2×2
/// covariance.
pub fn ellipse_axes(cov: (f64, f64, f64)) -> (f64, f64, f64) {
    let (a, b, c) = cov;
    let mid = (a + c) / 2.0;
    let rad = (((a - c) / 2.0).powi(2) + b * b).sqrt();
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    ((mid + rad).max(0.0).sqrt(), (mid - rad).max(0.0).sqrt(), angle)
}

/// Renders pedestrians as a standalone SVG document. Output depends only on
/// the input, so identical inputs give identical bytes.
pub fn render_svg(peds: &[PedPlot], title: &str) -> String {
    let frame = Frame::fit(peds);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (i, p) in peds.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, r#"<g id="ped-{}" stroke="{color}" fill="none">"#, p.id);
        let _ = writeln!(s, r#"<g class="ellipses" stroke-width="0.8">"#);
        for d in &p.predicted {
            let (major, minor, angle) = ellipse_axes(d.cov);
            let (cx, cy) = frame.map(d.mean);
            for (k, opacity) in [(1.0, 0.5), (2.0, 0.25)] {
                let _ = writeln!(
                    s,
                    r#"<ellipse cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.2} {cx:.2} {cy:.2})" fill="{color}" fill-opacity="{:.2}" stroke-opacity="{opacity}"/>"#,
                    k * major * frame.scale,
                    k * minor * frame.scale,
                    -angle.to_degrees(),
                    opacity / 4.0,
                );
            }
        }
        let _ = writeln!(s, "</g>");
        let _ = writeln!(s, r#"<g class="samples" stroke="none" fill="{color}" fill-opacity="0.35">"#);
        for &q in &p.samples {
            let (x, y) = frame.map(q);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
        }
        let _ = writeln!(s, "</g>");
        if !p.observed.is_empty() {
            let _ = writeln!(s, r#"<polyline class="observed" stroke-width="2" points="{}"/>"#, points_attr(&frame, &p.observed));
        }
        if !p.future.is_empty() {
            let joined: Vec<Point> = p.observed.last().into_iter().chain(&p.future).copied().collect();
            let _ = writeln!(
                s,
                r#"<polyline class="future" stroke-width="2" stroke-dasharray="6 4" points="{}"/>"#,
                points_attr(&frame, &joined)
            );
        }
        if !p.predicted.is_empty() {
            let means: Vec<Point> = p
                .observed
                .last()
                .into_iter()
                .copied()
                .chain(p.predicted.iter().map(|d| d.mean))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="mean" stroke-width="1" stroke-opacity="0.8" points="{}"/>"#,
                points_attr(&frame, &means)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
