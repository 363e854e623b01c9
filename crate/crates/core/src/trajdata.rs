//! ETH/UCY-style trajectory files, fixed-length windows and leave-one-out
//! splits.
//!
//! A scene file holds one record per line, `frame_id ped_id x y`, separated
//! by whitespace (or a caller-chosen delimiter). Coordinates are world-frame
//! meters. Raw frame ids are usually spaced 10 apart; they are re-indexed to
//! consecutive steps at load time.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// The five scene groups of the ETH and UCY benchmarks.
pub const SCENE_GROUPS: [&str; 5] = ["eth", "hotel", "univ", "zara1", "zara2"];

/// Default sampling interval between consecutive steps.
pub const FRAME_STEP_SECONDS: f64 = 0.4;

pub type Point = [f64; 2];

/// Positions of one pedestrian over consecutive steps.
pub type Track = Vec<Point>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    /// Consecutive step index after re-indexing.
    pub frame_id: i64,
    pub ped_id: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryScene {
    pub scene_id: String,
    /// Scene group used for leave-one-out splits, e.g. `zara1`.
    pub group: String,
    /// Sorted by `(frame_id, ped_id)`; pairs are unique.
    pub records: Vec<Record>,
    pub frame_step_seconds: f64,
}

impl TrajectoryScene {
    pub fn pedestrian_count(&self) -> usize {
        self.records.iter().map(|r| r.ped_id).collect::<BTreeSet<_>>().len()
    }

    pub fn frame_range(&self) -> Option<(i64, i64)> {
        Some((self.records.first()?.frame_id, self.records.last()?.frame_id))
    }
}

/// Observation/prediction window; every pedestrian is present at all
/// `t_obs + t_pred` consecutive steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    /// `N × t_obs` absolute positions.
    pub obs: Vec<Track>,
    /// `N × t_pred` absolute positions.
    pub pred: Vec<Track>,
    pub ped_ids: Vec<i64>,
    pub start_frame: i64,
}

impl TrajectoryWindow {
    pub fn n_peds(&self) -> usize {
        self.obs.len()
    }

    pub fn t_obs(&self) -> usize {
        self.obs.first().map_or(0, Vec::len)
    }

    pub fn t_pred(&self) -> usize {
        self.pred.first().map_or(0, Vec::len)
    }

    pub fn last_observed(&self) -> Vec<Point> {
        self.obs.iter().map(|t| *t.last().expect("non-empty track")).collect()
    }

    /// Per-step displacements over the prediction horizon, starting from
    /// the last observed position.
    pub fn target_displacements(&self) -> Vec<Track> {
        self.obs
            .iter()
            .zip(&self.pred)
            .map(|(o, p)| {
                let mut prev = *o.last().expect("non-empty track");
                p.iter()
                    .map(|&q| {
                        let d = [q[0] - prev[0], q[1] - prev[1]];
                        prev = q;
                        d
                    })
                    .collect()
            })
            .collect()
    }

    /// Reorders pedestrians: new pedestrian `i` is old pedestrian `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            obs: perm.iter().map(|&i| self.obs[i].clone()).collect(),
            pred: perm.iter().map(|&i| self.pred[i].clone()).collect(),
            ped_ids: perm.iter().map(|&i| self.ped_ids[i]).collect(),
            start_frame: self.start_frame,
        }
    }
}

/// Coordinates fed to the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMode {
    /// Per-step displacements; predictions are integrated from the last
    /// observed position.
    #[default]
    Displacement,
    /// Raw world positions.
    Absolute,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Displacement => "displacement",
            FeatureMode::Absolute => "absolute",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "displacement" | "relative" => Ok(FeatureMode::Displacement),
            "absolute" => Ok(FeatureMode::Absolute),
            other => Err(Error::Config(format!(
                "unknown feature mode `{other}` (expected displacement|absolute)"
            ))),
        }
    }
}

/// Parses one scene file. `delimiter = None` splits on any whitespace.
pub fn load_scene(path: &Path, delimiter: Option<char>) -> Result<TrajectoryScene> {
    let text = fs::read_to_string(path)?;
    let scene_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let scene = parse_scene(&text, path, delimiter, &scene_id)?;
    Ok(scene)
}

fn parse_scene(text: &str, path: &Path, delimiter: Option<char>, scene_id: &str) -> Result<TrajectoryScene> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut raw: Vec<(i64, i64, f64, f64, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match delimiter {
            Some(d) => line.split(d).map(str::trim).filter(|f| !f.is_empty()).collect(),
            None => line.split_whitespace().collect(),
        };
        if fields.len() != 4 {
            return Err(err(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |k: usize, what: &str| -> Result<f64> {
            fields[k]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(lineno, format!("invalid {what} `{}`", fields[k])))
        };
        let integral = |v: f64, what: &str| -> Result<i64> {
            if v.fract() != 0.0 {
                return Err(err(lineno, format!("{what} `{v}` is not an integer")));
            }
            Ok(v as i64)
        };
        let frame = integral(num(0, "frame id")?, "frame id")?;
        let ped = integral(num(1, "pedestrian id")?, "pedestrian id")?;
        raw.push((frame, ped, num(2, "x")?, num(3, "y")?, lineno));
    }
    if raw.is_empty() {
        return Err(Error::EmptyScene(scene_id.to_string()));
    }
    raw.sort_by_key(|r| (r.0, r.1));
    for pair in raw.windows(2) {
        if (pair[0].0, pair[0].1) == (pair[1].0, pair[1].1) {
            let line = pair[0].4.max(pair[1].4);
            return Err(err(
                line,
                format!("duplicate record for frame {} pedestrian {}", pair[1].0, pair[1].1),
            ));
        }
    }
    let frames: BTreeSet<i64> = raw.iter().map(|r| r.0).collect();
    let first = *frames.iter().next().expect("non-empty");
    let stride = frames
        .iter()
        .map(|f| f - first)
        .fold(0, gcd)
        .max(1);
    let records = raw
        .into_iter()
        .map(|(f, p, x, y, _)| Record {
            frame_id: (f - first) / stride,
            ped_id: p,
            x,
            y,
        })
        .collect();
    Ok(TrajectoryScene {
        scene_id: scene_id.to_string(),
        group: scene_id.to_string(),
        records,
        frame_step_seconds: FRAME_STEP_SECONDS,
    })
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every scene under `root`.
///
/// `<root>/<group>/<scene>.txt` files belong to `<group>`; `.txt` files
/// directly under `root` form a group named after their stem. Scene ids are
/// `<group>/<scene>`.
pub fn load_dataset(root: &Path) -> Result<Vec<TrajectoryScene>> {
    if !root.is_dir() {
        return Err(Error::NoScenes(root.to_path_buf()));
    }
    let mut scenes = Vec::new();
    for file in scene_files(root)? {
        let mut scene = load_scene(&file, None)?;
        scene.group = scene.scene_id.clone();
        scene.scene_id = format!("{0}/{0}", scene.group);
        scenes.push(scene);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let group = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        for file in scene_files(&dir)? {
            let mut scene = load_scene(&file, None)?;
            scene.scene_id = format!("{group}/{}", scene.scene_id);
            scene.group = group.clone();
            scenes.push(scene);
        }
    }
    if scenes.is_empty() {
        return Err(Error::NoScenes(root.to_path_buf()));
    }
    Ok(scenes)
}

/// All windows of `t_obs + t_pred` consecutive steps, one per start frame at
/// `stride` spacing. A window holds exactly the pedestrians present at every
/// one of its steps, ordered by pedestrian id; empty windows are dropped.
pub fn extract_windows(scene: &TrajectoryScene, t_obs: usize, t_pred: usize, stride: usize) -> Vec<TrajectoryWindow> {
    assert!(t_obs >= 1 && t_pred >= 1 && stride >= 1, "window lengths and stride must be positive");
    let len = (t_obs + t_pred) as i64;
    let mut by_frame: BTreeMap<i64, HashMap<i64, Point>> = BTreeMap::new();
    for r in &scene.records {
        by_frame.entry(r.frame_id).or_default().insert(r.ped_id, [r.x, r.y]);
    }
    let Some((first, last)) = scene.frame_range() else {
        return Vec::new();
    };
    let mut windows = Vec::new();
    let mut start = first;
    while start + len - 1 <= last {
        if let Some(w) = window_at(&by_frame, start, t_obs, t_pred) {
            windows.push(w);
        }
        start += stride as i64;
    }
    windows
}

fn window_at(
    by_frame: &BTreeMap<i64, HashMap<i64, Point>>,
    start: i64,
    t_obs: usize,
    t_pred: usize,
) -> Option<TrajectoryWindow> {
    let len = (t_obs + t_pred) as i64;
    let frames: Vec<&HashMap<i64, Point>> = (start..start + len)
        .map(|f| by_frame.get(&f))
        .collect::<Option<_>>()?;
    let mut peds: Vec<i64> = frames[0]
        .keys()
        .copied()
        .filter(|p| frames.iter().all(|f| f.contains_key(p)))
        .collect();
    if peds.is_empty() {
        return None;
    }
    peds.sort_unstable();
    let track = |p: i64, range: std::ops::Range<usize>| -> Track { range.map(|t| frames[t][&p]).collect() };
    Some(TrajectoryWindow {
        obs: peds.iter().map(|&p| track(p, 0..t_obs)).collect(),
        pred: peds.iter().map(|&p| track(p, t_obs..t_obs + t_pred)).collect(),
        ped_ids: peds,
        start_frame: start,
    })
}

/// Splits scenes into (train, test) with `held_out`'s group as the test
/// set. Both halves are ordered by scene id, so the result does not depend
/// on input order.
pub fn leave_one_out_split(
    scenes: &[TrajectoryScene],
    held_out: &str,
) -> Result<(Vec<TrajectoryScene>, Vec<TrajectoryScene>)> {
    let groups: BTreeSet<&str> = scenes.iter().map(|s| s.group.as_str()).collect();
    if !groups.contains(held_out) {
        return Err(Error::UnknownScene {
            name: held_out.to_string(),
            valid: groups.into_iter().map(String::from).collect(),
        });
    }
    let mut sorted: Vec<&TrajectoryScene> = scenes.iter().collect();
    sorted.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    let (test, train): (Vec<_>, Vec<_>) = sorted.into_iter().cloned().partition(|s| s.group == held_out);
    Ok((train, test))
}

/// Network input features, `N × t_obs × 2`.
///
/// In displacement mode `feat[n][t] = pos[n][t] − pos[n][t−1]` with
/// `feat[n][0] = (0, 0)`.
pub fn to_features(window: &TrajectoryWindow, mode: FeatureMode) -> Vec<Track> {
    match mode {
        FeatureMode::Absolute => window.obs.clone(),
        FeatureMode::Displacement => window
            .obs
            .iter()
            .map(|track| {
                let mut out = Vec::with_capacity(track.len());
                out.push([0.0, 0.0]);
                out.extend(track.windows(2).map(|w| [w[1][0] - w[0][0], w[1][1] - w[0][1]]));
                out
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scene_from(text: &str) -> Result<TrajectoryScene> {
        parse_scene(text, Path::new("mem.txt"), None, "mem")
    }

    fn straight_scene(peds: &[(i64, i64, i64)]) -> TrajectoryScene {
        // (ped, first frame, frame count), raw ids at stride 10
        let mut text = String::new();
        for &(p, f0, count) in peds {
            for f in f0..f0 + count {
                text.push_str(&format!("{} {} {} {}\n", f * 10, p, f as f64 * 0.5, p as f64));
            }
        }
        scene_from(&text).unwrap()
    }

    #[test]
    fn parse_two_records_and_reindex() {
        let s = scene_from("0 1 0.0 0.0\n10 1 1.0 0.0\n").unwrap();
        assert_eq!(s.records.len(), 2);
        assert_eq!(s.records[1].frame_id, 1);
        assert!(s.records.iter().all(|r| r.ped_id == 1));
    }

    #[test]
    fn parse_float_formatted_ids_and_tabs() {
        let s = scene_from("780.0\t1.0\t8.46\t3.59\n790.0\t1.0\t9.57\t3.79\n").unwrap();
        assert_eq!(s.records[0].frame_id, 0);
        assert_eq!(s.records[1].frame_id, 1);
    }

    #[test]
    fn duplicate_pair_is_parse_error() {
        let err = scene_from("0 1 0 0\n10 1 1 0\n0 1 2 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = scene_from("0 1 0 0\n10 1 abc 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(err.to_string().contains(":2:"));
    }

    #[test]
    fn empty_file_is_empty_scene() {
        assert!(matches!(scene_from("\n\n"), Err(Error::EmptyScene(_))));
    }

    #[test]
    fn custom_delimiter() {
        let s = parse_scene("0,1,0.0,0.0\n10,1,1.0,0.0\n", Path::new("m"), Some(','), "m").unwrap();
        assert_eq!(s.records.len(), 2);
    }

    #[test]
    fn full_length_track_gives_one_window() {
        let w = extract_windows(&straight_scene(&[(1, 0, 20)]), 8, 12, 1);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].n_peds(), 1);
        assert_eq!((w[0].t_obs(), w[0].t_pred()), (8, 12));
    }

    #[test]
    fn short_track_gives_no_window() {
        assert!(extract_windows(&straight_scene(&[(1, 0, 19)]), 8, 12, 1).is_empty());
    }

    #[test]
    fn two_peds_twenty_one_frames_give_two_windows() {
        let w = extract_windows(&straight_scene(&[(1, 0, 21), (2, 0, 21)]), 8, 12, 1);
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|w| w.n_peds() == 2));
        assert_eq!(w[1].start_frame, 1);
    }

    #[test]
    fn partial_presence_is_excluded() {
        let w = extract_windows(&straight_scene(&[(1, 0, 20), (2, 3, 20)]), 8, 12, 1);
        // starts 1 and 2 have no pedestrian present for all 20 frames
        assert_eq!(w.len(), 2);
        assert_eq!((w[0].start_frame, w[0].ped_ids.clone()), (0, vec![1]));
        assert_eq!((w[1].start_frame, w[1].ped_ids.clone()), (3, vec![2]));
    }

    #[test]
    fn features_constant_velocity_and_stationary() {
        let obs: Track = (0..8).map(|t| [t as f64, 2.0]).collect();
        let still: Track = vec![[3.0, 4.0]; 8];
        let w = TrajectoryWindow {
            obs: vec![obs, still],
            pred: vec![vec![[0.0; 2]; 12]; 2],
            ped_ids: vec![1, 2],
            start_frame: 0,
        };
        let f = to_features(&w, FeatureMode::Displacement);
        assert_eq!(f[0][0], [0.0, 0.0]);
        assert!(f[0][1..].iter().all(|d| *d == [1.0, 0.0]));
        assert!(f[1].iter().all(|d| *d == [0.0, 0.0]));
        assert_eq!(to_features(&w, FeatureMode::Absolute), w.obs);
    }

    fn sample_scenes() -> Vec<TrajectoryScene> {
        SCENE_GROUPS
            .iter()
            .map(|g| {
                let mut s = straight_scene(&[(1, 0, 20)]);
                s.group = g.to_string();
                s.scene_id = format!("{g}/{g}");
                s
            })
            .collect()
    }

    #[test]
    fn split_partitions_groups() {
        let scenes = sample_scenes();
        let (train, test) = leave_one_out_split(&scenes, "zara1").unwrap();
        assert_eq!(train.len(), 4);
        assert_eq!(test.len(), 1);
        assert_eq!(test[0].group, "zara1");
        assert!(train.iter().all(|s| s.group != "zara1"));
    }

    #[test]
    fn split_unknown_group_lists_valid() {
        let scenes: Vec<_> = sample_scenes().into_iter().filter(|s| s.group != "eth").collect();
        let err = leave_one_out_split(&scenes, "eth").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("hotel") && msg.contains("zara2"), "{msg}");
    }

    #[test]
    fn split_is_stable_under_reordering() {
        let scenes = sample_scenes();
        let mut shuffled = scenes.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        assert_eq!(
            leave_one_out_split(&scenes, "univ").unwrap(),
            leave_one_out_split(&shuffled, "univ").unwrap()
        );
    }

    proptest! {
        #[test]
        fn cumulative_features_recover_positions(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 8)
        ) {
            let track: Track = pts.iter().map(|&(x, y)| [x, y]).collect();
            let w = TrajectoryWindow { obs: vec![track.clone()], pred: vec![vec![[0.0; 2]]], ped_ids: vec![0], start_frame: 0 };
            let f = to_features(&w, FeatureMode::Displacement);
            let mut acc = track[0];
            for t in 0..8 {
                acc = [acc[0] + f[0][t][0], acc[1] + f[0][t][1]];
                for k in 0..2 {
                    let scale = track[t][k].abs().max(1.0);
                    prop_assert!((acc[k] - track[t][k]).abs() <= 1e-9 * scale * 8.0);
                }
            }
        }

        #[test]
        fn strided_windows_are_subset(stride in 1usize..6, offset in 0i64..5) {
            let scene = straight_scene(&[(1, 0, 40), (2, offset, 30), (3, 5, 25)]);
            let all = extract_windows(&scene, 8, 12, 1);
            for w in extract_windows(&scene, 8, 12, stride) {
                prop_assert!(all.contains(&w));
            }
        }
    }
}
