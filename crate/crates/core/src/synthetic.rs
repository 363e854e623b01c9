//! Deterministic crowd simulator producing scene files in the ETH/UCY text
//! layout (`frame ped x y`, raw frame ids in steps of 10, one frame every
//! 0.4 s).
//!
//! Pedestrians follow a social-force model: each is pulled toward its goal
//! at a preferred speed and pushed away from nearby pedestrians. Some walk
//! in pairs, some stand still for a while, and some change goal once, so
//! paths are not all straight lines.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::Result;
use crate::trajdata::{FRAME_STEP_SECONDS, SCENE_GROUPS};

pub const RAW_FRAME_STRIDE: i64 = 10;
const SUBSTEPS: usize = 4;
const RELAX_TIME: f64 = 0.5;
const REPULSION: f64 = 2.1;
const REPULSION_RANGE: f64 = 0.3;
const BODY_DIAMETER: f64 = 0.6;
const PAIR_ATTRACTION: f64 = 1.0;

/// Side of the walkable rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrowdProfile {
    pub width: f64,
    pub height: f64,
    /// Expected arrivals per frame.
    pub arrival_rate: f64,
    pub speed_mean: f64,
    pub speed_std: f64,
    /// Entry and exit sides with relative weights.
    pub flows: Vec<(Side, Side, f64)>,
    pub pair_prob: f64,
    pub standing_prob: f64,
    pub turn_prob: f64,
    /// Observation noise (m).
    pub noise_std: f64,
}

impl CrowdProfile {
    /// Profile for one of the five scene groups.
    pub fn for_group(group: &str) -> Option<Self> {
        use Side::*;
        let base = CrowdProfile {
            width: 15.0,
            height: 12.0,
            arrival_rate: 0.15,
            speed_mean: 1.3,
            speed_std: 0.2,
            flows: vec![(Left, Right, 1.0), (Right, Left, 1.0)],
            pair_prob: 0.3,
            standing_prob: 0.05,
            turn_prob: 0.2,
            noise_std: 0.01,
        };
        let p = match group {
            "eth" => CrowdProfile {
                arrival_rate: 0.12,
                speed_mean: 1.4,
                flows: vec![(Bottom, Top, 2.0), (Top, Bottom, 1.0), (Left, Top, 0.3)],
                ..base
            },
            "hotel" => CrowdProfile {
                width: 6.0,
                height: 14.0,
                arrival_rate: 0.1,
                speed_mean: 1.1,
                flows: vec![(Bottom, Top, 1.0), (Top, Bottom, 1.0)],
                standing_prob: 0.1,
                ..base
            },
            "univ" => CrowdProfile {
                arrival_rate: 0.45,
                speed_mean: 1.0,
                speed_std: 0.25,
                flows: vec![
                    (Left, Right, 1.0),
                    (Right, Left, 1.0),
                    (Bottom, Top, 0.7),
                    (Top, Bottom, 0.7),
                    (Left, Top, 0.3),
                ],
                pair_prob: 0.4,
                standing_prob: 0.15,
                ..base
            },
            "zara1" => CrowdProfile {
                arrival_rate: 0.15,
                speed_mean: 1.2,
                flows: vec![(Left, Right, 1.0), (Right, Left, 1.0), (Bottom, Right, 0.2)],
                ..base
            },
            "zara2" => CrowdProfile {
                arrival_rate: 0.22,
                speed_mean: 1.15,
                flows: vec![(Left, Right, 1.0), (Right, Left, 1.2), (Top, Left, 0.2)],
                pair_prob: 0.4,
                standing_prob: 0.1,
                ..base
            },
            _ => return None,
        };
        Some(p)
    }
}

/// One observed position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row {
    pub frame: i64,
    pub ped: i64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
struct Agent {
    id: i64,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    speed: f64,
    partner: Option<i64>,
    /// Frames left standing before walking to the goal.
    standing: usize,
    /// Frame at which the goal switches, and the new goal.
    turn: Option<(usize, [f64; 2])>,
}

fn point_on(side: Side, w: f64, h: f64, u: f64) -> [f64; 2] {
    match side {
        Side::Left => [0.0, u * h],
        Side::Right => [w, u * h],
        Side::Bottom => [u * w, 0.0],
        Side::Top => [u * w, h],
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Simulates `frames` frames of one scene.
pub fn simulate(profile: &CrowdProfile, frames: usize, rng: &mut ChaCha8Rng) -> Vec<Row> {
    let (w, h) = (profile.width, profile.height);
    let arrivals = Poisson::new(profile.arrival_rate.max(1e-9)).expect("positive rate");
    let speed = Normal::new(profile.speed_mean, profile.speed_std).expect("finite speed");
    let noise = Normal::new(0.0, profile.noise_std).expect("finite noise");
    let total_weight: f64 = profile.flows.iter().map(|f| f.2).sum();
    let dt = FRAME_STEP_SECONDS / SUBSTEPS as f64;

    let mut agents: Vec<Agent> = Vec::new();
    let mut next_id = 1;
    let mut rows = Vec::new();
    for frame in 0..frames {
        let count = arrivals.sample(rng) as usize;
        for _ in 0..count {
            let mut pick = rng.random::<f64>() * total_weight;
            let &(entry, exit, _) = profile
                .flows
                .iter()
                .find(|f| {
                    pick -= f.2;
                    pick <= 0.0
                })
                .unwrap_or(&profile.flows[0]);
            let start = point_on(entry, w, h, rng.random_range(0.1..0.9));
            let goal = point_on(exit, w, h, rng.random_range(0.1..0.9));
            let pace = speed.sample(rng).clamp(0.4, 2.2);
            let standing = if rng.random::<f64>() < profile.standing_prob {
                rng.random_range(10..60)
            } else {
                0
            };
            let turn = (rng.random::<f64>() < profile.turn_prob).then(|| {
                let side = [Side::Left, Side::Right, Side::Bottom, Side::Top][rng.random_range(0..4)];
                (frame + rng.random_range(8..30), point_on(side, w, h, rng.random_range(0.1..0.9)))
            });
            let mut spawn = |pos: [f64; 2], partner: Option<i64>| {
                let dir = [goal[0] - pos[0], goal[1] - pos[1]];
                let d = norm(dir).max(1e-9);
                let id = next_id;
                next_id += 1;
                let moving = if standing > 0 { 0.0 } else { pace };
                agents.push(Agent {
                    id,
                    pos: [pos[0] + dir[0] / d * 0.3, pos[1] + dir[1] / d * 0.3],
                    vel: [dir[0] / d * moving, dir[1] / d * moving],
                    goal,
                    speed: pace,
                    partner,
                    standing,
                    turn,
                });
                id
            };
            let first = spawn(start, None);
            if rng.random::<f64>() < profile.pair_prob {
                let along_x = matches!(entry, Side::Left | Side::Right);
                let offset = if along_x { [0.0, 0.7] } else { [0.7, 0.0] };
                let second = spawn([start[0] + offset[0], start[1] + offset[1]], Some(first));
                if let Some(a) = agents.iter_mut().find(|a| a.id == first) {
                    a.partner = Some(second);
                }
            }
        }

        for _ in 0..SUBSTEPS {
            let snapshot: Vec<([f64; 2], i64)> = agents.iter().map(|a| (a.pos, a.id)).collect();
            let mut forces = Vec::with_capacity(agents.len());
            for a in &agents {
                if a.standing > 0 {
                    forces.push([-a.vel[0] / RELAX_TIME, -a.vel[1] / RELAX_TIME]);
                    continue;
                }
                let to_goal = [a.goal[0] - a.pos[0], a.goal[1] - a.pos[1]];
                let d = norm(to_goal).max(1e-9);
                let mut f = [
                    (a.speed * to_goal[0] / d - a.vel[0]) / RELAX_TIME,
                    (a.speed * to_goal[1] / d - a.vel[1]) / RELAX_TIME,
                ];
                let heading = norm(a.vel).max(1e-9);
                for &(p, id) in &snapshot {
                    if id == a.id {
                        continue;
                    }
                    let diff = [a.pos[0] - p[0], a.pos[1] - p[1]];
                    let dist = norm(diff).max(1e-3);
                    if Some(id) == a.partner {
                        let pull = PAIR_ATTRACTION * (dist - 0.7).clamp(-1.0, 1.0);
                        f[0] -= pull * diff[0] / dist;
                        f[1] -= pull * diff[1] / dist;
                        continue;
                    }
                    if dist > 4.0 {
                        continue;
                    }
                    // people ahead matter more than people behind
                    let cos = -(a.vel[0] * diff[0] + a.vel[1] * diff[1]) / (heading * dist);
                    let weight = 0.4 + 0.6 * (1.0 + cos) / 2.0;
                    let mag = REPULSION * ((BODY_DIAMETER - dist) / REPULSION_RANGE).exp() * weight;
                    f[0] += mag * diff[0] / dist;
                    f[1] += mag * diff[1] / dist;
                }
                forces.push(f);
            }
            for (a, f) in agents.iter_mut().zip(&forces) {
                a.vel[0] += f[0] * dt;
                a.vel[1] += f[1] * dt;
                let s = norm(a.vel);
                let cap = 1.3 * a.speed;
                if s > cap {
                    a.vel = [a.vel[0] * cap / s, a.vel[1] * cap / s];
                }
                a.pos[0] += a.vel[0] * dt;
                a.pos[1] += a.vel[1] * dt;
            }
        }

        for a in &agents {
            rows.push(Row {
                frame: frame as i64 * RAW_FRAME_STRIDE,
                ped: a.id,
                x: a.pos[0] + noise.sample(rng),
                y: a.pos[1] + noise.sample(rng),
            });
        }
        for a in agents.iter_mut() {
            a.standing = a.standing.saturating_sub(1);
            if let Some((at, goal)) = a.turn {
                if at == frame {
                    a.goal = goal;
                    a.turn = None;
                }
            }
        }
        agents.retain(|a| {
            let arrived = norm([a.goal[0] - a.pos[0], a.goal[1] - a.pos[1]]) < 0.5;
            let outside = a.pos[0] < -1.0 || a.pos[0] > w + 1.0 || a.pos[1] < -1.0 || a.pos[1] > h + 1.0;
            !(arrived || outside)
        });
    }
    rows
}

/// Scene files generated for each group, by stem.
pub fn scene_names(group: &str) -> &'static [&'static str] {
    match group {
        "eth" => &["biwi_eth"],
        "hotel" => &["biwi_hotel"],
        "univ" => &["students001", "students003"],
        "zara1" => &["crowds_zara01"],
        "zara2" => &["crowds_zara02"],
        _ => &[],
    }
}

pub fn write_rows<W: Write>(rows: &[Row], mut out: W) -> Result<()> {
    for r in rows {
        writeln!(out, "{}\t{}\t{:.3}\t{:.3}", r.frame, r.ped, r.x, r.y)?;
    }
    Ok(())
}

/// Writes `<root>/<group>/<scene>.txt` for all five groups and returns the
/// paths. Each scene has its own random stream derived from `seed`.
pub fn generate_dataset(root: &Path, seed: u64, frames: usize) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    let mut stream = 0;
    for group in SCENE_GROUPS {
        let profile = CrowdProfile::for_group(group).expect("known group");
        let dir = root.join(group);
        fs::create_dir_all(&dir)?;
        for scene in scene_names(group) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            stream += 1;
            let rows = simulate(&profile, frames, &mut rng);
            let path = dir.join(format!("{scene}.txt"));
            let mut buf = Vec::new();
            write_rows(&rows, &mut buf)?;
            fs::write(&path, buf)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
