//! Independent reference implementations and fixtures shared by the
//! integration tests. Nothing here calls the library code it is used to
//! check.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stgcnn::tensor::{Tape, Tensor, Var};
use stgcnn::trajdata::{Point, Track, TrajectoryWindow};

pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely at
/// `FD_REL_TOL * FD_FLOOR`.
pub const FD_FLOOR: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| normal(rng)).collect()).unwrap()
}

/// Relative error with a floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

/// Central differences of a scalar function of a flat vector.
pub fn fd_gradient(x: &[f64], f: &mut dyn FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            work[i] = x[i] + FD_STEP;
            let up = f(&work);
            work[i] = x[i] - FD_STEP;
            let down = f(&work);
            work[i] = x[i];
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Worst relative error between the tape gradient of every input and
/// central differences of the same graph.
pub fn tape_gradcheck(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let analytic = tape.grad(vars[i]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.numel()]);
        let numeric = fd_gradient(x.data(), &mut |perturbed| {
            let mut tp = Tape::new();
            let vs: Vec<Var> = inputs
                .iter()
                .enumerate()
                .map(|(k, y)| {
                    if k == i {
                        tp.constant(Tensor::new(y.shape().to_vec(), perturbed.to_vec()).unwrap())
                    } else {
                        tp.constant(y.clone())
                    }
                })
                .collect();
            let l = build(&mut tp, &vs);
            tp.value(l).data()[0]
        });
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max(rel_err(*a, *n));
        }
    }
    worst
}

/// `−log` of the bivariate normal density written out directly.
pub fn nll_density(mu: Point, sigma: [f64; 2], rho: f64, x: Point) -> f64 {
    let dx = x[0] - mu[0];
    let dy = x[1] - mu[1];
    let det = sigma[0] * sigma[0] * sigma[1] * sigma[1] * (1.0 - rho * rho);
    // inverse covariance applied to (dx, dy)
    let cov = [[sigma[0] * sigma[0], rho * sigma[0] * sigma[1]], [rho * sigma[0] * sigma[1], sigma[1] * sigma[1]]];
    let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let m = dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
    let density = (-0.5 * m).exp() / (2.0 * PI * det.sqrt());
    -density.ln()
}

/// `D^{-1/2} (A + I) D^{-1/2}` with `D` the degree matrix of `A + I`.
pub fn normalize_oracle(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let hat = a + DMatrix::identity(n, n);
    let deg = hat.row_sum();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(n, deg.iter().map(|v| 1.0 / v.sqrt())));
    &d * hat * &d
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Ordinary least squares line through `track` against time, evaluated at
/// the following `steps` time indices.
pub fn ols_extrapolate(track: &[Point], steps: usize) -> Track {
    let n = track.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
    let solve = |c: usize| {
        let y = DVector::from_iterator(n, track.iter().map(|p| p[c]));
        let svd = design.clone().svd(true, true);
        svd.solve(&y, 1e-12).unwrap()
    };
    let (bx, by) = (solve(0), solve(1));
    (n..n + steps)
        .map(|t| [bx[0] + bx[1] * t as f64, by[0] + by[1] * t as f64])
        .collect()
}

pub fn ade_oracle(pred: &[Track], gt: &[Track]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for (p, g) in pred.iter().zip(gt) {
        for (a, b) in p.iter().zip(g) {
            total += ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            count += 1;
        }
    }
    total / count as f64
}

pub fn fde_oracle(pred: &[Track], gt: &[Track]) -> f64 {
    let last: Vec<Track> = pred.iter().map(|p| vec![*p.last().unwrap()]).collect();
    let gl: Vec<Track> = gt.iter().map(|g| vec![*g.last().unwrap()]).collect();
    ade_oracle(&last, &gl)
}

/// Pedestrians walking with random headings and speeds plus small noise.
pub fn random_window(rng: &mut ChaCha8Rng, n: usize, t_obs: usize, t_pred: usize) -> TrajectoryWindow {
    let len = t_obs + t_pred;
    let tracks: Vec<Track> = (0..n)
        .map(|_| {
            let mut p = [rng.random_range(0.0..12.0), rng.random_range(0.0..8.0)];
            let heading: f64 = rng.random_range(0.0..2.0 * PI);
            let speed: f64 = rng.random_range(0.1..0.6);
            (0..len)
                .map(|_| {
                    p = [
                        p[0] + speed * heading.cos() + 0.03 * normal(rng),
                        p[1] + speed * heading.sin() + 0.03 * normal(rng),
                    ];
                    p
                })
                .collect()
        })
        .collect();
    TrajectoryWindow {
        obs: tracks.iter().map(|t| t[..t_obs].to_vec()).collect(),
        pred: tracks.iter().map(|t| t[t_obs..].to_vec()).collect(),
        ped_ids: (0..n as i64).map(|i| 100 + i).collect(),
        start_frame: 0,
    }
}

/// Writes a small synthetic dataset under `root`.
pub fn synthetic_root(root: &Path, seed: u64, frames: usize) {
    stgcnn::synthetic::generate_dataset(root, seed, frames).unwrap();
}
