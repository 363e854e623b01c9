//! Bivariate Gaussian output head.
//!
//! The network emits five raw channels per pedestrian and future step:
//! `(μx, μy, s_x, s_y, r)`. They map to a distribution as `σ = exp(s)` and
//! `ρ = tanh(r)` clamped to `|ρ| ≤ 1 − 1e-6`.

use std::f64::consts::PI;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};
use crate::trajdata::{FeatureMode, Point, Track};

pub const RHO_LIMIT: f64 = 1.0 - 1e-6;
/// Floor applied to `1 − ρ²` inside logs and denominators.
pub const MIN_ONE_MINUS_RHO2: f64 = 1e-12;

pub const RAW_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiGauss {
    pub mu: Point,
    pub sigma: [f64; 2],
    pub rho: f64,
}

impl BiGauss {
    pub fn new(mu: Point, sigma: [f64; 2], rho: f64) -> Result<Self> {
        if !(sigma[0] > 0.0 && sigma[1] > 0.0) || !mu.iter().chain(&sigma).all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("invalid Gaussian mu={mu:?} sigma={sigma:?}")));
        }
        if !rho.is_finite() {
            return Err(Error::Numeric(format!("invalid correlation {rho}")));
        }
        Ok(Self {
            mu,
            sigma,
            rho: rho.clamp(-RHO_LIMIT, RHO_LIMIT),
        })
    }

    pub fn from_raw(raw: &[f64]) -> Self {
        Self {
            mu: [raw[0], raw[1]],
            sigma: [raw[2].exp(), raw[3].exp()],
            rho: raw[4].tanh().clamp(-RHO_LIMIT, RHO_LIMIT),
        }
    }

    /// `−log p(target)`.
    pub fn nll(&self, target: Point) -> f64 {
        let u = (target[0] - self.mu[0]) / self.sigma[0];
        let v = (target[1] - self.mu[1]) / self.sigma[1];
        let q = (1.0 - self.rho * self.rho).max(MIN_ONE_MINUS_RHO2);
        let quad = u * u + v * v - 2.0 * self.rho * u * v;
        (2.0 * PI).ln() + self.sigma[0].ln() + self.sigma[1].ln() + 0.5 * q.ln() + quad / (2.0 * q)
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`.
    pub fn cholesky(&self) -> [[f64; 2]; 2] {
        let [sx, sy] = self.sigma;
        let q = (1.0 - self.rho * self.rho).max(0.0).sqrt();
        [[sx, 0.0], [self.rho * sy, q * sy]]
    }

    /// `μ + L z` for a standard-normal pair `z`.
    pub fn transform(&self, z: [f64; 2]) -> Point {
        let l = self.cholesky();
        [self.mu[0] + l[0][0] * z[0], self.mu[1] + l[1][0] * z[0] + l[1][1] * z[1]]
    }
}

/// Predicted distributions for every future step and pedestrian.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGaussSeq {
    pub t_pred: usize,
    pub n: usize,
    /// Row-major `T_p × N`.
    pub params: Vec<BiGauss>,
    /// Last observed absolute position per pedestrian.
    pub origin: Vec<Point>,
    pub mode: FeatureMode,
}

impl BiGaussSeq {
    pub fn at(&self, t: usize, n: usize) -> &BiGauss {
        &self.params[t * self.n + n]
    }

    pub fn with_origin(mut self, origin: Vec<Point>, mode: FeatureMode) -> Self {
        self.origin = origin;
        self.mode = mode;
        self
    }

    /// Converts per-step values (means or samples) to absolute positions,
    /// `N × T_p`.
    fn integrate(&self, step: impl Fn(usize, usize) -> Point) -> Vec<Track> {
        (0..self.n)
            .map(|n| {
                let mut pos = self.origin.get(n).copied().unwrap_or([0.0, 0.0]);
                (0..self.t_pred)
                    .map(|t| {
                        let d = step(t, n);
                        match self.mode {
                            FeatureMode::Displacement => {
                                pos = [pos[0] + d[0], pos[1] + d[1]];
                                pos
                            }
                            FeatureMode::Absolute => d,
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Mean trajectory in absolute coordinates, `N × T_p`.
    pub fn absolute_means(&self) -> Vec<Track> {
        self.integrate(|t, n| self.at(t, n).mu)
    }

    /// Reorders pedestrians: new `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let params = (0..self.t_pred)
            .flat_map(|t| perm.iter().map(move |&i| (t, i)))
            .map(|(t, i)| *self.at(t, i))
            .collect();
        Self {
            t_pred: self.t_pred,
            n: self.n,
            params,
            origin: perm.iter().filter_map(|&i| self.origin.get(i).copied()).collect(),
            mode: self.mode,
        }
    }

    /// Writes `t, ped, mu_x, mu_y, sigma_x, sigma_y, rho, abs_mu_x, abs_mu_y`.
    pub fn write_csv<W: Write>(&self, ped_ids: &[i64], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "t", "ped", "mu_x", "mu_y", "sigma_x", "sigma_y", "rho", "abs_mu_x", "abs_mu_y",
        ])?;
        let abs = self.absolute_means();
        for t in 0..self.t_pred {
            for n in 0..self.n {
                let g = self.at(t, n);
                let ped = ped_ids.get(n).copied().unwrap_or(n as i64);
                w.write_record(&[
                    t.to_string(),
                    ped.to_string(),
                    g.mu[0].to_string(),
                    g.mu[1].to_string(),
                    g.sigma[0].to_string(),
                    g.sigma[1].to_string(),
                    g.rho.to_string(),
                    abs[n][t][0].to_string(),
                    abs[n][t][1].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Maps raw network output `T_p × N × 5` to distributions. The origin is
/// left empty.
pub fn raw_to_params(raw: &Tensor) -> Result<BiGaussSeq> {
    let shape = raw.shape();
    if shape.len() != 3 || shape[2] != RAW_CHANNELS {
        return Err(Error::shape("raw_to_params", shape, &[0, 0, RAW_CHANNELS]));
    }
    if !raw.is_finite() {
        return Err(Error::Numeric("raw Gaussian parameters are not finite".into()));
    }
    let (t_pred, n) = (shape[0], shape[1]);
    let params = raw.data().chunks_exact(RAW_CHANNELS).map(BiGauss::from_raw).collect();
    Ok(BiGaussSeq {
        t_pred,
        n,
        params,
        origin: Vec::new(),
        mode: FeatureMode::default(),
    })
}

/// How per-window losses combine over pedestrians and steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossReduction {
    /// Sum over steps, mean over pedestrians.
    #[default]
    MeanOverPeds,
    /// Mean over every (step, pedestrian) term.
    MeanOverAll,
    Sum,
}

impl LossReduction {
    fn factor(self, t_pred: usize, n: usize) -> f64 {
        match self {
            LossReduction::MeanOverPeds => 1.0 / n as f64,
            LossReduction::MeanOverAll => 1.0 / (n * t_pred) as f64,
            LossReduction::Sum => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossReduction::MeanOverPeds => "mean",
            LossReduction::MeanOverAll => "mean_all",
            LossReduction::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(LossReduction::MeanOverPeds),
            "mean_all" => Ok(LossReduction::MeanOverAll),
            "sum" => Ok(LossReduction::Sum),
            other => Err(Error::Config(format!(
                "unknown loss reduction `{other}` (expected mean|mean_all|sum)"
            ))),
        }
    }
}

fn check_target(t_pred: usize, n: usize, target: &[Track]) -> Result<()> {
    if target.len() != n || target.iter().any(|tr| tr.len() != t_pred) {
        let got_t = target.first().map_or(0, Vec::len);
        return Err(Error::shape("nll", &[t_pred, n, 2], &[got_t, target.len(), 2]));
    }
    Ok(())
}

/// Negative log-likelihood of `target` (`N × T_p`, same space as the
/// means), summed over steps and averaged over pedestrians.
pub fn nll(seq: &BiGaussSeq, target: &[Track]) -> Result<f64> {
    nll_with(seq, target, LossReduction::MeanOverPeds)
}

pub fn nll_with(seq: &BiGaussSeq, target: &[Track], reduction: LossReduction) -> Result<f64> {
    check_target(seq.t_pred, seq.n, target)?;
    let mut total = 0.0;
    for t in 0..seq.t_pred {
        for (n, tr) in target.iter().enumerate() {
            total += seq.at(t, n).nll(tr[t]);
        }
    }
    Ok(total * reduction.factor(seq.t_pred, seq.n))
}

/// Loss and its gradient with respect to the raw `T_p × N × 5` channels.
pub fn nll_raw_with_grad(raw: &[f64], t_pred: usize, n: usize, target: &[Track], reduction: LossReduction) -> Result<(f64, Vec<f64>)> {
    if raw.len() != t_pred * n * RAW_CHANNELS {
        return Err(Error::shape("nll", &[t_pred, n, RAW_CHANNELS], &[raw.len()]));
    }
    check_target(t_pred, n, target)?;
    let scale = reduction.factor(t_pred, n);
    let mut grad = vec![0.0; raw.len()];
    let mut total = 0.0;
    for t in 0..t_pred {
        for (p, tr) in target.iter().enumerate() {
            let off = (t * n + p) * RAW_CHANNELS;
            let r = &raw[off..off + RAW_CHANNELS];
            let g = BiGauss::from_raw(r);
            total += g.nll(tr[t]);

            let [sx, sy] = g.sigma;
            let rho = g.rho;
            let u = (tr[t][0] - g.mu[0]) / sx;
            let v = (tr[t][1] - g.mu[1]) / sy;
            let one_minus = 1.0 - rho * rho;
            let floored = one_minus < MIN_ONE_MINUS_RHO2;
            let q = one_minus.max(MIN_ONE_MINUS_RHO2);
            let quad = u * u + v * v - 2.0 * rho * u * v;
            let d_rho = if floored {
                -u * v / q
            } else {
                -rho / q - u * v / q + rho * quad / (q * q)
            };
            let th = r[4].tanh();
            let d_r = if th.abs() > RHO_LIMIT { 0.0 } else { d_rho * (1.0 - th * th) };
            let out = &mut grad[off..off + RAW_CHANNELS];
            out[0] = -(u - rho * v) / (q * sx) * scale;
            out[1] = -(v - rho * u) / (q * sy) * scale;
            out[2] = (1.0 - u * (u - rho * v) / q) * scale;
            out[3] = (1.0 - v * (v - rho * u) / q) * scale;
            out[4] = d_r * scale;
        }
    }
    let value = total * scale;
    if !value.is_finite() {
        return Err(Error::Numeric("negative log-likelihood is not finite".into()));
    }
    Ok((value, grad))
}

/// Records the loss of raw output `raw` against `target` on the tape.
pub fn tape_nll(tape: &mut Tape, raw: Var, target: &[Track], reduction: LossReduction) -> Result<Var> {
    let shape = tape.shape(raw).to_vec();
    if shape.len() != 3 || shape[2] != RAW_CHANNELS {
        return Err(Error::shape("nll", &shape, &[0, 0, RAW_CHANNELS]));
    }
    let (value, grad) = nll_raw_with_grad(tape.value(raw).data(), shape[0], shape[1], target, reduction)?;
    tape.scalar_fn(raw, value, grad)
}

/// Draws `count` trajectories in absolute coordinates, each `N × T_p`.
///
/// Sample `k` comes from its own random stream, so the first `k` samples
/// are the same for any `count ≥ k`.
pub fn sample(seq: &BiGaussSeq, rng_seed: u64, count: usize) -> Vec<Vec<Track>> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(k as u64);
            let draws: Vec<Point> = seq
                .params
                .iter()
                .map(|g| {
                    let z = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                    g.transform(z)
                })
                .collect();
            seq.integrate(|t, n| draws[t * seq.n + n])
        })
        .collect()
}
