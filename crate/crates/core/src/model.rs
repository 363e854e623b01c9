//! Graph + temporal convolution embedding followed by a time-extrapolator
//! CNN that emits a bivariate Gaussian per pedestrian and future step.
//!
//! Tensor layout inside the network is `[channels × time × pedestrians]`.
//!
//! ST-GCNN layer `l` (`F_in → P̂` features):
//!
//! ```text
//! h   = prelu(Â · (V W + b))                 graph aggregation per step
//! c   = conv_time(h)                         kernel k along time, same padding
//! out = h + c                    if F_in == P̂
//!     = prelu(c + V R + r)       otherwise (pointwise projection skip)
//! ```
//!
//! The projection skip carries each pedestrian's own features past the
//! graph averaging. Without it the extrapolator only sees neighbourhood
//! means and cannot recover individual velocities in crowded scenes.
//!
//! The time-extrapolator treats the `T_o` observed steps as channels over a
//! `P̂ × N` grid. Its convolutions span the whole feature axis (extent
//! `2P̂ − 1`, padding `P̂ − 1`) and have extent 1 along pedestrians, so no
//! information moves between pedestrians outside the graph aggregation and
//! the model is exactly permutation-equivariant.
//!
//! ```text
//! y = prelu(conv(Vbar))              T_o → T_p channels, no residual
//! y = prelu(conv(y)) + y             (n_txpcnn − 1) times
//! y = conv(y)                        output convolution, T_p → T_p
//! raw = mix(y)                       P̂ features → 5 Gaussian channels
//! ```
//!
//! With the defaults (1 ST-GCNN layer, 5 extrapolator layers, `P̂ = 5`,
//! `k = 3`) the model has 7,563 trainable scalars:
//!
//! | block                     | count                        |
//! |---------------------------|------------------------------|
//! | ST-GCNN mix 2→5           | 2·5 + 5 = 15                 |
//! | ST-GCNN PReLU slopes      | 2                            |
//! | ST-GCNN temporal conv     | 5·5·3 + 5 = 80               |
//! | ST-GCNN projection skip   | 2·5 + 5 = 15                 |
//! | first extrapolator layer  | 8·12·9 + 12 + 1 = 877        |
//! | 4 residual layers         | 4 · (12·12·9 + 12 + 1) = 5,236 |
//! | output conv               | 12·12·9 + 12 = 1,308         |
//! | Gaussian head 5→5         | 5·5 + 5 = 30                 |

use std::fmt;

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::gaussian::{self, BiGaussSeq, RAW_CHANNELS};
use crate::graph::{build_st_graph, KernelKind, SpatioTemporalGraph};
use crate::tensor::{Tape, Tensor, Var};
use crate::trajdata::{to_features, FeatureMode, TrajectoryWindow};

pub const INPUT_FEAT: usize = 2;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub n_stgcnn: usize,
    pub n_txpcnn: usize,
    pub input_feat: usize,
    /// Embedding width `P̂`.
    pub embed_feat: usize,
    pub output_feat: usize,
    pub t_obs: usize,
    pub t_pred: usize,
    /// Temporal kernel extent of the ST-GCNN layers.
    pub temporal_kernel: usize,
    pub kernel: KernelKind,
    pub feature_mode: FeatureMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_stgcnn: 1,
            n_txpcnn: 5,
            input_feat: INPUT_FEAT,
            embed_feat: 5,
            output_feat: RAW_CHANNELS,
            t_obs: 8,
            t_pred: 12,
            temporal_kernel: 3,
            kernel: KernelKind::Sim,
            feature_mode: FeatureMode::Displacement,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_stgcnn < 1 || self.n_txpcnn < 1 {
            return bad(format!(
                "need at least one layer of each kind (n_stgcnn={}, n_txpcnn={})",
                self.n_stgcnn, self.n_txpcnn
            ));
        }
        if self.temporal_kernel % 2 == 0 {
            return bad(format!("temporal kernel must be odd, got {}", self.temporal_kernel));
        }
        if self.input_feat != INPUT_FEAT || self.output_feat != RAW_CHANNELS {
            return bad(format!(
                "input/output features are fixed at {INPUT_FEAT}/{RAW_CHANNELS}, got {}/{}",
                self.input_feat, self.output_feat
            ));
        }
        if self.embed_feat < 1 || self.t_obs < 1 || self.t_pred < 1 {
            return bad("embedding width and horizons must be positive".into());
        }
        self.kernel.validate()
    }

    /// Extent of the extrapolator convolutions along the feature axis.
    pub fn txp_feature_kernel(&self) -> usize {
        2 * self.embed_feat - 1
    }

    /// Names and shapes of every trainable tensor, in checkpoint order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let p = self.embed_feat;
        let (to, tp, kf) = (self.t_obs, self.t_pred, self.txp_feature_kernel());
        let mut out = Vec::new();
        for l in 0..self.n_stgcnn {
            let f_in = if l == 0 { self.input_feat } else { p };
            out.push((format!("stgcnn.{l}.mix.weight"), vec![p, f_in]));
            out.push((format!("stgcnn.{l}.mix.bias"), vec![p]));
            out.push((format!("stgcnn.{l}.prelu"), vec![1]));
            out.push((format!("stgcnn.{l}.tconv.weight"), vec![p, p, self.temporal_kernel]));
            out.push((format!("stgcnn.{l}.tconv.bias"), vec![p]));
            if f_in != p {
                out.push((format!("stgcnn.{l}.res.weight"), vec![p, f_in]));
                out.push((format!("stgcnn.{l}.res.bias"), vec![p]));
                out.push((format!("stgcnn.{l}.out_prelu"), vec![1]));
            }
        }
        for l in 0..self.n_txpcnn {
            let cin = if l == 0 { to } else { tp };
            out.push((format!("txpcnn.{l}.weight"), vec![tp, cin, kf]));
            out.push((format!("txpcnn.{l}.bias"), vec![tp]));
            out.push((format!("txpcnn.{l}.prelu"), vec![1]));
        }
        out.push(("txpcnn.out.weight".into(), vec![tp, tp, kf]));
        out.push(("txpcnn.out.bias".into(), vec![tp]));
        out.push(("head.weight".into(), vec![self.output_feat, p]));
        out.push(("head.bias".into(), vec![self.output_feat]));
        out
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stgcnn={} txpcnn={} embed={} k={} T_o={} T_p={} kernel={} features={}",
            self.n_stgcnn,
            self.n_txpcnn,
            self.embed_feat,
            self.temporal_kernel,
            self.t_obs,
            self.t_pred,
            self.kernel,
            self.feature_mode.name()
        )
    }
}

/// Closed-form number of trainable scalars.
pub fn param_count(config: &ModelConfig) -> usize {
    let p = config.embed_feat;
    let k = config.temporal_kernel;
    let stgcnn: usize = (0..config.n_stgcnn)
        .map(|l| {
            let f_in = if l == 0 { config.input_feat } else { p };
            let projection = if f_in != p { f_in * p + p + 1 } else { 0 };
            (f_in * p + p) + 1 + (p * p * k + p) + projection
        })
        .sum();
    let kf = config.txp_feature_kernel();
    let (to, tp) = (config.t_obs, config.t_pred);
    let first = to * tp * kf + tp + 1;
    let residual = (config.n_txpcnn - 1) * (tp * tp * kf + tp + 1);
    let output = tp * tp * kf + tp;
    let head = p * config.output_feat + config.output_feat;
    stgcnn + first + residual + output + head
}

/// Named trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    tensors: IndexMap<String, Tensor>,
}

impl ModelParams {
    pub fn from_tensors(tensors: IndexMap<String, Tensor>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    /// Checks names and shapes against `config`.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let expected = config.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "parameter set has {} tensors, configuration needs {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((name, shape), (have_name, have)) in expected.iter().zip(&self.tensors) {
            if name != have_name || shape.as_slice() != have.shape() {
                return Err(Error::Config(format!(
                    "parameter `{have_name}` {:?} does not match `{name}` {shape:?}",
                    have.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Fan-in scaled initialization: weights feeding a PReLU are drawn from
/// `N(0, 2/fan_in)`, the two linear output layers (`txpcnn.out`, `head`)
/// from `N(0, 1/fan_in)`. Biases are zero and PReLU slopes 0.25.
/// Deterministic in `seed`.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors = config
        .param_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let numel = shape.iter().product();
            let data = if name.ends_with("prelu") {
                vec![PRELU_INIT; numel]
            } else if name.ends_with("bias") {
                vec![0.0; numel]
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let gain = if is_linear_output(&name) { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
                (0..numel).map(|_| normal.sample(&mut rng)).collect()
            };
            let t = Tensor::new(shape, data).expect("shape from config");
            (name, t)
        })
        .collect();
    ModelParams { tensors }
}

fn is_linear_output(name: &str) -> bool {
    name.starts_with("txpcnn.out.") || name.starts_with("head.")
}

/// Parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: IndexMap<String, Var>,
}

impl ParamVars {
    pub fn bind(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        let vars = params
            .iter()
            .map(|(name, t)| {
                let v = if trainable {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Self { vars }
    }

    fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// One ST-GCNN layer on `v: [F_in×T×N]` with adjacency `[T×N×N]`.
pub fn stgcnn_layer(tape: &mut Tape, v: Var, adjacency: Var, vars: &ParamVars, layer: usize, temporal_kernel: usize) -> Result<Var> {
    let (sv, sa) = (tape.shape(v).to_vec(), tape.shape(adjacency).to_vec());
    if sv.len() != 3 || sa.len() != 3 || sa[0] != sv[1] || sa[1] != sv[2] || sa[2] != sv[2] {
        return Err(Error::shape("stgcnn_layer", &sv, &sa));
    }
    let p = |s: &str| vars.get(&format!("stgcnn.{layer}.{s}"));
    let mixed = tape.pointwise_mix(v, p("mix.weight")?, p("mix.bias")?)?;
    let per_step = tape.permute(mixed, &[1, 2, 0])?;
    let aggregated = tape.graph_aggregate(adjacency, per_step)?;
    let channels_first = tape.permute(aggregated, &[2, 0, 1])?;
    let h = tape.prelu(channels_first, p("prelu")?)?;
    let c = tape.conv_time(h, p("tconv.weight")?, p("tconv.bias")?, (temporal_kernel - 1) / 2)?;
    if sv[0] == tape.shape(h)[0] {
        tape.add(h, c)
    } else {
        let skip = tape.pointwise_mix(v, p("res.weight")?, p("res.bias")?)?;
        let sum = tape.add(c, skip)?;
        tape.prelu(sum, p("out_prelu")?)
    }
}

/// Extrapolator stack: `[P̂×T_o×N]` embedding to raw `[T_p×N×5]`.
pub fn txpcnn_stack(tape: &mut Tape, embedding: Var, vars: &ParamVars, config: &ModelConfig) -> Result<Var> {
    let s = tape.shape(embedding).to_vec();
    if s.len() != 3 || s[0] != config.embed_feat || s[1] != config.t_obs {
        return Err(Error::shape("txpcnn_stack", &s, &[config.embed_feat, config.t_obs, 0]));
    }
    let pad = config.embed_feat - 1;
    let p = |l: &str, s: &str| vars.get(&format!("txpcnn.{l}.{s}"));
    let time_as_channels = tape.permute(embedding, &[1, 0, 2])?;
    let c = tape.conv_axis(time_as_channels, p("0", "weight")?, p("0", "bias")?, pad)?;
    let mut y = tape.prelu(c, p("0", "prelu")?)?;
    for l in 1..config.n_txpcnn {
        let l = l.to_string();
        let c = tape.conv_axis(y, p(&l, "weight")?, p(&l, "bias")?, pad)?;
        let a = tape.prelu(c, p(&l, "prelu")?)?;
        y = tape.add(a, y)?;
    }
    let y = tape.conv_axis(y, p("out", "weight")?, p("out", "bias")?, pad)?;
    let features_first = tape.permute(y, &[1, 0, 2])?;
    let raw = tape.pointwise_mix(features_first, vars.get("head.weight")?, vars.get("head.bias")?)?;
    tape.permute(raw, &[1, 2, 0])
}

/// Records the full forward pass and returns the raw `[T_p×N×5]` output.
pub fn forward_raw(tape: &mut Tape, graph: &SpatioTemporalGraph, vars: &ParamVars, config: &ModelConfig) -> Result<Var> {
    if graph.t != config.t_obs {
        return Err(Error::shape("forward", &[graph.t, graph.n, 2], &[config.t_obs, graph.n, 2]));
    }
    let v = tape.constant(graph.vertices_tensor());
    let mut x = tape.permute(v, &[2, 0, 1])?;
    let a = tape.constant(graph.adjacency_tensor());
    for l in 0..config.n_stgcnn {
        x = stgcnn_layer(tape, x, a, vars, l, config.temporal_kernel)?;
    }
    txpcnn_stack(tape, x, vars, config)
}

/// Single-shot prediction of the whole horizon. The returned sequence has no
/// origin; see [`predict_window`].
pub fn forward(graph: &SpatioTemporalGraph, params: &ModelParams, config: &ModelConfig) -> Result<BiGaussSeq> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params, false);
    let raw = forward_raw(&mut tape, graph, &vars, config)?;
    gaussian::raw_to_params(tape.value(raw))
}

/// Builds the window's graph under `config` and returns its graph.
pub fn window_graph(window: &TrajectoryWindow, config: &ModelConfig) -> Result<SpatioTemporalGraph> {
    build_st_graph(&to_features(window, config.feature_mode), config.kernel)
}

/// Predicted distributions for a window, anchored at its last observed
/// positions.
pub fn predict_window(window: &TrajectoryWindow, params: &ModelParams, config: &ModelConfig) -> Result<BiGaussSeq> {
    let graph = window_graph(window, config)?;
    Ok(forward(&graph, params, config)?.with_origin(window.last_observed(), config.feature_mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::Track;

    fn window(n: usize) -> TrajectoryWindow {
        let obs: Vec<Track> = (0..n)
            .map(|i| (0..8).map(|t| [t as f64 * 0.4 + i as f64, (i as f64 * 0.7).sin() * t as f64 * 0.2]).collect())
            .collect();
        let pred = vec![vec![[0.0; 2]; 12]; n];
        TrajectoryWindow {
            obs,
            pred,
            ped_ids: (0..n as i64).collect(),
            start_frame: 0,
        }
    }

    #[test]
    fn default_param_count() {
        let cfg = ModelConfig::default();
        assert_eq!(param_count(&cfg), 7563);
        assert_eq!(init_params(&cfg, 0).scalar_count(), 7563);
    }

    #[test]
    fn param_count_matches_instantiated_tensors_for_other_shapes() {
        for (s, t, p, k) in [(1, 1, 2, 1), (3, 3, 5, 3), (7, 7, 4, 5), (2, 5, 1, 3)] {
            let cfg = ModelConfig {
                n_stgcnn: s,
                n_txpcnn: t,
                embed_feat: p,
                temporal_kernel: k,
                ..ModelConfig::default()
            };
            assert_eq!(param_count(&cfg), init_params(&cfg, 1).scalar_count(), "{cfg}");
        }
    }

    #[test]
    fn init_is_deterministic_in_seed() {
        let cfg = ModelConfig::default();
        assert_eq!(init_params(&cfg, 3), init_params(&cfg, 3));
        assert_ne!(init_params(&cfg, 3), init_params(&cfg, 4));
        let p = init_params(&cfg, 3);
        assert_eq!(p.get("stgcnn.0.prelu").unwrap().data(), &[0.25]);
        assert!(p.get("txpcnn.2.bias").unwrap().data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_weight_variance_is_fan_in_scaled() {
        let cfg = ModelConfig::default();
        let p = init_params(&cfg, 17);
        for (name, gain) in [("txpcnn.1.weight", 2.0), ("txpcnn.out.weight", 1.0)] {
            let w = p.get(name).unwrap();
            assert!(w.numel() >= 1000);
            let fan_in = (w.shape()[1] * w.shape()[2]) as f64;
            let n = w.numel() as f64;
            let mean = w.data().iter().sum::<f64>() / n;
            let var = w.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let target = gain / fan_in;
            assert!((var - target).abs() < 0.2 * target, "{name}: var {var} vs {target}");
        }
    }

    #[test]
    fn forward_shapes() {
        let cfg = ModelConfig::default();
        let params = init_params(&cfg, 0);
        for n in [1, 3, 7] {
            let seq = predict_window(&window(n), &params, &cfg).unwrap();
            assert_eq!((seq.t_pred, seq.n), (12, n));
            assert!(seq.params.iter().all(|g| g.sigma[0] > 0.0 && g.sigma[1] > 0.0));
        }
    }

    #[test]
    fn single_txp_layer_configuration() {
        let cfg = ModelConfig {
            n_txpcnn: 1,
            ..ModelConfig::default()
        };
        let params = init_params(&cfg, 0);
        let seq = predict_window(&window(3), &params, &cfg).unwrap();
        assert_eq!((seq.t_pred, seq.n), (12, 3));
    }

    #[test]
    fn distinct_seeds_give_distinct_outputs() {
        let cfg = ModelConfig::default();
        let w = window(3);
        let a = predict_window(&w, &init_params(&cfg, 1), &cfg).unwrap();
        let b = predict_window(&w, &init_params(&cfg, 2), &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn forward_rejects_wrong_time_extent() {
        let cfg = ModelConfig::default();
        let features: Vec<Track> = vec![vec![[0.0; 2]; 6]; 2];
        let g = build_st_graph(&features, KernelKind::Sim).unwrap();
        assert!(forward(&g, &init_params(&cfg, 0), &cfg).is_err());
    }

    #[test]
    fn stgcnn_layer_with_mixing_disabled_is_identity() {
        // W = rectangular identity, Â = I, centered delta in time, no skip;
        // inputs are non-negative so PReLU acts as the identity
        let (t, n, p) = (8, 3, 5);
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..2 * t * n).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let v = tape.constant(Tensor::new(vec![2, t, n], data.clone()).unwrap());
        let mut eye = vec![0.0; t * n * n];
        for s in 0..t {
            for i in 0..n {
                eye[s * n * n + i * n + i] = 1.0;
            }
        }
        let a = tape.constant(Tensor::new(vec![t, n, n], eye).unwrap());
        let mut w = vec![0.0; p * 2];
        w[0] = 1.0;
        w[3] = 1.0;
        let mut tw = vec![0.0; p * p * 3];
        for c in 0..p {
            tw[(c * p + c) * 3 + 1] = 1.0;
        }
        let mut params = IndexMap::new();
        params.insert("stgcnn.0.mix.weight".to_string(), Tensor::new(vec![p, 2], w).unwrap());
        params.insert("stgcnn.0.mix.bias".to_string(), Tensor::zeros(vec![p]));
        params.insert("stgcnn.0.prelu".to_string(), Tensor::scalar(PRELU_INIT));
        params.insert("stgcnn.0.tconv.weight".to_string(), Tensor::new(vec![p, p, 3], tw).unwrap());
        params.insert("stgcnn.0.tconv.bias".to_string(), Tensor::zeros(vec![p]));
        params.insert("stgcnn.0.res.weight".to_string(), Tensor::zeros(vec![p, 2]));
        params.insert("stgcnn.0.res.bias".to_string(), Tensor::zeros(vec![p]));
        params.insert("stgcnn.0.out_prelu".to_string(), Tensor::scalar(PRELU_INIT));
        let vars = ParamVars::bind(&mut tape, &ModelParams::from_tensors(params), false);
        let out = stgcnn_layer(&mut tape, v, a, &vars, 0, 3).unwrap();
        let out = tape.value(out);
        assert_eq!(out.shape(), &[p, t, n]);
        assert_eq!(&out.data()[..2 * t * n], &data[..]);
        assert!(out.data()[2 * t * n..].iter().all(|&x| x == 0.0));
    }
}
