//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are the names listed
//! in [`KEYS`]. Values given later (command-line overrides) replace earlier
//! ones. Unless `lr_switch_epoch` is set explicitly it follows `epochs` at
//! three fifths of the run.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::BestOfMode;
use crate::gaussian::LossReduction;
use crate::graph::{KernelKind, DEFAULT_EXP_SIGMA, DEFAULT_SIM_EPS};
use crate::harness::EvalOptions;
use crate::model::ModelConfig;
use crate::train::TrainConfig;
use crate::trajdata::{FeatureMode, SCENE_GROUPS};

/// File name of the persisted resolved configuration.
pub const RESOLVED_FILE: &str = "config.resolved";

pub const KEYS: [&str; 28] = [
    "dataset_root",
    "heldout",
    "out_dir",
    "threads",
    "kernel",
    "kernel_sigma",
    "kernel_eps",
    "feature_mode",
    "n_stgcnn",
    "n_txpcnn",
    "embed_feat",
    "t_obs",
    "t_pred",
    "temporal_kernel",
    "epochs",
    "lr_initial",
    "lr_after",
    "lr_switch_epoch",
    "batch_windows",
    "seed",
    "clip_norm",
    "reduction",
    "samples",
    "eval_seed",
    "best_of",
    "window_stride",
    "budget_epochs",
    "repeats",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_root: Option<PathBuf>,
    pub heldout: String,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub kernel_name: String,
    pub kernel_sigma: f64,
    pub kernel_eps: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    /// Epochs per model in the ablation and data-efficiency harnesses.
    pub budget_epochs: usize,
    /// Models trained per fraction in the data-efficiency curve.
    pub repeats: usize,
    switch_explicit: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: None,
            heldout: "zara1".into(),
            out_dir: PathBuf::from("runs"),
            threads: 0,
            kernel_name: "sim".into(),
            kernel_sigma: DEFAULT_EXP_SIGMA,
            kernel_eps: DEFAULT_SIM_EPS,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            budget_epochs: 5,
            repeats: 3,
            switch_explicit: false,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dataset_root" => self.dataset_root = Some(PathBuf::from(v)),
            "heldout" => self.heldout = v.to_string(),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "threads" => self.threads = num(key, v)?,
            "kernel" => self.kernel_name = v.to_string(),
            "kernel_sigma" => self.kernel_sigma = num(key, v)?,
            "kernel_eps" => self.kernel_eps = num(key, v)?,
            "feature_mode" => self.model.feature_mode = FeatureMode::parse(v)?,
            "n_stgcnn" => self.model.n_stgcnn = num(key, v)?,
            "n_txpcnn" => self.model.n_txpcnn = num(key, v)?,
            "embed_feat" => self.model.embed_feat = num(key, v)?,
            "t_obs" => self.model.t_obs = num(key, v)?,
            "t_pred" => self.model.t_pred = num(key, v)?,
            "temporal_kernel" => self.model.temporal_kernel = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "lr_initial" => self.train.lr_initial = num(key, v)?,
            "lr_after" => self.train.lr_after = num(key, v)?,
            "lr_switch_epoch" => {
                self.train.lr_switch_epoch = num(key, v)?;
                self.switch_explicit = true;
            }
            "batch_windows" => self.train.batch_windows = num(key, v)?,
            "seed" => self.train.seed = num(key, v)?,
            "clip_norm" => {
                self.train.clip_norm = match v {
                    "none" | "off" => None,
                    _ => Some(num(key, v)?),
                }
            }
            "reduction" => self.train.reduction = LossReduction::parse(v)?,
            "samples" => self.eval.samples = num(key, v)?,
            "eval_seed" => self.eval.seed = num(key, v)?,
            "best_of" => self.eval.mode = BestOfMode::parse(v)?,
            "window_stride" => self.eval.window_stride = num(key, v)?,
            "budget_epochs" => self.budget_epochs = num(key, v)?,
            "repeats" => self.repeats = num(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `source` names the input
    /// in diagnostics.
    pub fn apply_text(&mut self, text: &str, source: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected `key = value`".into()))?;
            self.set(k.trim(), v).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(&std::fs::read_to_string(path)?, path)?;
        Ok(cfg)
    }

    /// Fills derived fields and checks every setting.
    pub fn resolve(mut self) -> Result<Self> {
        self.model.kernel = KernelKind::parse(&self.kernel_name, self.kernel_sigma, self.kernel_eps)?;
        if !self.switch_explicit {
            let d = TrainConfig::default();
            self.train.lr_switch_epoch = self.train.epochs * d.lr_switch_epoch / d.epochs;
        }
        if !SCENE_GROUPS.contains(&self.heldout.as_str()) {
            return Err(Error::UnknownScene {
                name: self.heldout.clone(),
                valid: SCENE_GROUPS.iter().map(|s| s.to_string()).collect(),
            });
        }
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.samples < 1 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.eval.window_stride < 1 {
            return Err(Error::Config("window_stride must be at least 1".into()));
        }
        if self.repeats < 1 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        Ok(self)
    }

    /// Every key with its current value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.train;
        let e = &self.eval;
        let root = self
            .dataset_root
            .as_ref()
            .map_or_else(String::new, |p| p.display().to_string());
        let clip = t.clip_norm.map_or_else(|| "none".to_string(), |c| c.to_string());
        let pairs: Vec<(&str, String)> = vec![
            ("dataset_root", root),
            ("heldout", self.heldout.clone()),
            ("out_dir", self.out_dir.display().to_string()),
            ("threads", self.threads.to_string()),
            ("kernel", self.kernel_name.clone()),
            ("kernel_sigma", self.kernel_sigma.to_string()),
            ("kernel_eps", self.kernel_eps.to_string()),
            ("feature_mode", m.feature_mode.name().into()),
            ("n_stgcnn", m.n_stgcnn.to_string()),
            ("n_txpcnn", m.n_txpcnn.to_string()),
            ("embed_feat", m.embed_feat.to_string()),
            ("t_obs", m.t_obs.to_string()),
            ("t_pred", m.t_pred.to_string()),
            ("temporal_kernel", m.temporal_kernel.to_string()),
            ("epochs", t.epochs.to_string()),
            ("lr_initial", t.lr_initial.to_string()),
            ("lr_after", t.lr_after.to_string()),
            ("lr_switch_epoch", t.lr_switch_epoch.to_string()),
            ("batch_windows", t.batch_windows.to_string()),
            ("seed", t.seed.to_string()),
            ("clip_norm", clip),
            ("reduction", t.reduction.name().into()),
            ("samples", e.samples.to_string()),
            ("eval_seed", e.seed.to_string()),
            ("best_of", e.mode.name().into()),
            ("window_stride", e.window_stride.to_string()),
            ("budget_epochs", self.budget_epochs.to_string()),
            ("repeats", self.repeats.to_string()),
        ];
        pairs
            .into_iter()
            .filter(|(k, v)| !(*k == "dataset_root" && v.is_empty()))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Writes [`Self::to_text`] to `dir/config.resolved`.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(RESOLVED_FILE);
        std::fs::write(&path, self.to_text())?;
        Ok(path)
    }
}
