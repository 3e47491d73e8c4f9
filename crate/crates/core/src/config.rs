//! Experiment configuration: flat `key = value` text with `#` comments.

use std::path::{Path, PathBuf};

use crate::dc::CgConfig;
use crate::error::{Error, Result};
use crate::io::parse_key_values;
use crate::model::{Arch, Strategy};
use crate::phantom::CorpusConfig;
use crate::sampling::{DensityConfig, SamplingMode};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: SamplingMode,
    pub rows: usize,
    pub cols: usize,
    pub coils: usize,
    pub acceleration: f64,
    pub k: usize,
    pub arch: Arch,
    pub strategy: Strategy,
    pub sigma: f64,
    /// Seed for initialization, noise and batching.
    pub seed: u64,
    pub corpus_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub val_every: usize,
    pub augment: bool,
    pub center_fraction: f64,
    pub center_trainable: bool,
    pub density_width: f64,
    pub net_depth: usize,
    pub net_width: usize,
    pub cg_iters: usize,
    pub cg_tol: f64,
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Checkpoint to start from (`Theta`-alone and joint runs).
    pub init_from: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: SamplingMode::OneD,
            rows: 64,
            cols: 64,
            coils: 4,
            acceleration: 4.0,
            k: 5,
            arch: Arch::Modl,
            strategy: Strategy::PhiAlone,
            sigma: 0.01,
            seed: 1,
            corpus_seed: 1,
            n_train: 60,
            n_val: 10,
            n_test: 10,
            epochs: 30,
            batch_size: 4,
            lr_phi: 1e-3,
            lr_theta: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            val_every: 1,
            augment: true,
            center_fraction: 0.04,
            center_trainable: false,
            density_width: 0.15,
            net_depth: 5,
            net_width: 16,
            cg_iters: 10,
            cg_tol: 1e-10,
            corpus_dir: PathBuf::from("corpus"),
            out_dir: PathBuf::from("run"),
            init_from: None,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

impl ExperimentConfig {
    /// Parses a config file; relative paths are resolved against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(&text, path)? {
            cfg.set(&k, &v)?;
        }
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` pair; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("invalid value `{value}` for `{key}`"));
        let uint = || value.parse::<usize>().map_err(|_| bad());
        let real = || value.parse::<f64>().map_err(|_| bad());
        match key {
            "mode" => {
                self.mode = match value {
                    "1d" => SamplingMode::OneD,
                    "2d" => SamplingMode::TwoD,
                    _ => return Err(bad()),
                }
            }
            "rows" => self.rows = uint()?,
            "cols" => self.cols = uint()?,
            "coils" => self.coils = uint()?,
            "acceleration" => self.acceleration = real()?,
            "k" => self.k = uint()?,
            "arch" => self.arch = Arch::parse(value).map_err(|_| bad())?,
            "strategy" => self.strategy = Strategy::parse(value).map_err(|_| bad())?,
            "sigma" => self.sigma = real()?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "corpus_seed" => self.corpus_seed = value.parse().map_err(|_| bad())?,
            "n_train" => self.n_train = uint()?,
            "n_val" => self.n_val = uint()?,
            "n_test" => self.n_test = uint()?,
            "epochs" => self.epochs = uint()?,
            "batch_size" => self.batch_size = uint()?,
            "lr_phi" => self.lr_phi = real()?,
            "lr_theta" => self.lr_theta = real()?,
            "beta1" => self.beta1 = real()?,
            "beta2" => self.beta2 = real()?,
            "eps" => self.eps = real()?,
            "val_every" => self.val_every = uint()?,
            "augment" => self.augment = parse_bool(value).ok_or_else(bad)?,
            "center_fraction" => self.center_fraction = real()?,
            "center_trainable" => self.center_trainable = parse_bool(value).ok_or_else(bad)?,
            "density_width" => self.density_width = real()?,
            "net_depth" => self.net_depth = uint()?,
            "net_width" => self.net_width = uint()?,
            "cg_iters" => self.cg_iters = uint()?,
            "cg_tol" => self.cg_tol = real()?,
            "corpus_dir" => self.corpus_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "init_from" => self.init_from = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.out_dir);
        if let Some(p) = &mut self.init_from {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.coils == 0 {
            return Err(Error::Config("rows, cols and coils must be >= 1".into()));
        }
        if !(self.acceleration >= 1.0) {
            return Err(Error::Config(format!("acceleration {} < 1", self.acceleration)));
        }
        if self.arch == Arch::Modl && self.k == 0 {
            return Err(Error::Config("k must be >= 1 for the modl architecture".into()));
        }
        self.cg().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train_config().validate()?;
        Ok(())
    }

    /// Location counts `(m_v, m_h)`; in 2-D mode the acceleration is split
    /// evenly between the axes.
    pub fn counts(&self) -> (usize, usize) {
        match self.mode {
            SamplingMode::OneD => (((self.rows as f64 / self.acceleration).round() as usize).max(1), self.cols),
            SamplingMode::TwoD => {
                let r = self.acceleration.sqrt();
                (
                    ((self.rows as f64 / r).round() as usize).max(1),
                    ((self.cols as f64 / r).round() as usize).max(1),
                )
            }
        }
    }

    pub fn density(&self) -> DensityConfig {
        DensityConfig {
            center_fraction: self.center_fraction,
            width: self.density_width,
            center_trainable: self.center_trainable,
        }
    }

    pub fn cg(&self) -> CgConfig {
        CgConfig {
            max_iters: self.cg_iters,
            tol: self.cg_tol,
        }
    }

    pub fn corpus(&self) -> CorpusConfig {
        CorpusConfig {
            seed: self.corpus_seed,
            n_train: self.n_train,
            n_val: self.n_val,
            n_test: self.n_test,
            rows: self.rows,
            cols: self.cols,
            num_coils: self.coils,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_phi: self.lr_phi,
            lr_theta: self.lr_theta,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            seed: self.seed,
            val_every: self.val_every,
            sigma: self.sigma,
            augment: self.augment,
            density: self.density(),
            checkpoint_on_divergence: Some(self.out_dir.join("diverged")),
        }
    }
}
