//! Training loop, evaluation and loss-history output.

use std::path::{Path, PathBuf};

use crate::denoiser::GradBuffer;
use crate::error::{Error, Result};
use crate::fourier::Sampler2D;
use crate::metrics::{psnr, ssim};
use crate::model::{example_loss_grad, reconstruct_with, simulate, Accumulator, Example, ModelState, Strategy};
use crate::mri::CoilSet;
use crate::rng::Rng;
use crate::sampling::{DensityConfig, ThetaGrad, ThetaParams};
use crate::scalar::Real;
use crate::tensor::CTensor;

// Stream tags for derived seeds.
const TAG_SHUFFLE: u64 = 11;
const TAG_NOISE: u64 = 12;
const TAG_AUGMENT: u64 = 13;
const TAG_EVAL_NOISE: u64 = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_phi: f64,
    pub lr_theta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Validate every `val_every` epochs (and after the last one); 0 disables.
    pub val_every: usize,
    /// Measurement noise level for training and validation data.
    pub sigma: f64,
    /// Fresh variable-density pattern per item and epoch when training `Phi`
    /// alone.
    pub augment: bool,
    pub density: DensityConfig,
    /// Where the last finite state is written if training diverges.
    pub checkpoint_on_divergence: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 4,
            lr_phi: 1e-3,
            lr_theta: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            val_every: 1,
            sigma: 0.0,
            augment: false,
            density: DensityConfig::default(),
            checkpoint_on_divergence: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_phi >= 0.0 && self.lr_theta >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        if !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in (0, 1) and eps > 0".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_psnr: Option<f64>,
}

/// Noise realization `sigma * n` for k-space of shape `dims`.
pub fn noise_for<T: Real>(sigma: f64, dims: &[usize], rng: &mut Rng) -> Result<Option<CTensor<T>>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    Ok(Some(rng.randn_complex::<T>(dims)?.scale(T::of(sigma))))
}

fn kspace_dims<T: Real>(coils: &CoilSet<T>, s: &Sampler2D<T>) -> [usize; 3] {
    let (mv, mh) = s.kspace_shape();
    [coils.num_coils(), mv, mh]
}

/// Mean loss and gradients over a batch where item `i` is acquired with
/// `samplers[i]`. Location gradients are only formed when every item shares
/// the state's own pattern.
fn batch_gradients<T: Real>(
    state: &ModelState<T>,
    coils: &CoilSet<T>,
    items: &[(Example<T>, Option<Sampler2D<T>>)],
) -> Result<(T, GradBuffer<T>, ThetaGrad<T>)> {
    let realized = state.theta.realize()?;
    let (mv, mh) = realized.sampler.kspace_shape();
    let weight = T::one() / T::of_usize(items.len());
    let want_theta = state.strategy.trains_theta();
    let mut phi = state.phi.zeros_like();
    let mut gv = vec![T::zero(); mv];
    let mut gh = vec![T::zero(); mh];
    let mut loss = T::zero();
    for (ex, own) in items {
        let s = own.as_ref().unwrap_or(&realized.sampler);
        let theta_here = want_theta && own.is_none();
        let acc = Accumulator {
            phi: state.strategy.trains_phi().then_some(&mut phi),
            vertical: theta_here.then_some(gv.as_mut_slice()),
            horizontal: (theta_here && state.theta.horizontal.is_some()).then_some(gh.as_mut_slice()),
        };
        loss += example_loss_grad(state, s, coils, ex, weight, acc)?;
    }
    let theta = if want_theta {
        state.theta.raw_grad(&realized, &gv, &gh)?
    } else {
        ThetaGrad::zeros_like(&state.theta)
    };
    Ok((loss * weight, phi, theta))
}

fn apply_step<T: Real>(state: &mut ModelState<T>, phi_grad: &GradBuffer<T>, theta_grad: &ThetaGrad<T>) -> Result<()> {
    if state.strategy.trains_phi() {
        let mut flat = state.phi.to_flat();
        state.opt_phi.step(&mut flat, &phi_grad.to_flat())?;
        state.phi.set_flat(&flat)?;
    }
    if state.strategy.trains_theta() {
        state.theta.apply_grad(theta_grad, &mut state.opt_theta)?;
    }
    state.step += 1;
    Ok(())
}

/// Runs `cfg.epochs` epochs of minibatch Adam on `train_set` and returns the
/// per-epoch history. On divergence the state is rolled back to the last
/// finite parameters, optionally checkpointed, and `Error::Diverged` returned.
pub fn train<T: Real>(
    state: &mut ModelState<T>,
    coils: &CoilSet<T>,
    train_set: &[CTensor<T>],
    val_set: &[CTensor<T>],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for opt in [&mut state.opt_phi, &mut state.opt_theta] {
        opt.beta1 = T::of(cfg.beta1);
        opt.beta2 = T::of(cfg.beta2);
        opt.eps = T::of(cfg.eps);
    }
    state.opt_phi.lr = T::of(cfg.lr_phi);
    state.opt_theta.lr = T::of(cfg.lr_theta);
    let augment = cfg.augment && state.strategy == Strategy::PhiAlone;

    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::derive(cfg.seed, &[TAG_SHUFFLE, epoch as u64]).shuffle(&mut order);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let base = state.theta.realize()?.sampler;
            let items = chunk
                .iter()
                .map(|&i| {
                    let own = if augment {
                        let mut rng = Rng::derive(cfg.seed, &[TAG_AUGMENT, epoch as u64, i as u64]);
                        Some(fresh_pattern(&state.theta, &mut rng, &cfg.density)?.realize()?.sampler)
                    } else {
                        None
                    };
                    let s = own.as_ref().unwrap_or(&base);
                    let mut rng = Rng::derive(cfg.seed, &[TAG_NOISE, epoch as u64, i as u64]);
                    let noise = noise_for(cfg.sigma, &kspace_dims(coils, s), &mut rng)?;
                    Ok((
                        Example {
                            truth: train_set[i].clone(),
                            noise,
                        },
                        own,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let outcome = batch_gradients(state, coils, &items).and_then(|(loss, g_phi, g_theta)| {
                if loss.is_finite() && g_phi.is_finite() && g_theta.to_flat().iter().all(|v| v.is_finite()) {
                    Ok((loss, g_phi, g_theta))
                } else {
                    Err(Error::NonFinite("loss or gradient".into()))
                }
            });
            let (loss, g_phi, g_theta) = match outcome {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(diverged(state, cfg, epoch)),
                Err(e) => return Err(e),
            };
            let before = state.clone();
            apply_step(state, &g_phi, &g_theta)?;
            if !state.phi.is_finite() || !state.theta.raw_flat().iter().all(|v| v.is_finite()) {
                *state = before;
                return Err(diverged(state, cfg, epoch));
            }
            sum += loss.as_f64() * chunk.len() as f64;
        }
        let validate = !val_set.is_empty()
            && cfg.val_every > 0
            && (epoch % cfg.val_every == 0 || epoch == cfg.epochs);
        let (val_loss, val_psnr) = if validate {
            let r = evaluate(state, coils, val_set, cfg.sigma, cfg.seed)?;
            (Some(r.mse), Some(r.psnr))
        } else {
            (None, None)
        };
        history.push(EpochRecord {
            epoch,
            train_loss: sum / train_set.len() as f64,
            val_loss,
            val_psnr,
        });
    }
    Ok(history)
}

fn diverged<T: Real>(state: &ModelState<T>, cfg: &TrainConfig, epoch: usize) -> Error {
    if let Some(dir) = &cfg.checkpoint_on_divergence {
        if let Err(e) = state.write(dir, cfg.seed) {
            return e;
        }
    }
    Error::Diverged { epoch }
}

/// Random pattern with the same mode, counts and fixed block as `theta`.
pub fn fresh_pattern<T: Real>(theta: &ThetaParams<T>, rng: &mut Rng, density: &DensityConfig) -> Result<ThetaParams<T>> {
    let counts = (
        theta.vertical.len(),
        theta.horizontal.as_ref().map_or(0, |h| h.len()),
    );
    let grid = (
        theta.vertical.grid,
        theta.horizontal.as_ref().map_or(theta.readout, |h| h.grid),
    );
    ThetaParams::init_variable_density(rng, theta.mode(), counts, grid, density)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean squared complex error per image.
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub per_image: Vec<(f64, f64, f64)>,
}

/// Reconstructs every image from k-space acquired with the state's pattern
/// (noise derived from `seed` and the image index) and averages the metrics.
pub fn evaluate<T: Real>(
    state: &ModelState<T>,
    coils: &CoilSet<T>,
    images: &[CTensor<T>],
    sigma: f64,
    seed: u64,
) -> Result<EvalReport> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    let s = state.theta.realize()?.sampler;
    let mut per_image = Vec::with_capacity(images.len());
    for (i, truth) in images.iter().enumerate() {
        let mut rng = Rng::derive(seed, &[TAG_EVAL_NOISE, i as u64]);
        let ex = Example {
            truth: truth.clone(),
            noise: noise_for(sigma, &kspace_dims(coils, &s), &mut rng)?,
        };
        let b = simulate(coils, &s, &ex)?;
        let out = reconstruct_with(state, &s, coils, &b)?;
        let err: T = out.sub(truth).norm_sqr();
        per_image.push((err.as_f64(), psnr(&out, truth)?, ssim(&out, truth)?));
    }
    let n = per_image.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| per_image.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        mse: mean(|r| r.0),
        psnr: mean(|r| r.1),
        ssim: mean(|r| r.2),
        per_image,
    })
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `epoch,train_loss,val_loss,val_psnr`; epochs without validation leave the
/// last two fields empty.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::format(path, e.to_string());
    w.write_record(["epoch", "train_loss", "val_loss", "val_psnr"]).map_err(to_err)?;
    for r in history {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            opt_field(r.val_loss),
            opt_field(r.val_psnr),
        ])
        .map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    crate::io::write_atomic(path, &bytes)
}

/// Moving average of `values` over a trailing window of `w` (entries before
/// the window is full are averaged over what is available).
pub fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let w = w.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

