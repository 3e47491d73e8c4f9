//! The unrolled reconstruction network, its loss and exact reverse-mode pass.
//!
//! Model-based mode alternates data consistency and denoising starting from
//! `z_0 = 0`:
//!
//! ```text
//! rho_1 = Q(z_0), z_1 = D(rho_1), rho_2 = Q(z_1), ..., rho_K = Q(z_{K-1})
//! ```
//!
//! so the output `rho_K` is the result of a data-consistency solve and the
//! denoiser weights are shared by all `K - 1` denoising stages. Direct mode is
//! `D(A^H b)`.

use std::path::Path;

use crate::dc::{dc_solve, dc_solve_vjp, CgConfig};
use crate::denoiser::{denoise, denoise_vjp_into, GradBuffer, NetParams};
use crate::error::{Error, Result};
use crate::fourier::{LocationAxes, Sampler2D};
use crate::io::{fmt_sig17, parse_key_values, render_key_values, write_atomic};
use crate::mri::{adjoint_mc, forward_mc, location_grad_mc_axes, CoilSet, KSpaceData};
use crate::optim::Adam;
use crate::sampling::{ThetaGrad, ThetaParams};
use crate::scalar::{Real, C};
use crate::tensor::CTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Unrolled denoiser / data-consistency alternation.
    Modl,
    /// Denoiser applied to the adjoint reconstruction.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    PhiAlone,
    ThetaAlone,
    Joint,
}

impl Strategy {
    pub fn trains_phi(self) -> bool {
        matches!(self, Strategy::PhiAlone | Strategy::Joint)
    }

    pub fn trains_theta(self) -> bool {
        matches!(self, Strategy::ThetaAlone | Strategy::Joint)
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::PhiAlone => "phi_alone",
            Strategy::ThetaAlone => "theta_alone",
            Strategy::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "phi_alone" => Ok(Strategy::PhiAlone),
            "theta_alone" => Ok(Strategy::ThetaAlone),
            "joint" => Ok(Strategy::Joint),
            _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        }
    }
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Modl => "modl",
            Arch::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "modl" => Ok(Arch::Modl),
            "direct" => Ok(Arch::Direct),
            _ => Err(Error::InvalidArgument(format!("unknown architecture `{s}`"))),
        }
    }
}

/// Everything that is trained, plus the optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T> {
    pub theta: ThetaParams<T>,
    pub phi: NetParams<T>,
    pub k: usize,
    pub cg: CgConfig,
    pub arch: Arch,
    pub strategy: Strategy,
    pub opt_phi: Adam<T>,
    pub opt_theta: Adam<T>,
    pub step: u64,
}

impl<T: Real> ModelState<T> {
    pub fn new(theta: ThetaParams<T>, phi: NetParams<T>, k: usize, arch: Arch, strategy: Strategy) -> Result<Self> {
        if arch == Arch::Modl && k == 0 {
            return Err(Error::InvalidArgument("unroll depth K must be >= 1".into()));
        }
        Ok(Self {
            theta,
            phi,
            k,
            cg: CgConfig::default(),
            arch,
            strategy,
            opt_phi: Adam::with_lr(T::of(1e-3))?,
            opt_theta: Adam::with_lr(T::of(1e-2))?,
            step: 0,
        })
    }
}

impl<T: Real> ModelState<T> {
    /// Checkpoint directory: `manifest.txt`, the network tensors, the sampling
    /// pattern plus raw sidecar, and optimizer moments.
    pub fn write(&self, dir: &Path, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.phi.write_checkpoint(dir, seed, self.step)?;
        self.theta.write(dir, "theta")?;
        self.opt_phi.write(&dir.join("adam_phi.jmt"))?;
        self.opt_theta.write(&dir.join("adam_theta.jmt"))?;
        let f = |x: T| fmt_sig17(x.as_f64());
        let text = render_key_values(&[
            ("arch", self.arch.name().into()),
            ("strategy", self.strategy.name().into()),
            ("k", self.k.to_string()),
            ("cg_iters", self.cg.max_iters.to_string()),
            ("cg_tol", fmt_sig17(self.cg.tol)),
            ("step", self.step.to_string()),
            ("lr_phi", f(self.opt_phi.lr)),
            ("lr_theta", f(self.opt_theta.lr)),
            ("beta1", f(self.opt_phi.beta1)),
            ("beta2", f(self.opt_phi.beta2)),
            ("eps", f(self.opt_phi.eps)),
            ("adam_phi_t", self.opt_phi.t.to_string()),
            ("adam_theta_t", self.opt_theta.t.to_string()),
        ]);
        write_atomic(&dir.join("manifest.txt"), text.as_bytes())
    }

    /// Reads a checkpoint written by [`ModelState::write`].
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (phi, _, _) = NetParams::read_checkpoint(dir)?;
        let theta = ThetaParams::read(dir, "theta")?;
        let mut state = ModelState::new(theta, phi, 1, Arch::Modl, Strategy::PhiAlone)?;
        let (mut lr_phi, mut lr_theta) = (state.opt_phi.lr, state.opt_theta.lr);
        let (mut b1, mut b2, mut eps) = (state.opt_phi.beta1, state.opt_phi.beta2, state.opt_phi.eps);
        let (mut t_phi, mut t_theta) = (0u64, 0u64);
        for (k, v) in parse_key_values(&text, &path)? {
            let bad = || Error::format(&path, format!("bad value for `{k}`: `{v}`"));
            let real = || v.parse::<f64>().map(T::of).map_err(|_| bad());
            match k.as_str() {
                "arch" => state.arch = Arch::parse(&v)?,
                "strategy" => state.strategy = Strategy::parse(&v)?,
                "k" => state.k = v.parse().map_err(|_| bad())?,
                "cg_iters" => state.cg.max_iters = v.parse().map_err(|_| bad())?,
                "cg_tol" => state.cg.tol = v.parse().map_err(|_| bad())?,
                "step" => state.step = v.parse().map_err(|_| bad())?,
                "lr_phi" => lr_phi = real()?,
                "lr_theta" => lr_theta = real()?,
                "beta1" => b1 = real()?,
                "beta2" => b2 = real()?,
                "eps" => eps = real()?,
                "adam_phi_t" => t_phi = v.parse().map_err(|_| bad())?,
                "adam_theta_t" => t_theta = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::format(&path, format!("unknown key `{k}`"))),
            }
        }
        if state.arch == Arch::Modl && state.k == 0 {
            return Err(Error::format(&path, "unroll depth must be >= 1"));
        }
        state.cg.validate()?;
        state.opt_phi = Adam::new(lr_phi, b1, b2, eps)?;
        state.opt_theta = Adam::new(lr_theta, b1, b2, eps)?;
        state.opt_phi.read_moments(&dir.join("adam_phi.jmt"), t_phi)?;
        state.opt_theta.read_moments(&dir.join("adam_theta.jmt"), t_theta)?;
        Ok(state)
    }
}

/// A ground-truth image and the noise realization added to its k-space.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<T> {
    pub truth: CTensor<T>,
    /// Already scaled by sigma; `None` means noise-free.
    pub noise: Option<CTensor<T>>,
}

impl<T: Real> Example<T> {
    pub fn clean(truth: CTensor<T>) -> Self {
        Self { truth, noise: None }
    }
}

/// `b = A_Theta(truth) + noise`.
pub fn simulate<T: Real>(coils: &CoilSet<T>, s: &Sampler2D<T>, ex: &Example<T>) -> Result<KSpaceData<T>> {
    let mut samples = forward_mc(coils, s, &ex.truth)?;
    if let Some(n) = &ex.noise {
        samples.same_dims(n)?;
        samples = samples.add(n);
    }
    Ok(KSpaceData::noiseless(samples))
}

fn check_stage<T: Real>(t: &CTensor<T>, stage: impl FnOnce() -> String) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(stage()))
    }
}

struct Trace<T> {
    /// `rho_n` for every data-consistency stage, or the adjoint image in
    /// direct mode.
    stages: Vec<CTensor<T>>,
    output: CTensor<T>,
}

fn run<T: Real>(state: &ModelState<T>, s: &Sampler2D<T>, coils: &CoilSet<T>, b: &KSpaceData<T>) -> Result<Trace<T>> {
    match state.arch {
        Arch::Direct => {
            let u = adjoint_mc(coils, s, &b.samples)?;
            check_stage(&u, || "adjoint reconstruction".into())?;
            let out = denoise(&state.phi, &u)?;
            check_stage(&out, || "direct denoiser".into())?;
            Ok(Trace {
                stages: vec![u],
                output: out,
            })
        }
        Arch::Modl => {
            let (p, q) = coils.shape();
            let mut z = CTensor::zeros(&[p, q])?;
            let mut stages = Vec::with_capacity(state.k);
            for n in 1..=state.k {
                let rho = dc_solve(coils, s, b, &z, &state.cg)?.x;
                check_stage(&rho, || format!("data consistency {n}"))?;
                if n < state.k {
                    z = denoise(&state.phi, &rho)?;
                    check_stage(&z, || format!("denoiser {n}"))?;
                }
                stages.push(rho);
            }
            let output = stages.last().cloned().expect("K >= 1");
            Ok(Trace { stages, output })
        }
    }
}

/// Reconstruction with the state's own sampling pattern.
pub fn reconstruct<T: Real>(state: &ModelState<T>, coils: &CoilSet<T>, b: &KSpaceData<T>) -> Result<CTensor<T>> {
    let realized = state.theta.realize()?;
    reconstruct_with(state, &realized.sampler, coils, b)
}

pub fn reconstruct_with<T: Real>(
    state: &ModelState<T>,
    s: &Sampler2D<T>,
    coils: &CoilSet<T>,
    b: &KSpaceData<T>,
) -> Result<CTensor<T>> {
    Ok(run(state, s, coils, b)?.output)
}

/// Mean over the batch of `||reconstruct(b) - truth||^2`.
pub fn loss_mse<T: Real>(
    state: &ModelState<T>,
    coils: &CoilSet<T>,
    batch: &[(CTensor<T>, KSpaceData<T>)],
) -> Result<T> {
    let realized = state.theta.realize()?;
    loss_mse_with(state, &realized.sampler, coils, batch)
}

pub fn loss_mse_with<T: Real>(
    state: &ModelState<T>,
    s: &Sampler2D<T>,
    coils: &CoilSet<T>,
    batch: &[(CTensor<T>, KSpaceData<T>)],
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = T::zero();
    for (truth, b) in batch {
        let out = reconstruct_with(state, s, coils, b)?;
        out.same_dims(truth)?;
        total += out.sub(truth).norm_sqr();
    }
    Ok(total / T::of_usize(batch.len()))
}

/// Loss of examples whose k-space is simulated with sampler `s`.
pub fn loss_simulated<T: Real>(
    state: &ModelState<T>,
    s: &Sampler2D<T>,
    coils: &CoilSet<T>,
    examples: &[Example<T>],
) -> Result<T> {
    let batch = examples
        .iter()
        .map(|ex| Ok((ex.truth.clone(), simulate(coils, s, ex)?)))
        .collect::<Result<Vec<_>>>()?;
    loss_mse_with(state, s, coils, &batch)
}

/// Loss and gradients of one batch.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub loss: T,
    pub phi: GradBuffer<T>,
    pub theta: ThetaGrad<T>,
}

/// Squared error of one example and, through `acc`, its gradients scaled by
/// `weight`. Location gradients are over the rows of `s`.
pub struct Accumulator<'a, T> {
    pub phi: Option<&'a mut GradBuffer<T>>,
    pub vertical: Option<&'a mut [T]>,
    pub horizontal: Option<&'a mut [T]>,
}

pub fn example_loss_grad<T: Real>(
    state: &ModelState<T>,
    s: &Sampler2D<T>,
    coils: &CoilSet<T>,
    ex: &Example<T>,
    weight: T,
    mut acc: Accumulator<'_, T>,
) -> Result<T> {
    let b = simulate(coils, s, ex)?;
    let trace = run(state, s, coils, &b)?;
    trace.output.same_dims(&ex.truth)?;
    let err = trace.output.sub(&ex.truth);
    let loss = err.norm_sqr();
    let axes = match (acc.vertical.is_some(), acc.horizontal.is_some()) {
        (false, _) => LocationAxes::None,
        (true, false) => LocationAxes::Vertical,
        (true, true) => LocationAxes::Both,
    };
    let want_theta = axes != LocationAxes::None;
    let (mv, mh) = s.kspace_shape();
    let mut gv = vec![T::zero(); mv];
    let mut gh = vec![T::zero(); mh];
    let mut cot_b: CTensor<T> = CTensor::zeros(b.samples.dims())?;
    // d|e|^2 = Re<2e, de>.
    let mut g = err.scale(T::of(2.0) * weight);

    match state.arch {
        Arch::Modl => {
            for n in (0..trace.stages.len()).rev() {
                let rho = &trace.stages[n];
                let cot = dc_solve_vjp(coils, s, &b, rho, &g, &state.cg, axes)?;
                cot_b = cot_b.add(&cot.b);
                gv.iter_mut().zip(&cot.vertical).for_each(|(a, v)| *a += *v);
                gh.iter_mut().zip(&cot.horizontal).for_each(|(a, v)| *a += *v);
                if n > 0 {
                    let prev_rho = &trace.stages[n - 1];
                    g = denoise_vjp_into(&state.phi, prev_rho, &cot.z, acc.phi.as_deref_mut())?;
                }
            }
        }
        Arch::Direct => {
            let u = &trace.stages[0];
            let gu = denoise_vjp_into(&state.phi, u, &g, acc.phi.as_deref_mut())?;
            if want_theta {
                let (v, h) = location_grad_mc_axes(coils, s, &gu, &b.samples, axes)?;
                gv = v;
                gh = h;
            }
            cot_b = forward_mc(coils, s, &gu)?;
        }
    }

    if want_theta {
        // Theta also shapes the simulated measurement b = A_Theta(truth) + n.
        let (v, h) = location_grad_mc_axes(coils, s, &ex.truth, &cot_b, axes)?;
        if let Some(out) = acc.vertical.as_deref_mut() {
            out.iter_mut().zip(gv.iter().zip(&v)).for_each(|(o, (a, b))| *o += *a + *b);
        }
        if let Some(out) = acc.horizontal.as_deref_mut() {
            out.iter_mut().zip(gh.iter().zip(&h)).for_each(|(o, (a, b))| *o += *a + *b);
        }
    }
    Ok(loss)
}

/// Exact gradients of the mean batch loss with respect to `Phi` and the raw
/// sampling parameters. Groups the strategy does not train come back zero.
pub fn backward<T: Real>(state: &ModelState<T>, coils: &CoilSet<T>, batch: &[Example<T>]) -> Result<Gradients<T>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let realized = state.theta.realize()?;
    let s = &realized.sampler;
    let (mv, mh) = s.kspace_shape();
    let weight = T::one() / T::of_usize(batch.len());
    let mut phi = state.phi.zeros_like();
    let mut gv = vec![T::zero(); mv];
    let mut gh = vec![T::zero(); mh];
    let mut loss = T::zero();
    for ex in batch {
        let acc = Accumulator {
            phi: state.strategy.trains_phi().then_some(&mut phi),
            vertical: state.strategy.trains_theta().then_some(gv.as_mut_slice()),
            horizontal: (state.strategy.trains_theta() && state.theta.horizontal.is_some())
                .then_some(gh.as_mut_slice()),
        };
        loss += example_loss_grad(state, s, coils, ex, weight, acc)?;
    }
    let theta = if state.strategy.trains_theta() {
        state.theta.raw_grad(&realized, &gv, &gh)?
    } else {
        ThetaGrad::zeros_like(&state.theta)
    };
    Ok(Gradients {
        loss: loss * weight,
        phi,
        theta,
    })
}

/// Squared complex error of `out` against `truth`, summed.
pub fn squared_error<T: Real>(out: &CTensor<T>, truth: &CTensor<T>) -> T {
    out.data()
        .iter()
        .zip(truth.data())
        .map(|(a, b): (&C<T>, &C<T>)| (a - b).norm_sqr())
        .sum()
}
