//! Finite-difference checks of every hand-written derivative, in `f64`.
//!
//! Each suite compares an analytic derivative with the central difference
//! `(f(p + h) - f(p - h)) / 2h` and reports the worst relative error
//! `|a - f| / max(|a|, |f|, floor)`.

use crate::dc::{dc_solve, dc_solve_vjp, CgConfig};
use crate::denoiser::{denoise, denoise_vjp, NetParams};
use crate::error::Result;
use crate::fourier::{dforward_dk_1d, forward_1d, wrap_location, LocationAxes, Sampler1D, Sampler2D};
use crate::model::{backward, Arch, Example, ModelState, Strategy};
use crate::mri::{adjoint_mc, forward_mc, location_grad_mc, CoilSet, KSpaceData};
use crate::phantom::{render, synthetic_coils, PhantomSpec};
use crate::rng::Rng;
use crate::sampling::{DensityConfig, SamplingMode, ThetaParams};
use crate::scalar::C;
use crate::tensor::CTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub checked: usize,
    pub max_rel: f64,
    pub tol: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel <= self.tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub coils: usize,
    pub k: usize,
    /// Number of randomly chosen parameters per full-pipeline suite.
    pub samples: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            rows: 16,
            cols: 16,
            coils: 2,
            k: 2,
            samples: 20,
        }
    }
}

/// Solver settings tight enough that the implicit-function derivative is the
/// derivative of the computed solve.
pub fn exact_cg() -> CgConfig {
    CgConfig {
        max_iters: 500,
        tol: 1e-15,
    }
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / analytic.abs().max(numeric.abs()).max(floor)
}

pub fn central_difference(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((f(h)? - f(-h)?) / (2.0 * h))
}

struct Tracker {
    name: &'static str,
    tol: f64,
    floor: f64,
    checked: usize,
    max_rel: f64,
}

impl Tracker {
    fn new(name: &'static str, tol: f64, floor: f64) -> Self {
        Self {
            name,
            tol,
            floor,
            checked: 0,
            max_rel: 0.0,
        }
    }

    fn push(&mut self, analytic: f64, numeric: f64) {
        let r = rel_err(analytic, numeric, self.floor);
        self.max_rel = if r.is_nan() { f64::INFINITY } else { self.max_rel.max(r) };
        self.checked += 1;
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            name: self.name,
            checked: self.checked,
            max_rel: self.max_rel,
            tol: self.tol,
        }
    }
}

fn re_dot(a: &CTensor<f64>, b: &CTensor<f64>) -> f64 {
    a.dot(b).re
}

/// A small 2-D problem: phantom truth, coils, sampling parameters.
pub struct Fixture {
    pub coils: CoilSet<f64>,
    pub truth: CTensor<f64>,
    pub theta: ThetaParams<f64>,
    pub phi: NetParams<f64>,
}

impl Fixture {
    pub fn new(cfg: &GradcheckConfig, mode: SamplingMode) -> Result<Self> {
        let mut rng = Rng::derive(cfg.seed, &[1]);
        let coils = synthetic_coils(cfg.rows, cfg.cols, cfg.coils, cfg.seed)?;
        let truth = render(&PhantomSpec::random(cfg.rows, cfg.cols, 4, cfg.seed)?)?;
        let counts = (cfg.rows * 3 / 4, cfg.cols * 3 / 4);
        let theta = ThetaParams::init_variable_density(
            &mut rng,
            mode,
            counts,
            (cfg.rows, cfg.cols),
            &DensityConfig::default(),
        )?;
        let mut phi = NetParams::he_init(3, 6, &mut rng)?;
        for layer in &mut phi.layers {
            for b in &mut layer.bias {
                *b = 0.05 * rng.normal();
            }
        }
        Ok(Self {
            coils,
            truth,
            theta,
            phi,
        })
    }

    fn sampler(&self) -> Result<Sampler2D<f64>> {
        Ok(self.theta.realize()?.sampler)
    }
}

/// `<A x, y> = <x, A^H y>` on random instances.
pub fn adjoint_suite(seed: u64, instances: usize) -> Result<SuiteResult> {
    let mut t = Tracker::new("adjoint", 1e-12, 0.0);
    let mut rng = Rng::derive(seed, &[2]);
    for _ in 0..instances {
        let p = 2 + rng.below(31);
        let q = 2 + rng.below(31);
        let j = 1 + rng.below(4);
        let mv = 1 + rng.below(2 * p);
        let mh = 1 + rng.below(2 * q);
        let v = Sampler1D::new((0..mv).map(|_| rng.uniform()).collect(), p)?;
        let h = Sampler1D::new((0..mh).map(|_| rng.uniform()).collect(), q)?;
        let s = Sampler2D::new(v, h);
        let maps = (0..j)
            .map(|_| rng.randn_complex(&[p, q]))
            .collect::<Result<Vec<_>>>()?;
        let coils = CoilSet::new(maps)?;
        let x: CTensor<f64> = rng.randn_complex(&[p, q])?;
        let y: CTensor<f64> = rng.randn_complex(&[j, mv, mh])?;
        let lhs = forward_mc(&coils, &s, &x)?.dot(&y);
        let rhs = x.dot(&adjoint_mc(&coils, &s, &y)?);
        let scale = x.norm() * y.norm();
        t.checked += 1;
        t.max_rel = t.max_rel.max((lhs - rhs).norm() / scale);
    }
    Ok(t.finish())
}

/// Derivatives of the forward operator with respect to sampling locations.
pub fn location_suite(cfg: &GradcheckConfig) -> Result<Vec<SuiteResult>> {
    let mut rng = Rng::derive(cfg.seed, &[3]);
    let h = 1e-6;

    let mut one = Tracker::new("location-1d", 1e-6, 1e-8);
    let n = cfg.rows;
    let s = Sampler1D::new((0..6).map(|_| rng.uniform()).collect(), n)?;
    let x: CTensor<f64> = rng.randn_complex(&[n])?;
    for i in 0..s.len() {
        let d = dforward_dk_1d(&s, &x, i)?;
        let k = s.locations()[i];
        let at = |dk: f64| -> Result<C<f64>> { Ok(forward_1d(&s.with_location(i, wrap_location(k + dk))?, &x)?[i]) };
        let fd = (at(h)? - at(-h)?) / (2.0 * h);
        one.push(d.re, fd.re);
        one.push(d.im, fd.im);
    }

    let mut two = Tracker::new("location-multicoil", 1e-6, 1e-8);
    let fx = Fixture::new(cfg, SamplingMode::TwoD)?;
    let s = fx.sampler()?;
    let (mv, mh) = s.kspace_shape();
    let c: CTensor<f64> = rng.randn_complex(&[cfg.coils, mv, mh])?;
    let x: CTensor<f64> = rng.randn_complex(&[cfg.rows, cfg.cols])?;
    let (gv, gh) = location_grad_mc(&fx.coils, &s, &x, &c)?;
    let objective = |s: &Sampler2D<f64>| -> Result<f64> { Ok(re_dot(&c, &forward_mc(&fx.coils, s, &x)?)) };
    for i in 0..mv {
        let k = s.vertical.locations()[i];
        let fd = central_difference(
            |dk| objective(&Sampler2D::new(s.vertical.with_location(i, wrap_location(k + dk))?, s.horizontal.clone())),
            h,
        )?;
        two.push(gv[i], fd);
    }
    for i in 0..mh {
        let k = s.horizontal.locations()[i];
        let fd = central_difference(
            |dk| objective(&Sampler2D::new(s.vertical.clone(), s.horizontal.with_location(i, wrap_location(k + dk))?)),
            h,
        )?;
        two.push(gh[i], fd);
    }
    Ok(vec![one.finish(), two.finish()])
}

/// Denoiser input cotangent and parameter gradients.
pub fn denoiser_suite(cfg: &GradcheckConfig) -> Result<SuiteResult> {
    let mut t = Tracker::new("denoiser", 1e-5, 1e-8);
    let fx = Fixture::new(cfg, SamplingMode::OneD)?;
    let mut rng = Rng::derive(cfg.seed, &[4]);
    let x: CTensor<f64> = rng.randn_complex(&[cfg.rows, cfg.cols])?;
    let g: CTensor<f64> = rng.randn_complex(&[cfg.rows, cfg.cols])?;
    let (grad, cot) = denoise_vjp(&fx.phi, &x, &g)?;
    let h = 1e-6;
    for _ in 0..cfg.samples {
        let i = rng.below(x.len());
        let imag = rng.uniform() < 0.5;
        let fd = central_difference(
            |d| {
                let mut xp = x.clone();
                if imag {
                    xp[i].im += d;
                } else {
                    xp[i].re += d;
                }
                Ok(re_dot(&g, &denoise(&fx.phi, &xp)?))
            },
            h,
        )?;
        t.push(if imag { cot[i].im } else { cot[i].re }, fd);
    }
    let flat = fx.phi.to_flat();
    let gflat = grad.to_flat();
    for _ in 0..cfg.samples {
        let i = rng.below(flat.len());
        let fd = central_difference(
            |d| {
                let mut p = fx.phi.clone();
                let mut f = flat.clone();
                f[i] += d;
                p.set_flat(&f)?;
                Ok(re_dot(&g, &denoise(&p, &x)?))
            },
            h,
        )?;
        t.push(gflat[i], fd);
    }
    Ok(t.finish())
}

/// Implicit reverse-mode rule of the data-consistency solve.
pub fn dc_suite(cfg: &GradcheckConfig) -> Result<SuiteResult> {
    let mut t = Tracker::new("data-consistency", 1e-5, 1e-8);
    let fx = Fixture::new(cfg, SamplingMode::TwoD)?;
    let s = fx.sampler()?;
    let (mv, mh) = s.kspace_shape();
    let mut rng = Rng::derive(cfg.seed, &[5]);
    let cg = exact_cg();
    let z: CTensor<f64> = rng.randn_complex(&[cfg.rows, cfg.cols])?;
    let b = KSpaceData::noiseless(rng.randn_complex(&[cfg.coils, mv, mh])?);
    let g: CTensor<f64> = rng.randn_complex(&[cfg.rows, cfg.cols])?;
    let x = dc_solve(&fx.coils, &s, &b, &z, &cg)?.x;
    let cot = dc_solve_vjp(&fx.coils, &s, &b, &x, &g, &cg, LocationAxes::Both)?;
    let obj = |s: &Sampler2D<f64>, b: &KSpaceData<f64>, z: &CTensor<f64>| -> Result<f64> {
        Ok(re_dot(&g, &dc_solve(&fx.coils, s, b, z, &cg)?.x))
    };
    let h = 1e-6;
    for _ in 0..cfg.samples / 2 {
        let i = rng.below(z.len());
        let fd = central_difference(
            |d| {
                let mut zp = z.clone();
                zp[i].re += d;
                obj(&s, &b, &zp)
            },
            h,
        )?;
        t.push(cot.z[i].re, fd);
        let i = rng.below(b.samples.len());
        let fd = central_difference(
            |d| {
                let mut bp = b.clone();
                bp.samples[i].im += d;
                obj(&s, &bp, &z)
            },
            h,
        )?;
        t.push(cot.b[i].im, fd);
    }
    for i in 0..mv {
        let k = s.vertical.locations()[i];
        let fd = central_difference(
            |d| obj(&Sampler2D::new(s.vertical.with_location(i, wrap_location(k + d))?, s.horizontal.clone()), &b, &z),
            h,
        )?;
        t.push(cot.vertical[i], fd);
    }
    for i in 0..mh {
        let k = s.horizontal.locations()[i];
        let fd = central_difference(
            |d| obj(&Sampler2D::new(s.vertical.clone(), s.horizontal.with_location(i, wrap_location(k + d))?), &b, &z),
            h,
        )?;
        t.push(cot.horizontal[i], fd);
    }
    Ok(t.finish())
}

/// Whole-network loss gradients with respect to raw `Theta` and `Phi`,
/// including the measurement simulated with the same `Theta`.
pub fn pipeline_suite(cfg: &GradcheckConfig, arch: Arch) -> Result<Vec<SuiteResult>> {
    let fx = Fixture::new(cfg, SamplingMode::TwoD)?;
    let mut state = ModelState::new(fx.theta.clone(), fx.phi.clone(), cfg.k, arch, Strategy::Joint)?;
    state.cg = exact_cg();
    let mut rng = Rng::derive(cfg.seed, &[6]);
    let s = fx.sampler()?;
    let (mv, mh) = s.kspace_shape();
    let second = render(&PhantomSpec::random(cfg.rows, cfg.cols, 5, cfg.seed + 1)?)?;
    let batch = vec![
        Example {
            truth: fx.truth.clone(),
            noise: Some(rng.randn_complex(&[cfg.coils, mv, mh])?.scale(0.05)),
        },
        Example::clean(second),
    ];
    let grads = backward(&state, &fx.coils, &batch)?;
    let loss_at = |st: &ModelState<f64>| -> Result<f64> { Ok(backward(st, &fx.coils, &batch)?.loss) };
    let (theta_name, phi_name) = match arch {
        Arch::Modl => ("pipeline-theta", "pipeline-phi"),
        Arch::Direct => ("direct-theta", "direct-phi"),
    };

    let mut th = Tracker::new(theta_name, 1e-3, 1e-8);
    let raw = state.theta.raw_flat();
    let graw = grads.theta.to_flat();
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    rng.shuffle(&mut idx);
    for &i in idx.iter().take(cfg.samples) {
        let fd = central_difference(
            |d| {
                let mut st = state.clone();
                let mut r = raw.clone();
                r[i] += d;
                st.theta.set_raw_flat(&r)?;
                loss_at(&st)
            },
            1e-5,
        )?;
        th.push(graw[i], fd);
    }

    let mut ph = Tracker::new(phi_name, 1e-4, 1e-8);
    let flat = state.phi.to_flat();
    let gflat = grads.phi.to_flat();
    for _ in 0..cfg.samples {
        let i = rng.below(flat.len());
        let fd = central_difference(
            |d| {
                let mut st = state.clone();
                let mut f = flat.clone();
                f[i] += d;
                st.phi.set_flat(&f)?;
                loss_at(&st)
            },
            1e-6,
        )?;
        ph.push(gflat[i], fd);
    }
    Ok(vec![th.finish(), ph.finish()])
}

/// Every suite, in a fixed order.
pub fn run_all(cfg: &GradcheckConfig) -> Result<Vec<SuiteResult>> {
    let mut out = vec![adjoint_suite(cfg.seed, 50)?];
    out.extend(location_suite(cfg)?);
    out.push(denoiser_suite(cfg)?);
    out.push(dc_suite(cfg)?);
    out.extend(pipeline_suite(cfg, Arch::Modl)?);
    out.extend(pipeline_suite(cfg, Arch::Direct)?);
    Ok(out)
}
