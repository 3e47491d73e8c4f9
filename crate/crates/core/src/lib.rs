//! Joint optimization of continuous k-space sampling locations and an
//! unrolled model-based reconstruction network.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the bottom fix the scalar to `f64`, which is what the tools use.

pub mod config;
pub mod dc;
pub mod denoiser;
pub mod error;
pub mod fourier;
pub mod gradcheck;
pub mod io;
pub mod landscape;
pub mod metrics;
pub mod model;
pub mod mri;
pub mod optim;
pub mod phantom;
pub mod rng;
pub mod sampling;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use dc::{conjugate_gradient, dc_solve, dc_solve_vjp, CgConfig, CgOutcome};
pub use denoiser::{denoise, denoise_vjp, GradBuffer, NetParams};
pub use error::{Error, Result};
pub use fourier::{adjoint_1d, adjoint_2d, forward_1d, forward_2d, LocationAxes, Pattern, Sampler1D, Sampler2D};
pub use model::{backward, loss_mse, reconstruct, Arch, Example, ModelState, Strategy};
pub use mri::{acquire, adjoint_mc, forward_mc, normal_op, CoilSet, KSpaceData};
pub use optim::Adam;
pub use rng::Rng;
pub use sampling::{DensityConfig, SamplingMode, ThetaGrad, ThetaParams};
pub use scalar::{Real, C};
pub use tensor::CTensor;

pub type CTensorF64 = CTensor<f64>;
pub type CTensorF32 = CTensor<f32>;
pub type Sampler1DF64 = Sampler1D<f64>;
pub type Sampler2DF64 = Sampler2D<f64>;
pub type CoilSetF64 = CoilSet<f64>;
pub type NetParamsF64 = NetParams<f64>;
pub type ThetaParamsF64 = ThetaParams<f64>;
pub type ModelStateF64 = ModelState<f64>;
