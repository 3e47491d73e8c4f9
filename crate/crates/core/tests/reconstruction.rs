use kspace_joint::gradcheck::exact_cg;
use kspace_joint::phantom::synthetic_coils;
use kspace_joint::train::{train, TrainConfig};
use kspace_joint::*;
use num_complex::Complex64;

fn small_setup(mode: SamplingMode, seed: u64) -> (CoilSet<f64>, ThetaParams<f64>) {
    let coils = synthetic_coils(8, 8, 2, seed).unwrap();
    let theta = ThetaParams::init_variable_density(
        &mut Rng::new(seed),
        mode,
        (4, 5),
        (8, 8),
        &DensityConfig::default(),
    )
    .unwrap();
    (coils, theta)
}

/// Gaussian elimination with partial pivoting on a dense complex system.
fn dense_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: Complex64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Columns of the forward operator applied to unit images.
fn dense_forward(coils: &CoilSet<f64>, s: &Sampler2D<f64>) -> Vec<Vec<Complex64>> {
    let (p, q) = coils.shape();
    (0..p * q)
        .map(|idx| {
            let mut e = CTensor::zeros(&[p, q]).unwrap();
            e.data_mut()[idx] = Complex64::new(1.0, 0.0);
            forward_mc(coils, s, &e).unwrap().into_data()
        })
        .collect()
}

#[test]
fn dc_recovers_constructed_solution_in_ten_iterations() {
    let mut rng = Rng::new(11);
    let coils: CoilSet<f64> = synthetic_coils(64, 64, 4, 2).unwrap();
    let theta = ThetaParams::init_variable_density(&mut rng, SamplingMode::OneD, (16, 64), (64, 64), &DensityConfig::default()).unwrap();
    let s = theta.realize().unwrap().sampler;
    for _ in 0..3 {
        let x_star: CTensor<f64> = rng.randn_complex(&[64, 64]).unwrap();
        let w: CTensor<f64> = rng.randn_complex(&[64, 64]).unwrap();
        let b = KSpaceData::noiseless(forward_mc(&coils, &s, &w).unwrap());
        // z chosen so that x_star solves (A^H A + I) x = z + A^H b exactly.
        let z = normal_op(&coils, &s, &x_star.sub(&w)).unwrap().add(&x_star);
        let out = dc_solve(&coils, &s, &b, &z, &CgConfig::default()).unwrap();
        assert_eq!(out.iterations, 10);
        let rel = out.x.sub(&x_star).norm() / x_star.norm();
        assert!(rel <= 1e-5, "relative error {rel}");
    }
}

#[test]
fn dc_without_data_is_non_expansive() {
    let mut rng = Rng::new(12);
    let coils: CoilSet<f64> = synthetic_coils(16, 16, 3, 1).unwrap();
    let theta = ThetaParams::init_variable_density(&mut rng, SamplingMode::TwoD, (10, 9), (16, 16), &DensityConfig::default()).unwrap();
    let s = theta.realize().unwrap().sampler;
    let (mv, mh) = s.kspace_shape();
    let b = KSpaceData::noiseless(CTensor::zeros(&[3, mv, mh]).unwrap());
    for _ in 0..100 {
        let z: CTensor<f64> = rng.randn_complex(&[16, 16]).unwrap().scale(rng.uniform_range(0.01, 100.0));
        let x = dc_solve(&coils, &s, &b, &z, &CgConfig::default()).unwrap().x;
        assert!(x.norm() <= z.norm());
    }
}

#[test]
fn full_sampling_single_coil_halves_the_sum() {
    let mut rng = Rng::new(13);
    let coils = CoilSet::uniform(6, 7).unwrap();
    let s = Sampler2D::new(Sampler1D::full_grid(6).unwrap(), Sampler1D::full_grid(7).unwrap());
    let x: CTensor<f64> = rng.randn_complex(&[6, 7]).unwrap();
    let z: CTensor<f64> = rng.randn_complex(&[6, 7]).unwrap();
    let b = KSpaceData::noiseless(forward_mc(&coils, &s, &x).unwrap());
    let out = dc_solve(&coils, &s, &b, &z, &CgConfig::default()).unwrap().x;
    assert!(out.max_abs_diff(&z.add(&x).scale(0.5)) < 1e-12);
}

#[test]
fn single_stage_matches_dense_solve() {
    let (coils, theta) = small_setup(SamplingMode::TwoD, 3);
    let mut rng = Rng::new(14);
    let phi = NetParams::he_init(2, 3, &mut rng).unwrap();
    let mut state = ModelState::new(theta, phi, 1, Arch::Modl, Strategy::Joint).unwrap();
    state.cg = exact_cg();
    let s = state.theta.realize().unwrap().sampler;
    let truth: CTensor<f64> = rng.randn_complex(&[8, 8]).unwrap();
    let b = acquire(&coils, &s, &truth, 0.05, &mut rng).unwrap();

    let cols = dense_forward(&coils, &s);
    let n = cols.len();
    let mut h = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    for r in 0..n {
        for c in 0..n {
            h[r][c] = cols[r].iter().zip(&cols[c]).map(|(a, b)| a.conj() * b).sum();
        }
        h[r][r] += 1.0;
        rhs[r] = cols[r].iter().zip(b.samples.data()).map(|(a, y)| a.conj() * y).sum();
    }
    let want = dense_solve(h, rhs);
    let got = reconstruct(&state, &coils, &b).unwrap();
    let diff = got.data().iter().zip(&want).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-10, "max diff {diff}");
}

#[test]
fn loss_matches_hand_computation() {
    // Full single-coil sampling with K = 1 reconstructs x / 2, so the loss is
    // the mean of ||x||^2 / 4.
    let mut rng = Rng::new(15);
    let coils = CoilSet::uniform(4, 4).unwrap();
    let (_, theta) = small_setup(SamplingMode::OneD, 9);
    let s = Sampler2D::lines(Sampler1D::full_grid(4).unwrap(), 4).unwrap();
    let state = ModelState::new(theta, NetParams::zeros(1, 0).unwrap(), 1, Arch::Modl, Strategy::Joint).unwrap();
    let xs: Vec<CTensor<f64>> = (0..2).map(|_| rng.randn_complex(&[4, 4]).unwrap()).collect();
    let batch: Vec<_> = xs
        .iter()
        .map(|x| (x.clone(), KSpaceData::noiseless(forward_mc(&coils, &s, x).unwrap())))
        .collect();
    let want = xs.iter().map(|x| x.norm_sqr() / 4.0).sum::<f64>() / 2.0;
    let got = kspace_joint::model::loss_mse_with(&state, &s, &coils, &batch).unwrap();
    assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
}

#[test]
fn direct_mode_with_zero_network_is_the_adjoint() {
    let (coils, theta) = small_setup(SamplingMode::TwoD, 4);
    let state = ModelState::new(theta, NetParams::zeros(3, 4).unwrap(), 1, Arch::Direct, Strategy::Joint).unwrap();
    let s = state.theta.realize().unwrap().sampler;
    let mut rng = Rng::new(16);
    let truth: CTensor<f64> = rng.randn_complex(&[8, 8]).unwrap();
    let b = acquire(&coils, &s, &truth, 0.1, &mut rng).unwrap();
    let out = reconstruct(&state, &coils, &b).unwrap();
    assert_eq!(out, adjoint_mc(&coils, &s, &b.samples).unwrap());
}

fn tiny_training(strategy: Strategy, lr: f64) -> (ModelState<f64>, ModelState<f64>) {
    let (coils, theta) = small_setup(SamplingMode::OneD, 5);
    let mut rng = Rng::new(17);
    let phi = NetParams::he_init(2, 3, &mut rng).unwrap();
    let state = ModelState::new(theta, phi, 2, Arch::Modl, strategy).unwrap();
    let images: Vec<CTensor<f64>> = (0..4).map(|_| rng.randn_complex(&[8, 8]).unwrap()).collect();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        lr_phi: lr,
        lr_theta: lr,
        sigma: 0.01,
        val_every: 0,
        ..TrainConfig::default()
    };
    let mut trained = state.clone();
    train(&mut trained, &coils, &images, &[], &cfg).unwrap();
    (state, trained)
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let (before, after) = tiny_training(Strategy::Joint, 0.0);
    assert_eq!(before.phi, after.phi);
    assert_eq!(before.theta, after.theta);
}

#[test]
fn strategies_only_move_their_own_parameters() {
    let (before, after) = tiny_training(Strategy::PhiAlone, 1e-2);
    assert_ne!(before.phi, after.phi);
    assert_eq!(before.theta, after.theta);

    let (before, after) = tiny_training(Strategy::ThetaAlone, 1e-2);
    assert_eq!(before.phi, after.phi);
    assert_ne!(before.theta, after.theta);

    let (before, after) = tiny_training(Strategy::Joint, 1e-2);
    assert_ne!(before.phi, after.phi);
    assert_ne!(before.theta, after.theta);
}

#[test]
fn backward_zeroes_untrained_groups() {
    let (coils, theta) = small_setup(SamplingMode::TwoD, 6);
    let mut rng = Rng::new(18);
    let phi = NetParams::he_init(2, 3, &mut rng).unwrap();
    let ex = vec![Example::clean(rng.randn_complex(&[8, 8]).unwrap())];
    let mut state = ModelState::new(theta, phi, 2, Arch::Modl, Strategy::PhiAlone).unwrap();
    let g = backward(&state, &coils, &ex).unwrap();
    assert!(g.theta.to_flat().iter().all(|&v| v == 0.0));
    assert!(g.phi.to_flat().iter().any(|&v| v != 0.0));
    state.strategy = Strategy::ThetaAlone;
    let g = backward(&state, &coils, &ex).unwrap();
    assert!(g.phi.to_flat().iter().all(|&v| v == 0.0));
    assert!(g.theta.to_flat().iter().any(|&v| v != 0.0));
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (_, trained) = tiny_training(Strategy::Joint, 1e-2);
    let dir = tempfile::tempdir().unwrap();
    trained.write(dir.path(), 17).unwrap();
    let back = ModelState::<f64>::read(dir.path()).unwrap();
    assert_eq!(back, trained);
}

#[test]
fn one_dimensional_pipeline_gradients_match_finite_differences() {
    let coils: CoilSet<f64> = synthetic_coils(12, 10, 2, 7).unwrap();
    let theta = ThetaParams::init_variable_density(&mut Rng::new(19), SamplingMode::OneD, (5, 10), (12, 10), &DensityConfig::default()).unwrap();
    let mut rng = Rng::new(20);
    let phi = NetParams::he_init(2, 3, &mut rng).unwrap();
    let mut state = ModelState::new(theta, phi, 2, Arch::Modl, Strategy::Joint).unwrap();
    state.cg = exact_cg();
    let batch: Vec<Example<f64>> = (0..2)
        .map(|_| Example {
            truth: rng.randn_complex(&[12, 10]).unwrap(),
            noise: Some(rng.randn_complex::<f64>(&[2, 5, 10]).unwrap().scale(0.05)),
        })
        .collect();
    let g = backward(&state, &coils, &batch).unwrap();
    let loss_at = |st: &ModelState<f64>| backward(st, &coils, &batch).unwrap().loss;
    let h = 1e-6;

    let raw = state.theta.raw_flat();
    let g_theta = g.theta.to_flat();
    for i in 0..raw.len() {
        let mut plus = state.clone();
        let mut minus = state.clone();
        let mut r = raw.clone();
        r[i] += h;
        plus.theta.set_raw_flat(&r).unwrap();
        r[i] -= 2.0 * h;
        minus.theta.set_raw_flat(&r).unwrap();
        let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let rel = (fd - g_theta[i]).abs() / fd.abs().max(g_theta[i].abs()).max(1e-8);
        assert!(rel <= 1e-3, "theta {i}: fd {fd} analytic {}", g_theta[i]);
    }

    let flat = state.phi.to_flat();
    let g_phi = g.phi.to_flat();
    for i in (0..flat.len()).step_by(7) {
        let mut plus = state.clone();
        let mut minus = state.clone();
        let mut f = flat.clone();
        f[i] += h;
        plus.phi.set_flat(&f).unwrap();
        f[i] -= 2.0 * h;
        minus.phi.set_flat(&f).unwrap();
        let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let rel = (fd - g_phi[i]).abs() / fd.abs().max(g_phi[i].abs()).max(1e-8);
        assert!(rel <= 1e-4, "phi {i}: fd {fd} analytic {}", g_phi[i]);
    }
}

#[test]
fn nonfinite_input_is_reported() {
    let (coils, theta) = small_setup(SamplingMode::TwoD, 8);
    let state = ModelState::new(theta, NetParams::zeros(2, 2).unwrap(), 2, Arch::Modl, Strategy::Joint).unwrap();
    let s = state.theta.realize().unwrap().sampler;
    let (mv, mh) = s.kspace_shape();
    let mut samples = CTensor::zeros(&[2, mv, mh]).unwrap();
    samples.data_mut()[0] = Complex64::new(f64::NAN, 0.0);
    let err = reconstruct(&state, &coils, &KSpaceData::noiseless(samples)).unwrap_err();
    assert!(matches!(err, Error::NonFinite(_)), "{err}");
}
