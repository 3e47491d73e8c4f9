use kspace_joint::metrics::{psnr, ssim};
use kspace_joint::phantom::{make_corpus, render, synthetic_coils, Corpus, CorpusConfig, Ellipse, PhantomSpec};
use kspace_joint::*;
use num_complex::Complex64;

fn brute_psnr(x: &CTensor<f64>, r: &CTensor<f64>) -> f64 {
    let n = x.len() as f64;
    let mut peak: f64 = 0.0;
    for z in r.data() {
        peak = peak.max((z.re * z.re + z.im * z.im).sqrt());
    }
    let mut mse = 0.0;
    for (a, b) in x.data().iter().zip(r.data()) {
        let d = a - b;
        mse += d.re * d.re + d.im * d.im;
    }
    mse /= n;
    10.0 * (peak * peak / mse).log10()
}

/// Two-pass statistics per window.
fn brute_ssim(x: &CTensor<f64>, r: &CTensor<f64>) -> f64 {
    let (rows, cols) = (x.dims()[0], x.dims()[1]);
    let a: Vec<f64> = x.data().iter().map(|z| z.norm()).collect();
    let b: Vec<f64> = r.data().iter().map(|z| z.norm()).collect();
    let l = b.iter().cloned().fold(f64::MIN, f64::max);
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));
    let mut vals = Vec::new();
    for r0 in 0..rows - 6 {
        for q0 in 0..cols - 6 {
            let idx: Vec<usize> = (r0..r0 + 7).flat_map(|rr| (q0..q0 + 7).map(move |qq| rr * cols + qq)).collect();
            let n = idx.len() as f64;
            let ma = idx.iter().map(|&i| a[i]).sum::<f64>() / n;
            let mb = idx.iter().map(|&i| b[i]).sum::<f64>() / n;
            let va = idx.iter().map(|&i| (a[i] - ma).powi(2)).sum::<f64>() / n;
            let vb = idx.iter().map(|&i| (b[i] - mb).powi(2)).sum::<f64>() / n;
            let cov = idx.iter().map(|&i| (a[i] - ma) * (b[i] - mb)).sum::<f64>() / n;
            vals.push((2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn metrics_match_brute_force() {
    let mut rng = Rng::new(21);
    for (rows, cols) in [(7, 7), (16, 16), (20, 13), (32, 32)] {
        let r = render::<f64>(&PhantomSpec::random(rows, cols, 4, rng.below(1000) as u64).unwrap()).unwrap();
        for noise in [1e-3, 0.05, 0.5] {
            let x = r.add(&rng.randn_complex::<f64>(&[rows, cols]).unwrap().scale(noise));
            assert!((psnr(&x, &r).unwrap() - brute_psnr(&x, &r)).abs() <= 1e-10);
            assert!((ssim(&x, &r).unwrap() - brute_ssim(&x, &r)).abs() <= 1e-10);
        }
    }
}

#[test]
fn identical_images_give_exact_extremes() {
    let r = render::<f64>(&PhantomSpec::random(24, 24, 5, 3).unwrap()).unwrap();
    assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
    assert_eq!(ssim(&r, &r).unwrap(), 1.0);
}

#[test]
fn metric_errors() {
    let z = CTensor::<f64>::zeros(&[8, 8]).unwrap();
    assert!(psnr(&z, &z).is_err());
    let small = CTensor::<f64>::zeros(&[6, 8]).unwrap();
    assert!(ssim(&small, &small).is_err());
    let other = CTensor::<f64>::zeros(&[8, 9]).unwrap();
    assert!(psnr(&z, &other).is_err());
}

#[test]
fn single_ellipse_mass_matches_area() {
    for (rows, cols, a, b, angle) in [(64, 64, 0.7, 0.5, 0.0), (48, 64, 0.33, 0.61, 0.7), (64, 32, 0.8, 0.2, 2.0)] {
        let spec = PhantomSpec {
            rows,
            cols,
            ellipses: vec![Ellipse {
                center: (0.05, -0.02),
                axes: (a, b),
                angle,
                amplitude: Complex64::new(1.0, 0.0),
            }],
            phase: [0.0; 4],
            seed: 0,
        };
        let img = render::<f64>(&spec).unwrap();
        let mass: f64 = img.data().iter().map(|z| z.re).sum();
        // Each pixel covers 4 / (P Q) of the [-1, 1]^2 square.
        let area = std::f64::consts::PI * a * b * (rows * cols) as f64 / 4.0;
        assert!((mass / area - 1.0).abs() < 5e-3, "mass {mass} area {area}");
    }
}

fn reference_render(spec: &PhantomSpec, ss: usize) -> Vec<Complex64> {
    let (rows, cols) = (spec.rows, spec.cols);
    let mut img = Vec::with_capacity(rows * cols);
    for p in 0..rows {
        for q in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..ss {
                for j in 0..ss {
                    let y = -1.0 + 2.0 * (p as f64 + (i as f64 + 0.5) / ss as f64) / rows as f64;
                    let x = -1.0 + 2.0 * (q as f64 + (j as f64 + 0.5) / ss as f64) / cols as f64;
                    acc += spec.ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.amplitude).sum::<Complex64>();
                }
            }
            let x = -1.0 + (2 * q + 1) as f64 / cols as f64;
            let y = -1.0 + (2 * p + 1) as f64 / rows as f64;
            let [c0, c1, c2, c3] = spec.phase;
            img.push(acc / (ss * ss) as f64 * Complex64::from_polar(1.0, c0 + c1 * x + c2 * y + c3 * x * y));
        }
    }
    let peak = img.iter().map(|z| z.norm()).fold(0.0, f64::max);
    img.iter().map(|z| z / peak).collect()
}

#[test]
fn phantom_energy_matches_fine_reference() {
    for seed in [1, 2, 3] {
        let spec = PhantomSpec::random(64, 64, 6, seed).unwrap();
        let img = render::<f64>(&spec).unwrap();
        let fine = reference_render(&spec, 64);
        let e: f64 = img.data().iter().map(|z| z.norm_sqr()).sum();
        let e_ref: f64 = fine.iter().map(|z| z.norm_sqr()).sum();
        assert!((e / e_ref - 1.0).abs() < 5e-3, "seed {seed}: {e} vs {e_ref}");
    }
}

#[test]
fn coil_maps_are_normalized() {
    for j in [1, 2, 4, 8] {
        let coils: CoilSet<f64> = synthetic_coils(20, 24, j, 5).unwrap();
        for v in coils.sum_of_squares() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn corpus_is_deterministic_and_round_trips() {
    let cfg = CorpusConfig {
        seed: 9,
        n_train: 3,
        n_val: 1,
        n_test: 2,
        rows: 16,
        cols: 12,
        num_coils: 2,
    };
    let a: Corpus<f64> = make_corpus(&cfg).unwrap();
    let b: Corpus<f64> = make_corpus(&cfg).unwrap();
    assert_eq!(a.train, b.train);
    assert_eq!(a.test, b.test);
    assert_ne!(a.train[0], a.train[1]);
    let dir = tempfile::tempdir().unwrap();
    a.write(dir.path()).unwrap();
    let back = Corpus::<f64>::read(dir.path()).unwrap();
    assert_eq!(back.train, a.train);
    assert_eq!(back.val, a.val);
    assert_eq!(back.test, a.test);
    assert_eq!(back.coils.to_tensor(), a.coils.to_tensor());
}
