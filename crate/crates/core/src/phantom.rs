//! Synthetic ground truth: complex ellipse phantoms and coil maps.
//!
//! Image coordinates are normalized to `[-1, 1]` on both axes with `x` along
//! columns and `y` along rows; pixel `(p, q)` covers the cell centered at
//! `x = (2q + 1)/Q - 1`, `y = (2p + 1)/P - 1`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{parse_key_values, read_tensor, render_key_values, write_atomic, write_tensor};
use crate::mri::CoilSet;
use crate::rng::Rng;
use crate::scalar::{Real, C};
use crate::tensor::CTensor;

/// Sub-samples per pixel along each axis used for anti-aliased edges.
pub const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Ellipse {
    pub center: (f64, f64),
    /// Semi-axes `(a_x, a_y)` before rotation, in normalized units.
    pub axes: (f64, f64),
    /// Counter-clockwise rotation in radians.
    pub angle: f64,
    pub amplitude: Complex64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.axes.0).powi(2) + (v / self.axes.1).powi(2) <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub rows: usize,
    pub cols: usize,
    pub ellipses: Vec<Ellipse>,
    /// Phase field `c0 + c1 x + c2 y + c3 x y` in radians.
    pub phase: [f64; 4],
    pub seed: u64,
}

impl PhantomSpec {
    /// Randomized spec: a large body ellipse plus smaller inserts.
    pub fn random(rows: usize, cols: usize, n_ellipses: usize, seed: u64) -> Result<Self> {
        if n_ellipses == 0 {
            return Err(Error::InvalidArgument("a phantom needs at least one ellipse".into()));
        }
        let mut rng = Rng::new(seed);
        let mut ellipses = Vec::with_capacity(n_ellipses);
        ellipses.push(Ellipse {
            center: (rng.uniform_range(-0.05, 0.05), rng.uniform_range(-0.05, 0.05)),
            axes: (rng.uniform_range(0.6, 0.85), rng.uniform_range(0.7, 0.9)),
            angle: rng.uniform_range(-0.3, 0.3),
            amplitude: Complex64::from_polar(rng.uniform_range(0.5, 1.0), rng.uniform_range(-0.3, 0.3)),
        });
        for _ in 1..n_ellipses {
            let r = rng.uniform_range(0.0, 0.45);
            let t = rng.uniform_range(0.0, std::f64::consts::TAU);
            ellipses.push(Ellipse {
                center: (r * t.cos(), r * t.sin()),
                axes: (rng.uniform_range(0.05, 0.3), rng.uniform_range(0.05, 0.3)),
                angle: rng.uniform_range(0.0, std::f64::consts::PI),
                amplitude: Complex64::from_polar(
                    rng.uniform_range(0.1, 0.6) * if rng.uniform() < 0.3 { -1.0 } else { 1.0 },
                    rng.uniform_range(-0.5, 0.5),
                ),
            });
        }
        let phase = [
            rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI),
            rng.uniform_range(-1.0, 1.0),
            rng.uniform_range(-1.0, 1.0),
            rng.uniform_range(-0.5, 0.5),
        ];
        Ok(Self {
            rows,
            cols,
            ellipses,
            phase,
            seed,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Shape(format!("phantom grid {}x{}", self.rows, self.cols)));
        }
        if self.ellipses.is_empty() {
            return Err(Error::InvalidArgument("a phantom needs at least one ellipse".into()));
        }
        for (i, e) in self.ellipses.iter().enumerate() {
            if !(e.axes.0 > 0.0 && e.axes.1 > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "ellipse {i} has degenerate axes {:?}",
                    e.axes
                )));
            }
        }
        Ok(())
    }
}

/// Ellipse sum with `SUPERSAMPLE`-fold anti-aliasing times `exp(j phase)`,
/// scaled so the largest magnitude is 1.
pub fn render<T: Real>(spec: &PhantomSpec) -> Result<CTensor<T>> {
    spec.validate()?;
    let (rows, cols) = (spec.rows, spec.cols);
    let ss = SUPERSAMPLE;
    let mut img = vec![Complex64::new(0.0, 0.0); rows * cols];
    for p in 0..rows {
        for q in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for sp in 0..ss {
                let y = (2.0 * (p as f64 + (sp as f64 + 0.5) / ss as f64)) / rows as f64 - 1.0;
                for sq in 0..ss {
                    let x = (2.0 * (q as f64 + (sq as f64 + 0.5) / ss as f64)) / cols as f64 - 1.0;
                    for e in &spec.ellipses {
                        if e.contains(x, y) {
                            acc += e.amplitude;
                        }
                    }
                }
            }
            let y = (2 * p + 1) as f64 / rows as f64 - 1.0;
            let x = (2 * q + 1) as f64 / cols as f64 - 1.0;
            let [c0, c1, c2, c3] = spec.phase;
            let phi = c0 + c1 * x + c2 * y + c3 * x * y;
            img[p * cols + q] = acc / (ss * ss) as f64 * Complex64::from_polar(1.0, phi);
        }
    }
    let peak = img.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument("phantom renders to an all-zero image".into()));
    }
    let data = img
        .into_iter()
        .map(|z| C::new(T::of(z.re / peak), T::of(z.im / peak)))
        .collect();
    CTensor::new(vec![rows, cols], data)
}

/// `J` smooth coil maps: Gaussian bumps around the field of view with linear
/// phase, normalized so that `sum_j |s_j|^2 = 1` at every pixel. One coil
/// gives the identity map.
pub fn synthetic_coils<T: Real>(rows: usize, cols: usize, num_coils: usize, seed: u64) -> Result<CoilSet<T>> {
    if num_coils == 0 {
        return Err(Error::InvalidArgument("at least one coil is required".into()));
    }
    if num_coils == 1 {
        return CoilSet::uniform(rows, cols);
    }
    let mut rng = Rng::new(seed);
    let mut raw: Vec<Vec<Complex64>> = Vec::with_capacity(num_coils);
    for j in 0..num_coils {
        let t = std::f64::consts::TAU * (j as f64 + rng.uniform_range(-0.1, 0.1)) / num_coils as f64;
        let (cx, cy) = (1.2 * t.cos(), 1.2 * t.sin());
        let width = rng.uniform_range(0.9, 1.2);
        let (gx, gy) = (rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0));
        let mut map = Vec::with_capacity(rows * cols);
        for p in 0..rows {
            let y = (2 * p + 1) as f64 / rows as f64 - 1.0;
            for q in 0..cols {
                let x = (2 * q + 1) as f64 / cols as f64 - 1.0;
                let d2 = (x - cx).powi(2) + (y - cy).powi(2);
                let mag = (-d2 / (2.0 * width * width)).exp();
                map.push(Complex64::from_polar(mag, gx * x + gy * y));
            }
        }
        raw.push(map);
    }
    let maps = raw
        .iter()
        .map(|m| {
            let data = m
                .iter()
                .enumerate()
                .map(|(i, z)| {
                    let ss: f64 = raw.iter().map(|r| r[i].norm_sqr()).sum();
                    let v = z / ss.sqrt();
                    C::new(T::of(v.re), T::of(v.im))
                })
                .collect();
            CTensor::new(vec![rows, cols], data)
        })
        .collect::<Result<Vec<_>>>()?;
    CoilSet::new(maps)
}

/// Seed-derivation tags; each split draws from its own stream family.
const TAG_TRAIN: u64 = 1;
const TAG_VAL: u64 = 2;
const TAG_TEST: u64 = 3;
const TAG_COILS: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub rows: usize,
    pub cols: usize,
    pub num_coils: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus<T> {
    pub config: CorpusConfig,
    pub train: Vec<CTensor<T>>,
    pub val: Vec<CTensor<T>>,
    pub test: Vec<CTensor<T>>,
    pub coils: CoilSet<T>,
}

/// Spec of item `index` of a split (`1` train, `2` val, `3` test).
pub fn corpus_spec(cfg: &CorpusConfig, split: u64, index: usize) -> Result<PhantomSpec> {
    let mut rng = Rng::derive(cfg.seed, &[split, index as u64]);
    let n = 3 + rng.below(6);
    let seed = rng.below(usize::MAX) as u64;
    PhantomSpec::random(cfg.rows, cfg.cols, n, seed)
}

pub fn make_corpus<T: Real>(cfg: &CorpusConfig) -> Result<Corpus<T>> {
    if cfg.n_train == 0 || cfg.n_val == 0 || cfg.n_test == 0 {
        return Err(Error::InvalidArgument(format!(
            "every split needs at least one image, got {}/{}/{}",
            cfg.n_train, cfg.n_val, cfg.n_test
        )));
    }
    let split = |tag: u64, n: usize| -> Result<Vec<CTensor<T>>> {
        (0..n).map(|i| render(&corpus_spec(cfg, tag, i)?)).collect()
    };
    let coil_seed = Rng::derive(cfg.seed, &[TAG_COILS]).below(usize::MAX) as u64;
    Ok(Corpus {
        config: cfg.clone(),
        train: split(TAG_TRAIN, cfg.n_train)?,
        val: split(TAG_VAL, cfg.n_val)?,
        test: split(TAG_TEST, cfg.n_test)?,
        coils: synthetic_coils(cfg.rows, cfg.cols, cfg.num_coils, coil_seed)?,
    })
}

impl<T: Real> Corpus<T> {
    fn item_path(dir: &Path, split: &str, i: usize) -> PathBuf {
        dir.join(format!("{split}_{i:04}.jmt"))
    }

    /// `manifest.txt`, `coils.jmt` and one tensor per image.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, items) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for (i, t) in items.iter().enumerate() {
                write_tensor(t, Self::item_path(dir, name, i))?;
            }
        }
        write_tensor(&self.coils.to_tensor(), dir.join("coils.jmt"))?;
        let c = &self.config;
        let text = render_key_values(&[
            ("seed", c.seed.to_string()),
            ("rows", c.rows.to_string()),
            ("cols", c.cols.to_string()),
            ("coils", c.num_coils.to_string()),
            ("coil_file", "coils.jmt".into()),
            ("n_train", c.n_train.to_string()),
            ("n_val", c.n_val.to_string()),
            ("n_test", c.n_test.to_string()),
        ]);
        write_atomic(&dir.join("manifest.txt"), text.as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.txt");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut cfg = CorpusConfig {
            seed: 0,
            n_train: 0,
            n_val: 0,
            n_test: 0,
            rows: 0,
            cols: 0,
            num_coils: 0,
        };
        let mut coil_file = None;
        for (k, v) in parse_key_values(&text, &path)? {
            let num = || -> Result<u64> {
                v.parse().map_err(|_| Error::format(&path, format!("bad value for `{k}`: `{v}`")))
            };
            match k.as_str() {
                "seed" => cfg.seed = num()?,
                "rows" => cfg.rows = num()? as usize,
                "cols" => cfg.cols = num()? as usize,
                "coils" => cfg.num_coils = num()? as usize,
                "n_train" => cfg.n_train = num()? as usize,
                "n_val" => cfg.n_val = num()? as usize,
                "n_test" => cfg.n_test = num()? as usize,
                "coil_file" => coil_file = Some(v.clone()),
                _ => return Err(Error::format(&path, format!("unknown key `{k}`"))),
            }
        }
        let coil_file = coil_file.ok_or_else(|| Error::format(&path, "missing coil_file"))?;
        let coils = CoilSet::from_tensor(&read_tensor(dir.join(coil_file))?)?;
        if coils.shape() != (cfg.rows, cfg.cols) || coils.num_coils() != cfg.num_coils {
            return Err(Error::format(&path, "coil file does not match manifest"));
        }
        let load = |name: &str, n: usize| -> Result<Vec<CTensor<T>>> {
            (0..n)
                .map(|i| {
                    let p = Self::item_path(dir, name, i);
                    let t: CTensor<T> = read_tensor(&p)?;
                    if t.dims() != [cfg.rows, cfg.cols] {
                        return Err(Error::format(&p, format!("dims {:?}", t.dims())));
                    }
                    Ok(t)
                })
                .collect()
        };
        Ok(Self {
            train: load("train", cfg.n_train)?,
            val: load("val", cfg.n_val)?,
            test: load("test", cfg.n_test)?,
            coils,
            config: cfg,
        })
    }
}
