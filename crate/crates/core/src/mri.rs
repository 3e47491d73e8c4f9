//! Multichannel forward model: coil weighting followed by Fourier sampling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fourier::{adjoint_2d_raw, forward_2d_raw, gram_2d_raw, left_apply, left_apply_adj, location_grad_2d, LocationAxes, Sampler2D};
use crate::io::{read_tensor, render_key_values, write_atomic, write_tensor};
use crate::rng::Rng;
use crate::scalar::{czero, Real};
use crate::tensor::CTensor;

/// `J` complex sensitivity maps sharing one `P x Q` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoilSet<T> {
    maps: Vec<CTensor<T>>,
    rows: usize,
    cols: usize,
}

impl<T: Real> CoilSet<T> {
    pub fn new(maps: Vec<CTensor<T>>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidArgument("coil set needs at least one map".into()))?;
        let (rows, cols) = first.shape2()?;
        for m in &maps {
            first.same_dims(m)?;
        }
        Ok(Self { maps, rows, cols })
    }

    /// Single coil with unit sensitivity everywhere.
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        let one = CTensor::from_real(vec![rows, cols], &vec![T::one(); rows * cols])?;
        Self::new(vec![one])
    }

    pub fn maps(&self) -> &[CTensor<T>] {
        &self.maps
    }

    pub fn num_coils(&self) -> usize {
        self.maps.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn sum_of_squares(&self) -> Vec<T> {
        let mut sos = vec![T::zero(); self.rows * self.cols];
        for m in &self.maps {
            for (s, z) in sos.iter_mut().zip(m.data()) {
                *s += z.norm_sqr();
            }
        }
        sos
    }

    /// `max_j max |s_j|^2`.
    pub fn peak_power(&self) -> T {
        self.maps
            .iter()
            .flat_map(|m| m.data().iter().map(|z| z.norm_sqr()))
            .fold(T::zero(), T::max)
    }

    /// Stacks the maps into one `J x P x Q` tensor.
    pub fn to_tensor(&self) -> CTensor<T> {
        let data = self.maps.iter().flat_map(|m| m.data().iter().copied()).collect();
        CTensor::from_parts_unchecked(vec![self.maps.len(), self.rows, self.cols], data)
    }

    pub fn from_tensor(t: &CTensor<T>) -> Result<Self> {
        let [j, p, q] = t.dims() else {
            return Err(Error::Shape(format!("coil tensor must be J x P x Q, got {:?}", t.dims())));
        };
        let plane = p * q;
        let maps = (0..*j)
            .map(|c| CTensor::new(vec![*p, *q], t.data()[c * plane..(c + 1) * plane].to_vec()))
            .collect::<Result<_>>()?;
        Self::new(maps)
    }

    fn check_image(&self, x: &CTensor<T>) -> Result<()> {
        if x.dims() != [self.rows, self.cols] {
            return Err(Error::Shape(format!(
                "image {:?} vs coil grid ({}, {})",
                x.dims(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    fn check_sampler(&self, s: &Sampler2D<T>) -> Result<()> {
        if s.image_shape() != (self.rows, self.cols) {
            return Err(Error::Shape(format!(
                "sampler grid {:?} vs coil grid ({}, {})",
                s.image_shape(),
                self.rows,
                self.cols
            )));
        }
        Ok(())
    }

    fn check_kspace(&self, s: &Sampler2D<T>, b: &CTensor<T>) -> Result<()> {
        let (mv, mh) = s.kspace_shape();
        if b.dims() != [self.maps.len(), mv, mh] {
            return Err(Error::Shape(format!(
                "k-space {:?} vs expected [{}, {mv}, {mh}]",
                b.dims(),
                self.maps.len()
            )));
        }
        Ok(())
    }
}

/// Acquired samples `J x m_v x m_h` and the noise level used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceData<T> {
    pub samples: CTensor<T>,
    pub sigma: T,
}

impl<T: Real> KSpaceData<T> {
    pub fn noiseless(samples: CTensor<T>) -> Self {
        Self {
            samples,
            sigma: T::zero(),
        }
    }

    /// Writes `<stem>.jmt` plus a `<stem>.txt` sidecar naming the pattern file.
    pub fn write(&self, dir: &Path, stem: &str, pattern_file: &str) -> Result<()> {
        write_tensor(&self.samples, dir.join(format!("{stem}.jmt")))?;
        let text = render_key_values(&[
            ("sigma", crate::io::fmt_sig17(self.sigma.as_f64())),
            ("samples", format!("{stem}.jmt")),
            ("pattern", pattern_file.to_string()),
        ]);
        write_atomic(&dir.join(format!("{stem}.txt")), text.as_bytes())
    }

    pub fn read(dir: &Path, stem: &str) -> Result<(Self, String)> {
        let side = dir.join(format!("{stem}.txt"));
        let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let mut sigma = None;
        let mut pattern = None;
        let mut samples = None;
        for (k, v) in crate::io::parse_key_values(&text, &side)? {
            match k.as_str() {
                "sigma" => sigma = v.parse::<f64>().ok(),
                "pattern" => pattern = Some(v),
                "samples" => samples = Some(v),
                _ => return Err(Error::format(&side, format!("unknown key `{k}`"))),
            }
        }
        let sigma = sigma.ok_or_else(|| Error::format(&side, "missing sigma"))?;
        let samples = samples.ok_or_else(|| Error::format(&side, "missing samples"))?;
        let pattern = pattern.ok_or_else(|| Error::format(&side, "missing pattern"))?;
        Ok((
            Self {
                samples: read_tensor(dir.join(samples))?,
                sigma: T::of(sigma),
            },
            pattern,
        ))
    }
}

fn weighted<T: Real>(map: &CTensor<T>, x: &[crate::scalar::C<T>]) -> Vec<crate::scalar::C<T>> {
    map.data().iter().zip(x).map(|(&s, &v)| s * v).collect()
}

/// `b_j = F_Theta(s_j * rho)` for every coil.
pub fn forward_mc<T: Real>(coils: &CoilSet<T>, s: &Sampler2D<T>, rho: &CTensor<T>) -> Result<CTensor<T>> {
    coils.check_sampler(s)?;
    coils.check_image(rho)?;
    let (mv, mh) = s.kspace_shape();
    let mut out = Vec::with_capacity(coils.num_coils() * mv * mh);
    for map in &coils.maps {
        out.extend(forward_2d_raw(s, &weighted(map, rho.data())));
    }
    CTensor::new(vec![coils.num_coils(), mv, mh], out)
}

/// `sum_j conj(s_j) * F_Theta^H b_j`.
pub fn adjoint_mc<T: Real>(coils: &CoilSet<T>, s: &Sampler2D<T>, b: &CTensor<T>) -> Result<CTensor<T>> {
    coils.check_sampler(s)?;
    coils.check_kspace(s, b)?;
    let (mv, mh) = s.kspace_shape();
    let plane = mv * mh;
    let mut out = vec![czero(); coils.rows * coils.cols];
    for (j, map) in coils.maps.iter().enumerate() {
        let back = adjoint_2d_raw(s, &b.data()[j * plane..(j + 1) * plane]);
        for ((o, &sv), v) in out.iter_mut().zip(map.data()).zip(back) {
            *o += sv.conj() * v;
        }
    }
    CTensor::new(vec![coils.rows, coils.cols], out)
}

/// `A^H A x`.
pub fn normal_op<T: Real>(coils: &CoilSet<T>, s: &Sampler2D<T>, x: &CTensor<T>) -> Result<CTensor<T>> {
    coils.check_sampler(s)?;
    coils.check_image(x)?;
    Ok(CTensor::from_parts_unchecked(
        x.dims().to_vec(),
        normal_raw(coils, s, x.data()),
    ))
}

pub(crate) fn normal_raw<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    x: &[crate::scalar::C<T>],
) -> Vec<crate::scalar::C<T>> {
    if s.horizontal.is_unitary_grid() {
        return normal_raw_lines(coils, s, x);
    }
    let mut out = vec![czero(); x.len()];
    for map in &coils.maps {
        let g = gram_2d_raw(s, &weighted(map, x));
        for ((o, &sv), v) in out.iter_mut().zip(map.data()).zip(g) {
            *o += sv.conj() * v;
        }
    }
    out
}

/// Line sampling: the horizontal transform cancels, so all coils share one
/// vertical pass over a `P x (J Q)` stack.
fn normal_raw_lines<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    x: &[crate::scalar::C<T>],
) -> Vec<crate::scalar::C<T>> {
    let (p, q) = (coils.rows, coils.cols);
    let j = coils.num_coils();
    let mut stack = Vec::with_capacity(p * j * q);
    for r in 0..p {
        for map in &coils.maps {
            let row = r * q..(r + 1) * q;
            stack.extend(map.data()[row.clone()].iter().zip(&x[row]).map(|(&sv, &v)| sv * v));
        }
    }
    let mv = s.vertical.len();
    let t = left_apply(s.vertical.matrix(), mv, p, &stack, j * q);
    let back = left_apply_adj(s.vertical.conj_matrix(), mv, p, &t, j * q);
    let mut out = vec![czero(); p * q];
    for r in 0..p {
        for (c, map) in coils.maps.iter().enumerate() {
            let brow = &back[(r * j + c) * q..(r * j + c + 1) * q];
            let mrow = &map.data()[r * q..(r + 1) * q];
            for ((o, &sv), &v) in out[r * q..(r + 1) * q].iter_mut().zip(mrow).zip(brow) {
                *o += sv.conj() * v;
            }
        }
    }
    out
}

/// Simulated acquisition `A rho + n` with circular complex Gaussian noise of
/// total variance `sigma^2` per sample.
pub fn acquire<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    rho: &CTensor<T>,
    sigma: T,
    rng: &mut Rng,
) -> Result<KSpaceData<T>> {
    if !(sigma >= T::zero()) {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut samples = forward_mc(coils, s, rho)?;
    if sigma > T::zero() {
        let noise: CTensor<T> = rng.randn_complex(samples.dims())?;
        samples.axpy(crate::scalar::C::new(sigma, T::zero()), &noise);
    }
    Ok(KSpaceData { samples, sigma })
}

/// Gradient of `Re <c, A_Theta x>` with respect to the vertical and horizontal
/// sampling locations.
pub fn location_grad_mc<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    x: &CTensor<T>,
    c: &CTensor<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    location_grad_mc_axes(coils, s, x, c, LocationAxes::Both)
}

/// [`location_grad_mc`] restricted to `axes`.
pub fn location_grad_mc_axes<T: Real>(
    coils: &CoilSet<T>,
    s: &Sampler2D<T>,
    x: &CTensor<T>,
    c: &CTensor<T>,
    axes: LocationAxes,
) -> Result<(Vec<T>, Vec<T>)> {
    coils.check_sampler(s)?;
    coils.check_image(x)?;
    coils.check_kspace(s, c)?;
    let (mv, mh) = s.kspace_shape();
    let plane = mv * mh;
    let mut gv = vec![T::zero(); mv];
    let mut gh = vec![T::zero(); mh];
    if axes == LocationAxes::None {
        return Ok((gv, gh));
    }
    for (j, map) in coils.maps.iter().enumerate() {
        let (v, h) = location_grad_2d(s, &weighted(map, x.data()), &c.data()[j * plane..(j + 1) * plane], axes);
        gv.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        gh.iter_mut().zip(h).for_each(|(a, b)| *a += b);
    }
    Ok((gv, gh))
}
