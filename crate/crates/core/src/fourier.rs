//! Non-uniform discrete Fourier operators at continuous sampling locations.
//!
//! Locations are normalized frequencies `k` in `[0, 1)` (cycles per field of
//! view). A 1-D sampler with locations `k_0..k_{M-1}` on a signal of length `N`
//! is the dense `M x N` matrix
//!
//! ```text
//! F[i, m] = exp(-j 2 pi k_i m) / sqrt(N),   m = 0..N-1
//! ```
//!
//! The 2-D operator is separable: the vertical sampler acts on the row index
//! `p` and the horizontal sampler on the column index `q`, so
//! `B = F_v X F_h^T` and `B[a, b] = sum X[p, q] exp(-j 2 pi (kv[a] p + kh[b] q)) / sqrt(PQ)`.
//! Matrices are built once per sampler and applied densely.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{fmt_sig17, write_atomic};
use crate::scalar::{cis_neg_turns, czero, Real, Strided, C};
use crate::tensor::CTensor;

/// Row `exp(-j 2 pi k m) / sqrt(N)` of the sampling matrix for location `k`.
pub fn dft_matrix_row<T: Real>(k: T, n: usize) -> Result<Vec<C<T>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("grid size must be >= 1".into()));
    }
    check_location(k)?;
    Ok(build_row(k, n))
}

fn build_row<T: Real>(k: T, n: usize) -> Vec<C<T>> {
    let norm = T::one() / T::of_usize(n).sqrt();
    (0..n)
        .map(|m| cis_neg_turns(k * T::of_usize(m)) * norm)
        .collect()
}

fn check_location<T: Real>(k: T) -> Result<()> {
    if !(k >= T::zero() && k < T::one()) {
        return Err(Error::LocationOutOfRange { value: k.as_f64() });
    }
    Ok(())
}

/// Wraps an arbitrary real into `[0, 1)`.
pub fn wrap_location<T: Real>(k: T) -> T {
    let w = k - k.floor();
    if w >= T::one() {
        T::zero()
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampler1D<T> {
    locations: Vec<T>,
    grid_size: usize,
    matrix: Vec<C<T>>,
    conj: Vec<C<T>>,
    unitary_grid: bool,
}

impl<T: Real> Sampler1D<T> {
    pub fn new(locations: Vec<T>, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(Error::InvalidArgument("grid size must be >= 1".into()));
        }
        if locations.is_empty() {
            return Err(Error::InvalidArgument("sampler needs at least one location".into()));
        }
        for &k in &locations {
            check_location(k)?;
        }
        let unitary_grid = locations.len() == grid_size
            && locations
                .iter()
                .enumerate()
                .all(|(m, &k)| k == T::of_usize(m) / T::of_usize(grid_size));
        let mut matrix = Vec::with_capacity(locations.len() * grid_size);
        for &k in &locations {
            matrix.extend(build_row(k, grid_size));
        }
        let conj = matrix.iter().map(|z| z.conj()).collect();
        Ok(Self {
            locations,
            grid_size,
            matrix,
            conj,
            unitary_grid,
        })
    }

    /// All integer bins `m / N`, which makes the operator the unitary DFT.
    pub fn full_grid(n: usize) -> Result<Self> {
        let locs = (0..n).map(|m| T::of_usize(m) / T::of_usize(n)).collect();
        Self::new(locs, n)
    }

    pub fn locations(&self) -> &[T] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    /// Dense `M x N` matrix, row-major.
    pub fn matrix(&self) -> &[C<T>] {
        &self.matrix
    }

    pub(crate) fn conj_matrix(&self) -> &[C<T>] {
        &self.conj
    }

    /// True when the locations are exactly the integer grid in order.
    pub fn is_unitary_grid(&self) -> bool {
        self.unitary_grid
    }

    fn row(&self, i: usize) -> &[C<T>] {
        &self.matrix[i * self.grid_size..(i + 1) * self.grid_size]
    }

    /// Copy with location `i` replaced.
    pub fn with_location(&self, i: usize, k: T) -> Result<Self> {
        let mut locs = self.locations.clone();
        *locs
            .get_mut(i)
            .ok_or_else(|| Error::InvalidArgument(format!("location index {i} out of range")))? = k;
        Self::new(locs, self.grid_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sampler2D<T> {
    pub vertical: Sampler1D<T>,
    pub horizontal: Sampler1D<T>,
}

impl<T: Real> Sampler2D<T> {
    pub fn new(vertical: Sampler1D<T>, horizontal: Sampler1D<T>) -> Self {
        Self {
            vertical,
            horizontal,
        }
    }

    /// Phase-encoding lines at `phase` locations, each fully sampled along a
    /// readout of length `readout`.
    pub fn lines(phase: Sampler1D<T>, readout: usize) -> Result<Self> {
        Ok(Self::new(phase, Sampler1D::full_grid(readout)?))
    }

    /// Image shape `(P, Q)`.
    pub fn image_shape(&self) -> (usize, usize) {
        (self.vertical.grid_size, self.horizontal.grid_size)
    }

    /// k-space shape `(m_v, m_h)`.
    pub fn kspace_shape(&self) -> (usize, usize) {
        (self.vertical.len(), self.horizontal.len())
    }

    pub fn num_samples(&self) -> usize {
        self.vertical.len() * self.horizontal.len()
    }

    pub fn acceleration(&self) -> f64 {
        let (p, q) = self.image_shape();
        (p * q) as f64 / self.num_samples() as f64
    }
}

// Dense kernels on row-major slices; `fc` is the elementwise conjugate of `f`.

/// `out (m x cols) = F (m x n) * x (n x cols)`.
pub(crate) fn left_apply<T: Real>(f: &[C<T>], m: usize, n: usize, x: &[C<T>], cols: usize) -> Vec<C<T>> {
    let mut out = vec![czero(); m * cols];
    T::gemm(m, n, cols, Strided::row_major(f, n), Strided::row_major(x, cols), &mut out);
    out
}

/// `out (n x cols) = F^H * y (m x cols)`.
pub(crate) fn left_apply_adj<T: Real>(fc: &[C<T>], m: usize, n: usize, y: &[C<T>], cols: usize) -> Vec<C<T>> {
    let mut out = vec![czero(); n * cols];
    T::gemm(n, m, cols, Strided::transposed(fc, n), Strided::row_major(y, cols), &mut out);
    out
}

/// `out (rows x m) = x (rows x n) * F^T`.
pub(crate) fn right_apply_t<T: Real>(x: &[C<T>], rows: usize, f: &[C<T>], m: usize, n: usize) -> Vec<C<T>> {
    let mut out = vec![czero(); rows * m];
    T::gemm(rows, n, m, Strided::row_major(x, n), Strided::transposed(f, n), &mut out);
    out
}

/// `out (rows x n) = y (rows x m) * conj(F)`.
pub(crate) fn right_apply_conj<T: Real>(y: &[C<T>], rows: usize, fc: &[C<T>], m: usize, n: usize) -> Vec<C<T>> {
    let mut out = vec![czero(); rows * n];
    T::gemm(rows, m, n, Strided::row_major(y, m), Strided::row_major(fc, n), &mut out);
    out
}

pub fn forward_1d<T: Real>(s: &Sampler1D<T>, x: &CTensor<T>) -> Result<CTensor<T>> {
    if x.len() != s.grid_size {
        return Err(Error::Shape(format!(
            "signal length {} vs grid size {}",
            x.len(),
            s.grid_size
        )));
    }
    let y = left_apply(&s.matrix, s.len(), s.grid_size, x.data(), 1);
    CTensor::new(vec![s.len()], y)
}

pub fn adjoint_1d<T: Real>(s: &Sampler1D<T>, y: &CTensor<T>) -> Result<CTensor<T>> {
    if y.len() != s.len() {
        return Err(Error::Shape(format!(
            "sample count {} vs sampler size {}",
            y.len(),
            s.len()
        )));
    }
    let x = left_apply_adj(&s.conj, s.len(), s.grid_size, y.data(), 1);
    CTensor::new(vec![s.grid_size], x)
}

pub(crate) fn forward_2d_raw<T: Real>(s: &Sampler2D<T>, x: &[C<T>]) -> Vec<C<T>> {
    let (p, q) = s.image_shape();
    let (mv, mh) = s.kspace_shape();
    let t = left_apply(&s.vertical.matrix, mv, p, x, q);
    right_apply_t(&t, mv, &s.horizontal.matrix, mh, q)
}

pub(crate) fn adjoint_2d_raw<T: Real>(s: &Sampler2D<T>, y: &[C<T>]) -> Vec<C<T>> {
    let (p, q) = s.image_shape();
    let (mv, mh) = s.kspace_shape();
    let t = right_apply_conj(y, mv, &s.horizontal.conj, mh, q);
    left_apply_adj(&s.vertical.conj, mv, p, &t, q)
}

/// `F^H F x`, skipping the horizontal pass when it is a unitary full grid.
pub(crate) fn gram_2d_raw<T: Real>(s: &Sampler2D<T>, x: &[C<T>]) -> Vec<C<T>> {
    let (p, q) = s.image_shape();
    let (mv, mh) = s.kspace_shape();
    let mut t = left_apply(&s.vertical.matrix, mv, p, x, q);
    if !s.horizontal.unitary_grid {
        let b = right_apply_t(&t, mv, &s.horizontal.matrix, mh, q);
        t = right_apply_conj(&b, mv, &s.horizontal.conj, mh, q);
    }
    left_apply_adj(&s.vertical.conj, mv, p, &t, q)
}

pub fn forward_2d<T: Real>(s: &Sampler2D<T>, x: &CTensor<T>) -> Result<CTensor<T>> {
    let (p, q) = s.image_shape();
    if x.dims() != [p, q] {
        return Err(Error::Shape(format!("image {:?} vs sampler grid ({p}, {q})", x.dims())));
    }
    let (mv, mh) = s.kspace_shape();
    CTensor::new(vec![mv, mh], forward_2d_raw(s, x.data()))
}

pub fn adjoint_2d<T: Real>(s: &Sampler2D<T>, y: &CTensor<T>) -> Result<CTensor<T>> {
    let (mv, mh) = s.kspace_shape();
    if y.dims() != [mv, mh] {
        return Err(Error::Shape(format!("k-space {:?} vs sampler ({mv}, {mh})", y.dims())));
    }
    let (p, q) = s.image_shape();
    CTensor::new(vec![p, q], adjoint_2d_raw(s, y.data()))
}

/// `d y[i] / d k_i = sum_m (-j 2 pi m) F[i, m] x[m]`; the other samples do not
/// depend on `k_i`.
pub fn dforward_dk_1d<T: Real>(s: &Sampler1D<T>, x: &CTensor<T>, i: usize) -> Result<C<T>> {
    if i >= s.len() {
        return Err(Error::InvalidArgument(format!(
            "sample index {i} out of range for {} locations",
            s.len()
        )));
    }
    if x.len() != s.grid_size {
        return Err(Error::Shape(format!(
            "signal length {} vs grid size {}",
            x.len(),
            s.grid_size
        )));
    }
    let mut acc = czero();
    for (m, (&f, &v)) in s.row(i).iter().zip(x.data()).enumerate() {
        acc += f * v * T::of_usize(m);
    }
    Ok(C::new(T::zero(), -T::TAU()) * acc)
}

/// Which location gradients to form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationAxes {
    None,
    /// Vertical only; the horizontal gradient is returned as zeros.
    Vertical,
    Both,
}

/// Gradient of `Re <c, F(x)>` with respect to every vertical and horizontal
/// location, where `x` is a `P x Q` image and `c` an `m_v x m_h` k-space array.
pub(crate) fn location_grad_2d<T: Real>(
    s: &Sampler2D<T>,
    x: &[C<T>],
    c: &[C<T>],
    axes: LocationAxes,
) -> (Vec<T>, Vec<T>) {
    let (mv, mh) = s.kspace_shape();
    if axes == LocationAxes::None {
        return (vec![T::zero(); mv], vec![T::zero(); mh]);
    }
    let (p, q) = s.image_shape();
    let two_pi = T::TAU();

    // Vertical: d/dk_v[a] = Re sum_p (-j 2 pi p) Fv[a,p] T[a,p] with
    // T[a,p] = sum_b conj(c[a,b]) (X Fh^T)[p,b] = (conj(c Fh^*) X^T)[a,p].
    let u: Vec<C<T>> = right_apply_conj(c, mv, &s.horizontal.conj, mh, q)
        .into_iter()
        .map(|z| z.conj())
        .collect();
    let mut t = vec![czero(); mv * p];
    T::gemm(mv, q, p, Strided::row_major(&u, q), Strided::transposed(x, q), &mut t);
    let mut gv = vec![T::zero(); mv];
    for (a, g) in gv.iter_mut().enumerate() {
        let frow = &s.vertical.matrix[a * p..(a + 1) * p];
        let trow = &t[a * p..(a + 1) * p];
        let mut acc = czero();
        for pi in 1..p {
            acc += frow[pi] * trow[pi] * T::of_usize(pi);
        }
        // (-j 2 pi) * acc, real part.
        *g = two_pi * acc.im;
    }

    if axes == LocationAxes::Vertical {
        return (gv, vec![T::zero(); mh]);
    }

    // Horizontal: d/dk_h[b] = Re sum_q (-j 2 pi q) Fh[b,q] (c^H Fv X)[b,q].
    let v = left_apply(&s.vertical.matrix, mv, p, x, q);
    let cc: Vec<C<T>> = c.iter().map(|z| z.conj()).collect();
    let mut proj = vec![czero(); mh * q];
    T::gemm(mh, mv, q, Strided::transposed(&cc, mh), Strided::row_major(&v, q), &mut proj);
    let mut gh = vec![T::zero(); mh];
    for (b, g) in gh.iter_mut().enumerate() {
        let frow = &s.horizontal.matrix[b * q..(b + 1) * q];
        let prow = &proj[b * q..(b + 1) * q];
        let mut acc = czero();
        for qi in 1..q {
            acc += frow[qi] * prow[qi] * T::of_usize(qi);
        }
        *g = two_pi * acc.im;
    }
    (gv, gh)
}

/// A sampling pattern as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    OneD { grid: usize, locations: Vec<f64> },
    TwoD {
        rows: usize,
        cols: usize,
        vertical: Vec<f64>,
        horizontal: Vec<f64>,
    },
}

impl Pattern {
    pub fn from_sampler1d<T: Real>(s: &Sampler1D<T>) -> Self {
        Pattern::OneD {
            grid: s.grid_size(),
            locations: s.locations().iter().map(|k| k.as_f64()).collect(),
        }
    }

    pub fn from_sampler2d<T: Real>(s: &Sampler2D<T>) -> Self {
        let (rows, cols) = s.image_shape();
        Pattern::TwoD {
            rows,
            cols,
            vertical: s.vertical.locations().iter().map(|k| k.as_f64()).collect(),
            horizontal: s.horizontal.locations().iter().map(|k| k.as_f64()).collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Pattern::OneD { grid, locations } => {
                out.push_str(&format!("pattern1d {} {}\n", grid, locations.len()));
                for &k in locations {
                    out.push_str(&fmt_sig17(k));
                    out.push('\n');
                }
            }
            Pattern::TwoD {
                rows,
                cols,
                vertical,
                horizontal,
            } => {
                out.push_str(&format!(
                    "pattern2d {} {} {} {}\n",
                    rows,
                    cols,
                    vertical.len(),
                    horizontal.len()
                ));
                for &k in vertical.iter().chain(horizontal) {
                    out.push_str(&fmt_sig17(k));
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty pattern file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let num = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::format(path, format!("bad integer `{s}` in header")))
        };
        let values: Vec<f64> = lines
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|_| Error::format(path, format!("bad location `{l}`")))
            })
            .collect::<Result<_>>()?;
        let check = |n: usize| -> Result<()> {
            if values.len() != n {
                return Err(Error::format(
                    path,
                    format!("header promises {n} locations, found {}", values.len()),
                ));
            }
            Ok(())
        };
        match fields.as_slice() {
            ["pattern1d", n, m] => {
                let (grid, m) = (num(n)?, num(m)?);
                check(m)?;
                Ok(Pattern::OneD {
                    grid,
                    locations: values,
                })
            }
            ["pattern2d", p, q, mv, mh] => {
                let (rows, cols, mv, mh) = (num(p)?, num(q)?, num(mv)?, num(mh)?);
                check(mv + mh)?;
                let horizontal = values[mv..].to_vec();
                let mut vertical = values;
                vertical.truncate(mv);
                Ok(Pattern::TwoD {
                    rows,
                    cols,
                    vertical,
                    horizontal,
                })
            }
            _ => Err(Error::format(path, format!("bad header `{header}`"))),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Builds the operator; a 1-D pattern becomes phase-encoding lines with a
    /// fully sampled readout of length `readout`.
    pub fn to_sampler<T: Real>(&self, readout: usize) -> Result<Sampler2D<T>> {
        let conv = |v: &[f64]| v.iter().map(|&k| T::of(k)).collect::<Vec<T>>();
        match self {
            Pattern::OneD { grid, locations } => {
                Sampler2D::lines(Sampler1D::new(conv(locations), *grid)?, readout)
            }
            Pattern::TwoD {
                rows,
                cols,
                vertical,
                horizontal,
            } => Ok(Sampler2D::new(
                Sampler1D::new(conv(vertical), *rows)?,
                Sampler1D::new(conv(horizontal), *cols)?,
            )),
        }
    }
}
