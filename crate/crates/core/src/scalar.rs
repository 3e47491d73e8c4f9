//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point type the operators, solver and network are generic over.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }

    /// `c (m x n) = a (m x k) * b (k x n)` for strided complex matrices; `c`
    /// is dense row-major and overwritten.
    fn gemm(m: usize, k: usize, n: usize, a: Strided<'_, Self>, b: Strided<'_, Self>, c: &mut [C<Self>]);
}

/// A borrowed matrix with row and column strides in elements.
#[derive(Clone, Copy)]
pub struct Strided<'a, T> {
    pub data: &'a [C<T>],
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> Strided<'a, T> {
    pub fn row_major(data: &'a [C<T>], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// The transpose of a row-major `rows x cols` matrix.
    pub fn transposed(data: &'a [C<T>], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }

    fn check(&self, rows: usize, cols: usize) {
        if rows > 0 && cols > 0 {
            assert!((rows - 1) * self.rs + (cols - 1) * self.cs < self.data.len(), "strided matrix out of bounds");
        }
    }
}

macro_rules! impl_gemm {
    ($t:ty, $f:ident) => {
        impl Real for $t {
            fn gemm(m: usize, k: usize, n: usize, a: Strided<'_, $t>, b: Strided<'_, $t>, c: &mut [C<$t>]) {
                a.check(m, k);
                b.check(k, n);
                assert_eq!(c.len(), m * n, "gemm output size");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    c.fill(C::new(0.0, 0.0));
                    return;
                }
                use matrixmultiply::CGemmOption::Standard;
                // SAFETY: `Complex<T>` is `repr(C)` with fields `re, im`, the
                // same layout as `[T; 2]`; every access is bounds-checked above
                // and beta = 0 means `c` is write-only.
                unsafe {
                    matrixmultiply::$f(
                        Standard,
                        Standard,
                        m,
                        k,
                        n,
                        [1.0, 0.0],
                        a.data.as_ptr().cast(),
                        a.rs as isize,
                        a.cs as isize,
                        b.data.as_ptr().cast(),
                        b.rs as isize,
                        b.cs as isize,
                        [0.0, 0.0],
                        c.as_mut_ptr().cast(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_gemm!(f32, cgemm);
impl_gemm!(f64, zgemm);

/// Complex scalar over a [`Real`].
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn czero<T: Real>() -> C<T> {
    C::new(T::zero(), T::zero())
}

/// `exp(-j 2 pi phase)`, reducing the argument to one period first.
#[inline]
pub(crate) fn cis_neg_turns<T: Real>(turns: T) -> C<T> {
    let reduced = turns - turns.floor();
    let angle = -T::TAU() * reduced;
    C::new(angle.cos(), angle.sin())
}
