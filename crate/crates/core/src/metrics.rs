//! Image quality metrics on complex images.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::CTensor;

/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `20 log10(max|ref| / rms|x - ref|)`; `+inf` when the images are equal.
pub fn psnr<T: Real>(x: &CTensor<T>, reference: &CTensor<T>) -> Result<f64> {
    x.same_dims(reference)?;
    let peak = reference.data().iter().map(|z| z.norm().as_f64()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument("PSNR reference is identically zero".into()));
    }
    let mse = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b).norm_sqr().as_f64())
        .sum::<f64>()
        / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (peak / mse.sqrt()).log10())
}

/// Mean SSIM of the magnitude images over all fully contained 7x7 windows
/// with uniform weights and population statistics. The dynamic range is
/// `max|ref|`.
pub fn ssim<T: Real>(x: &CTensor<T>, reference: &CTensor<T>) -> Result<f64> {
    x.same_dims(reference)?;
    let (rows, cols) = reference.shape2()?;
    let w = SSIM_WINDOW;
    if rows < w || cols < w {
        return Err(Error::Shape(format!(
            "SSIM needs at least {w}x{w} pixels, got {rows}x{cols}"
        )));
    }
    let a: Vec<f64> = x.data().iter().map(|z| z.norm().as_f64()).collect();
    let b: Vec<f64> = reference.data().iter().map(|z| z.norm().as_f64()).collect();
    let range = b.iter().copied().fold(0.0, f64::max);
    Ok(ssim_magnitudes(&a, &b, rows, cols, range))
}

/// SSIM of two real images with an explicit dynamic range.
pub fn ssim_magnitudes(a: &[f64], b: &[f64], rows: usize, cols: usize, range: f64) -> f64 {
    let w = SSIM_WINDOW;
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);
    let n = (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r in 0..=rows - w {
        for c in 0..=cols - w {
            let (mut sa, mut sb) = (0.0, 0.0);
            for i in r..r + w {
                for j in c..c + w {
                    sa += a[i * cols + j];
                    sb += b[i * cols + j];
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
            for i in r..r + w {
                for j in c..c + w {
                    let da = a[i * cols + j] - ma;
                    let db = b[i * cols + j] - mb;
                    vaa += da * da;
                    vbb += db * db;
                    vab += da * db;
                }
            }
            let (vaa, vbb, vab) = (vaa / n, vbb / n, vab / n);
            let num = (2.0 * ma * mb + c1) * (2.0 * vab + c2);
            let den = (ma * ma + mb * mb + c1) * (vaa + vbb + c2);
            // Two flat zero windows with a zero range are identical.
            total += if den == 0.0 { 1.0 } else { num / den };
            count += 1;
        }
    }
    total / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::scalar::C;

    #[test]
    fn psnr_constant_offset_is_20db() {
        let r = CTensor::from_real(vec![8, 8], &[1.0f64; 64]).unwrap();
        let x = r.map(|z| z + C::new(0.1, 0.0));
        assert!((psnr(&x, &r).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn identical_images() {
        let r: CTensor<f64> = Rng::new(4).randn_complex(&[9, 11]).unwrap();
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn zero_reference_and_small_images_rejected() {
        let z = CTensor::<f64>::zeros(&[8, 8]).unwrap();
        assert!(psnr(&z, &z).is_err());
        let s = CTensor::<f64>::zeros(&[6, 8]).unwrap();
        assert!(ssim(&s, &s).is_err());
    }
}
