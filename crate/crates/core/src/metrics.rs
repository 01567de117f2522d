//! Image similarity: SSIM, masked SSIM and a latent-space perceptual proxy.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5) applied separably with
//! half-sample symmetric padding, population statistics and the usual
//! constants for unit dynamic range. The score is the mean of the SSIM map
//! over every pixel and channel.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::frame::{Frame, Mask, CHANNELS};
use crate::wm::{encode, l2};

pub const C1: f64 = 1e-4;
pub const C2: f64 = 9e-4;
const RADIUS: usize = 5;
const SIGMA: f64 = 1.5;

fn kernel() -> [f64; 2 * RADIUS + 1] {
    let mut k = [0.0; 2 * RADIUS + 1];
    let mut s = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - RADIUS as f64;
        *v = libm::exp(-0.5 * d * d / (SIGMA * SIGMA));
        s += *v;
    }
    for v in k.iter_mut() {
        *v /= s;
    }
    k
}

/// Half-sample symmetric index: `... c b a | a b c ...`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

fn blur(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * src[r * w + reflect(c as isize + t as isize - RADIUS as isize, w)];
            }
            tmp[r * w + c] = s;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * tmp[reflect(r as isize + t as isize - RADIUS as isize, h) * w + c];
            }
            out[r * w + c] = s;
        }
    }
    out
}

fn check_shapes(a: &Frame, b: &Frame) -> Result<(), Error> {
    if a.shape() != b.shape() {
        return Err(Error::Shape { expected: a.shape(), got: b.shape() });
    }
    Ok(())
}

/// Per-pixel SSIM averaged over channels, row-major `H x W`.
pub fn ssim_map(a: &Frame, b: &Frame) -> Result<Vec<f64>, Error> {
    check_shapes(a, b)?;
    let (h, w) = a.shape();
    let k = kernel();
    let mut acc = vec![0.0; h * w];
    let mut xa = vec![0.0; h * w];
    let mut xb = vec![0.0; h * w];
    for ch in 0..CHANNELS {
        for i in 0..h * w {
            xa[i] = a.data()[i * CHANNELS + ch] as f64;
            xb[i] = b.data()[i * CHANNELS + ch] as f64;
        }
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = blur(&xa, h, w, &k);
        let mu_b = blur(&xb, h, w, &k);
        let aa = blur(&prod(&xa, &xa), h, w, &k);
        let bb = blur(&prod(&xb, &xb), h, w, &k);
        let ab = blur(&prod(&xa, &xb), h, w, &k);
        for i in 0..h * w {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            let num = (2.0 * ma * mb + C1) * (2.0 * cov + C2);
            let den = (ma * ma + mb * mb + C1) * (va + vb + C2);
            acc[i] += num / den;
        }
    }
    for v in acc.iter_mut() {
        *v /= CHANNELS as f64;
    }
    Ok(acc)
}

pub fn ssim(a: &Frame, b: &Frame) -> Result<f64, Error> {
    let m = ssim_map(a, b)?;
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

/// Mean SSIM over the windows centred inside the bounding box of `mask`.
pub fn masked_ssim(a: &Frame, b: &Frame, mask: &Mask) -> Result<f64, Error> {
    check_shapes(a, b)?;
    if mask.shape() != a.shape() {
        return Err(Error::Shape { expected: a.shape(), got: mask.shape() });
    }
    let bbox = mask.bbox().ok_or(Error::EmptyMask)?;
    let m = ssim_map(a, b)?;
    let w = a.width();
    let mut s = 0.0;
    for r in bbox.r0..bbox.r1 {
        for c in bbox.c0..bbox.c1 {
            s += m[r * w + c];
        }
    }
    Ok(s / bbox.area() as f64)
}

/// Root-mean-square difference of patch-mean features. Lower is more similar.
/// This is a cheap stand-in for a learned perceptual metric.
pub fn proxy_perceptual(a: &Frame, b: &Frame) -> Result<f64, Error> {
    check_shapes(a, b)?;
    let za = encode(a)?;
    let zb = encode(b)?;
    Ok(l2(&za, &zb) / libm::sqrt(za.len() as f64))
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, libm::sqrt(v))
}

/// Median of a sample (mean of the two middle values for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (q / 100.0).clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::Rect;

    /// Deterministic textured test image, reproducible outside Rust.
    pub(crate) fn pattern(phase: f64) -> Frame {
        let mut f = Frame::zeros(64, 64);
        for r in 0..64 {
            for c in 0..64 {
                let (rf, cf) = (r as f64, c as f64);
                let v = [
                    0.5 + 0.4 * libm::sin(0.3 * rf + 0.2 * cf + phase),
                    0.5 + 0.4 * libm::cos(0.25 * rf - 0.15 * cf + 2.0 * phase),
                    0.5 + 0.3 * libm::sin(0.1 * rf * cf / 8.0 + phase),
                ];
                f.set(r, c, [v[0] as f32, v[1] as f32, v[2] as f32]);
            }
        }
        f
    }

    #[test]
    fn identity_is_one() {
        let a = pattern(0.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric() {
        let (a, b) = (pattern(0.0), pattern(0.7));
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn constant_images_closed_form() {
        let a = Frame::filled(64, 64, [0.2; 3]);
        let b = Frame::filled(64, 64, [0.4; 3]);
        let expected = (2.0 * 0.2 * 0.4 + C1) / (0.04 + 0.16 + C1);
        let got = ssim(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
        assert!((got - 0.80010).abs() < 1e-4);
    }

    #[test]
    fn matches_reference_implementation() {
        // Reference value: scikit-image structural_similarity with
        // gaussian_weights, sigma 1.5, population covariance, data_range 1,
        // averaging the full map (no border crop), on float32 inputs.
        let got = ssim(&pattern(0.0), &pattern(0.7)).unwrap();
        assert!((got - REFERENCE_SSIM).abs() < 1e-5, "{got}");
    }

    const REFERENCE_SSIM: f64 = 0.441_994_306_893_466_6;

    #[test]
    fn full_mask_equals_full_ssim() {
        let (a, b) = (pattern(0.0), pattern(0.3));
        let full = Mask::full(64, 64);
        assert!((masked_ssim(&a, &b, &full).unwrap() - ssim(&a, &b).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn masked_ssim_ignores_distant_changes() {
        let a = pattern(0.0);
        let mut b = a.clone();
        for r in 50..64 {
            for c in 50..64 {
                b.set(r, c, [0.0, 0.0, 0.0]);
            }
        }
        let m = Mask::from_rect(64, 64, &Rect::new(0, 0, 20, 20));
        assert!((masked_ssim(&a, &b, &m).unwrap() - 1.0).abs() < 1e-12);
        assert!(ssim(&a, &b).unwrap() < 0.99);
        assert_eq!(masked_ssim(&a, &b, &Mask::new(64, 64)), Err(Error::EmptyMask));
    }

    #[test]
    fn proxy_is_zero_on_identity() {
        let a = pattern(0.1);
        assert_eq!(proxy_perceptual(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn percentile_and_median() {
        let xs = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&xs), 2.5);
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 100.0), 4.0);
        assert!((percentile(&xs, 75.0) - 3.25).abs() < 1e-12);
    }
}
