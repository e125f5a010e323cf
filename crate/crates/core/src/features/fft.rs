//! Radix-2 Cooley–Tukey FFT.

use num_complex::Complex;

use crate::scalar::Scalar;

fn transform<T: Scalar>(buf: &mut [Complex<T>], inverse: bool) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    let bits = n.trailing_zeros();
    if bits > 0 {
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                buf.swap(i, j);
            }
        }
    }
    let sign = if inverse { T::one() } else { -T::one() };
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for k in 0..half {
            let angle = sign * two_pi * T::from_usize_lossy(k) / T::from_usize_lossy(len);
            let w = Complex::new(angle.cos(), angle.sin());
            for start in (0..n).step_by(len) {
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

/// Forward transform `X[k] = Σ x[t]·e^{−2πikt/n}` of a real signal,
/// zero-padded to the next power of two. Empty input gives an empty spectrum.
pub fn fft<T: Scalar>(signal: &[T]) -> Vec<Complex<T>> {
    if signal.is_empty() {
        return Vec::new();
    }
    let n = signal.len().next_power_of_two();
    let mut buf: Vec<Complex<T>> = signal.iter().map(|&x| Complex::new(x, T::zero())).collect();
    buf.resize(n, Complex::new(T::zero(), T::zero()));
    transform(&mut buf, false);
    buf
}

/// In-place forward transform of a power-of-two-length complex buffer.
pub fn fft_complex<T: Scalar>(buf: &mut [Complex<T>]) {
    assert!(buf.is_empty() || buf.len().is_power_of_two(), "length must be a power of two");
    if !buf.is_empty() {
        transform(buf, false);
    }
}

/// Inverse of [`fft`], scaled by `1/n`.
pub fn ifft<T: Scalar>(spectrum: &[Complex<T>]) -> Vec<Complex<T>> {
    assert!(spectrum.is_empty() || spectrum.len().is_power_of_two(), "length must be a power of two");
    let mut buf = spectrum.to_vec();
    if buf.is_empty() {
        return buf;
    }
    transform(&mut buf, true);
    let scale = T::one() / T::from_usize_lossy(buf.len());
    for z in &mut buf {
        *z = *z * scale;
    }
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_dc_only() {
        let x = fft(&[2.5f64; 4]);
        assert_eq!(x[0], Complex::new(10.0, 0.0));
        assert!(x[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let mut buf: Vec<Complex<f64>> = (0..8)
            .map(|t| Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * t as f64 / 8.0))
            .collect();
        fft_complex(&mut buf);
        assert!((buf[1].re - 8.0).abs() < 1e-12);
        assert!(buf.iter().enumerate().filter(|(k, _)| *k != 1).all(|(_, z)| z.norm() < 1e-12));
    }

    #[test]
    fn thirty_samples_pad_to_thirty_two() {
        let x: Vec<f32> = (0..30).map(|i| i as f32).collect();
        let spec = fft(&x);
        assert_eq!(spec.len(), 32);
        assert!((spec[0].re - 435.0).abs() < 1e-3);
        let back = ifft(&spec);
        assert!((back[29].re - 29.0).abs() < 1e-4);
        assert!(back[31].re.abs() < 1e-4);
    }
}
