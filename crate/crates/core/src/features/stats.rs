//! Per-channel time-domain and spectral statistics.

use num_complex::Complex;

pub const TIME_FEATURE_NAMES: [&str; 12] = [
    "mean", "std", "mad", "max", "min", "peaks", "num_mean", "energy", "iqr", "entropy", "ar_coeff1", "ar_coeff2",
];
pub const FREQ_FEATURE_NAMES: [&str; 5] = ["min_freq_ind", "max_freq_ind", "mean_freq", "skewness", "kurtosis"];

/// Highest spectral bin used by the frequency features (bins 1..=16 of a
/// 32-point transform).
pub const FREQ_BINS: usize = 16;
const HISTOGRAM_BINS: usize = 10;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Linear interpolation at position `(n − 1)·p` of the sorted values.
pub fn quantile(x: &[f64], p: f64) -> f64 {
    let s = sorted(x);
    let pos = (s.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

pub fn median(x: &[f64]) -> f64 {
    quantile(x, 0.5)
}

/// Shannon entropy (nats) of a 10-bin histogram spanning `[min, max]`.
pub fn histogram_entropy(x: &[f64]) -> f64 {
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi > lo) {
        return 0.0;
    }
    let mut counts = [0usize; HISTOGRAM_BINS];
    for &v in x {
        let b = (((v - lo) / (hi - lo)) * HISTOGRAM_BINS as f64).floor() as usize;
        counts[b.min(HISTOGRAM_BINS - 1)] += 1;
    }
    let n = x.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Order-2 autoregression coefficients from the Yule–Walker equations,
/// solved by Levinson–Durbin on biased autocovariances.
pub fn ar2_coefficients(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let m = mean(x);
    let acov = |lag: usize| (0..n.saturating_sub(lag)).map(|t| (x[t] - m) * (x[t + lag] - m)).sum::<f64>() / n as f64;
    let (r0, r1, r2) = (acov(0), acov(1), acov(2));
    if r0 <= 0.0 {
        return (0.0, 0.0);
    }
    let phi11 = r1 / r0;
    let v1 = r0 * (1.0 - phi11 * phi11);
    if v1 <= 0.0 {
        return (phi11, 0.0);
    }
    let phi22 = (r2 - phi11 * r1) / v1;
    (phi11 - phi22 * phi11, phi22)
}

/// `[mean, std, mad, max, min, peaks, num_mean, energy, iqr, entropy, ar1, ar2]`.
///
/// `mad` is the median absolute deviation from the median. `peaks` counts
/// strict interior local maxima above `mean + std`; `num_mean` counts values
/// above the mean.
pub fn time_features(x: &[f64]) -> [f64; 12] {
    assert!(x.len() >= 3, "channel too short");
    let mu = mean(x);
    let sd = std_dev(x);
    let med = median(x);
    let deviations: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    let peaks = (1..x.len() - 1)
        .filter(|&i| x[i] > x[i - 1] && x[i] > x[i + 1] && x[i] > mu + sd)
        .count();
    let (ar1, ar2) = ar2_coefficients(x);
    [
        mu,
        sd,
        median(&deviations),
        x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        x.iter().copied().fold(f64::INFINITY, f64::min),
        peaks as f64,
        x.iter().filter(|&&v| v > mu).count() as f64,
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64,
        quantile(x, 0.75) - quantile(x, 0.25),
        histogram_entropy(x),
        ar1,
        ar2,
    ]
}

/// `[min_freq_ind, max_freq_ind, mean_freq, skewness, kurtosis]` over the
/// magnitudes of bins 1..=16.
///
/// The last three are moments of the bin index weighted by magnitude;
/// kurtosis is excess kurtosis. Indices are the first arg-min/arg-max.
pub fn freq_features(spectrum: &[Complex<f64>]) -> [f64; 5] {
    assert!(spectrum.len() > FREQ_BINS, "spectrum needs bins 1..={FREQ_BINS}");
    let mags: Vec<f64> = spectrum[1..=FREQ_BINS].iter().map(|z| z.norm()).collect();
    let (mut argmin, mut argmax) = (0, 0);
    for (i, &m) in mags.iter().enumerate() {
        if m < mags[argmin] {
            argmin = i;
        }
        if m > mags[argmax] {
            argmax = i;
        }
    }
    let total: f64 = mags.iter().sum();
    if total <= 0.0 {
        return [1.0, 1.0, 0.0, 0.0, 0.0];
    }
    let moment = |center: f64, p: i32| {
        mags.iter()
            .enumerate()
            .map(|(i, m)| m * ((i + 1) as f64 - center).powi(p))
            .sum::<f64>()
            / total
    };
    let mu = moment(0.0, 1);
    let var = moment(mu, 2);
    let (skew, kurt) = if var > 0.0 {
        (moment(mu, 3) / var.powf(1.5), moment(mu, 4) / (var * var) - 3.0)
    } else {
        (0.0, 0.0)
    };
    [(argmin + 1) as f64, (argmax + 1) as f64, mu, skew, kurt]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::fft::fft;

    #[test]
    fn constant_channel() {
        let f = time_features(&[5.0; 30]);
        assert_eq!(f[0], 5.0);
        assert_eq!(&f[1..3], &[0.0, 0.0]);
        assert_eq!(f[5], 0.0);
        assert_eq!(f[7], 25.0);
        assert_eq!(&f[9..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn alternating_channel() {
        let x: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let f = time_features(&x);
        assert_eq!(f[0], 0.0);
        assert_eq!(f[7], 1.0);
        assert_eq!(f[6], 15.0);
    }

    #[test]
    fn quantiles_interpolate() {
        let x = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile(&x, 0.25), 1.75);
        assert_eq!(median(&x), 2.5);
    }

    #[test]
    fn pure_tone_frequency_features() {
        let x: Vec<f64> = (0..32).map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / 32.0).cos()).collect();
        let f = freq_features(&fft(&x));
        assert_eq!(f[1], 3.0);
        assert!((f[2] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn flat_spectrum_mean_is_middle_bin() {
        let spec = vec![Complex::new(1.0, 0.0); 32];
        let f = freq_features(&spec);
        assert_eq!(f[2], 8.5);
        assert!(f[3].abs() < 1e-12);
        assert_eq!([f[0], f[1]], [1.0, 1.0]);
    }

    #[test]
    fn zero_spectrum_convention() {
        assert_eq!(freq_features(&[Complex::new(0.0, 0.0); 32]), [1.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
