//! The 112-value session embedding.
//!
//! | range    | content                                              |
//! |----------|------------------------------------------------------|
//! | 0..72    | 12 time features for each channel, channel-major     |
//! | 72..74   | signal magnitude area of acc, gyro                   |
//! | 74..80   | Pearson correlation of axis pairs xy, xz, yz per sensor |
//! | 80..110  | 5 frequency features for each channel                |
//! | 110..112 | band energy (bins 1..=8) of acc, gyro                |

use std::sync::OnceLock;

use num_complex::Complex;

use crate::features::fft::fft;
use crate::features::session::{SensorSession, CHANNELS, CHANNEL_NAMES};
use crate::features::stats::{freq_features, mean, time_features, FREQ_FEATURE_NAMES, TIME_FEATURE_NAMES};

pub const EMBEDDING_DIM: usize = 112;
const BAND_BINS: usize = 8;
const SENSORS: [&str; 2] = ["acc", "gyro"];
const AXIS_PAIRS: [(usize, usize, &str); 3] = [(0, 1, "xy"), (0, 2, "xz"), (1, 2, "yz")];

pub type SessionEmbedding = [f64; EMBEDDING_DIM];

/// Column names in embedding order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(EMBEDDING_DIM);
        for ch in CHANNEL_NAMES {
            names.extend(TIME_FEATURE_NAMES.iter().map(|f| format!("{ch}_{f}")));
        }
        names.extend(SENSORS.iter().map(|s| format!("{s}_sma")));
        for s in SENSORS {
            names.extend(AXIS_PAIRS.iter().map(|(_, _, p)| format!("{s}_corr_{p}")));
        }
        for ch in CHANNEL_NAMES {
            names.extend(FREQ_FEATURE_NAMES.iter().map(|f| format!("{ch}_{f}")));
        }
        names.extend(SENSORS.iter().map(|s| format!("{s}_energy_band")));
        names
    })
}

/// Pearson correlation; 0 when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

/// Spectrum of the mean-removed channel, zero-padded to 32 points.
pub fn channel_spectrum(x: &[f64]) -> Vec<Complex<f64>> {
    let m = mean(x);
    let centred: Vec<f64> = x.iter().map(|v| v - m).collect();
    fft(&centred)
}

pub fn session_embedding(session: &SensorSession) -> SessionEmbedding {
    let channels: Vec<Vec<f64>> = (0..CHANNELS).map(|c| session.channel(c)).collect();
    let spectra: Vec<Vec<Complex<f64>>> = channels.iter().map(|c| channel_spectrum(c)).collect();
    let mut out = Vec::with_capacity(EMBEDDING_DIM);
    for c in &channels {
        out.extend(time_features(c));
    }
    for s in 0..SENSORS.len() {
        let rows = session.rows();
        let sma = rows.iter().map(|r| r[3 * s].abs() + r[3 * s + 1].abs() + r[3 * s + 2].abs()).sum::<f64>()
            / rows.len() as f64;
        out.push(sma);
    }
    for s in 0..SENSORS.len() {
        for (a, b, _) in AXIS_PAIRS {
            out.push(pearson(&channels[3 * s + a], &channels[3 * s + b]));
        }
    }
    for spec in &spectra {
        out.extend(freq_features(spec));
    }
    for s in 0..SENSORS.len() {
        let total: f64 = spectra[3 * s..3 * s + 3]
            .iter()
            .flat_map(|spec| spec[1..=BAND_BINS].iter().map(|z| z.norm_sqr()))
            .sum();
        out.push(total / (3 * BAND_BINS) as f64);
    }
    out.try_into().expect("layout sums to 112")
}
