//! Resampling a timestamped 6-axis stream into fixed overlapping windows.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const CHANNELS: usize = 6;
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"];
pub const SESSION_LEN: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    /// Seconds.
    pub t: f64,
    /// acc x/y/z (m/s²), gyro x/y/z (rad/s).
    pub values: [f64; CHANNELS],
}

/// 30 time steps × 6 channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSession {
    pub start: f64,
    rows: Vec<[f64; CHANNELS]>,
}

impl SensorSession {
    pub fn new(start: f64, rows: Vec<[f64; CHANNELS]>) -> Result<Self> {
        if rows.len() != SESSION_LEN {
            return Err(invalid!("session has {} rows, expected {SESSION_LEN}", rows.len()));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensor session".into()));
        }
        Ok(SensorSession { start, rows })
    }

    pub fn rows(&self) -> &[[f64; CHANNELS]] {
        &self.rows
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[c]).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub window_secs: f64,
    pub overlap: f64,
    pub rate_hz: f64,
    /// Largest distance from a grid point to the reading that fills it.
    pub tolerance_secs: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            window_secs: 60.0,
            overlap: 0.95,
            rate_hz: 0.5,
            tolerance_secs: 1.0,
        }
    }
}

fn nearest(stream: &[SensorReading], t: f64, tolerance: f64) -> Option<&SensorReading> {
    let i = stream.partition_point(|r| r.t < t);
    let before = i.checked_sub(1).map(|j| &stream[j]);
    let after = stream.get(i);
    let best = match (before, after) {
        (Some(b), Some(a)) => {
            if t - b.t <= a.t - t {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    ((best.t - t).abs() <= tolerance).then_some(best)
}

/// Cuts a time-sorted stream into windows of `window_secs·rate_hz` grid
/// points, one window every `window_secs·(1 − overlap)` seconds from the
/// first reading. Each grid point takes the nearest reading within the
/// tolerance (earlier one on ties); windows with an unfilled point are
/// dropped. A window is attempted while its last grid point is within the
/// tolerance of the final reading.
pub fn sessionize(stream: &[SensorReading], cfg: &SessionConfig) -> Result<Vec<SensorSession>> {
    if stream.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(invalid!("sensor stream is not time-sorted"));
    }
    let points = (cfg.window_secs * cfg.rate_hz).round() as usize;
    if points != SESSION_LEN {
        return Err(invalid!("window of {points} points; sessions hold {SESSION_LEN}"));
    }
    let step = 1.0 / cfg.rate_hz;
    // 60·(1 − 0.95) is 3.0000000000000027 in binary; snap to nanoseconds.
    let stride = (cfg.window_secs * (1.0 - cfg.overlap) * 1e9).round() / 1e9;
    if !(stride > 0.0) {
        return Err(invalid!("overlap {} leaves no stride", cfg.overlap));
    }
    let (Some(first), Some(last)) = (stream.first(), stream.last()) else {
        return Ok(Vec::new());
    };
    let span = step * (points - 1) as f64;
    let mut sessions = Vec::new();
    let mut w = 0usize;
    loop {
        let start = first.t + stride * w as f64;
        if start + span > last.t + cfg.tolerance_secs {
            break;
        }
        let rows: Option<Vec<[f64; CHANNELS]>> = (0..points)
            .map(|i| nearest(stream, start + step * i as f64, cfg.tolerance_secs).map(|r| r.values))
            .collect();
        if let Some(rows) = rows {
            sessions.push(SensorSession::new(start, rows)?);
        }
        w += 1;
    }
    Ok(sessions)
}

#[derive(Deserialize)]
struct CsvRow {
    timestamp: f64,
    acc_x: f64,
    acc_y: f64,
    acc_z: f64,
    gyro_x: f64,
    gyro_y: f64,
    gyro_z: f64,
}

/// Reads a CSV with header `timestamp,acc_x,acc_y,acc_z,gyro_x,gyro_y,gyro_z`.
pub fn read_sensor_csv(path: impl AsRef<Path>) -> Result<Vec<SensorReading>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let r: CsvRow = row.map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        out.push(SensorReading {
            t: r.timestamp,
            values: [r.acc_x, r.acc_y, r.acc_z, r.gyro_x, r.gyro_y, r.gyro_z],
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(times: impl Iterator<Item = f64>) -> Vec<SensorReading> {
        times.map(|t| SensorReading { t, values: [t; CHANNELS] }).collect()
    }

    #[test]
    fn sixty_seconds_is_one_session() {
        let s = sessionize(&stream((0..30).map(|i| 2.0 * i as f64)), &SessionConfig::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].channel(0)[29], 58.0);
    }

    #[test]
    fn sixty_three_seconds_is_two_sessions() {
        let s = sessionize(&stream((0..32).map(|i| 2.0 * i as f64)), &SessionConfig::default()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].start, 3.0);
        // Grid point 3 s is equidistant from 2 s and 4 s; the earlier wins.
        assert_eq!(s[1].channel(0)[0], 2.0);
    }

    #[test]
    fn gap_drops_only_affected_windows() {
        let times = (0..60).map(|i| 2.0 * i as f64).filter(|t| !(70.0..80.0).contains(t) || *t == 70.0);
        let s = sessionize(&stream(times), &SessionConfig::default()).unwrap();
        let all = sessionize(&stream((0..60).map(|i| 2.0 * i as f64)), &SessionConfig::default()).unwrap();
        assert!(!s.is_empty() && s.len() < all.len());
        assert!(s.iter().all(|x| (0..30).all(|i| {
            let t = x.start + 2.0 * i as f64;
            t <= 71.0 || t >= 79.0
        })));
    }

    #[test]
    fn short_stream_is_empty() {
        assert!(sessionize(&stream((0..10).map(|i| 2.0 * i as f64)), &SessionConfig::default()).unwrap().is_empty());
        assert!(sessionize(&[], &SessionConfig::default()).unwrap().is_empty());
    }
}
