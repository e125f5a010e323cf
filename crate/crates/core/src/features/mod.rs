//! Sensor session windowing and the 112-value handcrafted embedding.

pub mod embedding;
pub mod fft;
pub mod session;
pub mod stats;

pub use embedding::{feature_names, pearson, session_embedding, SessionEmbedding, EMBEDDING_DIM};
pub use fft::{fft, fft_complex, ifft};
pub use session::{read_sensor_csv, sessionize, SensorReading, SensorSession, SessionConfig, CHANNELS, CHANNEL_NAMES};
pub use stats::{ar2_coefficients, freq_features, time_features};
