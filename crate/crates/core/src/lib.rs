//! Generative stochastic surrogates for stationary chaotic time series.
//!
//! A monotone lower-triangular polynomial map carries the data distribution to
//! a standard normal reference. Each transformed channel is then driven by an
//! independent stochastic linear oscillator whose power spectrum is matched to
//! the channel's Welch estimate. Simulated oscillator paths pulled back through
//! the inverse map reproduce the statistics of the original record.
//!
//! Supporting modules cover spectral estimation, random phase baselines,
//! spectral proper orthogonal decomposition and reference data generators.

pub mod baseline_rpm;
pub mod cli;
pub mod error;
pub mod generators;
pub mod oscillator;
pub mod pso;
pub mod seed;
pub mod spectral;
pub mod spod;
pub mod surrogate;
pub mod timeseries;
pub mod transport;

pub use error::{Error, Result};
pub use oscillator::{OscillatorParams, OscillatorState};
pub use spectral::SpectralDensity;
pub use surrogate::SurrogateModel;
pub use timeseries::TimeSeries;
pub use transport::MonotoneTriangularMap;
