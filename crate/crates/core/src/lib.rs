//! Spectral and energy efficiency of multiuser mmWave MIMO beamforming.
//!
//! The numerical core is generic over the real scalar (`f32` or `f64`);
//! the aliases below fix it to `f64`.

pub mod asymptotics;
pub mod beamformers;
pub mod channel;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Complex64 = nalgebra::Complex<f64>;
pub type Matrix = scalar::CMatrix<f64>;
pub type Vector = scalar::CVector<f64>;
pub type Channel = channel::ChannelRealization<f64>;
pub type Path = channel::PathComponent<f64>;
pub type Beamformers = beamformers::BeamformerSet<f64>;
pub type Hybrid = beamformers::HybridFactors<f64>;
pub type Spectral = asymptotics::SpectralSummary<f64>;
pub type Overlaps = asymptotics::OverlapTables<f64>;
