//! Joint transmit beamforming, RIS phase design, user power control and
//! receive filtering for a full-duplex ISAC base station assisted by a
//! reconfigurable intelligent surface.

pub mod beamformer;
pub mod coeffs;
pub mod config;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod linalg;
pub mod metrics;
pub mod orchestrator;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod power;
pub mod qcqp;
pub mod ris_pdd;
pub mod scenario;

pub use error::{Error, Result};
