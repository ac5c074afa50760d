//! Device-to-architecture simulator for an optical near-sensor DNN
//! accelerator built around microring-resonator (MR) weight banks.
//!
//! The modeled machine acquires frames through an ADC-less comparator-based
//! reading circuit, optionally compresses them in-core (fused RGB-to-gray
//! conversion plus average pooling realized as a weighted sum), then runs
//! quantized convolution, pooling, and fully-connected layers on an optical
//! core of 96 MVM banks (6 arms of 9 MRs each, 5184 MRs total). Weights live
//! in the MRs; activations arrive as directly modulated VCSEL light, and
//! balanced photodetectors accumulate each arm's dot product.
//!
//! Module map:
//!
//! * [`photonics`]: MR transmission physics, CRC pixel reading, VCSEL
//!   encoding, balanced detection, differential weight rails.
//! * [`optical_core`]: arms, banks, the two-stage summation section, and
//!   cycle execution in bit-exact integer or analog device mode.
//! * [`mapper`]: segmentation of dot products into arms and banks, cycle
//!   scheduling, and the event counts behind the power model.
//! * [`quant`]: symmetric weight quantization (2/3/4 bits), 4-bit
//!   activations, activation functions and requantization.
//! * [`compress`]: compressive acquisition weights and execution.
//! * [`netir`]: model manifests, weight blobs, images, shape checking.
//! * [`power`]: per-component energy/power reporting and the two-point
//!   power-versus-precision calibration fit.
//! * [`sim`]: the end-to-end scheduler plus an independent integer oracle.
//! * [`config`]: the flat key-value run configuration.
//! * [`fixtures`]: deterministic example models and frames.

pub mod compress;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod mapper;
pub mod netir;
pub mod optical_core;
pub mod photonics;
pub mod power;
pub mod quant;
pub mod sim;

pub use error::{Error, Result};
pub use netir::{Dims, Frame, LayerKind, ModelDesc};
pub use optical_core::CoreGeometry;
pub use power::{EnergyConfig, PowerReport};
pub use sim::{RunOptions, RunResult};
