//! Inference-time refinement of diffusion U-Net decoder features.
//!
//! The [`refine`] module scales the high-frequency band of skip-connection
//! features and applies a structure-aware gain plus high-frequency attenuation
//! to backbone features in the first two decoder blocks. Around it sit a toy
//! U-Net and DDIM sampler ([`unet`]), a mel-spectrogram front end ([`mel`]),
//! Fréchet/KL metrics ([`metrics`]) and a parameter search harness ([`search`]).

pub mod error;
pub mod mel;
pub mod metrics;
pub mod refine;
pub mod search;
pub mod tensor;
pub mod unet;

pub use error::{Error, Result};
pub use refine::{apply_block, RefineParams};
pub use tensor::{Dims, FeatureMap, SpectrumMap};
