//! Cross-domain transfer: an image encoder splitting geometry and condition
//! latents, a range decoder, a range encoder re-encoding the prediction, an
//! image decoder, a discriminator and a condition classifier.

pub mod loss;
pub mod model;
pub mod net;
pub mod step;

pub use loss::*;
pub use model::{
    discriminate, transfer_forward, LatentCode, Mode, TransferConfig, TransferForwardResult, TransferGrads, TransferParams,
    TransferTape, ENCODER_STRIDE,
};
pub use step::{discriminator_pass, evaluate_objective, generator_pass, Objective};
