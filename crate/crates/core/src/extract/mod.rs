//! Variable extraction: object tracking, stencil features, autoencoder latents.

pub mod autoencoder;
mod sample;
mod segment;
pub mod stencil;
mod track;

pub use autoencoder::{
    decode, encode, load_model, mean_frame_baseline, reconstruction_error, save_model, train_autoencoder,
    train_autoencoder_from, AutoencoderConfig, AutoencoderModel, Dense, EpochLoss,
};
pub use sample::{sample_pixels, StencilFeatures};
pub use segment::{refine_disc, segment_frame, Blob};
pub use stencil::{apply_stencils, FeatureTensors, Operator};
pub use track::{track_and_filter, TrackConfig, TrackResult};
