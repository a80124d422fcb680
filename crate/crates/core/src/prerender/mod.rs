//! Pre-rendering of the scaffold over the in-boundary angle box.
//!
//! Poses use an orbit around `look_at`: azimuth `theta` and elevation `phi`
//! in degrees, with `(90, 0)` on the optical axis of the reference view
//! (camera at `(0, 0, −r)` looking down `+z`, image `y` pointing down).

mod bank;
mod codec;
mod pose;
mod raster;

pub use bank::{great_circle_deg, sample_ib_poses, BankOptions, LatentLevel, PrerenderedView, ViewBank};
pub use codec::{
    encode_view, latent_mask, stub_decode, stub_encode, LatentCodec, StubCodec, LATENT_CHANNELS,
    LATENT_SCALE,
};
pub use pose::{CameraFrame, CameraPose, DEFAULT_RADIUS};
pub use raster::{rasterize, RasterOutput};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrerenderError {
    #[error("view bank is empty")]
    EmptyBank,
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid bank options: {0}")]
    InvalidOptions(String),
    #[error("codec failure: {0}")]
    Codec(String),
    #[error("bank format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PrerenderError>;
