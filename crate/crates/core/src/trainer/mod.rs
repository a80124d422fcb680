//! Training loop: pose sampling, loss assembly, refinement schedule,
//! optimizer, and the end-to-end pipeline from a prompt (and optionally a
//! reference RGB-D image) to a trained field and an orbit of frames.

mod config;
mod losses;
mod optim;
mod pipeline;
mod schedule;
mod step;

pub use config::TrainConfig;
pub use losses::{eta, isds_inject, reliability_loss, sparsity_loss};
pub use optim::Adam;
pub use pipeline::{
    background_latent, build_bank, build_scaffold, calibrate_oracle, codec_for, foreground_pixels, prepare_reference, render_orbit,
    run, RunInputs, RunOutput, RunReport, Scaffold, StageTimings, WHITE_THRESHOLD,
};
pub use schedule::{add_patch, dimension_refine, patch_positions, refinement_start};
pub use step::{LossBreakdown, TermGradients, Trainer};

use crate::geometry::GeometryError;
use crate::guidance::GuidanceError;
use crate::latentfield::FieldError;
use crate::prerender::PrerenderError;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Prerender(#[from] PrerenderError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Reference,
    Scaffold,
    Prerender,
    Training { iteration: usize },
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Reference => write!(f, "reference"),
            Stage::Scaffold => write!(f, "scaffold"),
            Stage::Prerender => write!(f, "prerender"),
            Stage::Training { iteration } => write!(f, "training (iteration {iteration})"),
            Stage::Export => write!(f, "export"),
        }
    }
}

/// A pipeline failure tagged with the stage it happened in.
#[derive(Debug, Error)]
#[error("{stage} stage failed: {source}")]
pub struct RunError {
    pub stage: Stage,
    #[source]
    pub source: TrainError,
}

impl RunError {
    pub fn new(stage: Stage, source: impl Into<TrainError>) -> Self {
        Self {
            stage,
            source: source.into(),
        }
    }

    pub fn is_connectivity(&self) -> bool {
        matches!(&self.source, TrainError::Guidance(e) if e.is_transient())
    }
}
