//! The blow-up of the local model at the origin and its deformation.

pub mod atlas;
pub mod potential;
pub mod structure;

use thiserror::Error;

use crate::calculus::FieldError;
use crate::flow::FlowError;

pub use atlas::{
    blowdown, blowdown_jacobian, lift_poisson, radius_sq, transition, transition_jacobian,
    BlowupAtlas, Chart,
};
pub use potential::{
    bump_and_feps, fs_potential, fs_smooth_part, psh_limit, smooth_ddcf, smooth_x, smoothstep,
    PotentialSpec, Zone,
};
pub use structure::{
    deformation_class_z, lift_model, BlownUpStructure, DeformedPoint, Deformation, LiftedPoint,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlowupError {
    #[error("point {point:?} lies on the locus excluded from {chart:?} transitions")]
    OnExcludedLocus { chart: Chart, point: [f64; 4] },
    #[error("potential is singular at {point:?}")]
    SingularPotential { point: [f64; 4] },
    #[error("invalid potential: {0}")]
    InvalidSpec(String),
    #[error("model domain `{domain}` does not contain the ball of radius {needed}")]
    DomainMismatch { domain: String, needed: f64 },
    #[error("radius {r:.4} is outside the annulus ({lo}, {hi})")]
    NotInAnnulus { r: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
