//! Dimension lattice, event model and the exponential-kernel Hawkes process.

mod event;
mod intensity;
mod lattice;
mod params;

pub use event::{CommentEvent, EventStream};
pub use intensity::{
    compensator, dimension_log_likelihood, event_intensities, intensity, intensity_with, log_likelihood,
    pair_kernel_sums, rescaled_residuals, History,
};
pub(crate) use intensity::{compensator_flat, dimension_terms};
pub use lattice::{DimensionIndex, Lattice, DEFAULT_LEVELS, DEFAULT_SENTIMENTS};
pub use params::{HawkesParams, RowStability, StabilityReport, PARAMS_SCHEMA_VERSION};
