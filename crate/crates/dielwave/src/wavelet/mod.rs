//! Discrete wavelet transform over nine small families, tuned for short
//! periodic windows. Analysis convolves with the family's decomposition
//! filters and keeps every second output; synthesis inverts each stage
//! exactly given the recorded per-stage input lengths.

mod filters;
mod transform;

pub use filters::{Family, FilterBank};
pub use transform::{
    approx_reconstruction, dwt_approx, dwt_full, idwt, max_level, standard_specs, BoundaryMode,
    Decomposition, WaveletSpec,
};
