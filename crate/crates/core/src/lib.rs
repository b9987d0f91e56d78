pub mod altproj;
pub mod bench;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod forward;
pub mod greedy;
pub mod io;
pub mod lifted;
pub mod signal;

pub use error::{PhaseError, Result};
pub use signal::{align_to_reference, apply_ambiguity, Alignment, AmbiguityTransform, Signal, SupportMask};
