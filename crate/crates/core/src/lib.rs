//! Muscle-artifact removal for multichannel EEG by blind source separation.
//!
//! The crate covers the whole chain: recordings and their on-disk format,
//! the dense linear algebra the separation engines need, Butterworth
//! band-pass filtering, a seeded semi-simulated data generator, the SOBI,
//! FastICA, CCA and IVA engines, the filter-separate-reject pipeline and
//! the RMSE/SNR comparison harness.

pub mod bss;
pub mod error;
pub mod filtering;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod recording;
pub mod semisim;
pub mod spectrum;

pub use bss::{DemixingModel, Method, SourceSet};
pub use error::{Error, Result};
pub use filtering::BandpassSpec;
pub use metrics::{EvalRow, TableFormat};
pub use pipeline::{IdentifyConfig, PipelineConfig, PipelineReport};
pub use recording::{Recording, SegmentPlan};
pub use semisim::{GroundTruth, SimConfig};
