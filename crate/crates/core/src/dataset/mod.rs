//! HRTF dataset container and file format, spherical grid utilities, the
//! network input encodings and a synthetic subject generator.

mod bundle;
mod direction;
mod encoding;
mod patch;
mod subset;
mod synth;

pub use bundle::{load_bundle, save_bundle, HrtfBundle};
pub use direction::{default_grid, great_circle_deg, nearest_index, Direction};
pub use encoding::{
    basis_directions, denormalize, encode_direction, normalize, subject_vector, DirectionEncoding,
    NormRange, N_BASIS,
};
pub use patch::{extract_patch, patch_indices, PatchTensor, PATCH_SIDE, PATCH_STEP_DEG};
pub use subset::{select_subset, Region};
pub use synth::{
    synth_bundle, synth_subject, woodworth_itd, PinnaParams, SubjectModel, SubjectParams,
    SPEED_OF_SOUND,
};

use thiserror::Error;

use crate::dsp::DspError;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed {section}: {msg}")]
    Parse { section: &'static str, msg: String },
    #[error("file truncated in {0}")]
    Truncated(&'static str),
    #[error("payload length check failed: trailer says {stated} bytes, found {found}")]
    Checksum { stated: u64, found: u64 },
    #[error("invalid bundle: {0}")]
    Validation(String),
    #[error("head radius {0} m outside [0.07, 0.11]")]
    RadiusOutOfRange(f64),
    #[error("region contains no grid directions")]
    EmptyRegion,
    #[error("requested {requested} directions but the region has {available}")]
    CountTooLarge { requested: usize, available: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;
