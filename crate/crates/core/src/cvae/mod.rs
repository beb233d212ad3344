//! Conditional VAE over HRTF magnitudes: an encoder reading a 5×5 patch of
//! both ears' spectra and a decoder producing the 256-bin magnitude pair for
//! a subject slot and direction.

mod checkpoint;
mod data;
mod generate;
mod model;
mod train;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::dsp::{DspError, N_BINS};
use crate::numerics::NumericsError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use generate::{generate_grid, generate_hrir, generate_hrtf, mean_lsd, SubjectSlot};
pub use model::{Batch, Cvae, LossParts};
pub use train::{individualize, train, train_with, SparseMeasurement};

pub const LATENT: usize = 32;
pub const OUTPUT_LEN: usize = 2 * N_BINS;
pub const DECODER_LAYERS: usize = 5;

#[derive(Debug, Error)]
pub enum CvaeError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint {section}: {msg}")]
    Parse { section: &'static str, msg: String },
    #[error("checkpoint truncated in {0}")]
    Truncated(&'static str),
    #[error("checkpoint trailer states {stated} payload bytes, found {found}")]
    Checksum { stated: u64, found: u64 },
    #[error("training bundle needs at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("no sparse measurements")]
    EmptySparse,
    #[error("subject {0} is not in the checkpoint roster")]
    UnknownSubject(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, CvaeError>;

/// Per-ear convolution stacks, subject embedding and fused hidden width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub conv_channels: [usize; 2],
    pub subject_embed: usize,
    pub hidden: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            conv_channels: [8, 1],
            subject_embed: 32,
            hidden: 128,
        }
    }
}

/// Width of the five equal hidden layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderConfig {
    pub hidden: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self { hidden: 128 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Training subjects; the subject vector has one more slot.
    pub n_train: usize,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    pub fn new(n_train: usize) -> Self {
        Self {
            n_train,
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }

    pub fn subject_len(&self) -> usize {
        self.n_train + 1
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        let sizes = [e.conv_channels[0], e.conv_channels[1], e.subject_embed, e.hidden, self.decoder.hidden];
        if self.n_train == 0 || sizes.contains(&0) {
            return Err(CvaeError::Config(format!("zero-sized layer in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Passes over the training set.
    pub iterations: usize,
    /// Weight of the KL term.
    pub beta: f64,
    /// Share of the training pairs kept for replay during adaptation.
    pub replay_fraction: f64,
    /// Passes over the replay pool during adaptation.
    pub adaptation_iterations: usize,
    pub adaptation_lr: f64,
    /// Loss weight of the new subject's samples during adaptation.
    pub new_subject_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            lr: 1e-4,
            iterations: 100,
            beta: 1e-3,
            replay_fraction: 0.05,
            adaptation_iterations: 50,
            adaptation_lr: 1e-4,
            new_subject_weight: 0.25,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.lr > 0.0
            && self.adaptation_lr > 0.0
            && self.beta >= 0.0
            && self.replay_fraction > 0.0
            && self.replay_fraction <= 1.0
            && self.new_subject_weight >= 0.0;
        if !ok {
            return Err(CvaeError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}
