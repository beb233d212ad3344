//! Signal chain: exponential sweeps and their deconvolution, magnitude
//! spectra and log-spectral distortion, minimum-phase reconstruction,
//! interaural time differences and binaural rendering.

pub(crate) mod fft;
mod itd;
mod render;
mod spectrum;
mod sweep;
mod wav;

pub use itd::{
    apply_itd, fractional_delay, insert_itd, itd_estimate, itd_estimate_lowpass, ItdModel, ItdTable,
    MAX_ITD_S,
};
pub use render::{convolve, render_binaural, Hrir};
pub use spectrum::{
    db_to_linear, linear_to_db, lsd_db, lsd_linear, magnitude_spectrum, minimum_phase, N_BINS,
    N_TAPS,
};
pub use sweep::{deconvolve, exp_sweep, Deconvolver, Sweep};
pub use wav::{read_wav, write_wav, SampleFormat, WavAudio};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("expected {expected} samples, got {got}")]
    WrongLength { expected: usize, got: usize },
    #[error("channel lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("signal has no energy")]
    Silent,
    #[error("zero magnitude in estimate at bin {0}")]
    ZeroMagnitude(usize),
    #[error("empty input")]
    Empty,
    #[error("sample rate {0} Hz is below the 44.1 kHz minimum")]
    SampleRate(f64),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, DspError>;
