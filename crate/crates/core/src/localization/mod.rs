//! Binaural azimuth classification: cross-correlation and level-difference
//! features, stimulus synthesis, and a fully connected classifier over 72
//! azimuth bins.

mod checkpoint;
mod corpus;
mod features;
mod model;

use thiserror::Error;

use crate::dsp::DspError;
use crate::numerics::NumericsError;

pub use checkpoint::{load_localizer, save_localizer};
pub use corpus::{render_corpus, stimulus, Sample, Stimulus, STIMULUS_SECONDS};
pub use features::{ild, xcorr_feature, xcorr_reference, BinauralFeature};
pub use model::{
    accuracy, adapt_localizer, evaluate, train_localizer, Evaluation, Localizer, LocalizerConfig,
};

pub const TAU_MAX: usize = 45;
pub const N_LAGS: usize = 2 * TAU_MAX + 1;
pub const FEATURE_LEN: usize = N_LAGS + 1;
pub const N_CLASSES: usize = 72;
pub const CLASS_WIDTH_DEG: f64 = 360.0 / N_CLASSES as f64;

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("channel has zero variance in every analysis window")]
    ZeroVariance,
    #[error("right channel has zero energy")]
    ZeroEnergy,
    #[error("signal of {got} samples is shorter than {needed}")]
    TooShort { needed: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("localizer file {section}: {msg}")]
    Parse { section: &'static str, msg: String },
    #[error("localizer file truncated in {0}")]
    Truncated(&'static str),
    #[error("localizer trailer states {stated} payload bytes, found {found}")]
    Checksum { stated: u64, found: u64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LocalizationError>;

/// Class whose 5° bin contains `azimuth_deg`; bin `i` covers
/// [5i − 2.5°, 5i + 2.5°) on the [0°, 360°) circle.
pub fn azimuth_class(azimuth_deg: f64) -> usize {
    let a = (azimuth_deg + CLASS_WIDTH_DEG / 2.0).rem_euclid(360.0);
    ((a / CLASS_WIDTH_DEG).floor() as usize) % N_CLASSES
}

/// Bin-centre azimuth of `class`, in [0°, 360°).
pub fn class_azimuth(class: usize) -> f64 {
    (class % N_CLASSES) as f64 * CLASS_WIDTH_DEG
}

/// Mean absolute circular difference in degrees.
pub fn error_metric(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(LocalizationError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(LocalizationError::Invalid("no predictions to score".into()));
    }
    let sum: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let d = (t - p).rem_euclid(360.0);
            d.min(360.0 - d)
        })
        .sum();
    Ok(sum / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn error_metric_examples() {
        assert_eq!(error_metric(&[10.0, 200.0], &[10.0, 200.0]).unwrap(), 0.0);
        assert!((error_metric(&[350.0], &[10.0]).unwrap() - 20.0).abs() < 1e-12);
        assert!((error_metric(&[0.0, 0.0], &[5.0, 15.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!((error_metric(&[359.0], &[1.0]).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(error_metric(&[1.0], &[]), Err(LocalizationError::LengthMismatch(1, 0))));
    }

    #[test]
    fn class_edges() {
        assert_eq!(azimuth_class(0.0), 0);
        assert_eq!(azimuth_class(2.49), 0);
        assert_eq!(azimuth_class(2.5), 1);
        assert_eq!(azimuth_class(-2.5), 0);
        assert_eq!(azimuth_class(-2.51), 71);
        assert_eq!(azimuth_class(-90.0), 54);
        assert_eq!(azimuth_class(180.0), 36);
        assert_eq!(class_azimuth(54), 270.0);
    }

    proptest! {
        #[test]
        fn class_centre_round_trips(c in 0usize..N_CLASSES) {
            prop_assert_eq!(azimuth_class(class_azimuth(c)), c);
            let d = class_azimuth(c);
            prop_assert!((0.0..360.0).contains(&d));
        }

        #[test]
        fn error_is_symmetric_and_bounded(a in -720.0f64..720.0, b in -720.0f64..720.0) {
            let e = error_metric(&[a], &[b]).unwrap();
            prop_assert!((0.0..=180.0).contains(&e));
            prop_assert!((e - error_metric(&[b], &[a]).unwrap()).abs() < 1e-9);
        }
    }
}
