//! HRTF individualization toolkit: a conditional VAE over HRTF magnitudes,
//! phone-based measurement geometry, the supporting DSP chain and a binaural
//! azimuth classifier.

pub mod cvae;
pub mod dataset;
pub mod dsp;
pub mod geometry;
pub mod localization;
pub mod measure_sim;
pub mod numerics;
