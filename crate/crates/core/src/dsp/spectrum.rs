use rustfft::num_complex::Complex64;

use super::fft::{fft_in_place, ifft_in_place, rfft_full};
use super::{DspError, Result};

/// HRIR length used throughout.
pub const N_TAPS: usize = 256;
/// Non-DC bins of a 256-point real transform.
pub const N_BINS: usize = 128;

const MAG_FLOOR: f64 = 1e-15;

pub fn linear_to_db(v: f64) -> f64 {
    20.0 * v.max(MAG_FLOOR).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// dB magnitudes of bins 1..=128 of a 256-tap impulse response.
pub fn magnitude_spectrum(hrir: &[f64]) -> Result<Vec<f64>> {
    if hrir.len() != N_TAPS {
        return Err(DspError::WrongLength {
            expected: N_TAPS,
            got: hrir.len(),
        });
    }
    let spec = rfft_full(hrir, N_TAPS);
    Ok(spec[1..=N_BINS].iter().map(|c| linear_to_db(c.norm())).collect())
}

/// Log-spectral distortion of two spectra already in dB.
pub fn lsd_db(h: &[f64], h_hat: &[f64]) -> Result<f64> {
    if h.len() != h_hat.len() {
        return Err(DspError::LengthMismatch(h.len(), h_hat.len()));
    }
    if h.is_empty() {
        return Err(DspError::Empty);
    }
    let ms = h
        .iter()
        .zip(h_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / h.len() as f64;
    Ok(ms.sqrt())
}

/// Log-spectral distortion of two linear magnitude spectra.
pub fn lsd_linear(h: &[f64], h_hat: &[f64]) -> Result<f64> {
    if h.len() != h_hat.len() {
        return Err(DspError::LengthMismatch(h.len(), h_hat.len()));
    }
    if let Some(k) = h_hat.iter().position(|&v| v == 0.0) {
        return Err(DspError::ZeroMagnitude(k));
    }
    let a: Vec<f64> = h.iter().map(|v| 20.0 * v.abs().log10()).collect();
    let b: Vec<f64> = h_hat.iter().map(|v| 20.0 * v.abs().log10()).collect();
    lsd_db(&a, &b)
}

/// Minimum-phase impulse response (256 taps) whose magnitude matches the
/// given 128 dB bins. The DC bin copies bin 1.
pub fn minimum_phase(mag_db: &[f64]) -> Result<Vec<f64>> {
    if mag_db.len() != N_BINS {
        return Err(DspError::WrongLength {
            expected: N_BINS,
            got: mag_db.len(),
        });
    }
    if mag_db.iter().any(|v| !v.is_finite()) {
        return Err(DspError::Invalid("non-finite magnitude".into()));
    }
    let n = N_TAPS;
    let ln10_20 = std::f64::consts::LN_10 / 20.0;
    let mut log_mag = vec![Complex64::new(0.0, 0.0); n];
    log_mag[0].re = mag_db[0] * ln10_20;
    for k in 1..=N_BINS {
        log_mag[k].re = mag_db[k - 1] * ln10_20;
        if k < N_BINS {
            log_mag[n - k].re = log_mag[k].re;
        }
    }
    ifft_in_place(&mut log_mag);
    // fold the real cepstrum onto positive quefrencies
    let mut fold = vec![Complex64::new(0.0, 0.0); n];
    fold[0] = Complex64::new(log_mag[0].re, 0.0);
    for q in 1..n / 2 {
        fold[q] = Complex64::new(2.0 * log_mag[q].re, 0.0);
    }
    fold[n / 2] = Complex64::new(log_mag[n / 2].re, 0.0);
    fft_in_place(&mut fold);
    let mut spec: Vec<Complex64> = fold.iter().map(|c| c.exp()).collect();
    ifft_in_place(&mut spec);
    Ok(spec.into_iter().map(|c| c.re).collect())
}
