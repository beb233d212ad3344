use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft::{fft_in_place, ifft_in_place, rfft_full};
use super::{DspError, Result};

pub const SWEEP_F_START: f64 = 20.0;
pub const SWEEP_F_END: f64 = 22_000.0;
pub const SWEEP_DURATION: f64 = 1.2;

/// Exponential sine sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub f_start: f64,
    pub f_end: f64,
    pub duration: f64,
}

impl Sweep {
    /// 20 Hz to 22 kHz over 1.2 s.
    pub fn new(sample_rate: f64) -> Result<Self> {
        Self::custom(sample_rate, SWEEP_F_START, SWEEP_F_END, SWEEP_DURATION)
    }

    pub fn custom(sample_rate: f64, f_start: f64, f_end: f64, duration: f64) -> Result<Self> {
        if sample_rate < 44_100.0 {
            return Err(DspError::SampleRate(sample_rate));
        }
        if !(f_start > 0.0 && f_end > f_start && duration > 0.0) {
            return Err(DspError::Invalid(format!(
                "bad sweep range {f_start}..{f_end} Hz over {duration} s"
            )));
        }
        let n = (duration * sample_rate).round() as usize;
        let l = duration / (f_end / f_start).ln();
        let k = 2.0 * PI * f_start * l;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / sample_rate;
                (k * ((t / l).exp() - 1.0)).sin()
            })
            .collect();
        Ok(Self {
            samples,
            sample_rate,
            f_start,
            f_end,
            duration,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn rate_constant(&self) -> f64 {
        self.duration / (self.f_end / self.f_start).ln()
    }

    /// Analytic instantaneous frequency in Hz at time `t` seconds.
    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.f_start * (t / self.rate_constant()).exp()
    }

    /// Time-reversed sweep with a decaying envelope that compensates the
    /// sweep's pink spectrum (6 dB per octave).
    pub fn inverse_filter(&self) -> Vec<f64> {
        let l = self.rate_constant();
        let n = self.samples.len();
        // reversed time runs from the top of the sweep down to the bottom;
        // the gain falls by 6 dB per octave along the way
        (0..n)
            .map(|i| {
                let t = i as f64 / self.sample_rate;
                self.samples[n - 1 - i] * (-t / l).exp()
            })
            .collect()
    }
}

/// Convenience wrapper for [`Sweep::new`].
pub fn exp_sweep(sample_rate: f64) -> Result<Sweep> {
    Sweep::new(sample_rate)
}

/// Cached inverse-sweep deconvolution for recordings of one length.
///
/// The recording is filtered with the inverse sweep and then divided by the
/// (regularised) response of the sweep to its own inverse filter, which
/// removes the residual band-edge coloration and the filter's bulk delay, so
/// a direct path with no propagation delay lands at lag 0.
#[derive(Clone, Debug)]
pub struct Deconvolver {
    n_fft: usize,
    rec_len: usize,
    out_taps: usize,
    kernel: Vec<Complex64>,
}

const REGULARISATION: f64 = 1e-10;
const SILENCE_MEAN_SQUARE: f64 = 1e-16;

impl Deconvolver {
    pub fn new(sweep: &Sweep, rec_len: usize, out_taps: usize) -> Result<Self> {
        if rec_len < sweep.len() {
            return Err(DspError::WrongLength {
                expected: sweep.len(),
                got: rec_len,
            });
        }
        if out_taps == 0 {
            return Err(DspError::Empty);
        }
        let n_fft = (rec_len + out_taps).next_power_of_two();
        let s = rfft_full(&sweep.samples, n_fft);
        let inv = rfft_full(&sweep.inverse_filter(), n_fft);
        let power: Vec<f64> = s
            .iter()
            .zip(&inv)
            .map(|(a, b)| a.norm_sqr() * b.norm_sqr())
            .collect();
        let lambda = REGULARISATION * power.iter().cloned().fold(0.0, f64::max);
        let kernel = s
            .iter()
            .zip(&inv)
            .zip(&power)
            .map(|((a, b), p)| a.conj() * b.norm_sqr() / (p + lambda))
            .collect();
        Ok(Self {
            n_fft,
            rec_len,
            out_taps,
            kernel,
        })
    }

    pub fn recording_len(&self) -> usize {
        self.rec_len
    }

    pub fn apply(&self, recording: &[f64]) -> Result<Vec<f64>> {
        if recording.len() != self.rec_len {
            return Err(DspError::WrongLength {
                expected: self.rec_len,
                got: recording.len(),
            });
        }
        let ms = recording.iter().map(|v| v * v).sum::<f64>() / recording.len() as f64;
        if !(ms > SILENCE_MEAN_SQUARE) {
            return Err(DspError::Silent);
        }
        let mut buf: Vec<Complex64> = recording.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.n_fft, Complex64::new(0.0, 0.0));
        fft_in_place(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel) {
            *b *= k;
        }
        ifft_in_place(&mut buf);
        Ok(buf[..self.out_taps].iter().map(|c| c.re).collect())
    }
}

/// Impulse response of `recording` to `sweep`, cropped to `out_taps`.
pub fn deconvolve(recording: &[f64], sweep: &Sweep, out_taps: usize) -> Result<Vec<f64>> {
    Deconvolver::new(sweep, recording.len(), out_taps)?.apply(recording)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{convolve, lsd_db, magnitude_spectrum};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sweep_length_and_bounds() {
        let s = exp_sweep(44_100.0).unwrap();
        assert_eq!(s.len(), 52_920);
        assert!(s.samples.iter().all(|v| v.abs() <= 1.0));
        assert!(exp_sweep(22_050.0).is_err());
    }

    #[test]
    fn instantaneous_frequency_from_phase() {
        let s = exp_sweep(48_000.0).unwrap();
        let l = s.duration / (s.f_end / s.f_start).ln();
        let k = 2.0 * PI * s.f_start * l;
        let phase = |t: f64| k * ((t / l).exp() - 1.0);
        let h = 1e-7;
        let f0 = (phase(h) - phase(0.0)) / h / (2.0 * PI);
        let t_end = s.duration;
        let f1 = (phase(t_end) - phase(t_end - h)) / h / (2.0 * PI);
        assert!((f0 / 20.0 - 1.0).abs() < 0.01, "{f0}");
        assert!((f1 / 22_000.0 - 1.0).abs() < 0.01, "{f1}");
        assert!((s.instantaneous_frequency(t_end) - 22_000.0).abs() < 1e-6);
    }

    #[test]
    fn self_deconvolution_is_an_impulse() {
        let s = exp_sweep(44_100.0).unwrap();
        let mut rec = s.samples.clone();
        rec.resize(s.len() + 1000, 0.0);
        let ir = deconvolve(&rec, &s, 256).unwrap();
        let total: f64 = ir.iter().map(|v| v * v).sum();
        let window: f64 = ir[..3].iter().map(|v| v * v).sum::<f64>() + ir[254..].iter().map(|v| v * v).sum::<f64>();
        assert!((total - window) / total < 0.01);
        assert!((ir[0] - 1.0).abs() < 1e-3, "{}", ir[0]);
    }

    #[test]
    fn shifted_sweep_gives_impulse_at_lag() {
        let s = exp_sweep(44_100.0).unwrap();
        let d = 37;
        let mut rec = vec![0.0; d];
        rec.extend_from_slice(&s.samples);
        rec.resize(s.len() + 2000, 0.0);
        let ir = deconvolve(&rec, &s, 256).unwrap();
        let peak = (0..ir.len()).max_by(|&a, &b| ir[a].abs().total_cmp(&ir[b].abs())).unwrap();
        assert_eq!(peak, d);
    }

    #[test]
    fn known_response_round_trip() {
        let s = exp_sweep(44_100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h: Vec<f64> = (0..256)
            .map(|i| rng.gen_range(-1.0..1.0) * (-(i as f64) / 30.0).exp())
            .collect();
        let mut rec = convolve(&s.samples, &h);
        rec.resize(s.len() + 44_100, 0.0);
        let got = deconvolve(&rec, &s, 256).unwrap();
        let a = magnitude_spectrum(&h).unwrap();
        let b = magnitude_spectrum(&got).unwrap();
        let lsd = lsd_db(&a, &b).unwrap();
        assert!(lsd < 0.1, "lsd {lsd}");
    }

    #[test]
    fn silent_recording_flagged() {
        let s = exp_sweep(44_100.0).unwrap();
        let rec = vec![0.0; s.len()];
        assert!(matches!(deconvolve(&rec, &s, 256), Err(DspError::Silent)));
        assert!(deconvolve(&rec[..100], &s, 256).is_err());
    }
}
