use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use std::f64::consts::PI;

use super::{azimuth_class, BinauralFeature, Result};
use crate::dataset::Direction;
use crate::dsp::fft::{fft_in_place, ifft_in_place};
use crate::dsp::{render_binaural, Hrir};

pub const STIMULUS_SECONDS: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stimulus {
    /// White noise restricted to a band, with raised-cosine onset and offset.
    Noise { lo_hz: f64, hi_hz: f64 },
    /// Harmonic source with vibrato through two formant resonances, under a
    /// syllable-rate envelope.
    Speech { f0: f64, f1: f64, f2: f64 },
}

impl Stimulus {
    /// Broadband noise with jittered band edges; the corpus stimulus.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Stimulus::Noise {
            lo_hz: rng.gen_range(80.0..200.0),
            hi_hz: rng.gen_range(14_000.0..16_000.0),
        }
    }

    pub fn random_speech<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Stimulus::Speech {
            f0: rng.gen_range(90.0..240.0),
            f1: rng.gen_range(300.0..900.0),
            f2: rng.gen_range(900.0..2_600.0),
        }
    }
}

fn taper(x: &mut [f64], fs: f64) {
    let ramp = ((0.005 * fs) as usize).min(x.len() / 2).max(1);
    for i in 0..ramp {
        let w = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        x[i] *= w;
        let j = x.len() - 1 - i;
        x[j] *= w;
    }
}

fn normalize_peak(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v /= peak);
    }
}

fn band_noise<R: Rng + ?Sized>(n: usize, fs: f64, lo: f64, hi: f64, rng: &mut R) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0)).collect();
    fft_in_place(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        if f < lo || f > hi {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

fn resonance(f: f64, centre: f64, bandwidth: f64) -> f64 {
    1.0 / (1.0 + ((f - centre) / bandwidth).powi(2))
}

fn speech<R: Rng + ?Sized>(n: usize, fs: f64, f0: f64, f1: f64, f2: f64, rng: &mut R) -> Vec<f64> {
    let vib_rate = rng.gen_range(4.0..7.0);
    let vib_depth = rng.gen_range(0.01..0.04);
    let syl_rate = rng.gen_range(3.0..6.0);
    let phase0 = rng.gen_range(0.0..2.0 * PI);
    let n_harm = ((5_000.0 / f0) as usize).max(1);
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let gains: Vec<f64> = (1..=n_harm)
        .map(|h| {
            let f = h as f64 * f0;
            (resonance(f, f1, 120.0) + 0.6 * resonance(f, f2, 200.0) + 0.02) / (h as f64).sqrt()
        })
        .collect();
    let breath = band_noise(n, fs, 2_000.0, 8_000.0, rng);
    let mut out = vec![0.0; n];
    let mut pitch_phase = 0.0;
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let inst_f0 = f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t).sin());
        pitch_phase += 2.0 * PI * inst_f0 / fs;
        let voiced: f64 = gains
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(h, (g, p))| g * ((h + 1) as f64 * pitch_phase + p).sin())
            .sum();
        let env = 0.55 + 0.45 * (2.0 * PI * syl_rate * t + phase0).sin();
        *o = env * voiced + 0.05 * breath[i];
    }
    out
}

/// Mono stimulus of `n` samples, peak-normalised to 1.
pub fn stimulus<R: Rng + ?Sized>(kind: Stimulus, n: usize, fs: f64, rng: &mut R) -> Vec<f64> {
    let mut x = match kind {
        Stimulus::Noise { lo_hz, hi_hz } => band_noise(n, fs, lo_hz, hi_hz, rng),
        Stimulus::Speech { f0, f1, f2 } => speech(n, fs, f0, f1, f2, rng),
    };
    taper(&mut x, fs);
    normalize_peak(&mut x);
    x
}

/// One labelled training or test example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub feature: BinauralFeature,
    pub class: usize,
    pub azimuth: f64,
}

/// Renders `per_direction` random stimuli through each HRIR and extracts
/// features, labelled by the azimuth bin of the direction.
pub fn render_corpus(hrirs: &[(Direction, Hrir)], per_direction: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(hrirs.len() * per_direction);
    for (dir, h) in hrirs {
        let n = (STIMULUS_SECONDS * h.sample_rate).round() as usize;
        for _ in 0..per_direction {
            let kind = Stimulus::random(&mut rng);
            let mono = stimulus(kind, n, h.sample_rate, &mut rng);
            let (l, r) = render_binaural(&mono, h)?;
            out.push(Sample {
                feature: BinauralFeature::from_signals(&l, &r)?,
                class: azimuth_class(dir.azimuth),
                azimuth: dir.azimuth.rem_euclid(360.0),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::magnitude_spectrum;

    #[test]
    fn stimuli_are_normalised_and_tapered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..6 {
            let kind = if i % 2 == 0 { Stimulus::random(&mut rng) } else { Stimulus::random_speech(&mut rng) };
            let x = stimulus(kind, 4410, 44_100.0, &mut rng);
            let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - 1.0).abs() < 1e-12, "{kind:?}");
            assert_eq!(x[0], 0.0);
            assert!(x.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn band_noise_stays_in_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = band_noise(256, 44_100.0, 2_000.0, 6_000.0, &mut rng);
        let mag = magnitude_spectrum(&x).unwrap();
        // bin k is (k + 1) · 172 Hz
        let bin = |hz: f64| (hz / (44_100.0 / 256.0)).round() as usize - 1;
        let inside = mag[bin(4_000.0)];
        assert!(mag[bin(500.0)] < inside - 100.0);
        assert!(mag[bin(12_000.0)] < inside - 100.0);
    }

    #[test]
    fn corpus_labels_follow_directions() {
        let mut l = vec![0.0; 64];
        let mut r = vec![0.0; 64];
        l[10] = 1.0;
        r[4] = 0.5;
        let h = Hrir::new(l, r, 44_100.0).unwrap();
        let dirs = [(Direction::new(-90.0, 0.0), h.clone()), (Direction::new(30.0, 10.0), h)];
        let corpus = render_corpus(&dirs, 3, 9).unwrap();
        assert_eq!(corpus.len(), 6);
        assert_eq!(corpus[0].class, 54);
        assert_eq!(corpus[0].azimuth, 270.0);
        assert_eq!(corpus[5].class, 6);
        let f = &corpus[1].feature;
        let peak = (0..91).max_by(|&a, &b| f.rc[a].total_cmp(&f.rc[b])).unwrap();
        assert_eq!(peak, 45 + 6);
        assert!((f.ild - 20.0 * 2f64.log10()).abs() < 1e-9);
        assert_eq!(corpus, render_corpus(&dirs, 3, 9).unwrap());
    }
}
