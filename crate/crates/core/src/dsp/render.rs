use rustfft::num_complex::Complex64;

use super::fft::{fft_in_place, ifft_in_place, rfft_full};
use super::{DspError, Result};

/// Two-ear impulse response.
#[derive(Clone, Debug, PartialEq)]
pub struct Hrir {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub sample_rate: f64,
}

impl Hrir {
    pub fn new(left: Vec<f64>, right: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if left.len() != right.len() {
            return Err(DspError::LengthMismatch(left.len(), right.len()));
        }
        if left.iter().chain(&right).any(|v| !v.is_finite()) {
            return Err(DspError::Invalid("non-finite HRIR sample".into()));
        }
        Ok(Self {
            left,
            right,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// Full linear convolution.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 64 {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (j, &y) in b.iter().enumerate() {
                out[i + j] += x * y;
            }
        }
        return out;
    }
    let n = out_len.next_power_of_two();
    let fa = rfft_full(a, n);
    let mut fb = rfft_full(b, n);
    for (x, y) in fb.iter_mut().zip(&fa) {
        *x *= y;
    }
    ifft_in_place(&mut fb);
    fb.truncate(out_len);
    fb.into_iter().map(|c| c.re).collect()
}

/// Convolves `mono` with each ear and scales both channels by the same
/// factor so the louder one peaks at 1.
pub fn render_binaural(mono: &[f64], hrir: &Hrir) -> Result<(Vec<f64>, Vec<f64>)> {
    if mono.is_empty() || hrir.is_empty() {
        return Err(DspError::Empty);
    }
    if mono.iter().any(|v| !v.is_finite()) {
        return Err(DspError::Invalid("non-finite input sample".into()));
    }
    let (mut l, mut r) = convolve_pair(mono, &hrir.left, &hrir.right);
    let peak = l.iter().chain(&r).fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        l.iter_mut().chain(r.iter_mut()).for_each(|v| *v /= peak);
    }
    Ok((l, r))
}

// One forward transform of the source shared by both ears.
fn convolve_pair(mono: &[f64], left: &[f64], right: &[f64]) -> (Vec<f64>, Vec<f64>) {
    if mono.len() <= 64 || left.len() <= 64 {
        return (convolve(mono, left), convolve(mono, right));
    }
    let out_len = mono.len() + left.len() - 1;
    let n = out_len.next_power_of_two();
    let fm = rfft_full(mono, n);
    let ear = |h: &[f64]| {
        let mut f: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        f.resize(n, Complex64::new(0.0, 0.0));
        fft_in_place(&mut f);
        for (x, y) in f.iter_mut().zip(&fm) {
            *x *= y;
        }
        ifft_in_place(&mut f);
        f.truncate(out_len);
        f.into_iter().map(|c| c.re).collect::<Vec<f64>>()
    };
    (ear(left), ear(right))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{fractional_delay, itd_estimate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn impulse(n: usize, at: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        v
    }

    #[test]
    fn fft_and_direct_convolution_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = convolve(&a, &b);
        let mut slow = vec![0.0; 399];
        for i in 0..300 {
            for j in 0..100 {
                slow[i + j] += a[i] * b[j];
            }
        }
        for (x, y) in fast.iter().zip(&slow) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_impulses_copy_the_source() {
        let mono = vec![0.5, -0.25, 0.1];
        let h = Hrir::new(impulse(8, 0), impulse(8, 0), 44_100.0).unwrap();
        let (l, r) = render_binaural(&mono, &h).unwrap();
        assert_eq!(l, r);
        for (i, m) in mono.iter().enumerate() {
            assert!((l[i] - m / 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_right_ear_is_silent() {
        let h = Hrir::new(impulse(8, 2), vec![0.0; 8], 44_100.0).unwrap();
        let (_, r) = render_binaural(&[1.0, 2.0, 3.0], &h).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert!(render_binaural(&[], &h).is_err());
    }

    #[test]
    fn rendered_noise_keeps_hrir_itd() {
        let fs = 44_100.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let noise: Vec<f64> = (0..8192).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let base = impulse(256, 40);
        let delayed = fractional_delay(&base, 13.4, 256);
        let h = Hrir::new(delayed, base, fs).unwrap();
        let (l, r) = render_binaural(&noise, &h).unwrap();
        let itd = itd_estimate(&l, &r, fs).unwrap();
        // left lags by 13.4 samples, so the right ear leads
        assert!((itd * fs - 13.4).abs() < 1.0, "{}", itd * fs);
    }
}
