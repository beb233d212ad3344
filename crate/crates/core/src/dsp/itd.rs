use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft::{fft_in_place, ifft_in_place};
use super::{DspError, Hrir, Result};
use crate::dataset::{great_circle_deg, Direction, HrtfBundle};

/// Largest interaural lag searched, in seconds.
pub const MAX_ITD_S: f64 = 1e-3;

const SINC_HALF: isize = 15;

/// Interaural time difference in seconds, positive when the right ear
/// hears first (the left channel lags).
///
/// Argmax of the normalised cross-correlation within ±1 ms, refined by a
/// parabola through the peak and its neighbours.
pub fn itd_estimate(left: &[f64], right: &[f64], fs: f64) -> Result<f64> {
    if left.len() != right.len() {
        return Err(DspError::LengthMismatch(left.len(), right.len()));
    }
    let el: f64 = left.iter().map(|v| v * v).sum();
    let er: f64 = right.iter().map(|v| v * v).sum();
    if !(el > 0.0 && er > 0.0) {
        return Err(DspError::Silent);
    }
    let norm = (el * er).sqrt();
    let n = left.len() as isize;
    let max_lag = ((MAX_ITD_S * fs).round() as isize).min(n - 1);
    // r(k) = sum_n left[n] right[n - k]; k > 0 means the left channel lags
    let corr = |k: isize| -> f64 {
        let lo = k.max(0);
        let hi = n.min(n + k);
        (lo..hi).map(|i| left[i as usize] * right[(i - k) as usize]).sum::<f64>() / norm
    };
    let values: Vec<f64> = (-max_lag..=max_lag).map(corr).collect();
    let best = (0..values.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty lag range");
    let mut lag = best as f64 - max_lag as f64;
    if best > 0 && best + 1 < values.len() {
        let (ym, y0, yp) = (values[best - 1], values[best], values[best + 1]);
        let den = ym - 2.0 * y0 + yp;
        if den < 0.0 {
            lag += 0.5 * (ym - yp) / den;
        }
    }
    Ok(lag / fs)
}

/// [`itd_estimate`] on copies of the channels low-passed at `cutoff_hz`
/// with a zero-phase raised-cosine roll-off.
pub fn itd_estimate_lowpass(left: &[f64], right: &[f64], fs: f64, cutoff_hz: f64) -> Result<f64> {
    if left.len() != right.len() {
        return Err(DspError::LengthMismatch(left.len(), right.len()));
    }
    let pad = left.len();
    let n = (left.len() + 2 * pad).next_power_of_two();
    let filt = |x: &[f64]| -> Vec<f64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (i, &v) in x.iter().enumerate() {
            buf[pad + i].re = v;
        }
        fft_in_place(&mut buf);
        let lo = 0.7 * cutoff_hz;
        for (k, b) in buf.iter_mut().enumerate() {
            let f = k.min(n - k) as f64 * fs / n as f64;
            let g = if f <= lo {
                1.0
            } else if f >= cutoff_hz {
                0.0
            } else {
                0.5 * (1.0 + (PI * (f - lo) / (cutoff_hz - lo)).cos())
            };
            *b *= g;
        }
        ifft_in_place(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    };
    itd_estimate(&filt(left), &filt(right), fs)
}

fn blackman(x: f64, half_width: f64) -> f64 {
    let r = x / half_width;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    0.42 + 0.5 * (PI * r).cos() + 0.08 * (2.0 * PI * r).cos()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Delays `x` by `delay` samples (≥ 0) with a 31-tap Blackman-windowed sinc
/// and returns the first `out_len` samples.
pub fn fractional_delay(x: &[f64], delay: f64, out_len: usize) -> Vec<f64> {
    let delay = delay.max(0.0);
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole as isize;
    let half_width = (SINC_HALF + 1) as f64;
    let taps: Vec<f64> = (-SINC_HALF..=SINC_HALF)
        .map(|k| {
            let t = k as f64 - frac;
            sinc(t) * blackman(t, half_width)
        })
        .collect();
    (0..out_len as isize)
        .map(|n| {
            let mut acc = 0.0;
            for (j, k) in (-SINC_HALF..=SINC_HALF).enumerate() {
                let src = n - whole - k;
                if src >= 0 && (src as usize) < x.len() {
                    acc += taps[j] * x[src as usize];
                }
            }
            acc
        })
        .collect()
}

/// Dataset-average ITD per direction.
#[derive(Clone, Debug, PartialEq)]
pub struct ItdTable {
    pub directions: Vec<Direction>,
    pub itd: Vec<f64>,
}

impl ItdTable {
    /// Per-direction mean of [`itd_estimate`] over `subjects`.
    pub fn from_bundle(bundle: &HrtfBundle, subjects: &[usize]) -> Result<Self> {
        if subjects.is_empty() {
            return Err(DspError::Empty);
        }
        let fs = bundle.sample_rate;
        let mut itd = vec![0.0; bundle.grid.len()];
        for &s in subjects {
            for (d, slot) in itd.iter_mut().enumerate() {
                let h = bundle.hrir(s, d);
                *slot += itd_estimate(&h.left, &h.right, fs)?;
            }
        }
        itd.iter_mut().for_each(|v| *v /= subjects.len() as f64);
        Ok(Self {
            directions: bundle.grid.clone(),
            itd,
        })
    }

    fn nearest(&self, dir: &Direction) -> usize {
        (0..self.directions.len())
            .min_by(|&a, &b| {
                great_circle_deg(&self.directions[a], dir)
                    .total_cmp(&great_circle_deg(&self.directions[b], dir))
            })
            .expect("non-empty table")
    }

    /// Table value at the nearest listed direction.
    pub fn lookup(&self, dir: &Direction) -> f64 {
        self.itd[self.nearest(dir)]
    }
}

/// Average table scaled by a per-subject factor.
#[derive(Clone, Debug, PartialEq)]
pub struct ItdModel {
    pub table: ItdTable,
    pub factor: f64,
}

impl ItdModel {
    /// Factor = largest measured |ITD| over the largest table |ITD| at the
    /// same directions.
    pub fn fit(table: ItdTable, measured: &[(Direction, f64)]) -> Result<Self> {
        if measured.is_empty() {
            return Err(DspError::Empty);
        }
        let subj = measured.iter().map(|(_, t)| t.abs()).fold(0.0, f64::max);
        let avg = measured
            .iter()
            .map(|(d, _)| table.lookup(d).abs())
            .fold(0.0, f64::max);
        let factor = if avg > 0.0 { subj / avg } else { 1.0 };
        Ok(Self { table, factor })
    }

    pub fn itd_at(&self, dir: &Direction) -> f64 {
        self.factor * self.table.lookup(dir)
    }
}

/// Delays the lagging ear of a minimum-phase pair so that the result's
/// [`itd_estimate`] matches the model ITD at `dir`. Any interaural lag the
/// pair already carries is discounted. Output keeps the input length.
pub fn apply_itd(left: &[f64], right: &[f64], dir: &Direction, model: &ItdModel, fs: f64) -> Result<Hrir> {
    if left.len() != right.len() {
        return Err(DspError::LengthMismatch(left.len(), right.len()));
    }
    let intrinsic = itd_estimate(left, right, fs)?;
    insert_itd(left, right, model.itd_at(dir) - intrinsic, fs)
}

/// Delays the left channel by `itd` seconds when positive, the right by
/// `-itd` when negative.
pub fn insert_itd(left: &[f64], right: &[f64], itd: f64, fs: f64) -> Result<Hrir> {
    if left.len() != right.len() {
        return Err(DspError::LengthMismatch(left.len(), right.len()));
    }
    let lag = itd.abs() * fs;
    let n = left.len();
    let (l, r) = if itd > 0.0 {
        (fractional_delay(left, lag, n), right.to_vec())
    } else if itd < 0.0 {
        (left.to_vec(), fractional_delay(right, lag, n))
    } else {
        (left.to_vec(), right.to_vec())
    };
    Hrir::new(l, r, fs)
}
