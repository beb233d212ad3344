use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use super::{DatasetError, Direction, HrtfBundle, Result};
use crate::dsp::fft::{fft_in_place, ifft_in_place};
use crate::dsp::{minimum_phase, Hrir, N_BINS, N_TAPS};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Common onset delay of both ears, seconds.
const BASE_DELAY_S: f64 = 0.75e-3;
const N_RIPPLE: usize = 3;

/// Woodworth spherical-head ITD for lateral angle Δ (radians).
pub fn woodworth_itd(head_radius: f64, lateral_rad: f64) -> f64 {
    head_radius / SPEED_OF_SOUND * (lateral_rad + lateral_rad.sin())
}

/// Spectral features contributed by the outer ear.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnaParams {
    /// Primary notch centre at 0° elevation.
    pub notch_hz: f64,
    /// Rise of the notch centre per degree of elevation.
    pub notch_slope_hz_per_deg: f64,
    pub notch_depth_db: f64,
    pub notch_width_hz: f64,
    /// Second notch centre as a multiple of the first.
    pub notch2_ratio: f64,
    pub concha_hz: f64,
    pub concha_gain_db: f64,
    pub concha_width_hz: f64,
    /// High-frequency loss for sources behind the pinna.
    pub rear_shadow_db: f64,
    pub rear_corner_hz: f64,
}

impl PinnaParams {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            notch_hz: rng.gen_range(6000.0..8000.0),
            notch_slope_hz_per_deg: rng.gen_range(30.0..50.0),
            notch_depth_db: rng.gen_range(12.0..22.0),
            notch_width_hz: rng.gen_range(700.0..1300.0),
            notch2_ratio: rng.gen_range(1.35..1.6),
            concha_hz: rng.gen_range(3800.0..5200.0),
            concha_gain_db: rng.gen_range(4.0..9.0),
            concha_width_hz: rng.gen_range(1500.0..2500.0),
            rear_shadow_db: rng.gen_range(5.0..10.0),
            rear_corner_hz: rng.gen_range(2500.0..4000.0),
        }
    }

    fn as_array(&self) -> [f64; 10] {
        [
            self.notch_hz,
            self.notch_slope_hz_per_deg,
            self.notch_depth_db,
            self.notch_width_hz,
            self.notch2_ratio,
            self.concha_hz,
            self.concha_gain_db,
            self.concha_width_hz,
            self.rear_shadow_db,
            self.rear_corner_hz,
        ]
    }

    fn from_array(a: &[f64]) -> Self {
        Self {
            notch_hz: a[0],
            notch_slope_hz_per_deg: a[1],
            notch_depth_db: a[2],
            notch_width_hz: a[3],
            notch2_ratio: a[4],
            concha_hz: a[5],
            concha_gain_db: a[6],
            concha_width_hz: a[7],
            rear_shadow_db: a[8],
            rear_corner_hz: a[9],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectParams {
    pub head_radius: f64,
    pub pinna: PinnaParams,
}

impl SubjectParams {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            head_radius: rng.gen_range(0.078..0.098),
            pinna: PinnaParams::random(rng),
        }
    }
}

/// Smooth direction- and frequency-dependent detail, mirrored between ears.
#[derive(Clone, Debug, PartialEq)]
struct Ripple {
    amp_db: f64,
    period_hz: f64,
    phase: f64,
    coef: [f64; 4],
}

/// Deterministic generator of one synthetic listener's HRIRs.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectModel {
    pub params: SubjectParams,
    pub sample_rate: f64,
    ripple: Vec<Ripple>,
}

fn gauss(f: f64, centre: f64, width: f64) -> f64 {
    (-0.5 * ((f - centre) / width).powi(2)).exp()
}

fn highpass4(f: f64, corner: f64) -> f64 {
    let r = (f / corner).powi(4);
    r / (1.0 + r)
}

impl SubjectModel {
    pub fn new<R: Rng + ?Sized>(params: SubjectParams, sample_rate: f64, rng: &mut R) -> Result<Self> {
        let a = params.head_radius;
        if !(0.07..=0.11).contains(&a) {
            return Err(DatasetError::RadiusOutOfRange(a));
        }
        let ripple = (0..N_RIPPLE)
            .map(|_| Ripple {
                amp_db: rng.gen_range(0.5..1.5),
                period_hz: rng.gen_range(2500.0..6000.0),
                phase: rng.gen_range(0.0..2.0 * PI),
                coef: [
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ],
            })
            .collect();
        Ok(Self {
            params,
            sample_rate,
            ripple,
        })
    }

    /// Woodworth ITD at `dir`, positive when the right ear leads.
    pub fn itd(&self, dir: &Direction) -> f64 {
        let x = dir.to_unit()[0].clamp(-1.0, 1.0);
        woodworth_itd(self.params.head_radius, x.asin())
    }

    /// dB magnitude of bins 1..=128 for one ear (0 = left, 1 = right).
    pub fn magnitude_db(&self, dir: &Direction, ear: usize) -> Vec<f64> {
        let side = if ear == 0 { -1.0 } else { 1.0 };
        let [x, y, z] = dir.to_unit();
        // the left ear sees the mirror image of what the right ear sees
        let xe = side * x;
        let p = &self.params.pinna;
        let omega0 = SPEED_OF_SOUND / self.params.head_radius;
        let incidence = xe.clamp(-1.0, 1.0).acos().to_degrees();
        let alpha = 1.05 + 0.95 * (incidence * 180.0 / 150.0).to_radians().cos();
        let facing = xe * (PI / 4.0).sin() + y * (PI / 4.0).cos();
        let rear = ((1.0 - facing) / 2.0).powi(2);
        let notch = p.notch_hz + p.notch_slope_hz_per_deg * dir.elevation;
        let notch2 = notch * p.notch2_ratio;
        (1..=N_BINS)
            .map(|k| {
                let f = k as f64 * self.sample_rate / N_TAPS as f64;
                let w = 2.0 * PI * f / (2.0 * omega0);
                let shadow = 10.0 * ((1.0 + (alpha * w).powi(2)) / (1.0 + w * w)).log10();
                let pinna = p.concha_gain_db * gauss(f, p.concha_hz, p.concha_width_hz)
                    - p.notch_depth_db * gauss(f, notch, p.notch_width_hz)
                    - 0.6 * p.notch_depth_db * gauss(f, notch2, 1.3 * p.notch_width_hz)
                    - p.rear_shadow_db * rear * highpass4(f, p.rear_corner_hz);
                let hp = highpass4(f, 3000.0);
                let detail: f64 = self
                    .ripple
                    .iter()
                    .map(|r| {
                        let g = r.coef[0] + r.coef[1] * xe + r.coef[2] * y + r.coef[3] * z;
                        r.amp_db * g * (2.0 * PI * f / r.period_hz + r.phase).cos() * hp
                    })
                    .sum();
                (shadow + pinna + detail).clamp(-80.0, 20.0)
            })
            .collect()
    }

    /// HRIR with the spectrum of `spectral` and the interaural delays of
    /// `delay`. Both ears share a 0.75 ms onset delay.
    pub fn hrir(&self, spectral: &Direction, delay: &Direction) -> Hrir {
        let itd = self.itd(delay);
        let t0 = BASE_DELAY_S * self.sample_rate;
        let half = 0.5 * itd * self.sample_rate;
        let left = self.delayed_ear(&self.magnitude_db(spectral, 0), t0 + half);
        let right = self.delayed_ear(&self.magnitude_db(spectral, 1), t0 - half);
        Hrir {
            left,
            right,
            sample_rate: self.sample_rate,
        }
    }

    // Minimum-phase response circularly delayed by `delay` samples; the
    // Nyquist bin keeps its magnitude so the spectrum is exact.
    fn delayed_ear(&self, mag_db: &[f64], delay: f64) -> Vec<f64> {
        let h = minimum_phase(mag_db).expect("finite 128-bin magnitude");
        let n = N_TAPS;
        let mut spec: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_in_place(&mut spec);
        for k in 1..n / 2 {
            let rot = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * delay / n as f64);
            spec[k] *= rot;
            spec[n - k] = spec[k].conj();
        }
        let sign = if (PI * delay).cos() < 0.0 { -1.0 } else { 1.0 };
        spec[n / 2] = Complex64::new(spec[n / 2].re * sign, 0.0);
        ifft_in_place(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// One-line text form: sample rate, radius, pinna and ripple values.
    pub fn to_line(&self) -> String {
        let mut v = vec![self.sample_rate, self.params.head_radius];
        v.extend(self.params.pinna.as_array());
        for r in &self.ripple {
            v.extend([r.amp_db, r.period_hz, r.phase]);
            v.extend(r.coef);
        }
        v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let perr = |msg: String| DatasetError::Parse {
            section: "subject model",
            msg,
        };
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| perr(format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        let want = 12 + 7 * N_RIPPLE;
        if v.len() != want {
            return Err(perr(format!("expected {want} values, got {}", v.len())));
        }
        let ripple = v[12..]
            .chunks(7)
            .map(|c| Ripple {
                amp_db: c[0],
                period_hz: c[1],
                phase: c[2],
                coef: [c[3], c[4], c[5], c[6]],
            })
            .collect();
        Ok(Self {
            sample_rate: v[0],
            params: SubjectParams {
                head_radius: v[1],
                pinna: PinnaParams::from_array(&v[2..12]),
            },
            ripple,
        })
    }
}

/// HRIRs of a synthetic subject on `grid`.
pub fn synth_subject<R: Rng + ?Sized>(
    head_radius: f64,
    pinna: &PinnaParams,
    grid: &[Direction],
    sample_rate: f64,
    rng: &mut R,
) -> Result<Vec<Hrir>> {
    let params = SubjectParams {
        head_radius,
        pinna: pinna.clone(),
    };
    let model = SubjectModel::new(params, sample_rate, rng)?;
    Ok(grid.iter().map(|d| model.hrir(d, d)).collect())
}

/// `n` random subjects on `grid`, reproducible from `seed`.
pub fn synth_bundle(n: usize, grid: &[Direction], sample_rate: f64, seed: u64) -> Result<(HrtfBundle, Vec<SubjectModel>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bundle = HrtfBundle::new(sample_rate, N_TAPS, grid.to_vec());
    let mut models = Vec::with_capacity(n);
    for _ in 0..n {
        let params = SubjectParams::random(&mut rng);
        let model = SubjectModel::new(params, sample_rate, &mut rng)?;
        let hrirs: Vec<Hrir> = grid.iter().map(|d| model.hrir(d, d)).collect();
        bundle.push_subject(&hrirs)?;
        models.push(model);
    }
    Ok((bundle, models))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{itd_estimate, magnitude_spectrum};

    fn model(radius: f64, seed: u64) -> SubjectModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pinna = PinnaParams::random(&mut rng);
        SubjectModel::new(SubjectParams { head_radius: radius, pinna }, 44_100.0, &mut rng).unwrap()
    }

    #[test]
    fn woodworth_values() {
        assert_eq!(woodworth_itd(0.0875, 0.0), 0.0);
        let v = woodworth_itd(0.0875, PI / 2.0);
        assert!((v * 1e6 - 655.9).abs() < 0.15, "{}", v * 1e6);
    }

    #[test]
    fn median_plane_has_zero_itd() {
        let m = model(0.09, 1);
        assert_eq!(m.itd(&Direction::new(0.0, 30.0)), 0.0);
        let h = m.hrir(&Direction::new(0.0, 30.0), &Direction::new(0.0, 30.0));
        assert!(itd_estimate(&h.left, &h.right, 44_100.0).unwrap().abs() < 1e-9);
    }

    #[test]
    fn max_itd_scales_with_radius() {
        let a = model(0.08, 2).itd(&Direction::new(90.0, 0.0));
        let b = model(0.10, 2).itd(&Direction::new(90.0, 0.0));
        assert!((b / a - 1.25).abs() < 1e-12);
    }

    #[test]
    fn itd_antisymmetric_in_azimuth() {
        let m = model(0.09, 3);
        for az in [10.0, 35.0, 80.0, 125.0] {
            let p = Direction::new(az, 15.0);
            let q = Direction::new(-az, 15.0);
            assert!((m.itd(&p) + m.itd(&q)).abs() < 1e-18);
            let hp = m.hrir(&p, &p);
            let hq = m.hrir(&q, &q);
            let ep = itd_estimate(&hp.left, &hp.right, 44_100.0).unwrap();
            let eq = itd_estimate(&hq.left, &hq.right, 44_100.0).unwrap();
            assert!((ep + eq).abs() < 1e-9, "{ep} {eq}");
            assert!(ep > 0.0);
        }
    }

    #[test]
    fn hrir_spectrum_is_the_designed_magnitude() {
        let m = model(0.085, 4);
        let d = Direction::new(-60.0, 30.0);
        let h = m.hrir(&d, &d);
        for (ear, taps) in [&h.left, &h.right].into_iter().enumerate() {
            let got = magnitude_spectrum(taps).unwrap();
            let want = m.magnitude_db(&d, ear);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn notch_rises_with_elevation() {
        let m = model(0.09, 5);
        let lowest = |el: f64| {
            let mag = m.magnitude_db(&Direction::new(0.0, el), 1);
            // search above the concha resonance
            (40..N_BINS).min_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap()
        };
        assert!(lowest(45.0) > lowest(-30.0));
    }

    #[test]
    fn radius_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = PinnaParams::random(&mut rng);
        assert!(matches!(
            synth_subject(0.2, &p, &[Direction::new(0.0, 0.0)], 44_100.0, &mut rng),
            Err(DatasetError::RadiusOutOfRange(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let m = model(0.09, 6);
        assert_eq!(SubjectModel::from_line(&m.to_line()).unwrap(), m);
    }
}
