//! Simulated phone-based HRTF measurement sessions and the pipeline that
//! turns a session into labelled sparse HRTFs.

mod archive;
mod pipeline;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{nearest_index, DatasetError, Direction, HrtfBundle, SubjectModel};
use crate::dsp::{convolve, DspError, Hrir, Sweep};
use crate::geometry::{gcf_to_hcf, BodyParams, GeometryError, PhonePose, Side};

pub use archive::{read_session, write_session, MANIFEST_NAME};
pub use pipeline::{qc_checks, session_to_sparse, QcReport, SparseMeasurement, SparseSession};

/// Seconds the user holds still before each sweep starts.
pub const SETTLE_S: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("session archive: {0}")]
    Archive(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, MeasureError>;

/// Shoulder geometry of the person holding the phone, in metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmModel {
    /// Horizontal offset of each shoulder from the head centre.
    pub l_sh: f64,
    /// Shoulder to phone speaker.
    pub l_s: f64,
    /// Head centre height above the shoulder.
    pub l_z: f64,
    /// Rotation from the geographic frame to the head frame, degrees.
    pub alpha: f64,
}

impl ArmModel {
    pub fn new(l_sh: f64, l_s: f64, l_z: f64, alpha: f64) -> Result<Self> {
        let ok = [l_sh, l_s, l_z].iter().all(|v| v.is_finite() && *v > 0.0)
            && l_s > l_sh
            && l_s > l_z
            && alpha.is_finite();
        if !ok {
            return Err(MeasureError::Invalid(format!(
                "arm lengths l_sh={l_sh} l_s={l_s} l_z={l_z} alpha={alpha}"
            )));
        }
        Ok(Self { l_sh, l_s, l_z, alpha })
    }

    pub fn body_params(&self, side: Side) -> BodyParams {
        BodyParams {
            alpha: self.alpha,
            r_sh: self.l_sh / self.l_s,
            r_z: self.l_z / self.l_s,
            side,
        }
    }

    /// Same ratios at a different overall size.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            l_sh: self.l_sh * k,
            l_s: self.l_s * k,
            l_z: self.l_z * k,
            alpha: self.alpha,
        }
    }
}

impl Default for ArmModel {
    fn default() -> Self {
        Self {
            l_sh: 0.19,
            l_s: 0.62,
            l_z: 0.2,
            alpha: 25.0,
        }
    }
}

/// Measurement imperfections. `mic_snr` is in dB; infinity means no noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Orientation sensor error per axis, degrees.
    pub imu_sigma: f64,
    pub mic_snr: f64,
    /// Deviation of the speaker from the arm line, degrees per axis.
    pub pose_jitter: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            imu_sigma: 0.0,
            mic_snr: f64::INFINITY,
            pose_jitter: 0.0,
        }
    }

    pub fn new(imu_sigma: f64, mic_snr: f64, pose_jitter: f64) -> Result<Self> {
        if !(imu_sigma >= 0.0 && pose_jitter >= 0.0 && mic_snr >= 0.0) || imu_sigma.is_infinite() || pose_jitter.is_infinite() {
            return Err(MeasureError::Invalid(format!(
                "noise imu_sigma={imu_sigma} mic_snr={mic_snr} pose_jitter={pose_jitter}"
            )));
        }
        Ok(Self { imu_sigma, mic_snr, pose_jitter })
    }
}

/// A commanded stop: which hand, where the phone points, how long it stays.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stop {
    pub side: Side,
    pub pose: PhonePose,
    pub dwell: f64,
}

/// One simulated stop.
#[derive(Clone, Debug, PartialEq)]
pub struct StopRecord {
    pub side: Side,
    pub true_pose: PhonePose,
    pub reported_pose: PhonePose,
    /// Actual source direction in the head frame.
    pub source: Direction,
    pub dwell: f64,
    /// Session time at which the stop began, seconds.
    pub start: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub sample_rate: f64,
    pub seed: u64,
    pub arm: ArmModel,
    pub noise: NoiseModel,
    pub stops: Vec<StopRecord>,
}

impl Session {
    pub fn duration(&self) -> f64 {
        self.stops.iter().map(|s| s.dwell).sum()
    }
}

/// Source of the HRIRs heard at each stop.
#[derive(Clone, Copy, Debug)]
pub enum GroundTruth<'a> {
    /// Spectrum of the nearest grid direction, ITD at the exact direction.
    Synthetic { model: &'a SubjectModel, grid: &'a [Direction] },
    /// Stored HRIR of the nearest grid direction.
    Bundle { bundle: &'a HrtfBundle, subject: usize },
}

impl GroundTruth<'_> {
    pub fn sample_rate(&self) -> f64 {
        match self {
            GroundTruth::Synthetic { model, .. } => model.sample_rate,
            GroundTruth::Bundle { bundle, .. } => bundle.sample_rate,
        }
    }

    pub fn hrir(&self, dir: &Direction) -> Hrir {
        match self {
            GroundTruth::Synthetic { model, grid } => model.hrir(&grid[nearest_index(grid, dir)], dir),
            GroundTruth::Bundle { bundle, subject } => bundle.hrir(*subject, nearest_index(&bundle.grid, dir)),
        }
    }
}

/// Default dwell per stop: one sweep plus the settle time.
pub fn default_dwell(sweep: &Sweep) -> f64 {
    sweep.duration + SETTLE_S
}

fn hand_grid(alpha: f64, dwell: f64, rows: &[f64], rel: impl Iterator<Item = f64> + Clone) -> Vec<Stop> {
    let mut out = Vec::new();
    for side in [Side::Right, Side::Left] {
        for &el in rows {
            for r in rel.clone() {
                out.push(Stop {
                    side,
                    pose: PhonePose::new(alpha + side.sign() * r, el),
                    dwell,
                });
            }
        }
    }
    out
}

/// Both hands sweeping from slightly across the body to behind the ear on
/// four elevation rows: 80 stops. `alpha` is the direction the user faces.
pub fn frontal_sweep(alpha: f64, dwell: f64) -> Vec<Stop> {
    hand_grid(alpha, dwell, &[-5.0, 12.0, 29.0, 46.0], (0..10).map(|i| -45.0 + 18.0 * i as f64))
}

/// Denser grid over the same region: 7 rows by 17 azimuths per hand.
pub fn calibration_arc(alpha: f64, dwell: f64) -> Vec<Stop> {
    hand_grid(
        alpha,
        dwell,
        &[-10.0, 0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
        (0..17).map(|i| -40.0 + 10.0 * i as f64),
    )
}

/// Runs a measurement session. Each stop renders the sweep through the HRIR
/// of the actual source direction; reported poses carry sensor noise.
pub fn simulate_session(
    truth: &GroundTruth,
    arm: &ArmModel,
    stops: &[Stop],
    noise: &NoiseModel,
    sweep: &Sweep,
    seed: u64,
) -> Result<Session> {
    let fs = truth.sample_rate();
    if (fs - sweep.sample_rate).abs() > 1e-9 {
        return Err(MeasureError::Dsp(DspError::RateMismatch(fs, sweep.sample_rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut start = 0.0;
    let mut records = Vec::with_capacity(stops.len());
    for stop in stops {
        if !(stop.dwell >= 0.0 && stop.dwell.is_finite()) {
            return Err(MeasureError::Invalid(format!("dwell {}", stop.dwell)));
        }
        let jitter = [std_normal.sample(&mut rng), std_normal.sample(&mut rng)];
        let imu = [std_normal.sample(&mut rng), std_normal.sample(&mut rng)];
        let speaker = PhonePose::new(
            stop.pose.azimuth + noise.pose_jitter * jitter[0],
            stop.pose.elevation + noise.pose_jitter * jitter[1],
        );
        let source = gcf_to_hcf(speaker, &arm.body_params(stop.side))?;
        let reported = PhonePose::new(
            stop.pose.azimuth + noise.imu_sigma * imu[0],
            stop.pose.elevation + noise.imu_sigma * imu[1],
        );

        let hrir = truth.hrir(&source);
        let mut left = convolve(&sweep.samples, &hrir.left);
        let mut right = convolve(&sweep.samples, &hrir.right);
        if noise.mic_snr.is_finite() {
            let power = left.iter().chain(&right).map(|v| v * v).sum::<f64>() / (2 * left.len()) as f64;
            let sigma = power.sqrt() * 10f64.powf(-noise.mic_snr / 20.0);
            for v in left.iter_mut().chain(right.iter_mut()) {
                *v += sigma * std_normal.sample(&mut rng);
            }
        }
        if stop.dwell < sweep.duration {
            let n = ((stop.dwell * fs).floor() as usize).min(left.len());
            left.truncate(n);
            right.truncate(n);
        }
        // stored at the precision of the float WAV archive
        for v in left.iter_mut().chain(right.iter_mut()) {
            *v = *v as f32 as f64;
        }
        records.push(StopRecord {
            side: stop.side,
            true_pose: stop.pose,
            reported_pose: reported,
            source,
            dwell: stop.dwell,
            start,
            left,
            right,
        });
        start += stop.dwell;
    }
    Ok(Session {
        sample_rate: fs,
        seed,
        arm: *arm,
        noise: *noise,
        stops: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{default_grid, great_circle_deg, synth_bundle};
    use crate::dsp::{deconvolve, lsd_db, magnitude_spectrum, N_TAPS};

    fn setup() -> (HrtfBundle, Vec<SubjectModel>, Sweep) {
        let (b, m) = synth_bundle(1, &default_grid(), 48_000.0, 3).unwrap();
        (b, m, Sweep::new(48_000.0).unwrap())
    }

    #[test]
    fn presets_have_expected_size() {
        assert_eq!(frontal_sweep(0.0, 2.2).len(), 80);
        assert_eq!(calibration_arc(0.0, 2.2).len(), 238);
        let stops = frontal_sweep(10.0, 2.2);
        assert!(stops.iter().filter(|s| s.side == Side::Left).count() == 40);
    }

    #[test]
    fn noiseless_reports_true_poses() {
        let (b, _, sweep) = setup();
        let truth = GroundTruth::Bundle { bundle: &b, subject: 0 };
        let stops = &frontal_sweep(25.0, 2.2)[..6];
        let s = simulate_session(&truth, &ArmModel::default(), stops, &NoiseModel::none(), &sweep, 1).unwrap();
        for (r, st) in s.stops.iter().zip(stops) {
            assert_eq!(r.reported_pose, st.pose);
            assert_eq!(r.true_pose, st.pose);
        }
        assert!((s.duration() - 6.0 * 2.2).abs() < 1e-12);
        assert!((s.stops[3].start - 3.0 * 2.2).abs() < 1e-12);
    }

    #[test]
    fn hundred_stops_take_about_220_seconds() {
        let sweep = Sweep::new(48_000.0).unwrap();
        assert!((100.0 * default_dwell(&sweep) - 220.0).abs() < 1e-9);
    }

    #[test]
    fn grid_stop_deconvolves_to_ground_truth() {
        let (b, _, sweep) = setup();
        let truth = GroundTruth::Bundle { bundle: &b, subject: 0 };
        let arm = ArmModel::default();
        let s = simulate_session(&truth, &arm, &frontal_sweep(25.0, 2.2)[..3], &NoiseModel::none(), &sweep, 2).unwrap();
        for r in &s.stops {
            let want = truth.hrir(&r.source);
            let got_l = deconvolve(&r.left, &sweep, N_TAPS).unwrap();
            let got_r = deconvolve(&r.right, &sweep, N_TAPS).unwrap();
            let l = lsd_db(&magnitude_spectrum(&got_l).unwrap(), &magnitude_spectrum(&want.left).unwrap()).unwrap();
            let rr = lsd_db(&magnitude_spectrum(&got_r).unwrap(), &magnitude_spectrum(&want.right).unwrap()).unwrap();
            assert!(l < 0.1 && rr < 0.1, "{l} {rr}");
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let (_, m, sweep) = setup();
        let grid = default_grid();
        let truth = GroundTruth::Synthetic { model: &m[0], grid: &grid };
        let noise = NoiseModel::new(2.0, 40.0, 1.0).unwrap();
        let stops = &frontal_sweep(25.0, 2.2)[..4];
        let a = simulate_session(&truth, &ArmModel::default(), stops, &noise, &sweep, 9).unwrap();
        let b = simulate_session(&truth, &ArmModel::default(), stops, &noise, &sweep, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_session(&truth, &ArmModel::default(), stops, &noise, &sweep, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jitter_moves_the_source_not_the_report() {
        let (_, m, sweep) = setup();
        let grid = default_grid();
        let truth = GroundTruth::Synthetic { model: &m[0], grid: &grid };
        let arm = ArmModel::default();
        let noise = NoiseModel::new(0.0, f64::INFINITY, 3.0).unwrap();
        let stops = &frontal_sweep(25.0, 2.2)[..5];
        let s = simulate_session(&truth, &arm, stops, &noise, &sweep, 4).unwrap();
        let mut moved = 0.0;
        for r in &s.stops {
            assert_eq!(r.reported_pose, r.true_pose);
            let nominal = gcf_to_hcf(r.true_pose, &arm.body_params(r.side)).unwrap();
            moved += great_circle_deg(&nominal, &r.source);
        }
        assert!(moved > 1.0);
    }

    #[test]
    fn short_dwell_truncates_recording() {
        let (b, _, sweep) = setup();
        let truth = GroundTruth::Bundle { bundle: &b, subject: 0 };
        let mut stops = frontal_sweep(25.0, 2.2)[..2].to_vec();
        stops[1].dwell = 0.8;
        let s = simulate_session(&truth, &ArmModel::default(), &stops, &NoiseModel::none(), &sweep, 1).unwrap();
        assert_eq!(s.stops[0].left.len(), sweep.len() + N_TAPS - 1);
        assert_eq!(s.stops[1].left.len(), (0.8 * 48_000.0) as usize);
    }

    #[test]
    fn invalid_arm_rejected() {
        assert!(ArmModel::new(0.7, 0.6, 0.2, 0.0).is_err());
        assert!(ArmModel::new(0.2, 0.6, -0.1, 0.0).is_err());
        assert!(NoiseModel::new(-1.0, 30.0, 0.0).is_err());
    }
}
