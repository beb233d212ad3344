use super::{MeasureError, Result, Session};
use crate::dataset::{great_circle_deg, Direction};
use crate::dsp::{itd_estimate_lowpass, magnitude_spectrum, Deconvolver, DspError, Hrir, Sweep, N_TAPS};
use crate::geometry::{
    calibrate, find_peak_reference, find_zero_references, gcf_to_hcf, BodyParams, ItdSample, Side,
};

/// Cutoff of the ITD estimator used on measured responses.
const ITD_CUTOFF_HZ: f64 = 1500.0;

/// Findings of the session quality checks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QcReport {
    /// Stops whose recording is too short or unusable.
    pub discarded: Vec<usize>,
    /// Hands whose kept stops never cross zero ITD.
    pub missing_zero: Vec<Side>,
    /// Hands whose kept stops do not bracket an |ITD| maximum.
    pub missing_peak: Vec<Side>,
    /// Set when one hand has no kept stops at all.
    pub missing_side: Option<Side>,
}

impl QcReport {
    pub fn passed(&self) -> bool {
        self.missing_zero.is_empty() && self.missing_peak.is_empty() && self.missing_side.is_none()
    }
}

/// One kept stop of a processed session.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMeasurement {
    pub stop: usize,
    pub side: Side,
    /// Direction estimated from the reported pose.
    pub direction: Direction,
    /// Direction the sound actually came from.
    pub true_direction: Direction,
    pub itd: f64,
    pub hrir: Hrir,
    /// dB magnitudes, 128 left bins followed by 128 right bins.
    pub magnitudes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSession {
    pub params: BodyParams,
    pub measurements: Vec<SparseMeasurement>,
    pub qc: QcReport,
}

impl SparseSession {
    /// Mean great-circle error of the estimated directions, degrees.
    pub fn mean_direction_error(&self) -> f64 {
        let n = self.measurements.len().max(1) as f64;
        self.measurements
            .iter()
            .map(|m| great_circle_deg(&m.direction, &m.true_direction))
            .sum::<f64>()
            / n
    }
}

type Analysed = Vec<Option<(Hrir, f64)>>;

fn analyse(session: &Session, sweep: &Sweep) -> Result<(QcReport, Analysed)> {
    if (session.sample_rate - sweep.sample_rate).abs() > 1e-9 {
        return Err(DspError::RateMismatch(session.sample_rate, sweep.sample_rate).into());
    }
    let full = sweep.len() + N_TAPS - 1;
    let deconv = Deconvolver::new(sweep, full, N_TAPS)?;
    let mut qc = QcReport::default();
    let mut out = Vec::with_capacity(session.stops.len());
    for (i, s) in session.stops.iter().enumerate() {
        let usable = s.dwell >= sweep.duration && s.left.len() == full && s.right.len() == full;
        let res = usable
            .then(|| -> Option<(Hrir, f64)> {
                let l = deconv.apply(&s.left).ok()?;
                let r = deconv.apply(&s.right).ok()?;
                let itd = itd_estimate_lowpass(&l, &r, session.sample_rate, ITD_CUTOFF_HZ).ok()?;
                Some((Hrir::new(l, r, session.sample_rate).ok()?, itd))
            })
            .flatten();
        if res.is_none() {
            qc.discarded.push(i);
        }
        out.push(res);
    }
    for side in [Side::Left, Side::Right] {
        let samples = samples_for(session, &out, side);
        if samples.is_empty() {
            qc.missing_side = Some(side);
            continue;
        }
        if find_zero_references(&samples).is_err() {
            qc.missing_zero.push(side);
        }
        if find_peak_reference(&samples).is_err() {
            qc.missing_peak.push(side);
        }
    }
    Ok((qc, out))
}

fn samples_for(session: &Session, analysed: &Analysed, side: Side) -> Vec<ItdSample> {
    session
        .stops
        .iter()
        .zip(analysed)
        .filter(|(s, a)| s.side == side && a.is_some())
        .map(|(s, a)| ItdSample {
            pose: s.reported_pose,
            itd: a.as_ref().expect("filtered").1,
        })
        .collect()
}

/// Quality checks: short stops, missing references and one-sided coverage.
pub fn qc_checks(session: &Session, sweep: &Sweep) -> Result<QcReport> {
    Ok(analyse(session, sweep)?.0)
}

/// Deconvolves every kept stop, calibrates the body geometry from the ITDs
/// and labels each response with its estimated head-frame direction.
pub fn session_to_sparse(session: &Session, sweep: &Sweep) -> Result<SparseSession> {
    let (qc, analysed) = analyse(session, sweep)?;
    let left = samples_for(session, &analysed, Side::Left);
    let right = samples_for(session, &analysed, Side::Right);
    let params = calibrate(&left, &right)?;
    let mut measurements = Vec::new();
    for (i, (s, a)) in session.stops.iter().zip(analysed).enumerate() {
        let Some((hrir, itd)) = a else { continue };
        let direction = gcf_to_hcf(s.reported_pose, &params.with_side(s.side))?;
        let mut magnitudes = magnitude_spectrum(&hrir.left).map_err(MeasureError::Dsp)?;
        magnitudes.extend(magnitude_spectrum(&hrir.right)?);
        measurements.push(SparseMeasurement {
            stop: i,
            side: s.side,
            direction,
            true_direction: s.source,
            itd,
            hrir,
            magnitudes,
        });
    }
    Ok(SparseSession { params, measurements, qc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{default_grid, synth_bundle, SubjectModel};
    use crate::measure_sim::{frontal_sweep, simulate_session, ArmModel, GroundTruth, NoiseModel, Stop};

    fn model() -> (SubjectModel, Vec<Direction>, Sweep) {
        let grid = default_grid();
        let (_, m) = synth_bundle(1, &grid, 48_000.0, 21).unwrap();
        (m.into_iter().next().unwrap(), grid, Sweep::new(48_000.0).unwrap())
    }

    fn run(stops: &[Stop], noise: NoiseModel, seed: u64) -> (Session, Sweep) {
        let (m, grid, sweep) = model();
        let truth = GroundTruth::Synthetic { model: &m, grid: &grid };
        let s = simulate_session(&truth, &ArmModel::default(), stops, &noise, &sweep, seed).unwrap();
        (s, sweep)
    }

    #[test]
    fn short_dwell_is_discarded() {
        let mut stops = frontal_sweep(25.0, 2.2);
        stops[3].dwell = 0.8;
        let (s, sweep) = run(&stops, NoiseModel::none(), 1);
        let qc = qc_checks(&s, &sweep).unwrap();
        assert_eq!(qc.discarded, vec![3]);
        assert!(qc.passed(), "{qc:?}");
    }

    #[test]
    fn missing_zero_reference_flagged() {
        let stops: Vec<Stop> = frontal_sweep(0.0, 2.2)
            .into_iter()
            .filter(|s| s.side == Side::Right && s.pose.azimuth > 20.0)
            .chain(frontal_sweep(0.0, 2.2).into_iter().filter(|s| s.side == Side::Left))
            .collect();
        let (s, sweep) = run(&stops, NoiseModel::none(), 1);
        let qc = qc_checks(&s, &sweep).unwrap();
        assert_eq!(qc.missing_zero, vec![Side::Right]);
        assert!(!qc.passed());
    }

    #[test]
    fn one_sided_session_flagged() {
        let stops: Vec<Stop> = frontal_sweep(25.0, 2.2).into_iter().filter(|s| s.side == Side::Right).collect();
        let (s, sweep) = run(&stops, NoiseModel::none(), 1);
        let qc = qc_checks(&s, &sweep).unwrap();
        assert_eq!(qc.missing_side, Some(Side::Left));
        assert!(session_to_sparse(&s, &sweep).is_err());
    }

    #[test]
    fn noiseless_session_localises_accurately() {
        let (s, sweep) = run(&frontal_sweep(25.0, 2.2), NoiseModel::none(), 1);
        let sparse = session_to_sparse(&s, &sweep).unwrap();
        let err = sparse.mean_direction_error();
        assert!(err < 0.5, "mean error {err}");
        assert_eq!(sparse.measurements.len(), 80);
        assert_eq!(sparse.measurements[0].magnitudes.len(), 256);
    }
}
