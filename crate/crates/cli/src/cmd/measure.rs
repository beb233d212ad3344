use std::path::Path;

use hrtf_core::dsp::Sweep;
use hrtf_core::geometry::Side;
use hrtf_core::measure_sim::{
    calibration_arc, default_dwell, frontal_sweep, qc_checks, read_session, session_to_sparse, simulate_session,
    write_session, ArmModel, GroundTruth, NoiseModel, QcReport, Session, SparseSession,
};
use serde_json::json;

use super::dataset::load_models;
use super::{check_subject, read_bundle};
use crate::args::{Hands, Layout, QcArgs, SimulateArgs};
use crate::error::{user, Context, Result};
use crate::run::{jnum, num, path_str, Run};

fn side_name(s: Side) -> &'static str {
    match s {
        Side::Left => "left",
        Side::Right => "right",
    }
}

/// Human-readable cause of a failed quality check.
pub fn qc_reason(qc: &QcReport) -> String {
    let mut parts = Vec::new();
    if let Some(s) = qc.missing_side {
        parts.push(format!("{} hand has no usable stops", side_name(s)));
    }
    for &s in &qc.missing_zero {
        parts.push(format!("{} hand never crosses zero ITD", side_name(s)));
    }
    for &s in &qc.missing_peak {
        parts.push(format!("{} hand does not bracket the ITD maximum", side_name(s)));
    }
    if parts.is_empty() {
        "passed".into()
    } else {
        parts.join("; ")
    }
}

pub fn load_session(dir: &Path) -> Result<(Session, Sweep)> {
    let session = read_session(dir).user(&format!("reading session {}", dir.display()))?;
    let sweep = Sweep::new(session.sample_rate).user("session sample rate")?;
    Ok((session, sweep))
}

/// Processes a session, refusing it when the quality checks fail.
pub fn checked_sparse(dir: &Path) -> Result<SparseSession> {
    let (session, sweep) = load_session(dir)?;
    let qc = qc_checks(&session, &sweep).internal("quality checks")?;
    if !qc.passed() {
        return Err(user(format!("session {} rejected by QC: {}", dir.display(), qc_reason(&qc))));
    }
    session_to_sparse(&session, &sweep).internal("processing session")
}

pub fn simulate(run: &Run, a: &SimulateArgs) -> Result<()> {
    let bundle = read_bundle(&a.bundle)?;
    check_subject(&bundle, a.subject)?;
    let models = load_models(&a.bundle)?;
    let grid = bundle.grid.clone();
    let truth = match models.as_ref().and_then(|m| m.get(a.subject)) {
        Some(model) => GroundTruth::Synthetic { model, grid: &grid },
        None => GroundTruth::Bundle { bundle: &bundle, subject: a.subject },
    };
    let sweep = Sweep::new(bundle.sample_rate).user("bundle sample rate")?;
    let arm = ArmModel::new(a.l_sh, a.l_s, a.l_z, a.alpha).user("arm model")?;
    let noise = NoiseModel::new(a.imu_sigma, a.mic_snr, a.pose_jitter).user("noise model")?;
    let dwell = a.dwell.unwrap_or_else(|| default_dwell(&sweep));
    let mut stops = match a.layout {
        Layout::Frontal => frontal_sweep(arm.alpha, dwell),
        Layout::Calibration => calibration_arc(arm.alpha, dwell),
    };
    stops.retain(|s| match a.hands {
        Hands::Both => true,
        Hands::Left => s.side == Side::Left,
        Hands::Right => s.side == Side::Right,
    });
    for &i in &a.truncate_stops {
        let stop = stops
            .get_mut(i)
            .ok_or_else(|| user(format!("--truncate-stops: no stop {i}")))?;
        stop.dwell = 0.5 * sweep.duration;
    }
    let session = simulate_session(&truth, &arm, &stops, &noise, &sweep, run.seed).internal("simulating session")?;
    write_session(&session, &a.output).user(&format!("writing session {}", a.output.display()))?;

    let rows: Vec<Vec<String>> = session
        .stops
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                i.to_string(),
                side_name(s.side).into(),
                num(s.true_pose.azimuth),
                num(s.true_pose.elevation),
                num(s.reported_pose.azimuth),
                num(s.reported_pose.elevation),
                num(s.source.azimuth),
                num(s.source.elevation),
                num(s.dwell),
            ]
        })
        .collect();
    run.write_metrics(
        &["stop", "side", "pose_az", "pose_el", "reported_az", "reported_el", "source_az", "source_el", "dwell_s"],
        &rows,
    )?;
    run.write_manifest(
        json!({
            "bundle": path_str(&a.bundle),
            "subject": a.subject,
            "ground_truth": if models.is_some() { "model" } else { "bundle" },
            "layout": format!("{:?}", a.layout).to_lowercase(),
            "hands": format!("{:?}", a.hands).to_lowercase(),
            "arm": { "l_sh": a.l_sh, "l_s": a.l_s, "l_z": a.l_z, "alpha": a.alpha },
            "noise": { "imu_sigma": a.imu_sigma, "mic_snr": jnum(a.mic_snr), "pose_jitter": a.pose_jitter },
            "dwell": dwell,
            "truncate_stops": a.truncate_stops,
            "output": path_str(&a.output),
        }),
        json!({ "stops": session.stops.len(), "duration_s": session.duration() }),
    )
}

pub fn qc(run: &Run, a: &QcArgs) -> Result<()> {
    let (session, sweep) = load_session(&a.session)?;
    let report = qc_checks(&session, &sweep).internal("quality checks")?;
    let sides = |v: &[Side]| v.iter().map(|&s| side_name(s)).collect::<Vec<_>>().join(" ");
    let discarded = report.discarded.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    let rows = vec![
        vec!["stops".into(), session.stops.len().to_string()],
        vec!["discarded".into(), discarded],
        vec!["missing_zero".into(), sides(&report.missing_zero)],
        vec!["missing_peak".into(), sides(&report.missing_peak)],
        vec!["missing_side".into(), report.missing_side.map(side_name).unwrap_or("").into()],
        vec!["passed".into(), report.passed().to_string()],
    ];
    run.write_metrics(&["check", "value"], &rows)?;
    let reason = qc_reason(&report);
    run.write_manifest(
        json!({ "session": path_str(&a.session) }),
        json!({ "passed": report.passed(), "reason": reason, "discarded": report.discarded }),
    )?;
    if !report.passed() {
        return Err(user(format!("session failed QC: {reason}")));
    }
    println!("session passed QC ({} of {} stops kept)", session.stops.len() - report.discarded.len(), session.stops.len());
    Ok(())
}
