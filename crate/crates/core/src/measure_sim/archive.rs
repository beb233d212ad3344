use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ArmModel, MeasureError, NoiseModel, Result, Session, StopRecord};
use crate::dataset::Direction;
use crate::dsp::{read_wav, write_wav, SampleFormat, WavAudio};
use crate::geometry::{PhonePose, Side};

pub const MANIFEST_NAME: &str = "manifest.txt";
const MAGIC: &str = "hrtfkit-session 1";

fn side_tag(s: Side) -> &'static str {
    match s {
        Side::Left => "L",
        Side::Right => "R",
    }
}

fn wav_name(i: usize) -> String {
    format!("stop_{i:03}.wav")
}

/// Writes the manifest and one float stereo WAV per stop into `dir`.
pub fn write_session(session: &Session, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let a = &session.arm;
    let n = &session.noise;
    let mut m = String::new();
    writeln!(m, "{MAGIC}").unwrap();
    writeln!(m, "sample_rate {}", session.sample_rate).unwrap();
    writeln!(m, "seed {}", session.seed).unwrap();
    writeln!(m, "arm {} {} {} {}", a.l_sh, a.l_s, a.l_z, a.alpha).unwrap();
    writeln!(m, "noise {} {} {}", n.imu_sigma, n.mic_snr, n.pose_jitter).unwrap();
    writeln!(m, "stops {}", session.stops.len()).unwrap();
    writeln!(
        m,
        "# index side true_az true_el reported_az reported_el source_az source_el dwell start file"
    )
    .unwrap();
    for (i, s) in session.stops.iter().enumerate() {
        writeln!(
            m,
            "stop {i} {} {} {} {} {} {} {} {} {} {}",
            side_tag(s.side),
            s.true_pose.azimuth,
            s.true_pose.elevation,
            s.reported_pose.azimuth,
            s.reported_pose.elevation,
            s.source.azimuth,
            s.source.elevation,
            s.dwell,
            s.start,
            wav_name(i)
        )
        .unwrap();
        let audio = WavAudio {
            sample_rate: session.sample_rate,
            channels: vec![s.left.clone(), s.right.clone()],
        };
        write_wav(dir.join(wav_name(i)), &audio, SampleFormat::Float32)?;
    }
    fs::write(dir.join(MANIFEST_NAME), m)?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> MeasureError {
    MeasureError::Archive(msg.into())
}

fn floats(fields: &[&str], key: &str) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| bad(format!("{key}: bad number {f:?}"))))
        .collect()
}

fn keyed<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str, n: usize) -> Result<Vec<&'a str>> {
    let line = lines.next().ok_or_else(|| bad(format!("missing {key} line")))?;
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.first() != Some(&key) || fields.len() != n + 1 {
        return Err(bad(format!("expected {key} with {n} values, got {line:?}")));
    }
    Ok(fields[1..].to_vec())
}

/// Reads a session written by [`write_session`].
pub fn read_session(dir: impl AsRef<Path>) -> Result<Session> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    if lines.next() != Some(MAGIC) {
        return Err(bad("not a session manifest"));
    }
    let sample_rate = floats(&keyed(&mut lines, "sample_rate", 1)?, "sample_rate")?[0];
    let seed_field = keyed(&mut lines, "seed", 1)?[0];
    let seed = seed_field.parse().map_err(|_| bad(format!("seed: {seed_field:?}")))?;
    let a = floats(&keyed(&mut lines, "arm", 4)?, "arm")?;
    let arm = ArmModel::new(a[0], a[1], a[2], a[3])?;
    let nz = floats(&keyed(&mut lines, "noise", 3)?, "noise")?;
    let noise = NoiseModel::new(nz[0], nz[1], nz[2])?;
    let count_field = keyed(&mut lines, "stops", 1)?[0];
    let count: usize = count_field.parse().map_err(|_| bad(format!("stops: {count_field:?}")))?;

    let mut stops = Vec::with_capacity(count);
    for i in 0..count {
        let f = keyed(&mut lines, "stop", 11)?;
        if f[0].parse::<usize>().ok() != Some(i) {
            return Err(bad(format!("stop {i} out of order")));
        }
        let side = match f[1] {
            "L" => Side::Left,
            "R" => Side::Right,
            other => return Err(bad(format!("stop {i}: side {other:?}"))),
        };
        let v = floats(&f[2..10], "stop")?;
        let audio = read_wav(dir.join(f[10])).map_err(MeasureError::Dsp)?;
        if audio.channels.len() != 2 || (audio.sample_rate - sample_rate).abs() > 0.5 {
            return Err(bad(format!("stop {i}: expected stereo audio at {sample_rate} Hz")));
        }
        let mut ch = audio.channels.into_iter();
        stops.push(StopRecord {
            side,
            true_pose: PhonePose::new(v[0], v[1]),
            reported_pose: PhonePose::new(v[2], v[3]),
            source: Direction::new(v[4], v[5]),
            dwell: v[6],
            start: v[7],
            left: ch.next().expect("two channels"),
            right: ch.next().expect("two channels"),
        });
    }
    if lines.next().is_some() {
        return Err(bad("trailing lines after the last stop"));
    }
    Ok(Session {
        sample_rate,
        seed,
        arm,
        noise,
        stops,
    })
}
