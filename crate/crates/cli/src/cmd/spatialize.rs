use std::fs;

use hrtf_core::cvae::{generate_hrir, load_checkpoint};
use hrtf_core::dataset::{nearest_index, Direction};
use hrtf_core::dsp::{itd_estimate, render_binaural, write_wav, Hrir, ItdModel, SampleFormat, WavAudio};
use hrtf_core::localization::{ild, stimulus, Stimulus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::loc::itd_table;
use super::{check_subject, read_bundle};
use crate::args::{slot_label, SpatializeArgs, StimulusKind};
use crate::error::{cvae, user, Context, Result};
use crate::run::{num, path_str, Run};

const PEAK: f64 = 0.9;

pub fn positions(n_az: usize, n_el: usize, el_lo: f64, el_hi: f64) -> Vec<Direction> {
    let mut out = Vec::with_capacity(n_az * n_el);
    for k in 0..n_el {
        let el = if n_el == 1 { el_lo } else { el_lo + (el_hi - el_lo) * k as f64 / (n_el - 1) as f64 };
        for j in 0..n_az {
            out.push(Direction::new(j as f64 * 360.0 / n_az as f64, el));
        }
    }
    out
}

pub fn file_name(d: &Direction) -> String {
    format!("az{:+07.2}_el{:+06.2}.wav", d.azimuth, d.elevation)
}

pub fn spatialize(run: &Run, a: &SpatializeArgs) -> Result<()> {
    if a.azimuths == 0 || a.elevations == 0 {
        return Err(user("--azimuths and --elevations must be positive"));
    }
    let [el_lo, el_hi] = a.elevation_range[..] else {
        return Err(user("--elevation-range takes two values"));
    };
    if !(a.duration > 0.0 && a.duration <= 60.0) {
        return Err(user(format!("--duration {} outside (0, 60]", a.duration)));
    }
    let bundle = read_bundle(&a.bundle)?;
    let fs = bundle.sample_rate;
    let dirs = positions(a.azimuths, a.elevations, el_lo, el_hi);
    let hrirs: Vec<Hrir> = match (&a.checkpoint, a.subject) {
        (Some(path), None) => {
            let ckpt = load_checkpoint(path).map_err(|e| cvae(&format!("reading {}", path.display()), e))?;
            let itd = ItdModel { table: itd_table(&ckpt, &bundle)?, factor: a.itd_factor };
            dirs.iter()
                .map(|d| generate_hrir(&ckpt, a.slot, d, &itd, fs).map_err(|e| cvae("generating", e)))
                .collect::<Result<_>>()?
        }
        (None, Some(s)) => {
            check_subject(&bundle, s)?;
            dirs.iter().map(|d| bundle.hrir(s, nearest_index(&bundle.grid, d))).collect()
        }
        _ => return Err(user("give exactly one of --checkpoint or --subject")),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let kind = match a.stimulus {
        StimulusKind::Noise => Stimulus::random(&mut rng),
        StimulusKind::Speech => Stimulus::random_speech(&mut rng),
    };
    let mono = stimulus(kind, (a.duration * fs).round() as usize, fs, &mut rng);
    let rendered: Vec<(Vec<f64>, Vec<f64>)> = hrirs
        .iter()
        .map(|h| render_binaural(&mono, h).internal("rendering"))
        .collect::<Result<_>>()?;
    // one gain for every file keeps level differences between positions
    let peak = rendered
        .iter()
        .flat_map(|(l, r)| l.iter().chain(r))
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { PEAK / peak } else { 1.0 };

    fs::create_dir_all(&a.output).user(&format!("creating {}", a.output.display()))?;
    let mut rows = Vec::with_capacity(dirs.len());
    for ((d, h), (l, r)) in dirs.iter().zip(&hrirs).zip(rendered) {
        let name = file_name(d);
        let itd = itd_estimate(&h.left, &h.right, fs).internal("ITD")?;
        let level = ild(&l, &r).internal("ILD")?;
        let audio = WavAudio {
            sample_rate: fs,
            channels: vec![l.iter().map(|v| v * gain).collect(), r.iter().map(|v| v * gain).collect()],
        };
        write_wav(a.output.join(&name), &audio, SampleFormat::Int16).user(&format!("writing {name}"))?;
        rows.push(vec![name, num(d.azimuth), num(d.elevation), num(itd * 1e6), num(level)]);
    }
    run.write_metrics(&["file", "azimuth", "elevation", "itd_us", "ild_db"], &rows)?;
    println!("wrote {} files to {}", rows.len(), a.output.display());
    run.write_manifest(
        json!({
            "bundle": path_str(&a.bundle),
            "checkpoint": a.checkpoint.as_deref().map(path_str),
            "slot": a.checkpoint.as_ref().map(|_| slot_label(a.slot)),
            "subject": a.subject,
            "itd_factor": a.itd_factor,
            "azimuths": a.azimuths,
            "elevations": a.elevations,
            "elevation_range": [el_lo, el_hi],
            "stimulus": format!("{kind:?}"),
            "duration_s": a.duration,
            "output": path_str(&a.output),
        }),
        json!({ "files": rows.len(), "gain": gain }),
    )
}
