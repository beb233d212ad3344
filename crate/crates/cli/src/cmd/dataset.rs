use std::fs;
use std::path::{Path, PathBuf};

use hrtf_core::dataset::{default_grid, save_bundle, synth_bundle, SubjectModel};
use serde_json::json;

use crate::args::SynthArgs;
use crate::error::{user, Context, Result};
use crate::run::{num, path_str, Run};

/// Companion file holding the generating models of a synthetic bundle.
pub fn models_path(bundle: &Path) -> PathBuf {
    let mut name = bundle.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".models");
    bundle.with_file_name(name)
}

pub fn load_models(bundle: &Path) -> Result<Option<Vec<SubjectModel>>> {
    let path = models_path(bundle);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).user(&format!("reading {}", path.display()))?;
    let models = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(SubjectModel::from_line)
        .collect::<std::result::Result<Vec<_>, _>>()
        .user(&format!("parsing {}", path.display()))?;
    Ok(Some(models))
}

pub fn synth(run: &Run, a: &SynthArgs) -> Result<()> {
    if a.subjects == 0 {
        return Err(user("--subjects must be at least 1"));
    }
    let grid = default_grid();
    let (bundle, models) = synth_bundle(a.subjects, &grid, a.sample_rate, run.seed).user("synthesising subjects")?;
    save_bundle(&bundle, &a.output).user(&format!("writing {}", a.output.display()))?;
    let lines: String = models.iter().map(|m| m.to_line() + "\n").collect();
    let mpath = models_path(&a.output);
    fs::write(&mpath, lines).user(&format!("writing {}", mpath.display()))?;

    let rows: Vec<Vec<String>> = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let max_itd = grid.iter().map(|d| m.itd(d).abs()).fold(0.0, f64::max);
            vec![
                i.to_string(),
                num(m.params.head_radius),
                num(max_itd * 1e6),
                num(m.params.pinna.notch_hz),
                num(m.params.pinna.rear_shadow_db),
            ]
        })
        .collect();
    run.write_metrics(&["subject", "head_radius_m", "max_itd_us", "notch_hz", "rear_shadow_db"], &rows)?;
    run.write_manifest(
        json!({
            "subjects": a.subjects,
            "sample_rate": a.sample_rate,
            "output": path_str(&a.output),
        }),
        json!({
            "directions": bundle.grid.len(),
            "taps": bundle.n_taps,
            "models": path_str(&mpath),
        }),
    )
}
