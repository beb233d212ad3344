use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use hrtf_core::cvae::{
    generate_grid, individualize as adapt, load_checkpoint, mean_lsd, save_checkpoint, train as fit, Checkpoint,
    SparseMeasurement, SubjectSlot, TrainConfig,
};
use hrtf_core::dataset::{select_subset, HrtfBundle, Region};
use hrtf_core::dsp::{lsd_db, magnitude_spectrum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::measure::checked_sparse;
use super::{check_subject, read_bundle};
use crate::args::{region_label, slot_label, EvalLsdArgs, IndividualizeArgs, SweepArgs, TrainArgs};
use crate::error::{cvae, user, CliError, Context, Result};
use crate::run::{derive_seed, num, path_str, Run};

fn train_config_json(c: &TrainConfig) -> Value {
    json!({
        "batch_size": c.batch_size,
        "lr": c.lr,
        "iterations": c.iterations,
        "beta": c.beta,
        "replay_fraction": c.replay_fraction,
        "adaptation_iterations": c.adaptation_iterations,
        "adaptation_lr": c.adaptation_lr,
        "new_subject_weight": c.new_subject_weight,
        "seed": c.seed,
    })
}

fn read_checkpoint(path: &std::path::Path) -> Result<Checkpoint> {
    load_checkpoint(path).map_err(|e| cvae(&format!("reading checkpoint {}", path.display()), e))
}

fn write_checkpoint(ckpt: &Checkpoint, path: &std::path::Path) -> Result<()> {
    save_checkpoint(ckpt, path).map_err(|e| cvae(&format!("writing checkpoint {}", path.display()), e))
}

/// Ground-truth magnitudes of `subject` at grid indices `dirs`.
pub fn sparse_from_bundle(bundle: &HrtfBundle, subject: usize, dirs: &[usize]) -> Result<Vec<SparseMeasurement>> {
    dirs.iter()
        .map(|&d| {
            let h = bundle.hrir(subject, d);
            let mut m = magnitude_spectrum(&h.left).internal("spectrum")?;
            m.extend(magnitude_spectrum(&h.right).internal("spectrum")?);
            Ok(SparseMeasurement { direction: bundle.grid[d], magnitudes_db: m })
        })
        .collect()
}

fn all_dirs(bundle: &HrtfBundle) -> Vec<usize> {
    (0..bundle.grid.len()).collect()
}

pub fn train(run: &Run, a: &TrainArgs) -> Result<()> {
    let bundle = read_bundle(&a.bundle)?;
    let n = bundle.n_subjects();
    let n_train = a.n_train.unwrap_or(n.saturating_sub(1));
    if n_train < 2 || n_train > n {
        return Err(user(format!("--n-train {n_train} must be in [2, {n}]")));
    }
    let subset = bundle.subset(&(0..n_train).collect::<Vec<_>>());
    let cfg = a.overrides.resolve(run.seed);
    let ckpt = fit(&subset, &cfg).map_err(|e| cvae("training", e))?;
    write_checkpoint(&ckpt, &a.output)?;

    let rows: Vec<Vec<String>> = ckpt
        .meta
        .loss_history
        .iter()
        .enumerate()
        .map(|(i, l)| vec![(i + 1).to_string(), num(*l)])
        .collect();
    run.write_metrics(&["epoch", "loss"], &rows)?;
    let mc = ckpt.model.config;
    run.write_manifest(
        json!({
            "bundle": path_str(&a.bundle),
            "n_train": n_train,
            "train": train_config_json(&cfg),
            "model": {
                "conv_channels": mc.encoder.conv_channels,
                "subject_embed": mc.encoder.subject_embed,
                "encoder_hidden": mc.encoder.hidden,
                "decoder_hidden": mc.decoder.hidden,
            },
            "output": path_str(&a.output),
        }),
        json!({
            "num_params": ckpt.model.num_params(),
            "final_loss": ckpt.meta.loss_history.last().copied(),
        }),
    )
}

pub fn individualize(run: &Run, a: &IndividualizeArgs) -> Result<()> {
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let bundle = read_bundle(&a.bundle)?;
    let (sparse, source) = match (&a.session, a.subject) {
        (Some(dir), None) => {
            let s = checked_sparse(dir)?;
            let sparse = s
                .measurements
                .iter()
                .map(|m| SparseMeasurement { direction: m.direction, magnitudes_db: m.magnitudes.clone() })
                .collect::<Vec<_>>();
            (sparse, json!({ "session": path_str(dir) }))
        }
        (None, Some(subject)) => {
            check_subject(&bundle, subject)?;
            let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
            let dirs = select_subset(&bundle.grid, a.region, a.count, &mut rng).user("selecting directions")?;
            let src = json!({ "subject": subject, "count": a.count, "region": region_label(a.region) });
            (sparse_from_bundle(&bundle, subject, &dirs)?, src)
        }
        _ => return Err(user("give exactly one of --session or --subject")),
    };
    if let Some(s) = a.eval_subject {
        check_subject(&bundle, s)?;
    }
    let cfg = a.overrides.resolve(run.seed);
    let adapted = adapt(&ckpt, &sparse, &bundle, &cfg).map_err(|e| cvae("adapting", e))?;
    write_checkpoint(&adapted, &a.output)?;

    let before_len = ckpt.meta.loss_history.len();
    let rows: Vec<Vec<String>> = adapted.meta.loss_history[before_len..]
        .iter()
        .enumerate()
        .map(|(i, l)| vec![(i + 1).to_string(), num(*l)])
        .collect();
    run.write_metrics(&["iteration", "loss"], &rows)?;
    let eval = match a.eval_subject {
        Some(s) => {
            let dirs = all_dirs(&bundle);
            let before = mean_lsd(&ckpt, SubjectSlot::Reserved, &bundle, s, &dirs).map_err(|e| cvae("scoring", e))?;
            let after = mean_lsd(&adapted, SubjectSlot::Reserved, &bundle, s, &dirs).map_err(|e| cvae("scoring", e))?;
            println!("mean LSD {before:.3} dB -> {after:.3} dB");
            json!({ "subject": s, "lsd_before_db": before, "lsd_after_db": after })
        }
        None => Value::Null,
    };
    run.write_manifest(
        json!({
            "checkpoint": path_str(&a.checkpoint),
            "bundle": path_str(&a.bundle),
            "source": source,
            "train": train_config_json(&cfg),
            "output": path_str(&a.output),
        }),
        json!({ "measurements": sparse.len(), "evaluation": eval }),
    )
}

pub fn eval_lsd(run: &Run, a: &EvalLsdArgs) -> Result<()> {
    let truth = read_bundle(&a.bundle)?;
    check_subject(&truth, a.subject)?;
    let (generated, source) = match (&a.checkpoint, &a.generated) {
        (Some(path), None) => {
            let ckpt = read_checkpoint(path)?;
            let g = generate_grid(&ckpt, a.slot, &truth.grid).map_err(|e| cvae("generating", e))?;
            (g, json!({ "checkpoint": path_str(path), "slot": slot_label(a.slot) }))
        }
        (None, Some(path)) => {
            let other = read_bundle(path)?;
            let s = a.generated_subject.unwrap_or(a.subject);
            check_subject(&other, s)?;
            if other.grid != truth.grid {
                return Err(user("bundles are on different grids"));
            }
            let g = (0..other.grid.len())
                .map(|d| {
                    let h = other.hrir(s, d);
                    Ok((
                        magnitude_spectrum(&h.left).internal("spectrum")?,
                        magnitude_spectrum(&h.right).internal("spectrum")?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            (g, json!({ "bundle": path_str(path), "subject": s }))
        }
        _ => return Err(user("give exactly one of --checkpoint or --generated")),
    };
    let mut rows = Vec::with_capacity(generated.len());
    let mut total = 0.0;
    for (d, (gl, gr)) in generated.iter().enumerate() {
        let h = truth.hrir(a.subject, d);
        let l = lsd_db(&magnitude_spectrum(&h.left).internal("spectrum")?, gl).internal("lsd")?;
        let r = lsd_db(&magnitude_spectrum(&h.right).internal("spectrum")?, gr).internal("lsd")?;
        total += 0.5 * (l + r);
        let dir = truth.grid[d];
        rows.push(vec![d.to_string(), num(dir.azimuth), num(dir.elevation), num(l), num(r), num(0.5 * (l + r))]);
    }
    let mean = total / generated.len() as f64;
    run.write_metrics(&["direction", "azimuth", "elevation", "lsd_left_db", "lsd_right_db", "lsd_db"], &rows)?;
    println!("mean LSD {mean:.3} dB over {} directions", generated.len());
    run.write_manifest(
        json!({ "bundle": path_str(&a.bundle), "subject": a.subject, "generated": source }),
        json!({ "mean_lsd_db": mean, "directions": generated.len() }),
    )
}

struct Cell {
    region: Region,
    count: usize,
}

fn run_cell(ckpt: &Checkpoint, bundle: &HrtfBundle, subject: usize, cell: &Cell, cfg: &TrainConfig) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs = select_subset(&bundle.grid, cell.region, cell.count, &mut rng).user("selecting directions")?;
    let sparse = sparse_from_bundle(bundle, subject, &dirs)?;
    let adapted = adapt(ckpt, &sparse, bundle, cfg).map_err(|e| cvae("adapting", e))?;
    mean_lsd(&adapted, SubjectSlot::Reserved, bundle, subject, &all_dirs(bundle)).map_err(|e| cvae("scoring", e))
}

pub fn sweep(run: &Run, a: &SweepArgs) -> Result<()> {
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let bundle = read_bundle(&a.bundle)?;
    check_subject(&bundle, a.subject)?;
    if ckpt.roster.contains(&a.subject) {
        return Err(user(format!("subject {} was used for training", a.subject)));
    }
    let mut cells: Vec<Cell> = Vec::new();
    for &region in &a.regions {
        cells.extend(a.counts.iter().map(|&count| Cell { region, count }));
    }
    for &phi in &a.coverage {
        if !(phi > 0.0 && phi <= 360.0) {
            return Err(user(format!("coverage {phi} outside (0, 360]")));
        }
        cells.push(Cell { region: Region::AzimuthRange(phi), count: a.coverage_count });
    }
    let base_cfg = a.overrides.resolve(run.seed);
    let baseline = mean_lsd(&ckpt, SubjectSlot::Reserved, &bundle, a.subject, &all_dirs(&bundle))
        .map_err(|e| cvae("scoring", e))?;

    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .clamp(1, cells.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<f64>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let cfg = TrainConfig { seed: derive_seed(run.seed, i as u64), ..base_cfg };
                let r = run_cell(&ckpt, &bundle, a.subject, cell, &cfg);
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("results lock");

    let mut rows = Vec::with_capacity(cells.len());
    let mut table = Vec::with_capacity(cells.len());
    for (cell, r) in cells.iter().zip(results) {
        let lsd = r.unwrap_or_else(|| Err(CliError::Internal("worker exited early".into())))?;
        let reduction = 100.0 * (baseline - lsd) / baseline;
        let phi = match cell.region {
            Region::AzimuthRange(p) => num(p),
            Region::FullSphere => num(360.0),
            Region::FrontalSemisphere => num(180.0),
        };
        rows.push(vec![region_label(cell.region), phi, cell.count.to_string(), num(lsd), num(reduction)]);
        table.push(json!({ "region": region_label(cell.region), "count": cell.count, "mean_lsd_db": lsd }));
        println!("{:>10} {:>5}  {lsd:.3} dB ({reduction:+.1}%)", region_label(cell.region), cell.count);
    }
    run.write_metrics(&["region", "coverage_deg", "count", "mean_lsd_db", "reduction_pct"], &rows)?;
    run.write_manifest(
        json!({
            "checkpoint": path_str(&a.checkpoint),
            "bundle": path_str(&a.bundle),
            "subject": a.subject,
            "counts": a.counts,
            "regions": a.regions.iter().map(|&r| region_label(r)).collect::<Vec<_>>(),
            "coverage": a.coverage,
            "coverage_count": a.coverage_count,
            "train": train_config_json(&base_cfg),
        }),
        json!({ "baseline_lsd_db": baseline, "cells": table }),
    )
}
