use hrtf_core::cvae::{generate_hrir, load_checkpoint, Checkpoint, SubjectSlot};
use hrtf_core::dataset::{Direction, HrtfBundle};
use hrtf_core::dsp::{itd_estimate, Hrir, ItdModel, ItdTable};
use hrtf_core::localization::{
    adapt_localizer, class_azimuth, error_metric, evaluate, load_localizer, render_corpus, save_localizer,
    train_localizer, LocalizerConfig, Sample,
};
use serde_json::json;

use super::measure::checked_sparse;
use super::{check_subject, read_bundle};
use crate::args::{slot_label, LocEvalArgs, LocTrainArgs, RingArgs};
use crate::error::{cvae, user, Context, Result};
use crate::run::{derive_seed, num, path_str, Run};

/// Grid indices on the requested elevation rows.
pub fn ring(bundle: &HrtfBundle, ring: &RingArgs) -> Result<Vec<usize>> {
    let dirs: Vec<usize> = (0..bundle.grid.len())
        .filter(|&i| ring.elevations.iter().any(|&e| (bundle.grid[i].elevation - e).abs() < 1e-9))
        .collect();
    if dirs.is_empty() {
        return Err(user(format!("no grid directions at elevations {:?}", ring.elevations)));
    }
    if ring.per_direction == 0 {
        return Err(user("--per-direction must be positive"));
    }
    Ok(dirs)
}

pub fn truth_hrirs(bundle: &HrtfBundle, subject: usize, dirs: &[usize]) -> Vec<(Direction, Hrir)> {
    dirs.iter().map(|&d| (bundle.grid[d], bundle.hrir(subject, d))).collect()
}

/// Model spectra with the training-set ITD table scaled by `itd.factor`.
pub fn generated_hrirs(
    ckpt: &Checkpoint,
    slot: SubjectSlot,
    itd: &ItdModel,
    bundle: &HrtfBundle,
    dirs: &[usize],
) -> Result<Vec<(Direction, Hrir)>> {
    dirs.iter()
        .map(|&d| {
            let dir = bundle.grid[d];
            let h = generate_hrir(ckpt, slot, &dir, itd, bundle.sample_rate).map_err(|e| cvae("generating", e))?;
            Ok((dir, h))
        })
        .collect()
}

pub fn itd_table(ckpt: &Checkpoint, bundle: &HrtfBundle) -> Result<ItdTable> {
    if let Some(&s) = ckpt.roster.iter().find(|&&s| s >= bundle.n_subjects()) {
        return Err(user(format!("checkpoint subject {s} missing from bundle")));
    }
    ItdTable::from_bundle(bundle, &ckpt.roster).internal("ITD table")
}

pub fn train(run: &Run, a: &LocTrainArgs) -> Result<()> {
    let bundle = read_bundle(&a.bundle)?;
    let dirs = ring(&bundle, &a.ring)?;
    let mut corpus: Vec<Sample> = Vec::new();
    let mut itd_factor = None;
    match &a.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path).map_err(|e| cvae(&format!("reading {}", path.display()), e))?;
            let table = itd_table(&ckpt, &bundle)?;
            let itd = match &a.session {
                Some(dir) => {
                    let s = checked_sparse(dir)?;
                    // same estimator as the table, not the pipeline's low-passed one
                    let measured = s
                        .measurements
                        .iter()
                        .map(|m| Ok((m.direction, itd_estimate(&m.hrir.left, &m.hrir.right, m.hrir.sample_rate).internal("ITD")?)))
                        .collect::<Result<Vec<(Direction, f64)>>>()?;
                    ItdModel::fit(table, &measured).internal("fitting ITD scale")?
                }
                None => ItdModel { table, factor: a.itd_factor },
            };
            itd_factor = Some(itd.factor);
            let hrirs = generated_hrirs(&ckpt, a.slot, &itd, &bundle, &dirs)?;
            corpus = render_corpus(&hrirs, a.ring.per_direction, derive_seed(run.seed, 0)).internal("rendering corpus")?;
        }
        None => {
            if a.subjects.is_empty() {
                return Err(user("give --subjects or --checkpoint"));
            }
            for (k, &s) in a.subjects.iter().enumerate() {
                check_subject(&bundle, s)?;
                let hrirs = truth_hrirs(&bundle, s, &dirs);
                corpus.extend(
                    render_corpus(&hrirs, a.ring.per_direction, derive_seed(run.seed, k as u64))
                        .internal("rendering corpus")?,
                );
            }
        }
    }
    let cfg = LocalizerConfig {
        hidden: a.hidden,
        layers: a.layers,
        dropout: a.dropout,
        lr: a.lr,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: run.seed,
    };
    let model = match &a.base {
        Some(path) => {
            let base = load_localizer(path).user(&format!("reading localizer {}", path.display()))?;
            adapt_localizer(&base, &corpus, &cfg).user("adapting localizer")?
        }
        None => train_localizer(&corpus, &cfg).user("training localizer")?,
    };
    save_localizer(&model, &a.output).user(&format!("writing {}", a.output.display()))?;
    let ev = evaluate(&model, &corpus).internal("evaluating")?;
    run.write_metrics(
        &["set", "samples", "mean_error_deg", "accuracy"],
        &[vec!["train".into(), corpus.len().to_string(), num(ev.mean_error), num(ev.accuracy)]],
    )?;
    run.write_manifest(
        json!({
            "bundle": path_str(&a.bundle),
            "subjects": a.subjects,
            "checkpoint": a.checkpoint.as_deref().map(path_str),
            "slot": a.checkpoint.as_ref().map(|_| slot_label(a.slot)),
            "session": a.session.as_deref().map(path_str),
            "base": a.base.as_deref().map(path_str),
            "elevations": a.ring.elevations,
            "per_direction": a.ring.per_direction,
            "localizer": {
                "hidden": cfg.hidden, "layers": cfg.layers, "dropout": cfg.dropout,
                "lr": cfg.lr, "batch_size": cfg.batch_size, "epochs": cfg.epochs,
            },
            "output": path_str(&a.output),
        }),
        json!({
            "samples": corpus.len(),
            "itd_factor": itd_factor,
            "train_mean_error_deg": ev.mean_error,
            "train_accuracy": ev.accuracy,
        }),
    )
}

pub fn eval(run: &Run, a: &LocEvalArgs) -> Result<()> {
    let model = load_localizer(&a.model).user(&format!("reading localizer {}", a.model.display()))?;
    let bundle = read_bundle(&a.bundle)?;
    check_subject(&bundle, a.subject)?;
    let dirs = ring(&bundle, &a.ring)?;
    let corpus = render_corpus(&truth_hrirs(&bundle, a.subject, &dirs), a.ring.per_direction, derive_seed(run.seed, 1))
        .internal("rendering corpus")?;
    let ev = evaluate(&model, &corpus).internal("evaluating")?;

    let mut by_class: std::collections::BTreeMap<usize, (Vec<f64>, Vec<f64>)> = Default::default();
    for s in &corpus {
        let (class, _) = model.predict_azimuth(&s.feature).internal("predicting")?;
        let e = by_class.entry(s.class).or_default();
        e.0.push(class_azimuth(s.class));
        e.1.push(class_azimuth(class));
    }
    let mut rows = Vec::with_capacity(by_class.len());
    for (class, (truth, pred)) in &by_class {
        let err = error_metric(truth, pred).internal("error metric")?;
        let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
        rows.push(vec![num(class_azimuth(*class)), truth.len().to_string(), hits.to_string(), num(err)]);
    }
    run.write_metrics(&["azimuth_deg", "samples", "correct", "mean_error_deg"], &rows)?;
    println!("mean azimuth error {:.2} deg, accuracy {:.3}", ev.mean_error, ev.accuracy);
    run.write_manifest(
        json!({
            "model": path_str(&a.model),
            "bundle": path_str(&a.bundle),
            "subject": a.subject,
            "elevations": a.ring.elevations,
            "per_direction": a.ring.per_direction,
        }),
        json!({ "samples": corpus.len(), "mean_error_deg": ev.mean_error, "accuracy": ev.accuracy }),
    )
}
