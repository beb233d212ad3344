use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::data::{normalized_pair, TrainingSet};
use super::{Checkpoint, CheckpointMeta, Cvae, CvaeError, ModelConfig, Result, TrainConfig, LATENT, OUTPUT_LEN};
use crate::dataset::{encode_direction, normalize, subject_vector, Direction, HrtfBundle, NormRange, N_BASIS};
use crate::numerics::{standard_normal, AdamConfig, AdamState, Graph, Tensor};

/// One measured direction of a new subject: 128 left then 128 right dB
/// magnitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMeasurement {
    pub direction: Direction,
    pub magnitudes_db: Vec<f64>,
}

/// Trains the default architecture on every subject in `bundle`.
pub fn train(bundle: &HrtfBundle, cfg: &TrainConfig) -> Result<Checkpoint> {
    train_with(bundle, ModelConfig::new(bundle.n_subjects()), cfg)
}

pub fn train_with(bundle: &HrtfBundle, model_cfg: ModelConfig, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let n = bundle.n_subjects();
    if n < 2 {
        return Err(CvaeError::TooFewSubjects(n));
    }
    if model_cfg.n_train != n {
        return Err(CvaeError::Config(format!(
            "model has {} training slots for {n} subjects",
            model_cfg.n_train
        )));
    }
    let norm = NormRange::default();
    let roster: Vec<usize> = (0..n).collect();
    let data = TrainingSet::new(bundle, &roster, norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Cvae::new(model_cfg, &mut rng)?;
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..data.n_pairs()).collect();
    let mut history = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = data.batch(chunk)?;
            let eps = standard_normal(&[chunk.len(), LATENT], &mut rng);
            let (g, loss, parts) = model.loss_graph(&batch, cfg.beta, eps)?;
            model.params.zero_grad();
            g.backward(loss, &mut model.params)?;
            adam.step(&mut model.params);
            sum += parts.total * chunk.len() as f64;
        }
        history.push(sum / data.n_pairs() as f64);
    }
    let meta = CheckpointMeta {
        seed: cfg.seed,
        iterations: cfg.iterations,
        beta: cfg.beta,
        adapted: false,
        adaptation_measurements: 0,
        loss_history: history,
    };
    Checkpoint::new(model, norm, roster, meta)
}

/// Decoder rows used during adaptation.
struct Rows {
    subject: Vec<f64>,
    direction: Vec<f64>,
    target: Vec<f64>,
    weight: Vec<f64>,
}

impl Rows {
    fn new() -> Self {
        Self {
            subject: Vec::new(),
            direction: Vec::new(),
            target: Vec::new(),
            weight: Vec::new(),
        }
    }

    fn push(&mut self, subject: &[f64], direction: &[f64; N_BASIS], target: &[f64], weight: f64) {
        self.subject.extend_from_slice(subject);
        self.direction.extend_from_slice(direction);
        self.target.extend_from_slice(target);
        self.weight.extend(std::iter::repeat(weight).take(OUTPUT_LEN));
    }
}

/// Fine-tunes the decoder on a new subject's sparse measurements in the
/// reserved slot, interleaved with replayed pairs from `bundle`.
pub fn individualize(
    ckpt: &Checkpoint,
    sparse: &[SparseMeasurement],
    bundle: &HrtfBundle,
    cfg: &TrainConfig,
) -> Result<Checkpoint> {
    cfg.validate()?;
    if sparse.is_empty() {
        return Err(CvaeError::EmptySparse);
    }
    let n_train = ckpt.model.config.n_train;
    if let Some(&s) = ckpt.roster.iter().find(|&&s| s >= bundle.n_subjects()) {
        return Err(CvaeError::UnknownSubject(s));
    }
    let norm = ckpt.norm;
    let reserved = subject_vector(n_train, None);
    let mut new_rows = Vec::with_capacity(sparse.len());
    for m in sparse {
        if m.magnitudes_db.len() != OUTPUT_LEN || m.magnitudes_db.iter().any(|v| !v.is_finite()) {
            return Err(CvaeError::Config(format!(
                "sparse measurement at {:?} needs {OUTPUT_LEN} finite magnitudes",
                m.direction
            )));
        }
        let target: Vec<f64> = m.magnitudes_db.iter().map(|&v| normalize(v, norm)).collect();
        new_rows.push((encode_direction(&m.direction).weights, target));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_ada7);
    let n_dirs = bundle.grid.len();
    let n_pairs = n_train * n_dirs;
    let pool_len = ((n_pairs as f64 * cfg.replay_fraction).round() as usize).clamp(1, n_pairs);
    let picks = rand::seq::index::sample(&mut rng, n_pairs, pool_len).into_vec();
    let mut pool = Vec::with_capacity(pool_len);
    for p in picks {
        let (slot, d) = (p / n_dirs, p % n_dirs);
        pool.push((
            subject_vector(n_train, Some(slot)),
            encode_direction(&bundle.grid[d]).weights,
            normalized_pair(bundle, ckpt.roster[slot], d, norm)?,
        ));
    }

    let batch = cfg.batch_size.max(2);
    let new_per_batch = new_rows.len().min(batch / 2);
    let replay_per_batch = batch - new_per_batch;
    let mut model = ckpt.model.clone();
    let decoder = model.decoder_ids();
    let mut adam = AdamState::new(&model.params, AdamConfig::with_lr(cfg.adaptation_lr));
    let mut new_order: Vec<usize> = (0..new_rows.len()).collect();
    let mut new_cursor = new_rows.len();
    let mut history = Vec::with_capacity(cfg.adaptation_iterations);
    for _ in 0..cfg.adaptation_iterations {
        pool.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut steps = 0;
        for chunk in pool.chunks(replay_per_batch) {
            let mut rows = Rows::new();
            for _ in 0..new_per_batch {
                if new_cursor == new_order.len() {
                    new_order.shuffle(&mut rng);
                    new_cursor = 0;
                }
                let (d, t) = &new_rows[new_order[new_cursor]];
                new_cursor += 1;
                rows.push(&reserved, d, t, cfg.new_subject_weight);
            }
            for (s, d, t) in chunk {
                rows.push(s, d, t, 1.0);
            }
            let n = rows.weight.len() / OUTPUT_LEN;
            let mut g = Graph::new();
            let z = g.input(standard_normal(&[n, LATENT], &mut rng));
            let s = g.input(Tensor::new(vec![n, n_train + 1], rows.subject)?);
            let d = g.input(Tensor::new(vec![n, N_BASIS], rows.direction)?);
            let out = model.decode_graph(&mut g, z, s, d)?;
            let target = g.input(Tensor::new(vec![n, OUTPUT_LEN], rows.target)?);
            let weight = g.input(Tensor::new(vec![n, OUTPUT_LEN], rows.weight)?);
            let diff = g.sub(out, target)?;
            let sq = g.square(diff);
            let weighted = g.mul(sq, weight)?;
            let loss = g.mean(weighted);
            model.params.zero_grad();
            g.backward(loss, &mut model.params)?;
            adam.step_subset(&mut model.params, &decoder);
            sum += g.value(loss).item();
            steps += 1;
        }
        history.push(sum / steps as f64);
    }
    let mut meta = ckpt.meta.clone();
    meta.adapted = true;
    meta.adaptation_measurements = sparse.len();
    meta.loss_history.extend(history);
    Checkpoint::new(model, norm, ckpt.roster.clone(), meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvae::{DecoderConfig, EncoderConfig};
    use crate::dataset::synth_bundle;

    fn small_grid() -> Vec<Direction> {
        (0..50)
            .map(|k| Direction::new(-180.0 + 7.2 * (k + 1) as f64, -30.0 + 15.0 * (k % 5) as f64))
            .collect()
    }

    fn small_config(n: usize) -> ModelConfig {
        ModelConfig {
            n_train: n,
            encoder: EncoderConfig {
                conv_channels: [2, 1],
                subject_embed: 8,
                hidden: 32,
            },
            decoder: DecoderConfig { hidden: 32 },
        }
    }

    #[test]
    fn smoke_training_halves_loss() {
        let (bundle, _) = synth_bundle(2, &small_grid(), 44_100.0, 3).unwrap();
        let cfg = TrainConfig {
            iterations: 200,
            lr: 1e-3,
            seed: 5,
            ..TrainConfig::default()
        };
        let ckpt = train_with(&bundle, small_config(2), &cfg).unwrap();
        let h = &ckpt.meta.loss_history;
        assert_eq!(h.len(), 200);
        assert!(h[199] < 0.5 * h[0], "{} -> {}", h[0], h[199]);
    }

    #[test]
    fn training_is_deterministic() {
        let (bundle, _) = synth_bundle(2, &small_grid(), 44_100.0, 4).unwrap();
        let cfg = TrainConfig {
            iterations: 3,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_with(&bundle, small_config(2), &cfg).unwrap();
        let b = train_with(&bundle, small_config(2), &cfg).unwrap();
        assert_eq!(a.model.params.flat_values(), b.model.params.flat_values());
        assert_eq!(a.meta, b.meta);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (bundle, _) = synth_bundle(2, &small_grid(), 44_100.0, 4).unwrap();
        let one = bundle.subset(&[0]);
        let cfg = TrainConfig {
            iterations: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(train(&one, &cfg), Err(CvaeError::TooFewSubjects(1))));
        assert!(train_with(&bundle, small_config(3), &cfg).is_err());
        let ckpt = train_with(&bundle, small_config(2), &cfg).unwrap();
        assert!(matches!(
            individualize(&ckpt, &[], &bundle, &cfg),
            Err(CvaeError::EmptySparse)
        ));
    }

    #[test]
    fn adaptation_leaves_encoder_untouched() {
        let grid = small_grid();
        let (bundle, _) = synth_bundle(3, &grid, 44_100.0, 6).unwrap();
        let train_set = bundle.subset(&[0, 1]);
        let cfg = TrainConfig {
            iterations: 2,
            adaptation_iterations: 3,
            ..TrainConfig::default()
        };
        let ckpt = train_with(&train_set, small_config(2), &cfg).unwrap();
        let sparse: Vec<SparseMeasurement> = (0..5)
            .map(|d| {
                let h = bundle.hrir(2, d * 7);
                let mut m = crate::dsp::magnitude_spectrum(&h.left).unwrap();
                m.extend(crate::dsp::magnitude_spectrum(&h.right).unwrap());
                SparseMeasurement {
                    direction: grid[d * 7],
                    magnitudes_db: m,
                }
            })
            .collect();
        let adapted = individualize(&ckpt, &sparse, &train_set, &cfg).unwrap();
        for id in ckpt.model.encoder_ids() {
            let a = ckpt.model.params.value(id).data();
            let b = adapted.model.params.value(id).data();
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert!(ckpt
            .model
            .decoder_ids()
            .iter()
            .any(|&id| ckpt.model.params.value(id) != adapted.model.params.value(id)));
        assert!(adapted.meta.adapted);
        assert_eq!(adapted.meta.adaptation_measurements, 5);
        assert_eq!(adapted.meta.loss_history.len(), 5);
    }
}
