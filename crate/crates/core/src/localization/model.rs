use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{class_azimuth, error_metric, BinauralFeature, LocalizationError, Result, Sample, FEATURE_LEN, N_CLASSES, N_LAGS};
use crate::numerics::{uniform_init, AdamConfig, AdamState, Graph, ParamId, ParamSet, Tensor, Var};

/// ILD enters the network divided by this, bringing it near the range of
/// the correlation values.
const ILD_SCALE_DB: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalizerConfig {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            hidden: 500,
            layers: 4,
            dropout: 0.2,
            lr: 1e-3,
            batch_size: 64,
            epochs: 30,
            seed: 0,
        }
    }
}

impl LocalizerConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.hidden > 0
            && self.layers > 0
            && (0.0..1.0).contains(&self.dropout)
            && self.lr > 0.0
            && self.batch_size > 0;
        if !ok {
            return Err(LocalizationError::Invalid(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Fully connected azimuth classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Localizer {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub params: ParamSet,
    ids: Vec<(ParamId, ParamId)>,
}

pub(crate) fn layer_shapes(hidden: usize, layers: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(layers + 1);
    let mut width = FEATURE_LEN;
    for _ in 0..layers {
        out.push((width, hidden));
        width = hidden;
    }
    out.push((width, N_CLASSES));
    out
}

pub(crate) fn layer_name(i: usize, layers: usize) -> String {
    if i == layers {
        "out".into()
    } else {
        format!("hidden{i}")
    }
}

fn input_row(f: &BinauralFeature, out: &mut Vec<f64>) {
    out.extend_from_slice(&f.rc);
    out.push(f.ild / ILD_SCALE_DB);
}

impl Localizer {
    pub fn new(cfg: &LocalizerConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamSet::new();
        for (i, (fan_in, fan_out)) in layer_shapes(cfg.hidden, cfg.layers).into_iter().enumerate() {
            let name = layer_name(i, cfg.layers);
            params.add(&format!("{name}.w"), uniform_init(&[fan_in, fan_out], fan_in, fan_out, &mut rng))?;
            params.add(&format!("{name}.b"), Tensor::zeros(&[fan_out]))?;
        }
        Self::from_params(cfg.hidden, cfg.layers, cfg.dropout, params)
    }

    pub(crate) fn from_params(hidden: usize, layers: usize, dropout: f64, params: ParamSet) -> Result<Self> {
        let mut ids = Vec::with_capacity(layers + 1);
        for (i, (fan_in, fan_out)) in layer_shapes(hidden, layers).into_iter().enumerate() {
            let name = layer_name(i, layers);
            let find = |suffix: &str, shape: &[usize]| {
                let full = format!("{name}.{suffix}");
                match params.id(&full) {
                    Some(id) if params.value(id).shape() == shape => Ok(id),
                    _ => Err(LocalizationError::Invalid(format!("missing or misshapen parameter {full}"))),
                }
            };
            ids.push((find("w", &[fan_in, fan_out])?, find("b", &[fan_out])?));
        }
        if params.len() != ids.len() * 2 {
            return Err(LocalizationError::Invalid("unexpected extra parameters".into()));
        }
        Ok(Self {
            hidden,
            layers,
            dropout,
            params,
            ids,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    fn forward(&self, g: &mut Graph, x: Var, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let mut h = x;
        let mut rng = rng;
        for (i, &(w, b)) in self.ids.iter().enumerate() {
            let wv = g.param(&self.params, w);
            let bv = g.param(&self.params, b);
            h = g.linear(h, wv, bv)?;
            if i < self.layers {
                h = g.relu(h);
                if let Some(r) = rng.as_deref_mut() {
                    h = g.dropout(h, self.dropout, r)?;
                }
            }
        }
        Ok(h)
    }

    fn inputs(features: &[BinauralFeature]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(features.len() * FEATURE_LEN);
        for f in features {
            if f.rc.len() != N_LAGS {
                return Err(LocalizationError::Invalid(format!("feature with {} lags", f.rc.len())));
            }
            input_row(f, &mut data);
        }
        Ok(Tensor::new(vec![features.len(), FEATURE_LEN], data)?)
    }

    /// Class scores without dropout, one row of 72 per feature.
    pub fn logits(&self, features: &[BinauralFeature]) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.input(Self::inputs(features)?);
        let out = self.forward(&mut g, x, None)?;
        Ok(g.value(out).clone())
    }

    /// Cross-entropy tape without dropout.
    pub fn loss_graph(&self, features: &[BinauralFeature], labels: &[usize]) -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        let x = g.input(Self::inputs(features)?);
        let out = self.forward(&mut g, x, None)?;
        let loss = g.softmax_cross_entropy(out, labels)?;
        Ok((g, loss))
    }

    /// Most likely class and its bin-centre azimuth in [0°, 360°).
    pub fn predict_azimuth(&self, feature: &BinauralFeature) -> Result<(usize, f64)> {
        let logits = self.logits(std::slice::from_ref(feature))?;
        let row = logits.data();
        let class = (0..N_CLASSES)
            .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
            .expect("72 classes");
        Ok((class, class_azimuth(class)))
    }

    fn fit(&mut self, corpus: &[Sample], cfg: &LocalizerConfig) -> Result<()> {
        cfg.validate()?;
        if corpus.is_empty() {
            return Err(LocalizationError::EmptyCorpus);
        }
        self.dropout = cfg.dropout;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x10ca_112e);
        let mut adam = AdamState::new(&self.params, AdamConfig::with_lr(cfg.lr));
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let mut data = Vec::with_capacity(chunk.len() * FEATURE_LEN);
                let mut labels = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    input_row(&corpus[i].feature, &mut data);
                    labels.push(corpus[i].class);
                }
                let mut g = Graph::new();
                let x = g.input(Tensor::new(vec![chunk.len(), FEATURE_LEN], data)?);
                let logits = self.forward(&mut g, x, Some(&mut rng))?;
                let loss = g.softmax_cross_entropy(logits, &labels)?;
                self.params.zero_grad();
                g.backward(loss, &mut self.params)?;
                adam.step(&mut self.params);
            }
        }
        self.params.round_to_f32();
        self.params.zero_grad();
        Ok(())
    }
}

/// Fresh classifier trained on `corpus`.
pub fn train_localizer(corpus: &[Sample], cfg: &LocalizerConfig) -> Result<Localizer> {
    if corpus.is_empty() {
        return Err(LocalizationError::EmptyCorpus);
    }
    let mut model = Localizer::new(cfg)?;
    model.fit(corpus, cfg)?;
    Ok(model)
}

/// Continues training `base` on a subject's corpus.
pub fn adapt_localizer(base: &Localizer, corpus: &[Sample], cfg: &LocalizerConfig) -> Result<Localizer> {
    let mut model = base.clone();
    model.fit(corpus, cfg)?;
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Mean circular azimuth error in degrees.
    pub mean_error: f64,
    /// Share of exactly classified samples.
    pub accuracy: f64,
}

pub fn evaluate(model: &Localizer, corpus: &[Sample]) -> Result<Evaluation> {
    if corpus.is_empty() {
        return Err(LocalizationError::EmptyCorpus);
    }
    let mut truth = Vec::with_capacity(corpus.len());
    let mut pred = Vec::with_capacity(corpus.len());
    let mut hits = 0usize;
    for chunk in corpus.chunks(512) {
        let feats: Vec<BinauralFeature> = chunk.iter().map(|s| s.feature.clone()).collect();
        let logits = model.logits(&feats)?;
        for (s, row) in chunk.iter().zip(logits.data().chunks(N_CLASSES)) {
            let class = (0..N_CLASSES)
                .max_by(|&a, &b| row[a].total_cmp(&row[b]).then(b.cmp(&a)))
                .expect("72 classes");
            hits += usize::from(class == s.class);
            truth.push(class_azimuth(s.class));
            pred.push(class_azimuth(class));
        }
    }
    Ok(Evaluation {
        mean_error: error_metric(&truth, &pred)?,
        accuracy: hits as f64 / corpus.len() as f64,
    })
}

pub fn accuracy(model: &Localizer, corpus: &[Sample]) -> Result<f64> {
    Ok(evaluate(model, corpus)?.accuracy)
}
