use rand::Rng;

use super::{CvaeError, ModelConfig, Result, DECODER_LAYERS, LATENT, OUTPUT_LEN};
use crate::dataset::{DirectionEncoding, PatchTensor, N_BASIS, PATCH_SIDE};
use crate::dsp::N_BINS;
use crate::numerics::{standard_normal, uniform_init, Graph, ParamId, ParamSet, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Ids {
    /// [ear][layer] = (kernel, bias)
    conv: [[(ParamId, ParamId); 2]; 2],
    subject: Dense,
    joint: Dense,
    direction: Dense,
    mu: Dense,
    log_var: Dense,
    hidden: Vec<Dense>,
    out: Dense,
}

/// Network weights plus the handles needed to build forward passes.
#[derive(Clone, Debug, PartialEq)]
pub struct Cvae {
    pub config: ModelConfig,
    pub params: ParamSet,
    ids: Ids,
}

/// Inputs and targets for a batch of `n` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[n, 1, 5, 5, 128]` per ear, azimuth offset × elevation offset × bin.
    pub left: Tensor,
    pub right: Tensor,
    /// `[n, n_train + 1]`
    pub subject: Tensor,
    /// `[n, 26]`
    pub direction: Tensor,
    /// `[n, 256]`, left bins then right bins.
    pub target: Tensor,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.target.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Loss split into its two terms; `total = mse + beta * kl`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mse: f64,
    pub kl: f64,
}

const EAR_NAMES: [&str; 2] = ["left", "right"];

/// Parameter names and shapes in declaration order.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let e = &cfg.encoder;
    let [c1, c2] = e.conv_channels;
    let mut out = Vec::new();
    for ear in EAR_NAMES {
        out.push((format!("enc.{ear}.conv1.k"), vec![c1, 1, 3, 3, 3]));
        out.push((format!("enc.{ear}.conv1.b"), vec![c1]));
        out.push((format!("enc.{ear}.conv2.k"), vec![c2, c1, 3, 3, 3]));
        out.push((format!("enc.{ear}.conv2.b"), vec![c2]));
    }
    let mut dense = |name: &str, i: usize, o: usize| {
        out.push((format!("{name}.w"), vec![i, o]));
        out.push((format!("{name}.b"), vec![o]));
    };
    dense("enc.subject", cfg.subject_len(), e.subject_embed);
    dense("enc.joint", 2 * c2 * N_BINS + e.subject_embed, e.hidden);
    dense("enc.direction", N_BASIS, e.hidden);
    dense("enc.mu", e.hidden, LATENT);
    dense("enc.log_var", e.hidden, LATENT);
    let h = cfg.decoder.hidden;
    let mut width = LATENT + cfg.subject_len() + N_BASIS;
    for i in 0..DECODER_LAYERS {
        dense(&format!("dec.hidden{i}"), width, h);
        width = h;
    }
    dense("dec.out", h, OUTPUT_LEN);
    out
}

fn lookup(params: &ParamSet, name: &str) -> Result<ParamId> {
    params
        .id(name)
        .ok_or_else(|| CvaeError::Config(format!("missing parameter {name}")))
}

fn dense_ids(params: &ParamSet, name: &str) -> Result<Dense> {
    Ok(Dense {
        w: lookup(params, &format!("{name}.w"))?,
        b: lookup(params, &format!("{name}.b"))?,
    })
}

impl Cvae {
    /// Fresh network with Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, shape) in layout(&config) {
            let t = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else if shape.len() == 5 {
                uniform_init(&shape, shape[1] * 27, shape[0] * 27, rng)
            } else {
                uniform_init(&shape, shape[0], shape[1], rng)
            };
            params.add(&name, t)?;
        }
        Self::from_params(config, params)
    }

    /// Wraps existing parameters, checking names and shapes against `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let want = layout(&config);
        if want.len() != params.len() {
            return Err(CvaeError::Config(format!(
                "expected {} parameter tensors, got {}",
                want.len(),
                params.len()
            )));
        }
        for ((name, shape), id) in want.iter().zip(params.ids()) {
            if params.name(id) != name || params.value(id).shape() != &shape[..] {
                return Err(CvaeError::Config(format!(
                    "parameter {} {:?} does not match {name} {shape:?}",
                    params.name(id),
                    params.value(id).shape()
                )));
            }
        }
        let mut conv = [[(ParamId(0), ParamId(0)); 2]; 2];
        for (e, ear) in EAR_NAMES.iter().enumerate() {
            for l in 0..2 {
                conv[e][l] = (
                    lookup(&params, &format!("enc.{ear}.conv{}.k", l + 1))?,
                    lookup(&params, &format!("enc.{ear}.conv{}.b", l + 1))?,
                );
            }
        }
        let ids = Ids {
            conv,
            subject: dense_ids(&params, "enc.subject")?,
            joint: dense_ids(&params, "enc.joint")?,
            direction: dense_ids(&params, "enc.direction")?,
            mu: dense_ids(&params, "enc.mu")?,
            log_var: dense_ids(&params, "enc.log_var")?,
            hidden: (0..DECODER_LAYERS)
                .map(|i| dense_ids(&params, &format!("dec.hidden{i}")))
                .collect::<Result<_>>()?,
            out: dense_ids(&params, "dec.out")?,
        };
        Ok(Self { config, params, ids })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn encoder_ids(&self) -> Vec<ParamId> {
        self.params.ids().filter(|&id| self.params.name(id).starts_with("enc.")).collect()
    }

    pub fn decoder_ids(&self) -> Vec<ParamId> {
        self.params.ids().filter(|&id| self.params.name(id).starts_with("dec.")).collect()
    }

    fn dense(&self, g: &mut Graph, d: Dense, x: Var) -> Result<Var> {
        let w = g.param(&self.params, d.w);
        let b = g.param(&self.params, d.b);
        Ok(g.linear(x, w, b)?)
    }

    fn ear_path(&self, g: &mut Graph, ear: usize, x: Var) -> Result<Var> {
        let mut h = x;
        for &(k, b) in &self.ids.conv[ear] {
            let kv = g.param(&self.params, k);
            let bv = g.param(&self.params, b);
            h = g.conv3d(h, kv, true)?;
            h = g.add_channel_bias(h, bv)?;
            h = g.elu(h);
        }
        let n = g.value(h).shape()[0];
        let width = g.value(h).len() / n.max(1);
        Ok(g.reshape(h, &[n, width])?)
    }

    /// Builds the encoder; returns `(mu, log_var)`, each `[n, 32]`.
    pub fn encode_graph(&self, g: &mut Graph, left: Var, right: Var, subject: Var, direction: Var) -> Result<(Var, Var)> {
        let l = self.ear_path(g, 0, left)?;
        let r = self.ear_path(g, 1, right)?;
        let s = self.dense(g, self.ids.subject, subject)?;
        let s = g.elu(s);
        let cat = g.concat(&[l, r, s])?;
        let h = self.dense(g, self.ids.joint, cat)?;
        let h = g.elu(h);
        let d = self.dense(g, self.ids.direction, direction)?;
        let d = g.elu(d);
        let h = g.add(h, d)?;
        let mu = self.dense(g, self.ids.mu, h)?;
        let lv = self.dense(g, self.ids.log_var, h)?;
        Ok((mu, lv))
    }

    /// Builds the decoder; returns `[n, 256]` values in (0, 1).
    pub fn decode_graph(&self, g: &mut Graph, z: Var, subject: Var, direction: Var) -> Result<Var> {
        let mut h = g.concat(&[z, subject, direction])?;
        for &d in &self.ids.hidden {
            h = self.dense(g, d, h)?;
            h = g.elu(h);
        }
        let out = self.dense(g, self.ids.out, h)?;
        Ok(g.sigmoid(out))
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let n = batch.len();
        let ear = [n, 1, PATCH_SIDE, PATCH_SIDE, N_BINS];
        let ok = batch.left.shape() == ear
            && batch.right.shape() == ear
            && batch.subject.shape() == [n, self.config.subject_len()]
            && batch.direction.shape() == [n, N_BASIS]
            && batch.target.shape() == [n, OUTPUT_LEN];
        if !ok {
            return Err(CvaeError::Config(format!(
                "batch shapes {:?} {:?} {:?} {:?} do not fit the model",
                batch.left.shape(),
                batch.subject.shape(),
                batch.direction.shape(),
                batch.target.shape()
            )));
        }
        Ok(())
    }

    /// Full loss graph with caller-supplied reparameterisation noise
    /// `[n, 32]`. Returns the graph, the loss node and its two terms.
    pub fn loss_graph(&self, batch: &Batch, beta: f64, eps: Tensor) -> Result<(Graph, Var, LossParts)> {
        self.check_batch(batch)?;
        let mut g = Graph::new();
        let left = g.input(batch.left.clone());
        let right = g.input(batch.right.clone());
        let subject = g.input(batch.subject.clone());
        let direction = g.input(batch.direction.clone());
        let (mu, lv) = self.encode_graph(&mut g, left, right, subject, direction)?;
        let z = g.reparameterize_with(mu, lv, eps)?;
        let out = self.decode_graph(&mut g, z, subject, direction)?;
        let mse = g.mse(out, batch.target.clone())?;
        let kl = g.gaussian_kl(mu, lv)?;
        let kl_scaled = g.scale(kl, beta);
        let loss = g.add(mse, kl_scaled)?;
        let parts = LossParts {
            total: g.value(loss).item(),
            mse: g.value(mse).item(),
            kl: g.value(kl).item(),
        };
        Ok((g, loss, parts))
    }

    /// Loss of `batch` with fresh latent noise.
    pub fn loss<R: Rng + ?Sized>(&self, batch: &Batch, beta: f64, rng: &mut R) -> Result<LossParts> {
        let eps = standard_normal(&[batch.len(), LATENT], rng);
        Ok(self.loss_graph(batch, beta, eps)?.2)
    }

    /// `(mu, log_var)` for one patch.
    pub fn encode(&self, patch: &PatchTensor, subject: &[f64], direction: &DirectionEncoding) -> Result<(Vec<f64>, Vec<f64>)> {
        let half = PATCH_SIDE * PATCH_SIDE * N_BINS;
        if patch.values.len() != 2 * half {
            return Err(CvaeError::Config(format!("patch has {} values", patch.values.len())));
        }
        if subject.len() != self.config.subject_len() {
            return Err(CvaeError::Config(format!("subject vector of length {}", subject.len())));
        }
        let shape = [1, 1, PATCH_SIDE, PATCH_SIDE, N_BINS];
        let mut g = Graph::new();
        let l = g.input(Tensor::new(shape.to_vec(), patch.values[..half].to_vec())?);
        let r = g.input(Tensor::new(shape.to_vec(), patch.values[half..].to_vec())?);
        let s = g.input(Tensor::new(vec![1, subject.len()], subject.to_vec())?);
        let d = g.input(Tensor::new(vec![1, N_BASIS], direction.weights.to_vec())?);
        let (mu, lv) = self.encode_graph(&mut g, l, r, s, d)?;
        Ok((g.value(mu).data().to_vec(), g.value(lv).data().to_vec()))
    }

    /// Decoder output for rows of `z`, subject vectors and direction weights.
    pub fn decode_batch(&self, z: Tensor, subject: Tensor, direction: Tensor) -> Result<Tensor> {
        let n = z.shape()[0];
        if z.shape() != [n, LATENT] || subject.shape() != [n, self.config.subject_len()] || direction.shape() != [n, N_BASIS] {
            return Err(CvaeError::Config(format!(
                "decoder inputs {:?} {:?} {:?}",
                z.shape(),
                subject.shape(),
                direction.shape()
            )));
        }
        let mut g = Graph::new();
        let z = g.input(z);
        let s = g.input(subject);
        let d = g.input(direction);
        let out = self.decode_graph(&mut g, z, s, d)?;
        Ok(g.value(out).clone())
    }

    /// Decoder output for a single latent code.
    pub fn decode(&self, z: &[f64], subject: &[f64], direction: &DirectionEncoding) -> Result<Vec<f64>> {
        if z.len() != LATENT || subject.len() != self.config.subject_len() {
            return Err(CvaeError::Config(format!(
                "latent of length {} and subject vector of length {}",
                z.len(),
                subject.len()
            )));
        }
        let out = self.decode_batch(
            Tensor::new(vec![1, LATENT], z.to_vec())?,
            Tensor::new(vec![1, subject.len()], subject.to_vec())?,
            Tensor::new(vec![1, N_BASIS], direction.weights.to_vec())?,
        )?;
        Ok(out.into_data())
    }
}
