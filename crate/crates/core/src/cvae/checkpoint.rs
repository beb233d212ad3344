use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Cvae, CvaeError, DecoderConfig, EncoderConfig, ModelConfig, Result, LATENT};
use crate::dataset::{basis_directions, NormRange};
use crate::numerics::{ParamSet, Tensor};

const MAGIC: &[u8] = b"HRCK1\n";

/// Training provenance stored alongside the weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub iterations: usize,
    pub beta: f64,
    pub adapted: bool,
    pub adaptation_measurements: usize,
    /// Mean training loss per pass.
    pub loss_history: Vec<f64>,
}

/// Trained weights plus everything needed to interpret them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Cvae,
    pub norm: NormRange,
    /// Bundle subject index for each training slot.
    pub roster: Vec<usize>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    /// Rounds the weights to `f32` so a save/load cycle is exact.
    pub fn new(mut model: Cvae, norm: NormRange, roster: Vec<usize>, meta: CheckpointMeta) -> Result<Self> {
        if roster.len() != model.config.n_train {
            return Err(CvaeError::Config(format!(
                "roster of {} for {} training slots",
                roster.len(),
                model.config.n_train
            )));
        }
        model.params.round_to_f32();
        model.params.zero_grad();
        Ok(Self { model, norm, roster, meta })
    }
}

fn join<T: ToString>(xs: impl IntoIterator<Item = T>) -> String {
    xs.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let cfg = &ckpt.model.config;
    let meta = &ckpt.meta;
    let params = &ckpt.model.params;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    writeln!(out, "n_train={}", cfg.n_train)?;
    writeln!(out, "conv_channels={}", join(cfg.encoder.conv_channels))?;
    writeln!(out, "subject_embed={}", cfg.encoder.subject_embed)?;
    writeln!(out, "encoder_hidden={}", cfg.encoder.hidden)?;
    writeln!(out, "decoder_hidden={}", cfg.decoder.hidden)?;
    writeln!(out, "latent={LATENT}")?;
    writeln!(out, "norm_db={} {}", ckpt.norm.lo_db, ckpt.norm.hi_db)?;
    writeln!(out, "seed={}", meta.seed)?;
    writeln!(out, "iterations={}", meta.iterations)?;
    writeln!(out, "beta={}", meta.beta)?;
    writeln!(out, "adapted={}", meta.adapted)?;
    writeln!(out, "adaptation_measurements={}", meta.adaptation_measurements)?;
    writeln!(out, "num_params={}", params.num_scalars())?;
    writeln!(out, "roster={}", join(&ckpt.roster))?;
    writeln!(out, "loss_history={}", join(meta.loss_history.iter().map(|v| format!("{v:e}"))))?;
    let basis = basis_directions();
    writeln!(
        out,
        "basis={}",
        join(basis.iter().map(|d| format!("{:.6},{:.6}", d.azimuth, d.elevation)))
    )?;
    writeln!(out, "tensors={}", params.len())?;
    for id in params.ids() {
        writeln!(out, "{} {}", params.name(id), join(params.value(id).shape()))?;
    }
    out.push(b'\n');
    let flat = params.flat_values();
    for v in &flat {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(flat.len() as u64 * 4).to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

fn perr(section: &'static str, msg: String) -> CvaeError {
    CvaeError::Parse { section, msg }
}

fn take_line<'a>(bytes: &mut &'a [u8], section: &'static str) -> Result<&'a str> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(CvaeError::Truncated(section))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| perr(section, "not UTF-8".into()))?;
    *bytes = &bytes[end + 1..];
    Ok(line)
}

fn field<'a>(bytes: &mut &'a [u8], key: &str) -> Result<&'a str> {
    let line = take_line(bytes, "header")?;
    match line.split_once('=') {
        Some((k, v)) if k == key => Ok(v),
        _ => Err(perr("header", format!("expected `{key}=...`, found `{line}`"))),
    }
}

fn parse<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.parse().map_err(|_| perr("header", format!("bad value for {key}: `{v}`")))
}

fn parse_list<T: std::str::FromStr>(v: &str, key: &str) -> Result<Vec<T>> {
    v.split_whitespace().map(|x| parse(x, key)).collect()
}

fn value<T: std::str::FromStr>(bytes: &mut &[u8], key: &str) -> Result<T> {
    let v = field(bytes, key)?;
    parse(v, key)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let raw = fs::read(path)?;
    let mut rest: &[u8] = &raw;
    if rest.len() < MAGIC.len() {
        return Err(CvaeError::Truncated("magic"));
    }
    if &rest[..MAGIC.len()] != MAGIC {
        return Err(perr("magic", "not an HRCK1 checkpoint".into()));
    }
    rest = &rest[MAGIC.len()..];
    let n_train: usize = value(&mut rest, "n_train")?;
    let conv: Vec<usize> = parse_list(field(&mut rest, "conv_channels")?, "conv_channels")?;
    let conv_channels: [usize; 2] = conv
        .try_into()
        .map_err(|_| perr("header", "conv_channels needs two values".into()))?;
    let subject_embed = value(&mut rest, "subject_embed")?;
    let encoder_hidden = value(&mut rest, "encoder_hidden")?;
    let decoder_hidden = value(&mut rest, "decoder_hidden")?;
    let latent: usize = value(&mut rest, "latent")?;
    if latent != LATENT {
        return Err(perr("header", format!("latent size {latent}, expected {LATENT}")));
    }
    let norm: Vec<f64> = parse_list(field(&mut rest, "norm_db")?, "norm_db")?;
    let [lo_db, hi_db]: [f64; 2] = norm
        .try_into()
        .map_err(|_| perr("header", "norm_db needs two values".into()))?;
    let seed = value(&mut rest, "seed")?;
    let iterations = value(&mut rest, "iterations")?;
    let beta = value(&mut rest, "beta")?;
    let adapted = value(&mut rest, "adapted")?;
    let adaptation_measurements = value(&mut rest, "adaptation_measurements")?;
    let num_params: usize = value(&mut rest, "num_params")?;
    let roster = parse_list(field(&mut rest, "roster")?, "roster")?;
    let loss_history = parse_list(field(&mut rest, "loss_history")?, "loss_history")?;
    let basis = field(&mut rest, "basis")?;
    if basis.split_whitespace().count() != basis_directions().len() {
        return Err(perr("header", "basis must list 26 directions".into()));
    }
    let n_tensors: usize = value(&mut rest, "tensors")?;
    let mut params = ParamSet::new();
    for _ in 0..n_tensors {
        let line = take_line(&mut rest, "tensors")?;
        let mut it = line.split_whitespace();
        let name = it.next().ok_or_else(|| perr("tensors", "empty tensor line".into()))?;
        let shape: Vec<usize> = it.map(|x| parse(x, name)).collect::<Result<_>>()?;
        params.add(name, Tensor::zeros(&shape))?;
    }
    if !take_line(&mut rest, "tensors")?.is_empty() {
        return Err(perr("tensors", "missing blank line after tensor list".into()));
    }
    if params.num_scalars() != num_params {
        return Err(perr(
            "tensors",
            format!("tensor shapes give {} values, header says {num_params}", params.num_scalars()),
        ));
    }
    let payload_bytes = num_params * 4;
    if rest.len() < payload_bytes {
        return Err(CvaeError::Truncated("payload"));
    }
    if rest.len() < payload_bytes + 8 {
        return Err(CvaeError::Truncated("trailer"));
    }
    if rest.len() > payload_bytes + 8 {
        return Err(perr("trailer", format!("{} unexpected trailing bytes", rest.len() - payload_bytes - 8)));
    }
    let stated = u64::from_le_bytes(rest[payload_bytes..].try_into().expect("8 bytes"));
    if stated != payload_bytes as u64 {
        return Err(CvaeError::Checksum {
            stated,
            found: payload_bytes as u64,
        });
    }
    let flat: Vec<f64> = rest[..payload_bytes]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(perr("payload", "non-finite parameter".into()));
    }
    params.load_flat(&flat)?;
    let config = ModelConfig {
        n_train,
        encoder: EncoderConfig {
            conv_channels,
            subject_embed,
            hidden: encoder_hidden,
        },
        decoder: DecoderConfig { hidden: decoder_hidden },
    };
    let model = Cvae::from_params(config, params)?;
    let meta = CheckpointMeta {
        seed,
        iterations,
        beta,
        adapted,
        adaptation_measurements,
        loss_history,
    };
    Checkpoint::new(model, NormRange { lo_db, hi_db }, roster, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{encode_direction, subject_vector, Direction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = Cvae::new(ModelConfig::new(3), &mut rng).unwrap();
        let meta = CheckpointMeta {
            seed: 11,
            iterations: 4,
            beta: 1e-3,
            adapted: false,
            adaptation_measurements: 0,
            loss_history: vec![0.25, 0.125, 0.1 / 3.0, 0.01],
        };
        Checkpoint::new(model, NormRange::default(), vec![0, 2, 5], meta).unwrap()
    }

    #[test]
    fn round_trip_preserves_outputs_bitwise() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, ckpt);
        let z: Vec<f64> = (0..LATENT).map(|i| (i as f64 - 16.0) / 10.0).collect();
        let d = encode_direction(&Direction::new(-40.0, 20.0));
        for slot in [Some(1), None] {
            let s = subject_vector(3, slot);
            let a = ckpt.model.decode(&z, &s, &d).unwrap();
            let b = back.model.decode(&z, &s, &d).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let again = dir.path().join("n.ckpt");
        save_checkpoint(&back, &again).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn header_lists_parameter_count() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let raw = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&raw[..2000]);
        assert!(text.contains(&format!("num_params={}\n", ckpt.model.num_params())));
    }

    #[test]
    fn truncation_and_corruption_detected() {
        let ckpt = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let raw = fs::read(&path).unwrap();
        let cut = dir.path().join("cut.ckpt");
        fs::write(&cut, &raw[..raw.len() - 100]).unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(CvaeError::Truncated(_))));
        let mut bad = raw.clone();
        let n = bad.len();
        bad[n - 8] ^= 1;
        fs::write(&cut, &bad).unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(CvaeError::Checksum { .. })));
        fs::write(&cut, b"HRTB1\n").unwrap();
        assert!(matches!(load_checkpoint(&cut), Err(CvaeError::Parse { .. })));
    }

    #[test]
    fn roster_must_match_slots() {
        let ckpt = sample();
        assert!(Checkpoint::new(ckpt.model, NormRange::default(), vec![0], ckpt.meta).is_err());
    }
}
