use std::fs;
use std::io::Write;
use std::path::Path;

use super::model::layer_shapes;
use super::{LocalizationError, Localizer, Result};
use crate::numerics::{ParamSet, Tensor};

const MAGIC: &[u8] = b"HRLC1\n";

pub fn save_localizer(model: &Localizer, path: impl AsRef<Path>) -> Result<()> {
    let p = &model.params;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    writeln!(out, "hidden={}", model.hidden)?;
    writeln!(out, "layers={}", model.layers)?;
    writeln!(out, "dropout={}", model.dropout)?;
    writeln!(out, "num_params={}", p.num_scalars())?;
    writeln!(out, "tensors={}", p.len())?;
    for id in p.ids() {
        let shape: Vec<String> = p.value(id).shape().iter().map(usize::to_string).collect();
        writeln!(out, "{} {}", p.name(id), shape.join(" "))?;
    }
    out.push(b'\n');
    let flat = p.flat_values();
    for v in &flat {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.extend_from_slice(&(flat.len() as u64 * 4).to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

fn perr(section: &'static str, msg: String) -> LocalizationError {
    LocalizationError::Parse { section, msg }
}

fn take_line<'a>(bytes: &mut &'a [u8], section: &'static str) -> Result<&'a str> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(LocalizationError::Truncated(section))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| perr(section, "not UTF-8".into()))?;
    *bytes = &bytes[end + 1..];
    Ok(line)
}

fn value<T: std::str::FromStr>(bytes: &mut &[u8], key: &str) -> Result<T> {
    let line = take_line(bytes, "header")?;
    match line.split_once('=') {
        Some((k, v)) if k == key => v.parse().map_err(|_| perr("header", format!("bad value for {key}: `{v}`"))),
        _ => Err(perr("header", format!("expected `{key}=...`, found `{line}`"))),
    }
}

pub fn load_localizer(path: impl AsRef<Path>) -> Result<Localizer> {
    let raw = fs::read(path)?;
    let mut rest: &[u8] = &raw;
    if rest.len() < MAGIC.len() {
        return Err(LocalizationError::Truncated("magic"));
    }
    if &rest[..MAGIC.len()] != MAGIC {
        return Err(perr("magic", "not an HRLC1 localizer".into()));
    }
    rest = &rest[MAGIC.len()..];
    let hidden: usize = value(&mut rest, "hidden")?;
    let layers: usize = value(&mut rest, "layers")?;
    let dropout: f64 = value(&mut rest, "dropout")?;
    let num_params: usize = value(&mut rest, "num_params")?;
    let n_tensors: usize = value(&mut rest, "tensors")?;
    let expected = layer_shapes(hidden, layers);
    if n_tensors != 2 * expected.len() {
        return Err(perr("tensors", format!("{n_tensors} tensors for {layers} hidden layers")));
    }
    let mut params = ParamSet::new();
    for _ in 0..n_tensors {
        let line = take_line(&mut rest, "tensors")?;
        let mut it = line.split_whitespace();
        let name = it.next().ok_or_else(|| perr("tensors", "empty tensor line".into()))?;
        let shape = it
            .map(|x| x.parse::<usize>().map_err(|_| perr("tensors", format!("bad shape in `{line}`"))))
            .collect::<Result<Vec<_>>>()?;
        params.add(name, Tensor::zeros(&shape))?;
    }
    if !take_line(&mut rest, "tensors")?.is_empty() {
        return Err(perr("tensors", "missing blank line after tensor list".into()));
    }
    if params.num_scalars() != num_params {
        return Err(perr("tensors", "tensor shapes disagree with num_params".into()));
    }
    let payload = num_params * 4;
    if rest.len() < payload {
        return Err(LocalizationError::Truncated("payload"));
    }
    if rest.len() < payload + 8 {
        return Err(LocalizationError::Truncated("trailer"));
    }
    if rest.len() > payload + 8 {
        return Err(perr("trailer", "unexpected trailing bytes".into()));
    }
    let stated = u64::from_le_bytes(rest[payload..].try_into().expect("8 bytes"));
    if stated != payload as u64 {
        return Err(LocalizationError::Checksum {
            stated,
            found: payload as u64,
        });
    }
    let flat: Vec<f64> = rest[..payload]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    params.load_flat(&flat)?;
    Localizer::from_params(hidden, layers, dropout, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::LocalizerConfig;

    #[test]
    fn round_trip_is_exact() {
        let mut m = Localizer::new(&LocalizerConfig {
            hidden: 20,
            layers: 3,
            ..LocalizerConfig::default()
        })
        .unwrap();
        m.params.round_to_f32();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loc.bin");
        save_localizer(&m, &path).unwrap();
        assert_eq!(load_localizer(&path).unwrap(), m);
        let raw = fs::read(&path).unwrap();
        fs::write(&path, &raw[..raw.len() - 3]).unwrap();
        assert!(load_localizer(&path).is_err());
    }
}
