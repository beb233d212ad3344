use std::fs;
use std::io::Write;
use std::path::Path;

use super::{great_circle_deg, DatasetError, Direction, Result};
use crate::dsp::Hrir;

const MAGIC: &[u8] = b"HRTB1\n";

/// Multi-subject HRIR set on a shared direction grid.
///
/// Samples are stored as `f32`, ordered subject, direction, ear (left
/// first), tap.
#[derive(Clone, Debug, PartialEq)]
pub struct HrtfBundle {
    pub sample_rate: f64,
    pub n_taps: usize,
    pub grid: Vec<Direction>,
    data: Vec<f32>,
}

impl HrtfBundle {
    pub fn new(sample_rate: f64, n_taps: usize, grid: Vec<Direction>) -> Self {
        Self {
            sample_rate,
            n_taps,
            grid,
            data: Vec::new(),
        }
    }

    fn subject_stride(&self) -> usize {
        self.grid.len() * 2 * self.n_taps
    }

    pub fn n_subjects(&self) -> usize {
        if self.grid.is_empty() || self.n_taps == 0 {
            0
        } else {
            self.data.len() / self.subject_stride()
        }
    }

    /// Appends a subject; `hrirs` must follow the grid order.
    pub fn push_subject(&mut self, hrirs: &[Hrir]) -> Result<usize> {
        if hrirs.len() != self.grid.len() {
            return Err(DatasetError::Validation(format!(
                "{} HRIRs for {} grid directions",
                hrirs.len(),
                self.grid.len()
            )));
        }
        for h in hrirs {
            if h.len() != self.n_taps {
                return Err(DatasetError::Validation(format!(
                    "HRIR has {} taps, bundle uses {}",
                    h.len(),
                    self.n_taps
                )));
            }
        }
        for h in hrirs {
            self.data.extend(h.left.iter().map(|&v| v as f32));
            self.data.extend(h.right.iter().map(|&v| v as f32));
        }
        Ok(self.n_subjects() - 1)
    }

    fn offset(&self, subject: usize, dir: usize, ear: usize) -> usize {
        subject * self.subject_stride() + (dir * 2 + ear) * self.n_taps
    }

    /// Raw samples for one ear (0 = left, 1 = right).
    pub fn ear(&self, subject: usize, dir: usize, ear: usize) -> &[f32] {
        let o = self.offset(subject, dir, ear);
        &self.data[o..o + self.n_taps]
    }

    pub fn hrir(&self, subject: usize, dir: usize) -> Hrir {
        let conv = |s: &[f32]| s.iter().map(|&v| f64::from(v)).collect::<Vec<_>>();
        Hrir {
            left: conv(self.ear(subject, dir, 0)),
            right: conv(self.ear(subject, dir, 1)),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy holding only the listed subjects, in that order.
    pub fn subset(&self, subjects: &[usize]) -> Self {
        let mut out = Self::new(self.sample_rate, self.n_taps, self.grid.clone());
        let stride = self.subject_stride();
        for &s in subjects {
            out.data
                .extend_from_slice(&self.data[s * stride..(s + 1) * stride]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DatasetError::Validation(m));
        if !self.n_taps.is_power_of_two() {
            return bad(format!("n_taps {} is not a power of two", self.n_taps));
        }
        if self.grid.is_empty() {
            return bad("empty grid".into());
        }
        if self.data.len() % self.subject_stride() != 0 {
            return bad(format!(
                "{} samples is not a whole number of subjects for {} directions",
                self.data.len(),
                self.grid.len()
            ));
        }
        if !(self.sample_rate > 0.0) {
            return bad(format!("sample rate {}", self.sample_rate));
        }
        for (i, a) in self.grid.iter().enumerate() {
            if self.grid[..i].iter().any(|b| great_circle_deg(a, b) < 1e-6) {
                return bad(format!("duplicate grid direction {a:?}"));
            }
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return bad("non-finite sample".into());
        }
        Ok(())
    }
}

pub fn save_bundle(bundle: &HrtfBundle, path: impl AsRef<Path>) -> Result<()> {
    bundle.validate()?;
    let mut out = Vec::with_capacity(bundle.data.len() * 4 + 64 * bundle.grid.len());
    out.extend_from_slice(MAGIC);
    writeln!(out, "sample_rate={}", bundle.sample_rate)?;
    writeln!(out, "n_taps={}", bundle.n_taps)?;
    writeln!(out, "n_subjects={}", bundle.n_subjects())?;
    writeln!(out, "n_directions={}", bundle.grid.len())?;
    for d in &bundle.grid {
        writeln!(out, "{:.6} {:.6}", d.azimuth, d.elevation)?;
    }
    out.push(b'\n');
    for v in &bundle.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(bundle.data.len() as u64 * 4).to_le_bytes());
    fs::write(path, out)?;
    Ok(())
}

/// Splits off one `\n`-terminated line.
fn take_line<'a>(bytes: &mut &'a [u8], section: &'static str) -> Result<&'a str> {
    let end = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or(DatasetError::Truncated(section))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| DatasetError::Parse {
        section,
        msg: "not UTF-8".into(),
    })?;
    *bytes = &bytes[end + 1..];
    Ok(line)
}

fn header_value<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let perr = |msg: String| DatasetError::Parse {
        section: "header",
        msg,
    };
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| perr(format!("expected `{key}=...`, found `{line}`")))?;
    if k != key {
        return Err(perr(format!("expected key `{key}`, found `{k}`")));
    }
    v.parse().map_err(|_| perr(format!("bad value for {key}: `{v}`")))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<HrtfBundle> {
    let raw = fs::read(path)?;
    let mut rest: &[u8] = &raw;
    if rest.len() < MAGIC.len() {
        return Err(DatasetError::Truncated("magic"));
    }
    if &rest[..MAGIC.len()] != MAGIC {
        return Err(DatasetError::Parse {
            section: "magic",
            msg: "not an HRTB1 bundle".into(),
        });
    }
    rest = &rest[MAGIC.len()..];
    let sample_rate: f64 = header_value(take_line(&mut rest, "header")?, "sample_rate")?;
    let n_taps: usize = header_value(take_line(&mut rest, "header")?, "n_taps")?;
    let n_subjects: usize = header_value(take_line(&mut rest, "header")?, "n_subjects")?;
    let n_dirs: usize = header_value(take_line(&mut rest, "header")?, "n_directions")?;
    let mut grid = Vec::with_capacity(n_dirs);
    for _ in 0..n_dirs {
        let line = take_line(&mut rest, "directions")?;
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(az)), Some(Ok(el)), None) => grid.push(Direction::new(az, el)),
            _ => {
                return Err(DatasetError::Parse {
                    section: "directions",
                    msg: format!("bad direction line `{line}`"),
                })
            }
        }
    }
    if !take_line(&mut rest, "directions")?.is_empty() {
        return Err(DatasetError::Parse {
            section: "directions",
            msg: "missing blank line after direction list".into(),
        });
    }
    let n_values = n_subjects * n_dirs * 2 * n_taps;
    let payload_bytes = n_values * 4;
    if rest.len() < payload_bytes {
        return Err(DatasetError::Truncated("payload"));
    }
    if rest.len() < payload_bytes + 8 {
        return Err(DatasetError::Truncated("trailer"));
    }
    if rest.len() > payload_bytes + 8 {
        return Err(DatasetError::Parse {
            section: "trailer",
            msg: format!("{} unexpected trailing bytes", rest.len() - payload_bytes - 8),
        });
    }
    let stated = u64::from_le_bytes(rest[payload_bytes..].try_into().expect("8 bytes"));
    if stated != payload_bytes as u64 {
        return Err(DatasetError::Checksum {
            stated,
            found: payload_bytes as u64,
        });
    }
    let data = rest[..payload_bytes]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let bundle = HrtfBundle {
        sample_rate,
        n_taps,
        grid,
        data,
    };
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bundle(subjects: usize) -> HrtfBundle {
        let grid = vec![
            Direction::new(0.0, 0.0),
            Direction::new(90.0, 0.0),
            Direction::new(-45.0, 30.0),
        ];
        let mut b = HrtfBundle::new(44_100.0, 8, grid);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..subjects {
            let hs: Vec<Hrir> = (0..3)
                .map(|_| Hrir {
                    left: (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    right: (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    sample_rate: 44_100.0,
                })
                .collect();
            b.push_subject(&hs).unwrap();
        }
        b
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.hrtb");
        let b = random_bundle(2);
        save_bundle(&b, &p).unwrap();
        let back = load_bundle(&p).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.n_subjects(), 2);
    }

    #[test]
    fn truncation_names_section() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.hrtb");
        save_bundle(&random_bundle(1), &p).unwrap();
        let raw = fs::read(&p).unwrap();
        fs::write(&p, &raw[..raw.len() - 4]).unwrap();
        assert!(matches!(load_bundle(&p), Err(DatasetError::Truncated("trailer"))));
        fs::write(&p, &raw[..raw.len() - 40]).unwrap();
        assert!(matches!(load_bundle(&p), Err(DatasetError::Truncated("payload"))));
        fs::write(&p, &raw[..20]).unwrap();
        assert!(matches!(load_bundle(&p), Err(DatasetError::Truncated("header"))));
        let mut bad = raw.clone();
        let n = bad.len();
        bad[n - 8] ^= 1;
        fs::write(&p, &bad).unwrap();
        assert!(matches!(load_bundle(&p), Err(DatasetError::Checksum { .. })));
    }

    #[test]
    fn mismatched_counts_rejected() {
        let mut b = random_bundle(1);
        let h = b.hrir(0, 0);
        assert!(b.push_subject(&[h]).is_err());
        // a grid edit after the fact leaves the payload inconsistent
        b.grid.push(Direction::new(10.0, 10.0));
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_bundle(&b, dir.path().join("x")),
            Err(DatasetError::Validation(_))
        ));
    }
}
