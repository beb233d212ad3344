use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavSpec, WavWriter};

use super::{DspError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Int16,
    Float32,
}

/// Decoded audio, one vector per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct WavAudio {
    pub sample_rate: f64,
    pub channels: Vec<Vec<f64>>,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let fs = f64::from(spec.sample_rate);
    if fs < 44_100.0 {
        return Err(DspError::SampleRate(fs));
    }
    let nch = usize::from(spec.channels);
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (HoundFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(DspError::Invalid(format!(
                "unsupported WAV encoding {fmt:?} at {bits} bits"
            )))
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks(nch) {
        for (c, &v) in frame.iter().enumerate() {
            channels[c].push(v);
        }
    }
    Ok(WavAudio {
        sample_rate: fs,
        channels,
    })
}

/// Writes equal-length channels; 16-bit output is clipped to [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, audio: &WavAudio, format: SampleFormat) -> Result<()> {
    let nch = audio.channels.len();
    if nch == 0 {
        return Err(DspError::Empty);
    }
    let len = audio.channels[0].len();
    if let Some(c) = audio.channels.iter().find(|c| c.len() != len) {
        return Err(DspError::LengthMismatch(len, c.len()));
    }
    if audio.sample_rate < 44_100.0 {
        return Err(DspError::SampleRate(audio.sample_rate));
    }
    let spec = WavSpec {
        channels: nch as u16,
        sample_rate: audio.sample_rate.round() as u32,
        bits_per_sample: match format {
            SampleFormat::Int16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Int16 => HoundFormat::Int,
            SampleFormat::Float32 => HoundFormat::Float,
        },
    };
    let mut w = WavWriter::create(path, spec)?;
    for i in 0..len {
        for ch in &audio.channels {
            match format {
                SampleFormat::Float32 => w.write_sample(ch[i] as f32)?,
                SampleFormat::Int16 => {
                    w.write_sample((ch[i].clamp(-1.0, 1.0) * 32767.0).round() as i16)?
                }
            }
        }
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let audio = WavAudio {
            sample_rate: 48_000.0,
            channels: vec![vec![0.25, -0.5, 0.125], vec![0.0, 1.0, -1.0]],
        };
        write_wav(&p, &audio, SampleFormat::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), audio);
    }

    #[test]
    fn int16_mono_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let audio = WavAudio {
            sample_rate: 44_100.0,
            channels: vec![vec![0.5, -0.25, 0.0]],
        };
        write_wav(&p, &audio, SampleFormat::Int16).unwrap();
        let back = read_wav(&p).unwrap();
        for (a, b) in back.channels[0].iter().zip(&audio.channels[0]) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn low_rate_rejected() {
        let audio = WavAudio {
            sample_rate: 8000.0,
            channels: vec![vec![0.0]],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(write_wav(dir.path().join("c.wav"), &audio, SampleFormat::Int16).is_err());
    }
}
