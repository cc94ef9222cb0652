//! WAV reading and writing.
//!
//! Input must be 16-bit or 32-bit integer PCM; anything else is rejected
//! with a descriptive error. Stereo input is averaged down to mono.

use std::io::{Read, Seek, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::AudioClip;

pub fn read_wav(path: impl AsRef<Path>, clip_id: impl Into<String>) -> Result<AudioClip> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_wav_from(std::io::BufReader::new(file), clip_id)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))
}

pub fn read_wav_from(reader: impl Read + Seek, clip_id: impl Into<String>) -> Result<AudioClip> {
    let mut wav = hound::WavReader::new(reader).map_err(|e| Error::Audio(e.to_string()))?;
    let spec = wav.spec();
    if spec.sample_format != hound::SampleFormat::Int || !matches!(spec.bits_per_sample, 16 | 32) {
        return Err(Error::Audio(format!(
            "unsupported encoding: {:?} {} bit (need 16- or 32-bit integer PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Audio("zero channels".into()));
    }
    let scale = match spec.bits_per_sample {
        16 => 1.0 / 32768.0,
        _ => 1.0 / 2147483648.0,
    };
    let mut samples: Vec<f64> = Vec::new();
    let mut frame = vec![0.0f64; channels];
    let mut ch = 0usize;
    for s in wav.samples::<i32>() {
        let v = s.map_err(|e| Error::Audio(e.to_string()))? as f64 * scale;
        frame[ch] = v;
        ch += 1;
        if ch == channels {
            samples.push(frame.iter().sum::<f64>() / channels as f64);
            ch = 0;
        }
    }
    AudioClip::new(samples, spec.sample_rate, clip_id)
}

/// Write mono samples as 16-bit PCM, clamping to [-1, 1).
pub fn write_wav_16bit(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_wav_16bit_to(std::io::BufWriter::new(file), samples, sample_rate)
        .map_err(|e| Error::Audio(format!("{}: {e}", path.display())))
}

pub fn write_wav_16bit_to(writer: impl Write + Seek, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut wav = hound::WavWriter::new(writer, spec).map_err(|e| Error::Audio(e.to_string()))?;
    for &s in samples {
        let v = (s * 32767.0).clamp(-32768.0, 32767.0).round() as i16;
        wav.write_sample(v).map_err(|e| Error::Audio(e.to_string()))?;
    }
    wav.finalize().map_err(|e| Error::Audio(e.to_string()))
}
