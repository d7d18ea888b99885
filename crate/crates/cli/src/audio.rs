//! Mono WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use melcep::Signal64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavFormat {
    Float32,
    /// 16-bit PCM with TPDF dither drawn from the given seed.
    Pcm16 { dither_seed: u64 },
}

/// Reads 16-bit PCM or 32-bit float mono audio, scaled to [-1, 1).
pub fn read_wav(path: &Path) -> Result<Signal64> {
    let reader = WavReader::open(path).map_err(|e| CliError::io(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::Data(format!(
            "{}: {} channels, only mono is supported",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(CliError::Data(format!(
                "{}: unsupported sample format {format:?} with {bits} bits",
                path.display()
            )))
        }
    }
    .map_err(|e| CliError::io(path, e))?;
    Signal64::new(samples, spec.sample_rate as f64).map_err(|e| CliError::io(path, e))
}

pub fn write_wav(path: &Path, signal: &Signal64, format: WavFormat) -> Result<()> {
    let rate = signal.sample_rate;
    if rate.fract() != 0.0 || rate < 1.0 || rate > u32::MAX as f64 {
        return Err(CliError::Usage(format!("sample rate {rate} cannot be stored in a WAV header")));
    }
    let (bits, sample_format) = match format {
        WavFormat::Float32 => (32, SampleFormat::Float),
        WavFormat::Pcm16 { .. } => (16, SampleFormat::Int),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: bits,
        sample_format,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| CliError::io(path, e))?;
    let result = match format {
        WavFormat::Float32 => signal
            .as_slice()
            .iter()
            .try_for_each(|&v| writer.write_sample(v as f32)),
        WavFormat::Pcm16 { dither_seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(dither_seed);
            signal.as_slice().iter().try_for_each(|&v| {
                let tpdf = rng.random::<f64>() - rng.random::<f64>();
                writer.write_sample(quantize16(v * 32768.0 + tpdf))
            })
        }
    };
    result.and_then(|_| writer.finalize()).map_err(|e| CliError::io(path, e))
}

fn quantize16(v: f64) -> i16 {
    v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantizer_saturates() {
        assert_eq!(quantize16(40000.0), i16::MAX);
        assert_eq!(quantize16(-40000.0), i16::MIN);
        assert_eq!(quantize16(1.4), 1);
        assert_eq!(quantize16(-1.6), -2);
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let x = Signal64::new(vec![0.5, -0.25, 0.125, 0.0], 22050.0).unwrap();
        write_wav(&path, &x, WavFormat::Float32).unwrap();
        let y = read_wav(&path).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn pcm16_round_trip_is_within_dither() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let x = Signal64::new((0..200).map(|i| (i as f64 * 0.1).sin() * 0.8).collect(), 8000.0).unwrap();
        write_wav(&path, &x, WavFormat::Pcm16 { dither_seed: 1 }).unwrap();
        let y = read_wav(&path).unwrap();
        for (a, b) in x.as_slice().iter().zip(y.as_slice()) {
            assert!((a - b).abs() <= 1.5 / 32768.0);
        }
    }

    #[test]
    fn fractional_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let x = Signal64::new(vec![0.0], 100.5).unwrap();
        let r = write_wav(&dir.path().join("x.wav"), &x, WavFormat::Float32);
        assert!(matches!(r, Err(CliError::Usage(_))));
    }
}
