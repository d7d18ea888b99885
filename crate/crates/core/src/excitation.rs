//! Excitation sources: pulse trains driven by f0, white Gaussian noise, and
//! pitch manipulation.
//!
//! Conventions the source material leaves open:
//! - pulses have amplitude `sqrt(fs / f0)`, which gives unit mean power over a
//!   voiced region of constant pitch;
//! - f0 is linearly interpolated between centres of adjacent voiced frames and
//!   switched hard at voiced/unvoiced boundaries;
//! - the phase accumulator restarts from zero at every unvoiced-to-voiced
//!   onset, so the first pulse of a voiced run lands one period after it starts.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid_input, invalid_param, Result};
use crate::num::Real;

/// Uniformly sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal<T> {
    pub samples: Vec<T>,
    pub sample_rate: f64,
}

impl<T: Real> Signal<T> {
    pub fn new(samples: Vec<T>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid_param(format!("sample rate {sample_rate} must be positive")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(invalid_input(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        Self {
            samples: vec![T::zero(); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.samples
    }
}

/// Frame-rate fundamental frequency in Hz; zero marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Track {
    values: Vec<f64>,
    frame_hop: usize,
    sample_rate: f64,
}

impl F0Track {
    pub fn new(values: Vec<f64>, frame_hop: usize, sample_rate: f64) -> Result<Self> {
        if frame_hop == 0 {
            return Err(invalid_param("frame_hop must be at least 1"));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(invalid_param(format!("sample rate {sample_rate} must be positive")));
        }
        let nyquist = sample_rate / 2.0;
        if let Some(i) = values
            .iter()
            .position(|&v| !v.is_finite() || v < 0.0 || v >= nyquist)
        {
            return Err(invalid_input(format!(
                "f0 frame {i} = {} Hz outside [0, {nyquist})",
                values[i]
            )));
        }
        Ok(Self {
            values,
            frame_hop,
            sample_rate,
        })
    }

    pub fn constant(f0: f64, n_frames: usize, frame_hop: usize, sample_rate: f64) -> Result<Self> {
        Self::new(vec![f0; n_frames], frame_hop, sample_rate)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_hop(&self) -> usize {
        self.frame_hop
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn n_frames(&self) -> usize {
        self.values.len()
    }

    pub fn span(&self) -> usize {
        self.values.len() * self.frame_hop
    }

    /// Instantaneous f0 at sample `t`, or 0 when unvoiced.
    pub fn at_sample(&self, t: usize) -> f64 {
        let hop = self.frame_hop as f64;
        let frame = (t / self.frame_hop).min(self.values.len() - 1);
        let here = self.values[frame];
        if here == 0.0 {
            return 0.0;
        }
        let u = (t as f64 + 0.5) / hop - 0.5;
        if u <= 0.0 {
            return here;
        }
        let lo = u.floor() as usize;
        let hi = lo + 1;
        if hi >= self.values.len() {
            return here;
        }
        let (a, b) = (self.values[lo], self.values[hi]);
        if a == 0.0 || b == 0.0 {
            return here;
        }
        a + (u - lo as f64) * (b - a)
    }
}

// Guards the wrap test against accumulated rounding so that rational
// periods such as 480 samples land on exact sample indices.
const WRAP_SLACK: f64 = 1e-9;

/// Unit-power pulse train following `f0`.
pub fn pulse_train<T: Real>(f0: &F0Track, total_len: usize) -> Result<Signal<T>> {
    if total_len > f0.span() {
        return Err(invalid_input(format!(
            "{total_len} samples exceed the {} covered by the f0 track",
            f0.span()
        )));
    }
    let fs = f0.sample_rate;
    let mut out = vec![T::zero(); total_len];
    let mut phase = 0.0f64;
    for (t, y) in out.iter_mut().enumerate() {
        let f = f0.at_sample(t);
        if f == 0.0 {
            phase = 0.0;
            continue;
        }
        phase += f / fs;
        if phase >= 1.0 - WRAP_SLACK {
            phase = (phase - 1.0).max(0.0);
            *y = T::c((fs / f).sqrt());
        }
    }
    Ok(Signal {
        samples: out,
        sample_rate: fs,
    })
}

/// White noise with unit variance.
///
/// The generator is ChaCha20 (`rand_chacha::ChaCha20Rng`, 256-bit key, seeded
/// via `seed_from_u64`) feeding `rand_distr::StandardNormal`; samples are
/// drawn as `f64` and then converted, so every scalar type sees the same
/// stream for a given seed.
pub fn gaussian_noise<T: Real>(total_len: usize, seed: u64, sample_rate: f64) -> Signal<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let samples = (0..total_len)
        .map(|_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            T::c(v)
        })
        .collect();
    Signal {
        samples,
        sample_rate,
    }
}

/// Multiplies voiced frames by `2^(semitones/12)`.
pub fn shift_semitones(f0: &F0Track, semitones: f64) -> Result<F0Track> {
    if !semitones.is_finite() {
        return Err(invalid_param("semitone shift must be finite"));
    }
    if semitones == 0.0 {
        return Ok(f0.clone());
    }
    let ratio = (semitones / 12.0).exp2();
    let nyquist = f0.sample_rate / 2.0;
    let values: Vec<f64> = f0.values.iter().map(|&v| v * ratio).collect();
    if let Some(i) = values.iter().position(|&v| v >= nyquist) {
        return Err(invalid_param(format!(
            "shifted f0 {} Hz at frame {i} reaches Nyquist {nyquist} Hz",
            values[i]
        )));
    }
    Ok(F0Track { values, ..f0.clone() })
}
