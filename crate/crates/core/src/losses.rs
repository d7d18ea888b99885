//! STFT magnitude analysis and the multi-resolution STFT loss.
//!
//! For each analysis resolution `s`, with `A` the magnitude spectrogram:
//!
//! ```text
//! sc_s  = ||A(x) - A(x_hat)||_F / ||A(x)||_F
//! mag_s = ||log(A(x) + eps) - log(A(x_hat) + eps)||_1 / (frames * bins)
//! total = (1 / 2S) * sum_s (sc_s + mag_s)
//! ```
//!
//! Frames are Hann-windowed (symmetric form), centred on `t * hop` by
//! reflect-padding `window_len / 2` samples at both ends, and zero-padded to
//! `fft_size`. `eps = 1e-7`.
//!
//! The periodic Hann window is even about `window_len / 2`, which together
//! with reflect padding makes the first frame even and its spectrum real.
//! Real spectra pass through zero between bins, and `log(|X| + eps)` is
//! nearly singular there. The symmetric form is off by half a sample and
//! avoids this.

use rustfft::num_complex::Complex;

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::excitation::Signal;
use crate::fft::FftPair;
use crate::num::Real;

/// Magnitude floor inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
}

/// One STFT analysis condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl StftConfig {
    /// `fft_size` is the next power of two at or above `window_len`.
    pub fn new(window_len: usize, hop: usize) -> Self {
        Self {
            window_len,
            hop,
            fft_size: window_len.next_power_of_two(),
            window: Window::Hann,
        }
    }

    /// Hop of one fifth of the window (80 % overlap).
    pub fn with_overlap(window_len: usize) -> Self {
        Self::new(window_len, (window_len / 5).max(1))
    }

    /// Windows of 600, 1200 and 2400 samples at 80 % overlap.
    pub fn defaults() -> Vec<Self> {
        [600, 1200, 2400].into_iter().map(Self::with_overlap).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(invalid_param("window_len must be at least 2"));
        }
        if self.hop == 0 {
            return Err(invalid_param("hop must be at least 1"));
        }
        if !self.fft_size.is_power_of_two() || self.fft_size < self.window_len {
            return Err(invalid_param(format!(
                "fft_size {} must be a power of two >= window_len {}",
                self.fft_size, self.window_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn pad(&self) -> usize {
        self.window_len / 2
    }

    pub fn n_frames(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.window_len) / self.hop
    }

    pub(crate) fn window_coeffs<T: Real>(&self) -> Vec<T> {
        let n = (self.window_len - 1) as f64;
        (0..self.window_len)
            .map(|i| T::c(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n).cos()))
            .collect()
    }

    fn check_signal(&self, len: usize) -> Result<()> {
        self.validate()?;
        if len < self.window_len {
            return Err(invalid_input(format!(
                "signal of {len} samples is shorter than one {}-sample window",
                self.window_len
            )));
        }
        Ok(())
    }
}

/// Index into the unpadded signal for padded position `p`.
pub(crate) fn reflect_index(p: usize, pad: usize, len: usize) -> usize {
    if p < pad {
        pad - p
    } else if p - pad < len {
        p - pad
    } else {
        2 * (len - 1) - (p - pad)
    }
}

/// Frames x bins matrix, frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    pub frames: usize,
    pub bins: usize,
    pub data: Vec<T>,
}

impl<T: Real> Spectrogram<T> {
    pub fn frame(&self, i: usize) -> &[T] {
        &self.data[i * self.bins..(i + 1) * self.bins]
    }
}

/// Complex one-sided STFT plus magnitudes, kept for the adjoint.
pub(crate) struct Analysis<T> {
    pub spec: Vec<Complex<T>>,
    pub mag: Vec<T>,
    pub frames: usize,
    pub bins: usize,
}

pub(crate) struct Stft<T: Real> {
    pub cfg: StftConfig,
    pub window: Vec<T>,
    pub fft: FftPair<T>,
}

impl<T: Real> Stft<T> {
    pub(crate) fn new(cfg: StftConfig) -> Self {
        Self {
            cfg,
            window: cfg.window_coeffs(),
            fft: FftPair::new(cfg.fft_size),
        }
    }

    pub(crate) fn analyze(&mut self, x: &[T]) -> Result<Analysis<T>> {
        let cfg = self.cfg;
        cfg.check_signal(x.len())?;
        let frames = cfg.n_frames(x.len());
        let bins = cfg.bins();
        let pad = cfg.pad();
        let mut spec = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.fft_size];
        for f in 0..frames {
            buf.fill(Complex::new(T::zero(), T::zero()));
            for (n, &w) in self.window.iter().enumerate() {
                let i = reflect_index(f * cfg.hop + n, pad, x.len());
                buf[n].re = w * x[i];
            }
            self.fft.forward(&mut buf);
            spec.extend_from_slice(&buf[..bins]);
        }
        let mag = spec.iter().map(|z| z.norm()).collect();
        Ok(Analysis {
            spec,
            mag,
            frames,
            bins,
        })
    }
}

pub fn stft_magnitude<T: Real>(x: &Signal<T>, cfg: &StftConfig) -> Result<Spectrogram<T>> {
    let a = Stft::new(*cfg).analyze(x.as_slice())?;
    Ok(Spectrogram {
        frames: a.frames,
        bins: a.bins,
        data: a.mag,
    })
}

fn check_pair<T: Real>(x: &Signal<T>, x_hat: &Signal<T>) -> Result<()> {
    if x.len() != x_hat.len() {
        return Err(invalid_input(format!(
            "reference has {} samples, estimate {}",
            x.len(),
            x_hat.len()
        )));
    }
    Ok(())
}

pub(crate) fn sc_from<T: Real>(reference: &[T], estimate: &[T]) -> Result<T> {
    let den = reference.iter().map(|&a| a * a).sum::<T>().sqrt();
    if den == T::zero() {
        return Err(Error::UndefinedReference);
    }
    let num = reference
        .iter()
        .zip(estimate)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    Ok(num / den)
}

pub(crate) fn mag_from<T: Real>(reference: &[T], estimate: &[T]) -> T {
    let eps = T::c(LOG_FLOOR);
    let sum: T = reference
        .iter()
        .zip(estimate)
        .map(|(&a, &b)| ((a + eps).ln() - (b + eps).ln()).abs())
        .sum();
    sum / T::n(reference.len())
}

pub fn spectral_convergence<T: Real>(x: &Signal<T>, x_hat: &Signal<T>, cfg: &StftConfig) -> Result<T> {
    check_pair(x, x_hat)?;
    let a = stft_magnitude(x, cfg)?;
    let b = stft_magnitude(x_hat, cfg)?;
    sc_from(&a.data, &b.data)
}

pub fn log_magnitude_loss<T: Real>(x: &Signal<T>, x_hat: &Signal<T>, cfg: &StftConfig) -> Result<T> {
    check_pair(x, x_hat)?;
    let a = stft_magnitude(x, cfg)?;
    let b = stft_magnitude(x_hat, cfg)?;
    Ok(mag_from(&a.data, &b.data))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionLoss {
    pub sc: f64,
    pub mag: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub per_resolution: Vec<ResolutionLoss>,
}

impl LossReport {
    pub(crate) fn from_parts(parts: Vec<ResolutionLoss>) -> Self {
        let s = parts.len() as f64;
        let total = parts.iter().map(|p| p.sc + p.mag).sum::<f64>() / (2.0 * s);
        Self {
            total,
            per_resolution: parts,
        }
    }
}

pub fn multi_res_stft_loss<T: Real>(
    x: &Signal<T>,
    x_hat: &Signal<T>,
    configs: &[StftConfig],
) -> Result<LossReport> {
    check_pair(x, x_hat)?;
    if configs.is_empty() {
        return Err(invalid_param("at least one STFT resolution is required"));
    }
    let parts = configs
        .iter()
        .map(|cfg| {
            let mut stft = Stft::new(*cfg);
            let a = stft.analyze(x.as_slice())?;
            let b = stft.analyze(x_hat.as_slice())?;
            Ok(ResolutionLoss {
                sc: sc_from(&a.mag, &b.mag)?.f64(),
                mag: mag_from(&a.mag, &b.mag).f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LossReport::from_parts(parts))
}
