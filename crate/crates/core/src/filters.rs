//! Time-variant FIR machinery and the mixed-excitation synthesis chain.
//!
//! The exponential filter `exp(sum_m c(m) z^-m)` is realized without
//! recursion, either as a truncated Maclaurin series evaluated by Horner's
//! scheme (`L` passes of the same time-variant FIR `C`):
//!
//! ```text
//! s_L = x,   s_{k-1} = x + C(s_k) / k   (k = L..1),   y = exp(c(0)) * s_0
//! ```
//!
//! or as a single long FIR whose taps are the minimum-phase impulse response
//! of the cepstrum. `C` carries taps `[0, c(1), ..., c(N)]`; the constant
//! term is a per-segment output gain so it is never pushed through the
//! stages. The recursive MLSA structure (Pade approximation) is the
//! classical alternative and is deliberately absent.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;

use crate::cepstrum::{
    freqt, mpir, schedule_segmented, CepstralTrack, CoefficientSchedule, ImpulseResponse, Interp,
};
use crate::error::{invalid_input, invalid_param, Result};
use crate::excitation::{gaussian_noise, pulse_train, F0Track, Signal};
use crate::fft::FftPair;
use crate::num::Real;

/// Shape of a flattened per-segment tap array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TapLayout {
    pub tap_len: usize,
    pub segment_len: usize,
    /// Tap index aligned with the current sample.
    pub origin: usize,
}

impl TapLayout {
    pub fn causal(tap_len: usize, segment_len: usize) -> Self {
        Self {
            tap_len,
            segment_len,
            origin: 0,
        }
    }

    pub fn of<T: Real>(s: &CoefficientSchedule<T>) -> Self {
        Self {
            tap_len: s.tap_len(),
            segment_len: s.segment_len(),
            origin: s.origin(),
        }
    }
}

/// `y[t] = sum_k h_t[k] x[t + origin - k]`, zero outside the signal.
pub(crate) fn tv_fir_raw<T: Real>(taps: &[T], layout: TapLayout, x: &[T]) -> Vec<T> {
    let n = x.len();
    let mut y = vec![T::zero(); n];
    if n == 0 {
        return y;
    }
    let TapLayout {
        tap_len,
        segment_len,
        origin,
    } = layout;
    for (seg, h) in taps.chunks_exact(tap_len).enumerate() {
        let start = seg * segment_len;
        if start >= n {
            break;
        }
        let end = (start + segment_len).min(n);
        for (t, out) in y.iter_mut().enumerate().take(end).skip(start) {
            let p = t + origin;
            let k_lo = (p + 1).saturating_sub(n);
            let k_hi = p.min(tap_len - 1);
            let mut acc = T::zero();
            for k in k_lo..=k_hi {
                acc += h[k] * x[p - k];
            }
            *out = acc;
        }
    }
    y
}

/// Applies a time-variant FIR schedule to a signal.
pub fn tv_fir<T: Real>(schedule: &CoefficientSchedule<T>, input: &Signal<T>) -> Result<Signal<T>> {
    if schedule.total_len() != input.len() {
        return Err(invalid_input(format!(
            "schedule covers {} samples, input has {}",
            schedule.total_len(),
            input.len()
        )));
    }
    Ok(Signal {
        samples: tv_fir_raw(schedule.as_slice(), TapLayout::of(schedule), input.as_slice()),
        sample_rate: input.sample_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Realization {
    /// `L` Horner stages of the truncated Maclaurin series.
    #[default]
    Cascade,
    /// One FIR holding the minimum-phase impulse response.
    SingleFir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpFilterConfig {
    /// Order `N` of the linear-frequency cepstrum fed to the filter.
    pub cepstrum_order: usize,
    /// Truncation order `L` of the Maclaurin series.
    pub maclaurin_order: usize,
    pub realization: Realization,
    /// Impulse response length for [`Realization::SingleFir`].
    pub ir_length: usize,
    pub interp: Interp,
    /// Segment length under [`Interp::Linear`]; a quarter hop when `None`.
    pub segment_len: Option<usize>,
}

impl Default for ExpFilterConfig {
    fn default() -> Self {
        Self {
            cepstrum_order: 199,
            maclaurin_order: 20,
            realization: Realization::Cascade,
            ir_length: 4096,
            interp: Interp::Hold,
            segment_len: None,
        }
    }
}

impl ExpFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.maclaurin_order == 0 {
            return Err(invalid_param("maclaurin_order must be at least 1"));
        }
        if self.realization == Realization::SingleFir && self.ir_length < self.cepstrum_order + 1 {
            return Err(invalid_param(format!(
                "ir_length {} shorter than cepstrum order + 1 = {}",
                self.ir_length,
                self.cepstrum_order + 1
            )));
        }
        Ok(())
    }
}

/// Segment cepstra of `track` on the linear axis, ready for filter design.
pub(crate) fn linear_schedule<T: Real>(
    track: &CepstralTrack<T>,
    order: usize,
    total_len: usize,
    interp: Interp,
    segment_len: Option<usize>,
) -> Result<CoefficientSchedule<T>> {
    let lin = freqt(track, order, T::zero())?;
    schedule_segmented(&lin, total_len, interp, segment_len)
}

/// Forward pass of the Horner cascade. With `keep`, the intermediate stage
/// signals `s_1 .. s_{L-1}` are returned for the adjoint.
pub(crate) struct CascadePass<T> {
    pub output: Vec<T>,
    pub gains: Vec<T>,
    pub stages: Vec<Vec<T>>,
}

pub(crate) fn cascade_forward<T: Real>(
    cepstra: &[T],
    dim: usize,
    segment_len: usize,
    x: &[T],
    order: usize,
    keep: bool,
) -> CascadePass<T> {
    let mut taps = cepstra.to_vec();
    let mut gains = Vec::with_capacity(cepstra.len() / dim);
    for seg in taps.chunks_exact_mut(dim) {
        gains.push(seg[0].exp());
        seg[0] = T::zero();
    }
    let layout = TapLayout {
        tap_len: dim,
        segment_len,
        origin: 0,
    };
    let mut stages = Vec::new();
    let mut s = x.to_vec();
    for k in (1..=order).rev() {
        let inv_k = T::one() / T::n(k);
        let cs = tv_fir_raw(&taps, layout, &s);
        let next: Vec<T> = x.iter().zip(&cs).map(|(&xi, &ci)| xi + inv_k * ci).collect();
        if keep && k > 1 {
            stages.push(next.clone());
        }
        s = next;
    }
    // stages currently holds s_{L-1}, ..., s_1; store ascending by index
    stages.reverse();
    let output = s
        .iter()
        .enumerate()
        .map(|(t, &v)| gains[t / segment_len] * v)
        .collect();
    CascadePass {
        output,
        gains,
        stages,
    }
}

/// Minimum-phase taps for every segment of a linear-axis cepstral schedule.
pub(crate) fn mpir_taps<T: Real>(cepstra: &[T], dim: usize, ir_length: usize) -> Vec<T> {
    cepstra
        .chunks_exact(dim)
        .flat_map(|c| mpir(c, ir_length))
        .collect()
}

/// Exponential (mel-)cepstral synthesis filter.
pub fn exp_filter<T: Real>(
    envelope: &CepstralTrack<T>,
    input: &Signal<T>,
    cfg: &ExpFilterConfig,
) -> Result<Signal<T>> {
    cfg.validate()?;
    let sched = linear_schedule(
        envelope,
        cfg.cepstrum_order,
        input.len(),
        cfg.interp,
        cfg.segment_len,
    )?;
    let samples = match cfg.realization {
        Realization::Cascade => {
            cascade_forward(
                sched.as_slice(),
                sched.tap_len(),
                sched.segment_len(),
                input.as_slice(),
                cfg.maclaurin_order,
                false,
            )
            .output
        }
        Realization::SingleFir => {
            let taps = mpir_taps(sched.as_slice(), sched.tap_len(), cfg.ir_length);
            let layout = TapLayout {
                tap_len: cfg.ir_length,
                segment_len: sched.segment_len(),
                origin: 0,
            };
            tv_fir_raw(&taps, layout, input.as_slice())
        }
    };
    Ok(Signal {
        samples,
        sample_rate: input.sample_rate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPhaseConfig {
    /// Response spans `2 * half_taps + 1` taps centred on the current sample.
    pub half_taps: usize,
    /// Linear-axis cepstrum order used for design; `half_taps` when `None`.
    pub cepstrum_order: Option<usize>,
    pub interp: Interp,
    pub segment_len: Option<usize>,
}

impl Default for ZeroPhaseConfig {
    fn default() -> Self {
        Self::new(256)
    }
}

impl ZeroPhaseConfig {
    pub fn new(half_taps: usize) -> Self {
        Self {
            half_taps,
            cepstrum_order: None,
            interp: Interp::Hold,
            segment_len: None,
        }
    }

    pub fn order(&self) -> usize {
        self.cepstrum_order.unwrap_or(self.half_taps)
    }

    pub fn dft_size(&self) -> usize {
        (8 * self.half_taps).max(2 * self.order() + 2).next_power_of_two()
    }

    pub fn validate(&self) -> Result<()> {
        if self.half_taps == 0 {
            return Err(invalid_param("half_taps must be at least 1"));
        }
        Ok(())
    }
}

/// Frequency-sampling design of zero-phase responses from linear-axis
/// cepstra.
///
/// For a cepstrum `c` of order `N` the real log-gain is
/// `c(0) + sum_{m>=1} c(m) cos(m w)`: the two-sided symmetric cepstrum with
/// `c(+-m)/2` off the origin. It is sampled on a `K`-point grid,
/// exponentiated, inverse transformed, cut to `2H + 1` taps and tapered by a
/// raised cosine over the outer tenth of each side.
pub(crate) struct ZeroPhaseDesigner<T: Real> {
    pub half_taps: usize,
    pub dft_size: usize,
    pub taper: Vec<T>,
    fft: FftPair<T>,
    buf: Vec<Complex<T>>,
}

impl<T: Real> ZeroPhaseDesigner<T> {
    pub(crate) fn new(cfg: &ZeroPhaseConfig) -> Self {
        let h = cfg.half_taps;
        let k = cfg.dft_size();
        let ramp = h.div_ceil(10).max(1);
        let flat = h.saturating_sub(ramp);
        let taper = (0..=2 * h)
            .map(|i| {
                let d = i.abs_diff(h);
                if d <= flat {
                    T::one()
                } else {
                    let x = (d - flat) as f64 / (ramp + 1) as f64;
                    T::c(0.5 * (1.0 + (std::f64::consts::PI * x).cos()))
                }
            })
            .collect();
        Self {
            half_taps: h,
            dft_size: k,
            taper,
            fft: FftPair::new(k),
            buf: Vec::with_capacity(k),
        }
    }

    /// Symmetric grid vector whose cosine transform is the log-gain.
    pub(crate) fn spread(&self, c: &[T]) -> Vec<T> {
        let k = self.dft_size;
        let half = T::c(0.5);
        let mut v = vec![T::zero(); k];
        v[0] = c[0];
        for (m, &cm) in c.iter().enumerate().skip(1).take(k / 2 - 1) {
            v[m] += half * cm;
            v[k - m] += half * cm;
        }
        v
    }

    /// Returns the taps and the sampled gain `exp(E_k)`.
    pub(crate) fn design(&mut self, c: &[T]) -> (Vec<T>, Vec<T>) {
        let k = self.dft_size;
        let v = self.spread(c);
        let gain: Vec<T> = self
            .fft
            .cos_transform(&v, &mut self.buf)
            .into_iter()
            .map(T::exp)
            .collect();
        let r = self.fft.cos_transform(&gain, &mut self.buf);
        let scale = T::one() / T::n(k);
        let h = self.half_taps;
        let taps = (0..=2 * h)
            .map(|i| {
                let idx = (i + k - h) % k;
                r[idx] * scale * self.taper[i]
            })
            .collect();
        (taps, gain)
    }

    pub(crate) fn fft(&mut self) -> (&mut FftPair<T>, &mut Vec<Complex<T>>) {
        (&mut self.fft, &mut self.buf)
    }
}

/// Zero-phase response for one warped aperiodicity frame.
pub fn zero_phase_response<T: Real>(
    frame: &[T],
    warp: T,
    cfg: &ZeroPhaseConfig,
) -> Result<ImpulseResponse<T>> {
    cfg.validate()?;
    let track = CepstralTrack::new(frame.to_vec(), frame.len().saturating_sub(1), warp, 1)?;
    if track.is_empty() {
        return Err(invalid_input("empty cepstrum"));
    }
    let lin = freqt(&track, cfg.order(), T::zero())?;
    let (taps, _) = ZeroPhaseDesigner::new(cfg).design(lin.as_slice());
    Ok(ImpulseResponse {
        taps,
        origin: cfg.half_taps,
    })
}

/// Centre-aligned zero-phase schedule for an aperiodicity track.
pub(crate) fn zero_phase_schedule<T: Real>(
    aperiodicity: &CepstralTrack<T>,
    total_len: usize,
    cfg: &ZeroPhaseConfig,
) -> Result<CoefficientSchedule<T>> {
    cfg.validate()?;
    let lin = linear_schedule(aperiodicity, cfg.order(), total_len, cfg.interp, cfg.segment_len)?;
    let mut designer = ZeroPhaseDesigner::new(cfg);
    lin.map_taps(cfg.half_taps, |c| designer.design(c).0)
}

/// Applies the zero-phase aperiodicity filter `H_a`.
pub fn zero_phase_filter<T: Real>(
    aperiodicity: &CepstralTrack<T>,
    input: &Signal<T>,
    cfg: &ZeroPhaseConfig,
) -> Result<Signal<T>> {
    if input.is_empty() {
        return Err(invalid_input("zero-phase filter needs a nonempty input"));
    }
    let sched = zero_phase_schedule(aperiodicity, input.len(), cfg)?;
    tv_fir(&sched, input)
}

/// `H_a * noise + (1 - H_a) * pulses`, computed with a single filter pass as
/// `pulses + H_a * (noise - pulses)`.
pub fn mixed_excitation<T: Real>(
    noise: &Signal<T>,
    pulses: &Signal<T>,
    aperiodicity: &CepstralTrack<T>,
    cfg: &ZeroPhaseConfig,
) -> Result<Signal<T>> {
    if noise.len() != pulses.len() {
        return Err(invalid_input(format!(
            "noise has {} samples, pulses {}",
            noise.len(),
            pulses.len()
        )));
    }
    let sched = zero_phase_schedule(aperiodicity, noise.len(), cfg)?;
    Ok(Signal {
        samples: mix_with(&sched, noise.as_slice(), pulses.as_slice()),
        sample_rate: noise.sample_rate,
    })
}

fn mix_with<T: Real>(sched: &CoefficientSchedule<T>, noise: &[T], pulses: &[T]) -> Vec<T> {
    let diff: Vec<T> = noise.iter().zip(pulses).map(|(&n, &p)| n - p).collect();
    let shaped = tv_fir_raw(sched.as_slice(), TapLayout::of(sched), &diff);
    pulses.iter().zip(&shaped).map(|(&p, &s)| p + s).collect()
}

/// Signal transform inserted after `H_a` or `H_p`.
///
/// Implement [`vjp`](Self::vjp) to let gradients pass through the hook.
pub trait PostFilter<T>: Send + Sync {
    fn apply(&self, x: &[T]) -> Vec<T>;

    /// Vector-Jacobian product at `x`; `None` if the hook is opaque.
    fn vjp(&self, _x: &[T], _upstream: &[T]) -> Option<Vec<T>> {
        None
    }
}

/// Everything one synthesis call consumes.
#[derive(Clone)]
pub struct SynthesisInput<T> {
    pub envelope: CepstralTrack<T>,
    pub aperiodicity: CepstralTrack<T>,
    pub f0: F0Track,
    pub noise_seed: u64,
    pub post_a: Option<Arc<dyn PostFilter<T>>>,
    pub post_p: Option<Arc<dyn PostFilter<T>>>,
}

impl<T: Real> fmt::Debug for SynthesisInput<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SynthesisInput")
            .field("envelope", &self.envelope)
            .field("aperiodicity", &self.aperiodicity)
            .field("f0", &self.f0)
            .field("noise_seed", &self.noise_seed)
            .field("post_a", &self.post_a.is_some())
            .field("post_p", &self.post_p.is_some())
            .finish()
    }
}

impl<T: Real> SynthesisInput<T> {
    pub fn new(
        envelope: CepstralTrack<T>,
        aperiodicity: CepstralTrack<T>,
        f0: F0Track,
        noise_seed: u64,
    ) -> Result<Self> {
        let input = Self {
            envelope,
            aperiodicity,
            f0,
            noise_seed,
            post_a: None,
            post_p: None,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        let (e, a, f) = (&self.envelope, &self.aperiodicity, &self.f0);
        if e.is_empty() {
            return Err(invalid_input("envelope track has no frames"));
        }
        if e.frame_hop() != a.frame_hop() || e.frame_hop() != f.frame_hop() {
            return Err(invalid_input(format!(
                "frame hops differ: envelope {}, aperiodicity {}, f0 {}",
                e.frame_hop(),
                a.frame_hop(),
                f.frame_hop()
            )));
        }
        if e.n_frames() != a.n_frames() || e.n_frames() != f.n_frames() {
            return Err(invalid_input(format!(
                "frame counts differ: envelope {}, aperiodicity {}, f0 {}",
                e.n_frames(),
                a.n_frames(),
                f.n_frames()
            )));
        }
        if e.warp() != a.warp() {
            return Err(invalid_input(format!(
                "warp differs: envelope {}, aperiodicity {}",
                e.warp(),
                a.warp()
            )));
        }
        Ok(())
    }

    pub fn sample_rate(&self) -> f64 {
        self.f0.sample_rate()
    }

    pub fn total_len(&self) -> usize {
        self.envelope.span()
    }

    pub fn noise(&self) -> Signal<T> {
        gaussian_noise(self.total_len(), self.noise_seed, self.sample_rate())
    }

    pub fn pulses(&self) -> Result<Signal<T>> {
        pulse_train(&self.f0, self.total_len())
    }

    /// Same features with both tracks reinterpreted at `warp`.
    pub fn with_warp(&self, warp: T) -> Result<Self> {
        Ok(Self {
            envelope: self.envelope.with_warp(warp)?,
            aperiodicity: self.aperiodicity.with_warp(warp)?,
            ..self.clone()
        })
    }

    pub fn has_post_filters(&self) -> bool {
        self.post_a.is_some() || self.post_p.is_some()
    }
}

/// Full chain: `exp_filter(envelope, P_a(H_a noise) + P_p(H_p pulses))`.
///
/// With no post filters the excitation is formed in one pass by
/// [`mixed_excitation`].
pub fn synthesize<T: Real>(
    input: &SynthesisInput<T>,
    cfg: &ExpFilterConfig,
    zp: &ZeroPhaseConfig,
) -> Result<Signal<T>> {
    input.validate()?;
    let noise = input.noise();
    let pulses = input.pulses()?;
    let sched = zero_phase_schedule(&input.aperiodicity, input.total_len(), zp)?;
    let excitation = if input.has_post_filters() {
        two_branch_excitation(input, &sched, noise.as_slice(), pulses.as_slice())?
    } else {
        mix_with(&sched, noise.as_slice(), pulses.as_slice())
    };
    let excitation = Signal {
        samples: excitation,
        sample_rate: input.sample_rate(),
    };
    exp_filter(&input.envelope, &excitation, cfg)
}

fn two_branch_excitation<T: Real>(
    input: &SynthesisInput<T>,
    sched: &CoefficientSchedule<T>,
    noise: &[T],
    pulses: &[T],
) -> Result<Vec<T>> {
    let layout = TapLayout::of(sched);
    let aperiodic = tv_fir_raw(sched.as_slice(), layout, noise);
    let ha_pulses = tv_fir_raw(sched.as_slice(), layout, pulses);
    let periodic: Vec<T> = pulses.iter().zip(&ha_pulses).map(|(&p, &h)| p - h).collect();
    let run = |hook: &Option<Arc<dyn PostFilter<T>>>, x: Vec<T>| -> Result<Vec<T>> {
        match hook {
            None => Ok(x),
            Some(h) => {
                let y = h.apply(&x);
                if y.len() != x.len() {
                    return Err(invalid_input(format!(
                        "post filter changed length {} -> {}",
                        x.len(),
                        y.len()
                    )));
                }
                Ok(y)
            }
        }
    };
    let a = run(&input.post_a, aperiodic)?;
    let p = run(&input.post_p, periodic)?;
    Ok(a.iter().zip(&p).map(|(&x, &y)| x + y).collect())
}
