//! Differentiable mel-cepstral speech synthesis.
//!
//! Cepstral envelope and aperiodicity tracks drive a mixed pulse/noise
//! excitation through a non-recursive exponential filter. Every stage has a
//! hand-written adjoint so a multi-resolution STFT loss on the waveform can
//! be differentiated back to the cepstra.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); gradient checks
//! run in `f64`.

pub mod cepstrum;
pub mod error;
pub mod excitation;
mod fft;
pub mod filters;
pub mod gradients;
pub mod losses;
pub mod num;

pub use cepstrum::{
    c2mpir, effective_warp, freqt, freqt_frame, schedule, schedule_segmented, CepstralTrack, CoefficientSchedule,
    FrameInterpolation, ImpulseResponse, Interp,
};
pub use error::{Error, Result};
pub use excitation::{gaussian_noise, pulse_train, shift_semitones, F0Track, Signal};
pub use filters::{
    exp_filter, mixed_excitation, synthesize, tv_fir, zero_phase_filter, zero_phase_response, ExpFilterConfig,
    PostFilter, Realization, SynthesisInput, TapLayout, ZeroPhaseConfig,
};
pub use gradients::{
    fit_cepstra, gradcheck, vjp_chain, vjp_tv_fir, ChainConfig, Component, FitOptions, FitResult, GradCheckReport,
    GradCheckSize, GradientTape,
};
pub use losses::{
    log_magnitude_loss, multi_res_stft_loss, spectral_convergence, stft_magnitude, LossReport, ResolutionLoss,
    Spectrogram, StftConfig, Window,
};
pub use num::Real;

pub type Signal64 = Signal<f64>;
pub type Signal32 = Signal<f32>;
pub type CepstralTrack64 = CepstralTrack<f64>;
pub type CepstralTrack32 = CepstralTrack<f32>;
pub type SynthesisInput64 = SynthesisInput<f64>;
pub type SynthesisInput32 = SynthesisInput<f32>;
pub type CoefficientSchedule64 = CoefficientSchedule<f64>;
pub type CoefficientSchedule32 = CoefficientSchedule<f32>;
