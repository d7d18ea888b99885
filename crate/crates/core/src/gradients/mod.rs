//! Reverse-mode gradients through the synthesis chain and the STFT loss.

mod adjoint;
mod chain;
mod check;
mod tape;

pub use adjoint::freqt_frame_adjoint;
pub use chain::{
    fit_cepstra, record_chain, record_chain_from, vjp_chain, vjp_tv_fir, ChainConfig, ChainGradients, FitOptions,
    FitResult, RecordedChain,
};
pub use check::{
    check_gradient, gradcheck, gradcheck_with_step, Component, GradCheckReport, GradCheckSize, GroupCheck, DEFAULT_THRESHOLD, FD_STEP,
};
pub use tape::{Adjoints, GradientTape, Var};
