//! Thin wrapper around `rustfft` for the fixed-size transforms used by the
//! zero-phase filters and the STFT.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::num::Real;

pub(crate) struct FftPair<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> FftPair<T> {
    pub(crate) fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
        }
    }

    /// Unnormalized forward transform, in place.
    pub(crate) fn forward(&mut self, buf: &mut [Complex<T>]) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
    }

    /// Unnormalized inverse transform (`e^{+j...}` kernel), in place.
    pub(crate) fn inverse(&mut self, buf: &mut [Complex<T>]) {
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }

    /// `out[k] = sum_n v[n] cos(2 pi k n / len)` for a real input of length `len`.
    ///
    /// The cosine matrix is symmetric, so this map is its own transpose.
    pub(crate) fn cos_transform(&mut self, v: &[T], buf: &mut Vec<Complex<T>>) -> Vec<T> {
        debug_assert_eq!(v.len(), self.forward.len());
        buf.clear();
        buf.extend(v.iter().map(|&x| Complex::new(x, T::zero())));
        self.forward(buf);
        buf.iter().map(|z| z.re).collect()
    }
}
