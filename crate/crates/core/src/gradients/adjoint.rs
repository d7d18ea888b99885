//! Hand-written vector-Jacobian products for each stage of the chain.

use rustfft::num_complex::Complex;

use crate::filters::{TapLayout, ZeroPhaseDesigner};
use crate::losses::{reflect_index, Analysis, Stft, LOG_FLOOR};
use crate::num::Real;

/// Adjoint of [`tv_fir_raw`](crate::filters::tv_fir_raw): accumulates the
/// input gradient (correlation of the upstream with the taps) and the
/// per-segment tap gradients.
pub(crate) fn tv_fir_vjp<T: Real>(
    taps: &[T],
    layout: TapLayout,
    x: &[T],
    upstream: &[T],
    x_bar: &mut [T],
    taps_bar: Option<&mut [T]>,
) {
    let n = x.len();
    let TapLayout {
        tap_len,
        segment_len,
        origin,
    } = layout;
    let mut taps_bar = taps_bar;
    for (seg, h) in taps.chunks_exact(tap_len).enumerate() {
        let start = seg * segment_len;
        if start >= n {
            break;
        }
        let end = (start + segment_len).min(n);
        for t in start..end {
            let g = upstream[t];
            if g == T::zero() {
                continue;
            }
            let p = t + origin;
            let k_lo = (p + 1).saturating_sub(n);
            let k_hi = p.min(tap_len - 1);
            for k in k_lo..=k_hi {
                x_bar[p - k] += h[k] * g;
            }
            if let Some(tb) = taps_bar.as_deref_mut() {
                let hb = &mut tb[seg * tap_len..(seg + 1) * tap_len];
                for k in k_lo..=k_hi {
                    hb[k] += x[p - k] * g;
                }
            }
        }
    }
}

/// Transpose of [`freqt_frame`](crate::cepstrum::freqt_frame): runs the
/// recursion's reverse sweep, lowest input index first.
pub fn freqt_frame_adjoint<T: Real>(upstream: &[T], src_dim: usize, a: T) -> Vec<T> {
    let dst_dim = upstream.len();
    let mut c_bar = vec![T::zero(); src_dim];
    if a == T::zero() {
        let n = src_dim.min(dst_dim);
        c_bar[..n].copy_from_slice(&upstream[..n]);
        return c_bar;
    }
    let b = T::one() - a * a;
    let mut g_bar = upstream.to_vec();
    let mut d_bar = vec![T::zero(); dst_dim];
    for cb in c_bar.iter_mut() {
        d_bar.fill(T::zero());
        for j in (2..dst_dim).rev() {
            let gj = g_bar[j];
            d_bar[j - 1] += gj;
            d_bar[j] += a * gj;
            g_bar[j - 1] -= a * gj;
        }
        if dst_dim > 1 {
            d_bar[0] += b * g_bar[1];
            d_bar[1] += a * g_bar[1];
        }
        *cb = g_bar[0];
        d_bar[0] += a * g_bar[0];
        std::mem::swap(&mut g_bar, &mut d_bar);
    }
    c_bar
}

pub(crate) fn freqt_frames_adjoint<T: Real>(
    upstream: &[T],
    dst_dim: usize,
    src_dim: usize,
    a: T,
) -> Vec<T> {
    upstream
        .chunks_exact(dst_dim)
        .flat_map(|g| freqt_frame_adjoint(g, src_dim, a))
        .collect()
}

/// Saved forward state of one Horner cascade.
pub(crate) struct CascadeSaved<T> {
    pub dim: usize,
    pub segment_len: usize,
    pub order: usize,
    pub gains: Vec<T>,
    /// `s_1 .. s_{L-1}`.
    pub stages: Vec<Vec<T>>,
    pub output: Vec<T>,
}

/// Returns `(cepstra_bar, x_bar)` for the cascade `y = g * s_0`.
pub(crate) fn cascade_vjp<T: Real>(
    saved: &CascadeSaved<T>,
    cepstra: &[T],
    x: &[T],
    upstream: &[T],
) -> (Vec<T>, Vec<T>) {
    let dim = saved.dim;
    let seg_len = saved.segment_len;
    let mut taps = cepstra.to_vec();
    for seg in taps.chunks_exact_mut(dim) {
        seg[0] = T::zero();
    }
    let layout = TapLayout {
        tap_len: dim,
        segment_len: seg_len,
        origin: 0,
    };
    let mut c_bar = vec![T::zero(); cepstra.len()];
    let mut s_bar: Vec<T> = upstream
        .iter()
        .enumerate()
        .map(|(t, &g)| {
            let seg = t / seg_len;
            c_bar[seg * dim] += g * saved.output[t];
            g * saved.gains[seg]
        })
        .collect();
    let mut x_bar = vec![T::zero(); x.len()];
    let mut taps_bar = vec![T::zero(); cepstra.len()];
    for k in 1..=saved.order {
        for (xb, &sb) in x_bar.iter_mut().zip(&s_bar) {
            *xb += sb;
        }
        let inv_k = T::one() / T::n(k);
        let u: Vec<T> = s_bar.iter().map(|&v| v * inv_k).collect();
        let s_k: &[T] = if k == saved.order { x } else { &saved.stages[k - 1] };
        let mut next = vec![T::zero(); x.len()];
        tv_fir_vjp(&taps, layout, s_k, &u, &mut next, Some(&mut taps_bar));
        s_bar = next;
    }
    for (xb, &sb) in x_bar.iter_mut().zip(&s_bar) {
        *xb += sb;
    }
    // tap 0 of C is pinned to zero; c(0) reaches the output only via the gain
    for (cb, tb) in c_bar.chunks_exact_mut(dim).zip(taps_bar.chunks_exact(dim)) {
        for m in 1..dim {
            cb[m] += tb[m];
        }
    }
    (c_bar, x_bar)
}

/// Adjoint of the minimum-phase recursion for one cepstrum.
pub(crate) fn mpir_vjp<T: Real>(c: &[T], h: &[T], upstream: &[T]) -> Vec<T> {
    let order = c.len() - 1;
    let mut c_bar = vec![T::zero(); c.len()];
    let mut h_bar = upstream.to_vec();
    for n in (1..h.len()).rev() {
        let g = h_bar[n] / T::n(n);
        if g == T::zero() {
            continue;
        }
        for k in 1..=order.min(n) {
            let kk = T::n(k);
            c_bar[k] += g * kk * h[n - k];
            h_bar[n - k] += g * kk * c[k];
        }
    }
    c_bar[0] += h_bar[0] * h[0];
    c_bar
}

/// Adjoint of [`ZeroPhaseDesigner::design`] given the saved sampled gain.
pub(crate) fn zero_phase_vjp<T: Real>(
    designer: &mut ZeroPhaseDesigner<T>,
    gain: &[T],
    dim: usize,
    taps_bar: &[T],
) -> Vec<T> {
    let k = designer.dft_size;
    let h = designer.half_taps;
    let scale = T::one() / T::n(k);
    let mut r_bar = vec![T::zero(); k];
    for (i, (&tb, &w)) in taps_bar.iter().zip(&designer.taper).enumerate() {
        r_bar[(i + k - h) % k] += tb * w * scale;
    }
    let (fft, buf) = designer.fft();
    let gain_bar = fft.cos_transform(&r_bar, buf);
    let e_bar: Vec<T> = gain_bar.iter().zip(gain).map(|(&a, &b)| a * b).collect();
    let v_bar = fft.cos_transform(&e_bar, buf);
    let half = T::c(0.5);
    let mut c_bar = vec![T::zero(); dim];
    c_bar[0] = v_bar[0];
    for (m, cb) in c_bar.iter_mut().enumerate().skip(1).take(k / 2 - 1) {
        *cb = half * (v_bar[m] + v_bar[k - m]);
    }
    c_bar
}

/// Gradient of `sc + mag` for one resolution with respect to the estimate's
/// magnitudes.
pub(crate) fn resolution_mag_bar<T: Real>(reference: &[T], estimate: &[T]) -> Vec<T> {
    let eps = T::c(LOG_FLOOR);
    let den = reference.iter().map(|&a| a * a).sum::<T>().sqrt();
    let num = reference
        .iter()
        .zip(estimate)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    let sc_scale = if num > T::zero() && den > T::zero() {
        T::one() / (num * den)
    } else {
        T::zero()
    };
    let z = T::n(reference.len());
    reference
        .iter()
        .zip(estimate)
        .map(|(&a, &b)| {
            let d = (b + eps).ln() - (a + eps).ln();
            let sign = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            (b - a) * sc_scale + sign / (z * (b + eps))
        })
        .collect()
}

/// Pulls magnitude gradients back through the STFT onto the signal.
pub(crate) fn stft_vjp<T: Real>(stft: &mut Stft<T>, analysis: &Analysis<T>, mag_bar: &[T], len: usize) -> Vec<T> {
    let cfg = stft.cfg;
    let pad = cfg.pad();
    let bins = analysis.bins;
    let zero = Complex::new(T::zero(), T::zero());
    let mut x_bar = vec![T::zero(); len];
    let mut buf = vec![zero; cfg.fft_size];
    for f in 0..analysis.frames {
        buf.fill(zero);
        for b in 0..bins {
            let i = f * bins + b;
            let m = analysis.mag[i];
            if m > T::zero() {
                buf[b] = analysis.spec[i] * (mag_bar[i] / m);
            }
        }
        stft.fft.inverse(&mut buf);
        for (n, &w) in stft.window.iter().enumerate() {
            let i = reflect_index(f * cfg.hop + n, pad, len);
            x_bar[i] += w * buf[n].re;
        }
    }
    x_bar
}
