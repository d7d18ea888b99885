#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normals(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Random cepstrum of the given order with `c(0) = 0` and `||c||_1 = l1`.
pub fn cepstrum_l1(rng: &mut ChaCha20Rng, order: usize, l1: f64) -> Vec<f64> {
    let mut c = uniform(rng, order + 1, -1.0, 1.0);
    c[0] = 0.0;
    let norm: f64 = c.iter().map(|v| v.abs()).sum();
    c.iter().map(|v| v * l1 / norm).collect()
}

/// Unnormalized forward DFT of a real sequence zero-extended to `n`.
pub fn dft(x: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(x.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// Normalized inverse DFT.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z / n as f64).collect()
}

/// `e^{-j beta(w)}` for the first-order all-pass with parameter `alpha`.
pub fn warped_phasor(w: f64, alpha: f64) -> Complex64 {
    let z1 = Complex64::from_polar(1.0, -w);
    (z1 - alpha) / (1.0 - alpha * z1)
}

/// `sum_m c(m) e^{-j m beta(w)}`.
pub fn warped_spectrum(c: &[f64], w: f64, alpha: f64) -> Complex64 {
    let p = warped_phasor(w, alpha);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut pow = Complex64::new(1.0, 0.0);
    for &cm in c {
        acc += pow * cm;
        pow *= p;
    }
    acc
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Direct time-variant convolution `y[t] = sum_k h_t[k] x[t + origin - k]`.
pub fn naive_tv_fir(taps: &[Vec<f64>], segment_len: usize, origin: usize, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            let h = &taps[t / segment_len];
            let mut acc = 0.0;
            for (k, &hk) in h.iter().enumerate() {
                let i = t as isize + origin as isize - k as isize;
                if i >= 0 && (i as usize) < x.len() {
                    acc += hk * x[i as usize];
                }
            }
            acc
        })
        .collect()
}
