#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use melcep::{CepstralTrack64, F0Track, Signal64};
use melcep_cli::audio::read_wav;
use melcep_cli::FeatureBundle;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub fn melcep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_melcep"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Vowel-like formants: (centre Hz, spread Hz, log-amplitude in nats).
pub const FORMANTS: [(f64, f64, f64); 3] = [(800.0, 150.0, 2.0), (1800.0, 200.0, 1.5), (3200.0, 250.0, 1.0)];

/// `e^{-j beta(w)}` for the first-order all-pass with coefficient `alpha`.
pub fn warped_phasor(w: f64, alpha: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, -w);
    (z - alpha) / (1.0 - alpha * z)
}

/// Warped cepstrum of order `order` whose cosine series reproduces the
/// formant log-spectrum on the linear axis.
pub fn formant_cepstrum(fs: f64, formants: &[(f64, f64, f64)], order: usize, alpha: f64) -> Vec<f64> {
    let k = 8192;
    let log_spec = |hz: f64| -> f64 {
        formants
            .iter()
            .map(|&(f, s, g)| g * (-(hz - f).powi(2) / (2.0 * s * s)).exp())
            .sum()
    };
    (0..=order)
        .map(|m| {
            let sum: f64 = (0..k)
                .map(|i| {
                    let theta = (i as f64 + 0.5) * std::f64::consts::PI / k as f64;
                    let w = -warped_phasor(theta, -alpha).arg();
                    log_spec(w * fs / (2.0 * std::f64::consts::PI)) * (m as f64 * theta).cos()
                })
                .sum();
            sum / k as f64 * if m == 0 { 1.0 } else { 2.0 }
        })
        .collect()
}

pub struct BundleSpec {
    pub fs: f64,
    pub hop: usize,
    pub frames: usize,
    pub alpha: f64,
    pub f0: f64,
    pub env_order: usize,
    pub ap_c0: f64,
}

impl Default for BundleSpec {
    fn default() -> Self {
        Self {
            fs: 16_000.0,
            hop: 80,
            frames: 50,
            alpha: 0.55,
            f0: 200.0,
            env_order: 24,
            ap_c0: -3.0,
        }
    }
}

/// Constant-feature bundle with the formant envelope, written to `dir`.
pub fn write_bundle(dir: &Path, spec: &BundleSpec) -> PathBuf {
    let env = formant_cepstrum(spec.fs, &FORMANTS, spec.env_order, spec.alpha);
    let mut ap = vec![0.0; 25];
    ap[0] = spec.ap_c0;
    let bundle = FeatureBundle {
        envelope: CepstralTrack64::constant(&env, spec.frames, spec.alpha, spec.hop).unwrap(),
        aperiodicity: CepstralTrack64::constant(&ap, spec.frames, spec.alpha, spec.hop).unwrap(),
        f0: F0Track::constant(spec.f0, spec.frames, spec.hop, spec.fs).unwrap(),
    };
    bundle.save(dir).unwrap();
    dir.to_path_buf()
}

pub fn wav(path: &Path) -> Signal64 {
    read_wav(path).unwrap()
}

fn fft(x: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let plan = if inverse {
        planner.plan_fft_inverse(x.len())
    } else {
        planner.plan_fft_forward(x.len())
    };
    plan.process(x);
}

/// Mean power spectrum over Hann-windowed frames, bins `0..=n/2`.
pub fn mean_power_spectrum(x: &[f64], n: usize) -> Vec<f64> {
    let hop = n / 4;
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let mut acc = vec![0.0; n / 2 + 1];
    let mut count = 0;
    let mut start = 0;
    while start + n <= x.len() {
        let mut buf: Vec<Complex64> = (0..n).map(|i| Complex64::new(w[i] * x[start + i], 0.0)).collect();
        fft(&mut buf, false);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += hop;
    }
    assert!(count > 0, "signal shorter than one analysis frame");
    acc.iter().map(|a| a / count as f64).collect()
}

/// Log spectral envelope by cepstral liftering of the mean log power
/// spectrum, keeping quefrencies below `lifter` samples.
pub fn liftered_envelope(x: &[f64], n: usize, lifter: usize) -> Vec<f64> {
    let power = mean_power_spectrum(x, n);
    let mut full: Vec<Complex64> = (0..n)
        .map(|k| {
            let p = power[if k <= n / 2 { k } else { n - k }];
            Complex64::new(0.5 * (p + 1e-30).ln(), 0.0)
        })
        .collect();
    fft(&mut full, true);
    for (q, c) in full.iter_mut().enumerate() {
        let quef = q.min(n - q);
        *c = if quef < lifter { *c / n as f64 } else { Complex64::new(0.0, 0.0) };
    }
    fft(&mut full, false);
    full.iter().take(n / 2 + 1).map(|c| c.re).collect()
}

/// Frequency of the largest local maximum of `env` within `hz +- 30%`.
pub fn peak_near(env: &[f64], fs: f64, hz: f64) -> f64 {
    let n = 2 * (env.len() - 1);
    let bin_hz = fs / n as f64;
    let lo = ((0.7 * hz) / bin_hz) as usize;
    let hi = ((1.3 * hz) / bin_hz) as usize;
    let k = (lo.max(1)..hi.min(env.len() - 1))
        .filter(|&k| env[k] >= env[k - 1] && env[k] >= env[k + 1])
        .max_by(|&a, &b| env[a].total_cmp(&env[b]))
        .expect("a local maximum near the formant");
    k as f64 * bin_hz
}

/// Lag of the strongest normalized autocorrelation peak in `lo..=hi`,
/// preferring the shortest lag within 90% of the maximum.
pub fn pitch_period(x: &[f64], lo: usize, hi: usize) -> usize {
    let r = |lag: usize| -> f64 {
        let n = x.len() - lag;
        let num: f64 = (0..n).map(|t| x[t] * x[t + lag]).sum();
        let e0: f64 = x[..n].iter().map(|v| v * v).sum();
        let e1: f64 = x[lag..].iter().map(|v| v * v).sum();
        num / (e0 * e1).sqrt()
    };
    let values: Vec<f64> = (lo..=hi).map(r).collect();
    let best = values.iter().cloned().fold(f64::MIN, f64::max);
    let first = values
        .iter()
        .enumerate()
        .position(|(i, v)| {
            *v >= 0.9 * best
                && (i == 0 || values[i - 1] <= *v)
                && (i + 1 == values.len() || values[i + 1] <= *v)
        })
        .unwrap();
    lo + first
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
