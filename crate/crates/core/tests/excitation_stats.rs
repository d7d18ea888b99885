mod common;

use melcep::*;
use proptest::prelude::*;

const FS: f64 = 16_000.0;

#[test]
fn noise_has_unit_variance_and_zero_mean() {
    let n = 1_000_000;
    let x: Signal64 = gaussian_noise(n, 7, FS);
    let mean = x.as_slice().iter().sum::<f64>() / n as f64;
    let var = x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    assert!(mean.abs() < 5e-3, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn noise_is_deterministic_per_seed() {
    let a: Signal64 = gaussian_noise(500, 3, FS);
    let b: Signal64 = gaussian_noise(500, 3, FS);
    let c: Signal64 = gaussian_noise(500, 4, FS);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let single: Signal32 = gaussian_noise(500, 3, FS);
    for (x, y) in a.as_slice().iter().zip(single.as_slice()) {
        assert_eq!(*x as f32, *y);
    }
    assert!(gaussian_noise::<f64>(0, 3, FS).is_empty());
}

fn pulse_count_and_integral(values: &[f64], hop: usize) -> (usize, f64) {
    let f0 = F0Track::new(values.to_vec(), hop, FS).unwrap();
    let n = f0.span();
    let p: Signal64 = pulse_train(&f0, n).unwrap();
    let count = p.as_slice().iter().filter(|v| **v != 0.0).count();
    let integral = (0..n).map(|t| f0.at_sample(t) / FS).sum();
    (count, integral)
}

#[test]
fn constant_pitch_pulse_count_and_power() {
    let hop = 80;
    let (count, integral) = pulse_count_and_integral(&[200.0; 200], hop);
    assert!((count as f64 - integral.floor()).abs() <= 1.0);
    let f0 = F0Track::constant(200.0, 200, hop, FS).unwrap();
    let p: Signal64 = pulse_train(&f0, f0.span()).unwrap();
    let power = p.as_slice().iter().map(|v| v * v).sum::<f64>() / p.len() as f64;
    assert!((power - 1.0).abs() < 0.02, "power {power}");
}

#[test]
fn unvoiced_track_is_silent() {
    let f0 = F0Track::new(vec![0.0; 10], 100, FS).unwrap();
    let p: Signal64 = pulse_train(&f0, 1000).unwrap();
    assert!(p.as_slice().iter().all(|v| *v == 0.0));
    assert!(pulse_train::<f64>(&f0, 1001).is_err());
}

#[test]
fn semitone_shift_round_trip() {
    let f0 = F0Track::new(vec![0.0, 100.0, 137.5, 0.0, 220.0], 80, FS).unwrap();
    for s in [-12.0, -7.0, 0.5, 3.0, 12.0] {
        let back = shift_semitones(&shift_semitones(&f0, s).unwrap(), -s).unwrap();
        for (a, b) in f0.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 2.0 * f64::EPSILON * a.abs());
        }
    }
    let up = shift_semitones(&f0, 12.0).unwrap();
    assert_eq!(up.values()[1], 200.0);
    assert_eq!(up.values()[0], 0.0);
    assert!(matches!(shift_semitones(&f0, 72.0), Err(Error::InvalidParameter(_))));
    assert!(shift_semitones(&f0, f64::NAN).is_err());
}

proptest! {
    #[test]
    fn pulse_count_tracks_integrated_frequency(
        values in prop::collection::vec(prop_oneof![Just(0.0), 60.0f64..400.0], 2..40),
        hop in 40usize..200,
    ) {
        let (count, integral) = pulse_count_and_integral(&values, hop);
        // Each voiced run restarts its phase, so a run can lose at most one pulse.
        let runs = values
            .iter()
            .zip(std::iter::once(&0.0).chain(values.iter()))
            .filter(|(v, prev)| **v > 0.0 && **prev == 0.0)
            .count();
        let lower = integral.floor() - runs.max(1) as f64;
        prop_assert!(count as f64 >= lower && count as f64 <= integral.floor() + 1.0,
            "count {} integral {}", count, integral);
    }
}

proptest! {
    #[test]
    fn single_run_pulse_count_is_within_one(f in 60.0f64..400.0, frames in 2usize..60) {
        let (count, integral) = pulse_count_and_integral(&vec![f; frames], 100);
        prop_assert!((count as f64 - integral.floor()).abs() <= 1.0);
    }
}
