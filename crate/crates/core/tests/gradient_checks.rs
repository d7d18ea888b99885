mod common;

use common::*;
use melcep::gradients::{check_gradient, gradcheck_with_step, record_chain, DEFAULT_THRESHOLD, FD_STEP};
use melcep::*;

const FS: f64 = 16_000.0;

/// `<w, L x>` against `<L^T w, x>` for a tape-recorded linear map.
fn dot_product_gap(
    x: &[f64],
    out_len: usize,
    seed: u64,
    record: impl Fn(&mut GradientTape<f64>, gradients::Var) -> gradients::Var,
) -> f64 {
    let mut r = rng(seed);
    let w = normals(&mut r, out_len);
    let mut tape = GradientTape::new();
    let leaf = tape.leaf(x.to_vec());
    let y = record(&mut tape, leaf);
    let forward = dot(&w, tape.value(y).unwrap());
    let adj = tape.backward(y, &w).unwrap();
    let back = dot(&adj.get(leaf).unwrap(), x);
    (forward - back).abs() / forward.abs().max(back.abs())
}

#[test]
fn freqt_dot_product() {
    let x = normals(&mut rng(1), 4 * 25);
    let gap = dot_product_gap(&x, 4 * 200, 2, |t, v| t.freqt(v, 24, 0.55, 199, 0.0).unwrap());
    assert!(gap < 1e-10, "{gap}");
}

#[test]
fn blend_dot_product() {
    let x = normals(&mut rng(3), 5 * 11);
    let plan = FrameInterpolation::new(5, 40, 200, Interp::Linear, Some(7)).unwrap();
    let out = plan.segment_len();
    let segments = 200usize.div_ceil(out);
    let gap = dot_product_gap(&x, segments * 11, 4, |t, v| t.blend(v, 11, plan.clone()).unwrap());
    assert!(gap < 1e-10, "{gap}");
}

#[test]
fn tv_fir_dot_products() {
    let mut r = rng(5);
    let layout = TapLayout {
        tap_len: 9,
        segment_len: 13,
        origin: 4,
    };
    let taps = normals(&mut r, 8 * 9);
    let x = normals(&mut r, 100);
    let (tc, xc) = (taps.clone(), x.clone());
    let gap_x = dot_product_gap(&x, 100, 6, move |t, v| {
        let h = t.leaf(tc.clone());
        t.tv_fir(h, layout, v).unwrap()
    });
    let gap_h = dot_product_gap(&taps, 100, 7, move |t, h| {
        let v = t.leaf(xc.clone());
        t.tv_fir(h, layout, v).unwrap()
    });
    assert!(gap_x < 1e-10 && gap_h < 1e-10, "{gap_x} {gap_h}");
}

#[test]
fn exp_cascade_dot_product_in_signal() {
    let mut r = rng(8);
    let segs: Vec<f64> = (0..6).flat_map(|_| cepstrum_l1(&mut r, 24, 1.0)).collect();
    let x = normals(&mut r, 6 * 32);
    let gap = dot_product_gap(&x, x.len(), 9, move |t, v| {
        let c = t.leaf(segs.clone());
        t.exp_cascade(c, 25, 32, v, 20).unwrap()
    });
    assert!(gap < 1e-10, "{gap}");
}

/// The aperiodicity-shaped excitation as a function of one source with the
/// other held at zero, which makes it linear.
fn excitation_gap(noise_is_input: bool, seed: u64) -> f64 {
    let n = 600;
    let ap: Vec<f64> = (0..4 * 25).map(|i| if i % 25 == 0 { -1.0 } else { 0.3 / i as f64 }).collect();
    let cfg = ZeroPhaseConfig::new(32);
    let x = normals(&mut rng(seed), n);
    dot_product_gap(&x, n, seed + 1, move |t, source| {
        let zeros = t.leaf(vec![0.0; n]);
        let (noise, pulses) = if noise_is_input { (source, zeros) } else { (zeros, source) };
        let a = t.leaf(ap.clone());
        let lin = t.freqt(a, 24, 0.55, cfg.order(), 0.0).unwrap();
        let plan = FrameInterpolation::new(4, 150, n, cfg.interp, cfg.segment_len).unwrap();
        let seg = plan.segment_len();
        let b = t.blend(lin, cfg.order() + 1, plan).unwrap();
        let h = t.zero_phase_taps(b, cfg.order() + 1, &cfg).unwrap();
        let d = t.sub(noise, pulses).unwrap();
        let layout = TapLayout {
            tap_len: 65,
            segment_len: seg,
            origin: 32,
        };
        let s = t.tv_fir(h, layout, d).unwrap();
        t.add(pulses, s).unwrap()
    })
}

#[test]
fn excitation_dot_products() {
    let (noise, pulses) = (excitation_gap(true, 10), excitation_gap(false, 20));
    assert!(noise < 1e-10 && pulses < 1e-10, "{noise} {pulses}");
}

#[test]
fn components_pass_gradcheck_at_pinned_step() {
    for c in Component::ALL.into_iter().filter(|c| *c != Component::Loss) {
        let report = gradcheck(c, GradCheckSize::default(), 0, DEFAULT_THRESHOLD).unwrap();
        assert!(report.passed, "{}: {:?}", c.name(), report.groups);
        assert!(report.groups.iter().all(|g| g.count > 0 && g.kinks < g.count));
    }
}

/// The standalone loss check at the pinned step is limited by the O(h^2)
/// truncation error of the central difference, not by the adjoint; see
/// `loss_gradcheck_error_is_finite_difference_truncation`.
#[test]
#[ignore = "fails at step 1e-4: central-difference truncation error 2.2e-4 on seed 0"]
fn loss_passes_gradcheck_at_pinned_step() {
    let report = gradcheck(Component::Loss, GradCheckSize::default(), 0, DEFAULT_THRESHOLD).unwrap();
    assert!(report.passed, "{:?}", report.groups);
}

#[test]
fn loss_gradcheck_error_is_finite_difference_truncation() {
    let size = GradCheckSize::default();
    for seed in 0..5 {
        let at = |h: f64| gradcheck_with_step(Component::Loss, size, seed, DEFAULT_THRESHOLD, h).unwrap();
        let (coarse, fine, finest) = (at(1e-4), at(1e-5), at(1e-6));
        let ratio = coarse.max_rel_error() / fine.max_rel_error();
        assert!((50.0..200.0).contains(&ratio), "seed {seed}: ratio {ratio}");
        assert!(finest.passed, "seed {seed}: {}", finest.max_rel_error());
    }
}

#[test]
fn linear_components_pass_on_several_seeds() {
    let size = GradCheckSize::default();
    for c in [Component::TvFir, Component::ExpFilter, Component::ZeroPhase, Component::Mixed] {
        for seed in 1..4 {
            let report = gradcheck(c, size, seed, DEFAULT_THRESHOLD).unwrap();
            assert!(report.max_rel_error() < 1e-6, "{} seed {seed}: {}", c.name(), report.max_rel_error());
        }
    }
}

#[test]
fn corrupted_adjoint_is_caught() {
    let mut r = rng(12);
    let taps = normals(&mut r, 5);
    let x = normals(&mut r, 40);
    let w = normals(&mut r, 40);
    let sched = CoefficientSchedule::time_invariant(&taps, 40).unwrap();
    let (_, mut taps_bar) = vjp_tv_fir(&sched, &x, &w).unwrap();
    let f = |h: &[f64]| {
        let s = CoefficientSchedule::time_invariant(h, 40).unwrap();
        dot(&w, &tv_fir(&s, &Signal::new(x.clone(), FS).unwrap()).unwrap().samples)
    };
    let good = check_gradient("taps", f, &taps, &taps_bar, FD_STEP);
    assert!(good.max_rel_error < 1e-8);
    taps_bar[2] += 0.05 * norm(&taps_bar);
    let bad = check_gradient("taps", f, &taps, &taps_bar, FD_STEP);
    assert!(bad.max_rel_error > DEFAULT_THRESHOLD);
}

#[test]
fn vjp_tv_fir_examples() {
    let id = CoefficientSchedule::time_invariant(&[1.0], 3).unwrap();
    let (xb, hb) = vjp_tv_fir(&id, &[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(xb, vec![4.0, 5.0, 6.0]);
    assert_eq!(hb, vec![32.0]);
    let delay = CoefficientSchedule::time_invariant(&[0.0, 1.0], 3).unwrap();
    let (xb, _) = vjp_tv_fir(&delay, &[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(xb, vec![5.0, 6.0, 0.0]);
    assert!(vjp_tv_fir(&delay, &[1.0, 2.0], &[1.0, 2.0]).is_err());
}

#[test]
fn vjp_tv_fir_matches_finite_differences() {
    let mut r = rng(13);
    let taps: Vec<Vec<f64>> = (0..4).map(|_| normals(&mut r, 3)).collect();
    let x = normals(&mut r, 16);
    let w = normals(&mut r, 16);
    let sched = CoefficientSchedule::new(taps.concat(), 3, 4, 16, 0).unwrap();
    let (xb, hb) = vjp_tv_fir(&sched, &x, &w).unwrap();
    let fx = |v: &[f64]| dot(&w, &naive_tv_fir(&taps, 4, 0, v));
    let fh = |h: &[f64]| {
        let t: Vec<Vec<f64>> = h.chunks(3).map(<[f64]>::to_vec).collect();
        dot(&w, &naive_tv_fir(&t, 4, 0, &x))
    };
    assert!(check_gradient("x", fx, &x, &xb, 1e-5).max_rel_error < 1e-6);
    assert!(check_gradient("taps", fh, &taps.concat(), &hb, 1e-5).max_rel_error < 1e-6);
}

/// `<w, power-sum exp filter>` as a function of segment cepstra.
fn power_sum_objective(c: &[f64], dim: usize, seg: usize, x: &[f64], w: &[f64], l: usize) -> f64 {
    let frames: Vec<Vec<f64>> = c.chunks(dim).map(<[f64]>::to_vec).collect();
    let taps: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let mut t = f.clone();
            t[0] = 0.0;
            t
        })
        .collect();
    let mut term = x.to_vec();
    let mut acc = x.to_vec();
    let mut fact = 1.0;
    for k in 1..=l {
        term = naive_tv_fir(&taps, seg, 0, &term);
        fact *= k as f64;
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t / fact;
        }
    }
    acc.iter()
        .enumerate()
        .map(|(t, v)| w[t] * v * frames[t / seg][0].exp())
        .sum()
}

#[test]
fn cascade_cepstral_gradient_matches_power_sum_form() {
    let mut r = rng(14);
    let (dim, seg, l) = (7, 10, 12);
    let c: Vec<f64> = (0..5).flat_map(|_| cepstrum_l1(&mut r, dim - 1, 0.8)).collect();
    let x = normals(&mut r, 5 * seg);
    let w = normals(&mut r, 5 * seg);
    let mut tape = GradientTape::new();
    let cv = tape.leaf(c.clone());
    let xv = tape.leaf(x.clone());
    let y = tape.exp_cascade(cv, dim, seg, xv, l).unwrap();
    let grad = tape.backward(y, &w).unwrap().get(cv).unwrap();
    let check = check_gradient("c", |p| power_sum_objective(p, dim, seg, &x, &w, l), &c, &grad, 1e-5);
    assert!(check.max_rel_error < 1e-7, "{}", check.max_rel_error);
}

fn small_input(seed: u64) -> SynthesisInput64 {
    let mut r = rng(seed);
    let (frames, hop) = (12, 250);
    let env: Vec<f64> = (0..frames).flat_map(|_| cepstrum_l1(&mut r, 24, 0.8)).collect();
    let ap: Vec<f64> = (0..frames)
        .flat_map(|_| {
            let mut c = cepstrum_l1(&mut r, 24, 0.3);
            c[0] = -1.0;
            c
        })
        .collect();
    let f0: Vec<f64> = (0..frames).map(|i| if i % 5 == 4 { 0.0 } else { 110.0 + 4.0 * i as f64 }).collect();
    SynthesisInput::new(
        CepstralTrack::new(env, 24, 0.55, hop).unwrap(),
        CepstralTrack::new(ap, 24, 0.55, hop).unwrap(),
        F0Track::new(f0, hop, FS).unwrap(),
        seed,
    )
    .unwrap()
}

fn small_chain() -> ChainConfig {
    ChainConfig {
        filter: ExpFilterConfig {
            cepstrum_order: 24,
            ..ExpFilterConfig::default()
        },
        zero_phase: ZeroPhaseConfig::new(32),
        losses: StftConfig::defaults(),
    }
}

#[test]
fn chain_forward_matches_synthesize() {
    let input = small_input(20);
    let cfg = small_chain();
    let y = synthesize(&input, &cfg.filter, &cfg.zero_phase).unwrap();
    let rec = record_chain(&input, y.as_slice(), &cfg).unwrap();
    assert_eq!(rec.output(), y.as_slice());
    assert_eq!(rec.report.total, 0.0);
}

#[test]
fn vjp_chain_zero_upstream_and_self_target() {
    let input = small_input(21);
    let cfg = small_chain();
    let target = Signal::new(gaussian_noise::<f64>(input.total_len(), 99, FS).samples, FS).unwrap();
    let g = vjp_chain(&input, &target, &cfg, 0.0).unwrap();
    assert!(g.report.total > 0.0);
    for part in [&g.envelope, &g.aperiodicity, &g.noise, &g.pulses] {
        assert!(part.iter().all(|v| *v == 0.0));
    }
    assert_eq!(g.envelope.len(), input.envelope.as_slice().len());
    let own = synthesize(&input, &cfg.filter, &cfg.zero_phase).unwrap();
    let g = vjp_chain(&input, &own, &cfg, 1.0).unwrap();
    assert_eq!(g.report.total, 0.0);
    assert!(norm(&g.envelope) < 1e-8 && norm(&g.aperiodicity) < 1e-8);
    let short = Signal::zeros(10, FS);
    assert!(vjp_chain(&input, &short, &cfg, 1.0).is_err());
}

#[test]
fn chain_gradient_single_precision_tracks_double() {
    let input = small_input(22);
    let cfg = small_chain();
    let target = gaussian_noise::<f64>(input.total_len(), 5, FS);
    let g64 = vjp_chain(&input, &target, &cfg, 1.0).unwrap();
    let to32 = |t: &CepstralTrack64| {
        CepstralTrack::new(t.as_slice().iter().map(|v| *v as f32).collect(), t.order(), t.warp() as f32, t.frame_hop())
            .unwrap()
    };
    let input32 = SynthesisInput::new(to32(&input.envelope), to32(&input.aperiodicity), input.f0.clone(), 22).unwrap();
    let target32 = Signal::new(target.as_slice().iter().map(|v| *v as f32).collect(), FS).unwrap();
    let g32 = vjp_chain(&input32, &target32, &cfg, 1.0).unwrap();
    assert!((g64.report.total - g32.report.total).abs() / g64.report.total < 1e-3);
    let diff: Vec<f64> = g64.envelope.iter().zip(&g32.envelope).map(|(a, b)| a - *b as f64).collect();
    assert!(norm(&diff) / norm(&g64.envelope) < 1e-2, "{}", norm(&diff) / norm(&g64.envelope));
}

#[test]
fn fit_with_zero_step_is_stationary() {
    let input = small_input(23);
    let target = gaussian_noise::<f64>(input.total_len(), 6, FS);
    let opts = FitOptions {
        iters: 3,
        step: 0.0,
        chain: small_chain(),
        ..FitOptions::default()
    };
    let fit = fit_cepstra(&target, &input, &opts).unwrap();
    assert_eq!(fit.envelope, input.envelope);
    assert_eq!(fit.aperiodicity, input.aperiodicity);
    assert_eq!(fit.history.len(), 4);
    assert!(fit.history.iter().all(|h| *h == fit.history[0]));
}

#[test]
fn fit_reduces_loss_and_rejects_bad_options() {
    let input = small_input(24);
    let cfg = small_chain();
    let mut shifted = input.clone();
    let mut env = input.envelope.as_slice().to_vec();
    for f in 0..12 {
        env[f * 25 + 1] += 0.1;
    }
    shifted.envelope = input.envelope.with_data(env).unwrap();
    let target = synthesize(&shifted, &cfg.filter, &cfg.zero_phase).unwrap();
    let opts = FitOptions {
        iters: 30,
        chain: cfg,
        ..FitOptions::default()
    };
    let fit = fit_cepstra(&target, &input, &opts).unwrap();
    assert_eq!(fit.history.len(), 31);
    assert!(fit.history[30] < fit.history[0]);
    for bad in [
        FitOptions { iters: 0, ..opts.clone() },
        FitOptions { step: -1.0, ..opts.clone() },
        FitOptions { momentum: 1.0, ..opts.clone() },
    ] {
        assert!(matches!(fit_cepstra(&target, &input, &bad), Err(Error::InvalidParameter(_))));
    }
}

#[test]
fn runaway_step_reports_divergence() {
    let input = small_input(25);
    let target = gaussian_noise::<f64>(input.total_len(), 7, FS);
    let opts = FitOptions {
        iters: 50,
        step: 1e4,
        momentum: 0.0,
        chain: small_chain(),
    };
    match fit_cepstra(&target, &input, &opts) {
        Err(Error::Divergence { iteration, history, .. }) => {
            assert!(iteration >= 1);
            assert_eq!(history.len(), iteration + 1);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}
