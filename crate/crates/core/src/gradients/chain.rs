//! End-to-end gradients of the waveform loss with respect to the cepstral
//! features, and a gradient-descent fitting loop built on them.
//!
//! f0 and pulse placement are not differentiated: the pulse train enters as
//! a fixed signal, as when a model is trained with ground-truth pitch.

use crate::cepstrum::{CepstralTrack, CoefficientSchedule, FrameInterpolation};
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::excitation::Signal;
use crate::filters::{ExpFilterConfig, Realization, SynthesisInput, TapLayout, ZeroPhaseConfig};
use crate::gradients::tape::{GradientTape, Var};
use crate::losses::{LossReport, StftConfig};
use crate::num::Real;

/// Filter, aperiodicity and loss settings for one chain evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub filter: ExpFilterConfig,
    pub zero_phase: ZeroPhaseConfig,
    pub losses: Vec<StftConfig>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            filter: ExpFilterConfig::default(),
            zero_phase: ZeroPhaseConfig::default(),
            losses: StftConfig::defaults(),
        }
    }
}

/// The synthesis chain and its loss recorded on one tape.
pub struct RecordedChain<T: Real> {
    pub tape: GradientTape<T>,
    pub envelope: Var,
    pub aperiodicity: Var,
    pub noise: Var,
    pub pulses: Var,
    pub output: Var,
    pub loss: Var,
    pub report: LossReport,
}

impl<T: Real> RecordedChain<T> {
    pub fn output(&self) -> &[T] {
        self.tape.value(self.output).expect("output recorded on this tape")
    }
}

/// Records `synthesize` followed by the multi-resolution loss against
/// `target`. The forward values match [`crate::synthesize`] bit for bit.
pub fn record_chain<T: Real>(
    input: &SynthesisInput<T>,
    target: &[T],
    cfg: &ChainConfig,
) -> Result<RecordedChain<T>> {
    input.validate()?;
    let noise = input.noise().samples;
    let pulses = input.pulses()?.samples;
    record_chain_from(input, noise, pulses, target, cfg)
}

/// As [`record_chain`] with caller-supplied noise and pulse signals in place
/// of the ones generated from `input`.
pub fn record_chain_from<T: Real>(
    input: &SynthesisInput<T>,
    noise: Vec<T>,
    pulses: Vec<T>,
    target: &[T],
    cfg: &ChainConfig,
) -> Result<RecordedChain<T>> {
    input.validate()?;
    cfg.filter.validate()?;
    cfg.zero_phase.validate()?;
    let total = input.total_len();
    if noise.len() != total || pulses.len() != total {
        return Err(invalid_input("noise and pulses must span the synthesis length"));
    }
    if target.len() != total {
        return Err(invalid_input(format!(
            "target has {} samples, synthesis produces {total}",
            target.len()
        )));
    }
    let mut tape = GradientTape::new();
    let env = &input.envelope;
    let ap = &input.aperiodicity;

    let envelope = tape.leaf(env.as_slice().to_vec());
    let aperiodicity = tape.leaf(ap.as_slice().to_vec());
    let noise = tape.leaf(noise);
    let pulses = tape.leaf(pulses);

    // aperiodicity branch
    let zp = &cfg.zero_phase;
    let ap_dim = zp.order() + 1;
    let ap_lin = tape.freqt(aperiodicity, ap.order(), ap.warp(), zp.order(), T::zero())?;
    let plan = FrameInterpolation::new(ap.n_frames(), ap.frame_hop(), total, zp.interp, zp.segment_len)?;
    let ap_seg_len = plan.segment_len();
    let ap_seg = tape.blend(ap_lin, ap_dim, plan)?;
    let zp_taps = tape.zero_phase_taps(ap_seg, ap_dim, zp)?;
    let zp_layout = TapLayout {
        tap_len: 2 * zp.half_taps + 1,
        segment_len: ap_seg_len,
        origin: zp.half_taps,
    };
    let excitation = match (&input.post_a, &input.post_p) {
        (None, None) => {
            let diff = tape.sub(noise, pulses)?;
            let shaped = tape.tv_fir(zp_taps, zp_layout, diff)?;
            tape.add(pulses, shaped)?
        }
        (post_a, post_p) => {
            let aperiodic = tape.tv_fir(zp_taps, zp_layout, noise)?;
            let ha_pulses = tape.tv_fir(zp_taps, zp_layout, pulses)?;
            let periodic = tape.sub(pulses, ha_pulses)?;
            let a = match post_a {
                Some(h) => tape.post_filter(h.clone(), aperiodic)?,
                None => aperiodic,
            };
            let p = match post_p {
                Some(h) => tape.post_filter(h.clone(), periodic)?,
                None => periodic,
            };
            tape.add(a, p)?
        }
    };

    // envelope branch
    let f = &cfg.filter;
    let env_dim = f.cepstrum_order + 1;
    let env_lin = tape.freqt(envelope, env.order(), env.warp(), f.cepstrum_order, T::zero())?;
    let plan = FrameInterpolation::new(env.n_frames(), env.frame_hop(), total, f.interp, f.segment_len)?;
    let env_seg_len = plan.segment_len();
    let env_seg = tape.blend(env_lin, env_dim, plan)?;
    let output = match f.realization {
        Realization::Cascade => tape.exp_cascade(env_seg, env_dim, env_seg_len, excitation, f.maclaurin_order)?,
        Realization::SingleFir => {
            let taps = tape.min_phase_taps(env_seg, env_dim, f.ir_length)?;
            tape.tv_fir(taps, TapLayout::causal(f.ir_length, env_seg_len), excitation)?
        }
    };

    let (loss, report) = tape.multi_res_loss(output, target, &cfg.losses)?;
    Ok(RecordedChain {
        tape,
        envelope,
        aperiodicity,
        noise,
        pulses,
        output,
        loss,
        report,
    })
}

/// Loss value and its gradients with respect to every differentiable input.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainGradients<T> {
    pub report: LossReport,
    /// Frame-major, same layout as the envelope track.
    pub envelope: Vec<T>,
    /// Frame-major, same layout as the aperiodicity track.
    pub aperiodicity: Vec<T>,
    pub noise: Vec<T>,
    pub pulses: Vec<T>,
}

/// `upstream * d(loss)/d(inputs)` for the whole chain.
pub fn vjp_chain<T: Real>(
    input: &SynthesisInput<T>,
    target: &Signal<T>,
    cfg: &ChainConfig,
    upstream: T,
) -> Result<ChainGradients<T>> {
    let mut rec = record_chain(input, target.as_slice(), cfg)?;
    let adj = rec.tape.backward(rec.loss, &[upstream])?;
    Ok(ChainGradients {
        report: rec.report,
        envelope: adj.get(rec.envelope)?,
        aperiodicity: adj.get(rec.aperiodicity)?,
        noise: adj.get(rec.noise)?,
        pulses: adj.get(rec.pulses)?,
    })
}

/// `(input_bar, taps_bar)` for `y = tv_fir(schedule, x)` and upstream `y_bar`.
pub fn vjp_tv_fir<T: Real>(
    schedule: &CoefficientSchedule<T>,
    input: &[T],
    upstream: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    if input.len() != schedule.total_len() || upstream.len() != input.len() {
        return Err(invalid_input("schedule, input and upstream lengths differ"));
    }
    let mut tape = GradientTape::new();
    let taps = tape.leaf(schedule.as_slice().to_vec());
    let x = tape.leaf(input.to_vec());
    let y = tape.tv_fir(taps, TapLayout::of(schedule), x)?;
    let adj = tape.backward(y, upstream)?;
    Ok((adj.get(x)?, adj.get(taps)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub iters: usize,
    pub step: f64,
    /// Heavy-ball momentum; 0 gives plain gradient descent.
    pub momentum: f64,
    pub chain: ChainConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iters: 500,
            step: 1e-2,
            momentum: 0.9,
            chain: ChainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub envelope: CepstralTrack<T>,
    pub aperiodicity: CepstralTrack<T>,
    /// Loss before the first step and after each step (`iters + 1` entries).
    pub history: Vec<f64>,
}

/// Gradient descent on envelope and aperiodicity cepstra minimizing the
/// multi-resolution STFT loss against `target`.
///
/// Fails with [`Error::Divergence`] once the loss exceeds 1000 times its
/// initial value or stops being finite.
pub fn fit_cepstra<T: Real>(
    target: &Signal<T>,
    init: &SynthesisInput<T>,
    opts: &FitOptions,
) -> Result<FitResult<T>> {
    if opts.iters == 0 {
        return Err(invalid_param("iters must be at least 1"));
    }
    if !(opts.step.is_finite() && opts.step >= 0.0) {
        return Err(invalid_param(format!("step {} must be nonnegative", opts.step)));
    }
    if !(0.0..1.0).contains(&opts.momentum) {
        return Err(invalid_param(format!("momentum {} outside [0, 1)", opts.momentum)));
    }
    let mut current = init.clone();
    let n_env = current.envelope.as_slice().len();
    let mut velocity = vec![T::zero(); n_env + current.aperiodicity.as_slice().len()];
    let step = T::c(opts.step);
    let mu = T::c(opts.momentum);
    let mut history = Vec::with_capacity(opts.iters + 1);
    for it in 0..=opts.iters {
        let grads = vjp_chain(&current, target, &opts.chain, T::one())?;
        let loss = grads.report.total;
        history.push(loss);
        let initial = history[0];
        if !loss.is_finite() || loss > 1e3 * initial {
            return Err(Error::Divergence {
                iteration: it,
                loss,
                initial,
                history,
            });
        }
        if it == opts.iters {
            break;
        }
        let mut params: Vec<T> = current
            .envelope
            .as_slice()
            .iter()
            .chain(current.aperiodicity.as_slice())
            .copied()
            .collect();
        for ((p, v), &g) in params
            .iter_mut()
            .zip(velocity.iter_mut())
            .zip(grads.envelope.iter().chain(&grads.aperiodicity))
        {
            *v = mu * *v - step * g;
            *p += *v;
        }
        let ap = params.split_off(n_env);
        current.envelope = current.envelope.with_data(params)?;
        current.aperiodicity = current.aperiodicity.with_data(ap)?;
    }
    Ok(FitResult {
        envelope: current.envelope,
        aperiodicity: current.aperiodicity,
        history,
    })
}
