//! Central-difference verification of the hand-written adjoints.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::cepstrum::{CepstralTrack, FrameInterpolation, Interp};
use crate::error::{invalid_param, Error, Result};
use crate::excitation::{F0Track, Signal};
use crate::filters::{ExpFilterConfig, SynthesisInput, TapLayout, ZeroPhaseConfig};
use crate::gradients::chain::{record_chain_from, ChainConfig};
use crate::gradients::tape::{GradientTape, Var};
use crate::losses::{stft_magnitude, StftConfig};

/// Finite-difference step used by [`gradcheck`].
pub const FD_STEP: f64 = 1e-4;

/// Default pass threshold on the maximum relative error.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    TvFir,
    ExpFilter,
    ZeroPhase,
    Mixed,
    Loss,
    Chain,
}

impl Component {
    pub const ALL: [Component; 6] = [
        Component::TvFir,
        Component::ExpFilter,
        Component::ZeroPhase,
        Component::Mixed,
        Component::Loss,
        Component::Chain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::TvFir => "tv_fir",
            Component::ExpFilter => "exp_filter",
            Component::ZeroPhase => "zero_phase",
            Component::Mixed => "mixed",
            Component::Loss => "loss",
            Component::Chain => "chain",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('_', "-") == s)
            .ok_or_else(|| invalid_param(format!("unknown component '{s}'")))
    }
}

/// Problem size for [`gradcheck`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckSize {
    pub frames: usize,
    /// Order of the warped cepstral tracks.
    pub order: usize,
    pub samples: usize,
    /// Taps per segment for the bare `tv_fir` check.
    pub taps: usize,
}

impl Default for GradCheckSize {
    fn default() -> Self {
        Self {
            frames: 3,
            order: 4,
            samples: 1200,
            taps: 3,
        }
    }
}

/// Errors for one parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: String,
    pub count: usize,
    /// Probes whose `[x - h, x + h]` interval crosses a kink of the loss;
    /// their central differences are not derivative estimates and are left
    /// out of the error maxima.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub component: Component,
    pub groups: Vec<GroupCheck>,
    pub threshold: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_abs_error).fold(0.0, f64::max)
    }
}

/// Compares `analytic` with central differences of `f` at `x`.
///
/// The relative error is normwise: `max_i |a_i - n_i| / max(max_j |a_j|,
/// max_j |n_j|)`, falling back to the absolute error when both gradients
/// vanish.
pub fn check_gradient<F>(name: &str, mut f: F, x: &[f64], analytic: &[f64], step: f64) -> GroupCheck
where
    F: FnMut(&[f64]) -> f64,
{
    probe_gradient(name, |p| (f(p), Vec::new()), x, analytic, step)
}

/// As [`check_gradient`] for an objective that also reports the branch
/// pattern of its non-smooth pieces. Probes where the pattern differs
/// between `x - h` and `x + h` are counted as kinks and skipped.
fn probe_gradient<F>(name: &str, mut f: F, x: &[f64], analytic: &[f64], step: f64) -> GroupCheck
where
    F: FnMut(&[f64]) -> (f64, Vec<bool>),
{
    assert_eq!(x.len(), analytic.len(), "gradient length differs from parameters");
    let mut probe = x.to_vec();
    let mut kinks = 0;
    let numeric: Vec<Option<f64>> = (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let (up, up_branch) = f(&probe);
            probe[i] = x[i] - step;
            let (down, down_branch) = f(&probe);
            probe[i] = x[i];
            if up_branch != down_branch {
                kinks += 1;
                return None;
            }
            Some((up - down) / (2.0 * step))
        })
        .collect();
    let pairs = || analytic.iter().zip(&numeric).filter_map(|(&a, n)| n.map(|n| (a, n)));
    let scale = pairs().fold(0.0f64, |m, (a, n)| m.max(a.abs()).max(n.abs()));
    let max_abs = pairs().fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let max_rel = if scale > 0.0 { max_abs / scale } else { max_abs };
    GroupCheck {
        name: name.to_string(),
        count: x.len(),
        kinks,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
    }
}

/// Parameters and output of one tape recording.
struct Recording {
    tape: GradientTape<f64>,
    params: Vec<Var>,
    output: Var,
    /// Branch pattern of the non-smooth pieces of the objective.
    branches: Vec<bool>,
}

type Builder<'a> = dyn Fn(&[Vec<f64>]) -> Result<Recording> + 'a;

/// `<w, out>` when `weights` is set, otherwise the scalar output itself.
fn objective(rec: Recording, weights: Option<&[f64]>) -> Result<(f64, Vec<bool>)> {
    let y = rec.tape.value(rec.output)?;
    let v = match weights {
        Some(w) => w.iter().zip(y).map(|(a, b)| a * b).sum(),
        None => y[0],
    };
    Ok((v, rec.branches))
}

/// Which side of `|log(A_hat + eps) - log(A + eps)|` each bin is on; the
/// L1 term is smooth while this pattern is fixed.
fn l1_branches(estimate: &[f64], target: &[f64], configs: &[StftConfig]) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for cfg in configs {
        let a = stft_magnitude(&Signal::new(target.to_vec(), 1.0)?, cfg)?;
        let b = stft_magnitude(&Signal::new(estimate.to_vec(), 1.0)?, cfg)?;
        out.extend(a.data.iter().zip(&b.data).map(|(a, b)| b > a));
    }
    Ok(out)
}

fn run_check(
    component: Component,
    names: &[&str],
    params: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
    build: &Builder<'_>,
    threshold: f64,
    step: f64,
) -> Result<GradCheckReport> {
    let mut rec = build(&params)?;
    let upstream = match &weights {
        Some(w) => w.clone(),
        None => vec![1.0],
    };
    let leaves = rec.params.clone();
    let adj = rec.tape.backward(rec.output, &upstream)?;
    let mut groups = Vec::with_capacity(params.len());
    for (g, name) in names.iter().enumerate() {
        let analytic = adj.get(leaves[g])?;
        let mut failure = None;
        let check = probe_gradient(
            name,
            |x| {
                let mut p = params.clone();
                p[g] = x.to_vec();
                match build(&p).and_then(|r| objective(r, weights.as_deref())) {
                    Ok(v) => v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        (f64::NAN, Vec::new())
                    }
                }
            },
            &params[g],
            &analytic,
            step,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        groups.push(check);
    }
    let passed = groups.iter().all(|g| g.max_rel_error < threshold);
    Ok(GradCheckReport {
        component,
        groups,
        threshold,
        passed,
    })
}

fn normals(rng: &mut ChaCha20Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Smooth random warped cepstra: `c(0)` around `bias`, `c(m)` decaying as `1/m`.
fn random_cepstra(rng: &mut ChaCha20Rng, frames: usize, order: usize, bias: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(frames * (order + 1));
    for _ in 0..frames {
        for m in 0..=order {
            let z: f64 = rng.sample(StandardNormal);
            out.push(if m == 0 { bias + 0.2 * z } else { 0.3 * z / m as f64 });
        }
    }
    out
}

const WARP: f64 = 0.55;
const SAMPLE_RATE: f64 = 16_000.0;

fn toy_filter(hop: usize) -> ExpFilterConfig {
    ExpFilterConfig {
        cepstrum_order: 24,
        interp: Interp::Linear,
        segment_len: Some((hop / 4).max(1)),
        ..ExpFilterConfig::default()
    }
}

fn toy_zero_phase(hop: usize) -> ZeroPhaseConfig {
    ZeroPhaseConfig {
        interp: Interp::Linear,
        segment_len: Some((hop / 4).max(1)),
        ..ZeroPhaseConfig::new(16)
    }
}

fn toy_losses(samples: usize) -> Vec<StftConfig> {
    let base = (samples / 8).max(8);
    [base, 2 * base, 4 * base]
        .into_iter()
        .filter(|&w| w <= samples)
        .map(StftConfig::with_overlap)
        .collect()
}

/// Checks the adjoint of one component against central differences (step
/// [`FD_STEP`]) on a random instance. Always runs in 64-bit arithmetic.
pub fn gradcheck(component: Component, size: GradCheckSize, seed: u64, threshold: f64) -> Result<GradCheckReport> {
    gradcheck_with_step(component, size, seed, threshold, FD_STEP)
}

/// [`gradcheck`] with an explicit finite-difference step.
pub fn gradcheck_with_step(
    component: Component,
    size: GradCheckSize,
    seed: u64,
    threshold: f64,
    step: f64,
) -> Result<GradCheckReport> {
    let GradCheckSize {
        frames,
        order,
        samples,
        taps,
    } = size;
    if frames == 0 || samples < frames || taps == 0 {
        return Err(invalid_param("gradcheck sizes must be positive with samples >= frames"));
    }
    if !(threshold > 0.0) {
        return Err(invalid_param("threshold must be positive"));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid_param("step must be positive"));
    }
    let hop = samples / frames;
    let total = hop * frames;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    match component {
        Component::TvFir => {
            let seg = (total / frames).max(1);
            let n_seg = total.div_ceil(seg);
            let layout = TapLayout {
                tap_len: taps,
                segment_len: seg,
                origin: taps / 2,
            };
            let params = vec![normals(&mut rng, n_seg * taps, 1.0), normals(&mut rng, total, 1.0)];
            let w = normals(&mut rng, total, 1.0);
            let build = move |p: &[Vec<f64>]| {
                let mut tape = GradientTape::new();
                let h = tape.leaf(p[0].clone());
                let x = tape.leaf(p[1].clone());
                let output = tape.tv_fir(h, layout, x)?;
                Ok(Recording {
                    tape,
                    params: vec![h, x],
                    output,
                    branches: Vec::new(),
                })
            };
            run_check(component, &["taps", "input"], params, Some(w), &build, threshold, step)
        }
        Component::ExpFilter => {
            let cfg = toy_filter(hop);
            let params = vec![random_cepstra(&mut rng, frames, order, 0.0), normals(&mut rng, total, 1.0)];
            let w = normals(&mut rng, total, 1.0);
            let build = move |p: &[Vec<f64>]| {
                let mut tape = GradientTape::new();
                let c = tape.leaf(p[0].clone());
                let x = tape.leaf(p[1].clone());
                let n = cfg.cepstrum_order;
                let lin = tape.freqt(c, order, WARP, n, 0.0)?;
                let plan = FrameInterpolation::new(frames, hop, total, cfg.interp, cfg.segment_len)?;
                let seg_len = plan.segment_len();
                let seg = tape.blend(lin, n + 1, plan)?;
                let output = tape.exp_cascade(seg, n + 1, seg_len, x, cfg.maclaurin_order)?;
                Ok(Recording {
                    tape,
                    params: vec![c, x],
                    output,
                    branches: Vec::new(),
                })
            };
            run_check(component, &["envelope", "input"], params, Some(w), &build, threshold, step)
        }
        Component::ZeroPhase | Component::Mixed => {
            let zp = toy_zero_phase(hop);
            let mut params = vec![random_cepstra(&mut rng, frames, order, -1.0), normals(&mut rng, total, 1.0)];
            if component == Component::Mixed {
                params.push(normals(&mut rng, total, 1.0));
            }
            let mixed = component == Component::Mixed;
            let w = normals(&mut rng, total, 1.0);
            let build = move |p: &[Vec<f64>]| {
                let mut tape = GradientTape::new();
                let c = tape.leaf(p[0].clone());
                let x = tape.leaf(p[1].clone());
                let na = zp.order();
                let lin = tape.freqt(c, order, WARP, na, 0.0)?;
                let plan = FrameInterpolation::new(frames, hop, total, zp.interp, zp.segment_len)?;
                let layout = TapLayout {
                    tap_len: 2 * zp.half_taps + 1,
                    segment_len: plan.segment_len(),
                    origin: zp.half_taps,
                };
                let seg = tape.blend(lin, na + 1, plan)?;
                let h = tape.zero_phase_taps(seg, na + 1, &zp)?;
                if mixed {
                    let pulses = tape.leaf(p[2].clone());
                    let d = tape.sub(x, pulses)?;
                    let f = tape.tv_fir(h, layout, d)?;
                    let output = tape.add(pulses, f)?;
                    Ok(Recording {
                        tape,
                        params: vec![c, x, pulses],
                        output,
                        branches: Vec::new(),
                    })
                } else {
                    let output = tape.tv_fir(h, layout, x)?;
                    Ok(Recording {
                        tape,
                        params: vec![c, x],
                        output,
                        branches: Vec::new(),
                    })
                }
            };
            let names: &[&str] = if mixed {
                &["aperiodicity", "noise", "pulses"]
            } else {
                &["aperiodicity", "input"]
            };
            run_check(component, names, params, Some(w), &build, threshold, step)
        }
        Component::Loss => {
            let losses = toy_losses(total);
            let target = normals(&mut rng, total, 1.0);
            let params = vec![normals(&mut rng, total, 1.0)];
            let build = move |p: &[Vec<f64>]| {
                let mut tape = GradientTape::new();
                let x = tape.leaf(p[0].clone());
                let (output, _) = tape.multi_res_loss(x, &target, &losses)?;
                Ok(Recording {
                    tape,
                    params: vec![x],
                    output,
                    branches: l1_branches(&p[0], &target, &losses)?,
                })
            };
            run_check(component, &["estimate"], params, None, &build, threshold, step)
        }
        Component::Chain => {
            let cfg = ChainConfig {
                filter: toy_filter(hop),
                zero_phase: toy_zero_phase(hop),
                losses: toy_losses(total),
            };
            let f0 = F0Track::new(vec![120.0, 0.0, 150.0].into_iter().cycle().take(frames).collect(), hop, SAMPLE_RATE)?;
            let env = random_cepstra(&mut rng, frames, order, 0.0);
            let ap = random_cepstra(&mut rng, frames, order, -1.0);
            let base = SynthesisInput::new(
                CepstralTrack::new(env.clone(), order, WARP, hop)?,
                CepstralTrack::new(ap.clone(), order, WARP, hop)?,
                f0,
                seed,
            )?;
            let target = normals(&mut rng, total, 0.5);
            let mut params = vec![env, ap];
            params.push(base.noise().samples);
            params.push(base.pulses()?.samples);
            let build = move |p: &[Vec<f64>]| {
                let mut input = base.clone();
                input.envelope = input.envelope.with_data(p[0].clone())?;
                input.aperiodicity = input.aperiodicity.with_data(p[1].clone())?;
                let rec = record_chain_from(&input, p[2].clone(), p[3].clone(), &target, &cfg)?;
                let branches = l1_branches(rec.output(), &target, &cfg.losses)?;
                Ok(Recording {
                    branches,
                    params: vec![rec.envelope, rec.aperiodicity, rec.noise, rec.pulses],
                    output: rec.loss,
                    tape: rec.tape,
                })
            };
            run_check(
                component,
                &["envelope", "aperiodicity", "noise", "pulses"],
                params,
                None,
                &build,
                threshold,
                step,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v * v).sum()
    }

    #[test]
    fn exact_gradient_passes() {
        let x = [0.3, -1.2, 2.0];
        let g: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        let c = check_gradient("cubic", cubic, &x, &g, FD_STEP);
        assert_eq!(c.count, 3);
        assert_eq!(c.kinks, 0);
        assert!(c.max_rel_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_fails() {
        let x = [0.3, -1.2, 2.0];
        let mut g: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        g[1] *= 1.01;
        let c = check_gradient("cubic", cubic, &x, &g, FD_STEP);
        assert!(c.max_rel_error > 1e-3);
    }

    #[test]
    fn kinks_are_skipped() {
        let f = |x: &[f64]| (x.iter().map(|v| v.abs()).sum(), x.iter().map(|v| *v > 0.0).collect());
        let c = probe_gradient("abs", f, &[0.0, 2.0], &[123.0, 1.0], 1e-3);
        assert_eq!(c.kinks, 1);
        assert!(c.max_rel_error < 1e-12);
    }

    #[test]
    fn component_names_round_trip() {
        for c in Component::ALL {
            assert_eq!(c.name().parse::<Component>().unwrap(), c);
        }
        assert_eq!("zero-phase".parse::<Component>().unwrap(), Component::ZeroPhase);
        assert!("nope".parse::<Component>().is_err());
    }

    #[test]
    fn bad_settings_are_rejected() {
        let size = GradCheckSize::default();
        assert!(gradcheck(Component::TvFir, size, 0, 0.0).is_err());
        assert!(gradcheck_with_step(Component::TvFir, size, 0, 1e-4, -1.0).is_err());
        let empty = GradCheckSize { frames: 0, ..size };
        assert!(gradcheck(Component::TvFir, empty, 0, 1e-4).is_err());
    }

    #[test]
    fn tv_fir_report_is_deterministic() {
        let size = GradCheckSize::default();
        let a = gradcheck(Component::TvFir, size, 3, DEFAULT_THRESHOLD).unwrap();
        let b = gradcheck(Component::TvFir, size, 3, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(a, b);
        assert!(a.passed);
        assert_eq!(a.component, Component::TvFir);
    }
}
