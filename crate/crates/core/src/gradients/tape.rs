//! Recording tape for the synthesis chain.
//!
//! Each operation appends a node holding its output and whatever the adjoint
//! needs; [`GradientTape::backward`] walks the nodes in reverse once.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::cepstrum::{effective_warp, freqt_frames, mpir, FrameInterpolation};
use crate::error::{invalid_input, Error, Result};
use crate::filters::{cascade_forward, tv_fir_raw, PostFilter, TapLayout, ZeroPhaseConfig, ZeroPhaseDesigner};
use crate::gradients::adjoint::{
    cascade_vjp, freqt_frames_adjoint, mpir_vjp, resolution_mag_bar, stft_vjp, tv_fir_vjp, zero_phase_vjp,
    CascadeSaved,
};
use crate::losses::{mag_from, sc_from, Analysis, LossReport, ResolutionLoss, Stft, StftConfig};
use crate::num::Real;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a particular tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op<T: Real> {
    Leaf,
    Freqt {
        input: usize,
        src_dim: usize,
        dst_dim: usize,
        warp: T,
    },
    Blend {
        input: usize,
        dim: usize,
        n_frames: usize,
        plan: FrameInterpolation<T>,
    },
    Cascade {
        cepstra: usize,
        input: usize,
        saved: CascadeSaved<T>,
    },
    MinPhase {
        cepstra: usize,
        dim: usize,
        ir_length: usize,
    },
    ZeroPhase {
        cepstra: usize,
        dim: usize,
        cfg: ZeroPhaseConfig,
        gains: Vec<Vec<T>>,
    },
    TvFir {
        taps: usize,
        input: usize,
        layout: TapLayout,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Hook {
        input: usize,
        hook: Arc<dyn PostFilter<T>>,
    },
    Loss {
        input: usize,
        configs: Vec<StftConfig>,
        reference: Vec<Vec<T>>,
        analyses: Vec<Analysis<T>>,
    },
}

struct Node<T: Real> {
    value: Vec<T>,
    op: Op<T>,
}

pub struct GradientTape<T: Real> {
    id: u64,
    nodes: Vec<Node<T>>,
    consumed: bool,
}

impl<T: Real> Default for GradientTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Adjoints<T> {
    tape: u64,
    grads: Vec<Vec<T>>,
    lens: Vec<usize>,
}

impl<T: Real> Adjoints<T> {
    /// Gradient for `v`, zero-filled if nothing reached it.
    pub fn get(&self, v: Var) -> Result<Vec<T>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::InvalidState("variable belongs to a different tape".into()));
        }
        let g = &self.grads[v.index];
        Ok(if g.is_empty() {
            vec![T::zero(); self.lens[v.index]]
        } else {
            g.clone()
        })
    }
}

fn accumulate<T: Real>(grads: &mut [Vec<T>], lens: &[usize], idx: usize, contrib: &[T]) {
    let g = &mut grads[idx];
    if g.is_empty() {
        *g = vec![T::zero(); lens[idx]];
    }
    for (a, &b) in g.iter_mut().zip(contrib) {
        *a += b;
    }
}

impl<T: Real> GradientTape<T> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::InvalidState("variable belongs to a different tape".into()));
        }
        if self.consumed {
            return Err(Error::InvalidState("tape already consumed by backward".into()));
        }
        Ok(v.index)
    }

    pub fn value(&self, v: Var) -> Result<&[T]> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::InvalidState("variable belongs to a different tape".into()));
        }
        Ok(&self.nodes[v.index].value)
    }

    pub fn leaf(&mut self, values: Vec<T>) -> Var {
        self.push(values, Op::Leaf)
    }

    /// Frame-wise frequency transform between warps.
    pub fn freqt(
        &mut self,
        cepstra: Var,
        src_order: usize,
        src_warp: T,
        dst_order: usize,
        dst_warp: T,
    ) -> Result<Var> {
        let i = self.idx(cepstra)?;
        let src_dim = src_order + 1;
        if self.nodes[i].value.len() % src_dim != 0 {
            return Err(invalid_input("cepstra do not divide into frames"));
        }
        let warp = effective_warp(src_warp, dst_warp);
        let value = freqt_frames(&self.nodes[i].value, src_dim, dst_order, warp);
        Ok(self.push(
            value,
            Op::Freqt {
                input: i,
                src_dim,
                dst_dim: dst_order + 1,
                warp,
            },
        ))
    }

    /// Frame-to-segment interpolation.
    pub fn blend(&mut self, cepstra: Var, dim: usize, plan: FrameInterpolation<T>) -> Result<Var> {
        let i = self.idx(cepstra)?;
        let n_frames = self.nodes[i].value.len() / dim;
        if plan.blends().iter().any(|&(_, hi, _)| hi >= n_frames) {
            return Err(invalid_input("interpolation plan refers to missing frames"));
        }
        let value = plan.apply(&self.nodes[i].value, dim);
        Ok(self.push(
            value,
            Op::Blend {
                input: i,
                dim,
                n_frames,
                plan,
            },
        ))
    }

    /// Horner-form Maclaurin cascade with per-segment gain `exp(c(0))`.
    pub fn exp_cascade(
        &mut self,
        cepstra: Var,
        dim: usize,
        segment_len: usize,
        input: Var,
        order: usize,
    ) -> Result<Var> {
        let (ci, xi) = (self.idx(cepstra)?, self.idx(input)?);
        let n = self.nodes[xi].value.len();
        if self.nodes[ci].value.len() != n.div_ceil(segment_len) * dim {
            return Err(invalid_input("segment cepstra do not cover the input"));
        }
        let pass = cascade_forward(&self.nodes[ci].value, dim, segment_len, &self.nodes[xi].value, order, true);
        let saved = CascadeSaved {
            dim,
            segment_len,
            order,
            gains: pass.gains,
            stages: pass.stages,
            output: pass.output.clone(),
        };
        Ok(self.push(
            pass.output,
            Op::Cascade {
                cepstra: ci,
                input: xi,
                saved,
            },
        ))
    }

    /// Minimum-phase impulse responses of segment cepstra.
    pub fn min_phase_taps(&mut self, cepstra: Var, dim: usize, ir_length: usize) -> Result<Var> {
        let i = self.idx(cepstra)?;
        let value = self.nodes[i]
            .value
            .chunks_exact(dim)
            .flat_map(|c| mpir(c, ir_length))
            .collect();
        Ok(self.push(
            value,
            Op::MinPhase {
                cepstra: i,
                dim,
                ir_length,
            },
        ))
    }

    /// Zero-phase taps (`2 * half_taps + 1` per segment) from linear-axis
    /// segment cepstra.
    pub fn zero_phase_taps(&mut self, cepstra: Var, dim: usize, cfg: &ZeroPhaseConfig) -> Result<Var> {
        let i = self.idx(cepstra)?;
        cfg.validate()?;
        let mut designer = ZeroPhaseDesigner::new(cfg);
        let mut value = Vec::new();
        let mut gains = Vec::new();
        for c in self.nodes[i].value.chunks_exact(dim) {
            let (taps, gain) = designer.design(c);
            value.extend(taps);
            gains.push(gain);
        }
        Ok(self.push(
            value,
            Op::ZeroPhase {
                cepstra: i,
                dim,
                cfg: cfg.clone(),
                gains,
            },
        ))
    }

    pub fn tv_fir(&mut self, taps: Var, layout: TapLayout, input: Var) -> Result<Var> {
        let (ti, xi) = (self.idx(taps)?, self.idx(input)?);
        let n = self.nodes[xi].value.len();
        if layout.origin >= layout.tap_len
            || self.nodes[ti].value.len() != n.div_ceil(layout.segment_len) * layout.tap_len
        {
            return Err(invalid_input("tap layout does not match the input"));
        }
        let value = tv_fir_raw(&self.nodes[ti].value, layout, &self.nodes[xi].value);
        Ok(self.push(
            value,
            Op::TvFir {
                taps: ti,
                input: xi,
                layout,
            },
        ))
    }

    fn binary(&mut self, a: Var, b: Var, sub: bool) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (x, y) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if x.len() != y.len() {
            return Err(invalid_input(format!("length mismatch {} vs {}", x.len(), y.len())));
        }
        let value = x
            .iter()
            .zip(y)
            .map(|(&p, &q)| if sub { p - q } else { p + q })
            .collect();
        Ok(self.push(value, if sub { Op::Sub(ai, bi) } else { Op::Add(ai, bi) }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, false)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, true)
    }

    pub fn post_filter(&mut self, hook: Arc<dyn PostFilter<T>>, input: Var) -> Result<Var> {
        let i = self.idx(input)?;
        let value = hook.apply(&self.nodes[i].value);
        if value.len() != self.nodes[i].value.len() {
            return Err(invalid_input("post filter changed the signal length"));
        }
        Ok(self.push(value, Op::Hook { input: i, hook }))
    }

    /// Multi-resolution STFT loss of the recorded estimate against `target`.
    pub fn multi_res_loss(
        &mut self,
        estimate: Var,
        target: &[T],
        configs: &[StftConfig],
    ) -> Result<(Var, LossReport)> {
        let i = self.idx(estimate)?;
        if configs.is_empty() {
            return Err(Error::InvalidParameter("at least one STFT resolution is required".into()));
        }
        if target.len() != self.nodes[i].value.len() {
            return Err(invalid_input(format!(
                "target has {} samples, estimate {}",
                target.len(),
                self.nodes[i].value.len()
            )));
        }
        let mut reference = Vec::new();
        let mut analyses = Vec::new();
        let mut parts = Vec::new();
        for cfg in configs {
            let mut stft = Stft::new(*cfg);
            let r = stft.analyze(target)?;
            let e = stft.analyze(&self.nodes[i].value)?;
            parts.push(ResolutionLoss {
                sc: sc_from(&r.mag, &e.mag)?.f64(),
                mag: mag_from(&r.mag, &e.mag).f64(),
            });
            reference.push(r.mag);
            analyses.push(e);
        }
        let report = LossReport::from_parts(parts);
        let var = self.push(
            vec![T::c(report.total)],
            Op::Loss {
                input: i,
                configs: configs.to_vec(),
                reference,
                analyses,
            },
        );
        Ok((var, report))
    }

    /// Reverse sweep from `output` seeded with `upstream`. A tape supports a
    /// single backward pass.
    pub fn backward(&mut self, output: Var, upstream: &[T]) -> Result<Adjoints<T>> {
        let out = self.idx(output)?;
        if upstream.len() != self.nodes[out].value.len() {
            return Err(invalid_input(format!(
                "upstream has {} entries, output {}",
                upstream.len(),
                self.nodes[out].value.len()
            )));
        }
        self.consumed = true;
        let lens: Vec<usize> = self.nodes.iter().map(|n| n.value.len()).collect();
        let mut grads: Vec<Vec<T>> = vec![Vec::new(); self.nodes.len()];
        grads[out] = upstream.to_vec();
        for idx in (0..=out).rev() {
            if grads[idx].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[idx]);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Freqt {
                    input,
                    src_dim,
                    dst_dim,
                    warp,
                } => {
                    let c = freqt_frames_adjoint(&g, *dst_dim, *src_dim, *warp);
                    accumulate(&mut grads, &lens, *input, &c);
                }
                Op::Blend {
                    input,
                    dim,
                    n_frames,
                    plan,
                } => {
                    let c = plan.adjoint(&g, *n_frames, *dim);
                    accumulate(&mut grads, &lens, *input, &c);
                }
                Op::Cascade { cepstra, input, saved } => {
                    let (c, x) = cascade_vjp(saved, &self.nodes[*cepstra].value, &self.nodes[*input].value, &g);
                    accumulate(&mut grads, &lens, *cepstra, &c);
                    accumulate(&mut grads, &lens, *input, &x);
                }
                Op::MinPhase {
                    cepstra,
                    dim,
                    ir_length,
                } => {
                    let c: Vec<T> = self.nodes[*cepstra]
                        .value
                        .chunks_exact(*dim)
                        .zip(node.value.chunks_exact(*ir_length))
                        .zip(g.chunks_exact(*ir_length))
                        .flat_map(|((c, h), gb)| mpir_vjp(c, h, gb))
                        .collect();
                    accumulate(&mut grads, &lens, *cepstra, &c);
                }
                Op::ZeroPhase {
                    cepstra,
                    dim,
                    cfg,
                    gains,
                } => {
                    let mut designer = ZeroPhaseDesigner::new(cfg);
                    let width = 2 * cfg.half_taps + 1;
                    let c: Vec<T> = g
                        .chunks_exact(width)
                        .zip(gains)
                        .flat_map(|(tb, gain)| zero_phase_vjp(&mut designer, gain, *dim, tb))
                        .collect();
                    accumulate(&mut grads, &lens, *cepstra, &c);
                }
                Op::TvFir { taps, input, layout } => {
                    let mut x_bar = vec![T::zero(); lens[*input]];
                    let mut t_bar = vec![T::zero(); lens[*taps]];
                    tv_fir_vjp(
                        &self.nodes[*taps].value,
                        *layout,
                        &self.nodes[*input].value,
                        &g,
                        &mut x_bar,
                        Some(&mut t_bar),
                    );
                    accumulate(&mut grads, &lens, *input, &x_bar);
                    accumulate(&mut grads, &lens, *taps, &t_bar);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, &lens, *a, &g);
                    accumulate(&mut grads, &lens, *b, &g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, &lens, *a, &g);
                    let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                    accumulate(&mut grads, &lens, *b, &neg);
                }
                Op::Hook { input, hook } => {
                    let x_bar = hook.vjp(&self.nodes[*input].value, &g).ok_or_else(|| {
                        Error::InvalidState("post filter has no vector-Jacobian product".into())
                    })?;
                    accumulate(&mut grads, &lens, *input, &x_bar);
                }
                Op::Loss {
                    input,
                    configs,
                    reference,
                    analyses,
                } => {
                    let scale = g[0] / T::n(2 * configs.len());
                    let len = lens[*input];
                    for ((cfg, r), a) in configs.iter().zip(reference).zip(analyses) {
                        let mag_bar: Vec<T> = resolution_mag_bar(r, &a.mag).into_iter().map(|v| v * scale).collect();
                        let mut stft = Stft::new(*cfg);
                        let x_bar = stft_vjp(&mut stft, a, &mag_bar, len);
                        accumulate(&mut grads, &lens, *input, &x_bar);
                    }
                }
            }
            grads[idx] = g;
        }
        Ok(Adjoints {
            tape: self.id,
            grads,
            lens,
        })
    }
}
