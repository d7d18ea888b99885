//! Cepstrum algebra: frequency warping between all-pass warped axes,
//! cepstrum to minimum-phase impulse response conversion, and the mapping
//! from frame-rate cepstra to per-segment coefficient schedules.

use crate::error::{invalid_input, invalid_param, Result};
use crate::num::Real;

/// Per-frame (mel-)cepstral coefficient vectors on an all-pass warped
/// frequency axis.
///
/// Frames are stored contiguously, `order + 1` coefficients each. A warp of
/// zero means ordinary (linear-frequency) cepstra.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralTrack<T> {
    data: Vec<T>,
    order: usize,
    warp: T,
    frame_hop: usize,
}

impl<T: Real> CepstralTrack<T> {
    /// Builds a track from frame-major coefficients.
    pub fn new(data: Vec<T>, order: usize, warp: T, frame_hop: usize) -> Result<Self> {
        check_warp(warp)?;
        if frame_hop == 0 {
            return Err(invalid_param("frame_hop must be at least 1"));
        }
        if data.len() % (order + 1) != 0 {
            return Err(invalid_input(format!(
                "{} coefficients do not divide into frames of {}",
                data.len(),
                order + 1
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid_input(format!(
                "non-finite coefficient in frame {} (index {})",
                pos / (order + 1),
                pos % (order + 1)
            )));
        }
        Ok(Self {
            data,
            order,
            warp,
            frame_hop,
        })
    }

    pub fn from_frames(frames: &[Vec<T>], warp: T, frame_hop: usize) -> Result<Self> {
        let dim = frames
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid_input("track has no frames"))?;
        if dim == 0 {
            return Err(invalid_input("frames must hold at least c(0)"));
        }
        if let Some(i) = frames.iter().position(|f| f.len() != dim) {
            return Err(invalid_input(format!(
                "frame {i} has {} coefficients, expected {dim}",
                frames[i].len()
            )));
        }
        Self::new(frames.concat(), dim - 1, warp, frame_hop)
    }

    /// A track of `n_frames` identical frames.
    pub fn constant(frame: &[T], n_frames: usize, warp: T, frame_hop: usize) -> Result<Self> {
        if frame.is_empty() {
            return Err(invalid_input("frames must hold at least c(0)"));
        }
        let data = frame
            .iter()
            .copied()
            .cycle()
            .take(frame.len() * n_frames)
            .collect();
        Self::new(data, frame.len() - 1, warp, frame_hop)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.order + 1
    }

    pub fn warp(&self) -> T {
        self.warp
    }

    pub fn frame_hop(&self) -> usize {
        self.frame_hop
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Number of samples covered by the frames.
    pub fn span(&self) -> usize {
        self.n_frames() * self.frame_hop
    }

    pub fn frame(&self, i: usize) -> &[T] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.data.chunks_exact(self.dim())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Same coefficients, reinterpreted on a different warped axis.
    pub fn with_warp(&self, warp: T) -> Result<Self> {
        check_warp(warp)?;
        Ok(Self {
            warp,
            ..self.clone()
        })
    }

    /// Same shape and warp, new coefficients.
    pub fn with_data(&self, data: Vec<T>) -> Result<Self> {
        if data.len() != self.data.len() {
            return Err(invalid_input(format!(
                "expected {} coefficients, got {}",
                self.data.len(),
                data.len()
            )));
        }
        Self::new(data, self.order, self.warp, self.frame_hop)
    }
}

fn check_warp<T: Real>(warp: T) -> Result<()> {
    if !warp.is_finite() || warp.abs() >= T::one() {
        return Err(invalid_param(format!("warp {warp} outside (-1, 1)")));
    }
    Ok(())
}

/// Warp of the single all-pass substitution that maps cepstra at `src` onto
/// the axis of `dst`.
pub fn effective_warp<T: Real>(src: T, dst: T) -> T {
    (dst - src) / (T::one() - src * dst)
}

/// Re-expresses every frame of `src` on the axis warped by `dst_warp`,
/// truncated or zero-extended to `dst_order`.
pub fn freqt<T: Real>(src: &CepstralTrack<T>, dst_order: usize, dst_warp: T) -> Result<CepstralTrack<T>> {
    check_warp(dst_warp)?;
    let a = effective_warp(src.warp, dst_warp);
    let data = freqt_frames(src.as_slice(), src.dim(), dst_order, a);
    CepstralTrack::new(data, dst_order, dst_warp, src.frame_hop)
}

pub(crate) fn freqt_frames<T: Real>(src: &[T], src_dim: usize, dst_order: usize, a: T) -> Vec<T> {
    let mut out = vec![T::zero(); src.len() / src_dim * (dst_order + 1)];
    let mut prev = vec![T::zero(); dst_order + 1];
    for (c, g) in src
        .chunks_exact(src_dim)
        .zip(out.chunks_exact_mut(dst_order + 1))
    {
        freqt_frame_into(c, g, a, &mut prev);
    }
    out
}

/// Frequency transform of one cepstral vector with effective warp `a`.
///
/// Classical two-buffer recursion: input coefficients are fed highest index
/// first through a chain of first-order all-pass sections.
pub fn freqt_frame<T: Real>(c: &[T], dst_order: usize, a: T) -> Vec<T> {
    let mut out = vec![T::zero(); dst_order + 1];
    let mut prev = vec![T::zero(); dst_order + 1];
    freqt_frame_into(c, &mut out, a, &mut prev);
    out
}

fn freqt_frame_into<T: Real>(c: &[T], g: &mut [T], a: T, prev: &mut [T]) {
    if a == T::zero() {
        let n = c.len().min(g.len());
        g[..n].copy_from_slice(&c[..n]);
        g[n..].fill(T::zero());
        return;
    }
    let b = T::one() - a * a;
    g.fill(T::zero());
    for &ci in c.iter().rev() {
        prev.copy_from_slice(g);
        g[0] = ci + a * prev[0];
        if g.len() > 1 {
            g[1] = b * prev[0] + a * prev[1];
        }
        for j in 2..g.len() {
            g[j] = prev[j - 1] + a * (prev[j] - g[j - 1]);
        }
    }
}

/// Impulse response stored with the position of time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse<T> {
    pub taps: Vec<T>,
    /// 0 for causal responses, the centre tap for zero-phase ones.
    pub origin: usize,
}

impl<T: Real> ImpulseResponse<T> {
    /// Largest `|taps[origin + k] - taps[origin - k]|` over valid `k`.
    pub fn asymmetry(&self) -> T {
        let reach = self.origin.min(self.taps.len() - 1 - self.origin);
        (1..=reach)
            .map(|k| (self.taps[self.origin + k] - self.taps[self.origin - k]).abs())
            .fold(T::zero(), T::max)
    }
}

/// Minimum-phase impulse response of `exp(sum_m c(m) z^-m)`.
///
/// `warp` must be zero: warped cepstra have to go through [`freqt`] first.
pub fn c2mpir<T: Real>(cepstrum: &[T], warp: T, ir_length: usize) -> Result<ImpulseResponse<T>> {
    if warp != T::zero() {
        return Err(invalid_param(format!(
            "c2mpir needs linear-frequency cepstra, got warp {warp}"
        )));
    }
    if ir_length == 0 {
        return Err(invalid_param("ir_length must be at least 1"));
    }
    if cepstrum.is_empty() {
        return Err(invalid_input("empty cepstrum"));
    }
    Ok(ImpulseResponse {
        taps: mpir(cepstrum, ir_length),
        origin: 0,
    })
}

/// `h[0] = exp(c(0))`, `h[n] = sum_{k=1}^{min(n,N)} (k/n) c(k) h[n-k]`.
pub(crate) fn mpir<T: Real>(c: &[T], len: usize) -> Vec<T> {
    let mut h = vec![T::zero(); len];
    h[0] = c[0].exp();
    let order = c.len() - 1;
    for n in 1..len {
        let mut acc = T::zero();
        for k in 1..=order.min(n) {
            acc += T::n(k) * c[k] * h[n - k];
        }
        h[n] = acc / T::n(n);
    }
    h
}

/// How frame-rate cepstra turn into time-variant coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    /// One coefficient set per frame, held for the whole hop.
    #[default]
    Hold,
    /// Cepstra linearly interpolated between frame centres.
    Linear,
}

/// Sample-domain segmentation of a frame-rate track, with each segment's
/// coefficients expressed as a blend of at most two frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInterpolation<T> {
    segment_len: usize,
    total_len: usize,
    /// `(lo, hi, frac)`: segment value is `(1 - frac) * f[lo] + frac * f[hi]`.
    blends: Vec<(usize, usize, T)>,
}

impl<T: Real> FrameInterpolation<T> {
    /// `segment_len` defaults to the hop for [`Interp::Hold`] and a quarter
    /// hop for [`Interp::Linear`]; hold ignores any override.
    pub fn new(
        n_frames: usize,
        frame_hop: usize,
        total_len: usize,
        interp: Interp,
        segment_len: Option<usize>,
    ) -> Result<Self> {
        if n_frames == 0 {
            return Err(invalid_input("empty track"));
        }
        if total_len > n_frames * frame_hop {
            return Err(invalid_input(format!(
                "{total_len} samples exceed the {} covered by {n_frames} frames",
                n_frames * frame_hop
            )));
        }
        let segment_len = match interp {
            Interp::Hold => frame_hop,
            Interp::Linear => segment_len.unwrap_or((frame_hop / 4).max(1)),
        };
        if segment_len == 0 {
            return Err(invalid_param("segment_len must be at least 1"));
        }
        let n_segments = total_len.div_ceil(segment_len);
        let last = n_frames - 1;
        let blends = (0..n_segments)
            .map(|j| match interp {
                Interp::Hold => (j, j, T::zero()),
                Interp::Linear => {
                    // frame i is centred at i*hop + hop/2
                    let centre = (j as f64 + 0.5) * segment_len as f64;
                    let u = ((centre - 0.5 * frame_hop as f64) / frame_hop as f64)
                        .clamp(0.0, last as f64);
                    let lo = u.floor() as usize;
                    if lo >= last {
                        (last, last, T::zero())
                    } else {
                        (lo, lo + 1, T::c(u - lo as f64))
                    }
                }
            })
            .collect();
        Ok(Self {
            segment_len,
            total_len,
            blends,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn n_segments(&self) -> usize {
        self.blends.len()
    }

    pub fn blends(&self) -> &[(usize, usize, T)] {
        &self.blends
    }

    /// Blends frame-major `frames` (width `dim`) into segment-major output.
    pub fn apply(&self, frames: &[T], dim: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.blends.len() * dim);
        for &(lo, hi, frac) in &self.blends {
            let a = &frames[lo * dim..(lo + 1) * dim];
            let b = &frames[hi * dim..(hi + 1) * dim];
            if frac == T::zero() {
                out.extend_from_slice(a);
            } else {
                out.extend(a.iter().zip(b).map(|(&x, &y)| x + frac * (y - x)));
            }
        }
        out
    }

    /// Transpose of [`apply`](Self::apply).
    pub fn adjoint(&self, segments: &[T], n_frames: usize, dim: usize) -> Vec<T> {
        let mut out = vec![T::zero(); n_frames * dim];
        for (&(lo, hi, frac), g) in self.blends.iter().zip(segments.chunks_exact(dim)) {
            for (m, &v) in g.iter().enumerate() {
                out[lo * dim + m] += (T::one() - frac) * v;
                out[hi * dim + m] += frac * v;
            }
        }
        out
    }
}

/// Per-segment FIR taps covering `total_len` samples.
///
/// Sample `t` is filtered with the taps of segment `t / segment_len`;
/// `origin` is the tap index aligned with the current sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule<T> {
    taps: Vec<T>,
    tap_len: usize,
    segment_len: usize,
    total_len: usize,
    origin: usize,
}

impl<T: Real> CoefficientSchedule<T> {
    pub fn new(
        taps: Vec<T>,
        tap_len: usize,
        segment_len: usize,
        total_len: usize,
        origin: usize,
    ) -> Result<Self> {
        if tap_len == 0 || segment_len == 0 {
            return Err(invalid_param("tap_len and segment_len must be at least 1"));
        }
        if origin >= tap_len {
            return Err(invalid_param(format!("origin {origin} outside {tap_len} taps")));
        }
        let n_segments = total_len.div_ceil(segment_len);
        if taps.len() != n_segments * tap_len {
            return Err(invalid_input(format!(
                "{} taps do not form {n_segments} segments of {tap_len}",
                taps.len()
            )));
        }
        Ok(Self {
            taps,
            tap_len,
            segment_len,
            total_len,
            origin,
        })
    }

    /// The same causal taps for every segment.
    pub fn time_invariant(taps: &[T], total_len: usize) -> Result<Self> {
        let seg = total_len.max(1);
        let n = total_len.div_ceil(seg);
        Self::new(taps.repeat(n), taps.len(), seg, total_len, 0)
    }

    pub fn n_segments(&self) -> usize {
        self.total_len.div_ceil(self.segment_len)
    }

    pub fn tap_len(&self) -> usize {
        self.tap_len
    }

    pub fn segment_len(&self) -> usize {
        self.segment_len
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn taps(&self, segment: usize) -> &[T] {
        &self.taps[segment * self.tap_len..(segment + 1) * self.tap_len]
    }

    pub fn taps_at(&self, t: usize) -> &[T] {
        self.taps(t / self.segment_len)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.taps
    }

    /// Derives new per-segment taps from the current ones.
    pub fn map_taps<F>(&self, origin: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[T]) -> Vec<T>,
    {
        let mut taps = Vec::new();
        let mut tap_len = None;
        for seg in self.taps.chunks_exact(self.tap_len) {
            let t = f(seg);
            match tap_len {
                None => tap_len = Some(t.len()),
                Some(n) if n != t.len() => {
                    return Err(invalid_input("derived taps differ in length across segments"))
                }
                _ => {}
            }
            taps.extend(t);
        }
        Self::new(
            taps,
            tap_len.unwrap_or(1),
            self.segment_len,
            self.total_len,
            origin,
        )
    }
}

/// Segment-wise cepstra for `total_len` samples. The "taps" of the returned
/// schedule are the (interpolated) cepstral vectors themselves; filters
/// derive their FIR coefficients from them with
/// [`CoefficientSchedule::map_taps`].
pub fn schedule<T: Real>(
    track: &CepstralTrack<T>,
    total_len: usize,
    interp: Interp,
) -> Result<CoefficientSchedule<T>> {
    schedule_segmented(track, total_len, interp, None)
}

pub fn schedule_segmented<T: Real>(
    track: &CepstralTrack<T>,
    total_len: usize,
    interp: Interp,
    segment_len: Option<usize>,
) -> Result<CoefficientSchedule<T>> {
    let plan = FrameInterpolation::new(
        track.n_frames(),
        track.frame_hop(),
        total_len,
        interp,
        segment_len,
    )?;
    CoefficientSchedule::new(
        plan.apply(track.as_slice(), track.dim()),
        track.dim(),
        plan.segment_len(),
        total_len,
        0,
    )
}
