//! Hierarchical-dilated meta kernel.
//!
//! Two branches sample the 3x3 neighborhood of every output pixel at dilation
//! 1 and 2. For each sampled neighbor `n` of output pixel `o` a per-branch
//! weight MLP turns the relative position `p_n - p_o` into a modulation
//! vector, which multiplies the neighbor's features element-wise. The nine
//! modulated vectors are concatenated (slot-major) and reduced by the
//! branch's fully connected accumulator; the two branch outputs are
//! concatenated into the final `c_out` channels.
//!
//! Neighbors in the vertical padding, in the horizontal padding (zero
//! boundary only) or at invalid pixels contribute zero vectors.

use rayon::prelude::*;

use super::basicblock::to_plane_major;
use super::{row, HorizontalBoundary, KernelOffsets};
use crate::error::{Error, Result};
use crate::nn::Dense;
use crate::rng::XorShift64Star;
use crate::types::{plane, RangeImage};

const SLOTS: usize = 9;

/// One dilation branch.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmkBranch {
    /// `3 -> c_mid`, followed by a rectifier.
    pub hidden: Dense,
    /// `c_mid -> c_in`, linear.
    pub modulation: Dense,
    /// `9 * c_in -> c_out / 2`.
    pub accumulator: Dense,
}

impl HdmkBranch {
    fn zeros_like(&self) -> Self {
        Self {
            hidden: Dense::zeros(self.hidden.inputs, self.hidden.outputs),
            modulation: Dense::zeros(self.modulation.inputs, self.modulation.outputs),
            accumulator: Dense::zeros(self.accumulator.inputs, self.accumulator.outputs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HdMetaKernelParams {
    pub c_in: usize,
    pub c_mid: usize,
    pub c_out: usize,
    /// Dilation 1 then dilation 2.
    pub branches: [HdmkBranch; 2],
}

impl HdMetaKernelParams {
    pub fn check(&self) -> Result<()> {
        if self.c_in == 0 || self.c_mid == 0 || self.c_out == 0 {
            return Err(Error::invalid("meta-kernel dimensions must be positive"));
        }
        if !self.c_out.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "meta-kernel c_out must be even, got {}",
                self.c_out
            )));
        }
        for b in &self.branches {
            let shapes = [
                (&b.hidden, 3, self.c_mid),
                (&b.modulation, self.c_mid, self.c_in),
                (&b.accumulator, SLOTS * self.c_in, self.c_out / 2),
            ];
            for (layer, i, o) in shapes {
                if layer.inputs != i || layer.outputs != o {
                    return Err(Error::invalid(format!(
                        "meta-kernel layer is {}x{}, expected {o}x{i}",
                        layer.outputs, layer.inputs
                    )));
                }
                layer.check()?;
            }
        }
        Ok(())
    }

    /// Same shapes, all zeros; used as the gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            c_in: self.c_in,
            c_mid: self.c_mid,
            c_out: self.c_out,
            branches: [self.branches[0].zeros_like(), self.branches[1].zeros_like()],
        }
    }

    /// Every tensor with a stable name, in serialization order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (bi, b) in self.branches.iter().enumerate() {
            for (lname, layer) in [
                ("hidden", &b.hidden),
                ("modulation", &b.modulation),
                ("accumulator", &b.accumulator),
            ] {
                let prefix = format!("hdmk.branch{}.{lname}", bi + 1);
                out.push((
                    format!("{prefix}.weight"),
                    vec![layer.outputs, layer.inputs],
                    layer.weight.as_slice(),
                ));
                out.push((format!("{prefix}.bias"), vec![layer.outputs], layer.bias.as_slice()));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (bi, b) in self.branches.iter_mut().enumerate() {
            for (lname, layer) in [
                ("hidden", &mut b.hidden),
                ("modulation", &mut b.modulation),
                ("accumulator", &mut b.accumulator),
            ] {
                let prefix = format!("hdmk.branch{}.{lname}", bi + 1);
                out.push((format!("{prefix}.weight"), &mut layer.weight));
                out.push((format!("{prefix}.bias"), &mut layer.bias));
            }
        }
        out
    }
}

/// Deterministic initialization from the `hdmk` stream of `seed`.
///
/// Every weight and bias is drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// and rounded to f32.
pub fn init_params(seed: u64, c_in: usize, c_mid: usize, c_out: usize) -> Result<HdMetaKernelParams> {
    if c_in == 0 || c_mid == 0 || c_out == 0 {
        return Err(Error::invalid("meta-kernel dimensions must be positive"));
    }
    if !c_out.is_multiple_of(2) {
        return Err(Error::invalid(format!("meta-kernel c_out must be even, got {c_out}")));
    }
    let mut rng = XorShift64Star::from_stream(seed, "hdmk");
    let mut branch = || HdmkBranch {
        hidden: Dense::random(3, c_mid, &mut rng),
        modulation: Dense::random(c_mid, c_in, &mut rng),
        accumulator: Dense::random(SLOTS * c_in, c_out / 2, &mut rng),
    };
    let branches = [branch(), branch()];
    Ok(HdMetaKernelParams {
        c_in,
        c_mid,
        c_out,
        branches,
    })
}

/// Gradients of `<upstream, hdmk_forward(feat)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct HdmkGradients {
    /// `c_in` planes, plane-major like the image.
    pub input: Vec<f64>,
    pub params: HdMetaKernelParams,
}

/// Pixel-major features and coordinates pulled out of an image once.
struct Inputs<'a> {
    h: usize,
    w: usize,
    c_in: usize,
    mask: &'a [bool],
    coords: Vec<[f64; 3]>,
    features: Vec<f64>,
}

impl<'a> Inputs<'a> {
    fn new(feat: &'a RangeImage, c_in: usize) -> Result<Self> {
        if feat.num_planes() != plane::BASE + c_in {
            return Err(Error::invalid(format!(
                "meta kernel expects the 5 coordinate planes plus {c_in} features, image has {} planes",
                feat.num_planes()
            )));
        }
        let n = feat.pixel_count();
        let mask = feat.valid_mask();
        let (xs, ys, zs) = (feat.plane(plane::X), feat.plane(plane::Y), feat.plane(plane::Z));
        let coords = (0..n).map(|i| [xs[i], ys[i], zs[i]]).collect();
        let mut features = vec![0.0; n * c_in];
        for c in 0..c_in {
            let src = feat.feature_plane(c);
            for i in 0..n {
                if mask[i] {
                    features[i * c_in + c] = src[i];
                }
            }
        }
        Ok(Self {
            h: feat.height(),
            w: feat.width(),
            c_in,
            mask,
            coords,
            features,
        })
    }

    fn feature(&self, idx: usize) -> &[f64] {
        &self.features[idx * self.c_in..(idx + 1) * self.c_in]
    }

    /// Valid neighbor pixel for each kernel slot.
    fn neighbors(
        &self,
        v: usize,
        u: usize,
        kernel: &KernelOffsets,
        boundary: HorizontalBoundary,
    ) -> [Option<usize>; SLOTS] {
        let mut out = [None; SLOTS];
        for (slot, &(dh, dw)) in kernel.offsets().iter().enumerate() {
            let Some(nv) = row(v, dh, self.h) else { continue };
            let Some(nu) = boundary.column(u, dw, self.w) else { continue };
            let idx = nv * self.w + nu;
            if self.mask[idx] {
                out[slot] = Some(idx);
            }
        }
        out
    }

    fn delta(&self, n: usize, o: usize) -> [f64; 3] {
        let (a, b) = (self.coords[n], self.coords[o]);
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }
}

/// Forward intermediates of one neighbor slot.
struct SlotCache {
    delta: [f64; 3],
    pre: Vec<f64>,
    hidden: Vec<f64>,
    modulation: Vec<f64>,
}

fn slot_forward(branch: &HdmkBranch, delta: [f64; 3]) -> SlotCache {
    let pre = branch.hidden.forward(&delta);
    let hidden: Vec<f64> = pre.iter().map(|&x| x.max(0.0)).collect();
    let modulation = branch.modulation.forward(&hidden);
    SlotCache {
        delta,
        pre,
        hidden,
        modulation,
    }
}

/// Branch output at one pixel plus the per-slot caches and the concatenated
/// element-wise products.
fn branch_forward(
    inputs: &Inputs,
    branch: &HdmkBranch,
    o: usize,
    neighbors: &[Option<usize>; SLOTS],
    keep_cache: bool,
) -> (Vec<f64>, Vec<f64>, Vec<Option<SlotCache>>) {
    let c_in = inputs.c_in;
    let mut concat = vec![0.0; SLOTS * c_in];
    let mut caches = Vec::with_capacity(if keep_cache { SLOTS } else { 0 });
    for (slot, nb) in neighbors.iter().enumerate() {
        let Some(n) = *nb else {
            if keep_cache {
                caches.push(None);
            }
            continue;
        };
        let cache = slot_forward(branch, inputs.delta(n, o));
        let f = inputs.feature(n);
        for c in 0..c_in {
            concat[slot * c_in + c] = cache.modulation[c] * f[c];
        }
        if keep_cache {
            caches.push(Some(cache));
        }
    }
    let out = branch.accumulator.forward(&concat);
    (out, concat, caches)
}

/// Applies the meta kernel; the result keeps the base planes and mask of
/// `feat` and carries `c_out` feature planes.
pub fn hdmk_forward(
    feat: &RangeImage,
    params: &HdMetaKernelParams,
    boundary: HorizontalBoundary,
) -> Result<RangeImage> {
    params.check()?;
    let inputs = Inputs::new(feat, params.c_in)?;
    let (h, w) = (inputs.h, inputs.w);
    let n = h * w;
    let half = params.c_out / 2;
    let kernels = [KernelOffsets::k1(), KernelOffsets::k2()];

    let mut out = vec![0.0; n * params.c_out];
    out.par_chunks_mut(params.c_out).enumerate().for_each(|(o, px)| {
        if !inputs.mask[o] {
            return;
        }
        let (v, u) = (o / w, o % w);
        for (b, branch) in params.branches.iter().enumerate() {
            let nbrs = inputs.neighbors(v, u, &kernels[b], boundary);
            let (y, _, _) = branch_forward(&inputs, branch, o, &nbrs, false);
            px[b * half..(b + 1) * half].copy_from_slice(&y);
        }
    });
    feat.with_features(params.c_out, &to_plane_major(&out, params.c_out, n))
}

/// Analytic gradients of `<upstream, hdmk_forward(feat, params)>` with
/// respect to the input feature planes and every parameter.
///
/// `upstream` holds `c_out` planes, plane-major. Coordinates are constants.
/// Accumulation runs over pixels in row-major order, so results are
/// reproducible bit for bit.
#[allow(clippy::needless_range_loop)]
pub fn hdmk_backward(
    feat: &RangeImage,
    params: &HdMetaKernelParams,
    boundary: HorizontalBoundary,
    upstream: &[f64],
) -> Result<HdmkGradients> {
    params.check()?;
    let inputs = Inputs::new(feat, params.c_in)?;
    let (h, w) = (inputs.h, inputs.w);
    let n = h * w;
    if upstream.len() != params.c_out * n {
        return Err(Error::invalid(format!(
            "upstream gradient has {} values, expected {} ({} planes of {n})",
            upstream.len(),
            params.c_out * n,
            params.c_out
        )));
    }
    let c_in = params.c_in;
    let half = params.c_out / 2;
    let kernels = [KernelOffsets::k1(), KernelOffsets::k2()];
    let mut grads = params.zeros_like();
    let mut d_input = vec![0.0; n * c_in];

    for o in 0..n {
        if !inputs.mask[o] {
            continue;
        }
        let (v, u) = (o / w, o % w);
        for (b, branch) in params.branches.iter().enumerate() {
            let g: Vec<f64> = (0..half).map(|j| upstream[(b * half + j) * n + o]).collect();
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let nbrs = inputs.neighbors(v, u, &kernels[b], boundary);
            let (_, concat, caches) = branch_forward(&inputs, branch, o, &nbrs, true);
            let gb = &mut grads.branches[b];

            // accumulator
            let k = concat.len();
            let mut d_concat = vec![0.0; k];
            for (j, &gj) in g.iter().enumerate() {
                gb.accumulator.bias[j] += gj;
                let wrow = &branch.accumulator.weight[j * k..(j + 1) * k];
                let grow = &mut gb.accumulator.weight[j * k..(j + 1) * k];
                for i in 0..k {
                    grow[i] += gj * concat[i];
                    d_concat[i] += wrow[i] * gj;
                }
            }

            for (slot, cache) in caches.iter().enumerate() {
                let (Some(cache), Some(nidx)) = (cache, nbrs[slot]) else {
                    continue;
                };
                let d_prod = &d_concat[slot * c_in..(slot + 1) * c_in];
                let f = inputs.feature(nidx);
                let mut d_mod = vec![0.0; c_in];
                for c in 0..c_in {
                    d_input[nidx * c_in + c] += d_prod[c] * cache.modulation[c];
                    d_mod[c] = d_prod[c] * f[c];
                }

                // modulation layer
                let c_mid = params.c_mid;
                let mut d_hidden = vec![0.0; c_mid];
                for c in 0..c_in {
                    let dm = d_mod[c];
                    if dm == 0.0 {
                        continue;
                    }
                    gb.modulation.bias[c] += dm;
                    for m in 0..c_mid {
                        gb.modulation.weight[c * c_mid + m] += dm * cache.hidden[m];
                        d_hidden[m] += branch.modulation.weight[c * c_mid + m] * dm;
                    }
                }

                // hidden layer through the rectifier
                for m in 0..c_mid {
                    if cache.pre[m] <= 0.0 {
                        continue;
                    }
                    let dp = d_hidden[m];
                    gb.hidden.bias[m] += dp;
                    for i in 0..3 {
                        gb.hidden.weight[m * 3 + i] += dp * cache.delta[i];
                    }
                }
            }
        }
    }

    Ok(HdmkGradients {
        input: to_plane_major(&d_input, c_in, n),
        params: grads,
    })
}
