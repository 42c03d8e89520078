//! Central finite-difference verification of [`hdmk_backward`].
//!
//! Only the forward pass is used to build the numerical gradients, so the
//! check is independent of the analytic backward code it validates.

use super::{
    hdmk_backward, hdmk_forward, init_params, row, HdMetaKernelParams, HorizontalBoundary,
    KernelOffsets,
};
use crate::error::{Error, Result};
use crate::range_geometry::{pixel_to_point, PixelCoord};
use crate::rng::{derive_seed, XorShift64Star};
use crate::types::{plane, RangeImage, SensorModel};

/// Denominator floor of the relative error `|a - n| / max(|a|, |n|, floor)`.
pub const REL_FLOOR: f64 = 1e-6;
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SliceReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    /// Entry index where `max_rel_error` occurred.
    pub worst_entry: usize,
}

impl SliceReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Smallest distance from zero allowed for any hidden pre-activation of a
/// generated instance. Far above what a parameter step of `DEFAULT_STEP`
/// can move it, so no difference stencil straddles a rectifier kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// An `h x w` image whose coordinates come from the sensor mapping at random
/// ranges, roughly 20% invalid pixels, features uniform in `[-1, 1)`.
pub fn random_feature_image(
    rng: &mut XorShift64Star,
    h: usize,
    w: usize,
    c_in: usize,
) -> Result<RangeImage> {
    let sensor = SensorModel::new(h, w, 0.2, 0.2)?;
    let n = h * w;
    let planes = plane::BASE + c_in;
    let mut data = vec![0.0; planes * n];
    let mut valid = vec![false; n];
    for v in 0..h {
        for u in 0..w {
            if rng.next_f64() < 0.2 {
                continue;
            }
            let i = v * w + u;
            let r = rng.uniform(2.0, 6.0);
            let p = pixel_to_point(PixelCoord::new(u as f64 + 0.5, v as f64 + 0.5, r, &sensor)?, &sensor)?;
            valid[i] = true;
            data[plane::X * n + i] = p.x;
            data[plane::Y * n + i] = p.y;
            data[plane::Z * n + i] = p.z;
            data[plane::INTENSITY * n + i] = rng.next_f64();
            data[plane::RANGE * n + i] = r;
            for c in 0..c_in {
                data[(plane::BASE + c) * n + i] = rng.uniform(-1.0, 1.0);
            }
        }
    }
    RangeImage::from_parts(sensor, planes, data, valid)
}

/// A random meta-kernel problem: a [`random_feature_image`], parameters and
/// an upstream gradient uniform in `[-1, 1)`.
///
/// Parameters are redrawn until every hidden pre-activation sits at least
/// [`KINK_MARGIN`] from zero; see [`hidden_margin`].
pub fn random_instance(
    seed: u64,
    h: usize,
    w: usize,
    c_in: usize,
    c_mid: usize,
    c_out: usize,
) -> Result<(RangeImage, HdMetaKernelParams, Vec<f64>)> {
    let mut rng = XorShift64Star::from_stream(seed, "gradcheck");
    let img = random_feature_image(&mut rng, h, w, c_in)?;
    let n = h * w;
    let mut params = init_params(seed, c_in, c_mid, c_out)?;
    let mut attempt = 0u64;
    while hidden_margin(&img, &params) < KINK_MARGIN {
        attempt += 1;
        if attempt > 1000 {
            return Err(Error::invalid("no kink-free parameter draw within 1000 attempts"));
        }
        params = init_params(derive_seed(seed, &format!("gradcheck.retry{attempt}")), c_in, c_mid, c_out)?;
    }
    let upstream = (0..c_out * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Ok((img, params, upstream))
}

/// Smallest `|pre-activation|` of either branch's hidden layer over every
/// valid (pixel, neighbor) pair, with neighbors taken under wrap padding,
/// which reaches a superset of the zero-padded pairs.
pub fn hidden_margin(feat: &RangeImage, params: &HdMetaKernelParams) -> f64 {
    let (h, w) = (feat.height(), feat.width());
    let coord = |v: usize, u: usize| [plane::X, plane::Y, plane::Z].map(|p| feat.get(p, v, u));
    let mut margin = f64::INFINITY;
    for (b, kernel) in [KernelOffsets::k1(), KernelOffsets::k2()].iter().enumerate() {
        let hidden = &params.branches[b].hidden;
        for v in 0..h {
            for u in 0..w {
                if !feat.is_valid(v, u) {
                    continue;
                }
                let o = coord(v, u);
                for &(dh, dw) in kernel.offsets() {
                    let Some(nv) = row(v, dh, h) else { continue };
                    let Some(nu) = HorizontalBoundary::Wrap.column(u, dw, w) else { continue };
                    if !feat.is_valid(nv, nu) {
                        continue;
                    }
                    let q = coord(nv, nu);
                    let pre = hidden.forward(&[q[0] - o[0], q[1] - o[1], q[2] - o[2]]);
                    margin = pre.iter().fold(margin, |m, x| m.min(x.abs()));
                }
            }
        }
    }
    margin
}

fn objective(
    feat: &RangeImage,
    params: &HdMetaKernelParams,
    boundary: HorizontalBoundary,
    upstream: &[f64],
) -> Result<f64> {
    let out = hdmk_forward(feat, params, boundary)?;
    let n = out.pixel_count();
    let feats = &out.data()[plane::BASE * n..];
    Ok(feats.iter().zip(upstream).map(|(a, b)| a * b).sum())
}

/// Compares every analytic gradient entry against central differences.
/// Returns one report per slice: the input features first, then each
/// parameter tensor in [`HdMetaKernelParams::tensors`] order.
pub fn check_hdmk_gradients(
    feat: &RangeImage,
    params: &HdMetaKernelParams,
    boundary: HorizontalBoundary,
    upstream: &[f64],
    step: f64,
) -> Result<Vec<SliceReport>> {
    let analytic = hdmk_backward(feat, params, boundary, upstream)?;
    let mut reports = Vec::new();

    // input feature planes
    let (h, w) = (feat.height(), feat.width());
    let n = h * w;
    let mut probe = feat.clone();
    let mut worst = (0.0, 0);
    for c in 0..params.c_in {
        let p = plane::BASE + c;
        for v in 0..h {
            for u in 0..w {
                let orig = feat.get(p, v, u);
                probe.set(p, v, u, orig + step);
                let plus = objective(&probe, params, boundary, upstream)?;
                probe.set(p, v, u, orig - step);
                let minus = objective(&probe, params, boundary, upstream)?;
                probe.set(p, v, u, orig);
                let numeric = (plus - minus) / (2.0 * step);
                let idx = c * n + v * w + u;
                let err = relative_error(analytic.input[idx], numeric);
                if err > worst.0 {
                    worst = (err, idx);
                }
            }
        }
    }
    reports.push(SliceReport {
        name: "input.features".to_string(),
        entries: params.c_in * n,
        max_rel_error: worst.0,
        worst_entry: worst.1,
    });

    let grad_tensors: Vec<Vec<f64>> = analytic
        .params
        .tensors()
        .into_iter()
        .map(|(_, _, t)| t.to_vec())
        .collect();
    let originals: Vec<(String, Vec<f64>)> = params
        .tensors()
        .into_iter()
        .map(|(name, _, t)| (name, t.to_vec()))
        .collect();
    let mut probe = params.clone();
    for (ti, (name, values)) in originals.iter().enumerate() {
        let len = values.len();
        let mut worst = (0.0, 0);
        for (k, &orig) in values.iter().enumerate() {
            let set = |p: &mut HdMetaKernelParams, value: f64| {
                p.tensors_mut()[ti].1[k] = value;
            };
            set(&mut probe, orig + step);
            let plus = objective(feat, &probe, boundary, upstream)?;
            set(&mut probe, orig - step);
            let minus = objective(feat, &probe, boundary, upstream)?;
            set(&mut probe, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(grad_tensors[ti][k], numeric);
            if err > worst.0 {
                worst = (err, k);
            }
        }
        reports.push(SliceReport {
            name: name.clone(),
            entries: len,
            max_rel_error: worst.0,
            worst_entry: worst.1,
        });
    }
    Ok(reports)
}
