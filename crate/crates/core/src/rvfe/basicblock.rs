use rayon::prelude::*;

use super::{row, HorizontalBoundary};
use crate::error::{Error, Result};
use crate::rng::XorShift64Star;
use crate::types::{plane, RangeImage};

/// Residual block `relu(bn2(conv2(relu(bn1(conv1(x))))) + proj(x))`.
///
/// Convolutions are 3x3 cross-correlations without bias, weights laid out
/// `[out][in][3][3]`. Normalization is the inference-time per-channel affine
/// `scale * x + shift`. `projection` is a `[out][in]` 1x1 convolution; when
/// absent the residual path is the identity, which needs `in == out`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlockParams {
    pub in_channels: usize,
    pub out_channels: usize,
    pub conv1: Vec<f64>,
    pub bn1_scale: Vec<f64>,
    pub bn1_shift: Vec<f64>,
    pub conv2: Vec<f64>,
    pub bn2_scale: Vec<f64>,
    pub bn2_shift: Vec<f64>,
    pub projection: Option<Vec<f64>>,
}

impl BasicBlockParams {
    pub fn check(&self) -> Result<()> {
        let (ci, co) = (self.in_channels, self.out_channels);
        let sizes = [
            (self.conv1.len(), co * ci * 9, "conv1"),
            (self.conv2.len(), co * co * 9, "conv2"),
            (self.bn1_scale.len(), co, "bn1 scale"),
            (self.bn1_shift.len(), co, "bn1 shift"),
            (self.bn2_scale.len(), co, "bn2 scale"),
            (self.bn2_shift.len(), co, "bn2 shift"),
        ];
        for (got, want, what) in sizes {
            if got != want {
                return Err(Error::invalid(format!(
                    "BasicBlock {what} has {got} values, expected {want}"
                )));
            }
        }
        match &self.projection {
            Some(p) if p.len() != co * ci => {
                return Err(Error::invalid("BasicBlock projection has the wrong size"))
            }
            None if ci != co => {
                return Err(Error::invalid(
                    "BasicBlock without projection needs equal channel counts",
                ))
            }
            _ => {}
        }
        let all = self
            .conv1
            .iter()
            .chain(&self.conv2)
            .chain(&self.bn1_scale)
            .chain(&self.bn1_shift)
            .chain(&self.bn2_scale)
            .chain(&self.bn2_shift)
            .chain(self.projection.iter().flatten());
        if all.into_iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("BasicBlock holds non-finite weights"));
        }
        Ok(())
    }
}

/// Deterministic initialization: convolution and projection weights uniform
/// in `+-1/sqrt(fan_in)`, normalization scale 1 and shift 0. A projection is
/// created only when the channel counts differ.
pub fn init_basicblock(seed: u64, in_channels: usize, out_channels: usize) -> BasicBlockParams {
    let mut rng = XorShift64Star::from_stream(seed, "basicblock");
    let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
        let b = crate::nn::init_bound(fan_in);
        (0..n).map(|_| rng.uniform(-b, b) as f32 as f64).collect()
    };
    let conv1 = draw(out_channels * in_channels * 9, in_channels * 9);
    let conv2 = draw(out_channels * out_channels * 9, out_channels * 9);
    let projection =
        (in_channels != out_channels).then(|| draw(out_channels * in_channels, in_channels));
    BasicBlockParams {
        in_channels,
        out_channels,
        conv1,
        bn1_scale: vec![1.0; out_channels],
        bn1_shift: vec![0.0; out_channels],
        conv2,
        bn2_scale: vec![1.0; out_channels],
        bn2_shift: vec![0.0; out_channels],
        projection,
    }
}

/// Encodes the five base planes into `out_channels` feature planes.
///
/// Invalid pixels read as zero everywhere, including between the two
/// convolutions, and their outputs are zero. The returned image keeps the
/// base planes and validity mask of the input.
pub fn basicblock_forward(
    img: &RangeImage,
    params: &BasicBlockParams,
    boundary: HorizontalBoundary,
) -> Result<RangeImage> {
    params.check()?;
    if img.num_planes() != plane::BASE || params.in_channels != plane::BASE {
        return Err(Error::invalid(format!(
            "BasicBlock expects a {}-plane image and {} input channels, got {} and {}",
            plane::BASE,
            plane::BASE,
            img.num_planes(),
            params.in_channels
        )));
    }
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let mask = img.valid_mask();
    let ci = params.in_channels;
    let co = params.out_channels;

    // pixel-major copies: pixel `i` owns `[i*c, (i+1)*c)`
    let input = to_pixel_major(&img.data()[..ci * n], ci, n, mask);

    let mut hidden = conv3x3(&input, ci, &params.conv1, co, h, w, mask, boundary);
    hidden
        .par_chunks_mut(co)
        .zip(mask.par_iter())
        .for_each(|(px, &ok)| {
            for (o, v) in px.iter_mut().enumerate() {
                *v = if ok {
                    (params.bn1_scale[o] * *v + params.bn1_shift[o]).max(0.0)
                } else {
                    0.0
                };
            }
        });

    let mut out = conv3x3(&hidden, co, &params.conv2, co, h, w, mask, boundary);
    out.par_chunks_mut(co)
        .zip(input.par_chunks(ci))
        .zip(mask.par_iter())
        .for_each(|((px, x), &ok)| {
            if !ok {
                px.fill(0.0);
                return;
            }
            for (o, v) in px.iter_mut().enumerate() {
                let residual = match &params.projection {
                    Some(p) => p[o * ci..(o + 1) * ci]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>(),
                    None => x[o],
                };
                *v = (params.bn2_scale[o] * *v + params.bn2_shift[o] + residual).max(0.0);
            }
        });

    img.with_features(co, &to_plane_major(&out, co, n))
}

fn to_pixel_major(planes: &[f64], c: usize, n: usize, mask: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; c * n];
    for i in 0..n {
        if mask[i] {
            for p in 0..c {
                out[i * c + p] = planes[p * n + i];
            }
        }
    }
    out
}

pub(crate) fn to_plane_major(pixels: &[f64], c: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * n];
    for i in 0..n {
        for p in 0..c {
            out[p * n + i] = pixels[i * c + p];
        }
    }
    out
}

/// 3x3 cross-correlation over pixel-major input, evaluated only at valid
/// pixels and reading only valid neighbors.
#[allow(clippy::too_many_arguments)]
fn conv3x3(
    input: &[f64],
    ci: usize,
    weight: &[f64],
    co: usize,
    h: usize,
    w: usize,
    mask: &[bool],
    boundary: HorizontalBoundary,
) -> Vec<f64> {
    let mut out = vec![0.0; co * h * w];
    out.par_chunks_mut(co * w).enumerate().for_each(|(v, row_out)| {
        for u in 0..w {
            if !mask[v * w + u] {
                continue;
            }
            let px = &mut row_out[u * co..(u + 1) * co];
            for ky in 0..3 {
                let Some(nv) = row(v, ky as i32 - 1, h) else {
                    continue;
                };
                for kx in 0..3 {
                    let Some(nu) = boundary.column(u, kx as i32 - 1, w) else {
                        continue;
                    };
                    let nidx = nv * w + nu;
                    if !mask[nidx] {
                        continue;
                    }
                    let x = &input[nidx * ci..(nidx + 1) * ci];
                    for (o, acc) in px.iter_mut().enumerate() {
                        let base = o * ci * 9 + ky * 3 + kx;
                        let mut s = 0.0;
                        for (c, xv) in x.iter().enumerate() {
                            s += weight[base + c * 9] * xv;
                        }
                        *acc += s;
                    }
                }
            }
        }
    });
    out
}
