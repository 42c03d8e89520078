//! Reference implementations written directly from the definitions, kept
//! deliberately naive. Shared by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;
use std::f64::consts::PI;

use rangeview::nn::{Dense, Mlp};
use rangeview::rvfe::{BasicBlockParams, HdMetaKernelParams};
use rangeview::sgrid::HeadParams;
use rangeview::types::plane;
use rangeview::RangeImage;

/// Pixel `(u, v)` at range `r` to Cartesian coordinates.
pub fn spherical_point(u: f64, v: f64, r: f64, h: usize, w: usize, f_up: f64, f_down: f64) -> [f64; 3] {
    let elev = (1.0 - v / h as f64) * (f_up + f_down) - f_up;
    let azim = (1.0 - 2.0 * u / w as f64) * PI;
    [
        r * elev.cos() * azim.cos(),
        r * elev.cos() * azim.sin(),
        r * elev.sin(),
    ]
}

/// Cartesian point to continuous `(u, v, r)`.
pub fn spherical_pixel(p: [f64; 3], h: usize, w: usize, f_up: f64, f_down: f64) -> (f64, f64, f64) {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let azim = p[1].atan2(p[0]);
    let elev = (p[2] / r).asin();
    let u = 0.5 * w as f64 * (1.0 - azim / PI);
    let v = h as f64 * (1.0 - (elev + f_up) / (f_up + f_down));
    (u, v, r)
}

pub fn dense(d: &Dense, x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), d.inputs);
    let mut y = Vec::with_capacity(d.outputs);
    for o in 0..d.outputs {
        let mut s = d.bias[o];
        for i in 0..d.inputs {
            s += d.weight[o * d.inputs + i] * x[i];
        }
        y.push(s);
    }
    y
}

pub fn relu(x: Vec<f64>) -> Vec<f64> {
    x.into_iter().map(|v| if v > 0.0 { v } else { 0.0 }).collect()
}

pub fn mlp(m: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    let last = m.layers.len() - 1;
    for (k, layer) in m.layers.iter().enumerate() {
        cur = dense(layer, &cur);
        if k < last || m.relu_output {
            cur = relu(cur);
        }
    }
    cur
}

fn neighbor(v: usize, u: usize, dv: i64, du: i64, h: usize, w: usize, wrap: bool) -> Option<(usize, usize)> {
    let nv = v as i64 + dv;
    let mut nu = u as i64 + du;
    if nv < 0 || nv >= h as i64 {
        return None;
    }
    if wrap {
        nu = ((nu % w as i64) + w as i64) % w as i64;
    } else if nu < 0 || nu >= w as i64 {
        return None;
    }
    Some((nv as usize, nu as usize))
}

/// Meta-kernel output as `c_out` planes, computed one pixel and one slot at a time.
pub fn hdmk(feat: &RangeImage, p: &HdMetaKernelParams, wrap: bool) -> Vec<f64> {
    let (h, w) = (feat.height(), feat.width());
    let n = h * w;
    let half = p.c_out / 2;
    let mut out = vec![0.0; p.c_out * n];
    for v in 0..h {
        for u in 0..w {
            if !feat.is_valid(v, u) {
                continue;
            }
            for b in 0..2 {
                let branch = &p.branches[b];
                let dil = (b + 1) as i64;
                let mut concat = Vec::with_capacity(9 * p.c_in);
                for dh in -1..=1i64 {
                    for dw in -1..=1i64 {
                        let site = neighbor(v, u, dh * dil, dw * dil, h, w, wrap)
                            .filter(|&(nv, nu)| feat.is_valid(nv, nu));
                        match site {
                            None => concat.extend(std::iter::repeat_n(0.0, p.c_in)),
                            Some((nv, nu)) => {
                                let delta = [
                                    feat.get(plane::X, nv, nu) - feat.get(plane::X, v, u),
                                    feat.get(plane::Y, nv, nu) - feat.get(plane::Y, v, u),
                                    feat.get(plane::Z, nv, nu) - feat.get(plane::Z, v, u),
                                ];
                                let hid = relu(dense(&branch.hidden, &delta));
                                let wgt = dense(&branch.modulation, &hid);
                                for c in 0..p.c_in {
                                    concat.push(wgt[c] * feat.get(plane::BASE + c, nv, nu));
                                }
                            }
                        }
                    }
                }
                let y = dense(&branch.accumulator, &concat);
                for c in 0..half {
                    out[(b * half + c) * n + v * w + u] = y[c];
                }
            }
        }
    }
    out
}

/// Masked 3x3 cross-correlation as an explicit six-deep loop nest.
/// `input` and the result are plane-major.
#[allow(clippy::too_many_arguments)]
fn conv(
    input: &[f64],
    ci: usize,
    wt: &[f64],
    co: usize,
    h: usize,
    w: usize,
    mask: &[bool],
    wrap: bool,
) -> Vec<f64> {
    let n = h * w;
    let mut out = vec![0.0; co * n];
    for o in 0..co {
        for v in 0..h {
            for u in 0..w {
                if !mask[v * w + u] {
                    continue;
                }
                let mut s = 0.0;
                for i in 0..ci {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            if let Some((nv, nu)) =
                                neighbor(v, u, ky as i64 - 1, kx as i64 - 1, h, w, wrap)
                            {
                                if mask[nv * w + nu] {
                                    s += wt[((o * ci + i) * 3 + ky) * 3 + kx] * input[i * n + nv * w + nu];
                                }
                            }
                        }
                    }
                }
                out[o * n + v * w + u] = s;
            }
        }
    }
    out
}

/// BasicBlock feature planes (`out_channels` planes, plane-major).
pub fn basicblock(img: &RangeImage, p: &BasicBlockParams, wrap: bool) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let n = h * w;
    let mask = img.valid_mask();
    let (ci, co) = (p.in_channels, p.out_channels);
    let x = &img.data()[..ci * n];
    let mut mid = conv(x, ci, &p.conv1, co, h, w, mask, wrap);
    for o in 0..co {
        for i in 0..n {
            mid[o * n + i] = if mask[i] {
                (p.bn1_scale[o] * mid[o * n + i] + p.bn1_shift[o]).max(0.0)
            } else {
                0.0
            };
        }
    }
    let mut out = conv(&mid, co, &p.conv2, co, h, w, mask, wrap);
    for o in 0..co {
        for i in 0..n {
            if !mask[i] {
                out[o * n + i] = 0.0;
                continue;
            }
            let res = match &p.projection {
                Some(pr) => (0..ci).map(|c| pr[o * ci + c] * x[c * n + i]).sum(),
                None => x[o * n + i],
            };
            out[o * n + i] = (p.bn2_scale[o] * out[o * n + i] + p.bn2_shift[o] + res).max(0.0);
        }
    }
    out
}

fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Furthest point sampling from the definition: every step recomputes the
/// distance of each unselected point to the whole selected set.
pub fn fps(points: &[[f64; 3]], count: usize, seed: usize) -> Vec<usize> {
    let mut sel = vec![seed];
    while sel.len() < count.min(points.len()) {
        let mut best: Option<(f64, usize)> = None;
        for (i, &p) in points.iter().enumerate() {
            if sel.contains(&i) {
                continue;
            }
            let dmin = sel.iter().map(|&s| d2(p, points[s])).fold(f64::INFINITY, f64::min);
            if best.is_none() || dmin > best.unwrap().0 {
                best = Some((dmin, i));
            }
        }
        sel.push(best.unwrap().1);
    }
    sel
}

/// Brute-force ball query with an explicit selection sort.
pub fn ball_query(center: [f64; 3], radius: f64, points: &[[f64; 3]], max_k: usize) -> Vec<usize> {
    let mut cand: Vec<(f64, usize)> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let d = d2(p, center);
        if d <= radius * radius {
            cand.push((d, i));
        }
    }
    let mut out = Vec::new();
    while !cand.is_empty() && out.len() < max_k {
        let mut k = 0;
        for j in 1..cand.len() {
            if cand[j].0 < cand[k].0 || (cand[j].0 == cand[k].0 && cand[j].1 < cand[k].1) {
                k = j;
            }
        }
        out.push(cand.remove(k).1);
    }
    out
}

/// PointNet block: channel-wise max of the MLP over `[p - center, f]`, flag last.
pub fn pointnet(center: [f64; 3], coords: &[[f64; 3]], feats: &[Vec<f64>], m: &Mlp) -> Vec<f64> {
    let c = m.outputs();
    if coords.is_empty() {
        let mut out = vec![0.0; c + 1];
        out[c] = 1.0;
        return out;
    }
    let mut out = vec![f64::NEG_INFINITY; c];
    for (p, f) in coords.iter().zip(feats) {
        let mut enc = vec![p[0] - center[0], p[1] - center[1], p[2] - center[2]];
        enc.extend_from_slice(f);
        for (o, y) in out.iter_mut().zip(mlp(m, &enc)) {
            *o = o.max(y);
        }
    }
    out.push(0.0);
    out
}

/// Group-by average keyed on the floor voxel index.
pub fn voxel_means(
    points: &[[f64; 3]],
    feats: &[Vec<f64>],
    size: [f64; 3],
    min: [f64; 3],
    max: [f64; 3],
) -> HashMap<[usize; 3], (Vec<f64>, usize)> {
    let mut groups: HashMap<[usize; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        if (0..3).any(|a| p[a] < min[a] || p[a] >= max[a]) {
            continue;
        }
        let idx = [0, 1, 2].map(|a| ((p[a] - min[a]) / size[a]).floor() as usize);
        groups.entry(idx).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(k, members)| {
            let d = feats[members[0]].len();
            let mut mean = vec![0.0; d];
            for &m in &members {
                for c in 0..d {
                    mean[c] += feats[m][c];
                }
            }
            for v in &mut mean {
                *v /= members.len() as f64;
            }
            (k, (mean, members.len()))
        })
        .collect()
}

/// Trilinear interpolation between the eight corners of `[lo, hi]`, corner
/// `k = dx + 2*dy + 4*dz`, with the position clamped into the box.
pub fn trilinear(lo: [f64; 3], hi: [f64; 3], corners: &[Vec<f64>; 8], p: [f64; 3]) -> Vec<f64> {
    let t = [0, 1, 2].map(|a| ((p[a] - lo[a]) / (hi[a] - lo[a])).clamp(0.0, 1.0));
    let c = corners[0].len();
    let mut out = vec![0.0; c];
    for (k, corner) in corners.iter().enumerate() {
        let bit = |a: usize| (k >> a) & 1;
        let wgt: f64 = (0..3)
            .map(|a| if bit(a) == 1 { t[a] } else { 1.0 - t[a] })
            .product();
        for ch in 0..c {
            out[ch] += wgt * corner[ch];
        }
    }
    out
}

/// Refinement head: `(sigmoid confidence, residuals)`.
pub fn head(p: &HeadParams, x: &[f64]) -> (f64, Vec<f64>) {
    let h1 = relu(dense(&p.fc1, x));
    let h2 = relu(dense(&p.fc2, &h1));
    let logit = dense(&p.confidence, &h2)[0];
    (1.0 / (1.0 + (-logit).exp()), dense(&p.residual, &h2))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// The five base planes of `img` as a stand-alone image.
pub fn base_image(img: &RangeImage) -> RangeImage {
    let n = img.pixel_count();
    RangeImage::from_parts(
        *img.sensor(),
        plane::BASE,
        img.data()[..plane::BASE * n].to_vec(),
        img.valid_mask().to_vec(),
    )
    .expect("base planes of a valid image")
}

/// `<upstream, f(x)>` for the meta kernel.
pub fn hdmk_loss(
    feat: &RangeImage,
    p: &HdMetaKernelParams,
    boundary: rangeview::rvfe::HorizontalBoundary,
    upstream: &[f64],
) -> f64 {
    let out = rangeview::rvfe::hdmk_forward(feat, p, boundary).unwrap();
    let n = feat.pixel_count();
    out.data()[plane::BASE * n..]
        .iter()
        .zip(upstream)
        .map(|(a, b)| a * b)
        .sum()
}

/// Central differences of [`hdmk_loss`]: input-feature gradient (plane-major,
/// zero at invalid pixels) and one vector per named parameter tensor.
pub fn hdmk_numeric_gradients(
    feat: &RangeImage,
    p: &HdMetaKernelParams,
    boundary: rangeview::rvfe::HorizontalBoundary,
    upstream: &[f64],
    step: f64,
) -> (Vec<f64>, Vec<(String, Vec<f64>)>) {
    let n = feat.pixel_count();
    let (h, w) = (feat.height(), feat.width());
    let mut input = vec![0.0; p.c_in * n];
    for c in 0..p.c_in {
        for v in 0..h {
            for u in 0..w {
                if !feat.is_valid(v, u) {
                    continue;
                }
                let x0 = feat.get(plane::BASE + c, v, u);
                let mut f = feat.clone();
                f.set(plane::BASE + c, v, u, x0 + step);
                let up = hdmk_loss(&f, p, boundary, upstream);
                f.set(plane::BASE + c, v, u, x0 - step);
                let down = hdmk_loss(&f, p, boundary, upstream);
                input[c * n + v * w + u] = (up - down) / (2.0 * step);
            }
        }
    }
    let names: Vec<String> = p.tensors().into_iter().map(|t| t.0).collect();
    let mut params = Vec::new();
    for (t, name) in names.into_iter().enumerate() {
        let len = p.tensors()[t].2.len();
        let mut g = vec![0.0; len];
        for (k, gk) in g.iter_mut().enumerate() {
            let mut q = p.clone();
            let x0 = q.tensors()[t].2[k];
            q.tensors_mut()[t].1[k] = x0 + step;
            let up = hdmk_loss(feat, &q, boundary, upstream);
            q.tensors_mut()[t].1[k] = x0 - step;
            let down = hdmk_loss(feat, &q, boundary, upstream);
            *gk = (up - down) / (2.0 * step);
        }
        params.push((name, g));
    }
    (input, params)
}

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over a slice.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
