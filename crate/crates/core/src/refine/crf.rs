//! Mean-field inference for a fully connected CRF with Potts compatibility
//! and two Gaussian pairwise kernels:
//!
//! ```text
//! k_app(i, j)    = w_app    · exp(-|p_i - p_j|² / 2θα² - |I_i - I_j|² / 2θβ²)
//! k_smooth(i, j) = w_smooth · exp(-|p_i - p_j|² / 2θγ²)
//! ```
//!
//! Marginals are stored pixel-major: `q[i * labels + l]`. Each iteration
//! computes `m_i(l) = Σ_{j≠i} k(i, j) q_j(l)`, applies the Potts transform
//! `Σ_{l'≠l} m_i(l')`, subtracts it from `ln unary`, and renormalizes. All
//! pixels update in parallel from the previous iteration's marginals.
//!
//! With `normalize` set, each kernel's Gaussian factor is divided by
//! `sqrt(n_i · n_j)`, where `n_i = Σ_{j≠i}` of that factor, which keeps
//! messages on the scale of the weights regardless of image size.
//!
//! [`crf_refine`] evaluates the message sums exactly without the O(N²) pair
//! loop: the spatial Gaussians are separable, and the appearance kernel
//! factors over the image's distinct colors. Images with more than
//! [`MAX_PALETTE`] distinct colors are grouped into coarser color cells, which
//! approximates the color term between pixels of different cells.
//! [`crf_refine_exact`] is the direct pairwise evaluation.

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_PALETTE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfParams {
    pub w_app: f64,
    pub w_smooth: f64,
    /// Appearance kernel spatial bandwidth, pixels.
    pub theta_alpha: f64,
    /// Appearance kernel color bandwidth, 8-bit color units.
    pub theta_beta: f64,
    /// Smoothness kernel spatial bandwidth, pixels.
    pub theta_gamma: f64,
    pub iterations: usize,
    /// Symmetric per-kernel normalization of the pairwise sums.
    pub normalize: bool,
}

impl Default for CrfParams {
    fn default() -> Self {
        CrfParams {
            w_app: 10.0,
            w_smooth: 3.0,
            theta_alpha: 60.0,
            theta_beta: 20.0,
            theta_gamma: 3.0,
            iterations: 10,
            normalize: true,
        }
    }
}

impl CrfParams {
    pub fn validate(&self) -> Result<()> {
        let ok_weight = |w: f64| w.is_finite() && w >= 0.0;
        let ok_band = |b: f64| b.is_finite() && b > 0.0;
        if !(ok_weight(self.w_app) && ok_weight(self.w_smooth)) {
            return Err(Error::Config("crf weights must be finite and non-negative".into()));
        }
        if !(ok_band(self.theta_alpha) && ok_band(self.theta_beta) && ok_band(self.theta_gamma)) {
            return Err(Error::Config("crf bandwidths must be finite and positive".into()));
        }
        Ok(())
    }

    fn is_unary_only(&self) -> bool {
        self.iterations == 0 || (self.w_app == 0.0 && self.w_smooth == 0.0)
    }
}

fn check_inputs(
    unary: &[f64],
    width: usize,
    height: usize,
    labels: usize,
    rgb: Option<&RgbImage>,
    params: &CrfParams,
) -> Result<()> {
    params.validate()?;
    if labels < 2 {
        return Err(Error::Config(format!("crf needs at least 2 labels, got {labels}")));
    }
    if unary.len() != width * height * labels {
        return Err(Error::Config(format!("unary has {} entries, expected {width}x{height}x{labels}", unary.len())));
    }
    for (i, row) in unary.chunks_exact(labels).enumerate() {
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("unary at pixel {i} is not a distribution")));
        }
    }
    match rgb {
        None if params.w_app > 0.0 => Err(Error::Config("appearance kernel needs an rgb image".into())),
        Some(img) if (img.width() as usize, img.height() as usize) != (width, height) => {
            Err(Error::DimensionMismatch {
                context: "crf rgb".into(),
                expected_width: width,
                expected_height: height,
                width: img.width() as usize,
                height: img.height() as usize,
            })
        }
        _ => Ok(()),
    }
}

/// One mean-field update from `messages` (`m_i(l)`, same layout as `q`).
fn update(unary: &[f64], messages: &[f64], labels: usize, q: &mut [f64]) {
    q.par_chunks_exact_mut(labels).zip(unary.par_chunks_exact(labels)).zip(messages.par_chunks_exact(labels)).for_each(
        |((q, u), m)| {
            let total: f64 = m.iter().sum();
            let mut max = f64::NEG_INFINITY;
            for l in 0..labels {
                q[l] = u[l].ln() - (total - m[l]);
                max = max.max(q[l]);
            }
            let mut z = 0.0;
            for v in q.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in q.iter_mut() {
                *v /= z;
            }
        },
    );
}

/// `1 / sqrt(n)` for positive degrees, 0 for isolated pixels.
fn inv_sqrt(n: f64) -> f64 {
    if n > 0.0 {
        1.0 / n.sqrt()
    } else {
        0.0
    }
}

/// Mean-field marginals after `params.iterations` updates.
pub fn crf_refine(
    unary: &[f64],
    width: usize,
    height: usize,
    labels: usize,
    rgb: Option<&RgbImage>,
    params: &CrfParams,
) -> Result<Vec<f64>> {
    check_inputs(unary, width, height, labels, rgb, params)?;
    if params.is_unary_only() {
        return Ok(unary.to_vec());
    }
    let mut kernels = Vec::new();
    if params.w_smooth > 0.0 {
        let groups = Palette::single(width * height);
        kernels.push(FactoredKernel::new(params.w_smooth, params.theta_gamma, groups, params.normalize, width, height));
    }
    if params.w_app > 0.0 {
        let palette = Palette::new(rgb.expect("checked above")).with_bandwidth(params.theta_beta);
        kernels.push(FactoredKernel::new(params.w_app, params.theta_alpha, palette, params.normalize, width, height));
    }
    let mut q = unary.to_vec();
    let mut messages = vec![0.0; q.len()];
    for _ in 0..params.iterations {
        messages.iter_mut().for_each(|m| *m = 0.0);
        for kernel in &kernels {
            kernel.accumulate(&q, labels, &mut messages);
        }
        update(unary, &messages, labels, &mut q);
    }
    Ok(q)
}

/// One pairwise kernel in factored form: a spatial Gaussian blur applied per
/// color group, combined through the group affinity table.
struct FactoredKernel {
    weight: f64,
    blur: GaussianBlur,
    groups: Palette,
    /// Per-pixel factor applied to marginals before blurring.
    in_scale: Vec<f64>,
    /// Per-pixel factor applied to the blurred sum.
    out_scale: Vec<f64>,
    /// `blur(in_scale · [group == g])` for each group.
    mass: Vec<Vec<f64>>,
}

impl FactoredKernel {
    fn new(weight: f64, sigma: f64, groups: Palette, normalize: bool, width: usize, height: usize) -> Self {
        let blur = GaussianBlur::new(width, height, sigma);
        let n = width * height;
        let indicator_blur = |scale: &[f64]| -> Vec<Vec<f64>> {
            (0..groups.len())
                .into_par_iter()
                .map(|g| {
                    blur.apply(
                        &groups
                            .index
                            .iter()
                            .zip(scale)
                            .map(|(&k, &s)| if k == g { s } else { 0.0 })
                            .collect::<Vec<_>>(),
                    )
                })
                .collect()
        };
        let ones = vec![1.0; n];
        let raw_mass = indicator_blur(&ones);
        let (in_scale, out_scale, mass) = if normalize {
            let degree: Vec<f64> = (0..n).map(|i| groups.combine(i, &raw_mass) - 1.0).collect();
            let scale: Vec<f64> = degree.iter().map(|&d| inv_sqrt(d)).collect();
            let mass = indicator_blur(&scale);
            (scale.clone(), scale, mass)
        } else {
            (ones.clone(), ones, raw_mass)
        };
        FactoredKernel { weight, blur, groups, in_scale, out_scale, mass }
    }

    fn accumulate(&self, q: &[f64], labels: usize, messages: &mut [f64]) {
        let n = self.in_scale.len();
        let mut acc: Vec<Vec<f64>> = vec![vec![0.0; n]; self.groups.len()];
        for l in 0..labels {
            let scaled: Vec<f64> = (0..n).map(|i| self.in_scale[i] * q[i * labels + l]).collect();
            // The last label follows from the others since Σ_l q(l) = 1.
            let blurred: Vec<Vec<f64>> = if l + 1 == labels {
                self.mass.iter().zip(&acc).map(|(m, a)| m.iter().zip(a).map(|(x, y)| x - y).collect()).collect()
            } else {
                let b: Vec<Vec<f64>> = (0..self.groups.len())
                    .into_par_iter()
                    .map(|g| {
                        let masked: Vec<f64> = self
                            .groups
                            .index
                            .iter()
                            .zip(&scaled)
                            .map(|(&k, &v)| if k == g { v } else { 0.0 })
                            .collect();
                        self.blur.apply(&masked)
                    })
                    .collect();
                acc.iter_mut().zip(&b).for_each(|(a, x)| a.iter_mut().zip(x).for_each(|(a, x)| *a += x));
                b
            };
            for i in 0..n {
                // Every kernel is 1 at zero offset; drop the self term.
                let sum = self.groups.combine(i, &blurred) - scaled[i];
                messages[i * labels + l] += self.weight * self.out_scale[i] * sum;
            }
        }
    }
}

/// Direct O(N²) evaluation of the same update, for small images and as a
/// reference.
pub fn crf_refine_exact(
    unary: &[f64],
    width: usize,
    height: usize,
    labels: usize,
    rgb: Option<&RgbImage>,
    params: &CrfParams,
) -> Result<Vec<f64>> {
    check_inputs(unary, width, height, labels, rgb, params)?;
    if params.is_unary_only() {
        return Ok(unary.to_vec());
    }
    let n = width * height;
    let colors: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            rgb.map(|img| img.get_pixel((i % width) as u32, (i / width) as u32).0.map(f64::from)).unwrap_or([0.0; 3])
        })
        .collect();
    let (a2, b2, g2) = (
        2.0 * params.theta_alpha * params.theta_alpha,
        2.0 * params.theta_beta * params.theta_beta,
        2.0 * params.theta_gamma * params.theta_gamma,
    );
    // Unweighted Gaussian factors (smoothness, appearance) between two pixels.
    let factors = |i: usize, j: usize| -> (f64, f64) {
        let dx = (i % width) as f64 - (j % width) as f64;
        let dy = (i / width) as f64 - (j / width) as f64;
        let d2 = dx * dx + dy * dy;
        let c2: f64 = colors[i].iter().zip(&colors[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        ((-d2 / g2).exp(), (-d2 / a2 - c2 / b2).exp())
    };
    let scales: Vec<(f64, f64)> = if params.normalize {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let (s, a) = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| factors(i, j))
                    .fold((0.0, 0.0), |acc, f| (acc.0 + f.0, acc.1 + f.1));
                (inv_sqrt(s), inv_sqrt(a))
            })
            .collect()
    } else {
        vec![(1.0, 1.0); n]
    };
    let mut q = unary.to_vec();
    let mut messages = vec![0.0; n * labels];
    for _ in 0..params.iterations {
        messages.par_chunks_exact_mut(labels).enumerate().for_each(|(i, m)| {
            m.iter_mut().for_each(|v| *v = 0.0);
            for j in (0..n).filter(|&j| j != i) {
                let (fs, fa) = factors(i, j);
                let k =
                    params.w_smooth * fs * scales[i].0 * scales[j].0 + params.w_app * fa * scales[i].1 * scales[j].1;
                for l in 0..labels {
                    m[l] += k * q[j * labels + l];
                }
            }
        });
        update(unary, &messages, labels, &mut q);
    }
    Ok(q)
}

/// Pixels grouped by color, with pairwise affinities between groups.
struct Palette {
    colors: Vec<[f64; 3]>,
    index: Vec<usize>,
    /// Row-major `len()²` table of `exp(-|c_a - c_b|² / 2θβ²)`.
    affinity: Vec<f64>,
}

impl Palette {
    /// Every pixel in one group with affinity 1, i.e. a purely spatial kernel.
    fn single(n: usize) -> Self {
        Palette { colors: vec![[0.0; 3]], index: vec![0; n], affinity: vec![1.0] }
    }

    fn new(img: &RgbImage) -> Self {
        // Smallest power-of-two cell size that keeps the palette bounded.
        let mut shift = 0u32;
        loop {
            let mut cells: std::collections::BTreeMap<[u8; 3], usize> = Default::default();
            for p in img.pixels() {
                let key = p.0.map(|c| c >> shift);
                let next = cells.len();
                cells.entry(key).or_insert(next);
                if cells.len() > MAX_PALETTE {
                    break;
                }
            }
            if cells.len() <= MAX_PALETTE || shift == 7 {
                return Self::from_cells(img, shift, cells);
            }
            shift += 1;
        }
    }

    fn from_cells(img: &RgbImage, shift: u32, cells: std::collections::BTreeMap<[u8; 3], usize>) -> Self {
        let mut sums = vec![[0.0f64; 3]; cells.len()];
        let mut counts = vec![0usize; cells.len()];
        let index: Vec<usize> = img
            .pixels()
            .map(|p| {
                let c = cells[&p.0.map(|c| c >> shift)];
                for (sum, &v) in sums[c].iter_mut().zip(&p.0) {
                    *sum += f64::from(v);
                }
                counts[c] += 1;
                c
            })
            .collect();
        let colors: Vec<[f64; 3]> = sums.iter().zip(&counts).map(|(s, &n)| s.map(|v| v / n as f64)).collect();
        Palette { colors, index, affinity: Vec::new() }
    }

    fn with_bandwidth(mut self, theta_beta: f64) -> Self {
        let b2 = 2.0 * theta_beta * theta_beta;
        let m = self.colors.len();
        self.affinity = (0..m * m)
            .map(|ab| {
                let (a, b) = (self.colors[ab / m], self.colors[ab % m]);
                let d2: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / b2).exp()
            })
            .collect();
        self
    }

    fn len(&self) -> usize {
        self.colors.len()
    }

    /// `Σ_g affinity(group(i), g) · per_group[g][i]`.
    fn combine(&self, i: usize, per_group: &[Vec<f64>]) -> f64 {
        let m = self.len();
        let row = &self.affinity[self.index[i] * m..(self.index[i] + 1) * m];
        row.iter().zip(per_group).map(|(a, g)| a * g[i]).sum()
    }
}

/// Separable unnormalized Gaussian filter `Σ_j exp(-|p_i - p_j|² / 2σ²) x_j`,
/// truncated where the weight drops below ~1e-12.
struct GaussianBlur {
    width: usize,
    height: usize,
    weights: Vec<f64>,
}

impl GaussianBlur {
    fn new(width: usize, height: usize, sigma: f64) -> Self {
        let reach = ((7.5 * sigma).ceil() as usize).min(width.max(height));
        let weights = (0..=reach).map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp()).collect();
        GaussianBlur { width, height, weights }
    }

    fn apply(&self, src: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let reach = self.weights.len() - 1;
        let mut tmp = vec![0.0; w * h];
        tmp.par_chunks_exact_mut(w).zip(src.par_chunks_exact(w)).for_each(|(out, row)| {
            for (x, o) in out.iter_mut().enumerate() {
                let lo = x.saturating_sub(reach);
                let hi = (x + reach).min(w - 1);
                *o = (lo..=hi).map(|j| self.weights[x.abs_diff(j)] * row[j]).sum();
            }
        });
        let mut out = vec![0.0; w * h];
        out.par_chunks_exact_mut(w).enumerate().for_each(|(y, row)| {
            let lo = y.saturating_sub(reach);
            let hi = (y + reach).min(h - 1);
            for (x, o) in row.iter_mut().enumerate() {
                *o = (lo..=hi).map(|j| self.weights[y.abs_diff(j)] * tmp[j * w + x]).sum();
            }
        });
        out
    }
}
