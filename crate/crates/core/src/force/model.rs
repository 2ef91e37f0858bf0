//! Compact convolutional wrench regressor with hand-written reverse mode.
//!
//! Three 3x3 stride-2 convolutions (3 -> 8 -> 16 -> 32 channels, zero
//! padding 1, ReLU), global average pooling and an affine map to the six
//! normalized wrench components. Parameters live in one flat vector:
//! per stage the kernel `[out][in][ky][kx]` then the bias, then the affine
//! weights `[6][32]` and bias.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::input::{InputTensor, INPUT_CHANNELS};
use crate::error::{len_err, Error, Result};

pub const ARCHITECTURE: &str = "conv3x3s2[3-8-16-32]-relu-gap-affine6";
pub const STAGES: [usize; 4] = [3, 8, 16, 32];
pub const OUTPUTS: usize = 6;
const K: usize = 3;
const FEATURES: usize = STAGES[3];

#[derive(Debug, Clone, Copy)]
struct Layout {
    conv_w: [usize; 3],
    conv_b: [usize; 3],
    fc_w: usize,
    fc_b: usize,
    len: usize,
}

const fn layout() -> Layout {
    let mut conv_w = [0; 3];
    let mut conv_b = [0; 3];
    let mut off = 0;
    let mut l = 0;
    while l < 3 {
        conv_w[l] = off;
        off += STAGES[l + 1] * STAGES[l] * K * K;
        conv_b[l] = off;
        off += STAGES[l + 1];
        l += 1;
    }
    let fc_w = off;
    off += OUTPUTS * FEATURES;
    let fc_b = off;
    off += OUTPUTS;
    Layout { conv_w, conv_b, fc_w, fc_b, len: off }
}

const LAYOUT: Layout = layout();
pub const PARAM_COUNT: usize = LAYOUT.len;

/// Named parameter blocks and their shapes, in storage order.
pub fn layer_shapes() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for l in 0..3 {
        out.push((format!("conv{}.weight", l + 1), vec![STAGES[l + 1], STAGES[l], K, K]));
        out.push((format!("conv{}.bias", l + 1), vec![STAGES[l + 1]]));
    }
    out.push(("fc.weight".into(), vec![OUTPUTS, FEATURES]));
    out.push(("fc.bias".into(), vec![OUTPUTS]));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    values: Vec<f64>,
}

impl RegressorParams {
    pub fn zeros() -> Self {
        Self { values: vec![0.0; PARAM_COUNT] }
    }

    /// Uniform in `±sqrt(1 / fan_in)` for every weight and bias.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; PARAM_COUNT];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let b = (1.0 / fan_in as f64).sqrt();
            for v in &mut values[range] {
                *v = rng.random_range(-b..b);
            }
        };
        for l in 0..3 {
            let fan_in = STAGES[l] * K * K;
            fill(LAYOUT.conv_w[l]..LAYOUT.conv_b[l], fan_in);
            fill(LAYOUT.conv_b[l]..LAYOUT.conv_b[l] + STAGES[l + 1], fan_in);
        }
        fill(LAYOUT.fc_w..LAYOUT.len, FEATURES);
        Self { values }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != PARAM_COUNT {
            return Err(len_err("parameter vector", values.len(), PARAM_COUNT));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

fn out_size(n: usize) -> usize {
    (n - 1) / 2 + 1
}

/// Valid output-column range for kernel column `k` over an input of
/// width `w` (input column `2x + k - 1`).
fn col_range(k: usize, w: usize, ow: usize) -> std::ops::Range<usize> {
    let lo = usize::from(k == 0);
    let hi = ((w + 2 - k) / 2).min(ow);
    lo..hi.max(lo)
}

struct Stage<'p> {
    ci: usize,
    co: usize,
    weights: &'p [f64],
    bias: &'p [f64],
}

fn stage(params: &RegressorParams, l: usize) -> Stage<'_> {
    let (ci, co) = (STAGES[l], STAGES[l + 1]);
    Stage {
        ci,
        co,
        weights: &params.values[LAYOUT.conv_w[l]..LAYOUT.conv_b[l]],
        bias: &params.values[LAYOUT.conv_b[l]..LAYOUT.conv_b[l] + co],
    }
}

/// Convolution plus ReLU.
fn conv_forward(st: &Stage, input: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (out_size(h), out_size(w));
    let mut out = vec![0.0; st.co * oh * ow];
    for o in 0..st.co {
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        plane.fill(st.bias[o]);
        for i in 0..st.ci {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..K {
                for kx in 0..K {
                    let wv = st.weights[((o * st.ci + i) * K + ky) * K + kx];
                    let xs = col_range(kx, w, ow);
                    for y in col_range(ky, h, oh) {
                        let row = &src[(2 * y + ky - 1) * w..];
                        let orow = &mut plane[y * ow..(y + 1) * ow];
                        for x in xs.clone() {
                            orow[x] += wv * row[2 * x + kx - 1];
                        }
                    }
                }
            }
        }
    }
    for v in &mut out {
        *v = v.max(0.0);
    }
    (out, oh, ow)
}

/// Accumulates kernel and bias gradients for `grad_out` (already masked by
/// the ReLU) and optionally the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    st: &Stage,
    input: &[f64],
    h: usize,
    w: usize,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    mut grad_in: Option<&mut [f64]>,
) {
    let (oh, ow) = (out_size(h), out_size(w));
    for o in 0..st.co {
        let g = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        grad_b[o] += g.iter().sum::<f64>();
        for i in 0..st.ci {
            let src = &input[i * h * w..(i + 1) * h * w];
            for ky in 0..K {
                for kx in 0..K {
                    let widx = ((o * st.ci + i) * K + ky) * K + kx;
                    let wv = st.weights[widx];
                    let xs = col_range(kx, w, ow);
                    let mut acc = 0.0;
                    for y in col_range(ky, h, oh) {
                        let base = (2 * y + ky - 1) * w;
                        let grow = &g[y * ow..(y + 1) * ow];
                        for x in xs.clone() {
                            acc += grow[x] * src[base + 2 * x + kx - 1];
                        }
                        if let Some(gi) = grad_in.as_deref_mut() {
                            let gi = &mut gi[i * h * w + base..];
                            for x in xs.clone() {
                                gi[2 * x + kx - 1] += wv * grow[x];
                            }
                        }
                    }
                    grad_w[widx] += acc;
                }
            }
        }
    }
}

struct Trace {
    /// Input followed by the three post-ReLU activations.
    acts: Vec<Vec<f64>>,
    dims: Vec<(usize, usize)>,
    pooled: [f64; FEATURES],
    out: [f64; OUTPUTS],
}

fn run(params: &RegressorParams, input: &InputTensor) -> Result<Trace> {
    let (h, w) = (input.height(), input.width());
    if input.data().len() != INPUT_CHANNELS * h * w {
        return Err(len_err("regressor input", input.data().len(), INPUT_CHANNELS * h * w));
    }
    let mut acts = vec![input.data().iter().map(|&v| f64::from(v)).collect::<Vec<f64>>()];
    let mut dims = vec![(h, w)];
    for l in 0..3 {
        let (h, w) = dims[l];
        let (a, oh, ow) = conv_forward(&stage(params, l), &acts[l], h, w);
        acts.push(a);
        dims.push((oh, ow));
    }
    let (h3, w3) = dims[3];
    let n = (h3 * w3) as f64;
    let mut pooled = [0.0; FEATURES];
    for (c, p) in pooled.iter_mut().enumerate() {
        *p = acts[3][c * h3 * w3..(c + 1) * h3 * w3].iter().sum::<f64>() / n;
    }
    let fc = &params.values[LAYOUT.fc_w..LAYOUT.len];
    let mut out = [0.0; OUTPUTS];
    for (k, o) in out.iter_mut().enumerate() {
        *o = fc[OUTPUTS * FEATURES + k]
            + pooled.iter().zip(&fc[k * FEATURES..(k + 1) * FEATURES]).map(|(p, w)| p * w).sum::<f64>();
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite regressor output".into()));
    }
    Ok(Trace { acts, dims, pooled, out })
}

/// Normalized wrench prediction for one input.
pub fn forward(params: &RegressorParams, input: &InputTensor) -> Result<[f64; OUTPUTS]> {
    Ok(run(params, input)?.out)
}

/// Summed absolute error over the batch and all six outputs, and its
/// gradient (subgradient 0 where a residual is exactly 0).
pub fn loss_and_gradient(
    params: &RegressorParams,
    batch: &[(&InputTensor, [f64; OUTPUTS])],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let mut grad = vec![0.0; PARAM_COUNT];
    let mut loss = 0.0;
    for (input, target) in batch {
        let tr = run(params, input)?;
        let mut d_out = [0.0; OUTPUTS];
        for k in 0..OUTPUTS {
            let r = tr.out[k] - target[k];
            loss += r.abs();
            d_out[k] = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
        }

        let (fc_w, rest) = grad[LAYOUT.fc_w..].split_at_mut(OUTPUTS * FEATURES);
        let fc = &params.values[LAYOUT.fc_w..LAYOUT.fc_b];
        let mut d_pooled = [0.0; FEATURES];
        for k in 0..OUTPUTS {
            rest[k] += d_out[k];
            for c in 0..FEATURES {
                fc_w[k * FEATURES + c] += d_out[k] * tr.pooled[c];
                d_pooled[c] += d_out[k] * fc[k * FEATURES + c];
            }
        }

        let (h3, w3) = tr.dims[3];
        let n3 = h3 * w3;
        let mut g: Vec<f64> = (0..FEATURES * n3)
            .map(|i| if tr.acts[3][i] > 0.0 { d_pooled[i / n3] / n3 as f64 } else { 0.0 })
            .collect();
        for l in (0..3).rev() {
            let st = stage(params, l);
            let (h, w) = tr.dims[l];
            let (gw, gb) = grad[LAYOUT.conv_w[l]..LAYOUT.conv_b[l] + st.co].split_at_mut(st.co * st.ci * K * K);
            if l == 0 {
                conv_backward(&st, &tr.acts[0], h, w, &g, gw, gb, None);
                break;
            }
            let mut g_in = vec![0.0; st.ci * h * w];
            conv_backward(&st, &tr.acts[l], h, w, &g, gw, gb, Some(&mut g_in));
            for (gi, &a) in g_in.iter_mut().zip(&tr.acts[l]) {
                if a <= 0.0 {
                    *gi = 0.0;
                }
            }
            g = g_in;
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite loss".into()));
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header stored next to the float32 parameter blob.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsHeader {
    pub architecture: String,
    pub dtype: String,
    pub param_count: usize,
    pub layers: Vec<LayerShape>,
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub channel_gain: [f64; 3],
    pub seed: u64,
    pub selected_epoch: usize,
    pub normalization: super::Normalization,
    /// Blob file name, relative to the header.
    pub blob: String,
}

impl ParamsHeader {
    pub fn new(seed: u64, selected_epoch: usize, normalization: super::Normalization, blob: &str) -> Self {
        Self {
            architecture: ARCHITECTURE.into(),
            dtype: "f32-le".into(),
            param_count: PARAM_COUNT,
            layers: layer_shapes().into_iter().map(|(name, shape)| LayerShape { name, shape }).collect(),
            input: [INPUT_CHANNELS, super::INPUT_HEIGHT, super::INPUT_WIDTH],
            channel_gain: super::input::CHANNEL_GAIN,
            seed,
            selected_epoch,
            normalization,
            blob: blob.into(),
        }
    }
}

/// Writes `<stem>.bin` (little-endian f32) and `<stem>.json`; returns the
/// header path.
pub fn save_params(dir: &Path, stem: &str, params: &RegressorParams, header: &ParamsHeader) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(4 * PARAM_COUNT);
    for &v in params.values() {
        blob.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(dir.join(&header.blob), blob)?;
    let path = dir.join(format!("{stem}.json"));
    let mut f = fs::File::create(&path)?;
    f.write_all(serde_json::to_string_pretty(header)?.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(path)
}

pub fn load_params(header_path: &Path) -> Result<(RegressorParams, ParamsHeader)> {
    let header: ParamsHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    if header.architecture != ARCHITECTURE || header.param_count != PARAM_COUNT || header.dtype != "f32-le" {
        return Err(Error::Format(format!(
            "unsupported model {} ({} params, {})",
            header.architecture, header.param_count, header.dtype
        )));
    }
    let dir = header_path.parent().unwrap_or(Path::new("."));
    let bytes = fs::read(dir.join(&header.blob))?;
    if bytes.len() != 4 * PARAM_COUNT {
        return Err(len_err("parameter blob bytes", bytes.len(), 4 * PARAM_COUNT));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Ok((RegressorParams::from_values(values)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn toy_input(rng: &mut ChaCha8Rng, w: usize, h: usize) -> InputTensor {
        InputTensor::new(w, h, (0..3 * w * h).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
    }

    fn toy_target(rng: &mut ChaCha8Rng) -> [f64; OUTPUTS] {
        std::array::from_fn(|_| StandardNormal.sample(rng))
    }

    #[test]
    fn layout_is_contiguous() {
        let total: usize = layer_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        assert_eq!(total, PARAM_COUNT);
        assert_eq!(PARAM_COUNT, 216 + 8 + 1152 + 16 + 4608 + 32 + 192 + 6);
    }

    #[test]
    fn zero_params_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&RegressorParams::zeros(), &toy_input(&mut rng, 80, 60)).unwrap();
        assert_eq!(out, [0.0; OUTPUTS]);
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = RegressorParams::init(3);
        let x = toy_input(&mut rng, 80, 60);
        assert_eq!(forward(&p, &x).unwrap(), forward(&p, &x).unwrap());
        assert_eq!(p, RegressorParams::init(3));
    }

    #[test]
    fn translated_input_changes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = RegressorParams::init(4);
        let x = toy_input(&mut rng, 16, 12);
        let shifted: Vec<f32> = (0..3 * 16 * 12)
            .map(|i| {
                let (c, r) = (i / 192, i % 192);
                let (y, xx) = (r / 16, r % 16);
                x.data()[c * 192 + y * 16 + (xx + 15) % 16]
            })
            .collect();
        let xs = InputTensor::new(16, 12, shifted).unwrap();
        assert_ne!(forward(&p, &x).unwrap(), forward(&p, &xs).unwrap());
    }

    #[test]
    fn exact_targets_give_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = RegressorParams::init(5);
        let x = toy_input(&mut rng, 8, 6);
        let t = forward(&p, &x).unwrap();
        let (loss, grad) = loss_and_gradient(&p, &[(&x, t)]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn duplicated_batch_doubles_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = RegressorParams::init(6);
        let xs: Vec<_> = (0..3).map(|_| (toy_input(&mut rng, 8, 6), toy_target(&mut rng))).collect();
        let batch: Vec<_> = xs.iter().map(|(x, t)| (x, *t)).collect();
        let doubled: Vec<_> = batch.iter().chain(&batch).copied().collect();
        let (l1, g1) = loss_and_gradient(&p, &batch).unwrap();
        let (l2, g2) = loss_and_gradient(&p, &doubled).unwrap();
        // equal up to summation-order rounding
        assert!((2.0 * l1 - l2).abs() <= 1e-14 * l2);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn empty_batch_rejected() {
        assert!(loss_and_gradient(&RegressorParams::zeros(), &[]).is_err());
    }

    /// Central differences over random parameter subsets.
    fn max_fd_error(seed: u64, n_params: usize, w: usize, h: usize, step: f64, floor: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = RegressorParams::init(seed);
        let xs: Vec<_> = (0..2).map(|_| (toy_input(&mut rng, w, h), toy_target(&mut rng))).collect();
        let batch: Vec<_> = xs.iter().map(|(x, t)| (x, *t)).collect();
        let (_, grad) = loss_and_gradient(&p, &batch).unwrap();
        let h = step;
        let mut worst: f64 = 0.0;
        for _ in 0..n_params {
            let i = rng.random_range(0..PARAM_COUNT);
            let v = p.values()[i];
            p.values_mut()[i] = v + h;
            let lp = loss_and_gradient(&p, &batch).unwrap().0;
            p.values_mut()[i] = v - h;
            let lm = loss_and_gradient(&p, &batch).unwrap().0;
            p.values_mut()[i] = v;
            let fd = (lp - lm) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(floor);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let worst = max_fd_error(11, 200, 8, 6, 1e-4, 1e-6);
        println!("max relative error {worst:e}");
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn gradient_matches_finite_differences_at_odd_sizes() {
        // large inputs put some ReLU kink within 1e-4 of almost any
        // parameter, so use a finer step there
        for (w, h) in [(9, 7), (81, 61), (80, 60)] {
            let worst = max_fd_error(w as u64, 40, w, h, 1e-6, 1e-3);
            assert!(worst < 1e-4, "{w}x{h}: max relative error {worst}");
        }
    }

    #[test]
    fn params_round_trip_through_f32_blob() {
        let dir = tempfile::tempdir().unwrap();
        let p = RegressorParams::init(9);
        let header = ParamsHeader::new(9, 3, super::super::Normalization::identity(), "params.bin");
        let path = save_params(dir.path(), "params", &p, &header).unwrap();
        let (q, h2) = load_params(&path).unwrap();
        assert_eq!(h2, header);
        for (a, b) in p.values().iter().zip(q.values()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }
}
