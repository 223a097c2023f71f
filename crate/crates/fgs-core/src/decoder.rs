//! Shared MLP that decodes per-Gaussian features into color coefficients
//! and opacity.
//!
//! One decoder serves every Gaussian in a model. Its input is the expanded
//! `d`-dimensional feature vector; its output is 49 values: 48 spherical
//! harmonic color coefficients plus one opacity logit squashed through a
//! sigmoid, so decoded opacity always lies strictly in (0, 1).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::CoreError;
use crate::math::{sigmoid, sigmoid_grad};
use crate::sh::SH_COEFFS;

/// Total decoder outputs: [`SH_COEFFS`] color coefficients + 1 opacity logit.
pub const DECODER_OUT: usize = SH_COEFFS + 1;

/// Hidden width used by both decoder variants unless overridden.
pub const DEFAULT_HIDDEN: usize = 128;

/// Rows per parallel work chunk. Gradients are reduced chunk-by-chunk in
/// index order so results do not depend on thread scheduling.
const ROW_CHUNK: usize = 512;

/// One dense layer, weights stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// A ReLU MLP ending in a linear layer of [`DECODER_OUT`] outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub layers: Vec<DecoderLayer>,
}

impl Decoder {
    /// Decoder used with CP models: one hidden layer,
    /// `d -> 128 -> 49`.
    pub fn new_cp(feature_dim: usize, seed: u64) -> Result<Self, CoreError> {
        Self::from_layer_dims(&[feature_dim, DEFAULT_HIDDEN, DECODER_OUT], seed)
    }

    /// Decoder used with VM models: two hidden layers,
    /// `d -> hidden -> hidden -> 49`.
    pub fn new_vm(feature_dim: usize, hidden: usize, seed: u64) -> Result<Self, CoreError> {
        Self::from_layer_dims(&[feature_dim, hidden, hidden, DECODER_OUT], seed)
    }

    /// Builds a decoder with the given layer widths (input first, output
    /// last). Weights get Kaiming-uniform values (`+-sqrt(6 / in_dim)`)
    /// drawn in declaration order from a seeded generator; biases start at
    /// zero, so identical seeds give bitwise-identical decoders.
    pub fn from_layer_dims(dims: &[usize], seed: u64) -> Result<Self, CoreError> {
        if dims.len() < 2 {
            return Err(CoreError::InvalidModel(
                "decoder needs at least an input and an output width".into(),
            ));
        }
        if *dims.last().unwrap() != DECODER_OUT {
            return Err(CoreError::InvalidModel(format!(
                "decoder must output {DECODER_OUT} values, got {}",
                dims.last().unwrap()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(CoreError::InvalidModel("decoder layer width must be >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let bound = (6.0 / in_dim as f32).sqrt();
            let weight = (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect();
            layers.push(DecoderLayer {
                in_dim,
                out_dim,
                weight,
                bias: vec![0.0; out_dim],
            });
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Checks the layer chain: consecutive dims match, weights/bias lengths
    /// agree with dims, final width is [`DECODER_OUT`].
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.layers.is_empty() {
            return Err(CoreError::InvalidModel("decoder has no layers".into()));
        }
        let mut prev_out = None;
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.weight.len() != layer.in_dim * layer.out_dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "decoder layer {idx} weight: expected {}, got {}",
                    layer.in_dim * layer.out_dim,
                    layer.weight.len()
                )));
            }
            if layer.bias.len() != layer.out_dim {
                return Err(CoreError::ShapeMismatch(format!(
                    "decoder layer {idx} bias: expected {}, got {}",
                    layer.out_dim,
                    layer.bias.len()
                )));
            }
            if let Some(prev) = prev_out {
                if layer.in_dim != prev {
                    return Err(CoreError::InvalidModel(format!(
                        "decoder layer {idx} input {} does not match previous output {prev}",
                        layer.in_dim
                    )));
                }
            }
            prev_out = Some(layer.out_dim);
        }
        if prev_out != Some(DECODER_OUT) {
            return Err(CoreError::InvalidModel(format!(
                "decoder must output {DECODER_OUT} values"
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| (l.weight.len() + l.bias.len()) as u64)
            .sum()
    }

    /// Parameter arrays in serialization/optimizer order:
    /// `[w0, b0, w1, b1, ...]`.
    pub fn arrays(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(&layer.weight);
            out.push(&layer.bias);
        }
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
        }
        out
    }
}

/// Decoded attributes for `M` Gaussians: colors as flat `M x 48`
/// coefficients and per-Gaussian opacity in (0, 1).
#[derive(Debug, Clone)]
pub struct Decoded {
    pub sh: Vec<f32>,
    pub opacity: Vec<f32>,
}

/// Gradients for every decoder parameter array, ordered like
/// [`Decoder::arrays`].
#[derive(Debug, Clone)]
pub struct DecoderGrads {
    pub layers: Vec<(Vec<f32>, Vec<f32>)>,
}

impl DecoderGrads {
    pub fn zeros(decoder: &Decoder) -> Self {
        Self {
            layers: decoder
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn arrays(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::new();
        for (w, b) in &self.layers {
            out.push(w);
            out.push(b);
        }
        out
    }

    fn add(&mut self, other: &DecoderGrads) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst.0.iter_mut().zip(&src.0) {
                *d += s;
            }
            for (d, s) in dst.1.iter_mut().zip(&src.1) {
                *d += s;
            }
        }
    }
}

fn check_features(features: &[f32], feature_dim: usize, decoder: &Decoder) -> Result<usize, CoreError> {
    decoder.validate()?;
    if feature_dim != decoder.input_dim() {
        return Err(CoreError::ShapeMismatch(format!(
            "feature dimension {feature_dim} does not match decoder input {}",
            decoder.input_dim()
        )));
    }
    if features.len() % feature_dim != 0 {
        return Err(CoreError::ShapeMismatch(format!(
            "feature array length {} is not a multiple of dimension {feature_dim}",
            features.len()
        )));
    }
    Ok(features.len() / feature_dim)
}

/// Runs one row through all layers, filling per-layer pre-activations.
/// `pre[l]` receives layer l's affine output before ReLU (or before the
/// final identity/sigmoid split).
fn forward_row(decoder: &Decoder, row: &[f32], pre: &mut [Vec<f32>], post: &mut [Vec<f32>]) {
    for (l, layer) in decoder.layers.iter().enumerate() {
        let (done, rest) = post.split_at_mut(l);
        let input: &[f32] = if l == 0 { row } else { &done[l - 1] };
        let pre_l = &mut pre[l];
        for o in 0..layer.out_dim {
            let mut acc = layer.bias[o];
            let wrow = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (w, x) in wrow.iter().zip(input) {
                acc += w * x;
            }
            pre_l[o] = acc;
        }
        let last = l + 1 == decoder.layers.len();
        let post_l = &mut rest[0];
        for o in 0..layer.out_dim {
            post_l[o] = if last { pre_l[o] } else { pre_l[o].max(0.0) };
        }
    }
}

fn make_scratch(decoder: &Decoder) -> (Vec<Vec<f32>>, Vec<Vec<f32>>) {
    let pre: Vec<Vec<f32>> = decoder.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
    let post = pre.clone();
    (pre, post)
}

/// Decodes `M` feature rows into colors and opacities.
pub fn decode(features: &[f32], feature_dim: usize, decoder: &Decoder) -> Result<Decoded, CoreError> {
    let rows = check_features(features, feature_dim, decoder)?;
    let mut sh = vec![0.0f32; rows * SH_COEFFS];
    let mut opacity = vec![0.0f32; rows];
    sh.par_chunks_mut(ROW_CHUNK * SH_COEFFS)
        .zip(opacity.par_chunks_mut(ROW_CHUNK))
        .enumerate()
        .for_each(|(ci, (sh_chunk, op_chunk))| {
            let (mut pre, mut post) = make_scratch(decoder);
            let base = ci * ROW_CHUNK;
            for r in 0..op_chunk.len() {
                let row = &features[(base + r) * feature_dim..(base + r + 1) * feature_dim];
                forward_row(decoder, row, &mut pre, &mut post);
                let out = post.last().unwrap();
                sh_chunk[r * SH_COEFFS..(r + 1) * SH_COEFFS].copy_from_slice(&out[..SH_COEFFS]);
                // Saturated logits would round to exactly 0 or 1; the
                // clamp keeps opacity strictly inside the unit interval.
                op_chunk[r] =
                    sigmoid(out[SH_COEFFS]).clamp(f32::MIN_POSITIVE, 1.0 - f32::EPSILON / 2.0);
            }
        });
    Ok(Decoded { sh, opacity })
}

/// Backward pass of [`decode`]. `grad_sh` is flat `M x 48`; `grad_opacity`
/// is the gradient with respect to the post-sigmoid opacity. Activations
/// are recomputed, so no forward state needs to be kept. Returns the
/// gradient for the feature rows and for all decoder parameters.
pub fn decode_backward(
    features: &[f32],
    feature_dim: usize,
    decoder: &Decoder,
    grad_sh: &[f32],
    grad_opacity: &[f32],
) -> Result<(Vec<f32>, DecoderGrads), CoreError> {
    let rows = check_features(features, feature_dim, decoder)?;
    if grad_sh.len() != rows * SH_COEFFS || grad_opacity.len() != rows {
        return Err(CoreError::ShapeMismatch(format!(
            "output gradients expect {rows} rows, got {} sh / {} opacity",
            grad_sh.len() / SH_COEFFS,
            grad_opacity.len()
        )));
    }
    let mut grad_features = vec![0.0f32; features.len()];
    let partials: Vec<DecoderGrads> = grad_features
        .par_chunks_mut(ROW_CHUNK * feature_dim)
        .enumerate()
        .map(|(ci, feat_chunk)| {
            let mut local = DecoderGrads::zeros(decoder);
            let (mut pre, mut post) = make_scratch(decoder);
            let mut delta: Vec<Vec<f32>> =
                decoder.layers.iter().map(|l| vec![0.0; l.out_dim]).collect();
            let base = ci * ROW_CHUNK;
            let chunk_rows = feat_chunk.len() / feature_dim;
            for r in 0..chunk_rows {
                let g = base + r;
                let row = &features[g * feature_dim..(g + 1) * feature_dim];
                forward_row(decoder, row, &mut pre, &mut post);
                let n_layers = decoder.layers.len();
                // Output layer: colors pass straight through, opacity
                // chains through the sigmoid at the stored logit.
                let out_delta = &mut delta[n_layers - 1];
                out_delta[..SH_COEFFS]
                    .copy_from_slice(&grad_sh[g * SH_COEFFS..(g + 1) * SH_COEFFS]);
                out_delta[SH_COEFFS] =
                    grad_opacity[g] * sigmoid_grad(pre[n_layers - 1][SH_COEFFS]);
                for l in (0..n_layers).rev() {
                    let layer = &decoder.layers[l];
                    // Hidden layers: gate by ReLU activity first.
                    if l + 1 != n_layers {
                        for o in 0..layer.out_dim {
                            if pre[l][o] <= 0.0 {
                                delta[l][o] = 0.0;
                            }
                        }
                    }
                    let input: &[f32] = if l == 0 { row } else { &post[l - 1] };
                    let (gw, gb) = &mut local.layers[l];
                    for o in 0..layer.out_dim {
                        let d = delta[l][o];
                        gb[o] += d;
                        let wrow = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                        for (w, x) in wrow.iter_mut().zip(input) {
                            *w += d * x;
                        }
                    }
                    // Propagate to the previous layer (or the features).
                    if l == 0 {
                        let frow = &mut feat_chunk[r * feature_dim..(r + 1) * feature_dim];
                        for o in 0..layer.out_dim {
                            let d = delta[l][o];
                            let wrow = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                            for (f, w) in frow.iter_mut().zip(wrow) {
                                *f += d * w;
                            }
                        }
                    } else {
                        let (head, tail) = delta.split_at_mut(l);
                        let prev = &mut head[l - 1];
                        prev.fill(0.0);
                        let d_here = &tail[0];
                        for o in 0..layer.out_dim {
                            let d = d_here[o];
                            let wrow = &layer.weight[o * layer.in_dim..(o + 1) * layer.in_dim];
                            for (p, w) in prev.iter_mut().zip(wrow) {
                                *p += d * w;
                            }
                        }
                    }
                }
            }
            local
        })
        .collect();
    let mut grads = DecoderGrads::zeros(decoder);
    for partial in &partials {
        grads.add(partial);
    }
    Ok((grad_features, grads))
}
