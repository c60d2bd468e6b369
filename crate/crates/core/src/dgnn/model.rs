//! Directed graph network: graph-temporal blocks over joints (vertices) and
//! bones (edges), global average pooling and a two-layer classifier head.
//!
//! Per frame, each block updates vertices from their own features and the
//! features of outgoing and incoming bones, then updates bones from their own
//! features and the freshly updated source and target joints. A temporal
//! convolution then runs along time on each stream. Feature maps are stored
//! row-major as `(T * nodes) x channels`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, MatMut, MatRef};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::skeleton::{FeatureWindow, IncidencePair, IntentionClass};

/// Number of output classes, ordered `(pull, idle, push)`.
pub const N_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Coordinates per joint and per bone.
    pub in_channels: usize,
    /// Output channels of each graph-temporal block.
    pub channels: Vec<usize>,
    /// Temporal kernel length (odd).
    pub temporal_kernel: usize,
    pub fc_hidden: usize,
    pub dropout: f64,
    /// Frames of the input window.
    pub window_length: usize,
    /// The network sees every `frame_step`-th frame, ending at the last one.
    pub frame_step: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_channels: 3,
            channels: vec![32, 64, 64],
            temporal_kernel: 5,
            fc_hidden: 64,
            dropout: 0.3,
            window_length: 50,
            frame_step: 5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) || self.in_channels == 0 {
            return Err(Error::Precondition("channel plan must be non-empty and positive".into()));
        }
        if self.temporal_kernel.is_multiple_of(2) {
            return Err(Error::Precondition(format!(
                "temporal kernel must be odd, got {}",
                self.temporal_kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Precondition(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.frame_step == 0 || self.window_length == 0 || self.fc_hidden == 0 {
            return Err(Error::Precondition("window, frame step and hidden size must be positive".into()));
        }
        Ok(())
    }

    /// Frames actually fed to the network.
    pub fn network_frames(&self) -> usize {
        (self.window_length - 1) / self.frame_step + 1
    }

    fn pooled_width(&self) -> usize {
        2 * self.channels.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    /// `(3 * c_in) x c_out`.
    pub vertex_weight: Tensor,
    pub vertex_bias: Tensor,
    /// `(c_in + 2 * c_out) x c_out`: own features plus updated source and
    /// target joints.
    pub edge_weight: Tensor,
    pub edge_bias: Tensor,
    /// `k_t x c_out x c_out`.
    pub temporal_vertex: Tensor,
    pub temporal_vertex_bias: Tensor,
    pub temporal_edge: Tensor,
    pub temporal_edge_bias: Tensor,
}

impl BlockParams {
    pub fn zeros(c_in: usize, c_out: usize, k_t: usize) -> Self {
        BlockParams {
            vertex_weight: Tensor::zeros(&[3 * c_in, c_out]),
            vertex_bias: Tensor::zeros(&[c_out]),
            edge_weight: Tensor::zeros(&[c_in + 2 * c_out, c_out]),
            edge_bias: Tensor::zeros(&[c_out]),
            temporal_vertex: Tensor::zeros(&[k_t, c_out, c_out]),
            temporal_vertex_bias: Tensor::zeros(&[c_out]),
            temporal_edge: Tensor::zeros(&[k_t, c_out, c_out]),
            temporal_edge_bias: Tensor::zeros(&[c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.vertex_weight.shape[0] / 3
    }

    pub fn c_out(&self) -> usize {
        self.vertex_weight.shape[1]
    }

    pub fn k_t(&self) -> usize {
        self.temporal_vertex.shape[0]
    }

    fn tensors(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("vertex_weight", &self.vertex_weight),
            ("vertex_bias", &self.vertex_bias),
            ("edge_weight", &self.edge_weight),
            ("edge_bias", &self.edge_bias),
            ("temporal_vertex", &self.temporal_vertex),
            ("temporal_vertex_bias", &self.temporal_vertex_bias),
            ("temporal_edge", &self.temporal_edge),
            ("temporal_edge_bias", &self.temporal_edge_bias),
        ]
    }

    fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 8] {
        [
            ("vertex_weight", &mut self.vertex_weight),
            ("vertex_bias", &mut self.vertex_bias),
            ("edge_weight", &mut self.edge_weight),
            ("edge_bias", &mut self.edge_bias),
            ("temporal_vertex", &mut self.temporal_vertex),
            ("temporal_vertex_bias", &mut self.temporal_vertex_bias),
            ("temporal_edge", &mut self.temporal_edge),
            ("temporal_edge_bias", &mut self.temporal_edge_bias),
        ]
    }
}

/// Every learnable tensor of the network. Gradients use the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub blocks: Vec<BlockParams>,
    pub fc1_weight: Tensor,
    pub fc1_bias: Tensor,
    pub fc2_weight: Tensor,
    pub fc2_bias: Tensor,
}

/// Uniform He initialisation, suited to the ReLU after every layer.
fn he_uniform(t: &mut Tensor, fan_in: usize, rng: &mut (impl Rng + ?Sized)) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in t.data.iter_mut() {
        *v = rng.random_range(-bound..bound);
    }
}

impl ModelParams {
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::new();
        let mut c_in = config.in_channels;
        for &c_out in &config.channels {
            blocks.push(BlockParams::zeros(c_in, c_out, config.temporal_kernel));
            c_in = c_out;
        }
        Ok(ModelParams {
            config: config.clone(),
            blocks,
            fc1_weight: Tensor::zeros(&[config.pooled_width(), config.fc_hidden]),
            fc1_bias: Tensor::zeros(&[config.fc_hidden]),
            fc2_weight: Tensor::zeros(&[config.fc_hidden, N_CLASSES]),
            fc2_bias: Tensor::zeros(&[N_CLASSES]),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, rng: &mut (impl Rng + ?Sized)) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        for b in &mut p.blocks {
            let (c_in, c_out, k) = (b.c_in(), b.c_out(), b.k_t());
            he_uniform(&mut b.vertex_weight, 3 * c_in, rng);
            he_uniform(&mut b.edge_weight, c_in + 2 * c_out, rng);
            he_uniform(&mut b.temporal_vertex, k * c_out, rng);
            he_uniform(&mut b.temporal_edge, k * c_out, rng);
        }
        let (w, h) = (config.pooled_width(), config.fc_hidden);
        he_uniform(&mut p.fc1_weight, w, rng);
        he_uniform(&mut p.fc2_weight, h, rng);
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, t) in b.tensors() {
                out.push((format!("block{i}.{name}"), t));
            }
        }
        out.push(("fc1_weight".into(), &self.fc1_weight));
        out.push(("fc1_bias".into(), &self.fc1_bias));
        out.push(("fc2_weight".into(), &self.fc2_weight));
        out.push(("fc2_bias".into(), &self.fc2_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (name, t) in b.tensors_mut() {
                out.push((format!("block{i}.{name}"), t));
            }
        }
        out.push(("fc1_weight".into(), &mut self.fc1_weight));
        out.push(("fc1_bias".into(), &mut self.fc1_bias));
        out.push(("fc2_weight".into(), &mut self.fc2_weight));
        out.push(("fc2_bias".into(), &mut self.fc2_bias));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every tensor against the shapes implied by the config.
    pub fn validate(&self) -> Result<()> {
        let expected = ModelParams::zeros(&self.config)?;
        let (a, b) = (self.tensors(), expected.tensors());
        if a.len() != b.len() {
            return Err(Error::Dimension(format!("expected {} tensors, found {}", b.len(), a.len())));
        }
        for ((name, t), (_, e)) in a.iter().zip(&b) {
            if t.shape != e.shape || !t.is_consistent() {
                return Err(Error::Dimension(format!(
                    "{name}: shape {:?} (len {}), expected {:?}",
                    t.shape,
                    t.len(),
                    e.shape
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Decimated network input: `(T' * J) x 3` joints and `(T' * B) x 3` bones.
pub struct NetInput {
    pub frames: usize,
    pub vertices: Vec<f64>,
    pub edges: Vec<f64>,
}

pub fn prepare_input(window: &FeatureWindow, config: &ModelConfig, inc: &IncidencePair) -> Result<NetInput> {
    if window.joint_count != inc.joint_count || window.bone_count != inc.bone_count {
        return Err(Error::Dimension(format!(
            "window has {} joints / {} bones, graph has {} / {}",
            window.joint_count, window.bone_count, inc.joint_count, inc.bone_count
        )));
    }
    if window.window_length != config.window_length || config.in_channels != 3 {
        return Err(Error::Dimension(format!(
            "window length {} (model expects {}) with 3 coordinates",
            window.window_length, config.window_length
        )));
    }
    let n = config.network_frames();
    let first = window.window_length - 1 - (n - 1) * config.frame_step;
    let mut vertices = Vec::with_capacity(n * inc.joint_count * 3);
    let mut edges = Vec::with_capacity(n * inc.bone_count * 3);
    for k in 0..n {
        let t = first + k * config.frame_step;
        for j in 0..inc.joint_count {
            vertices.extend_from_slice(&window.joint(t, j));
        }
        for b in 0..inc.bone_count {
            edges.extend_from_slice(&window.bone(t, b));
        }
    }
    Ok(NetInput {
        frames: n,
        vertices,
        edges,
    })
}

#[derive(Debug, Clone)]
struct BlockCache {
    v_in: Vec<f64>,
    v_hidden: Vec<f64>,
    e_in: Vec<f64>,
    e_hidden: Vec<f64>,
    v_out: Vec<f64>,
    e_out: Vec<f64>,
}

/// Intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    frames: usize,
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    mask: Option<Vec<f64>>,
    dropped: Vec<f64>,
    hidden: Vec<f64>,
}

impl ForwardCache {
    /// Pooled features before dropout.
    pub fn pooled(&self) -> &[f64] {
        &self.pooled
    }
}

/// `rows x w.shape[1]` output of `x * w + bias`.
fn linear(x: &[f64], rows: usize, w: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (k, n) = (w.shape[0], w.shape[1]);
    let mut out = Vec::with_capacity(rows * n);
    for _ in 0..rows {
        out.extend_from_slice(&bias.data);
    }
    gemm(1.0, MatRef::new(x, rows, k), MatRef::new(&w.data, k, n), 1.0, MatMut::new(&mut out, rows, n));
    out
}

fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes gradient entries whose activation was clipped by ReLU.
fn relu_backward(grad: &mut [f64], activation: &[f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn col_sum_into(x: &[f64], cols: usize, out: &mut [f64]) {
    for row in x.chunks(cols) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

/// Row range `[t0, t1)` of output frames reading input frame `t + shift`.
fn shifted_range(frames: usize, shift: isize) -> (usize, usize) {
    let t0 = (-shift).max(0) as usize;
    let t1 = (frames as isize - shift.max(0)).max(0) as usize;
    (t0.min(frames), t1)
}

/// Zero-padded "same" convolution along time, kernel `[k, c, c]`.
fn temporal_forward(x: &[f64], frames: usize, nodes: usize, kernel: &Tensor, bias: &Tensor) -> Vec<f64> {
    let (k, c) = (kernel.shape[0], kernel.shape[1]);
    let pad = (k / 2) as isize;
    let rows = frames * nodes;
    let mut out = Vec::with_capacity(rows * c);
    for _ in 0..rows {
        out.extend_from_slice(&bias.data);
    }
    for tap in 0..k {
        let shift = tap as isize - pad;
        let (t0, t1) = shifted_range(frames, shift);
        if t0 >= t1 {
            continue;
        }
        let n = (t1 - t0) * nodes;
        let src = ((t0 as isize + shift) as usize) * nodes;
        gemm(
            1.0,
            MatRef::new(x, rows, c).block(src, n, 0, c),
            MatRef::new(&kernel.data[tap * c * c..(tap + 1) * c * c], c, c),
            1.0,
            MatMut::new(&mut out, rows, c).block(t0 * nodes, n, 0, c),
        );
    }
    out
}

/// Returns the gradient w.r.t. the convolution input and accumulates kernel
/// and bias gradients.
fn temporal_backward(
    x: &[f64],
    grad_out: &[f64],
    frames: usize,
    nodes: usize,
    kernel: &Tensor,
    g_kernel: &mut Tensor,
    g_bias: &mut Tensor,
) -> Vec<f64> {
    let (k, c) = (kernel.shape[0], kernel.shape[1]);
    let pad = (k / 2) as isize;
    let rows = frames * nodes;
    let mut grad_in = vec![0.0; rows * c];
    col_sum_into(grad_out, c, &mut g_bias.data);
    for tap in 0..k {
        let shift = tap as isize - pad;
        let (t0, t1) = shifted_range(frames, shift);
        if t0 >= t1 {
            continue;
        }
        let n = (t1 - t0) * nodes;
        let src = ((t0 as isize + shift) as usize) * nodes;
        let go = MatRef::new(grad_out, rows, c).block(t0 * nodes, n, 0, c);
        gemm(
            1.0,
            MatRef::new(x, rows, c).block(src, n, 0, c).t(),
            go,
            1.0,
            MatMut::new(&mut g_kernel.data[tap * c * c..(tap + 1) * c * c], c, c),
        );
        gemm(
            1.0,
            go,
            MatRef::new(&kernel.data[tap * c * c..(tap + 1) * c * c], c, c).t(),
            1.0,
            MatMut::new(&mut grad_in, rows, c).block(src, n, 0, c),
        );
    }
    grad_in
}

fn block_forward(v: &[f64], e: &[f64], frames: usize, inc: &IncidencePair, p: &BlockParams) -> BlockCache {
    let (j, b) = (inc.joint_count, inc.bone_count);
    let (c_in, c_out) = (p.c_in(), p.c_out());
    let a_s = MatRef::new(&inc.source, j, b);
    let a_t = MatRef::new(&inc.target, j, b);

    let vw = 3 * c_in;
    let mut v_in = vec![0.0; frames * j * vw];
    for (row, src) in v_in.chunks_mut(vw).zip(v.chunks(c_in)) {
        row[..c_in].copy_from_slice(src);
    }
    let e_all = MatRef::new(e, frames * b, c_in);
    for t in 0..frames {
        let e_t = e_all.block(t * b, b, 0, c_in);
        gemm(1.0, a_s, e_t, 0.0, MatMut::new(&mut v_in, frames * j, vw).block(t * j, j, c_in, c_in));
        gemm(1.0, a_t, e_t, 0.0, MatMut::new(&mut v_in, frames * j, vw).block(t * j, j, 2 * c_in, c_in));
    }
    let mut v_hidden = linear(&v_in, frames * j, &p.vertex_weight, &p.vertex_bias);
    relu(&mut v_hidden);

    let ew = c_in + 2 * c_out;
    let mut e_in = vec![0.0; frames * b * ew];
    for (row, src) in e_in.chunks_mut(ew).zip(e.chunks(c_in)) {
        row[..c_in].copy_from_slice(src);
    }
    let vh_all = MatRef::new(&v_hidden, frames * j, c_out);
    for t in 0..frames {
        let vh_t = vh_all.block(t * j, j, 0, c_out);
        gemm(1.0, a_s.t(), vh_t, 0.0, MatMut::new(&mut e_in, frames * b, ew).block(t * b, b, c_in, c_out));
        gemm(
            1.0,
            a_t.t(),
            vh_t,
            0.0,
            MatMut::new(&mut e_in, frames * b, ew).block(t * b, b, c_in + c_out, c_out),
        );
    }
    let mut e_hidden = linear(&e_in, frames * b, &p.edge_weight, &p.edge_bias);
    relu(&mut e_hidden);

    let mut v_out = temporal_forward(&v_hidden, frames, j, &p.temporal_vertex, &p.temporal_vertex_bias);
    relu(&mut v_out);
    let mut e_out = temporal_forward(&e_hidden, frames, b, &p.temporal_edge, &p.temporal_edge_bias);
    relu(&mut e_out);
    BlockCache {
        v_in,
        v_hidden,
        e_in,
        e_hidden,
        v_out,
        e_out,
    }
}

/// Accumulates parameter gradients into `g`; returns input gradients when
/// `input_grad` is set.
#[allow(clippy::too_many_arguments)]
fn block_backward(
    cache: &BlockCache,
    frames: usize,
    inc: &IncidencePair,
    p: &BlockParams,
    mut d_v_out: Vec<f64>,
    mut d_e_out: Vec<f64>,
    g: &mut BlockParams,
    input_grad: bool,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let (j, b) = (inc.joint_count, inc.bone_count);
    let (c_in, c_out) = (p.c_in(), p.c_out());
    let a_s = MatRef::new(&inc.source, j, b);
    let a_t = MatRef::new(&inc.target, j, b);

    relu_backward(&mut d_v_out, &cache.v_out);
    relu_backward(&mut d_e_out, &cache.e_out);
    let mut d_vh = temporal_backward(
        &cache.v_hidden,
        &d_v_out,
        frames,
        j,
        &p.temporal_vertex,
        &mut g.temporal_vertex,
        &mut g.temporal_vertex_bias,
    );
    let mut d_eh = temporal_backward(
        &cache.e_hidden,
        &d_e_out,
        frames,
        b,
        &p.temporal_edge,
        &mut g.temporal_edge,
        &mut g.temporal_edge_bias,
    );

    // edge update
    relu_backward(&mut d_eh, &cache.e_hidden);
    let ew = c_in + 2 * c_out;
    let (er, vr) = (frames * b, frames * j);
    gemm(
        1.0,
        MatRef::new(&cache.e_in, er, ew).t(),
        MatRef::new(&d_eh, er, c_out),
        1.0,
        MatMut::new(&mut g.edge_weight.data, ew, c_out),
    );
    col_sum_into(&d_eh, c_out, &mut g.edge_bias.data);
    let mut d_ein = vec![0.0; er * ew];
    gemm(
        1.0,
        MatRef::new(&d_eh, er, c_out),
        MatRef::new(&p.edge_weight.data, ew, c_out).t(),
        0.0,
        MatMut::new(&mut d_ein, er, ew),
    );
    let d_ein_all = MatRef::new(&d_ein, er, ew);
    for t in 0..frames {
        let from_source = d_ein_all.block(t * b, b, c_in, c_out);
        let from_target = d_ein_all.block(t * b, b, c_in + c_out, c_out);
        gemm(1.0, a_s, from_source, 1.0, MatMut::new(&mut d_vh, vr, c_out).block(t * j, j, 0, c_out));
        gemm(1.0, a_t, from_target, 1.0, MatMut::new(&mut d_vh, vr, c_out).block(t * j, j, 0, c_out));
    }

    // vertex update
    relu_backward(&mut d_vh, &cache.v_hidden);
    let vw = 3 * c_in;
    gemm(
        1.0,
        MatRef::new(&cache.v_in, vr, vw).t(),
        MatRef::new(&d_vh, vr, c_out),
        1.0,
        MatMut::new(&mut g.vertex_weight.data, vw, c_out),
    );
    col_sum_into(&d_vh, c_out, &mut g.vertex_bias.data);
    if !input_grad {
        return None;
    }
    let mut d_vin = vec![0.0; vr * vw];
    gemm(
        1.0,
        MatRef::new(&d_vh, vr, c_out),
        MatRef::new(&p.vertex_weight.data, vw, c_out).t(),
        0.0,
        MatMut::new(&mut d_vin, vr, vw),
    );
    let d_v: Vec<f64> = d_vin.chunks(vw).flat_map(|row| row[..c_in].iter().copied()).collect();
    let mut d_e: Vec<f64> = d_ein.chunks(ew).flat_map(|row| row[..c_in].iter().copied()).collect();
    let d_vin_all = MatRef::new(&d_vin, vr, vw);
    for t in 0..frames {
        let from_source = d_vin_all.block(t * j, j, c_in, c_in);
        let from_target = d_vin_all.block(t * j, j, 2 * c_in, c_in);
        gemm(1.0, a_s.t(), from_source, 1.0, MatMut::new(&mut d_e, er, c_in).block(t * b, b, 0, c_in));
        gemm(1.0, a_t.t(), from_target, 1.0, MatMut::new(&mut d_e, er, c_in).block(t * b, b, 0, c_in));
    }
    Some((d_v, d_e))
}

/// Runs the network on a window. Train mode samples an inverted-dropout mask
/// from `rng`; eval mode leaves `rng` untouched.
pub fn model_forward<R: Rng + ?Sized>(
    window: &FeatureWindow,
    params: &ModelParams,
    inc: &IncidencePair,
    mode: Mode,
    rng: &mut R,
) -> Result<([f64; N_CLASSES], ForwardCache)> {
    let mask = match mode {
        Mode::Eval => None,
        Mode::Train => Some(dropout_mask(params.config.pooled_width(), params.config.dropout, rng)),
    };
    forward_input(&prepare_input(window, &params.config, inc)?, params, inc, mask)
}

/// Inverted-dropout mask: kept units are scaled by `1 / (1 - p)`.
pub fn dropout_mask<R: Rng + ?Sized>(width: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..width)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Forward pass with an explicit dropout mask (`None` = eval).
pub fn forward_input(
    input: &NetInput,
    params: &ModelParams,
    inc: &IncidencePair,
    mask: Option<Vec<f64>>,
) -> Result<([f64; N_CLASSES], ForwardCache)> {
    let frames = input.frames;
    let mut blocks: Vec<BlockCache> = Vec::with_capacity(params.blocks.len());
    for (layer, p) in params.blocks.iter().enumerate() {
        let (v, e) = match blocks.last() {
            Some(prev) => (&prev.v_out, &prev.e_out),
            None => (&input.vertices, &input.edges),
        };
        let cache = block_forward(v, e, frames, inc, p);
        if !cache.v_out.iter().chain(&cache.e_out).all(|x| x.is_finite()) {
            return Err(Error::Numerical { layer });
        }
        blocks.push(cache);
    }
    let last = blocks.last().expect("at least one block");
    let c = params.blocks.last().expect("at least one block").c_out();
    let mut pooled = vec![0.0; 2 * c];
    col_sum_into(&last.v_out, c, &mut pooled[..c]);
    col_sum_into(&last.e_out, c, &mut pooled[c..]);
    let (vn, en) = ((frames * inc.joint_count) as f64, (frames * inc.bone_count) as f64);
    pooled[..c].iter_mut().for_each(|x| *x /= vn);
    pooled[c..].iter_mut().for_each(|x| *x /= en);

    let dropped: Vec<f64> = match &mask {
        Some(m) => pooled.iter().zip(m).map(|(x, k)| x * k).collect(),
        None => pooled.clone(),
    };
    let n_blocks = params.blocks.len();
    let mut hidden = linear(&dropped, 1, &params.fc1_weight, &params.fc1_bias);
    relu(&mut hidden);
    if !hidden.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical { layer: n_blocks });
    }
    let out = linear(&hidden, 1, &params.fc2_weight, &params.fc2_bias);
    let logits = [out[0], out[1], out[2]];
    if !logits.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical { layer: n_blocks + 1 });
    }
    Ok((
        logits,
        ForwardCache {
            frames,
            blocks,
            pooled,
            mask,
            dropped,
            hidden,
        },
    ))
}

/// Back-propagates `d_logits` and accumulates into `grads`.
pub fn model_backward(
    cache: &ForwardCache,
    params: &ModelParams,
    inc: &IncidencePair,
    d_logits: &[f64; N_CLASSES],
    grads: &mut ModelParams,
) {
    let h = params.config.fc_hidden;
    let width = cache.pooled.len();
    // fc2
    gemm(
        1.0,
        MatRef::new(&cache.hidden, 1, h).t(),
        MatRef::new(d_logits, 1, N_CLASSES),
        1.0,
        MatMut::new(&mut grads.fc2_weight.data, h, N_CLASSES),
    );
    for (g, d) in grads.fc2_bias.data.iter_mut().zip(d_logits) {
        *g += d;
    }
    let mut d_hidden = vec![0.0; h];
    gemm(
        1.0,
        MatRef::new(d_logits, 1, N_CLASSES),
        MatRef::new(&params.fc2_weight.data, h, N_CLASSES).t(),
        0.0,
        MatMut::new(&mut d_hidden, 1, h),
    );
    relu_backward(&mut d_hidden, &cache.hidden);
    // fc1
    gemm(
        1.0,
        MatRef::new(&cache.dropped, 1, width).t(),
        MatRef::new(&d_hidden, 1, h),
        1.0,
        MatMut::new(&mut grads.fc1_weight.data, width, h),
    );
    for (g, d) in grads.fc1_bias.data.iter_mut().zip(&d_hidden) {
        *g += d;
    }
    let mut d_pooled = vec![0.0; width];
    gemm(
        1.0,
        MatRef::new(&d_hidden, 1, h),
        MatRef::new(&params.fc1_weight.data, width, h).t(),
        0.0,
        MatMut::new(&mut d_pooled, 1, width),
    );
    if let Some(m) = &cache.mask {
        d_pooled.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
    }

    // global average pooling
    let frames = cache.frames;
    let (j, b) = (inc.joint_count, inc.bone_count);
    let c = width / 2;
    let (vn, en) = ((frames * j) as f64, (frames * b) as f64);
    let mut d_v: Vec<f64> = (0..frames * j).flat_map(|_| d_pooled[..c].iter().map(|d| d / vn)).collect();
    let mut d_e: Vec<f64> = (0..frames * b).flat_map(|_| d_pooled[c..].iter().map(|d| d / en)).collect();

    for layer in (0..params.blocks.len()).rev() {
        let next = block_backward(
            &cache.blocks[layer],
            frames,
            inc,
            &params.blocks[layer],
            d_v,
            d_e,
            &mut grads.blocks[layer],
            layer > 0,
        );
        match next {
            Some((v, e)) => {
                d_v = v;
                d_e = e;
            }
            None => break,
        }
    }
}

/// Argmax over `(pull, idle, push)`; ties go to idle, then pull.
pub fn select_class(logits: &[f64; N_CLASSES]) -> IntentionClass {
    let mut best = IntentionClass::Idle;
    for class in [IntentionClass::Pull, IntentionClass::Push] {
        if logits[class.index()] > logits[best.index()] {
            best = class;
        }
    }
    best
}
