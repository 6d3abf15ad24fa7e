//! Policy model: row embedding, multi-head self-attention encoder and
//! the parameters of the recurrent pointer decoder.
//!
//! The model owns plain matrices. A forward pass first *stages* the
//! parameters onto a gradient tape (as trainable leaves for training,
//! frozen constants for inference or embedding-only search) and then
//! runs the computation against the staged handles. Parameter
//! enumeration order is fixed, so gradients, optimizer state and
//! checkpoints all share one flat layout.

use crate::mat::{Mat, Scalar};
use crate::tape::{BnObservation, NodeId, Tape};
use crate::PolicyError;
use jsp_core::SeqEncoding;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Numeric width of model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Precision::F32 => write!(f, "f32"),
            Precision::F64 => write!(f, "f64"),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(format!("unknown precision `{other}`")),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding width.
    pub d_h: usize,
    pub n_heads: usize,
    /// Attention layers in the encoder.
    pub n_layers: usize,
    /// Hidden width of each encoder feed-forward block.
    pub ff_width: usize,
    /// Optional tanh clipping of pointer scores to `[-c, c]`.
    pub score_clip: Option<f64>,
    pub precision: Precision,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 128,
            n_heads: 8,
            n_layers: 3,
            ff_width: 512,
            score_clip: None,
            precision: Precision::F64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.d_h == 0 || self.n_heads == 0 || self.n_layers == 0 || self.ff_width == 0 {
            return Err(PolicyError::InvalidConfig(
                "d_h, n_heads, n_layers and ff_width must be positive".into(),
            ));
        }
        if !self.d_h.is_multiple_of(self.n_heads) {
            return Err(PolicyError::InvalidConfig(format!(
                "d_h ({}) must be divisible by n_heads ({})",
                self.d_h, self.n_heads
            )));
        }
        if let Some(c) = self.score_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(PolicyError::InvalidConfig(
                    "score_clip must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Trainable parameter count implied by this config.
    pub fn expected_param_count(&self) -> usize {
        let d = self.d_h;
        let f = self.ff_width;
        let bn = |c: usize| 2 * c;
        let lin = |out: usize, input: usize| out * input + out;
        let embed = 2 * (bn(2) + lin(d, 2)) + bn(d) + lin(d, d);
        let layer = 4 * d * d + bn(d) + lin(f, d) + lin(d, f) + bn(d);
        let decoder = lin(d, d) + d + 3 * (2 * d * d + d);
        let pointer = 2 * d * d + d;
        embed + self.n_layers * layer + decoder + pointer
    }
}

/// Whether staged parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Staging {
    Trainable,
    Frozen,
}

/// Which statistics batch normalization uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Statistics of the rows being normalized (training).
    Batch,
    /// Frozen running statistics (inference; deterministic).
    Running,
}

fn uniform_mat<T: Scalar>(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Mat<T> {
    let data = (0..rows * cols)
        .map(|_| T::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound))
        .collect();
    Mat::from_vec(rows, cols, data)
}

#[derive(Debug, Clone)]
pub(crate) struct Linear<T> {
    /// `[out x in]`; applied as `x * w^T + b`.
    w: Mat<T>,
    b: Mat<T>,
}

impl<T: Scalar> Linear<T> {
    fn init(out: usize, input: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w: uniform_mat(out, input, bound, rng),
            b: uniform_mat(1, out, bound, rng),
        }
    }

    fn params(&self) -> Vec<&Mat<T>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        vec![&mut self.w, &mut self.b]
    }

    fn stage(&self, tape: &mut Tape<T>, staging: Staging, ids: &mut Vec<NodeId>) -> StagedLinear {
        let w = stage_mat(tape, &self.w, staging, ids);
        let b = stage_mat(tape, &self.b, staging, ids);
        StagedLinear { w, b }
    }
}

pub(crate) struct StagedLinear {
    w: NodeId,
    b: NodeId,
}

impl StagedLinear {
    pub(crate) fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: NodeId) -> NodeId {
        let h = tape.matmul_nt(x, self.w);
        tape.add_row(h, self.b)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm<T> {
    gamma: Mat<T>,
    beta: Mat<T>,
    pub(crate) running_mean: Vec<T>,
    pub(crate) running_var: Vec<T>,
    eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    fn new(width: usize) -> Self {
        Self {
            gamma: Mat::from_vec(1, width, vec![T::one(); width]),
            beta: Mat::zeros(1, width),
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            eps: T::from_f64(1e-5),
        }
    }

    fn params(&self) -> Vec<&Mat<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn stage<'m>(
        &'m self,
        tape: &mut Tape<T>,
        staging: Staging,
        ids: &mut Vec<NodeId>,
    ) -> StagedBatchNorm<'m, T> {
        let gamma = stage_mat(tape, &self.gamma, staging, ids);
        let beta = stage_mat(tape, &self.beta, staging, ids);
        StagedBatchNorm {
            gamma,
            beta,
            layer: self,
        }
    }

    /// Folds one observed batch statistic into the running estimates.
    /// Follows the usual convention: unbiased variance for the running
    /// estimate (biased is used for normalization itself).
    pub(crate) fn fold_observation(&mut self, obs: &BnObservation<T>, momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::one() - m;
        let correction = if obs.rows > 1 {
            T::from_f64(obs.rows as f64 / (obs.rows as f64 - 1.0))
        } else {
            T::one()
        };
        for (r, &b) in self.running_mean.iter_mut().zip(&obs.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&obs.var) {
            *r = keep * *r + m * (b * correction);
        }
    }
}

pub(crate) struct StagedBatchNorm<'m, T> {
    gamma: NodeId,
    beta: NodeId,
    layer: &'m BatchNorm<T>,
}

impl<T: Scalar> StagedBatchNorm<'_, T> {
    pub(crate) fn forward(&self, tape: &mut Tape<T>, x: NodeId, mode: NormMode) -> NodeId {
        match mode {
            NormMode::Batch => tape.batch_norm_rows(x, self.gamma, self.beta, self.layer.eps),
            NormMode::Running => {
                let inv_std: Vec<T> = self
                    .layer
                    .running_var
                    .iter()
                    .map(|&v| T::one() / (v + self.layer.eps).sqrt())
                    .collect();
                tape.norm_affine_rows(
                    x,
                    self.gamma,
                    self.beta,
                    self.layer.running_mean.clone(),
                    inv_std,
                )
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AttentionLayer<T> {
    wq: Mat<T>,
    wk: Mat<T>,
    wv: Mat<T>,
    wo: Mat<T>,
    bn1: BatchNorm<T>,
    ff1: Linear<T>,
    ff2: Linear<T>,
    bn2: BatchNorm<T>,
}

impl<T: Scalar> AttentionLayer<T> {
    fn init(d: usize, ff: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            wq: uniform_mat(d, d, bound, rng),
            wk: uniform_mat(d, d, bound, rng),
            wv: uniform_mat(d, d, bound, rng),
            wo: uniform_mat(d, d, bound, rng),
            bn1: BatchNorm::new(d),
            ff1: Linear::init(ff, d, bound, rng),
            ff2: Linear::init(d, ff, bound, rng),
            bn2: BatchNorm::new(d),
        }
    }

    fn params(&self) -> Vec<&Mat<T>> {
        let mut out = vec![&self.wq, &self.wk, &self.wv, &self.wo];
        out.extend(self.bn1.params());
        out.extend(self.ff1.params());
        out.extend(self.ff2.params());
        out.extend(self.bn2.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        let mut out = vec![&mut self.wq, &mut self.wk, &mut self.wv, &mut self.wo];
        out.extend(self.bn1.params_mut());
        out.extend(self.ff1.params_mut());
        out.extend(self.ff2.params_mut());
        out.extend(self.bn2.params_mut());
        out
    }

    fn stage<'m>(
        &'m self,
        tape: &mut Tape<T>,
        staging: Staging,
        ids: &mut Vec<NodeId>,
    ) -> StagedAttentionLayer<'m, T> {
        StagedAttentionLayer {
            wq: stage_mat(tape, &self.wq, staging, ids),
            wk: stage_mat(tape, &self.wk, staging, ids),
            wv: stage_mat(tape, &self.wv, staging, ids),
            wo: stage_mat(tape, &self.wo, staging, ids),
            bn1: self.bn1.stage(tape, staging, ids),
            ff1: self.ff1.stage(tape, staging, ids),
            ff2: self.ff2.stage(tape, staging, ids),
            bn2: self.bn2.stage(tape, staging, ids),
        }
    }
}

pub(crate) struct StagedAttentionLayer<'m, T> {
    wq: NodeId,
    wk: NodeId,
    wv: NodeId,
    wo: NodeId,
    bn1: StagedBatchNorm<'m, T>,
    ff1: StagedLinear,
    ff2: StagedLinear,
    bn2: StagedBatchNorm<'m, T>,
}

impl<T: Scalar> StagedAttentionLayer<'_, T> {
    fn forward(&self, tape: &mut Tape<T>, h: NodeId, n_heads: usize, mode: NormMode) -> NodeId {
        let d = tape.value(h).cols();
        let dk = d / n_heads;
        let scale = T::from_f64(1.0 / (dk as f64).sqrt());

        let q = tape.matmul_nt(h, self.wq);
        let k = tape.matmul_nt(h, self.wk);
        let v = tape.matmul_nt(h, self.wv);

        let mut heads = Vec::with_capacity(n_heads);
        for head in 0..n_heads {
            let off = head * dk;
            let qh = tape.slice_cols(q, off, dk);
            let kh = tape.slice_cols(k, off, dk);
            let vh = tape.slice_cols(v, off, dk);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores);
            heads.push(tape.matmul(attn, vh));
        }
        let merged = tape.concat_cols(&heads);
        let projected = tape.matmul_nt(merged, self.wo);

        let h = tape.add(h, projected);
        let h = self.bn1.forward(tape, h, mode);

        let f = self.ff1.forward(tape, h);
        let f = tape.relu(f);
        let f = self.ff2.forward(tape, f);

        let h = tape.add(h, f);
        self.bn2.forward(tape, h, mode)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GruCell<T> {
    wxz: Mat<T>,
    whz: Mat<T>,
    bz: Mat<T>,
    wxr: Mat<T>,
    whr: Mat<T>,
    br: Mat<T>,
    wxh: Mat<T>,
    whh: Mat<T>,
    bh: Mat<T>,
}

impl<T: Scalar> GruCell<T> {
    fn init(d: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            wxz: uniform_mat(d, d, bound, rng),
            whz: uniform_mat(d, d, bound, rng),
            bz: uniform_mat(1, d, bound, rng),
            wxr: uniform_mat(d, d, bound, rng),
            whr: uniform_mat(d, d, bound, rng),
            br: uniform_mat(1, d, bound, rng),
            wxh: uniform_mat(d, d, bound, rng),
            whh: uniform_mat(d, d, bound, rng),
            bh: uniform_mat(1, d, bound, rng),
        }
    }

    fn params(&self) -> Vec<&Mat<T>> {
        vec![
            &self.wxz, &self.whz, &self.bz, &self.wxr, &self.whr, &self.br, &self.wxh, &self.whh,
            &self.bh,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        vec![
            &mut self.wxz,
            &mut self.whz,
            &mut self.bz,
            &mut self.wxr,
            &mut self.whr,
            &mut self.br,
            &mut self.wxh,
            &mut self.whh,
            &mut self.bh,
        ]
    }

    fn stage(&self, tape: &mut Tape<T>, staging: Staging, ids: &mut Vec<NodeId>) -> StagedGru {
        StagedGru {
            wxz: stage_mat(tape, &self.wxz, staging, ids),
            whz: stage_mat(tape, &self.whz, staging, ids),
            bz: stage_mat(tape, &self.bz, staging, ids),
            wxr: stage_mat(tape, &self.wxr, staging, ids),
            whr: stage_mat(tape, &self.whr, staging, ids),
            br: stage_mat(tape, &self.br, staging, ids),
            wxh: stage_mat(tape, &self.wxh, staging, ids),
            whh: stage_mat(tape, &self.whh, staging, ids),
            bh: stage_mat(tape, &self.bh, staging, ids),
        }
    }
}

pub(crate) struct StagedGru {
    wxz: NodeId,
    whz: NodeId,
    bz: NodeId,
    wxr: NodeId,
    whr: NodeId,
    br: NodeId,
    wxh: NodeId,
    whh: NodeId,
    bh: NodeId,
}

impl StagedGru {
    /// One gated recurrence step; `x` and `state` are `1 x d`.
    pub(crate) fn step<T: Scalar>(&self, tape: &mut Tape<T>, x: NodeId, state: NodeId) -> NodeId {
        let zx = tape.matmul_nt(x, self.wxz);
        let zh = tape.matmul_nt(state, self.whz);
        let z = tape.add(zx, zh);
        let z = tape.add(z, self.bz);
        let z = tape.sigmoid(z);

        let rx = tape.matmul_nt(x, self.wxr);
        let rh = tape.matmul_nt(state, self.whr);
        let r = tape.add(rx, rh);
        let r = tape.add(r, self.br);
        let r = tape.sigmoid(r);

        let gated = tape.mul(r, state);
        let cx = tape.matmul_nt(x, self.wxh);
        let ch = tape.matmul_nt(gated, self.whh);
        let c = tape.add(cx, ch);
        let c = tape.add(c, self.bh);
        let c = tape.tanh(c);

        // state' = (1 - z) * state + z * c
        let diff = tape.sub(c, state);
        let delta = tape.mul(z, diff);
        tape.add(state, delta)
    }
}

fn stage_mat<T: Scalar>(
    tape: &mut Tape<T>,
    m: &Mat<T>,
    staging: Staging,
    ids: &mut Vec<NodeId>,
) -> NodeId {
    let id = match staging {
        Staging::Trainable => tape.leaf(m.clone()),
        Staging::Frozen => tape.constant(m.clone()),
    };
    ids.push(id);
    id
}

/// The full policy: embedding, encoder and pointer decoder parameters.
#[derive(Debug, Clone)]
pub struct PolicyModel<T> {
    config: ModelConfig,
    bn_ij: BatchNorm<T>,
    lin_ij: Linear<T>,
    bn_mp: BatchNorm<T>,
    lin_mp: Linear<T>,
    bn_sum: BatchNorm<T>,
    lin_post: Linear<T>,
    layers: Vec<AttentionLayer<T>>,
    dec_init: Linear<T>,
    start: Mat<T>,
    gru: GruCell<T>,
    w1: Mat<T>,
    w2: Mat<T>,
    v: Mat<T>,
}

impl<T: Scalar> PolicyModel<T> {
    /// Initializes all weights uniformly in `[-1/sqrt(d_h), 1/sqrt(d_h)]`
    /// from the given seed; batch-norm affine parameters start at
    /// identity (`gamma = 1`, `beta = 0`).
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let d = config.d_h;
        let bound = 1.0 / (d as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        Ok(Self {
            config: config.clone(),
            bn_ij: BatchNorm::new(2),
            lin_ij: Linear::init(d, 2, bound, rng),
            bn_mp: BatchNorm::new(2),
            lin_mp: Linear::init(d, 2, bound, rng),
            bn_sum: BatchNorm::new(d),
            lin_post: Linear::init(d, d, bound, rng),
            layers: (0..config.n_layers)
                .map(|_| AttentionLayer::init(d, config.ff_width, bound, rng))
                .collect(),
            dec_init: Linear::init(d, d, bound, rng),
            start: uniform_mat(1, d, bound, rng),
            gru: GruCell::init(d, bound, rng),
            w1: uniform_mat(d, d, bound, rng),
            w2: uniform_mat(d, d, bound, rng),
            v: uniform_mat(1, d, bound, rng),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All trainable parameters in canonical order.
    pub(crate) fn params(&self) -> Vec<&Mat<T>> {
        let mut out = Vec::new();
        out.extend(self.bn_ij.params());
        out.extend(self.lin_ij.params());
        out.extend(self.bn_mp.params());
        out.extend(self.lin_mp.params());
        out.extend(self.bn_sum.params());
        out.extend(self.lin_post.params());
        for layer in &self.layers {
            out.extend(layer.params());
        }
        out.extend(self.dec_init.params());
        out.push(&self.start);
        out.extend(self.gru.params());
        out.push(&self.w1);
        out.push(&self.w2);
        out.push(&self.v);
        out
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut Mat<T>> {
        let mut out = Vec::new();
        out.extend(self.bn_ij.params_mut());
        out.extend(self.lin_ij.params_mut());
        out.extend(self.bn_mp.params_mut());
        out.extend(self.lin_mp.params_mut());
        out.extend(self.bn_sum.params_mut());
        out.extend(self.lin_post.params_mut());
        for layer in &mut self.layers {
            out.extend(layer.params_mut());
        }
        out.extend(self.dec_init.params_mut());
        out.push(&mut self.start);
        out.extend(self.gru.params_mut());
        out.push(&mut self.w1);
        out.push(&mut self.w2);
        out.push(&mut self.v);
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.data().len()).sum()
    }

    /// Concatenated parameter data in canonical order.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in self.params() {
            out.extend_from_slice(p.data());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[T]) {
        let mut offset = 0;
        for p in self.params_mut() {
            let len = p.data().len();
            p.data_mut().copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        assert_eq!(offset, flat.len(), "flat parameter length mismatch");
    }

    /// Batch-norm layers in forward-call order.
    pub(crate) fn bn_layers_mut(&mut self) -> Vec<&mut BatchNorm<T>> {
        let mut out: Vec<&mut BatchNorm<T>> =
            vec![&mut self.bn_ij, &mut self.bn_mp, &mut self.bn_sum];
        for layer in &mut self.layers {
            out.push(&mut layer.bn1);
            out.push(&mut layer.bn2);
        }
        out
    }

    /// Number of batch-norm forward calls per rollout/episode.
    pub fn bn_call_count(&self) -> usize {
        3 + 2 * self.config.n_layers
    }

    /// Folds one set of observed batch statistics (in forward-call
    /// order, as harvested from a tape) into the running statistics.
    pub fn fold_bn_observations(&mut self, observations: &[BnObservation<T>], momentum: f64) {
        let layers = self.bn_layers_mut();
        assert_eq!(
            observations.len(),
            layers.len(),
            "observation count must match batch-norm call order"
        );
        for (layer, obs) in layers.into_iter().zip(observations) {
            layer.fold_observation(obs, momentum);
        }
    }

    /// Running statistics flattened in forward-call order (mean then
    /// var per layer); used by checkpoints.
    pub fn running_stats(&self) -> Vec<T> {
        let mut out = Vec::new();
        for bn in [&self.bn_ij, &self.bn_mp, &self.bn_sum] {
            out.extend_from_slice(&bn.running_mean);
            out.extend_from_slice(&bn.running_var);
        }
        for layer in &self.layers {
            for bn in [&layer.bn1, &layer.bn2] {
                out.extend_from_slice(&bn.running_mean);
                out.extend_from_slice(&bn.running_var);
            }
        }
        out
    }

    pub fn set_running_stats(&mut self, flat: &[T]) {
        let mut offset = 0;
        for bn in self.bn_layers_mut() {
            let w = bn.running_mean.len();
            bn.running_mean.copy_from_slice(&flat[offset..offset + w]);
            offset += w;
            bn.running_var.copy_from_slice(&flat[offset..offset + w]);
            offset += w;
        }
        assert_eq!(offset, flat.len(), "running stats length mismatch");
    }

    pub(crate) fn stage<'m>(&'m self, tape: &mut Tape<T>, staging: Staging) -> StagedModel<'m, T> {
        let mut ids = Vec::new();
        let mut staged = StagedModel {
            config: &self.config,
            bn_ij: self.bn_ij.stage(tape, staging, &mut ids),
            lin_ij: self.lin_ij.stage(tape, staging, &mut ids),
            bn_mp: self.bn_mp.stage(tape, staging, &mut ids),
            lin_mp: self.lin_mp.stage(tape, staging, &mut ids),
            bn_sum: self.bn_sum.stage(tape, staging, &mut ids),
            lin_post: self.lin_post.stage(tape, staging, &mut ids),
            layers: self
                .layers
                .iter()
                .map(|l| l.stage(tape, staging, &mut ids))
                .collect(),
            dec_init: self.dec_init.stage(tape, staging, &mut ids),
            start: stage_mat(tape, &self.start, staging, &mut ids),
            gru: self.gru.stage(tape, staging, &mut ids),
            w1: stage_mat(tape, &self.w1, staging, &mut ids),
            w2: stage_mat(tape, &self.w2, staging, &mut ids),
            v: stage_mat(tape, &self.v, staging, &mut ids),
            leaf_ids: Vec::new(),
        };
        staged.leaf_ids = ids;
        staged
    }

    /// Extracts the flat gradient (canonical order) from a backward
    /// pass over a staged model's leaves. Missing gradients are zero.
    pub fn flat_grad_from(&self, grads: &crate::tape::Grads<T>, leaf_ids: &[NodeId]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for (&id, p) in leaf_ids.iter().zip(self.params()) {
            match grads.get(id) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat_n(T::zero(), p.data().len())),
            }
        }
        out
    }
}

/// Parameter handles staged onto one tape.
pub(crate) struct StagedModel<'m, T> {
    pub(crate) config: &'m ModelConfig,
    bn_ij: StagedBatchNorm<'m, T>,
    lin_ij: StagedLinear,
    bn_mp: StagedBatchNorm<'m, T>,
    lin_mp: StagedLinear,
    bn_sum: StagedBatchNorm<'m, T>,
    lin_post: StagedLinear,
    layers: Vec<StagedAttentionLayer<'m, T>>,
    pub(crate) dec_init: StagedLinear,
    pub(crate) start: NodeId,
    pub(crate) gru: StagedGru,
    pub(crate) w1: NodeId,
    pub(crate) w2: NodeId,
    pub(crate) v: NodeId,
    /// Leaves in canonical parameter order.
    pub(crate) leaf_ids: Vec<NodeId>,
}

impl<T: Scalar> StagedModel<'_, T> {
    /// Row features as two constant `(n*m) x 2` inputs.
    fn input_features(&self, tape: &mut Tape<T>, seq: &SeqEncoding) -> (NodeId, NodeId) {
        let nm = seq.n_rows();
        let mut ij = Vec::with_capacity(nm * 2);
        let mut mp = Vec::with_capacity(nm * 2);
        for row in seq.rows() {
            ij.push(T::from_f64(row[0] as f64));
            ij.push(T::from_f64(row[1] as f64));
            mp.push(T::from_f64(row[2] as f64));
            mp.push(T::from_f64(row[3] as f64));
        }
        (
            tape.constant(Mat::from_vec(nm, 2, ij)),
            tape.constant(Mat::from_vec(nm, 2, mp)),
        )
    }

    /// Embeds the sequence rows: per-pair normalization and projection,
    /// sum, normalization, linear map.
    pub(crate) fn embed(&self, tape: &mut Tape<T>, seq: &SeqEncoding, mode: NormMode) -> NodeId {
        let (f_ij, f_mp) = self.input_features(tape, seq);
        self.embed_features(tape, f_ij, f_mp, mode)
    }

    pub(crate) fn embed_features(
        &self,
        tape: &mut Tape<T>,
        f_ij: NodeId,
        f_mp: NodeId,
        mode: NormMode,
    ) -> NodeId {
        let a = self.bn_ij.forward(tape, f_ij, mode);
        let a = self.lin_ij.forward(tape, a);
        let b = self.bn_mp.forward(tape, f_mp, mode);
        let b = self.lin_mp.forward(tape, b);
        let s = tape.add(a, b);
        let s = self.bn_sum.forward(tape, s, mode);
        self.lin_post.forward(tape, s)
    }

    /// Runs the attention stack; returns per-row embeddings `H` and the
    /// mean embedding used to initialize the decoder.
    pub(crate) fn encode(&self, tape: &mut Tape<T>, x: NodeId, mode: NormMode) -> (NodeId, NodeId) {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(tape, h, self.config.n_heads, mode);
        }
        let hbar = tape.mean_rows(h);
        (h, hbar)
    }
}
