//! Decoding: step distributions, full rollouts and teacher-forced
//! likelihoods.
//!
//! The decoder advances a gated recurrent state over the encoder
//! output and scores every input row with a pointer attention head;
//! blocked rows are forced to probability zero through the masking
//! engine, so any decode of `n*m` steps is a feasible dispatch list.

use crate::mat::{Mat, Scalar};
use crate::model::{NormMode, PolicyModel, StagedGru, StagedModel, Staging};
use crate::tape::{NodeId, Tape};
use crate::PolicyError;
use jsp_core::schedule::{build_schedule, BuildMode};
use jsp_core::{encode_instance, DispatchList, Instance, MaskState, ProblemMode, Time};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// How the next row is picked from the step distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Draw from the distribution (training).
    Sample,
    /// Take the most likely row, ties to the lowest index (evaluation).
    Greedy,
}

/// One decoded solution.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub list: DispatchList,
    /// Sum of per-step log probabilities; never positive.
    pub log_prob: f64,
    pub makespan: Time,
    pub mode: DecodeMode,
}

/// A rollout whose tape was kept for a gradient pass.
pub struct Episode<T> {
    pub rollout: Rollout,
    pub tape: Tape<T>,
    /// The accumulated log-probability node.
    pub log_prob_node: NodeId,
    /// Trainable leaves in canonical parameter order.
    pub leaf_ids: Vec<NodeId>,
}

/// Step-by-step decoder over a staged model.
pub struct Decoder<'m, T: Scalar> {
    tape: Tape<T>,
    gru: StagedGru,
    w2: NodeId,
    v: NodeId,
    score_clip: Option<T>,
    /// Encoder output rows.
    h: NodeId,
    /// Precomputed `H * W1^T` for the pointer scores.
    hw1: NodeId,
    state: NodeId,
    next_input: NodeId,
    log_prob: NodeId,
    /// Log-distribution of the pending step, if `step` was called.
    pending: Option<NodeId>,
    leaf_ids: Vec<NodeId>,
    /// Extra trainable leaf when decoding from raw embeddings.
    embedding_leaf: Option<NodeId>,
    _marker: std::marker::PhantomData<&'m ()>,
}

/// Distribution over rows produced by one decoder step.
#[derive(Debug, Clone)]
pub struct StepDistribution {
    /// Probability per row; blocked rows are exactly zero.
    pub probs: Vec<f64>,
}

impl StepDistribution {
    /// Index with the highest probability, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Samples an index proportionally to the probabilities.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last_nonzero = i;
                if draw < acc {
                    return i;
                }
            }
        }
        last_nonzero
    }
}

impl<'m, T: Scalar> Decoder<'m, T> {
    fn from_staged(
        mut tape: Tape<T>,
        staged: StagedModel<'m, T>,
        h: NodeId,
        hbar: NodeId,
        embedding_leaf: Option<NodeId>,
    ) -> Self {
        let state = staged.dec_init.forward(&mut tape, hbar);
        let hw1 = tape.matmul_nt(h, staged.w1);
        let log_prob = tape.constant(Mat::zeros(1, 1));
        Self {
            gru: staged.gru,
            w2: staged.w2,
            v: staged.v,
            score_clip: staged.config.score_clip.map(T::from_f64),
            h,
            hw1,
            state,
            next_input: staged.start,
            log_prob,
            pending: None,
            leaf_ids: staged.leaf_ids,
            embedding_leaf,
            _marker: std::marker::PhantomData,
            tape,
        }
    }

    /// Advances the recurrence and returns the masked distribution over
    /// rows for the current step.
    pub fn step(&mut self, blocked: Vec<bool>) -> StepDistribution {
        assert!(self.pending.is_none(), "step called twice without choose");
        let tape = &mut self.tape;
        self.state = self.gru.step(tape, self.next_input, self.state);

        let sw2 = tape.matmul_nt(self.state, self.w2);
        let pre = tape.add_row(self.hw1, sw2);
        let act = tape.tanh(pre);
        let mut scores = tape.matmul_nt(self.v, act);
        if let Some(clip) = self.score_clip {
            let inv = T::one() / clip;
            let squashed = tape.scale(scores, inv);
            let squashed = tape.tanh(squashed);
            scores = tape.scale(squashed, clip);
        }
        let lp = tape.masked_log_softmax(scores, blocked);
        self.pending = Some(lp);
        let probs = self
            .tape
            .value(lp)
            .row(0)
            .iter()
            .map(|&x| {
                if x == T::neg_infinity() {
                    0.0
                } else {
                    x.to_f64().exp()
                }
            })
            .collect();
        StepDistribution { probs }
    }

    /// Registers the chosen row: accumulates its log-probability and
    /// feeds its embedding to the next step.
    pub fn choose(&mut self, row: usize) {
        let lp = self.pending.take().expect("choose without a pending step");
        let picked = self.tape.pick(lp, row);
        self.log_prob = self.tape.add(self.log_prob, picked);
        self.next_input = self.tape.gather_row(self.h, row);
    }

    /// Accumulated log-probability of the choices so far.
    pub fn log_prob(&self) -> f64 {
        self.tape.scalar_value(self.log_prob).to_f64()
    }

    /// Consumes the decoder, handing back the tape for a backward pass.
    pub fn finish(self) -> FinishedDecode<T> {
        FinishedDecode {
            tape: self.tape,
            log_prob_node: self.log_prob,
            leaf_ids: self.leaf_ids,
            embedding_leaf: self.embedding_leaf,
        }
    }
}

/// Tape and handles surviving a finished decode.
pub struct FinishedDecode<T> {
    pub tape: Tape<T>,
    pub log_prob_node: NodeId,
    /// Trainable leaves in canonical parameter order (empty when the
    /// model was staged frozen).
    pub leaf_ids: Vec<NodeId>,
    /// The embedding leaf when decoding from raw embeddings.
    pub embedding_leaf: Option<NodeId>,
}

fn shape_of(inst: &Instance) -> (usize, usize) {
    (inst.n_jobs(), inst.n_machines())
}

impl<T: Scalar> PolicyModel<T> {
    /// Stages the model and encodes one instance, returning a decoder
    /// ready to emit rows.
    pub fn decoder(&self, inst: &Instance, norm: NormMode, staging: Staging) -> Decoder<'_, T> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape, staging);
        let seq = encode_instance(inst);
        let x = staged.embed(&mut tape, &seq, norm);
        let (h, hbar) = staged.encode(&mut tape, x, norm);
        Decoder::from_staged(tape, staged, h, hbar, None)
    }

    /// Decoder over externally supplied row embeddings, which become
    /// the only trainable leaf; all model parameters stay frozen. Used
    /// by embedding-space active search.
    pub fn decoder_with_embeddings(&self, embeddings: Mat<T>) -> (Decoder<'_, T>, NodeId) {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape, Staging::Frozen);
        let h = tape.leaf(embeddings);
        let hbar = tape.mean_rows(h);
        let decoder = Decoder::from_staged(tape, staged, h, hbar, Some(h));
        let leaf = decoder.embedding_leaf.unwrap();
        (decoder, leaf)
    }

    /// Plain encoder forward pass in inference mode; returns the row
    /// embedding values `H`.
    pub fn encode_values(&self, inst: &Instance) -> Mat<T> {
        let mut tape = Tape::new();
        let staged = self.stage(&mut tape, Staging::Frozen);
        let seq = encode_instance(inst);
        let x = staged.embed(&mut tape, &seq, NormMode::Running);
        let (h, _) = staged.encode(&mut tape, x, NormMode::Running);
        tape.value(h).clone()
    }

    /// Decodes one full solution. Sampled rollouts use batch
    /// normalization statistics of the instance itself (training
    /// forward); greedy rollouts use frozen running statistics and are
    /// deterministic.
    pub fn rollout(
        &self,
        inst: &Instance,
        mode: DecodeMode,
        build: BuildMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Rollout, PolicyError> {
        let episode = self.run_episode(inst, mode, build, rng, Staging::Frozen)?;
        Ok(episode.rollout)
    }

    /// Like [`rollout`](Self::rollout) but keeps the tape and trainable
    /// leaves for a gradient pass.
    pub fn episode(
        &self,
        inst: &Instance,
        mode: DecodeMode,
        build: BuildMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Episode<T>, PolicyError> {
        self.run_episode(inst, mode, build, rng, Staging::Trainable)
    }

    fn run_episode(
        &self,
        inst: &Instance,
        mode: DecodeMode,
        build: BuildMode,
        rng: &mut ChaCha8Rng,
        staging: Staging,
    ) -> Result<Episode<T>, PolicyError> {
        let norm = match mode {
            DecodeMode::Sample => NormMode::Batch,
            DecodeMode::Greedy => NormMode::Running,
        };
        let mut decoder = self.decoder(inst, norm, staging);
        let mut mask = MaskState::init(1, inst.n_jobs(), inst.n_machines(), ProblemMode::Jsp);
        let mut perm = Vec::with_capacity(inst.n_ops());
        while !mask.is_complete(0) {
            let dist = decoder.step(mask.blocked(0));
            let row = match mode {
                DecodeMode::Sample => dist.sample(rng),
                DecodeMode::Greedy => dist.argmax(),
            };
            mask.step_update(0, row)?;
            decoder.choose(row);
            perm.push(row);
        }
        let list = DispatchList::new(perm)?;
        let schedule = build_schedule(inst, &list, build)?;
        let log_prob = decoder.log_prob();
        let FinishedDecode {
            tape,
            log_prob_node,
            leaf_ids,
            ..
        } = decoder.finish();
        Ok(Episode {
            rollout: Rollout {
                list,
                log_prob,
                makespan: schedule.makespan(),
                mode,
            },
            tape,
            log_prob_node,
            leaf_ids,
        })
    }

    /// Teacher-forced log-likelihood of a feasible dispatch list, with
    /// the same normalization path as sampled rollouts.
    pub fn log_prob(&self, inst: &Instance, list: &DispatchList) -> Result<f64, PolicyError> {
        let episode = self.forced_episode(inst, list, Staging::Frozen)?;
        Ok(episode.rollout.log_prob)
    }

    /// Teacher-forced episode along `list`, tape retained.
    pub fn forced_episode(
        &self,
        inst: &Instance,
        list: &DispatchList,
        staging: Staging,
    ) -> Result<Episode<T>, PolicyError> {
        jsp_core::schedule::check_feasible(inst, list)?;
        let mut decoder = self.decoder(inst, NormMode::Batch, staging);
        let mut mask = MaskState::init(1, inst.n_jobs(), inst.n_machines(), ProblemMode::Jsp);
        for &row in list.as_slice() {
            let _ = decoder.step(mask.blocked(0));
            mask.step_update(0, row)?;
            decoder.choose(row);
        }
        let schedule = build_schedule(inst, list, BuildMode::GapInsert)?;
        let log_prob = decoder.log_prob();
        let FinishedDecode {
            tape,
            log_prob_node,
            leaf_ids,
            ..
        } = decoder.finish();
        Ok(Episode {
            rollout: Rollout {
                list: list.clone(),
                log_prob,
                makespan: schedule.makespan(),
                mode: DecodeMode::Sample,
            },
            tape,
            log_prob_node,
            leaf_ids,
        })
    }

    /// Per-instance log-likelihoods and the gradient of the
    /// weighted sum `sum_i weights[i] * log P(list_i | inst_i)`.
    pub fn log_prob_and_grad(
        &self,
        batch: &[(&Instance, &DispatchList)],
        weights: &[f64],
    ) -> Result<(Vec<f64>, Vec<T>), PolicyError> {
        assert_eq!(batch.len(), weights.len());
        let mut log_probs = Vec::with_capacity(batch.len());
        let mut total = vec![T::zero(); self.param_count()];
        if let Some((first, _)) = batch.first() {
            let expected = shape_of(first);
            for (inst, _) in batch {
                if shape_of(inst) != expected {
                    return Err(PolicyError::ShapeMismatch {
                        got: shape_of(inst),
                        expected,
                    });
                }
            }
        }
        for ((inst, list), &w) in batch.iter().zip(weights) {
            let episode = self.forced_episode(inst, list, Staging::Trainable)?;
            log_probs.push(episode.rollout.log_prob);
            let grads = episode.tape.backward(episode.log_prob_node, T::from_f64(w));
            let flat = self.flat_grad_from(&grads, &episode.leaf_ids);
            for (t, g) in total.iter_mut().zip(flat) {
                *t = *t + g;
            }
        }
        Ok((log_probs, total))
    }
}
