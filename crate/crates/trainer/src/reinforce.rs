//! Episodic policy-gradient training with a greedy-rollout baseline.
//!
//! Each sampled solution is weighted by `C_max - b`, where `b` is the
//! makespan of the frozen baseline model decoding the same instance
//! greedily; lower makespan means higher reward, so the weighted
//! log-likelihood gradient is *descended*. After every epoch the
//! baseline is replaced by the optimized policy iff a paired one-sided
//! t-test on a held-out evaluation set says the candidate is better.

use crate::adam::{clip_global_norm, Adam};
use crate::config::TrainerConfig;
use crate::par::{derive_seed, parallel_map};
use crate::stats::{paired_t_test, TTest};
use crate::TrainError;
use jsp_core::{generate_taillard, Instance};
use jsp_policy::{BnObservation, DecodeMode, PolicyModel, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Momentum for folding observed batch statistics into the running
/// normalization statistics.
const BN_MOMENTUM: f64 = 0.1;

/// Where epoch datasets come from.
#[derive(Debug, Clone)]
pub enum TrainData {
    /// Fresh random instances every epoch.
    Generated { n_jobs: usize, n_machines: usize },
    /// A fixed pool, cycled deterministically.
    Fixed(Vec<Instance>),
}

impl TrainData {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            TrainData::Generated {
                n_jobs, n_machines, ..
            } => (*n_jobs, *n_machines),
            TrainData::Fixed(set) => (set[0].n_jobs(), set[0].n_machines()),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if let TrainData::Fixed(set) = self {
            if set.is_empty() {
                return Err(TrainError::InvalidConfig("empty training dataset".into()));
            }
            let shape = self.shape();
            if set.iter().any(|i| (i.n_jobs(), i.n_machines()) != shape) {
                return Err(TrainError::InvalidConfig(
                    "training instances must share one shape".into(),
                ));
            }
        }
        Ok(())
    }

    /// The instances processed during `epoch`.
    pub fn epoch_dataset(&self, cfg: &TrainerConfig, epoch: usize) -> Vec<Instance> {
        match self {
            TrainData::Generated { n_jobs, n_machines } => (0..cfg.epoch_size)
                .map(|i| {
                    generate_taillard(
                        *n_jobs,
                        *n_machines,
                        derive_seed(cfg.seed, 0xDA7A, (epoch * cfg.epoch_size + i) as u64),
                    )
                })
                .collect(),
            TrainData::Fixed(set) => (0..cfg.epoch_size)
                .map(|i| set[(epoch * cfg.epoch_size + i) % set.len()].clone())
                .collect(),
        }
    }
}

/// Frozen best-so-far policy plus its held-out evaluation set.
pub struct BaselineState<T> {
    pub model: PolicyModel<T>,
    pub eval_set: Vec<Instance>,
    shape: (usize, usize),
    eval_size: usize,
    seed: u64,
    resamples: u64,
}

impl<T: Scalar> BaselineState<T> {
    pub fn new(model: &PolicyModel<T>, shape: (usize, usize), cfg: &TrainerConfig) -> Self {
        let mut state = Self {
            model: model.clone(),
            eval_set: Vec::new(),
            shape,
            eval_size: cfg.baseline_eval_size,
            seed: cfg.seed,
            resamples: 0,
        };
        state.eval_set = state.sample_eval_set();
        state
    }

    fn sample_eval_set(&self) -> Vec<Instance> {
        (0..self.eval_size)
            .map(|i| {
                generate_taillard(
                    self.shape.0,
                    self.shape.1,
                    derive_seed(self.seed, 0xBA5E + self.resamples, i as u64),
                )
            })
            .collect()
    }
}

/// One training-log record.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub batch: usize,
    pub mean_cost: f64,
    pub grad_norm: f64,
    pub baseline_replaced: bool,
}

/// Renders log rows as the CSV training log.
pub fn log_to_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("epoch,batch,mean_cost,grad_norm,baseline_replaced\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.4},{:.6},{}\n",
            r.epoch, r.batch, r.mean_cost, r.grad_norm, r.baseline_replaced
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub batches: usize,
    /// Mean sampled makespan over the epoch.
    pub mean_sample_cost: f64,
    /// Mean baseline (greedy) makespan over the epoch.
    pub mean_baseline_cost: f64,
    pub baseline_replaced: bool,
    /// One-sided p-value of the baseline refresh test.
    pub ttest_p: f64,
}

struct Lane<T> {
    grad: Vec<T>,
    bn: Vec<BnObservation<T>>,
    sample_cost: f64,
    baseline_cost: f64,
}

fn ensure_finite(values: &[f64], context: &str) -> Result<(), TrainError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite {
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Element-wise average of per-lane batch-norm observations.
fn average_observations<T: Scalar>(lanes: &[Lane<T>]) -> Vec<BnObservation<T>> {
    let count = T::from_f64(lanes.len() as f64);
    let mut avg = lanes[0].bn.clone();
    for lane in &lanes[1..] {
        for (acc, obs) in avg.iter_mut().zip(&lane.bn) {
            for (a, &m) in acc.mean.iter_mut().zip(&obs.mean) {
                *a = *a + m;
            }
            for (a, &v) in acc.var.iter_mut().zip(&obs.var) {
                *a = *a + v;
            }
        }
    }
    for obs in &mut avg {
        for m in &mut obs.mean {
            *m = *m / count;
        }
        for v in &mut obs.var {
            *v = *v / count;
        }
    }
    avg
}

/// Runs one epoch of policy-gradient training over `dataset`, then the
/// t-test baseline refresh. Average cost is logged every 50 batches and
/// at the end of the epoch.
pub fn reinforce_epoch<T: Scalar>(
    model: &mut PolicyModel<T>,
    baseline: &mut BaselineState<T>,
    opt: &mut Adam<T>,
    cfg: &TrainerConfig,
    dataset: &[Instance],
    epoch: usize,
    log: &mut Vec<LogRow>,
) -> Result<EpochMetrics, TrainError> {
    cfg.validate()?;
    let n_batches = dataset.len().div_ceil(cfg.batch_size);
    let mut cost_sum = 0.0;
    let mut baseline_sum = 0.0;
    let mut window_costs = Vec::new();

    for (batch_idx, batch) in dataset.chunks(cfg.batch_size).enumerate() {
        let frozen: &PolicyModel<T> = model;
        let base_model = &baseline.model;
        let lanes: Vec<Result<Lane<T>, TrainError>> = parallel_map(batch.len(), |lane| {
            let inst = &batch[lane];
            let sample_index = (epoch * cfg.epoch_size + batch_idx * cfg.batch_size + lane) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(sample_index);
            let episode = frozen.episode(inst, DecodeMode::Sample, cfg.build_mode, &mut rng)?;
            let mut unused = ChaCha8Rng::seed_from_u64(0);
            let b = base_model
                .rollout(inst, DecodeMode::Greedy, cfg.build_mode, &mut unused)?
                .makespan;
            let advantage = episode.rollout.makespan as f64 - b as f64;
            let grads = episode.tape.backward(
                episode.log_prob_node,
                T::from_f64(advantage / batch.len() as f64),
            );
            let grad = frozen.flat_grad_from(&grads, &episode.leaf_ids);
            Ok(Lane {
                grad,
                bn: episode.tape.bn_observations().to_vec(),
                sample_cost: episode.rollout.makespan as f64,
                baseline_cost: b as f64,
            })
        });

        let mut collected = Vec::with_capacity(lanes.len());
        for lane in lanes {
            collected.push(lane?);
        }

        // Reduce gradients in lane order for bit-reproducibility.
        let mut grad = vec![T::zero(); model.param_count()];
        for lane in &collected {
            for (g, &d) in grad.iter_mut().zip(&lane.grad) {
                *g = *g + d;
            }
        }
        let grad_f64: Vec<f64> = grad.iter().map(|&g| g.to_f64()).collect();
        ensure_finite(
            &grad_f64,
            &format!("gradient, epoch {epoch} batch {batch_idx}"),
        )?;
        let norm = clip_global_norm(&mut grad, cfg.grad_clip);

        let mut params = model.flat_params();
        opt.step(&mut params, &grad);
        model.set_flat_params(&params);
        model.fold_bn_observations(&average_observations(&collected), BN_MOMENTUM);

        let batch_cost =
            collected.iter().map(|l| l.sample_cost).sum::<f64>() / collected.len() as f64;
        ensure_finite(
            &[batch_cost],
            &format!("cost, epoch {epoch} batch {batch_idx}"),
        )?;
        cost_sum += collected.iter().map(|l| l.sample_cost).sum::<f64>();
        baseline_sum += collected.iter().map(|l| l.baseline_cost).sum::<f64>();
        window_costs.push(batch_cost);

        if (batch_idx + 1) % 50 == 0 || batch_idx + 1 == n_batches {
            let mean_cost = window_costs.iter().sum::<f64>() / window_costs.len() as f64;
            window_costs.clear();
            log.push(LogRow {
                epoch,
                batch: batch_idx,
                mean_cost,
                grad_norm: norm,
                baseline_replaced: false,
            });
        }
    }

    let decision = ttest_update(model, baseline, cfg)?;
    if decision.replaced {
        if let Some(last) = log.last_mut() {
            last.baseline_replaced = true;
        }
    }

    Ok(EpochMetrics {
        epoch,
        batches: n_batches,
        mean_sample_cost: cost_sum / dataset.len() as f64,
        mean_baseline_cost: baseline_sum / dataset.len() as f64,
        baseline_replaced: decision.replaced,
        ttest_p: decision.test.p_value,
    })
}

/// Outcome of the baseline refresh.
#[derive(Debug, Clone)]
pub struct TTestDecision {
    pub replaced: bool,
    pub test: TTest,
}

/// Greedy-evaluates candidate and baseline on the evaluation set and
/// replaces the baseline iff the candidate is statistically better
/// (one-sided paired t-test). On replacement the evaluation set is
/// resampled.
pub fn ttest_update<T: Scalar>(
    candidate: &PolicyModel<T>,
    baseline: &mut BaselineState<T>,
    cfg: &TrainerConfig,
) -> Result<TTestDecision, TrainError> {
    let base_model = &baseline.model;
    let diffs: Vec<Result<f64, TrainError>> = parallel_map(baseline.eval_set.len(), |i| {
        let inst = &baseline.eval_set[i];
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let cand = candidate
            .rollout(inst, DecodeMode::Greedy, cfg.build_mode, &mut unused)?
            .makespan as f64;
        let base = base_model
            .rollout(inst, DecodeMode::Greedy, cfg.build_mode, &mut unused)?
            .makespan as f64;
        Ok(cand - base)
    });
    let mut collected = Vec::with_capacity(diffs.len());
    for d in diffs {
        collected.push(d?);
    }
    let test = paired_t_test(&collected);
    let replaced = test.candidate_is_better(cfg.ttest_alpha);
    if replaced {
        baseline.model = candidate.clone();
        baseline.resamples += 1;
        baseline.eval_set = baseline.sample_eval_set();
    }
    Ok(TTestDecision { replaced, test })
}

/// Full training run: per-epoch datasets, gradient updates, baseline
/// refreshes. `on_epoch` fires after every epoch (checkpointing hook).
pub fn train<T: Scalar>(
    mut model: PolicyModel<T>,
    cfg: &TrainerConfig,
    data: &TrainData,
    mut on_epoch: impl FnMut(usize, &PolicyModel<T>, &EpochMetrics),
) -> Result<TrainRun<T>, TrainError> {
    cfg.validate()?;
    data.validate()?;
    let mut baseline = BaselineState::new(&model, data.shape(), cfg);
    let mut opt = Adam::new(
        model.param_count(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let mut log = Vec::new();
    let mut metrics = Vec::with_capacity(cfg.n_epochs);
    for epoch in 0..cfg.n_epochs {
        let dataset = data.epoch_dataset(cfg, epoch);
        let m = reinforce_epoch(
            &mut model,
            &mut baseline,
            &mut opt,
            cfg,
            &dataset,
            epoch,
            &mut log,
        )?;
        on_epoch(epoch, &model, &m);
        metrics.push(m);
    }
    Ok(TrainRun {
        model,
        baseline,
        metrics,
        log,
    })
}

pub struct TrainRun<T> {
    pub model: PolicyModel<T>,
    pub baseline: BaselineState<T>,
    pub metrics: Vec<EpochMetrics>,
    pub log: Vec<LogRow>,
}

/// Mean greedy makespan of `model` over `instances`.
pub fn greedy_mean<T: Scalar>(
    model: &PolicyModel<T>,
    instances: &[Instance],
    build: jsp_core::BuildMode,
) -> Result<f64, TrainError> {
    let costs: Vec<Result<f64, TrainError>> = parallel_map(instances.len(), |i| {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(model
            .rollout(&instances[i], DecodeMode::Greedy, build, &mut unused)?
            .makespan as f64)
    });
    let mut sum = 0.0;
    for c in costs {
        sum += c?;
    }
    Ok(sum / instances.len() as f64)
}
