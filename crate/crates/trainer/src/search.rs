//! Test-time refinement: per-instance active search and embedding-only
//! search with frozen weights.

use crate::adam::{clip_global_norm, Adam};
use crate::config::TrainerConfig;
use crate::par::parallel_map;
use crate::TrainError;
use jsp_core::schedule::build_schedule;
use jsp_core::{DispatchList, Instance, MaskState, ProblemMode, Time};
use jsp_policy::{DecodeMode, FinishedDecode, Mat, PolicyModel, Rollout, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exponential-moving-average decay of the cost baseline used by both
/// search modes.
const EMA_DECAY: f64 = 0.99;

/// Best incumbent found by a search run.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best_list: DispatchList,
    pub best_makespan: Time,
    /// Sampled rollouts consumed.
    pub evaluations: usize,
    /// Best-so-far makespan after each step; never increases.
    pub history: Vec<Time>,
}

/// Continues policy-gradient optimization on a single instance,
/// tracking the best sampled solution. `steps == 0` returns the greedy
/// rollout unchanged.
pub fn active_search<T: Scalar>(
    model: &PolicyModel<T>,
    inst: &Instance,
    steps: usize,
    cfg: &TrainerConfig,
) -> Result<SearchResult, TrainError> {
    cfg.validate()?;
    let mut search_model = model.clone();
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let greedy = search_model.rollout(inst, DecodeMode::Greedy, cfg.build_mode, &mut unused)?;
    let mut best_list = greedy.list.clone();
    let mut best = greedy.makespan;
    let mut history = Vec::with_capacity(steps);
    if steps == 0 {
        return Ok(SearchResult {
            best_list,
            best_makespan: best,
            evaluations: 0,
            history,
        });
    }

    let mut opt = Adam::new(
        search_model.param_count(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let mut ema = greedy.makespan as f64;
    let mut evaluations = 0;

    for step in 0..steps {
        let frozen: &PolicyModel<T> = &search_model;
        let lanes: Vec<Result<(Vec<T>, Rollout), TrainError>> =
            parallel_map(cfg.batch_size, |lane| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((step * cfg.batch_size + lane) as u64);
                let episode = frozen.episode(inst, DecodeMode::Sample, cfg.build_mode, &mut rng)?;
                let advantage = episode.rollout.makespan as f64 - ema;
                let grads = episode.tape.backward(
                    episode.log_prob_node,
                    T::from_f64(advantage / cfg.batch_size as f64),
                );
                let grad = frozen.flat_grad_from(&grads, &episode.leaf_ids);
                Ok((grad, episode.rollout))
            });

        let mut grad = vec![T::zero(); search_model.param_count()];
        let mut batch_cost = 0.0;
        for lane in lanes {
            let (lane_grad, rollout) = lane?;
            for (g, d) in grad.iter_mut().zip(lane_grad) {
                *g = *g + d;
            }
            batch_cost += rollout.makespan as f64;
            evaluations += 1;
            if rollout.makespan < best {
                best = rollout.makespan;
                best_list = rollout.list;
            }
        }
        clip_global_norm(&mut grad, cfg.grad_clip);
        let mut params = search_model.flat_params();
        opt.step(&mut params, &grad);
        search_model.set_flat_params(&params);

        ema = EMA_DECAY * ema + (1.0 - EMA_DECAY) * batch_cost / cfg.batch_size as f64;
        history.push(best);
    }

    Ok(SearchResult {
        best_list,
        best_makespan: best,
        evaluations,
        history,
    })
}

/// Decodes one solution from explicit row embeddings; the returned
/// finished tape exposes the embedding leaf for gradients.
fn decode_embedded<T: Scalar>(
    model: &PolicyModel<T>,
    inst: &Instance,
    embeddings: Mat<T>,
    mode: DecodeMode,
    build: jsp_core::BuildMode,
    rng: &mut ChaCha8Rng,
) -> Result<(Rollout, FinishedDecode<T>), TrainError> {
    let (mut decoder, _) = model.decoder_with_embeddings(embeddings);
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
    let finished = decoder.finish();
    Ok((
        Rollout {
            list,
            log_prob,
            makespan: schedule.makespan(),
            mode,
        },
        finished,
    ))
}

fn eas_emb_single<T: Scalar>(
    model: &PolicyModel<T>,
    inst: &Instance,
    steps: usize,
    cfg: &TrainerConfig,
    instance_tag: u64,
) -> Result<SearchResult, TrainError> {
    let mut embeddings = model.encode_values(inst);
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let (greedy, _) = decode_embedded(
        model,
        inst,
        embeddings.clone(),
        DecodeMode::Greedy,
        cfg.build_mode,
        &mut unused,
    )?;
    let mut best = greedy.makespan;
    let mut best_list = greedy.list;
    let mut history = Vec::with_capacity(steps);
    let mut ema = best as f64;
    let mut evaluations = 0;
    let mut opt = Adam::new(
        embeddings.data().len(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );

    for step in 0..steps {
        let mut grad = vec![T::zero(); embeddings.data().len()];
        let mut batch_cost = 0.0;
        for lane in 0..cfg.batch_size {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ instance_tag);
            rng.set_stream((step * cfg.batch_size + lane) as u64);
            let (rollout, finished) = decode_embedded(
                model,
                inst,
                embeddings.clone(),
                DecodeMode::Sample,
                cfg.build_mode,
                &mut rng,
            )?;
            let advantage = rollout.makespan as f64 - ema;
            let grads = finished.tape.backward(
                finished.log_prob_node,
                T::from_f64(advantage / cfg.batch_size as f64),
            );
            let leaf = finished.embedding_leaf.expect("embedding leaf exists");
            if let Some(g) = grads.get(leaf) {
                for (acc, &d) in grad.iter_mut().zip(g.data()) {
                    *acc = *acc + d;
                }
            }
            batch_cost += rollout.makespan as f64;
            evaluations += 1;
            if rollout.makespan < best {
                best = rollout.makespan;
                best_list = rollout.list;
            }
        }
        clip_global_norm(&mut grad, cfg.grad_clip);
        opt.step(embeddings.data_mut(), &grad);
        ema = EMA_DECAY * ema + (1.0 - EMA_DECAY) * batch_cost / cfg.batch_size as f64;
        history.push(best);
    }

    Ok(SearchResult {
        best_list,
        best_makespan: best,
        evaluations,
        history,
    })
}

/// Embedding-only search: per instance, the encoder output becomes the
/// single trainable leaf and every model weight stays frozen.
/// Instances are processed in parallel.
pub fn eas_emb<T: Scalar>(
    model: &PolicyModel<T>,
    instances: &[Instance],
    steps: usize,
    cfg: &TrainerConfig,
) -> Result<Vec<SearchResult>, TrainError> {
    cfg.validate()?;
    let results: Vec<Result<SearchResult, TrainError>> = parallel_map(instances.len(), |i| {
        eas_emb_single(model, &instances[i], steps, cfg, i as u64)
    });
    results.into_iter().collect()
}

/// Pure sampling with the same budget shape as [`eas_emb`]: per
/// instance, `steps * batch_size` sampled rollouts, best kept.
pub fn sample_search<T: Scalar>(
    model: &PolicyModel<T>,
    instances: &[Instance],
    steps: usize,
    cfg: &TrainerConfig,
) -> Result<Vec<SearchResult>, TrainError> {
    cfg.validate()?;
    let results: Vec<Result<SearchResult, TrainError>> = parallel_map(instances.len(), |i| {
        let inst = &instances[i];
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let greedy = model.rollout(inst, DecodeMode::Greedy, cfg.build_mode, &mut unused)?;
        let mut best = greedy.makespan;
        let mut best_list = greedy.list;
        let mut history = Vec::with_capacity(steps);
        let mut evaluations = 0;
        for step in 0..steps {
            for lane in 0..cfg.batch_size {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ i as u64);
                rng.set_stream((step * cfg.batch_size + lane) as u64);
                let rollout = model.rollout(inst, DecodeMode::Sample, cfg.build_mode, &mut rng)?;
                evaluations += 1;
                if rollout.makespan < best {
                    best = rollout.makespan;
                    best_list = rollout.list;
                }
            }
            history.push(best);
        }
        Ok(SearchResult {
            best_list,
            best_makespan: best,
            evaluations,
            history,
        })
    });
    results.into_iter().collect()
}
