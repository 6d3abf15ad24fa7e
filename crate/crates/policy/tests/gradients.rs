//! End-to-end gradient verification: the analytic gradient of the
//! teacher-forced log-likelihood against central finite differences
//! over the full embed / encode / decode pipeline.

use jsp_core::schedule::BuildMode;
use jsp_core::{generate_taillard, DispatchList, Instance};
use jsp_policy::model::{ModelConfig, PolicyModel, Precision};
use jsp_policy::rollout::DecodeMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_config(score_clip: Option<f64>) -> ModelConfig {
    ModelConfig {
        d_h: 12,
        n_heads: 3,
        n_layers: 2,
        ff_width: 20,
        score_clip,
        precision: Precision::F64,
    }
}

fn sampled_list(model: &PolicyModel<f64>, inst: &Instance, seed: u64) -> DispatchList {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    model
        .rollout(inst, DecodeMode::Sample, BuildMode::GapInsert, &mut rng)
        .unwrap()
        .list
        .clone()
}

/// Checks `coords` evenly spread coordinates of the flat gradient
/// against central finite differences with step `h`.
fn check_model_gradient(
    model: &PolicyModel<f64>,
    inst: &Instance,
    list: &DispatchList,
    coords: usize,
    h: f64,
    tol: f64,
) -> usize {
    let (_, grad) = model.log_prob_and_grad(&[(inst, list)], &[1.0]).unwrap();
    let base = model.flat_params();
    let count = base.len();
    let stride = (count / coords).max(1);

    let mut probe = model.clone();
    let mut checked = 0;
    for idx in (0..count).step_by(stride) {
        let mut plus = base.clone();
        plus[idx] += h;
        probe.set_flat_params(&plus);
        let lp_plus = probe.log_prob(inst, list).unwrap();

        let mut minus = base.clone();
        minus[idx] -= h;
        probe.set_flat_params(&minus);
        let lp_minus = probe.log_prob(inst, list).unwrap();

        let numeric = (lp_plus - lp_minus) / (2.0 * h);
        let analytic = grad[idx];
        let denom = numeric.abs().max(analytic.abs()).max(1e-6);
        let rel = (numeric - analytic).abs() / denom;
        assert!(
            rel <= tol,
            "coordinate {idx}: analytic {analytic:.10e}, numeric {numeric:.10e}, rel {rel:.3e}"
        );
        checked += 1;
    }
    checked
}

#[test]
fn log_prob_gradient_matches_finite_differences() {
    let mut total = 0;
    for seed in 0..4u64 {
        let cfg = tiny_config(None);
        let model: PolicyModel<f64> = PolicyModel::init(&cfg, 100 + seed).unwrap();
        let inst = generate_taillard(2, 2, seed);
        let list = sampled_list(&model, &inst, seed);
        total += check_model_gradient(&model, &inst, &list, 60, 1e-5, 1e-4);
    }
    assert!(total >= 200, "checked {total} coordinates");
}

#[test]
fn log_prob_gradient_with_score_clip() {
    let cfg = tiny_config(Some(10.0));
    let model: PolicyModel<f64> = PolicyModel::init(&cfg, 55).unwrap();
    let inst = generate_taillard(2, 3, 9);
    let list = sampled_list(&model, &inst, 1);
    check_model_gradient(&model, &inst, &list, 50, 1e-5, 1e-4);
}

#[test]
fn batch_gradient_is_sum_of_weighted_singles() {
    let cfg = tiny_config(None);
    let model: PolicyModel<f64> = PolicyModel::init(&cfg, 77).unwrap();
    let a = generate_taillard(2, 2, 3);
    let b = generate_taillard(2, 2, 4);
    let la = sampled_list(&model, &a, 10);
    let lb = sampled_list(&model, &b, 11);

    let (lps, grad) = model
        .log_prob_and_grad(&[(&a, &la), (&b, &lb)], &[0.7, -1.3])
        .unwrap();
    let (lpa, ga) = model.log_prob_and_grad(&[(&a, &la)], &[0.7]).unwrap();
    let (lpb, gb) = model.log_prob_and_grad(&[(&b, &lb)], &[-1.3]).unwrap();

    assert!((lps[0] - lpa[0]).abs() < 1e-12);
    assert!((lps[1] - lpb[0]).abs() < 1e-12);
    for ((g, a_), b_) in grad.iter().zip(&ga).zip(&gb) {
        assert!((g - (a_ + b_)).abs() < 1e-10);
    }
}

#[test]
fn mismatched_batch_shapes_are_rejected() {
    let cfg = tiny_config(None);
    let model: PolicyModel<f64> = PolicyModel::init(&cfg, 1).unwrap();
    let a = generate_taillard(2, 2, 0);
    let b = generate_taillard(2, 3, 0);
    let la = DispatchList::identity(4);
    let lb = DispatchList::identity(6);
    assert!(model
        .log_prob_and_grad(&[(&a, &la), (&b, &lb)], &[1.0, 1.0])
        .is_err());
}
