use crate::TrainError;
use jsp_core::BuildMode;

/// Training hyperparameters.
///
/// Returns are undiscounted with a single terminal reward (the negated
/// makespan), so `discount` exists for the record and must stay 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    /// Global-norm gradient clip.
    pub grad_clip: f64,
    pub batch_size: usize,
    /// Sampled solutions per epoch.
    pub epoch_size: usize,
    pub n_epochs: usize,
    /// Instances in the baseline evaluation set.
    pub baseline_eval_size: usize,
    /// One-sided significance level for the baseline refresh.
    pub ttest_alpha: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Fixed at 1: one terminal reward per episode.
    pub discount: f64,
    pub seed: u64,
    /// Builder mode used for every makespan during training.
    pub build_mode: BuildMode,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            grad_clip: 0.5,
            batch_size: 64,
            epoch_size: 2000,
            n_epochs: 10,
            baseline_eval_size: 1000,
            ttest_alpha: 0.05,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            discount: 1.0,
            seed: 0,
            build_mode: BuildMode::GapInsert,
        }
    }
}

impl TrainerConfig {
    /// Collects every violated constraint, not just the first.
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut problems = Vec::new();
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            problems.push("learning_rate must be positive".to_string());
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            problems.push("grad_clip must be positive".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".to_string());
        }
        if self.epoch_size == 0 {
            problems.push("epoch_size must be positive".to_string());
        }
        if self.n_epochs == 0 {
            problems.push("n_epochs must be positive".to_string());
        }
        if self.baseline_eval_size == 0 {
            problems.push("baseline_eval_size must be positive".to_string());
        }
        if self.ttest_alpha.is_nan() || self.ttest_alpha <= 0.0 || self.ttest_alpha >= 1.0 {
            problems.push("ttest_alpha must lie in (0, 1)".to_string());
        }
        if self.adam_beta1.is_nan() || self.adam_beta1 < 0.0 || self.adam_beta1 >= 1.0 {
            problems.push("adam_beta1 must lie in [0, 1)".to_string());
        }
        if self.adam_beta2.is_nan() || self.adam_beta2 < 0.0 || self.adam_beta2 >= 1.0 {
            problems.push("adam_beta2 must lie in [0, 1)".to_string());
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            problems.push("adam_eps must be positive".to_string());
        }
        if self.discount != 1.0 {
            problems.push("discount is fixed at 1 (single terminal reward)".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(TrainError::InvalidConfig(problems.join("; ")))
        }
    }
}
