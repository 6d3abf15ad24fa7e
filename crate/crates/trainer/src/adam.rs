//! Adaptive-moment optimizer and the global-norm gradient clip.

use jsp_policy::Scalar;

pub struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            lr: T::from_f64(lr),
            beta1: T::from_f64(beta1),
            beta2: T::from_f64(beta2),
            eps: T::from_f64(eps),
        }
    }

    /// One descent step in place.
    pub fn step(&mut self, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.t as i32);
        let bc2 = one - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// Scales `grad` so its l2 norm does not exceed `clip`; returns the
/// norm before clipping.
pub fn clip_global_norm<T: Scalar>(grad: &mut [T], clip: f64) -> f64 {
    let norm = grad
        .iter()
        .map(|&g| g.to_f64() * g.to_f64())
        .sum::<f64>()
        .sqrt();
    if norm > clip && norm > 0.0 {
        let scale = T::from_f64(clip / norm);
        for g in grad.iter_mut() {
            *g = *g * scale;
        }
    }
    norm
}
