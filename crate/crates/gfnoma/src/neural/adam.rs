//! Adam optimizer over a flat parameter vector.

/// First/second-moment adaptive gradient descent with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, param_count: usize) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    /// The universal defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn with_defaults(learning_rate: f64, param_count: usize) -> Self {
        Adam::new(learning_rate, 0.9, 0.999, 1e-8, param_count)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)` with
    /// bias-corrected moment estimates.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_rest_is_a_no_op() {
        let mut opt = Adam::with_defaults(0.1, 3);
        let mut params = vec![1.0, -2.0, 0.5];
        let before = params.clone();
        opt.update(&mut params, &[0.0, 0.0, 0.0]);
        assert_eq!(params, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        // With fresh moments, m_hat = g and v_hat = g^2, so the first
        // update is lr * g / (|g| + eps), essentially lr * sign(g).
        let mut opt = Adam::with_defaults(0.01, 2);
        let mut params = vec![0.0, 0.0];
        opt.update(&mut params, &[3.0, -0.004]);
        assert!((params[0] + 0.01).abs() < 1e-8);
        assert!((params[1] - 0.01).abs() < 1e-5);
    }

    #[test]
    fn matches_hand_computed_second_step() {
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        let mut opt = Adam::new(lr, b1, b2, eps, 1);
        let mut p = vec![1.0];
        let (g1, g2) = (0.5, -0.25);
        opt.update(&mut p, &[g1]);
        opt.update(&mut p, &[g2]);

        let mut m = 0.0;
        let mut v = 0.0;
        let mut theta = 1.0f64;
        for (t, g) in [(1, g1), (2, g2)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat: f64 = v / (1.0 - b2.powi(t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        assert!((p[0] - theta).abs() < 1e-15);
    }

    #[test]
    fn momentum_keeps_moving_after_gradient_stops() {
        let mut opt = Adam::with_defaults(0.1, 1);
        let mut p = vec![0.0];
        opt.update(&mut p, &[1.0]);
        let after_first = p[0];
        opt.update(&mut p, &[0.0]);
        assert_ne!(p[0], after_first, "nonzero first moment keeps stepping");
    }
}
