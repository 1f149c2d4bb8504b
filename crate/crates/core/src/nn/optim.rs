//! Adam with a step-halving learning-rate schedule.

use ndarray::{Array2, Zip};

use super::param::Parameter;

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update of every parameter from its current gradient.
    ///
    /// Parameters must be passed in the same order on every call.
    pub fn step<'a>(&mut self, parameters: impl IntoIterator<Item = &'a mut Parameter>) {
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - self.beta1.powi(t);
        let correction2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        for (slot, param) in parameters.into_iter().enumerate() {
            if slot == self.first.len() {
                self.first.push(Array2::zeros(param.value.raw_dim()));
                self.second.push(Array2::zeros(param.value.raw_dim()));
            }
            Zip::from(&mut param.value)
                .and(&param.grad)
                .and(&mut self.first[slot])
                .and(&mut self.second[slot])
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / correction1;
                    let v_hat = *v / correction2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

/// `base · 0.5^⌊epoch / every⌋`; `every = 0` disables halving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalvingSchedule {
    pub base: f64,
    pub every: usize,
}

impl HalvingSchedule {
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        match self.every {
            0 => self.base,
            every => self.base * 0.5f64.powi((epoch / every) as i32),
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Parameter::new("w", array![[1.5, -2.0]]);
        let mut adam = Adam::new(0.01);
        adam.step([&mut p]);
        assert_eq!(p.value, array![[1.5, -2.0]]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Parameter::new("w", array![[0.0]]);
        p.grad.fill(1.0);
        let mut adam = Adam::new(0.001);
        adam.step([&mut p]);
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + ε)
        let expected = -0.001 / (1.0 + 1e-8);
        assert_abs_diff_eq!(p.value[[0, 0]], expected, epsilon = 1e-18);
        assert_abs_diff_eq!(p.value[[0, 0]], -0.000999999, epsilon = 1e-9);
    }

    #[test]
    fn halving_schedule() {
        let s = HalvingSchedule {
            base: 0.001,
            every: 100,
        };
        assert_eq!(s.learning_rate(0), 0.001);
        assert_eq!(s.learning_rate(99), 0.001);
        assert_eq!(s.learning_rate(100), 0.0005);
        assert_eq!(s.learning_rate(250), 0.00025);
        let flat = HalvingSchedule { base: 0.1, every: 0 };
        assert_eq!(flat.learning_rate(1000), 0.1);
    }
}
