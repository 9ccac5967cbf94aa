//! Adam with the standard moment constants (β1 0.9, β2 0.999, ε 1e-8).

use super::real::Real;

#[derive(Debug, Clone)]
pub struct Adam<R: Real> {
    lr: R,
    beta1: R,
    beta2: R,
    eps: R,
    /// Completed steps; bias correction uses t+1 during the step.
    t: u64,
    cursor: usize,
    /// First/second moment per parameter tensor, in visit order.
    state: Vec<(Vec<R>, Vec<R>)>,
}

impl<R: Real> Adam<R> {
    pub fn new(lr: f64) -> Self {
        Self {
            lr: R::from_f64(lr),
            beta1: R::from_f64(0.9),
            beta2: R::from_f64(0.999),
            eps: R::from_f64(1e-8),
            t: 0,
            cursor: 0,
            state: Vec::new(),
        }
    }

    /// Call once per optimizer step, before visiting the parameters.
    pub fn begin_step(&mut self) {
        self.t += 1;
        self.cursor = 0;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Update one parameter tensor in place. Tensors must be visited in
    /// the same order every step; the cursor pairs them with their moments.
    pub fn update(&mut self, value: &mut [R], grad: &[R]) {
        if self.cursor == self.state.len() {
            self.state
                .push((vec![R::zero(); value.len()], vec![R::zero(); value.len()]));
        }
        let (m, v) = &mut self.state[self.cursor];
        self.cursor += 1;
        debug_assert_eq!(m.len(), value.len(), "parameter order changed between steps");
        let one = R::one();
        let t = self.t as i32;
        let bc1 = one - pow(self.beta1, t);
        let bc2 = one - pow(self.beta2, t);
        for k in 0..value.len() {
            let g = grad[k];
            m[k] = self.beta1 * m[k] + (one - self.beta1) * g;
            v[k] = self.beta2 * v[k] + (one - self.beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            value[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

fn pow<R: Real>(base: R, exp: i32) -> R {
    let mut acc = R::one();
    for _ in 0..exp {
        acc = acc * base;
    }
    acc
}
