use super::Param;
use crate::exec;

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
    pub first_moment: Vec<Vec<f32>>,
    pub second_moment: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f32, beta1: f32, beta2: f32, param_lens: &[usize]) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            first_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one update from the accumulated gradients. `params` must be
    /// in the same order as at construction.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        assert_eq!(params.len(), self.first_moment.len(), "parameter list changed");
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let correct1 = 1.0 - b1.powi(t);
        let correct2 = 1.0 - b2.powi(t);
        let mut work: Vec<_> = params
            .into_iter()
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
            .collect();
        let update = |(p, (m, v)): &mut (&mut Param, (&mut Vec<f32>, &mut Vec<f32>))| {
            for ((w, &g), (m, v)) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut().zip(v.iter_mut())) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / correct1;
                let v_hat = *v / correct2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        exec::for_each_mut(&mut work, |_, item| update(item));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::new(vec![1.0, -1.0]);
        p.grad = vec![0.5, -3.0];
        let mut opt = Adam::new(0.1, 0.5, 0.999, &[2]);
        opt.step(vec![&mut p]);
        // bias-corrected first step is lr * sign(g)
        assert!((p.value[0] - 0.9).abs() < 1e-6);
        assert!((p.value[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut p = Param::new(vec![0.3]);
        p.grad = vec![7.0];
        let mut opt = Adam::new(0.0, 0.5, 0.999, &[1]);
        opt.step(vec![&mut p]);
        assert_eq!(p.value, vec![0.3]);
    }
}
