use super::Param;
use crate::exec;
use crate::tensor::Tensor;

/// Per-channel batch normalisation over `(batch, height, width)`.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub momentum: f32,
    pub eps: f32,
}

/// Normalised activations and inverse standard deviations from a
/// train-mode forward pass.
#[derive(Clone, Debug)]
pub struct NormCache {
    xhat: Tensor,
    inv_std: Vec<f32>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::filled(channels, 1.0),
            beta: Param::filled(channels, 0.0),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn param_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    /// Sum over every `(item, position)` of `f(channel, index)` for one
    /// channel, accumulated in `f64` in a fixed order.
    fn channel_sum(x: &Tensor, channel: usize, f: impl Fn(usize) -> f64) -> f64 {
        let plane = x.plane_len();
        let item = x.item_len();
        let mut acc = 0.0;
        for n in 0..x.batch() {
            let base = n * item + channel * plane;
            for idx in base..base + plane {
                acc += f(idx);
            }
        }
        acc
    }

    pub fn forward_train(&mut self, x: &Tensor) -> (Tensor, NormCache) {
        let count = (x.batch() * x.plane_len()) as f64;
        let data = x.data();
        let stats = exec::map_indexed(self.channels, |c| {
            let mean = Self::channel_sum(x, c, |i| data[i] as f64) / count;
            let var = Self::channel_sum(x, c, |i| {
                let d = data[i] as f64 - mean;
                d * d
            }) / count;
            (mean, var)
        });
        let inv_std: Vec<f32> = stats
            .iter()
            .map(|&(_, var)| (1.0 / (var + self.eps as f64).sqrt()) as f32)
            .collect();
        let means: Vec<f32> = stats.iter().map(|&(m, _)| m as f32).collect();

        let mut xhat = x.clone();
        let plane = x.plane_len();
        let item_len = x.item_len();
        exec::for_each_chunk_mut(xhat.data_mut(), item_len, |_, item| {
            for c in 0..self.channels {
                let (m, s) = (means[c], inv_std[c]);
                item[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = (*v - m) * s);
            }
        });
        let mut y = xhat.clone();
        let (gamma, beta) = (&self.gamma.value, &self.beta.value);
        exec::for_each_chunk_mut(y.data_mut(), item_len, |_, item| {
            for c in 0..gamma.len() {
                let (g, b) = (gamma[c], beta[c]);
                item[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = *v * g + b);
            }
        });

        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let keep = 1.0 - self.momentum;
        for (c, &(mean, var)) in stats.iter().enumerate() {
            self.running_mean[c] = keep * self.running_mean[c] + self.momentum * mean as f32;
            self.running_var[c] = keep * self.running_var[c] + self.momentum * (var * unbias) as f32;
        }
        (y, NormCache { xhat, inv_std })
    }

    pub fn forward_eval(&self, x: &mut Tensor) {
        let plane = x.plane_len();
        let item_len = x.item_len();
        let scale: Vec<f32> = (0..self.channels)
            .map(|c| self.gamma.value[c] / (self.running_var[c] + self.eps).sqrt())
            .collect();
        let shift: Vec<f32> = (0..self.channels)
            .map(|c| self.beta.value[c] - self.running_mean[c] * scale[c])
            .collect();
        exec::for_each_chunk_mut(x.data_mut(), item_len, |_, item| {
            for c in 0..scale.len() {
                let (s, b) = (scale[c], shift[c]);
                item[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v = *v * s + b);
            }
        });
    }

    pub fn backward(&mut self, cache: &NormCache, dy: &Tensor, param_grad: bool) -> Tensor {
        let count = (dy.batch() * dy.plane_len()) as f64;
        let xhat = cache.xhat.data();
        let grad = dy.data();
        let sums = exec::map_indexed(self.channels, |c| {
            let sum_dy = Self::channel_sum(dy, c, |i| grad[i] as f64);
            let sum_dy_xhat = Self::channel_sum(dy, c, |i| grad[i] as f64 * xhat[i] as f64);
            (sum_dy, sum_dy_xhat)
        });
        if param_grad {
            for (c, &(sum_dy, sum_dy_xhat)) in sums.iter().enumerate() {
                self.gamma.grad[c] += sum_dy_xhat as f32;
                self.beta.grad[c] += sum_dy as f32;
            }
        }
        // dx = gamma * inv_std / M * (M * dy - sum(dy) - xhat * sum(dy * xhat))
        let coeffs: Vec<(f32, f32, f32)> = sums
            .iter()
            .enumerate()
            .map(|(c, &(sum_dy, sum_dy_xhat))| {
                let scale = self.gamma.value[c] * cache.inv_std[c];
                (scale, (sum_dy / count) as f32, (sum_dy_xhat / count) as f32)
            })
            .collect();
        let mut dx = dy.clone();
        let plane = dy.plane_len();
        let item_len = dy.item_len();
        exec::for_each_chunk_mut(dx.data_mut(), item_len, |n, item| {
            let xh = &xhat[n * item_len..(n + 1) * item_len];
            for (c, &(scale, mean_dy, mean_dy_xhat)) in coeffs.iter().enumerate() {
                let range = c * plane..(c + 1) * plane;
                for (d, &h) in item[range.clone()].iter_mut().zip(&xh[range]) {
                    *d = scale * (*d - mean_dy - h * mean_dy_xhat);
                }
            }
        });
        dx
    }
}
