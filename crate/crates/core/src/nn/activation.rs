use serde::{Deserialize, Serialize};

use crate::exec;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f32),
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(&self, x: &mut Tensor) {
        let len = x.item_len();
        match *self {
            Activation::LeakyRelu(slope) => exec::for_each_chunk_mut(x.data_mut(), len, |_, c| {
                for v in c {
                    if *v < 0.0 {
                        *v *= slope;
                    }
                }
            }),
            Activation::Sigmoid => exec::for_each_chunk_mut(x.data_mut(), len, |_, c| {
                for v in c {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
            }),
            Activation::Identity => {}
        }
    }

    /// Turns the gradient w.r.t. the activation output into the gradient
    /// w.r.t. its input, given the activation output `y`.
    pub fn backward(&self, y: &Tensor, dy: &mut Tensor) {
        let len = y.item_len();
        let y = y.data();
        match *self {
            Activation::LeakyRelu(slope) => exec::for_each_chunk_mut(dy.data_mut(), len, |i, c| {
                for (d, &out) in c.iter_mut().zip(&y[i * len..]) {
                    if out <= 0.0 {
                        *d *= slope;
                    }
                }
            }),
            Activation::Sigmoid => exec::for_each_chunk_mut(dy.data_mut(), len, |i, c| {
                for (d, &out) in c.iter_mut().zip(&y[i * len..]) {
                    *d *= out * (1.0 - out);
                }
            }),
            Activation::Identity => {}
        }
    }
}
