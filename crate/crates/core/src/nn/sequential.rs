use super::{Activation, BatchNorm2d, Conv2d, ConvTranspose2d, Mode, NormCache, Param};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub enum ConvLayer {
    Down(Conv2d),
    Up(ConvTranspose2d),
}

impl ConvLayer {
    pub fn in_channels(&self) -> usize {
        match self {
            ConvLayer::Down(c) => c.in_channels,
            ConvLayer::Up(c) => c.in_channels,
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        match self {
            ConvLayer::Down(c) => c.output_shape(input),
            ConvLayer::Up(c) => c.output_shape(input),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ConvLayer::Down(c) => c.param_count(),
            ConvLayer::Up(c) => c.param_count(),
        }
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            ConvLayer::Down(c) => c.forward(x),
            ConvLayer::Up(c) => c.forward(x),
        }
    }

    fn backward(&mut self, x: &Tensor, dy: &Tensor, input_grad: bool, param_grad: bool) -> Option<Tensor> {
        match self {
            ConvLayer::Down(c) => c.backward(x, dy, input_grad, param_grad),
            ConvLayer::Up(c) => c.backward(x, dy, input_grad, param_grad),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let (weight, bias) = match self {
            ConvLayer::Down(c) => (&mut c.weight, c.bias.as_mut()),
            ConvLayer::Up(c) => (&mut c.weight, c.bias.as_mut()),
        };
        std::iter::once(weight).chain(bias).collect()
    }

    fn params(&self) -> (&Param, Option<&Param>) {
        match self {
            ConvLayer::Down(c) => (&c.weight, c.bias.as_ref()),
            ConvLayer::Up(c) => (&c.weight, c.bias.as_ref()),
        }
    }
}

/// Convolution, optional batch normalisation, activation.
#[derive(Clone, Debug)]
pub struct Block {
    pub name: String,
    pub conv: ConvLayer,
    pub norm: Option<BatchNorm2d>,
    pub activation: Activation,
}

/// Intermediate values recorded by [`Sequential::forward_train`].
#[derive(Debug)]
pub struct Tape {
    /// `activations[i]` is the input of block `i`; the last entry is the output.
    activations: Vec<Tensor>,
    norms: Vec<Option<NormCache>>,
}

/// One row of a printable architecture table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub kind: &'static str,
    pub normalized: bool,
    pub input: [usize; 4],
    pub output: [usize; 4],
    pub params: usize,
}

#[derive(Clone, Debug)]
pub struct Sequential {
    pub blocks: Vec<Block>,
}

impl Sequential {
    pub fn new(blocks: Vec<Block>) -> Self {
        Self { blocks }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let expected = self.blocks.first().map_or(0, |b| b.conv.in_channels());
        if x.channels() != expected {
            return Err(Error::Shape(format!(
                "network expects {expected} input channels, got {}",
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => self.forward_train(x.clone()).map(|(y, _)| y),
            Mode::Eval => self.forward_eval(x),
        }
    }

    /// Inference with running normalisation statistics; takes `&self` so a
    /// trained network can be shared between threads.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut current = x.clone();
        for block in &self.blocks {
            let mut y = block.conv.forward(&current)?;
            if let Some(norm) = &block.norm {
                norm.forward_eval(&mut y);
            }
            block.activation.apply(&mut y);
            current = y;
        }
        Ok(current)
    }

    pub fn forward_train(&mut self, x: Tensor) -> Result<(Tensor, Tape)> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.blocks.len() + 1);
        let mut norms = Vec::with_capacity(self.blocks.len());
        activations.push(x);
        for block in &mut self.blocks {
            let input = activations.last().expect("tape starts with the input");
            let mut y = block.conv.forward(input)?;
            let cache = match &mut block.norm {
                Some(norm) => {
                    let (normed, cache) = norm.forward_train(&y);
                    y = normed;
                    Some(cache)
                }
                None => None,
            };
            block.activation.apply(&mut y);
            norms.push(cache);
            activations.push(y);
        }
        let out = activations.last().expect("nonempty tape").clone();
        Ok((out, Tape { activations, norms }))
    }

    /// Backpropagates `dy` through the recorded pass. Returns the gradient
    /// with respect to the network input when `input_grad` is set.
    pub fn backward(&mut self, tape: Tape, dy: Tensor, input_grad: bool, param_grad: bool) -> Option<Tensor> {
        let Tape { activations, norms } = tape;
        let mut grad = dy;
        let last = self.blocks.len();
        for (i, (block, cache)) in self.blocks.iter_mut().zip(norms).enumerate().rev() {
            block.activation.backward(&activations[i + 1], &mut grad);
            if let (Some(norm), Some(cache)) = (&mut block.norm, cache.as_ref()) {
                grad = norm.backward(cache, &grad, param_grad);
            }
            let want_input = i > 0 || input_grad;
            match block.conv.backward(&activations[i], &grad, want_input, param_grad) {
                Some(dx) => grad = dx,
                None => {
                    debug_assert_eq!(i, 0);
                    debug_assert!(last > 0);
                    return None;
                }
            }
        }
        input_grad.then_some(grad)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for block in &mut self.blocks {
            out.extend(block.conv.params_mut());
            if let Some(norm) = &mut block.norm {
                out.push(&mut norm.gamma);
                out.push(&mut norm.beta);
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.conv.param_count() + b.norm.as_ref().map_or(0, BatchNorm2d::param_count))
            .sum()
    }

    /// Every persistent tensor (parameters and running statistics) by name,
    /// in a stable order.
    pub fn named_tensors(&self) -> Vec<(String, &[f32])> {
        let mut out: Vec<(String, &[f32])> = Vec::new();
        for block in &self.blocks {
            let (weight, bias) = block.conv.params();
            out.push((format!("{}.weight", block.name), &weight.value));
            if let Some(bias) = bias {
                out.push((format!("{}.bias", block.name), &bias.value));
            }
            if let Some(norm) = &block.norm {
                out.push((format!("{}.norm.gamma", block.name), &norm.gamma.value));
                out.push((format!("{}.norm.beta", block.name), &norm.beta.value));
                out.push((format!("{}.norm.running_mean", block.name), &norm.running_mean));
                out.push((format!("{}.norm.running_var", block.name), &norm.running_var));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<f32>)> {
        let mut out: Vec<(String, &mut Vec<f32>)> = Vec::new();
        for block in &mut self.blocks {
            let name = block.name.clone();
            let (weight, bias) = match &mut block.conv {
                ConvLayer::Down(c) => (&mut c.weight, c.bias.as_mut()),
                ConvLayer::Up(c) => (&mut c.weight, c.bias.as_mut()),
            };
            out.push((format!("{name}.weight"), &mut weight.value));
            if let Some(bias) = bias {
                out.push((format!("{name}.bias"), &mut bias.value));
            }
            if let Some(norm) = &mut block.norm {
                out.push((format!("{name}.norm.gamma"), &mut norm.gamma.value));
                out.push((format!("{name}.norm.beta"), &mut norm.beta.value));
                out.push((format!("{name}.norm.running_mean"), &mut norm.running_mean));
                out.push((format!("{name}.norm.running_var"), &mut norm.running_var));
            }
        }
        out
    }

    pub fn summary(&self, input: [usize; 4]) -> Vec<LayerSummary> {
        let mut shape = input;
        self.blocks
            .iter()
            .map(|b| {
                let output = b.conv.output_shape(shape);
                let row = LayerSummary {
                    name: b.name.clone(),
                    kind: match b.conv {
                        ConvLayer::Down(_) => "conv",
                        ConvLayer::Up(_) => "deconv",
                    },
                    normalized: b.norm.is_some(),
                    input: shape,
                    output,
                    params: b.conv.param_count() + b.norm.as_ref().map_or(0, BatchNorm2d::param_count),
                };
                shape = output;
                row
            })
            .collect()
    }
}
