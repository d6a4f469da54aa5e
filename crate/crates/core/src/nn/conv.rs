//! Strided convolutions and transposed convolutions via im2col + GEMM.
//!
//! Padding follows the "same" convention: a stride-`s` convolution maps a
//! side of length `n` to `ceil(n / s)`, with any odd padding pixel placed on
//! the bottom/right. A transposed convolution is the adjoint of the
//! convolution that maps its output grid back onto its input grid.

use rand::Rng;

use super::gemm::sgemm;
use super::Param;
use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::Tensor;

/// Upper bound on im2col buffer size per work item, in floats.
const MAX_COLUMN_FLOATS: usize = 1 << 21;

/// Index mapping of a convolution from an input grid to an output grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl Geometry {
    pub fn same(in_h: usize, in_w: usize, kernel: usize, stride: usize) -> Self {
        let out_h = in_h.div_ceil(stride);
        let out_w = in_w.div_ceil(stride);
        let pad = |input: usize, output: usize| ((output - 1) * stride + kernel).saturating_sub(input) / 2;
        Self {
            in_h,
            in_w,
            out_h,
            out_w,
            kernel,
            stride,
            pad_top: pad(in_h, out_h),
            pad_left: pad(in_w, out_w),
        }
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Inclusive range of input rows read by output row `oy` (may extend
    /// into the padding).
    pub fn input_rows(&self, oy: usize) -> (isize, isize) {
        let start = (oy * self.stride) as isize - self.pad_top as isize;
        (start, start + self.kernel as isize - 1)
    }

    pub fn input_cols(&self, ox: usize) -> (isize, isize) {
        let start = (ox * self.stride) as isize - self.pad_left as isize;
        (start, start + self.kernel as isize - 1)
    }

    fn chunk(&self, rows: usize, positions: usize) -> usize {
        (MAX_COLUMN_FLOATS / rows.max(1)).clamp(1, positions.max(1))
    }
}

/// Gathers input patches for output positions `p0..p1` into `col`, laid out
/// as `[channels * k * k, p1 - p0]`.
fn im2col(src: &[f32], channels: usize, g: &Geometry, p0: usize, p1: usize, col: &mut [f32]) {
    let plen = p1 - p0;
    let k = g.kernel;
    let plane_len = g.in_len();
    for c in 0..channels {
        let plane = &src[c * plane_len..(c + 1) * plane_len];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * plen..][..plen];
                let (mut oy, mut ox) = (p0 / g.out_w, p0 % g.out_w);
                for dst in row.iter_mut() {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                    *dst = if iy >= 0 && ix >= 0 && (iy as usize) < g.in_h && (ix as usize) < g.in_w {
                        plane[iy as usize * g.in_w + ix as usize]
                    } else {
                        0.0
                    };
                    ox += 1;
                    if ox == g.out_w {
                        ox = 0;
                        oy += 1;
                    }
                }
            }
        }
    }
}

/// Scatter-adds `col` (layout as in [`im2col`]) back onto the input grid.
fn col2im(col: &[f32], channels: usize, g: &Geometry, p0: usize, p1: usize, dst: &mut [f32]) {
    let plen = p1 - p0;
    let k = g.kernel;
    let plane_len = g.in_len();
    for c in 0..channels {
        let plane = &mut dst[c * plane_len..(c + 1) * plane_len];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * plen..][..plen];
                let (mut oy, mut ox) = (p0 / g.out_w, p0 % g.out_w);
                for &v in row {
                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                    let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                    if iy >= 0 && ix >= 0 && (iy as usize) < g.in_h && (ix as usize) < g.in_w {
                        plane[iy as usize * g.in_w + ix as usize] += v;
                    }
                    ox += 1;
                    if ox == g.out_w {
                        ox = 0;
                        oy += 1;
                    }
                }
            }
        }
    }
}

fn add_bias(data: &mut [f32], bias: &[f32], plane: usize) {
    for (c, b) in bias.iter().enumerate() {
        data[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
    }
}

fn bias_grad(dy: &[f32], channels: usize, plane: usize) -> Vec<f32> {
    (0..channels)
        .map(|c| dy[c * plane..(c + 1) * plane].iter().sum())
        .collect()
}

/// Per-item parameter gradients, reduced in item order by the caller.
struct ItemGrads {
    weight: Vec<f32>,
    bias: Option<Vec<f32>>,
}

fn reduce_grads(weight: &mut Param, bias: Option<&mut Param>, grads: &[ItemGrads]) {
    weight.accumulate(grads.iter().map(|g| g.weight.as_slice()));
    if let Some(bias) = bias {
        bias.accumulate(grads.iter().filter_map(|g| g.bias.as_deref()));
    }
}

/// Stride-`s` convolution with weights laid out `[out, in, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Param,
    pub bias: Option<Param>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        with_bias: bool,
        init_std: f32,
        rng: &mut R,
    ) -> Self {
        let weight = Param::normal(out_channels * in_channels * kernel * kernel, init_std, rng);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight,
            bias: with_bias.then(|| Param::filled(out_channels, 0.0)),
        }
    }

    pub fn geometry(&self, h: usize, w: usize) -> Geometry {
        Geometry::same(h, w, self.kernel, self.stride)
    }

    pub fn output_shape(&self, [n, _, h, w]: [usize; 4]) -> [usize; 4] {
        let g = self.geometry(h, w);
        [n, self.out_channels, g.out_h, g.out_w]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Param::len)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let g = self.geometry(x.height(), x.width());
        let mut y = Tensor::zeros(x.batch(), self.out_channels, g.out_h, g.out_w);
        let kdim = self.in_channels * self.kernel * self.kernel;
        let positions = g.out_len();
        let chunk = g.chunk(kdim, positions);
        let item_len = y.item_len();
        exec::for_each_chunk_mut(y.data_mut(), item_len, |i, out| {
            let src = x.item(i);
            let mut col = vec![0.0f32; kdim * chunk];
            for p0 in (0..positions).step_by(chunk) {
                let p1 = (p0 + chunk).min(positions);
                let plen = p1 - p0;
                im2col(src, self.in_channels, &g, p0, p1, &mut col);
                sgemm(
                    self.out_channels,
                    kdim,
                    plen,
                    &self.weight.value,
                    (kdim, 1),
                    &col,
                    (plen, 1),
                    0.0,
                    &mut out[p0..],
                    (positions, 1),
                );
            }
            if let Some(bias) = &self.bias {
                add_bias(out, &bias.value, positions);
            }
        });
        Ok(y)
    }

    /// Backpropagates `dy` through the convolution applied to `x`. Parameter
    /// gradients are accumulated when `param_grad` is set; the input gradient
    /// is returned when `input_grad` is set.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, input_grad: bool, param_grad: bool) -> Option<Tensor> {
        let g = self.geometry(x.height(), x.width());
        let kdim = self.in_channels * self.kernel * self.kernel;
        let positions = g.out_len();
        let chunk = g.chunk(kdim, positions);
        let mut dx = Tensor::zeros(x.batch(), self.in_channels, x.height(), x.width());
        let item_len = dx.item_len();
        let weight = &self.weight.value;
        let has_bias = self.bias.is_some();
        let (cout, cin) = (self.out_channels, self.in_channels);
        let grads = exec::map_chunks_mut(dx.data_mut(), item_len, |i, dxi| {
            let src = x.item(i);
            let dyi = dy.item(i);
            let mut col = vec![0.0f32; kdim * chunk];
            let mut dw = if param_grad { vec![0.0f32; cout * kdim] } else { Vec::new() };
            for p0 in (0..positions).step_by(chunk) {
                let p1 = (p0 + chunk).min(positions);
                let plen = p1 - p0;
                if param_grad {
                    im2col(src, cin, &g, p0, p1, &mut col);
                    // dW += dY[:, p0..p1] · colᵀ
                    sgemm(cout, plen, kdim, &dyi[p0..], (positions, 1), &col, (1, plen), 1.0, &mut dw, (kdim, 1));
                }
                if input_grad {
                    // dcol = Wᵀ · dY[:, p0..p1]
                    sgemm(kdim, cout, plen, weight, (1, kdim), &dyi[p0..], (positions, 1), 0.0, &mut col, (plen, 1));
                    col2im(&col, cin, &g, p0, p1, dxi);
                }
            }
            ItemGrads {
                weight: dw,
                bias: (param_grad && has_bias).then(|| bias_grad(dyi, cout, positions)),
            }
        });
        if param_grad {
            reduce_grads(&mut self.weight, self.bias.as_mut(), &grads);
        }
        input_grad.then_some(dx)
    }
}

/// Stride-`s` transposed convolution with weights laid out `[in, out, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Param,
    pub bias: Option<Param>,
}

impl ConvTranspose2d {
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        with_bias: bool,
        init_std: f32,
        rng: &mut R,
    ) -> Self {
        let weight = Param::normal(in_channels * out_channels * kernel * kernel, init_std, rng);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight,
            bias: with_bias.then(|| Param::filled(out_channels, 0.0)),
        }
    }

    /// Geometry of the adjoint convolution, from this layer's output grid
    /// back to its input grid.
    pub fn geometry(&self, h: usize, w: usize) -> Geometry {
        Geometry::same(h * self.stride, w * self.stride, self.kernel, self.stride)
    }

    pub fn output_shape(&self, [n, _, h, w]: [usize; 4]) -> [usize; 4] {
        [n, self.out_channels, h * self.stride, w * self.stride]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.as_ref().map_or(0, Param::len)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.channels() != self.in_channels {
            return Err(Error::Shape(format!(
                "transposed convolution expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let g = self.geometry(x.height(), x.width());
        let mut y = Tensor::zeros(x.batch(), self.out_channels, g.in_h, g.in_w);
        let kdim = self.out_channels * self.kernel * self.kernel;
        let positions = g.out_len();
        let chunk = g.chunk(kdim, positions);
        let item_len = y.item_len();
        let cin = self.in_channels;
        exec::for_each_chunk_mut(y.data_mut(), item_len, |i, out| {
            let src = x.item(i);
            let mut col = vec![0.0f32; kdim * chunk];
            for p0 in (0..positions).step_by(chunk) {
                let p1 = (p0 + chunk).min(positions);
                let plen = p1 - p0;
                // col = Wᵀ · X[:, p0..p1]
                sgemm(kdim, cin, plen, &self.weight.value, (1, kdim), &src[p0..], (positions, 1), 0.0, &mut col, (plen, 1));
                col2im(&col, self.out_channels, &g, p0, p1, out);
            }
            if let Some(bias) = &self.bias {
                add_bias(out, &bias.value, g.in_len());
            }
        });
        Ok(y)
    }

    pub fn backward(&mut self, x: &Tensor, dy: &Tensor, input_grad: bool, param_grad: bool) -> Option<Tensor> {
        let g = self.geometry(x.height(), x.width());
        let kdim = self.out_channels * self.kernel * self.kernel;
        let positions = g.out_len();
        let chunk = g.chunk(kdim, positions);
        let mut dx = Tensor::zeros(x.batch(), self.in_channels, x.height(), x.width());
        let item_len = dx.item_len();
        let weight = &self.weight.value;
        let has_bias = self.bias.is_some();
        let (cin, cout) = (self.in_channels, self.out_channels);
        let grads = exec::map_chunks_mut(dx.data_mut(), item_len, |i, dxi| {
            let src = x.item(i);
            let dyi = dy.item(i);
            let mut col = vec![0.0f32; kdim * chunk];
            let mut dw = if param_grad { vec![0.0f32; cin * kdim] } else { Vec::new() };
            for p0 in (0..positions).step_by(chunk) {
                let p1 = (p0 + chunk).min(positions);
                let plen = p1 - p0;
                im2col(dyi, cout, &g, p0, p1, &mut col);
                if input_grad {
                    // dX[:, p0..p1] = W · dcol
                    sgemm(cin, kdim, plen, weight, (kdim, 1), &col, (plen, 1), 0.0, &mut dxi[p0..], (positions, 1));
                }
                if param_grad {
                    // dW += X[:, p0..p1] · dcolᵀ
                    sgemm(cin, plen, kdim, &src[p0..], (positions, 1), &col, (1, plen), 1.0, &mut dw, (kdim, 1));
                }
            }
            ItemGrads {
                weight: dw,
                bias: (param_grad && has_bias).then(|| bias_grad(dyi, cout, g.in_len())),
            }
        });
        if param_grad {
            reduce_grads(&mut self.weight, self.bias.as_mut(), &grads);
        }
        input_grad.then_some(dx)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()).unwrap()
    }

    /// Direct convolution by definition, used as an oracle.
    fn direct_conv(x: &Tensor, layer: &Conv2d) -> Tensor {
        let g = layer.geometry(x.height(), x.width());
        let k = layer.kernel;
        let mut y = Tensor::zeros(x.batch(), layer.out_channels, g.out_h, g.out_w);
        let (oh, ow) = (g.out_h, g.out_w);
        for n in 0..x.batch() {
            for o in 0..layer.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = layer.bias.as_ref().map_or(0.0, |b| b.value[o]) as f64;
                        for c in 0..layer.in_channels {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                                    let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= g.in_h || ix as usize >= g.in_w {
                                        continue;
                                    }
                                    let xv = x.item(n)[c * g.in_len() + iy as usize * g.in_w + ix as usize];
                                    let wv = layer.weight.value[((o * layer.in_channels + c) * k + ky) * k + kx];
                                    acc += (xv * wv) as f64;
                                }
                            }
                        }
                        let idx = ((n * layer.out_channels + o) * oh + oy) * ow + ox;
                        y.data_mut()[idx] = acc as f32;
                    }
                }
            }
        }
        y
    }

    fn dot(a: &Tensor, b: &Tensor) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (*x as f64) * (*y as f64)).sum()
    }

    #[test]
    fn same_padding_halves_even_sides() {
        let g = Geometry::same(256, 256, 4, 2);
        assert_eq!((g.out_h, g.pad_top), (128, 1));
        let g = Geometry::same(16, 16, 4, 1);
        assert_eq!((g.out_h, g.pad_top), (16, 1));
        let g = Geometry::same(2, 2, 4, 2);
        assert_eq!((g.out_h, g.pad_top), (1, 1));
    }

    #[test]
    fn conv_matches_direct_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(stride, h) in &[(2usize, 8usize), (1, 6), (2, 2)] {
            let mut layer = Conv2d::new(3, 5, 4, stride, true, 0.3, &mut rng);
            layer.bias.as_mut().unwrap().value.iter_mut().enumerate().for_each(|(i, b)| *b = i as f32 * 0.1);
            let x = random_tensor([2, 3, h, h], 11);
            let got = layer.forward(&x).unwrap();
            let want = direct_conv(&x, &layer);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-4, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when both share a weight tensor.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let conv = Conv2d::new(3, 4, 4, 2, false, 0.3, &mut rng);
        let mut up = ConvTranspose2d::new(4, 3, 4, 2, false, 0.3, &mut rng);
        // [out=4, in=3, k, k] for conv is the [in=4, out=3, k, k] of its transpose.
        up.weight.value = conv.weight.value.clone();
        let x = random_tensor([1, 3, 8, 8], 1);
        let y = random_tensor([1, 4, 4, 4], 2);
        let lhs = dot(&conv.forward(&x).unwrap(), &y);
        let rhs = dot(&x, &up.forward(&y).unwrap());
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
        assert_eq!(up.forward(&y).unwrap().shape(), [1, 3, 8, 8]);
    }

    fn check_gradients(forward: &dyn Fn(&Tensor, &[f32]) -> Tensor, x: &Tensor, w: &[f32], dx: &Tensor, dw: &[f32], probe: &Tensor) {
        // loss = <f(x, w), probe>; compare analytic grads with central differences in f32.
        let loss = |x: &Tensor, w: &[f32]| dot(&forward(x, w), probe);
        let h = 1e-2f32;
        for idx in [0usize, 7, x.len() / 2, x.len() - 1] {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let fd = (loss(&xp, w) - loss(&xm, w)) / (2.0 * h as f64);
            assert!((fd - dx.data()[idx] as f64).abs() < 2e-2 * (1.0 + fd.abs()), "dx[{idx}] {fd} vs {}", dx.data()[idx]);
        }
        for idx in [0usize, 3, w.len() / 2, w.len() - 1] {
            let mut wp = w.to_vec();
            wp[idx] += h;
            let mut wm = w.to_vec();
            wm[idx] -= h;
            let fd = (loss(x, &wp) - loss(x, &wm)) / (2.0 * h as f64);
            assert!((fd - dw[idx] as f64).abs() < 2e-2 * (1.0 + fd.abs()), "dw[{idx}] {fd} vs {}", dw[idx]);
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut layer = Conv2d::new(2, 3, 4, 2, true, 0.3, &mut rng);
        let x = random_tensor([2, 2, 6, 6], 4);
        let probe = random_tensor(layer.output_shape(x.shape()), 5);
        let dx = layer.backward(&x, &probe, true, true).unwrap();
        let template = layer.clone();
        let forward = move |x: &Tensor, w: &[f32]| {
            let mut l = template.clone();
            l.weight.value = w.to_vec();
            l.forward(x).unwrap()
        };
        let w = layer.weight.value.clone();
        check_gradients(&forward, &x, &w, &dx, &layer.weight.grad, &probe);
        let bias_sum: Vec<f32> = (0..3)
            .map(|c| (0..2).map(|n| probe.item(n)[c * 9..(c + 1) * 9].iter().sum::<f32>()).sum())
            .collect();
        for (a, b) in layer.bias.as_ref().unwrap().grad.iter().zip(&bias_sum) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn transposed_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut layer = ConvTranspose2d::new(3, 2, 4, 2, false, 0.3, &mut rng);
        let x = random_tensor([2, 3, 3, 3], 6);
        let probe = random_tensor(layer.output_shape(x.shape()), 7);
        let dx = layer.backward(&x, &probe, true, true).unwrap();
        let template = layer.clone();
        let forward = move |x: &Tensor, w: &[f32]| {
            let mut l = template.clone();
            l.weight.value = w.to_vec();
            l.forward(x).unwrap()
        };
        let w = layer.weight.value.clone();
        check_gradients(&forward, &x, &w, &dx, &layer.weight.grad, &probe);
    }

    #[test]
    fn chunked_columns_match_single_pass() {
        // A layer large enough that im2col is split into several chunks.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layer = Conv2d::new(64, 2, 4, 1, false, 0.05, &mut rng);
        let x = random_tensor([1, 64, 48, 48], 8);
        let kdim = 64 * 16;
        assert!(kdim * 48 * 48 > MAX_COLUMN_FLOATS);
        let got = layer.forward(&x).unwrap();
        let want = direct_conv(&x, &layer);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Conv2d::new(2, 3, 4, 2, false, 0.02, &mut rng);
        assert!(matches!(layer.forward(&Tensor::zeros(1, 3, 8, 8)), Err(Error::Shape(_))));
    }
}
