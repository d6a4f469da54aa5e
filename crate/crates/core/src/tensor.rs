//! Dense `f32` batches in NCHW order.

use crate::error::{Error, Result};

/// A batch of feature maps stored contiguously as `[batch, channels, height, width]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            shape: [batch, channels, height, width],
            data: vec![0.0; batch * channels * height * width],
        }
    }

    pub fn filled(shape: [usize; 4], value: f32) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "{} values do not fill a {:?} tensor ({} expected)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Self { shape, data })
    }

    /// Stacks single-channel `height × width` planes into a `[n, 1, h, w]` batch.
    pub fn from_planes(height: usize, width: usize, planes: &[&[f32]]) -> Result<Self> {
        let mut data = Vec::with_capacity(planes.len() * height * width);
        for plane in planes {
            if plane.len() != height * width {
                return Err(Error::Shape(format!(
                    "plane of {} values is not {height}x{width}",
                    plane.len()
                )));
            }
            data.extend_from_slice(plane);
        }
        Self::from_vec([planes.len(), 1, height, width], data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    /// Dimensions in `(batch, height, width, channels)` order, the layout used
    /// when describing images to users.
    pub fn nhwc(&self) -> (usize, usize, usize, usize) {
        (self.shape[0], self.shape[2], self.shape[3], self.shape[1])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn plane_len(&self) -> usize {
        self.shape[2] * self.shape[3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn item(&self, index: usize) -> &[f32] {
        let len = self.item_len();
        &self.data[index * len..(index + 1) * len]
    }

    /// Copies one batch item out as a batch of one.
    pub fn select(&self, index: usize) -> Tensor {
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.item(index).to_vec(),
        }
    }

    /// Concatenates two batches along the channel axis, `first` channels first.
    pub fn concat_channels(first: &Tensor, second: &Tensor) -> Result<Tensor> {
        let [n, c1, h, w] = first.shape;
        let [n2, c2, h2, w2] = second.shape;
        if n != n2 || h != h2 || w != w2 {
            return Err(Error::Shape(format!(
                "cannot concatenate {:?} with {:?} along channels",
                first.shape, second.shape
            )));
        }
        let mut data = Vec::with_capacity(first.len() + second.len());
        for i in 0..n {
            data.extend_from_slice(first.item(i));
            data.extend_from_slice(second.item(i));
        }
        Ok(Tensor {
            shape: [n, c1 + c2, h, w],
            data,
        })
    }

    /// Inverse of [`Tensor::concat_channels`]: splits after `channels` channels.
    pub fn split_channels(&self, channels: usize) -> (Tensor, Tensor) {
        let [n, c, h, w] = self.shape;
        assert!(channels <= c, "split point beyond channel count");
        let plane = h * w;
        let mut first = Vec::with_capacity(n * channels * plane);
        let mut second = Vec::with_capacity(n * (c - channels) * plane);
        for i in 0..n {
            let item = self.item(i);
            first.extend_from_slice(&item[..channels * plane]);
            second.extend_from_slice(&item[channels * plane..]);
        }
        (
            Tensor {
                shape: [n, channels, h, w],
                data: first,
            },
            Tensor {
                shape: [n, c - channels, h, w],
                data: second,
            },
        )
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
