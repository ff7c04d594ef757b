use crate::error::{ensure, Result};

/// Rank-4 `(batch, channel, height, width)` array of `f32`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        ensure!(
            data.len() == shape.iter().product::<usize>(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        ensure!(data.iter().all(|v| v.is_finite()), "tensor contains non-finite values");
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: [usize; 4], value: f32) -> Self {
        Self { shape, data: vec![value; shape.iter().product()] }
    }

    pub fn scalar(value: f32) -> Self {
        Self { shape: [1, 1, 1, 1], data: vec![value] }
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Self {
        let [b, c, h, w] = shape;
        let mut data = Vec::with_capacity(b * c * h * w);
        for ib in 0..b {
            for ic in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([ib, ic, y, x]));
                    }
                }
            }
        }
        Self { shape, data }
    }

    /// Construction path for kernels that guarantee the length invariant themselves.
    pub(crate) fn from_raw(shape: [usize; 4], data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        Self { shape, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((b * cs + c) * hs + y) * ws + x
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(b, c, y, x)]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Tensor {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn fill(&mut self, value: f32) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Concatenate tensors sharing `(channel, height, width)` along the batch axis.
    pub fn stack_batch(parts: &[Tensor]) -> Result<Tensor> {
        ensure!(!parts.is_empty(), "cannot stack an empty tensor list");
        let [_, c, h, w] = parts[0].shape;
        let mut b = 0;
        let mut data = Vec::new();
        for p in parts {
            ensure!(
                p.shape[1..] == [c, h, w],
                "stack_batch shape mismatch: {:?} vs {:?}",
                p.shape,
                parts[0].shape
            );
            b += p.shape[0];
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape: [b, c, h, w], data })
    }

    /// Concatenate tensors sharing `(batch, height, width)` along the channel axis.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
        ensure!(!parts.is_empty(), "cannot concatenate an empty tensor list");
        let [b, _, h, w] = parts[0].shape;
        for p in parts {
            ensure!(
                p.shape[0] == b && p.shape[2] == h && p.shape[3] == w,
                "concat_channels shape mismatch: {:?} vs {:?}",
                p.shape,
                parts[0].shape
            );
        }
        let c_total: usize = parts.iter().map(|p| p.shape[1]).sum();
        let plane = h * w;
        let mut data = Vec::with_capacity(b * c_total * plane);
        for ib in 0..b {
            for p in parts {
                let n = p.shape[1] * plane;
                data.extend_from_slice(&p.data[ib * n..(ib + 1) * n]);
            }
        }
        Ok(Tensor { shape: [b, c_total, h, w], data })
    }

    /// Slice out batch item `index` as a batch-1 tensor.
    pub fn batch_item(&self, index: usize) -> Tensor {
        let n = self.shape[1] * self.shape[2] * self.shape[3];
        Tensor {
            shape: [1, self.shape[1], self.shape[2], self.shape[3]],
            data: self.data[index * n..(index + 1) * n].to_vec(),
        }
    }

    /// Little-endian byte image of the payload, used for checksums.
    pub fn le_bytes(&self) -> impl Iterator<Item = u8> + '_ {
        self.data.iter().flat_map(|v| v.to_le_bytes())
    }
}
