//! Define-by-run tape. Every forward call appends a node; `backward`
//! walks the tape once in reverse.

use std::collections::BTreeMap;

use super::{kernels, ParamStore, Tensor};
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    Conv2d { input: Var, weight: Var, bias: Var, stride: usize, padding: usize },
    Relu(Var),
    Add(Var, Var),
    Scale(Var, f32),
    PixelShuffle(Var, usize),
    Mse { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// `f64` value of each mse node, kept alongside the `f32` tensor.
    losses: Vec<(usize, f64)>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn take_value(mut self, v: Var) -> Tensor {
        std::mem::replace(&mut self.nodes[v.0].value, Tensor::zeros([0, 0, 0, 0]))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let value = store.value(name)?.clone();
        Ok(self.push(value, Op::Param(name.to_owned()), true))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let out = kernels::conv2d(self.value(input), self.value(weight), self.value(bias), stride, padding)?;
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(out, Op::Conv2d { input, weight, bias, stride, padding }, needs))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = kernels::relu(self.value(input));
        let needs = self.needs(input);
        self.push(out, Op::Relu(input), needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::add(self.value(a), self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Var {
        let out = self.value(input).map(|v| v * factor);
        let needs = self.needs(input);
        self.push(out, Op::Scale(input, factor), needs)
    }

    pub fn pixel_shuffle(&mut self, input: Var, r: usize) -> Result<Var> {
        let out = kernels::pixel_shuffle(self.value(input), r)?;
        let needs = self.needs(input);
        Ok(self.push(out, Op::PixelShuffle(input, r), needs))
    }

    /// Scalar mean squared error node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = kernels::mse_loss(self.value(pred), self.value(target))?;
        let needs = self.needs(pred) || self.needs(target);
        let v = self.push(Tensor::scalar(loss as f32), Op::Mse { pred, target }, needs);
        self.losses.push((v.0, loss));
        Ok(v)
    }

    /// Full-precision value of a loss node.
    pub fn loss_value(&self, v: Var) -> Option<f64> {
        self.losses.iter().find(|(i, _)| *i == v.0).map(|&(_, l)| l)
    }

    /// Reverse sweep from the scalar `loss`. Every gradient in `store` is
    /// overwritten: reached parameters get `d loss / d param`, the rest zero.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<f64> {
        ensure!(
            self.value(loss).numel() == 1,
            "backward needs a scalar loss, got shape {:?}",
            self.value(loss).shape()
        );
        store.zero_grads();
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut param_grads: BTreeMap<&str, Tensor> = BTreeMap::new();

        for idx in (0..=loss.0).rev() {
            let Some(grad) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => {
                    // a parameter bound twice contributes the sum
                    let total = match param_grads.remove(name.as_str()) {
                        Some(prev) => kernels::add(&prev, &grad)?,
                        None => grad,
                    };
                    param_grads.insert(name.as_str(), total);
                }
                Op::Conv2d { input, weight, bias, stride, padding } => {
                    let g = kernels::conv2d_backward(
                        self.value(*input),
                        self.value(*weight),
                        &grad,
                        *stride,
                        *padding,
                        self.needs(*input),
                    )?;
                    if let Some(gi) = g.input {
                        accumulate(&mut grads, *input, gi)?;
                    }
                    if self.needs(*weight) {
                        accumulate(&mut grads, *weight, g.weight)?;
                    }
                    if self.needs(*bias) {
                        let shape = self.value(*bias).shape();
                        accumulate(&mut grads, *bias, Tensor::from_raw(shape, g.bias.into_data()))?;
                    }
                }
                Op::Relu(input) => {
                    let g = kernels::relu_backward(self.value(*input), &grad);
                    accumulate(&mut grads, *input, g)?;
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, grad.clone())?;
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, grad)?;
                    }
                }
                Op::Scale(input, factor) => {
                    let f = *factor;
                    accumulate(&mut grads, *input, grad.map(|g| g * f))?;
                }
                Op::PixelShuffle(input, r) => {
                    accumulate(&mut grads, *input, kernels::pixel_unshuffle(&grad, *r)?)?;
                }
                Op::Mse { pred, target } => {
                    let up = grad.data()[0] as f64;
                    if self.needs(*pred) {
                        let g = kernels::mse_backward(self.value(*pred), self.value(*target), up);
                        accumulate(&mut grads, *pred, g)?;
                    }
                    if self.needs(*target) {
                        let g = kernels::mse_backward(self.value(*target), self.value(*pred), up);
                        accumulate(&mut grads, *target, g)?;
                    }
                }
            }
        }
        for (name, g) in param_grads {
            store.set_grad(name, g);
        }
        Ok(self.loss_value(loss).unwrap_or(self.value(loss).data()[0] as f64))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
    grads[v.0] = Some(match grads[v.0].take() {
        Some(existing) => kernels::add(&existing, &g)?,
        None => g,
    });
    Ok(())
}
