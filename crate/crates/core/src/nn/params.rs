use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
}

impl ParamEntry {
    fn new(value: Tensor) -> Self {
        let shape = value.shape();
        Self { value, grad: Tensor::zeros(shape), adam_m: Tensor::zeros(shape), adam_v: Tensor::zeros(shape) }
    }
}

/// Named trainable tensors with gradient and Adam moment slots.
///
/// Iteration order is the lexicographic name order, which is also the
/// order used for checkpoints and checksums.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step_count: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), ParamEntry::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| crate::Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let entry = self
            .entries
            .get_mut(name)
            .ok_or_else(|| crate::Error::invalid(format!("unknown parameter `{name}`")))?;
        ensure!(
            entry.value.shape() == value.shape(),
            "parameter `{name}` shape {:?} cannot take {:?}",
            entry.value.shape(),
            value.shape()
        );
        entry.value = value;
        Ok(())
    }

    pub(crate) fn set_grad(&mut self, name: &str, grad: Tensor) {
        if let Some(entry) = self.entries.get_mut(name) {
            debug_assert_eq!(entry.grad.shape(), grad.shape());
            entry.grad = grad;
        }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.fill(0.0);
        }
    }

    /// Drop Adam moments and the step counter, keeping values.
    pub fn reset_optimizer(&mut self) {
        self.step_count = 0;
        for e in self.entries.values_mut() {
            e.adam_m.fill(0.0);
            e.adam_v.fill(0.0);
            e.grad.fill(0.0);
        }
    }

    /// SHA-256 over names, shapes and little-endian values; hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, e) in &self.entries {
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            for d in e.value.shape() {
                h.update((d as u64).to_le_bytes());
            }
            h.update(e.value.le_bytes().collect::<Vec<u8>>());
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn increment_step(&mut self) -> u64 {
        self.step_count += 1;
        self.step_count
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry> {
        self.entries.values_mut()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Result<Self> {
        let h = Self { lr, ..Self::default() };
        h.validate()?;
        Ok(h)
    }

    /// `lr = 0` is accepted and turns every step into a no-op.
    pub fn validate(&self) -> Result<()> {
        ensure!(self.lr.is_finite() && self.lr >= 0.0, "adam lr must be finite and >= 0, got {}", self.lr);
        ensure!(self.beta1 > 0.0 && self.beta1 < 1.0, "adam beta1 must lie in (0,1), got {}", self.beta1);
        ensure!(self.beta2 > 0.0 && self.beta2 < 1.0, "adam beta2 must lie in (0,1), got {}", self.beta2);
        ensure!(self.eps > 0.0, "adam eps must be positive, got {}", self.eps);
        Ok(())
    }
}

/// One bias-corrected Adam update over every entry.
pub fn adam_step(params: &mut ParamStore, hyper: &AdamHyper) -> Result<()> {
    hyper.validate()?;
    let t = params.increment_step();
    let bc1 = 1.0 - hyper.beta1.powf(t as f64);
    let bc2 = 1.0 - hyper.beta2.powf(t as f64);
    let (b1, b2) = (hyper.beta1 as f32, hyper.beta2 as f32);
    for e in params.entries_mut() {
        let value = e.value.data_mut();
        let (m, v) = (e.adam_m.data_mut(), e.adam_v.data_mut());
        for (i, &g) in e.grad.data().iter().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let m_hat = m[i] as f64 / bc1;
            let v_hat = v[i] as f64 / bc2;
            value[i] -= (hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps)) as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f32) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("x", Tensor::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = single(1.5);
        adam_step(&mut p, &AdamHyper::default()).unwrap();
        assert_eq!(p.value("x").unwrap().data(), &[1.5]);
        assert_eq!(p.step_count(), 1);
    }

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = single(0.0);
        p.set_grad("x", Tensor::scalar(1.0));
        let h = AdamHyper { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        adam_step(&mut p, &h).unwrap();
        // m_hat = v_hat = 1 at t = 1, so the update is -lr / (1 + eps)
        assert!((p.value("x").unwrap().data()[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn quadratic_converges() {
        // scalar reference recurrence for (x - 5)^2
        let h = AdamHyper { lr: 0.1, ..AdamHyper::default() };
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * (x - 5.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((x - 5.0).abs() < 0.1, "reference recurrence ended at {x}");

        let mut p = single(0.0);
        for _ in 0..200 {
            let cur = p.value("x").unwrap().data()[0];
            p.set_grad("x", Tensor::scalar(2.0 * (cur - 5.0)));
            adam_step(&mut p, &h).unwrap();
        }
        let got = p.value("x").unwrap().data()[0] as f64;
        assert!((got - 5.0).abs() < 0.1, "adam ended at {got}");
        assert!((got - x).abs() < 1e-3, "adam {got} vs reference {x}");
        assert_eq!(p.step_count(), 200);
    }

    #[test]
    fn hyper_validation() {
        assert!(AdamHyper::with_lr(0.0).is_ok());
        assert!(AdamHyper::with_lr(-1.0).is_err());
        assert!(AdamHyper { beta1: 1.0, ..AdamHyper::default() }.validate().is_err());
        assert!(AdamHyper { eps: 0.0, ..AdamHyper::default() }.validate().is_err());
    }

    #[test]
    fn checksum_tracks_values() {
        let a = single(1.0);
        let mut b = single(1.0);
        assert_eq!(a.checksum(), b.checksum());
        b.set_value("x", Tensor::scalar(1.0 + 1e-6)).unwrap();
        assert_ne!(a.checksum(), b.checksum());
    }
}
