use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::tape::{Tape, Tx};
use super::tensor::Tensor;
use super::{BoundParams, GradMap};

/// Adam hyperparameters. Defaults match the usual (0.9, 0.999, 1e-8).
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct Param {
    value: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// A named collection of parameters with their optimizer moments.
///
/// Each network (denoisers, encoder, actor, critics) owns exactly one set;
/// the gradient routing checks in the harness rely on that separation.
pub struct ParamSet {
    params: BTreeMap<String, Param>,
    step_count: u64,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { params: BTreeMap::new(), step_count: 0 }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let numel = value.numel();
        self.params.insert(name.into(), Param { value, m: vec![0.0; numel], v: vec![0.0; numel] });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn set_value(&mut self, name: &str, data: Vec<f64>) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Precondition(format!("unknown parameter `{name}`")))?;
        if data.len() != p.value.numel() {
            return Err(Error::ShapeMismatch {
                context: format!("set_value `{name}`"),
                expected: p.value.shape.clone(),
                got: vec![data.len()],
            });
        }
        p.value.data = data;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, p)| (k.as_str(), &p.value))
    }

    /// Register every parameter on a tape as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.params.iter().map(|(k, p)| (k.clone(), tape.leaf(&p.value))).collect()
    }

    /// Register every parameter as a constant (frozen weights).
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundParams {
        self.params.iter().map(|(k, p)| (k.clone(), tape.constant(&p.value))).collect()
    }

    /// Collect gradients (after backward) for parameters bound via `bind`.
    /// Parameters the output did not depend on are omitted.
    pub fn collect_grads(&self, tape: &Tape, bound: &BoundParams) -> GradMap {
        let mut grads = GradMap::new();
        for (name, &tx) in bound {
            if let Some(g) = tape.grad(tx) {
                grads.insert(name.clone(), g.to_vec());
            }
        }
        grads
    }

    /// Fletcher-style checksum over all parameter values; used by the
    /// harness to assert which sets a gradient step touched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for (name, p) in &self.params {
            for b in name.as_bytes() {
                h = (h ^ *b as u64).wrapping_mul(0x100000001b3);
            }
            for x in &p.value.data {
                for b in x.to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    /// One bias-corrected adaptive-moment update. Only parameters present in
    /// `grads` move; `step_count` increments once per call.
    pub fn adam_step(&mut self, grads: &GradMap, cfg: AdamConfig) -> Result<()> {
        for name in grads.keys() {
            if !self.params.contains_key(name) {
                return Err(Error::Precondition(format!(
                    "gradient for unknown parameter `{name}`"
                )));
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - cfg.beta1.powi(self.step_count as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step_count as i32);
        let _ = t;
        for (name, g) in grads {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NanGradient { param: name.clone() });
            }
            let p = self.params.get_mut(name).unwrap();
            if g.len() != p.value.numel() {
                return Err(Error::ShapeMismatch {
                    context: format!("adam_step `{name}`"),
                    expected: p.value.shape.clone(),
                    got: vec![g.len()],
                });
            }
            for i in 0..g.len() {
                p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g[i];
                p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = p.m[i] / bc1;
                let v_hat = p.v[i] / bc2;
                p.value.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }

    /// Soft blend: `self ← tau · other + (1 − tau) · self`, parameter-wise.
    /// Both sets must have identical names and shapes.
    pub fn soft_blend_from(&mut self, other: &ParamSet, tau: f64) -> Result<()> {
        for (name, p) in self.params.iter_mut() {
            let o = other
                .params
                .get(name)
                .ok_or_else(|| Error::Precondition(format!("missing parameter `{name}`")))?;
            for (x, &y) in p.value.data.iter_mut().zip(&o.value.data) {
                *x = tau * y + (1.0 - tau) * *x;
            }
        }
        Ok(())
    }

    /// Deep copy of values (moments reset, step count preserved as zero).
    pub fn clone_values(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, p) in &self.params {
            out.insert(name.clone(), p.value.clone());
        }
        out
    }
}

/// Retrieve a bound handle, panicking on a name typo (programmer error).
pub(crate) fn bound(bound: &BoundParams, name: &str) -> Tx {
    *bound.get(name).unwrap_or_else(|| panic!("parameter `{name}` not bound"))
}
