//! AdamW with bias correction and decoupled weight decay.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Completed update count.
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update of `params` in place. Gradients are checked for
    /// non-finite entries before anything is modified.
    pub fn update(&mut self, params: &mut [Tensor], grads: &[Tensor], names: &[String], lr: f64) -> Result<()> {
        if params.len() != grads.len() || params.len() != names.len() {
            return Err(Error::Usage(format!(
                "{} parameters, {} gradients and {} names",
                params.len(),
                grads.len(),
                names.len()
            )));
        }
        for ((p, g), name) in params.iter().zip(grads).zip(names) {
            if p.shape() != g.shape() {
                return Err(Error::Usage(format!(
                    "gradient of {name} has shape {:?}, parameter has {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if let Some(bad) = g.data().iter().find(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("gradient of {name} contains {bad}")));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (j, (x, gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *x = *x * decay - lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Moments as named tensors shaped like `params`.
    pub fn export(&self, params: &[Tensor], names: &[String]) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        out.insert("optim.step".into(), Tensor::scalar(self.step as f64));
        if self.m.is_empty() {
            return out;
        }
        for (k, (p, name)) in params.iter().zip(names).enumerate() {
            let shaped = |d: &Vec<f64>| Tensor::new(p.shape().to_vec(), d.clone()).expect("same size");
            out.insert(format!("optim.m.{name}"), shaped(&self.m[k]));
            out.insert(format!("optim.v.{name}"), shaped(&self.v[k]));
        }
        out
    }

    /// Restores moments written by [`Self::export`].
    pub fn import(
        &mut self,
        extras: &BTreeMap<String, Tensor>,
        params: &[Tensor],
        names: &[String],
    ) -> Result<()> {
        let step = extras
            .get("optim.step")
            .ok_or_else(|| Error::Usage("checkpoint carries no optimiser state".into()))?;
        self.step = step.data()[0] as u64;
        if self.step == 0 {
            self.m.clear();
            self.v.clear();
            return Ok(());
        }
        let fetch = |kind: &str, name: &str, p: &Tensor| -> Result<Vec<f64>> {
            let key = format!("optim.{kind}.{name}");
            match extras.get(&key) {
                Some(t) if t.shape() == p.shape() => Ok(t.data().to_vec()),
                _ => Err(Error::Usage(format!("optimiser state {key} missing or misshapen"))),
            }
        };
        let mut m = Vec::with_capacity(params.len());
        let mut v = Vec::with_capacity(params.len());
        for (p, name) in params.iter().zip(names) {
            m.push(fetch("m", name, p)?);
            v.push(fetch("v", name, p)?);
        }
        self.m = m;
        self.v = v;
        Ok(())
    }
}
