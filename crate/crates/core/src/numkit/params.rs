use std::collections::HashMap;

use super::Mat;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter matrices with same-shape gradient accumulators.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
    grads: Vec<Mat>,
    lookup: HashMap<String, ParamId>,
    steps: u64,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values == other.values
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.values.len());
        self.grads.push(Mat::zeros(value.rows(), value.cols()));
        self.values.push(value);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Mat {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.grads[id.0]
    }

    pub fn step_count(&self) -> u64 {
        self.steps
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }

    /// Plain SGD over every parameter: `p <- p - lr * g`, then zero the gradients.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        for id in 0..self.values.len() {
            self.check_grad(ParamId(id))?;
        }
        for (v, g) in self.values.iter_mut().zip(&self.grads) {
            for (p, d) in v.data_mut().iter_mut().zip(g.data()) {
                *p -= lr * d;
            }
        }
        self.zero_grads();
        self.steps += 1;
        Ok(())
    }

    /// SGD restricted to `ids`; every gradient is zeroed afterwards. Returns the
    /// ids whose values actually changed.
    pub fn sgd_step_subset(&mut self, lr: f64, ids: &[ParamId]) -> Result<Vec<ParamId>> {
        for &id in ids {
            self.check_grad(id)?;
        }
        let mut changed = Vec::new();
        for &id in ids {
            let g = &self.grads[id.0];
            let v = &mut self.values[id.0];
            let mut moved = false;
            for (p, d) in v.data_mut().iter_mut().zip(g.data()) {
                let next = *p - lr * d;
                if next != *p {
                    moved = true;
                    *p = next;
                }
            }
            if moved {
                changed.push(id);
            }
        }
        self.zero_grads();
        self.steps += 1;
        Ok(changed)
    }

    fn check_grad(&self, id: ParamId) -> Result<()> {
        if self.grads[id.0].is_finite() {
            Ok(())
        } else {
            Err(Error::training(
                format!("parameter {}", self.names[id.0]),
                "non-finite gradient",
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(p: f64, g: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", Mat::from_rows(&[[p]])).unwrap();
        s.grad_mut(id).set(0, 0, g);
        (s, id)
    }

    #[test]
    fn sgd_examples() {
        let (mut s, id) = scalar_store(1.0, 2.0);
        s.sgd_step(0.5).unwrap();
        assert_eq!(s.value(id).get(0, 0), 0.0);
        assert_eq!(s.grad(id).get(0, 0), 0.0);
        assert_eq!(s.step_count(), 1);

        let (mut s, id) = scalar_store(1.0, 0.0);
        s.sgd_step(0.5).unwrap();
        assert_eq!(s.value(id).get(0, 0), 1.0);

        let mut s = ParamStore::new();
        let id = s.add("v", Mat::from_rows(&[[1.0, 1.0]])).unwrap();
        s.grad_mut(id).data_mut().copy_from_slice(&[1.0, -1.0]);
        s.sgd_step(0.1).unwrap();
        assert!((s.value(id).get(0, 0) - 0.9).abs() < 1e-15);
        assert!((s.value(id).get(0, 1) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, _) = scalar_store(1.0, f64::NAN);
        let err = s.sgd_step(0.1).unwrap_err();
        assert!(err.to_string().contains("parameter p"), "{err}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("w", Mat::zeros(1, 1)).unwrap();
        assert!(s.add("w", Mat::zeros(1, 1)).is_err());
    }

    #[test]
    fn subset_step_reports_changed_ids_and_clears_all_grads() {
        let mut s = ParamStore::new();
        let a = s.add("a", Mat::from_rows(&[[1.0]])).unwrap();
        let b = s.add("b", Mat::from_rows(&[[1.0]])).unwrap();
        let c = s.add("c", Mat::from_rows(&[[1.0]])).unwrap();
        s.grad_mut(a).set(0, 0, 1.0);
        s.grad_mut(c).set(0, 0, 1.0);
        let changed = s.sgd_step_subset(0.5, &[a, b]).unwrap();
        assert_eq!(changed, vec![a]);
        assert_eq!(s.value(c).get(0, 0), 1.0);
        assert_eq!(s.grad(c).get(0, 0), 0.0);
    }
}
