//! Named parameter sets and the Adam optimizer.
//!
//! Parameters are keyed by string paths (e.g. `layer0.g_attn`) and iterated
//! in sorted-name order everywhere, so updates and serialization are
//! deterministic.

use super::{Graph, Tensor, Value};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// A single named trainable tensor.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named parameters. Names are unique by construction.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    map: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Insert a tensor as a trainable parameter. Panics on duplicate names —
    /// parameter layouts are fixed at init time, so a duplicate is a bug.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        let prev = self.map.insert(name.clone(), tensor.with_requires_grad());
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }

    /// Iterate in sorted-name order.
    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    /// Bit-exact equality of every tensor in both sets.
    pub fn bitwise_eq(&self, other: &ParamSet) -> bool {
        self.map.len() == other.map.len()
            && self
                .map
                .iter()
                .zip(other.map.iter())
                .all(|((an, at), (bn, bt))| an == bn && at.bitwise_eq(bt))
    }
}

/// Graph handles for an inserted parameter set.
pub struct Leaves {
    map: BTreeMap<String, Value>,
}

impl Leaves {
    /// Insert every parameter of `set` into `g`. When `trainable` is false
    /// the tensors are inserted as constants: gradients flow *through* the
    /// ops that consume them but are never accumulated for the weights
    /// themselves.
    pub fn insert(g: &mut Graph, set: &ParamSet, trainable: bool) -> Leaves {
        let mut map = BTreeMap::new();
        for (name, tensor) in set.iter() {
            let v = if trainable {
                g.leaf(tensor.clone())
            } else {
                let mut t = tensor.clone();
                t.clear_grad();
                g.constant(t)
            };
            map.insert(name.clone(), v);
        }
        Leaves { map }
    }

    /// Handle for a parameter; panics on unknown names (layout bugs).
    pub fn get(&self, name: &str) -> Value {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    /// Pull accumulated gradients out of the graph after `backward`,
    /// keyed like the originating parameter set. Parameters that received
    /// no flow get explicit zero buffers.
    pub fn collect_grads(&self, g: &Graph) -> GradMap {
        let mut out = BTreeMap::new();
        for (name, &v) in &self.map {
            let grad = match g.grad(v) {
                Some(s) => s.to_vec(),
                None => vec![0.0; g.value(v).numel()],
            };
            out.insert(name.clone(), grad);
        }
        out
    }
}

/// Gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Vec<f64>>;

/// Sum `src` into `dst`, creating missing entries.
pub fn grad_accumulate(dst: &mut GradMap, src: &GradMap) {
    for (name, g) in src {
        match dst.get_mut(name) {
            Some(acc) => {
                for (a, &b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => {
                dst.insert(name.clone(), g.clone());
            }
        }
    }
}

pub fn grad_scale(grads: &mut GradMap, k: f64) {
    for g in grads.values_mut() {
        for v in g.iter_mut() {
            *v *= k;
        }
    }
}

/// Adam state: first/second moment buffers per parameter plus the shared
/// step counter and hyperparameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

/// One Adam update with bias correction over every parameter in `params`.
/// Every parameter must have a gradient in `grads` of matching length.
pub fn adam_step(params: &mut ParamSet, grads: &GradMap, state: &mut AdamState) -> Result<()> {
    // Validate up front so a partial update can never happen.
    for (name, tensor) in params.iter() {
        match grads.get(name) {
            None => return Err(Error::MissingGrad(name.clone())),
            Some(g) if g.len() != tensor.numel() => {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: tensor.shape().to_vec(),
                    rhs: vec![g.len()],
                })
            }
            _ => {}
        }
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);
    for (name, tensor) in params.iter_mut() {
        let g = &grads[name];
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| vec![0.0; g.len()]);
        let data = tensor.data_mut();
        for i in 0..g.len() {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            data[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(())
}
