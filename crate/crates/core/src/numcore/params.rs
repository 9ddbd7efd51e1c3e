//! Named trainable tensors and their gradient buffers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Owns every trainable tensor of a model, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor2>,
    trainable: Vec<bool>,
    by_name: HashMap<String, ParamId>,
}

/// FNV-1a, used to derive a per-parameter init stream from its name.
pub(crate) fn name_hash(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded generator for one named tensor. Independent of registration order.
pub fn init_rng(seed: u64, name: &str) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed ^ name_hash(name))
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.trainable.push(true);
        id
    }

    /// Glorot-uniform init: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    pub fn insert_glorot(&mut self, name: &str, rows: usize, cols: usize, seed: u64) -> ParamId {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        self.insert_uniform(name, rows, cols, bound, seed)
    }

    pub fn insert_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        bound: f64,
        seed: u64,
    ) -> ParamId {
        let mut rng = init_rng(seed, name);
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        let t = Tensor2::from_vec(rows, cols, data).expect("sized");
        self.insert(name, t)
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.insert(name, Tensor2::zeros(rows, cols))
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

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor2 {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor2> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.trainable[id.0] = trainable;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor2)> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (ParamId(i), self.names[i].as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor2::len).sum()
    }

    /// Replaces all values from `named`, which must list exactly the same
    /// names and shapes. Every discrepancy is reported at once.
    pub fn load_named(&mut self, named: Vec<(String, Tensor2)>) -> Result<()> {
        let mut problems = Vec::new();
        let mut seen = vec![false; self.values.len()];
        let mut incoming = Vec::with_capacity(named.len());
        for (name, t) in named {
            match self.id(&name) {
                None => problems.push(format!(
                    "  unexpected tensor {name} [{}x{}]",
                    t.rows(),
                    t.cols()
                )),
                Some(id) => {
                    seen[id.0] = true;
                    let want = self.values[id.0].shape();
                    if want != t.shape() {
                        problems.push(format!(
                            "  {name}: expected [{}x{}], found [{}x{}]",
                            want.0,
                            want.1,
                            t.rows(),
                            t.cols()
                        ));
                    } else if !t.is_finite() {
                        problems.push(format!("  {name}: contains non-finite values"));
                    } else {
                        incoming.push((id, t));
                    }
                }
            }
        }
        for (i, s) in seen.iter().enumerate() {
            if !s {
                let (r, c) = self.values[i].shape();
                problems.push(format!("  missing tensor {} [{r}x{c}]", self.names[i]));
            }
        }
        if !problems.is_empty() {
            return Err(Error::CheckpointMismatch(problems.join("\n")));
        }
        for (id, t) in incoming {
            self.values[id.0] = t;
        }
        Ok(())
    }
}

/// Gradient accumulator aligned with a [`ParamStore`]; slots are allocated
/// on first write.
#[derive(Clone, Debug)]
pub struct Grads {
    slots: Vec<Option<Tensor2>>,
}

impl Grads {
    pub fn for_store(store: &ParamStore) -> Self {
        Self {
            slots: vec![None; store.len()],
        }
    }

    pub(crate) fn slot_mut(&mut self, id: ParamId, shape: (usize, usize)) -> &mut Tensor2 {
        self.slots[id.0].get_or_insert_with(|| Tensor2::zeros(shape.0, shape.1))
    }

    pub fn accumulate(&mut self, id: ParamId, grad: &Tensor2) {
        self.slot_mut(id, grad.shape()).add_assign(grad);
    }

    /// `None` means the parameter was never reached, i.e. its gradient is zero.
    pub fn get(&self, id: ParamId) -> Option<&Tensor2> {
        self.slots[id.0].as_ref()
    }

    /// Value of one scalar gradient entry, zero for untouched slots.
    pub fn entry(&self, id: ParamId, flat: usize) -> f64 {
        self.slots[id.0].as_ref().map_or(0.0, |t| t.data()[flat])
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.slots.iter_mut().flatten() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }

    pub fn clear(&mut self) {
        for s in &mut self.slots {
            *s = None;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slots.iter().flatten().all(Tensor2::is_finite)
    }
}
