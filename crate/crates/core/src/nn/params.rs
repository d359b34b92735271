use std::collections::HashMap;

use crate::error::{Result, SeldError};
use crate::tensor::{BatchStats, Tape, Tensor, Var};

/// Index of a tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Buffers (batch-norm running statistics) are stored but not trained.
    pub trainable: bool,
}

/// Named model tensors in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: String, value: Tensor, trainable: bool) -> ParamId {
        assert!(!self.by_name.contains_key(&name), "duplicate parameter name {name}");
        self.by_name.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry {
            name,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.insert(name.into(), value, true)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.insert(name.into(), value, false)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let entry = &mut self.entries[id.0];
        if entry.value.shape() != value.shape() {
            return Err(SeldError::Shape {
                op: "ParamStore::set",
                detail: format!("{}: {:?} vs {:?}", entry.name, entry.value.shape(), value.shape()),
            });
        }
        entry.value = value;
        Ok(())
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.entries[id.0].trainable)
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.numel()).sum()
    }

    /// Replaces every tensor with the same-named tensor of `other`.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(SeldError::Format {
                what: "checkpoint",
                detail: format!("{} tensors, model has {}", other.len(), self.len()),
            });
        }
        for entry in &mut self.entries {
            let Some(src) = other.find(&entry.name) else {
                return Err(SeldError::Format {
                    what: "checkpoint",
                    detail: format!("missing tensor {}", entry.name),
                });
            };
            let src = other.get(src);
            if src.shape() != entry.value.shape() {
                return Err(SeldError::Format {
                    what: "checkpoint",
                    detail: format!("{} has shape {:?}, model expects {:?}", entry.name, src.shape(), entry.value.shape()),
                });
            }
            entry.value = src.clone();
        }
        Ok(())
    }
}

/// Whether batch normalization uses batch or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running-statistics update produced by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BnUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats,
}

/// One forward pass: lazily binds store tensors onto a tape.
pub struct Forward<'t, 's> {
    tape: &'t mut Tape,
    store: &'s ParamStore,
    bound: Vec<Option<Var>>,
    mode: Mode,
    track_grads: bool,
    bn_updates: Vec<BnUpdate>,
}

impl<'t, 's> Forward<'t, 's> {
    /// Trainable tensors are bound as gradient-tracking leaves when
    /// `track_grads` is set, as constants otherwise.
    pub fn new(tape: &'t mut Tape, store: &'s ParamStore, mode: Mode, track_grads: bool) -> Self {
        Self {
            tape,
            store,
            bound: vec![None; store.len()],
            mode,
            track_grads,
            bn_updates: Vec::new(),
        }
    }

    /// Uses caller-provided vars for the trainable tensors, in
    /// [`ParamStore::trainable_ids`] order.
    pub fn with_bindings(tape: &'t mut Tape, store: &'s ParamStore, mode: Mode, vars: &[Var]) -> Result<Self> {
        let mut fw = Self::new(tape, store, mode, true);
        let ids: Vec<ParamId> = store.trainable_ids().collect();
        if ids.len() != vars.len() {
            return Err(SeldError::InvalidArgument(format!(
                "{} bindings for {} trainable tensors",
                vars.len(),
                ids.len()
            )));
        }
        for (id, v) in ids.into_iter().zip(vars) {
            fw.bound[id.0] = Some(*v);
        }
        Ok(fw)
    }

    pub fn tape(&mut self) -> &mut Tape {
        self.tape
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let entry = &self.store.entries[id.0];
        let v = self
            .tape
            .leaf(entry.value.clone(), entry.trainable && self.track_grads);
        self.bound[id.0] = Some(v);
        v
    }

    pub(crate) fn record_bn_update(&mut self, update: BnUpdate) {
        self.bn_updates.push(update);
    }

    pub fn finish(self) -> ForwardState {
        ForwardState {
            bound: self.bound,
            bn_updates: self.bn_updates,
        }
    }
}

/// What a finished [`Forward`] leaves behind for the optimizer.
pub struct ForwardState {
    bound: Vec<Option<Var>>,
    pub bn_updates: Vec<BnUpdate>,
}

impl ForwardState {
    /// Gradients for every store entry (after `tape.backward`); unused or
    /// frozen entries get `None`.
    pub fn grads(&self, tape: &Tape) -> Vec<Option<Tensor>> {
        self.bound
            .iter()
            .map(|v| v.and_then(|v| tape.grad(v)))
            .collect()
    }
}

/// Folds batch statistics into running statistics:
/// `running = (1 - momentum) * running + momentum * batch`.
pub fn apply_bn_updates(store: &mut ParamStore, updates: &[BnUpdate], momentum: f64) -> Result<()> {
    for u in updates {
        for (id, batch) in [(u.mean, &u.stats.mean), (u.var, &u.stats.var_unbiased)] {
            let cur = store.get(id);
            let next: Vec<f64> = cur
                .data()
                .iter()
                .zip(batch)
                .map(|(r, b)| (1.0 - momentum) * r + momentum * b)
                .collect();
            let t = Tensor::new(cur.shape().to_vec(), next)?;
            store.set(id, t)?;
        }
    }
    Ok(())
}
