use std::any::Any;
use std::cell::{Cell, RefCell};
use std::sync::Arc;

use super::{Dd, Real, TapeError, Var};

/// Opaque per-evaluation state a block operation keeps for its backward pass.
pub type Saved = Box<dyn Any + Send + Sync>;

/// Handle to a dense parameter vector whose gradient is accumulated by block ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A vector-valued operation recorded as a single tape entry.
///
/// Outputs are fresh tape nodes; during the reverse sweep the op receives the
/// adjoints of all its outputs at once and returns the adjoints of its inputs.
/// An op may also own a dense parameter block (see [`ParamId`]) and deposit its
/// gradient there instead of recording one node per parameter.
pub trait BlockOp: Send + Sync {
    fn forward(&self, inputs: &[f64]) -> (Vec<f64>, Saved);

    fn backward(
        &self,
        inputs: &[f64],
        saved: &Saved,
        out_adj: &[f64],
        in_adj: &mut [f64],
        params: &mut ParamGrads,
    ) -> Result<(), TapeError>;

    fn param(&self) -> Option<ParamId> {
        None
    }

    /// Double-double evaluation. The default rounds the inputs to `f64`;
    /// ops that need full precision override it.
    fn forward_dd(&self, inputs: &[Dd]) -> Vec<Dd> {
        let x: Vec<f64> = inputs.iter().map(|d| d.value()).collect();
        self.forward(&x).0.into_iter().map(Dd::new).collect()
    }
}

/// Gradient buffers for every registered parameter block.
#[derive(Debug, Clone, Default)]
pub struct ParamGrads {
    blocks: Vec<Vec<f64>>,
}

impl ParamGrads {
    fn zeros(lens: &[usize]) -> Self {
        Self {
            blocks: lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.blocks[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.blocks[id.0]
    }

    fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

struct BlockRecord {
    op: Arc<dyn BlockOp>,
    /// Tape index per input, `None` for constants.
    inputs: Vec<Option<u32>>,
    input_values: Vec<f64>,
    first_output: u32,
    n_outputs: u32,
    saved: Saved,
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    blocks: Vec<BlockRecord>,
    param_lens: Vec<usize>,
}

/// Reverse-mode recording tape.
///
/// Nodes are stored in an arena in creation order, so every node only
/// references lower-indexed parents and a single descending sweep suffices.
pub struct Tape {
    inner: RefCell<Inner>,
    in_region: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for Tape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        let inner = Inner {
            offsets: vec![0],
            ..Default::default()
        };
        Self {
            inner: RefCell::new(inner),
            in_region: Cell::new(false),
        }
    }

    /// Empty tape sharing the parameter-block layout of `other`.
    pub fn new_like(other: &Tape) -> Self {
        let t = Self::new();
        t.inner.borrow_mut().param_lens = other.inner.borrow().param_lens.clone();
        t
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn register_params(&self, len: usize) -> ParamId {
        let mut inner = self.inner.borrow_mut();
        inner.param_lens.push(len);
        ParamId(inner.param_lens.len() - 1)
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(value, &[]);
        Var::on_tape(value, idx, self)
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub(crate) fn push(&self, value: f64, edges: &[(u32, f64)]) -> u32 {
        let mut inner = self.inner.borrow_mut();
        let idx = inner.values.len() as u32;
        inner.values.push(value);
        for &(p, d) in edges {
            inner.parents.push(p);
            inner.partials.push(d);
        }
        let end = inner.parents.len() as u32;
        inner.offsets.push(end);
        idx
    }

    pub(crate) fn push_block(&self, inputs: &[Var<'_>], op: Arc<dyn BlockOp>) -> Vec<Var<'_>> {
        let input_values: Vec<f64> = inputs.iter().map(|v| v.value()).collect();
        let (outputs, saved) = op.forward(&input_values);
        self.record_block(inputs, input_values, op, outputs, saved)
    }

    fn record_block<'t>(
        &'t self,
        inputs: &[Var<'_>],
        input_values: Vec<f64>,
        op: Arc<dyn BlockOp>,
        outputs: Vec<f64>,
        saved: Saved,
    ) -> Vec<Var<'t>> {
        let input_idx: Vec<Option<u32>> = inputs.iter().map(|v| v.node()).collect();
        let first = self.len() as u32;
        let out: Vec<Var<'t>> = outputs
            .iter()
            .map(|&y| Var::on_tape(y, self.push(y, &[]), self))
            .collect();
        self.inner.borrow_mut().blocks.push(BlockRecord {
            op,
            inputs: input_idx,
            input_values,
            first_output: first,
            n_outputs: outputs.len() as u32,
            saved,
        });
        out
    }

    pub(crate) fn owns(&self, v: &Var<'_>) -> bool {
        v.tape_ptr().is_some_and(|p| std::ptr::eq(p, self))
    }

    /// Reverse sweep seeded with `d output / d output = 1`.
    pub fn backward(&self, output: &Var<'_>) -> Result<Gradients, TapeError> {
        self.backward_seeded(&[(*output, 1.0)])
    }

    /// Reverse sweep with explicit output adjoints.
    pub fn backward_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Result<Gradients, TapeError> {
        let inner = self.inner.borrow();
        let n = inner.values.len();
        let mut adj = vec![0.0; n];
        let mut params = ParamGrads::zeros(&inner.param_lens);
        let mut top = 0usize;
        for (v, s) in seeds {
            if !self.owns(v) {
                return Err(TapeError::NotOnTape);
            }
            let i = v.node().expect("owned var has a node") as usize;
            adj[i] += s;
            top = top.max(i + 1);
        }
        if seeds.is_empty() {
            return Ok(Gradients { adjoints: adj, params });
        }

        let mut next_block = inner
            .blocks
            .iter()
            .rposition(|b| (b.first_output as usize) < top);
        for i in (0..top).rev() {
            let a = adj[i];
            if a != 0.0 {
                let (s, e) = (inner.offsets[i] as usize, inner.offsets[i + 1] as usize);
                for k in s..e {
                    adj[inner.parents[k] as usize] += a * inner.partials[k];
                }
            }
            while let Some(bi) = next_block {
                let b = &inner.blocks[bi];
                if b.first_output as usize != i {
                    break;
                }
                let lo = b.first_output as usize;
                let out_adj = &adj[lo..lo + b.n_outputs as usize];
                if out_adj.iter().any(|&x| x != 0.0) {
                    let mut in_adj = vec![0.0; b.inputs.len()];
                    b.op.backward(&b.input_values, &b.saved, out_adj, &mut in_adj, &mut params)?;
                    for (slot, g) in b.inputs.iter().zip(in_adj) {
                        if let Some(p) = slot {
                            adj[*p as usize] += g;
                        }
                    }
                }
                next_block = bi.checked_sub(1);
            }
        }
        Ok(Gradients { adjoints: adj, params })
    }

    /// Record `f(inputs)` as a single recomputed region.
    ///
    /// Only the region's outputs are kept on this tape; the intermediate nodes
    /// are rebuilt on a scratch tape when the reverse sweep reaches the region.
    /// Regions cannot be nested.
    pub fn checkpoint<'t, F>(&'t self, inputs: &[Var<'t>], f: F) -> Result<Vec<Var<'t>>, TapeError>
    where
        F: for<'a> Fn(&'a Tape, &[Var<'a>]) -> Result<Vec<Var<'a>>, RegionError>
            + Send
            + Sync
            + 'static,
    {
        if self.in_region.get() {
            return Err(TapeError::NestedRegion);
        }
        let input_values: Vec<f64> = inputs.iter().map(|v| v.value()).collect();
        let op = Arc::new(Recompute {
            f: Box::new(f),
            param_lens: self.inner.borrow().param_lens.clone(),
        });
        let outputs = op.run_values(&input_values)?;
        Ok(self.record_block(inputs, input_values, op, outputs, Box::new(())))
    }

    pub fn in_region(&self) -> bool {
        self.in_region.get()
    }
}

/// Error raised inside a checkpointed region.
pub type RegionError = Box<dyn std::error::Error + Send + Sync>;

type RegionFn =
    dyn for<'a> Fn(&'a Tape, &[Var<'a>]) -> Result<Vec<Var<'a>>, RegionError> + Send + Sync;

struct Recompute {
    f: Box<RegionFn>,
    param_lens: Vec<usize>,
}

impl Recompute {
    fn scratch(&self) -> Tape {
        let t = Tape::new();
        t.inner.borrow_mut().param_lens = self.param_lens.clone();
        t.in_region.set(true);
        t
    }

    fn run_values(&self, inputs: &[f64]) -> Result<Vec<f64>, TapeError> {
        let t = self.scratch();
        let xs = t.vars(inputs);
        let ys = (self.f)(&t, &xs).map_err(|e| TapeError::Region(e.to_string()))?;
        Ok(ys.iter().map(|y| y.value()).collect())
    }
}

impl BlockOp for Recompute {
    fn forward(&self, inputs: &[f64]) -> (Vec<f64>, Saved) {
        let ys = self.run_values(inputs).expect("checkpointed region failed");
        (ys, Box::new(()))
    }

    fn backward(
        &self,
        inputs: &[f64],
        _saved: &Saved,
        out_adj: &[f64],
        in_adj: &mut [f64],
        params: &mut ParamGrads,
    ) -> Result<(), TapeError> {
        let t = self.scratch();
        let xs = t.vars(inputs);
        let ys = (self.f)(&t, &xs).map_err(|e| TapeError::Region(e.to_string()))?;
        let seeds: Vec<(Var<'_>, f64)> = ys
            .iter()
            .zip(out_adj)
            .filter(|(y, _)| t.owns(y))
            .map(|(y, a)| (*y, *a))
            .collect();
        let g = t.backward_seeded(&seeds)?;
        for (slot, x) in in_adj.iter_mut().zip(&xs) {
            *slot += g.wrt(x);
        }
        params.accumulate(&g.params);
        Ok(())
    }
}

/// Result of a reverse sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
    params: ParamGrads,
}

impl Gradients {
    /// Adjoint of `v`; constants and nodes not reached get 0.
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        match v.node() {
            Some(i) => self.adjoints.get(i as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn param(&self, id: ParamId) -> &[f64] {
        self.params.get(id)
    }

    pub fn adjoints(&self) -> &[f64] {
        &self.adjoints
    }
}
