use super::Tensor;

/// Accounting bucket for a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamCategory {
    /// Sublayer weight matrix.
    Weight,
    /// Additive bias or layer-norm gain/shift.
    Bias,
    /// Token/position embeddings and an untied output projection.
    Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub category: ParamCategory,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

/// Trainable parameters in declaration order, with gradient buffers.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, category: ParamCategory, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.numel()];
        self.params.push(Param {
            name: name.into(),
            category,
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn count(&self, include: impl Fn(ParamCategory) -> bool) -> usize {
        self.params
            .iter()
            .filter(|p| include(p.category))
            .map(|p| p.value.numel())
            .sum()
    }
}
