use std::sync::atomic::{AtomicU64, Ordering};

use super::{Scalar, Tensor};

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

/// Identity used to bind a parameter to a single leaf per graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(u64);

impl ParamId {
    fn fresh() -> Self {
        ParamId(NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// A named trainable tensor. Frozen parameters enter graphs as constants
/// and are skipped by optimizers.
#[derive(Debug)]
pub struct Param<S> {
    id: ParamId,
    name: String,
    pub value: Tensor<S>,
    pub frozen: bool,
}

impl<S: Scalar> Param<S> {
    pub fn new(name: impl Into<String>, value: Tensor<S>) -> Self {
        Self {
            id: ParamId::fresh(),
            name: name.into(),
            value,
            frozen: false,
        }
    }

    pub fn id(&self) -> ParamId {
        self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

// A clone is a distinct parameter: it must not alias the original's leaf
// when both appear in one graph.
impl<S: Clone> Clone for Param<S> {
    fn clone(&self) -> Self {
        Self {
            id: ParamId::fresh(),
            name: self.name.clone(),
            value: self.value.clone(),
            frozen: self.frozen,
        }
    }
}

/// Anything owning an ordered list of parameters.
pub trait Parameterized<S: Scalar> {
    fn params(&self) -> Vec<&Param<S>>;
    fn params_mut(&mut self) -> Vec<&mut Param<S>>;

    fn num_parameters(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Copies of every parameter value, in declared order.
    fn snapshot(&self) -> Vec<Tensor<S>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    fn restore(&mut self, values: &[Tensor<S>]) {
        let mut params = self.params_mut();
        assert_eq!(
            params.len(),
            values.len(),
            "contract violation: restoring {} values into {} parameters",
            values.len(),
            params.len()
        );
        for (p, v) in params.iter_mut().zip(values) {
            assert_eq!(p.value.shape(), v.shape(), "contract violation: restore shape of {}", p.name());
            p.value = v.clone();
        }
    }
}
