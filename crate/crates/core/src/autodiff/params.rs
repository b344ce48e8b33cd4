use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, Tensor};
use crate::Scalar;

/// Index of a trainable tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors plus named non-trainable buffers (running
/// statistics). Names are unique across both.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    buffer_names: Vec<String>,
    buffers: Vec<Tensor<S>>,
}

impl<S: Scalar> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            buffer_names: Vec::new(),
            buffers: Vec::new(),
        }
    }

    fn taken(&self, name: &str) -> bool {
        self.names.iter().chain(&self.buffer_names).any(|n| n == name)
    }

    pub fn add(&mut self, name: &str, t: Tensor<S>) -> Result<ParamId, AutodiffError> {
        if self.taken(name) {
            return Err(AutodiffError::InvalidArgument(format!("duplicate tensor name {name}")));
        }
        self.names.push(name.to_string());
        self.tensors.push(t);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn add_buffer(&mut self, name: &str, t: Tensor<S>) -> Result<usize, AutodiffError> {
        if self.taken(name) {
            return Err(AutodiffError::InvalidArgument(format!("duplicate tensor name {name}")));
        }
        self.buffer_names.push(name.to_string());
        self.buffers.push(t);
        Ok(self.buffers.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn buffer(&self, index: usize) -> &Tensor<S> {
        &self.buffers[index]
    }

    pub fn buffer_mut(&mut self, index: usize) -> &mut Tensor<S> {
        &mut self.buffers[index]
    }

    /// Every parameter then every buffer, in insertion order.
    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(&self.tensors)
            .chain(self.buffer_names.iter().map(String::as_str).zip(&self.buffers))
    }

    /// Overwrites the tensor called `name` (parameter or buffer); shapes must
    /// match.
    pub fn assign(&mut self, name: &str, t: Tensor<S>) -> Result<(), AutodiffError> {
        let slot = if let Some(i) = self.names.iter().position(|n| n == name) {
            &mut self.tensors[i]
        } else if let Some(i) = self.buffer_names.iter().position(|n| n == name) {
            &mut self.buffers[i]
        } else {
            return Err(AutodiffError::InvalidArgument(format!("unknown tensor {name}")));
        };
        if slot.shape() != t.shape() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "{name}: stored {:?}, given {:?}",
                slot.shape(),
                t.shape()
            )));
        }
        *slot = t;
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            buffer_names: self.buffer_names.clone(),
            buffers: self.buffers.iter().map(Tensor::cast).collect(),
        }
    }
}

/// Uniform in `±sqrt(6 / fan_in)`.
pub fn kaiming_uniform<S: Scalar>(shape: Vec<usize>, fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<S> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| S::of(rng.gen_range(-bound..bound))).collect();
    Tensor::new(shape, data).expect("length matches shape")
}
