use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// Batch-norm running statistics are stored here too, with `trainable = false`.
    pub trainable: bool,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// Named tensors of a network, in construction order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet<T> {
    pub tensors: Vec<ParamTensor<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamId(pub usize);

impl<T: Scalar> ParameterSet<T> {
    pub fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<T>, trainable: bool) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(ParamTensor {
            name,
            shape,
            data,
            trainable,
        });
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn data(&self, id: ParamId) -> &[T] {
        &self.tensors[id.0].data
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(ParamTensor::numel)
            .sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                    trainable: t.trainable,
                })
                .collect(),
        }
    }

    pub fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape(format!(
                "{} tensors vs {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.shape != b.shape || a.data.len() != b.data.len() {
                return Err(Error::Shape(format!(
                    "tensor {}: {:?} vs {}: {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossy())).collect(),
                    trainable: t.trainable,
                })
                .collect(),
        }
    }
}

/// Sum of trainable tensor sizes.
pub fn parameter_count<T: Scalar>(params: &ParameterSet<T>) -> usize {
    params.parameter_count()
}
