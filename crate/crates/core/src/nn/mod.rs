//! Hand-written actor/critic networks over flat `f64` parameter vectors,
//! with reverse-mode gradients and a decoupled-weight-decay Adam optimizer.

mod encoder;
mod layers;
mod optim;

pub use encoder::{Encoder, EncoderDims, Schedule, SeqTrace};
pub use layers::{Dense, Gru, GruStep, Mlp, MlpCache};
pub use optim::AdamW;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamTensor {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Named slices of a flat parameter vector, in allocation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub tensors: Vec<ParamTensor>,
}

impl ParamLayout {
    /// Reserve a tensor and return its offset.
    pub fn push(&mut self, name: &str, shape: &[usize]) -> usize {
        let offset = self.len();
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            offset,
            shape: shape.to_vec(),
        });
        offset
    }

    pub fn len(&self) -> usize {
        self.tensors.last().map_or(0, |t| t.offset + t.numel())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
