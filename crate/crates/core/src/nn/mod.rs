//! Convolutional model zoo: layer graphs, kernels, parameter storage and
//! checkpoints.

mod alloc;
mod checkpoint;
mod families;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use checkpoint::{load_model, read_checkpoint, write_checkpoint, CheckpointMeta};
pub use families::{build_model, DEFAULT_DROPOUT};
pub use graph::{Family, ForwardMode, ForwardPass, NetworkDescription, Node, Op, Preset};
pub use params::{parameter_count, ParamId, ParamTensor, ParameterSet};
pub use tensor::Tensor;
