//! Dense tensors with reverse-mode differentiation.

mod gradcheck;
mod manifest;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_check, relative_error, Evaluation, GradCheckReport};
pub use manifest::{Manifest, NamedTensor, MANIFEST_FORMAT, MANIFEST_VERSION};
pub use tape::{Gradients, OpKind, Tape, Var};
pub(crate) use tape::bernoulli_kl;
pub use tensor::Tensor;
