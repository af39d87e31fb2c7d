//! Neuron attribution for feed-forward networks.
//!
//! The central method is Integrated Gradients taken on a hidden layer's
//! activations, which gives each neuron's conductance at the cost of
//! ordinary Integrated Gradients. Alongside it are a brute-force
//! conductance oracle, DeepLIFT (Rescale and RevealCancel), gradient times
//! activation difference, and an ablation harness that checks how well the
//! scores predict the effect of clamping neurons to their reference values.

pub mod ablation;
pub mod attribution;
pub mod data;
pub mod error;
pub mod net;
pub mod target;
pub mod tensor;
pub mod timing;
pub mod verify;

pub use ablation::{run_ablation_study, AblationReport, AblationSpec};
pub use attribution::{
    AttributionResult, CostMeta, DeepLiftRules, Method, MethodSpec, PathSpec, Rule,
};
pub use data::LabeledDataset;
pub use error::{Error, Result};
pub use net::{Layer, LayerKind, Network};
pub use target::{LogitFunctional, TargetSpec};
pub use tensor::Tensor;
