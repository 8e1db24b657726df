//! Private adapter inference: operators, the adapter and pipeline forward
//! passes, their plaintext oracles, and weight storage.

mod backend;
mod config;
pub mod infer;
pub mod io;
pub mod ops;
mod params;
pub mod rsqrt;

pub use backend::{Backend, FixedPlain, Layout, RealPlain, RealTensor};
pub use config::AdapterConfig;
pub use infer::{argmax, private_inference_party, run_private_inference, share_params, InferenceRun};
pub use ops::{
    adapter_forward_f64, adapter_forward_plain, adapter_forward_private, layernorm_private, linatten_private,
    linear_private, pipeline_forward_f64, pipeline_forward_plain, pipeline_forward_private, relu_private,
    to_real, ADAPTER_ROUNDS, TAIL_ROUNDS,
};
pub use params::{random_features, AdapterParams, PipelineParams, ADAPTER_PARAM_NAMES};
