//! Small differentiable core: tensors, 1-D (transposed) convolutions, dense
//! layers, RMSProp and finite-difference gradient checks.

mod gradcheck;
mod layers;
mod network;
mod params;
mod tensor;

pub use gradcheck::{
    gradient_check, relative_error, Differentiable, GradCheckConfig, GradCheckReport, LayerCheck,
    Model, REL_ERROR_FLOOR,
};
pub use layers::{
    conv1d_backward, conv1d_forward, deconv1d_backward, deconv1d_forward, dense_backward,
    dense_forward, layer_backward, layer_forward, lrelu, Activation, LayerCache, LayerGrads,
    LayerKind, LayerParams, LayerSpec, Padding, LRELU_SLOPE,
};
pub use network::{Network, Trace};
pub use params::{init_layer, rmsprop_step, Param, ParameterStore, RmsProp};
pub use tensor::Tensor;
