use rand::Rng;

use super::layers::{layer_backward, layer_forward, LayerCache, LayerKind, LayerParams, LayerSpec};
use super::params::{init_layer, ParameterStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A feed-forward stack of layers whose parameters live in a
/// [`ParameterStore`] under `{prefix}{index}.w` / `{prefix}{index}.b`.
///
/// Inputs are batched: `[B, F]` or `[B, C, L]`. A convolution fed a flat
/// `[B, F]` tensor reshapes it to `[B, C_in, F / C_in]`; a dense layer fed
/// `[B, C, L]` flattens it.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    prefix: String,
    layers: Vec<LayerSpec>,
}

/// Forward caches for one [`Network::forward_traced`] call.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    caches: Vec<LayerCache>,
    input_shapes: Vec<Vec<usize>>,
}

impl Trace {
    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }
}

impl Network {
    pub fn new(prefix: &str, layers: Vec<LayerSpec>) -> Result<Self> {
        for l in &layers {
            l.validate()?;
        }
        Ok(Self {
            prefix: prefix.to_string(),
            layers,
        })
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weight_name(&self, i: usize) -> String {
        format!("{}{i}.w", self.prefix)
    }

    pub fn bias_name(&self, i: usize) -> String {
        format!("{}{i}.b", self.prefix)
    }

    pub fn init_params(&self, store: &mut ParameterStore, rng: &mut impl Rng) -> Result<()> {
        for (i, spec) in self.layers.iter().enumerate() {
            let (w, b) = init_layer(spec, rng);
            store.insert(&self.weight_name(i), w)?;
            store.insert(&self.bias_name(i), b)?;
        }
        Ok(())
    }

    fn adapt(x: Tensor, spec: &LayerSpec) -> Result<Tensor> {
        let s = x.shape().to_vec();
        match (spec.kind, s.as_slice()) {
            (LayerKind::Dense, [b, c, l]) => x.reshape(&[*b, c * l]),
            (LayerKind::Conv1d | LayerKind::Deconv1d, [b, f]) => {
                if f % spec.in_channels != 0 {
                    return Err(Error::Shape(format!(
                        "{f} features cannot feed {} channels",
                        spec.in_channels
                    )));
                }
                x.reshape(&[*b, spec.in_channels, f / spec.in_channels])
            }
            _ => Ok(x),
        }
    }

    fn check_input(x: &Tensor) -> Result<()> {
        if !(2..=3).contains(&x.ndim()) {
            return Err(Error::Shape(format!(
                "network input must be [B, F] or [B, C, L], got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    fn params<'a>(&self, store: &'a ParameterStore, i: usize) -> Result<LayerParams<'a>> {
        Ok(LayerParams {
            weight: store.value(&self.weight_name(i))?,
            bias: store.value(&self.bias_name(i))?,
        })
    }

    pub fn forward(&self, store: &ParameterStore, x: &Tensor) -> Result<Tensor> {
        Self::check_input(x)?;
        let mut h = x.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            h = Self::adapt(h, spec)?;
            h = layer_forward(&h, spec, &self.params(store, i)?)?.0;
        }
        Ok(h)
    }

    pub fn forward_traced(&self, store: &ParameterStore, x: &Tensor) -> Result<(Tensor, Trace)> {
        Self::check_input(x)?;
        let mut trace = Trace::default();
        let mut h = x.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            trace.input_shapes.push(h.shape().to_vec());
            h = Self::adapt(h, spec)?;
            let (out, cache) = layer_forward(&h, spec, &self.params(store, i)?)?;
            trace.caches.push(cache);
            h = out;
        }
        Ok((h, trace))
    }

    /// Accumulates parameter gradients into `store` and returns the gradient
    /// with respect to the network input.
    pub fn backward(
        &self,
        store: &mut ParameterStore,
        trace: &Trace,
        grad_out: &Tensor,
    ) -> Result<Tensor> {
        if trace.caches.len() != self.layers.len() {
            return Err(Error::MissingCache);
        }
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            let grads = layer_backward(&g, Some(&trace.caches[i]), &self.params(store, i)?)?;
            store.accumulate_grad(&self.weight_name(i), &grads.weight)?;
            store.accumulate_grad(&self.bias_name(i), &grads.bias)?;
            g = grads.input.reshape(&trace.input_shapes[i])?;
        }
        Ok(g)
    }

    /// Output shape for a given input shape, without computing anything.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut s = input.to_vec();
        for spec in &self.layers {
            s = match (spec.kind, s.as_slice()) {
                (LayerKind::Dense, [b, ..]) => {
                    let f: usize = s[1..].iter().product();
                    if f != spec.in_channels {
                        return Err(Error::Shape(format!(
                            "dense layer expects {} inputs, got {f}",
                            spec.in_channels
                        )));
                    }
                    vec![*b, spec.out_channels]
                }
                (_, [b, f]) => {
                    if f % spec.in_channels != 0 {
                        return Err(Error::Shape(format!(
                            "{f} features cannot feed {} channels",
                            spec.in_channels
                        )));
                    }
                    vec![
                        *b,
                        spec.out_channels,
                        spec.output_len(f / spec.in_channels)?,
                    ]
                }
                (_, [b, c, l]) => {
                    if *c != spec.in_channels {
                        return Err(Error::Shape(format!(
                            "expected {} channels, got {c}",
                            spec.in_channels
                        )));
                    }
                    vec![*b, spec.out_channels, spec.output_len(*l)?]
                }
                _ => return Err(Error::Shape(format!("unsupported shape {s:?}"))),
            };
        }
        Ok(s)
    }
}
