//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Something with parameters whose gradients can be verified.
pub trait Differentiable {
    fn parameters(&self) -> &ParameterStore;
    fn parameters_mut(&mut self) -> &mut ParameterStore;
    fn evaluate(&self, x: &Tensor) -> Result<Tensor>;
    /// Accumulates the gradient of `<grad_out, evaluate(x)>` into the
    /// parameter store and returns its gradient with respect to `x`.
    fn backpropagate(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor>;
}

/// A network bundled with its parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub network: Network,
    pub store: ParameterStore,
}

impl Differentiable for Model {
    fn parameters(&self) -> &ParameterStore {
        &self.store
    }

    fn parameters_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    fn evaluate(&self, x: &Tensor) -> Result<Tensor> {
        self.network.forward(&self.store, x)
    }

    fn backpropagate(&mut self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let (_, trace) = self.network.forward_traced(&self.store, x)?;
        self.network.backward(&mut self.store, &trace, grad_out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub tolerance: f64,
    /// Seed for the random projection of the output.
    pub seed: u64,
    pub check_input: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            tolerance: 1e-4,
            seed: 7,
            check_input: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    /// Parameter group (name up to the last `.`), or `input`.
    pub layer: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub layers: Vec<LayerCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.layers.iter().all(|l| l.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.layers.iter().fold(0.0, |m, l| m.max(l.max_rel_error))
    }

    pub fn failures(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| !l.passed)
            .map(|l| l.layer.as_str())
            .collect()
    }
}

/// Gradients smaller than this are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn layer_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(head, _)| head)
}

fn projected_loss<D: Differentiable>(model: &D, x: &Tensor, r: &Tensor) -> Result<f64> {
    let y = model.evaluate(x)?;
    if y.shape() != r.shape() {
        return Err(Error::Shape(
            "network output shape changed during check".into(),
        ));
    }
    let loss: f64 = y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
    if !loss.is_finite() {
        return Err(Error::NonFinite("gradient-check loss".into()));
    }
    Ok(loss)
}

/// Compares analytic gradients of `L = <r, f(x)>` (random `r`) with central
/// differences for every parameter and, optionally, every input entry.
pub fn gradient_check<D: Differentiable>(
    model: &mut D,
    input: &Tensor,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let y = model.evaluate(input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let r = Tensor::from_fn(y.shape(), |_| rng.random_range(-1.0..1.0));

    model.parameters_mut().zero_grads();
    let grad_x = model.backpropagate(input, &r)?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .parameters()
        .iter()
        .map(|(n, p)| (n.to_string(), p.grad.data().to_vec()))
        .collect();
    model.parameters_mut().zero_grads();

    let mut groups: Vec<LayerCheck> = Vec::new();
    let mut record = |layer: &str, err: f64| {
        if groups.last().map(|g| g.layer.as_str()) != Some(layer) {
            groups.push(LayerCheck {
                layer: layer.to_string(),
                max_rel_error: 0.0,
                checked: 0,
                passed: true,
            });
        }
        let g = groups.last_mut().expect("group just pushed");
        g.max_rel_error = g.max_rel_error.max(err);
        g.checked += 1;
        g.passed = g.max_rel_error < cfg.tolerance;
    };

    let h = cfg.epsilon;
    for (name, grads) in &analytic {
        for (i, &a) in grads.iter().enumerate() {
            let orig = model.parameters().value(name)?.data()[i];
            model.parameters_mut().get_mut(name)?.value.data_mut()[i] = orig + h;
            let up = projected_loss(model, input, &r)?;
            model.parameters_mut().get_mut(name)?.value.data_mut()[i] = orig - h;
            let down = projected_loss(model, input, &r)?;
            model.parameters_mut().get_mut(name)?.value.data_mut()[i] = orig;
            record(layer_of(name), relative_error(a, (up - down) / (2.0 * h)));
        }
    }
    if cfg.check_input {
        let mut x = input.clone();
        for i in 0..x.len() {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + h;
            let up = projected_loss(model, &x, &r)?;
            x.data_mut()[i] = orig - h;
            let down = projected_loss(model, &x, &r)?;
            x.data_mut()[i] = orig;
            record(
                "input",
                relative_error(grad_x.data()[i], (up - down) / (2.0 * h)),
            );
        }
    }
    Ok(GradCheckReport {
        layers: groups,
        tolerance: cfg.tolerance,
    })
}
