use std::collections::BTreeMap;

use rand::Rng;

use super::layers::{Activation, LayerSpec, LRELU_SLOPE};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::signal_io::FeatureArchive;

/// A trainable array with its gradient and RMSProp accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub accumulator: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Self {
            grad: Tensor::zeros(value.shape()),
            accumulator: Tensor::zeros(value.shape()),
            value,
        }
    }
}

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, Param>,
}

const ACC_SUFFIX: &str = "#acc";

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Invalid(format!("duplicate parameter '{name}'")));
        }
        self.params.insert(name.to_string(), Param::new(value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Invalid(format!("unknown parameter '{name}'")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn accumulate_grad(&mut self, name: &str, grad: &Tensor) -> Result<()> {
        self.get_mut(name)?.grad.add_assign(grad)
    }

    /// Clamps every value into `[-c, c]`.
    pub fn clip_values(&mut self, c: f64) {
        for p in self.params.values_mut() {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = v.clamp(-c, c));
        }
    }

    pub fn max_abs_value(&self) -> f64 {
        self.params
            .values()
            .fold(0.0, |m, p| m.max(p.value.max_abs()))
    }

    /// Stores values as `{prefix}{name}` and accumulators as
    /// `{prefix}{name}#acc`.
    pub fn write_to_archive(&self, archive: &mut FeatureArchive, prefix: &str) -> Result<()> {
        for (name, p) in &self.params {
            archive.insert(
                &format!("{prefix}{name}"),
                p.value.shape().to_vec(),
                p.value.data(),
            )?;
            archive.insert(
                &format!("{prefix}{name}{ACC_SUFFIX}"),
                p.accumulator.shape().to_vec(),
                p.accumulator.data(),
            )?;
        }
        Ok(())
    }

    pub fn read_from_archive(archive: &FeatureArchive, prefix: &str) -> Result<Self> {
        let mut store = Self::new();
        for name in archive.array_names() {
            let Some(short) = name.strip_prefix(prefix) else {
                continue;
            };
            if short.ends_with(ACC_SUFFIX) {
                continue;
            }
            let arr = archive.require(name)?;
            let value = Tensor::new(arr.shape.clone(), arr.to_f64())?;
            let acc_arr = archive.require(&format!("{name}{ACC_SUFFIX}"))?;
            let acc = Tensor::new(acc_arr.shape.clone(), acc_arr.to_f64())?;
            if acc.shape() != value.shape() {
                return Err(Error::Corrupt(format!(
                    "accumulator shape differs for '{name}'"
                )));
            }
            let mut p = Param::new(value);
            p.accumulator = acc;
            store.params.insert(short.to_string(), p);
        }
        Ok(store)
    }
}

/// Scaled-uniform weights with variance `gain^2 / fan_in`, zero bias.
pub fn init_layer(spec: &LayerSpec, rng: &mut impl Rng) -> (Tensor, Tensor) {
    let (fan_in, _) = spec.fans();
    let gain2 = match spec.activation {
        Activation::LRelu => 2.0 / (1.0 + LRELU_SLOPE * LRELU_SLOPE),
        Activation::Linear | Activation::Sigmoid => 1.0,
    };
    let limit = (3.0 * gain2 / fan_in as f64).sqrt();
    let w = Tensor::from_fn(&spec.weight_shape(), |_| rng.random_range(-limit..limit));
    (w, Tensor::zeros(&spec.bias_shape()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl RmsProp {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            decay: 0.9,
            eps: 1e-8,
        }
    }
}

/// `acc <- decay * acc + (1 - decay) * g^2; value <- value - lr * g / sqrt(acc + eps)`,
/// then zeroes the gradients.
pub fn rmsprop_step(store: &mut ParameterStore, opt: &RmsProp) -> Result<()> {
    for (name, p) in store.params.iter_mut() {
        if p.grad.shape() != p.value.shape() || p.accumulator.shape() != p.value.shape() {
            return Err(Error::Shape(format!(
                "parameter '{name}': value {:?}, gradient {:?}, accumulator {:?}",
                p.value.shape(),
                p.grad.shape(),
                p.accumulator.shape()
            )));
        }
    }
    for p in store.params.values_mut() {
        let grads = p.grad.data().to_vec();
        for ((v, a), g) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(p.accumulator.data_mut().iter_mut())
            .zip(&grads)
        {
            *a = opt.decay * *a + (1.0 - opt.decay) * g * g;
            *v -= opt.lr * g / (*a + opt.eps).sqrt();
        }
        p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(g: f64) -> ParameterStore {
        let mut s = ParameterStore::new();
        s.insert("w", Tensor::zeros(&[2, 3])).unwrap();
        s.get_mut("w")
            .unwrap()
            .grad
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = g);
        s
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = store_with(1.0);
        rmsprop_step(&mut s, &RmsProp::new(1e-5)).unwrap();
        let expected = -1e-5 / (0.1f64 + 1e-8).sqrt();
        assert!(s
            .value("w")
            .unwrap()
            .data()
            .iter()
            .all(|v| (v - expected).abs() < 1e-15));
        assert!((expected + 3.1623e-5).abs() < 1e-9);
        assert_eq!(s.get("w").unwrap().grad.max_abs(), 0.0);
    }

    #[test]
    fn zero_gradient_leaves_values() {
        let mut s = store_with(0.0);
        s.get_mut("w").unwrap().value.data_mut()[0] = 0.25;
        let before = s.value("w").unwrap().clone();
        rmsprop_step(&mut s, &RmsProp::new(1e-3)).unwrap();
        assert_eq!(s.value("w").unwrap(), &before);
    }

    #[test]
    fn two_steps_follow_scalar_recurrence() {
        let (g, lr) = (0.7, 1e-3);
        let mut s = store_with(g);
        rmsprop_step(&mut s, &RmsProp::new(lr)).unwrap();
        s.get_mut("w")
            .unwrap()
            .grad
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = g);
        rmsprop_step(&mut s, &RmsProp::new(lr)).unwrap();
        let (mut acc, mut v) = (0.0f64, 0.0f64);
        for _ in 0..2 {
            acc = 0.9 * acc + 0.1 * g * g;
            v -= lr * g / (acc + 1e-8).sqrt();
        }
        assert!(s
            .value("w")
            .unwrap()
            .data()
            .iter()
            .all(|x| (x - v).abs() < 1e-12));
    }

    #[test]
    fn shape_drift_is_rejected() {
        let mut s = store_with(1.0);
        s.get_mut("w").unwrap().grad = Tensor::zeros(&[3, 2]);
        assert!(matches!(
            rmsprop_step(&mut s, &RmsProp::new(1e-3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn clip_and_archive_round_trip() {
        let mut s = ParameterStore::new();
        s.insert(
            "a.w",
            Tensor::new(vec![3], vec![0.5, -0.005, -2.0]).unwrap(),
        )
        .unwrap();
        s.clip_values(0.01);
        assert_eq!(s.value("a.w").unwrap().data(), &[0.01, -0.005, -0.01]);
        assert!(s.max_abs_value() <= 0.01);
        let mut arch = FeatureArchive::new();
        s.write_to_archive(&mut arch, "disc/").unwrap();
        let back = ParameterStore::read_from_archive(&arch, "disc/").unwrap();
        for (name, p) in back.iter() {
            let orig = s.get(name).unwrap();
            for (a, b) in p.value.data().iter().zip(orig.value.data()) {
                assert_eq!(*a, *b as f32 as f64);
            }
        }
        assert!(ParameterStore::read_from_archive(&arch, "gen/")
            .unwrap()
            .is_empty());
    }
}
