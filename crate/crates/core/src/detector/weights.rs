use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(-b, b)` with `b = sqrt(1 / fan_in)`.
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            dims,
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Named parameter store, in graph order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelWeights {
    tensors: IndexMap<String, Tensor>,
}

impl ModelWeights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seeded initialization. Uniform draws are taken in spec order from a
    /// single ChaCha8 stream, so the result depends only on specs and seed.
    pub fn init(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Self::new();
        for spec in specs {
            let t = match spec.init {
                Init::Uniform { fan_in } => {
                    let bound = (1.0 / fan_in.max(1) as f64).sqrt() as f32;
                    Tensor::from_fn(&spec.dims, |_| rng.gen_range(-bound..bound))?
                }
                Init::Ones => Tensor::full(&spec.dims, 1.0)?,
                Init::Zeros => Tensor::zeros(&spec.dims)?,
            };
            weights.insert(spec.name.clone(), t);
        }
        Ok(weights)
    }

    /// Every learned weight and bias zero, batch norms identity.
    pub fn zero_init(specs: &[ParamSpec]) -> Result<Self> {
        let mut weights = Self::new();
        for spec in specs {
            let value = if spec.init == Init::Ones { 1.0 } else { 0.0 };
            weights.insert(spec.name.clone(), Tensor::full(&spec.dims, value)?);
        }
        Ok(weights)
    }

    pub fn insert(&mut self, name: String, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name, tensor)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingWeight(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_params(&self) -> u64 {
        self.tensors.values().map(|t| t.len() as u64).sum()
    }

    /// Checks that names, order and shapes match `specs` exactly.
    pub fn check_against(&self, specs: &[ParamSpec]) -> Result<()> {
        if self.tensors.len() != specs.len() {
            return Err(Error::WeightFile(format!(
                "{} tensors present, graph needs {}",
                self.tensors.len(),
                specs.len()
            )));
        }
        for ((name, t), spec) in self.tensors.iter().zip(specs) {
            if *name != spec.name {
                return Err(Error::WeightFile(format!(
                    "tensor `{name}` found where `{}` was expected",
                    spec.name
                )));
            }
            if t.dims() != spec.dims.as_slice() {
                return Err(Error::WeightFile(format!(
                    "tensor `{name}` has dims {:?}, graph needs {:?}",
                    t.dims(),
                    spec.dims
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn specs() -> Vec<ParamSpec> {
        vec![
            ParamSpec::new("a.weight", vec![4, 2, 3, 3], Init::Uniform { fan_in: 18 }),
            ParamSpec::new("a.bn.gamma", vec![4], Init::Ones),
            ParamSpec::new("a.bn.beta", vec![4], Init::Zeros),
        ]
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelWeights::init(&specs(), 7).unwrap();
        let b = ModelWeights::init(&specs(), 7).unwrap();
        let c = ModelWeights::init(&specs(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (1.0f32 / 18.0).sqrt();
        assert!(a.get("a.weight").unwrap().data().iter().all(|v| v.abs() <= bound));
        assert!(a.get("a.bn.gamma").unwrap().data().iter().all(|v| *v == 1.0));
        a.check_against(&specs()).unwrap();
    }

    #[test]
    fn check_against_catches_mismatches() {
        let mut w = ModelWeights::zero_init(&specs()).unwrap();
        assert!(w.get("missing").is_err());
        w.insert("a.bn.beta".into(), Tensor::zeros(&[5]).unwrap());
        assert!(w.check_against(&specs()).is_err());
        let short = ModelWeights::zero_init(&specs()[..2]).unwrap();
        assert!(short.check_against(&specs()).is_err());
    }
}
