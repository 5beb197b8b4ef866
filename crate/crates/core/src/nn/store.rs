use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Result, Shape, Tensor, Var};
use candle_nn::init::NormalOrUniform;
use candle_nn::var_builder::SimpleBackend;
use candle_nn::{Init, VarBuilder, VarMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Trainable parameters of one network. Every variable is initialised from
/// a generator keyed on `(seed, name)`, so construction order never affects
/// the initial weights.
#[derive(Clone)]
pub struct ParamStore {
    map: VarMap,
    seed: u64,
}

impl std::fmt::Debug for ParamStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ParamStore")
            .field("seed", &self.seed)
            .field("parameters", &self.num_parameters())
            .finish()
    }
}

struct SeededBackend(ParamStore);

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn init_values(init: Init, shape: &Shape, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = shape.elem_count();
    let uniform = |lo: f64, hi: f64, rng: &mut ChaCha8Rng| -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(lo..hi) as f32).collect()
    };
    let normal = |mean: f64, std: f64, rng: &mut ChaCha8Rng| -> Vec<f32> {
        let d = Normal::new(mean, std.max(1e-12)).expect("finite normal parameters");
        (0..n).map(|_| d.sample(rng) as f32).collect()
    };
    match init {
        Init::Const(v) => vec![v as f32; n],
        Init::Uniform { lo, up } => uniform(lo, up, rng),
        Init::Randn { mean, stdev } => normal(mean, stdev, rng),
        Init::Kaiming {
            dist,
            fan,
            non_linearity,
        } => {
            let std = non_linearity.gain() / (fan.for_shape(shape) as f64).sqrt();
            match dist {
                NormalOrUniform::Uniform => {
                    let bound = 3f64.sqrt() * std;
                    uniform(-bound, bound, rng)
                }
                NormalOrUniform::Normal => normal(0.0, std, rng),
            }
        }
    }
}

impl SimpleBackend for SeededBackend {
    fn get(&self, s: Shape, name: &str, h: Init, dtype: DType, dev: &Device) -> Result<Tensor> {
        let mut data = self.0.map.data().lock().unwrap();
        if let Some(var) = data.get(name) {
            if var.shape() != &s {
                candle_core::bail!("parameter {name} has shape {:?}, requested {s:?}", var.shape());
            }
            return Ok(var.as_tensor().clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.0.seed ^ fnv1a(name.as_bytes()));
        let values = init_values(h, &s, &mut rng);
        let var = Var::from_tensor(&Tensor::from_vec(values, s, dev)?.to_dtype(dtype)?)?;
        let t = var.as_tensor().clone();
        data.insert(name.to_string(), var);
        Ok(t)
    }

    fn get_unchecked(&self, name: &str, _dtype: DType, _dev: &Device) -> Result<Tensor> {
        candle_core::bail!("parameter {name} must be created with an explicit shape")
    }

    fn contains_tensor(&self, name: &str) -> bool {
        self.0.map.data().lock().unwrap().contains_key(name)
    }
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            map: VarMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn var_builder(&self) -> VarBuilder<'static> {
        VarBuilder::from_backend(Box::new(SeededBackend(self.clone())), DType::F32, super::device())
    }

    /// Variables in name order.
    pub fn vars(&self) -> Vec<Var> {
        let data = self.map.data().lock().unwrap();
        let mut named: Vec<(&String, &Var)> = data.iter().collect();
        named.sort_by(|a, b| a.0.cmp(b.0));
        named.into_iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.map.data().lock().unwrap().keys().cloned().collect();
        names.sort();
        names
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.map.data().lock().unwrap().get(name).cloned()
    }

    /// Overwrites a parameter in place; every layer sharing it sees the change.
    pub fn set(&self, name: &str, value: &Tensor) -> Result<()> {
        match self.get(name) {
            Some(var) => var.set(&value.to_dtype(var.dtype())?),
            None => candle_core::bail!("unknown parameter {name}"),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.vars().iter().map(|v| v.elem_count()).sum()
    }

    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        let data = self.map.data().lock().unwrap();
        data.iter()
            .map(|(k, v)| Ok((k.clone(), v.as_tensor().copy()?)))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.map.save(path)
    }

    /// Loads values for every registered parameter from a safetensors file.
    pub fn load(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &super::device())?;
        let data = self.map.data().lock().unwrap();
        for (name, var) in data.iter() {
            let t = tensors
                .get(name)
                .ok_or_else(|| candle_core::Error::Msg(format!("checkpoint lacks {name}")))?;
            var.set(&t.to_dtype(var.dtype())?)?;
        }
        Ok(())
    }
}
