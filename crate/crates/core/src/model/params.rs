use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::autodiff::{BatchNormStats, Tensor};
use crate::error::{Error, Result};

/// Named trainable tensors plus batch-normalisation buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    norms: BTreeMap<String, BatchNormStats>,
}

/// Glorot-uniform tensor with the given fan-in and fan-out.
pub fn xavier<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| dist.sample(rng)).collect()).expect("length matches")
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn insert_norm(&mut self, name: impl Into<String>, features: usize) {
        self.norms.insert(name.into(), BatchNormStats::new(features));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::contract(format!("no parameter named `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("no parameter named `{name}`")))
    }

    pub fn norm_mut(&mut self, name: &str) -> Result<&mut BatchNormStats> {
        self.norms
            .get_mut(name)
            .ok_or_else(|| Error::contract(format!("no batchnorm layer named `{name}`")))
    }

    pub fn norm(&self, name: &str) -> Option<&BatchNormStats> {
        self.norms.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Every stored tensor, batchnorm buffers included, in lexicographic order.
    fn serial_entries(&self) -> Vec<(String, Tensor)> {
        let mut out: BTreeMap<String, Tensor> = self.tensors.clone();
        for (name, s) in &self.norms {
            let f = s.running_mean.len();
            out.insert(
                format!("{name}.running_mean"),
                Tensor::new(vec![f], s.running_mean.clone()).expect("length matches"),
            );
            out.insert(
                format!("{name}.running_var"),
                Tensor::new(vec![f], s.running_var.clone()).expect("length matches"),
            );
        }
        out.into_iter().collect()
    }
}

const CHECKPOINT_HEADER: &str = "ragseco-checkpoint v1";

/// Parameters together with the run settings needed to rebuild the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: Vec<(String, String)>,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Text container; floats are stored as their IEEE-754 bit patterns so reloading is exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CHECKPOINT_HEADER}");
        let _ = writeln!(s, "[config]");
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "[tensors]");
        for (name, t) in self.params.serial_entries() {
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(s, "tensor {name} {}", shape.join("x"));
            let words: Vec<String> = t.data().iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            let _ = writeln!(s, "{}", words.join(" "));
        }
        s
    }

    /// Parses a checkpoint; batchnorm layers are recognised by their paired buffers.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let err = |line: usize, msg: String| Error::data_at(format!("{source}:{line}"), msg);
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l));
        match lines.next() {
            Some((_, CHECKPOINT_HEADER)) => {}
            Some((n, l)) => return Err(err(n, format!("expected `{CHECKPOINT_HEADER}`, got `{l}`"))),
            None => return Err(Error::data_at(source.to_string(), "empty checkpoint")),
        }
        match lines.next() {
            Some((_, "[config]")) => {}
            Some((n, l)) => return Err(err(n, format!("expected `[config]`, got `{l}`"))),
            None => return Err(Error::data_at(source.to_string(), "truncated checkpoint")),
        }
        let mut config = Vec::new();
        loop {
            match lines.next() {
                Some((_, "[tensors]")) => break,
                Some((n, l)) => {
                    let (k, v) = l
                        .split_once(" = ")
                        .ok_or_else(|| err(n, format!("expected `key = value`, got `{l}`")))?;
                    config.push((k.to_string(), v.to_string()));
                }
                None => return Err(Error::data_at(source.to_string(), "missing `[tensors]` section")),
            }
        }
        let mut raw: BTreeMap<String, Tensor> = BTreeMap::new();
        while let Some((n, l)) = lines.next() {
            let parts: Vec<&str> = l.split(' ').collect();
            let (name, shape) = match parts.as_slice() {
                ["tensor", name, shape] => (*name, *shape),
                _ => return Err(err(n, format!("expected `tensor <name> <shape>`, got `{l}`"))),
            };
            let shape: Vec<usize> = shape
                .split('x')
                .map(|d| d.parse().map_err(|_| err(n, format!("bad shape `{shape}`"))))
                .collect::<Result<_>>()?;
            let (vn, values) = lines
                .next()
                .ok_or_else(|| err(n, format!("tensor `{name}` has no values")))?;
            let data: Vec<f64> = if values.is_empty() {
                Vec::new()
            } else {
                values
                    .split(' ')
                    .map(|w| {
                        u64::from_str_radix(w, 16)
                            .map(f64::from_bits)
                            .map_err(|_| err(vn, format!("bad value `{w}`")))
                    })
                    .collect::<Result<_>>()?
            };
            let t = Tensor::new(shape, data).map_err(|e| err(vn, e.to_string()))?;
            raw.insert(name.to_string(), t);
        }
        let mut params = ParamStore::new();
        let mut pending = raw;
        let norm_names: Vec<String> = pending
            .keys()
            .filter_map(|k| k.strip_suffix(".running_mean").map(str::to_string))
            .collect();
        for name in norm_names {
            let mean = pending.remove(&format!("{name}.running_mean")).expect("listed");
            let var = pending.remove(&format!("{name}.running_var")).ok_or_else(|| {
                Error::data_at(source.to_string(), format!("`{name}` has a running mean but no running variance"))
            })?;
            let mut stats = BatchNormStats::new(mean.len());
            stats.running_mean = mean.into_data();
            stats.running_var = var.into_data();
            params.norms.insert(name, stats);
        }
        params.tensors = pending;
        Ok(Checkpoint { config, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&text, &path.display().to_string())
    }
}
