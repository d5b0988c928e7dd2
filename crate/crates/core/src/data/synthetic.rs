//! Cluster-structured toy datasets for tests and desk-scale experiments.
//!
//! Each drug belongs to a hidden cluster. Descriptor sets mix cluster
//! signature tokens with shared noise tokens, SMILES strings carry a cluster
//! motif, and the event type of a pair is `(cluster_a + cluster_b) mod R`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Attribute, Dataset, Ddi, DrugRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub drugs: usize,
    pub relations: usize,
    pub clusters: usize,
    /// Signature tokens per cluster and attribute.
    pub signature_tokens: usize,
    /// Probability that a drug carries each of its cluster's signature tokens.
    pub signal: f64,
    /// Size of the shared noise-token pool per attribute.
    pub noise_tokens: usize,
    /// Probability that a drug carries each noise token.
    pub noise_rate: f64,
    /// Probability that a drug pair interacts.
    pub density: f64,
    /// Probability that an interaction gets a uniformly random event type.
    pub label_noise: f64,
    /// Probability that a SMILES string contains its cluster motif.
    pub motif_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            drugs: 30,
            relations: 4,
            clusters: 4,
            signature_tokens: 6,
            signal: 0.6,
            noise_tokens: 20,
            noise_rate: 0.1,
            density: 0.5,
            label_noise: 0.0,
            motif_rate: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Sets one field from text. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("invalid value `{value}` for {key}")))
        }
        match key {
            "drugs" => self.drugs = parse(key, value)?,
            "relations" => self.relations = parse(key, value)?,
            "clusters" => self.clusters = parse(key, value)?,
            "signature_tokens" => self.signature_tokens = parse(key, value)?,
            "signal" => self.signal = parse(key, value)?,
            "noise_tokens" => self.noise_tokens = parse(key, value)?,
            "noise_rate" => self.noise_rate = parse(key, value)?,
            "density" => self.density = parse(key, value)?,
            "label_noise" => self.label_noise = parse(key, value)?,
            "motif_rate" => self.motif_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

const SMILES_ALPHABET: &[u8] = b"CCCCNNOOSc1()=";

pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.drugs < 2 || cfg.relations == 0 || cfg.clusters == 0 {
        return Err(Error::config("synthetic data needs at least 2 drugs, 1 relation and 1 cluster"));
    }
    for (name, p) in [
        ("signal", cfg.signal),
        ("noise_rate", cfg.noise_rate),
        ("density", cfg.density),
        ("label_noise", cfg.label_noise),
        ("motif_rate", cfg.motif_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut cluster: Vec<usize> = (0..cfg.drugs).map(|d| d % cfg.clusters).collect();
    cluster.shuffle(&mut rng);

    let motifs: Vec<String> = (0..cfg.clusters)
        .map(|_| random_smiles(&mut rng, 8))
        .collect();

    let mut drugs = Vec::with_capacity(cfg.drugs);
    for (d, &c) in cluster.iter().enumerate() {
        let filler_len = rng.random_range(4..12);
        let filler = random_smiles(&mut rng, filler_len);
        let smiles = if !rng.random_bool(cfg.motif_rate) {
            filler
        } else if rng.random_bool(0.5) {
            format!("{}{filler}", motifs[c])
        } else {
            format!("{filler}{}", motifs[c])
        };
        let mut drug = DrugRecord::new(format!("SYN{d:04}"), smiles);
        for attr in Attribute::ALL {
            let set = &mut drug.descriptors[attr.index()];
            for t in 0..cfg.signature_tokens {
                if rng.random_bool(cfg.signal) {
                    set.insert(format!("{}_c{c}_{t}", attr.name()));
                }
            }
            for t in 0..cfg.noise_tokens {
                if rng.random_bool(cfg.noise_rate) {
                    set.insert(format!("{}_n{t}", attr.name()));
                }
            }
        }
        drugs.push(drug);
    }

    let mut ddis = Vec::new();
    for i in 0..cfg.drugs {
        for j in i + 1..cfg.drugs {
            if !rng.random_bool(cfg.density) {
                continue;
            }
            let event = if rng.random_bool(cfg.label_noise) {
                rng.random_range(0..cfg.relations)
            } else {
                (cluster[i] + cluster[j]) % cfg.relations
            };
            ddis.push(Ddi::new(i, j, event));
        }
    }
    ddis.shuffle(&mut rng);
    Dataset::new(drugs, ddis, cfg.relations)
}

fn random_smiles<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len)
        .map(|_| SMILES_ALPHABET[rng.random_range(0..SMILES_ALPHABET.len())] as char)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_seed() {
        let cfg = SyntheticConfig::default();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SyntheticConfig { seed: 1, ..cfg.clone() };
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn covers_all_relations() {
        let ds = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(ds.num_drugs(), 30);
        for r in 0..4 {
            assert!(ds.ddis.iter().any(|d| d.event == r), "relation {r} missing");
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let cfg = SyntheticConfig { density: 1.5, ..Default::default() };
        assert!(generate(&cfg).is_err());
    }
}
