use std::fmt;
use std::str::FromStr;

use crate::data::{Task, DEFAULT_SMILES_LEN};
use crate::error::{Error, Result};

/// Ablation switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    /// No interaction graph: `X` feeds the similarity propagation directly.
    NoRelational,
    /// No similarity propagation: `H` is the final embedding.
    NoPropagation,
    /// Fusion without the initial-feature view.
    NoInitial,
    /// Fusion without the SMILES view.
    NoSmiles,
    /// Fusion without the embedding view.
    NoEmbedding,
    /// No contrastive losses; the pair representation is the embedding view alone.
    NoContrastive,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoRelational,
        Variant::NoPropagation,
        Variant::NoInitial,
        Variant::NoSmiles,
        Variant::NoEmbedding,
        Variant::NoContrastive,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRelational => "-R",
            Variant::NoPropagation => "-M",
            Variant::NoInitial => "-I",
            Variant::NoSmiles => "-S",
            Variant::NoEmbedding => "-E",
            Variant::NoContrastive => "-C",
        }
    }

    pub fn uses_relational(self) -> bool {
        self != Variant::NoRelational
    }

    pub fn uses_propagation(self) -> bool {
        self != Variant::NoPropagation
    }

    pub fn uses_contrastive(self) -> bool {
        self != Variant::NoContrastive
    }

    pub fn uses_smiles(self) -> bool {
        !matches!(self, Variant::NoSmiles | Variant::NoContrastive)
    }

    /// The initial-feature encoder is needed by the fusion or the contrastive losses.
    pub fn uses_initial_encoder(self) -> bool {
        self.uses_contrastive()
    }

    /// Number of `d_fnn`-wide blocks in the fused pair representation.
    pub fn fused_blocks(self) -> usize {
        match self {
            Variant::NoContrastive => 1,
            Variant::NoInitial | Variant::NoSmiles | Variant::NoEmbedding => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == t || v.tag().trim_start_matches('-') == t)
            .ok_or_else(|| Error::config(format!("unknown variant `{t}` (full, -R, -M, -I, -S, -E, -C)")))
    }
}

/// Every tunable of a run, including the architecture sizes stored in checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub batch_size: usize,
    pub lr: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub embed_dim: usize,
    pub power: usize,
    pub fnn_dim: usize,
    pub decoder_hidden: usize,
    pub t_pos: f64,
    pub t_neg: f64,
    pub lambda: f64,
    pub mixup_alpha: f64,
    pub cnn_channels: Vec<usize>,
    pub cnn_kernels: Vec<usize>,
    pub smiles_len: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams::profile("dataset1", Task::KnownKnown).expect("built-in profile")
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl HyperParams {
    pub const PROFILES: [&'static str; 3] = ["dataset1", "dataset2", "synthetic"];

    pub fn profile(name: &str, task: Task) -> Result<Self> {
        let cold = task != Task::KnownKnown;
        let mut hp = HyperParams {
            batch_size: 512,
            lr: if cold { 5e-6 } else { 2e-5 },
            dropout: 0.3,
            epochs: 120,
            embed_dim: 500,
            power: if cold { 3 } else { 0 },
            fnn_dim: 1000,
            decoder_hidden: 1000,
            t_pos: 0.95,
            t_neg: 0.1,
            lambda: 5.0,
            mixup_alpha: 0.2,
            cnn_channels: vec![32, 64, 96],
            cnn_kernels: vec![4, 6, 8],
            smiles_len: DEFAULT_SMILES_LEN,
            seed: 0,
        };
        match name {
            "dataset1" => {
                if cold {
                    hp.dropout = 0.2;
                    hp.fnn_dim = 1500;
                }
            }
            "dataset2" => {
                hp.batch_size = 1024;
                hp.dropout = 0.5;
                hp.fnn_dim = 1500;
            }
            "synthetic" => {
                hp.batch_size = 128;
                hp.lr = 5e-3;
                hp.dropout = 0.1;
                hp.epochs = 100;
                hp.embed_dim = 16;
                hp.power = if cold { 3 } else { 0 };
                hp.fnn_dim = 16;
                hp.cnn_channels = vec![8, 8];
                hp.cnn_kernels = vec![3, 3];
                hp.smiles_len = 24;
            }
            other => {
                return Err(Error::config(format!(
                    "unknown profile `{other}` (expected one of {})",
                    HyperParams::PROFILES.join(", ")
                )))
            }
        }
        hp.decoder_hidden = hp.fnn_dim;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("fnn_dim", self.fnn_dim),
            ("decoder_hidden", self.decoder_hidden),
            ("smiles_len", self.smiles_len),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{k} must be positive")));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.t_pos <= self.t_neg {
            return Err(Error::config(format!(
                "t_pos ({}) must exceed t_neg ({})",
                self.t_pos, self.t_neg
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.mixup_alpha >= 0.0 && self.mixup_alpha.is_finite()) {
            return Err(Error::config(format!("mixup_alpha must be >= 0, got {}", self.mixup_alpha)));
        }
        if self.cnn_channels.is_empty() || self.cnn_channels.len() != self.cnn_kernels.len() {
            return Err(Error::config("cnn_channels and cnn_kernels need the same nonzero length"));
        }
        if self.cnn_channels.contains(&0) || self.cnn_kernels.contains(&0) {
            return Err(Error::config("cnn channel counts and kernel sizes must be positive"));
        }
        let shrink: usize = self.cnn_kernels.iter().map(|k| k - 1).sum();
        if shrink >= 2 * self.smiles_len {
            return Err(Error::config(format!(
                "cnn kernels shrink the sequence by {shrink}, longer than the pair length {}",
                2 * self.smiles_len
            )));
        }
        Ok(())
    }

    /// Key/value form, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("dropout", self.dropout.to_string()),
            ("epochs", self.epochs.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("power", self.power.to_string()),
            ("fnn_dim", self.fnn_dim.to_string()),
            ("decoder_hidden", self.decoder_hidden.to_string()),
            ("t_pos", self.t_pos.to_string()),
            ("t_neg", self.t_neg.to_string()),
            ("lambda", self.lambda.to_string()),
            ("mixup_alpha", self.mixup_alpha.to_string()),
            ("cnn_channels", list(&self.cnn_channels)),
            ("cnn_kernels", list(&self.cnn_kernels)),
            ("smiles_len", self.smiles_len.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one field from text. Returns `Ok(false)` for keys that are not hyperparameters.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("invalid value `{value}` for {key}")))
        }
        fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
            value.split(',').map(|p| parse(key, p)).collect()
        }
        match key {
            "batch_size" | "bs" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "dropout" | "dr" => self.dropout = parse(key, value)?,
            "epochs" | "te" => self.epochs = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "power" | "n" => self.power = parse(key, value)?,
            "fnn_dim" => self.fnn_dim = parse(key, value)?,
            "decoder_hidden" => self.decoder_hidden = parse(key, value)?,
            "t_pos" => self.t_pos = parse(key, value)?,
            "t_neg" => self.t_neg = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "mixup_alpha" => self.mixup_alpha = parse(key, value)?,
            "cnn_channels" => self.cnn_channels = parse_list(key, value)?,
            "cnn_kernels" => self.cnn_kernels = parse_list(key, value)?,
            "smiles_len" => self.smiles_len = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_follow_the_published_table() {
        let t1 = HyperParams::profile("dataset1", Task::KnownKnown).unwrap();
        assert_eq!((t1.batch_size, t1.lr, t1.dropout, t1.power, t1.fnn_dim), (512, 2e-5, 0.3, 0, 1000));
        assert_eq!((t1.epochs, t1.embed_dim, t1.t_pos, t1.t_neg, t1.lambda), (120, 500, 0.95, 0.1, 5.0));
        let t3 = HyperParams::profile("dataset1", Task::NewNew).unwrap();
        assert_eq!((t3.lr, t3.dropout, t3.power, t3.fnn_dim), (5e-6, 0.2, 3, 1500));
        let d2 = HyperParams::profile("dataset2", Task::KnownNew).unwrap();
        assert_eq!((d2.batch_size, d2.lr, d2.dropout, d2.power, d2.fnn_dim), (1024, 5e-6, 0.5, 3, 1500));
        assert!(HyperParams::profile("nope", Task::KnownKnown).is_err());
    }

    #[test]
    fn pairs_roundtrip() {
        let hp = HyperParams::profile("synthetic", Task::NewNew).unwrap();
        let mut other = HyperParams::default();
        for (k, v) in hp.to_pairs() {
            assert!(other.set(k, &v).unwrap());
        }
        assert_eq!(other, hp);
        assert!(!other.set("drugs", "x").unwrap());
        assert!(other.set("lr", "fast").is_err());
    }

    #[test]
    fn validation() {
        let mut hp = HyperParams::default();
        hp.validate().unwrap();
        hp.t_neg = hp.t_pos;
        assert!(hp.validate().is_err());
        let mut hp = HyperParams::default();
        hp.lambda = 0.0;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn variant_tags() {
        for v in Variant::ALL {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("M".parse::<Variant>().unwrap(), Variant::NoPropagation);
        assert!("-X".parse::<Variant>().is_err());
    }
}
