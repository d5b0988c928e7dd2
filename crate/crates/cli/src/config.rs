//! Run configuration: built-in profile, then the config file, then flags, then `--set`.

use std::path::{Path, PathBuf};

use ragseco::data::Task;
use ragseco::model::{HyperParams, Variant};
use ragseco::{Error, Result};

use crate::Common;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldSel {
    One(usize),
    All,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub drugs: Option<PathBuf>,
    pub ddis: Option<PathBuf>,
    pub charset: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub task: Task,
    pub fold: FoldSel,
    pub fold_count: usize,
    /// Train the selected folds on separate threads.
    pub parallel: bool,
    pub variant: Variant,
    pub profile: String,
    pub seed: u64,
    /// Hyperparameter and generator settings in the order they were given.
    pub overrides: Vec<(String, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            drugs: None,
            ddis: None,
            charset: None,
            manifest: None,
            out: PathBuf::from("ragseco-out"),
            task: Task::KnownKnown,
            fold: FoldSel::One(0),
            fold_count: 5,
            parallel: false,
            variant: Variant::Full,
            profile: "dataset1".into(),
            seed: 0,
            overrides: Vec::new(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn parse_fold(v: &str) -> Result<FoldSel> {
    if v == "all" {
        return Ok(FoldSel::All);
    }
    v.parse()
        .map(FoldSel::One)
        .map_err(|_| config_err(format!("fold must be a number or `all`, got `{v}`")))
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| config_err(format!("invalid value `{v}` for {key}")))
}

impl RunConfig {
    /// Applies one setting; relative paths are resolved against `base`.
    fn apply(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || base.join(value);
        match key {
            "drugs" => self.drugs = Some(path()),
            "ddis" => self.ddis = Some(path()),
            "charset" => self.charset = Some(path()),
            "manifest" => self.manifest = Some(path()),
            "out" => self.out = path(),
            "task" => self.task = value.parse()?,
            "fold" => self.fold = parse_fold(value)?,
            "folds" => self.fold_count = parse_num(key, value)?,
            "parallel" => self.parallel = parse_num(key, value)?,
            "variant" => self.variant = value.parse()?,
            "profile" => self.profile = value.to_string(),
            "seed" => self.seed = parse_num(key, value)?,
            _ => self.overrides.push((key.to_string(), value.to_string())),
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("{}:{}: expected `key = value`", path.display(), n + 1)))?;
            self.apply(k.trim(), v.trim(), base)
                .map_err(|e| config_err(format!("{}:{}: {e}", path.display(), n + 1)))?;
        }
        Ok(())
    }

    pub fn resolve(common: &Common) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &common.config {
            cfg.apply_file(path)?;
        }
        let here = Path::new("");
        let flags: [(&str, Option<String>); 12] = [
            ("drugs", common.drugs.as_ref().map(|p| p.display().to_string())),
            ("ddis", common.ddis.as_ref().map(|p| p.display().to_string())),
            ("charset", common.charset.as_ref().map(|p| p.display().to_string())),
            ("manifest", common.manifest.as_ref().map(|p| p.display().to_string())),
            ("out", common.out.as_ref().map(|p| p.display().to_string())),
            ("task", common.task.clone()),
            ("fold", common.fold.clone()),
            ("folds", common.folds.map(|f| f.to_string())),
            ("parallel", common.parallel.then(|| "true".to_string())),
            ("variant", common.variant.clone()),
            ("profile", common.profile.clone()),
            ("seed", common.seed.map(|s| s.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                cfg.apply(k, &v, here)?;
            }
        }
        for kv in &common.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| config_err(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.apply(k.trim(), v.trim(), here)?;
        }
        if cfg.fold_count < 2 {
            return Err(config_err("folds must be at least 2"));
        }
        if let FoldSel::One(f) = cfg.fold {
            if f >= cfg.fold_count {
                return Err(config_err(format!("fold {f} outside 0..{}", cfg.fold_count)));
            }
        }
        Ok(cfg)
    }

    /// Profile defaults for the task with every hyperparameter override applied.
    ///
    /// Keys in `extra` are accepted without being hyperparameters.
    pub fn hyperparams(&self, extra: &[&str]) -> Result<HyperParams> {
        let mut hp = HyperParams::profile(&self.profile, self.task)?;
        hp.seed = self.seed;
        for (k, v) in &self.overrides {
            if !hp.set(k, v)? && !extra.contains(&k.as_str()) {
                return Err(config_err(format!("unknown setting `{k}`")));
            }
        }
        hp.validate()?;
        Ok(hp)
    }

    pub fn require(&self, what: &str, path: &Option<PathBuf>) -> Result<PathBuf> {
        let p = path
            .clone()
            .ok_or_else(|| config_err(format!("no `{what}` path given (config key or --{what})")))?;
        if !p.exists() {
            return Err(config_err(format!("{what} path {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("split.manifest"))
    }

    pub fn fold_dir(&self, fold: usize) -> PathBuf {
        self.out.join(format!("fold{fold}"))
    }
}
