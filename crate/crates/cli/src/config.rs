//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use memsac_core::data::{
    gen_shifted_pair, load_feature_table, LabeledSet, MixtureSpec, RotationMode, ShiftSpec,
    TargetTruth, UnlabeledSet,
};
use memsac_core::trainer::TrainConfig;

/// Where the source and target sets come from.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    /// Feature-table paths. When both are unset the synthetic benchmark
    /// below is generated instead.
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub class_spread: f64,
    pub within_std: f64,
    pub rotation_deg: f64,
    pub rotation_mode: RotationMode,
    pub shift_noise: f64,
    /// `None` reuses the training seed.
    pub data_seed: Option<u64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            classes: 50,
            dim: 16,
            per_class: 200,
            class_spread: 4.0,
            within_std: 1.0,
            rotation_deg: 30.0,
            rotation_mode: RotationMode::BlockDiagonal,
            shift_noise: 0.1,
            data_seed: None,
        }
    }
}

pub const DATA_KEYS: &[&str] = &[
    "source",
    "target",
    "classes",
    "dim",
    "per_class",
    "class_spread",
    "within_std",
    "rotation_deg",
    "rotation_mode",
    "shift_noise",
    "data_seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| anyhow!("invalid value '{value}' for key '{key}'"))
}

fn optional_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

impl DataConfig {
    /// Returns `Ok(false)` when `key` is not a data key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "source" => self.source = optional_path(value),
            "target" => self.target = optional_path(value),
            "classes" => self.classes = parse(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "per_class" => self.per_class = parse(key, value)?,
            "class_spread" => self.class_spread = parse(key, value)?,
            "within_std" => self.within_std = parse(key, value)?,
            "rotation_deg" | "rotation" => self.rotation_deg = parse(key, value)?,
            "rotation_mode" => {
                self.rotation_mode = match value.trim() {
                    "block" | "block_diagonal" => RotationMode::BlockDiagonal,
                    "plane" => RotationMode::Plane,
                    _ => bail!("invalid value '{value}' for key '{key}'"),
                }
            }
            "shift_noise" | "noise" => self.shift_noise = parse(key, value)?,
            "data_seed" => {
                self.data_seed = match value.trim() {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("none".into(), |p| p.display().to_string())
        };
        let values = vec![
            path(&self.source),
            path(&self.target),
            self.classes.to_string(),
            self.dim.to_string(),
            self.per_class.to_string(),
            self.class_spread.to_string(),
            self.within_std.to_string(),
            self.rotation_deg.to_string(),
            match self.rotation_mode {
                RotationMode::BlockDiagonal => "block",
                RotationMode::Plane => "plane",
            }
            .to_string(),
            self.shift_noise.to_string(),
            self.data_seed.map_or("auto".into(), |s| s.to_string()),
        ];
        DATA_KEYS.iter().copied().zip(values).collect()
    }

    pub fn mixture(&self, seed: u64) -> MixtureSpec {
        MixtureSpec {
            classes: self.classes,
            dim: self.dim,
            per_class: self.per_class,
            class_spread: self.class_spread,
            within_class_std: self.within_std,
            seed,
        }
    }

    pub fn shift(&self) -> ShiftSpec {
        ShiftSpec {
            mode: self.rotation_mode,
            ..ShiftSpec::rotation_degrees(self.rotation_deg, self.shift_noise, 0)
        }
    }
}

/// Training and data settings of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
}

/// Training inputs plus a one-line description of their origin.
pub struct LoadedData {
    pub source: LabeledSet,
    pub target: UnlabeledSet,
    pub truth: Option<TargetTruth>,
    pub description: String,
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize(key);
        if !self.data.set(&key, value)? {
            self.train.set(&key, value)?;
        }
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and lines starting with
    /// `#` are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected 'key = value'", n + 1))?;
            self.set(k, v)
                .with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Applies `--key value` and `--key=value` pairs.
    pub fn apply_flags(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                bail!("unexpected argument '{arg}'; overrides take the form --key value");
            };
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| anyhow!("flag '--{flag}' needs a value"))?;
                    (flag.to_string(), v.clone())
                }
            };
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Config file (if any) followed by flag overrides, then validated.
    pub fn resolve(file: Option<&Path>, flags: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(flags)?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    pub fn data_seed(&self) -> u64 {
        self.data.data_seed.unwrap_or(self.train.seed)
    }

    /// Every key and value, data keys first; re-loadable with
    /// [`Self::apply_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.data.entries().into_iter().chain(self.train.entries()) {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn load_data(&self) -> Result<LoadedData> {
        match (&self.data.source, &self.data.target) {
            (Some(s), Some(t)) => {
                let src = load_feature_table(s)
                    .with_context(|| format!("loading source table {}", s.display()))?;
                let tgt = load_feature_table(t)
                    .with_context(|| format!("loading target table {}", t.display()))?;
                if src.dim() != tgt.dim() {
                    bail!(
                        "source width {} differs from target width {}",
                        src.dim(),
                        tgt.dim()
                    );
                }
                let description = format!(
                    "source {} ({} rows), target {} ({} rows), dim {}",
                    s.display(),
                    src.len(),
                    t.display(),
                    tgt.len(),
                    src.dim()
                );
                let source = src.into_source()?;
                let (target, truth) = tgt.into_target();
                Ok(LoadedData {
                    source,
                    target,
                    truth,
                    description,
                })
            }
            (None, None) => {
                let seed = self.data_seed();
                let (src, tgt) = gen_shifted_pair(&self.data.mixture(seed), &self.data.shift())?;
                let description = format!(
                    "synthetic mixture: {} classes, dim {}, {} per class, data seed {seed}",
                    self.data.classes, self.data.dim, self.data.per_class
                );
                let (target, truth) = tgt.split_target();
                Ok(LoadedData {
                    source: src.into_source(),
                    target,
                    truth: Some(truth),
                    description,
                })
            }
            _ => bail!("set both 'source' and 'target', or neither for synthetic data"),
        }
    }
}
