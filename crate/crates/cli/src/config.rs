//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is optional;
//! unknown keys are rejected so that typos do not silently fall back to
//! defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vpbridge::{GenSpec, LossKind, NoiseSchedule, TrainConfig, Variant};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Paradigm {
    Bridge,
    Diffusion,
}

impl FromStr for Paradigm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bridge" => Ok(Self::Bridge),
            "diffusion" => Ok(Self::Diffusion),
            _ => Err(format!("paradigm must be `bridge` or `diffusion`, got `{s}`")),
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bridge => "bridge",
            Self::Diffusion => "diffusion",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub beta_min: f64,
    pub beta_max: f64,
    pub normalized: bool,
    pub paradigm: Paradigm,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub steps_infer: usize,
    pub t_clamp_hi: f64,
    pub seed: u64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dataset_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub amm_enabled: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            beta_min: 0.01,
            beta_max: 50.0,
            normalized: true,
            paradigm: Paradigm::Bridge,
            lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 8,
            total_steps: 2000,
            steps_infer: 50,
            t_clamp_hi: 1.0 - 1e-4,
            seed: 0,
            frames: 4,
            height: 16,
            width: 16,
            dataset_dir: PathBuf::from("data"),
            checkpoint: PathBuf::from("model.brw"),
            amm_enabled: true,
        }
    }
}

pub const KEYS: [&str; 17] = [
    "beta_min",
    "beta_max",
    "normalized",
    "paradigm",
    "lr",
    "weight_decay",
    "batch_size",
    "total_steps",
    "steps_infer",
    "t_clamp_hi",
    "seed",
    "F",
    "H",
    "W",
    "dataset_dir",
    "checkpoint",
    "amm_enabled",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("invalid value `{value}` for `{key}`: {e}"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.apply_pair(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    /// Apply one `key=value` assignment.
    pub fn apply_pair(&mut self, pair: &str) -> Result<(), String> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{pair}`"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "beta_min" => self.beta_min = parse(key, value)?,
            "beta_max" => self.beta_max = parse(key, value)?,
            "normalized" => self.normalized = parse(key, value)?,
            "paradigm" => self.paradigm = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "steps_infer" => self.steps_infer = parse(key, value)?,
            "t_clamp_hi" => self.t_clamp_hi = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "F" => self.frames = parse(key, value)?,
            "H" => self.height = parse(key, value)?,
            "W" => self.width = parse(key, value)?,
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "checkpoint" => self.checkpoint = PathBuf::from(value),
            "amm_enabled" => self.amm_enabled = parse(key, value)?,
            _ => {
                return Err(format!(
                    "unknown key `{key}`; known keys: {}",
                    KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, String> {
        NoiseSchedule::new(self.beta_min, self.beta_max, self.normalized).map_err(|e| e.to_string())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            total_steps: self.total_steps,
            t_clamp_hi: self.t_clamp_hi,
            seed: self.seed,
            loss_kind: match self.paradigm {
                Paradigm::Bridge => LossKind::BridgeVelocity,
                Paradigm::Diffusion => LossKind::DiffusionNoise,
            },
            amm_enabled: self.amm_enabled,
            ..TrainConfig::default()
        }
    }

    pub fn gen_spec(&self, variant: Variant) -> GenSpec {
        GenSpec::for_shape(self.frames, self.height, self.width, variant, self.seed)
    }

    /// Loss curve path: the checkpoint path with a `.loss.csv` extension.
    pub fn loss_csv_path(&self) -> PathBuf {
        self.checkpoint.with_extension("loss.csv")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let mut c = Config::default();
        c.apply_text("# comment\n\nbeta_max = 20\nparadigm=diffusion\nF = 2\namm_enabled = false\n")
            .unwrap();
        assert_eq!(c.beta_max, 20.0);
        assert_eq!(c.paradigm, Paradigm::Diffusion);
        assert_eq!(c.frames, 2);
        assert!(!c.amm_enabled);
        assert_eq!(c.beta_min, 0.01);
        assert_eq!(c.steps_infer, 50);
        assert_eq!(c.train_config().loss_kind, LossKind::DiffusionNoise);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut c = Config::default();
        let e = c.apply_text("beta_mx = 3").unwrap_err();
        assert!(e.contains("line 1") && e.contains("unknown key"), "{e}");
        assert!(c.apply_pair("seed=-1").is_err());
        assert!(c.apply_pair("paradigm=flow").is_err());
        assert!(c.apply_pair("seed").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let values = [
            "0.1", "10", "false", "bridge", "0.01", "0", "2", "3", "4", "0.9", "5", "1", "8", "8", "d",
            "c.brw", "true",
        ];
        let mut c = Config::default();
        for (k, v) in KEYS.iter().zip(values) {
            c.set(k, v).unwrap();
        }
        assert_eq!(c.loss_csv_path(), PathBuf::from("c.loss.csv"));
    }
}
