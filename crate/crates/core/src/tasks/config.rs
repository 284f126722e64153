//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use crate::autodiff::Activation;
use crate::energy::CoefficientScheme;
use crate::error::{Error, Result};
use crate::spin::{DEFAULT_H0, DEFAULT_TEMPERATURE, MAX_EXHAUSTIVE_SITES};

/// Keys that carry run metadata rather than configuration.
fn is_metadata(key: &str) -> bool {
    matches!(key, "kind" | "version" | "wall_time_s") || key.starts_with("metric.")
}

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are errors.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("duplicate key '{k}'")));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Shapes,
    Spins,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Shapes => "shapes",
            Task::Spins => "spins",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossKind {
    Mse,
    Energy,
    Kabsch,
    SparseEnergy,
    CrossEntropy,
    Margin,
    LocalEnergy,
    TrueEnergy,
}

impl LossKind {
    pub const SHAPES: [LossKind; 4] = [LossKind::Mse, LossKind::Energy, LossKind::Kabsch, LossKind::SparseEnergy];
    pub const SPINS: [LossKind; 4] = [
        LossKind::CrossEntropy,
        LossKind::Margin,
        LossKind::LocalEnergy,
        LossKind::TrueEnergy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Energy => "energy",
            LossKind::Kabsch => "kabsch",
            LossKind::SparseEnergy => "sparse-energy",
            LossKind::CrossEntropy => "cross-entropy",
            LossKind::Margin => "margin",
            LossKind::LocalEnergy => "local-energy",
            LossKind::TrueEnergy => "true-energy",
        }
    }

    pub fn task(self) -> Task {
        if Self::SHAPES.contains(&self) {
            Task::Shapes
        } else {
            Task::Spins
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::SHAPES
            .into_iter()
            .chain(Self::SPINS)
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub task: Task,
    pub loss: LossKind,
    pub coeff: CoefficientScheme,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// Held-out set used to pick among learning rates.
    pub val_size: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub n_vertices: usize,
    pub theta_aug: f64,
    /// Edge sets drawn per run for the sparse loss.
    pub edge_pool: usize,
    pub lattice: usize,
    pub h0: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn shapes(loss: LossKind, seed: u64) -> Self {
        Self {
            task: Task::Shapes,
            loss,
            coeff: CoefficientScheme::exponential(),
            lr: 1e-3,
            epochs: 50,
            batch_size: 128,
            train_size: 10_000,
            test_size: 1000,
            val_size: 1000,
            hidden_dim: 64,
            hidden_layers: 2,
            activation: Activation::Silu,
            n_vertices: 5,
            theta_aug: PI,
            edge_pool: 32,
            lattice: 4,
            h0: DEFAULT_H0,
            temperature: DEFAULT_TEMPERATURE,
            seed,
        }
    }

    pub fn spins(loss: LossKind, seed: u64) -> Self {
        Self {
            task: Task::Spins,
            lr: 1e-3,
            epochs: 100,
            batch_size: 256,
            train_size: 2000,
            test_size: 500,
            val_size: 500,
            hidden_dim: 256,
            hidden_layers: 2,
            activation: Activation::Relu,
            ..Self::shapes(loss, seed)
        }
    }

    /// Defaults for `loss`, overridden by the keys in `text`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let loss: LossKind = map
            .get("loss")
            .ok_or_else(|| Error::Config("missing key 'loss'".into()))?
            .parse()?;
        let mut cfg = match loss.task() {
            Task::Shapes => Self::shapes(loss, 0),
            Task::Spins => Self::spins(loss, 0),
        };
        let mut coeff_name = cfg.coeff.name().to_string();
        let mut coeff_param = None;
        for (k, v) in map {
            match k.as_str() {
                "task" => {
                    if v != cfg.task.name() {
                        return Err(Error::Config(format!(
                            "loss '{}' belongs to task '{}', not '{v}'",
                            loss.name(),
                            cfg.task.name()
                        )));
                    }
                }
                "loss" => {}
                "coeff" => coeff_name = v.clone(),
                "coeff_param" => coeff_param = Some(num(k, v)?),
                "lr" => cfg.lr = num(k, v)?,
                "epochs" => cfg.epochs = num(k, v)?,
                "batch_size" => cfg.batch_size = num(k, v)?,
                "train_size" => cfg.train_size = num(k, v)?,
                "test_size" => cfg.test_size = num(k, v)?,
                "val_size" => cfg.val_size = num(k, v)?,
                "hidden_dim" => cfg.hidden_dim = num(k, v)?,
                "hidden_layers" => cfg.hidden_layers = num(k, v)?,
                "activation" => cfg.activation = Activation::from_name(v)?,
                "n_vertices" => cfg.n_vertices = num(k, v)?,
                "theta_aug" => cfg.theta_aug = num(k, v)?,
                "edge_pool" => cfg.edge_pool = num(k, v)?,
                "lattice" => cfg.lattice = num(k, v)?,
                "h0" => cfg.h0 = num(k, v)?,
                "temperature" => cfg.temperature = num(k, v)?,
                "seed" => cfg.seed = num(k, v)?,
                other if is_metadata(other) => {}
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        cfg.coeff = CoefficientScheme::from_name(&coeff_name, coeff_param)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.loss.task() != self.task {
            return Err(Error::Config(format!(
                "loss '{}' is not a {} loss",
                self.loss.name(),
                self.task.name()
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr = {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config("epochs, batch_size, train_size and test_size must be positive".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        self.coeff.validate()?;
        match self.task {
            Task::Shapes => {
                if self.n_vertices < 3 {
                    return Err(Error::Config("n_vertices must be at least 3".into()));
                }
                if !(0.0..=PI).contains(&self.theta_aug) {
                    return Err(Error::Config(format!("theta_aug = {} outside [0, pi]", self.theta_aug)));
                }
                if self.loss == LossKind::SparseEnergy && self.edge_pool == 0 {
                    return Err(Error::Config("edge_pool must be positive".into()));
                }
            }
            Task::Spins => {
                if self.lattice < 2 || self.lattice * self.lattice > MAX_EXHAUSTIVE_SITES {
                    return Err(Error::Config(format!("lattice side {} unsupported", self.lattice)));
                }
                if self.temperature.is_nan() || self.temperature <= 0.0 || self.h0.is_nan() || self.h0 < 0.0 {
                    return Err(Error::Config("temperature must be positive and h0 non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Canonical `key = value` lines (only the keys relevant to the task).
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(&str, String)> = vec![
            ("task", self.task.name().into()),
            ("loss", self.loss.name().into()),
            ("lr", self.lr.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("train_size", self.train_size.to_string()),
            ("test_size", self.test_size.to_string()),
            ("val_size", self.val_size.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("hidden_layers", self.hidden_layers.to_string()),
            ("activation", self.activation.name().into()),
        ];
        match self.task {
            Task::Shapes => out.extend([
                ("coeff", self.coeff.name().into()),
                ("coeff_param", self.coeff.parameter().to_string()),
                ("n_vertices", self.n_vertices.to_string()),
                ("theta_aug", self.theta_aug.to_string()),
                ("edge_pool", self.edge_pool.to_string()),
            ]),
            Task::Spins => out.extend([
                ("lattice", self.lattice.to_string()),
                ("h0", self.h0.to_string()),
                ("temperature", self.temperature.to_string()),
            ]),
        }
        out.push(("seed", self.seed.to_string()));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_errors() {
        let m = parse_key_values("# header\nloss = mse # trailing\n\n lr=0.01\n").unwrap();
        assert_eq!(m["loss"], "mse");
        assert_eq!(m["lr"], "0.01");
        assert!(parse_key_values("lr 0.1").is_err());
        assert!(parse_key_values("lr=1\nlr=2").is_err());
        assert!(parse_key_values("=3").is_err());
    }

    #[test]
    fn round_trip() {
        for loss in LossKind::SHAPES.into_iter().chain(LossKind::SPINS) {
            let mut c = match loss.task() {
                Task::Shapes => TrainConfig::shapes(loss, 17),
                Task::Spins => TrainConfig::spins(loss, 17),
            };
            c.lr = 3e-4;
            assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn task_compatibility_is_checked() {
        assert!(TrainConfig::parse("task = spins\nloss = mse").is_err());
        assert!(TrainConfig::parse("task = shapes\nloss = margin").is_err());
        assert!(TrainConfig::parse("loss = hinge").is_err());
        assert!(TrainConfig::parse("lr = 0.1").is_err());
        assert!(TrainConfig::parse("loss = mse\nwidth = 3").is_err());
        assert!(TrainConfig::parse("loss = mse\ntheta_aug = 4").is_err());
        assert!(TrainConfig::parse("loss = margin\nlattice = 6").is_err());
        assert!(TrainConfig::parse("loss = energy\ncoeff = inverse\ncoeff_param = 0").is_err());
    }

    #[test]
    fn metadata_keys_are_ignored() {
        let c = TrainConfig::parse("kind = shapes-train\nversion = 9\nwall_time_s = 3\nmetric.q = 1\nloss = kabsch").unwrap();
        assert_eq!(c, TrainConfig::shapes(LossKind::Kabsch, 0));
    }
}
