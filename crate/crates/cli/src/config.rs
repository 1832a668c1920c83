//! Run settings and their resolution: flags > config file > preset > defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use kandistill::data::{ScalerKind, SplitMode};
use kandistill::distill::DkdConfig;
use kandistill::mlp::Activation;
use kandistill::optim::OptimizerKind;
use kandistill::train::TrainConfig;
use kandistill::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Swat,
    Wadi,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "swat" => Ok(Preset::Swat),
            "wadi" => Ok(Preset::Wadi),
            other => Err(Error::InvalidConfig(format!(
                "unknown preset `{other}` (expected `swat` or `wadi`)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Swat => "swat",
            Preset::Wadi => "wadi",
        })
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub grid: usize,
    pub order: usize,
    pub domain: (f64, f64),
    pub teacher_hidden: Vec<usize>,
    pub student_hidden: Vec<usize>,
    pub activation: Activation,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub warmup: usize,
    pub temperature: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub class_weights: Option<[f64; 2]>,
    pub mask_prob: f64,
    pub scaler: ScalerKind,
    pub split: SplitMode,
    pub test_fraction: f64,
    pub deterministic: bool,
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            grid: 50,
            order: 1,
            domain: (-3.0, 3.0),
            teacher_hidden: vec![30],
            student_hidden: vec![20],
            activation: Activation::Relu,
            alpha: 5.0,
            beta: 1.0,
            lambda: 0.2,
            warmup: 5,
            temperature: 4.0,
            epochs: 100,
            batch: 256,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            class_weights: None,
            mask_prob: 0.0,
            scaler: ScalerKind::Standard,
            split: SplitMode::Sequential,
            test_fraction: 0.2,
            deterministic: false,
            threads: 1,
        }
    }
}

impl RunConfig {
    pub fn apply_preset(&mut self, preset: Preset) {
        self.preset = Some(preset);
        self.grid = 50;
        self.alpha = 5.0;
        self.beta = 1.0;
        self.teacher_hidden = vec![30];
        match preset {
            Preset::Swat => {
                self.order = 3;
                self.lambda = 0.1;
                self.warmup = 80;
                self.student_hidden = vec![30];
            }
            Preset::Wadi => {
                self.order = 1;
                self.lambda = 0.2;
                self.warmup = 5;
                self.student_hidden = vec![20];
            }
        }
    }

    /// Sets one setting from its textual key and value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for `{key}`")))
        }
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "preset" => self.apply_preset(value.parse()?),
            "grid" => self.grid = num(&key, value)?,
            "order" => self.order = num(&key, value)?,
            "domain" => {
                let parts = parse_list::<f64>(&key, value)?;
                if parts.len() != 2 {
                    return Err(Error::InvalidConfig(
                        "domain takes two numbers `lo,hi`".into(),
                    ));
                }
                self.domain = (parts[0], parts[1]);
            }
            "teacher-hidden" => self.teacher_hidden = parse_list(&key, value)?,
            "student-hidden" => self.student_hidden = parse_list(&key, value)?,
            "activation" => self.activation = value.parse()?,
            "alpha" => self.alpha = num(&key, value)?,
            "beta" => self.beta = num(&key, value)?,
            "lambda" => self.lambda = num(&key, value)?,
            "warmup" => self.warmup = num(&key, value)?,
            "temperature" => self.temperature = num(&key, value)?,
            "epochs" => self.epochs = num(&key, value)?,
            "batch" => self.batch = num(&key, value)?,
            "lr" => self.lr = num(&key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "seed" => self.seed = num(&key, value)?,
            "class-weights" => {
                let w = parse_list::<f64>(&key, value)?;
                if w.len() != 2 {
                    return Err(Error::InvalidConfig(
                        "class weights take two numbers `normal,attack`".into(),
                    ));
                }
                self.class_weights = Some([w[0], w[1]]);
            }
            "mask-prob" => self.mask_prob = num(&key, value)?,
            "scaler" => self.scaler = value.parse()?,
            "split" => self.split = value.parse()?,
            "test-fraction" => self.test_fraction = num(&key, value)?,
            "deterministic" => self.deterministic = num(&key, value)?,
            "threads" => self.threads = num(&key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    pub fn dkd(&self) -> DkdConfig {
        DkdConfig {
            alpha: self.alpha,
            beta: self.beta,
            lambda: self.lambda,
            warmup_epochs: self.warmup,
            temperature: self.temperature,
        }
    }

    pub fn train_config(&self, distill: bool) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch,
            learning_rate: self.lr,
            optimizer: self.optimizer,
            seed: self.seed,
            dkd: distill.then(|| self.dkd()),
            class_weights: self.class_weights,
            threads: if self.deterministic {
                1
            } else {
                self.threads.max(1)
            },
        }
    }

    pub fn teacher_dims(&self, inputs: usize) -> Vec<usize> {
        dims(inputs, &self.teacher_hidden)
    }

    pub fn student_dims(&self, inputs: usize) -> Vec<usize> {
        dims(inputs, &self.student_hidden)
    }
}

fn dims(inputs: usize, hidden: &[usize]) -> Vec<usize> {
    let mut d = vec![inputs];
    d.extend_from_slice(hidden);
    d.push(2);
    d
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad list entry `{v}` for `{key}`")))
        })
        .collect()
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::InvalidConfig(format!("config line {}: expected `key = value`", n + 1))
        })?;
        out.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Layers settings: defaults, then the preset (from flags, else from the
/// file), then the file's other keys, then explicit flags.
pub fn resolve(
    flag_preset: Option<Preset>,
    file: &BTreeMap<String, String>,
    flags: &[(&str, String)],
) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let preset = match flag_preset {
        Some(p) => Some(p),
        None => file.get("preset").map(|p| p.parse()).transpose()?,
    };
    if let Some(p) = preset {
        cfg.apply_preset(p);
    }
    for (k, v) in file {
        if k != "preset" {
            cfg.set(k, v)?;
        }
    }
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}
