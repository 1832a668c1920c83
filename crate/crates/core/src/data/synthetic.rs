//! Synthetic stand-in for a plant's attack file.
//!
//! Normal operation is a correlated Gaussian regime: every sensor reads a
//! noisy mixture of a few latent process variables, in its own units and
//! offset. Attacks arrive in contiguous episodes, each following one of a
//! few scenarios that disturb a random subset of sensors:
//!
//! * [`AttackKind::Shift`]: a strong offset on one lead sensor plus moderate
//!   offsets on the rest of the subset.
//! * [`AttackKind::Spread`]: the subset's deviations are amplified, so
//!   readings swing both ways around the setpoint.
//! * [`AttackKind::Drift`]: small same-signed offsets across the subset, only
//!   visible when sensors are read together.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_normal: usize,
    pub n_attack: usize,
    pub n_features: usize,
    pub seed: u64,
    /// Number of latent process variables driving normal readings.
    pub n_latent: usize,
    /// Idiosyncratic noise share of each sensor's (unit) variance, as a std.
    pub noise: f64,
    /// Sensors disturbed by each scenario.
    pub attacked_features: usize,
    pub scenarios: Vec<AttackKind>,
    /// Inclusive range of attack-episode lengths, in rows.
    pub episode_len: (usize, usize),
    /// Probability of flipping each label after generation.
    pub label_noise: f64,
}

impl SyntheticConfig {
    /// Defaults echo a heavily imbalanced attack file: 94% normal rows.
    pub fn new(n_rows: usize, n_features: usize, seed: u64) -> Self {
        let n_attack = (n_rows as f64 * 0.06).round() as usize;
        Self {
            n_normal: n_rows - n_attack,
            n_attack,
            n_features,
            seed,
            n_latent: 3,
            noise: 0.5,
            attacked_features: (n_features / 5).max(1),
            scenarios: vec![AttackKind::Shift, AttackKind::Spread, AttackKind::Drift],
            episode_len: (5, 30),
            label_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Shift,
    Spread,
    Drift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: AttackKind,
    /// Disturbed sensors; for `Shift` the first is the lead sensor.
    pub features: Vec<usize>,
    /// Offset (in units of the sensor's normal std) or amplification factor,
    /// per disturbed sensor.
    pub magnitudes: Vec<f64>,
}

/// Ground truth behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub scenarios: Vec<Scenario>,
    /// Scenario index behind each row, `None` for normal rows.
    pub row_scenario: Vec<Option<usize>>,
    pub offsets: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Generates a dataset together with its ground truth.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, SyntheticTruth)> {
    if cfg.n_features == 0 || cfg.n_normal + cfg.n_attack == 0 {
        return Err(Error::InvalidConfig(
            "synthetic sizes must be positive".into(),
        ));
    }
    if cfg.n_attack > 0 && cfg.scenarios.is_empty() {
        return Err(Error::InvalidConfig(
            "attacks requested without scenarios".into(),
        ));
    }
    if cfg.n_latent == 0 || !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidConfig(
            "need n_latent >= 1 and noise in [0, 1]".into(),
        ));
    }
    let (min_len, max_len) = cfg.episode_len;
    if min_len == 0 || min_len > max_len {
        return Err(Error::InvalidConfig(
            "episode length range must be 1 <= min <= max".into(),
        ));
    }
    if !(0.0..0.5).contains(&cfg.label_noise) {
        return Err(Error::InvalidConfig(
            "label noise must lie in [0, 0.5)".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.n_features;
    let k = cfg.n_latent;
    let loading_scale = (1.0 - cfg.noise * cfg.noise).sqrt();

    let loadings: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm * loading_scale).collect()
        })
        .collect();
    let offsets: Vec<f64> = (0..d).map(|_| rng.random_range(-50.0..50.0)).collect();
    let scales: Vec<f64> = (0..d)
        .map(|_| 10f64.powf(rng.random_range(-1.0..2.0)))
        .collect();

    let n_sub = cfg.attacked_features.clamp(1, d);
    let scenarios: Vec<Scenario> = cfg
        .scenarios
        .iter()
        .map(|&kind| {
            let mut idx: Vec<usize> = (0..d).collect();
            idx.shuffle(&mut rng);
            idx.truncate(n_sub);
            let magnitudes = (0..n_sub)
                .map(|i| {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    match kind {
                        AttackKind::Shift if i == 0 => sign * 5.0,
                        AttackKind::Shift => sign * rng.random_range(1.5..3.0),
                        AttackKind::Spread => rng.random_range(3.0..4.0),
                        AttackKind::Drift => rng.random_range(1.0..1.5),
                    }
                })
                .collect();
            Scenario {
                kind,
                features: idx,
                magnitudes,
            }
        })
        .collect();

    let row_scenario = timeline(cfg, &mut rng);

    let n = row_scenario.len();
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut z = vec![0.0; k];
    let mut u = vec![0.0; d];
    for sc in &row_scenario {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for (j, uj) in u.iter_mut().enumerate() {
            let eps: f64 = rng.sample(StandardNormal);
            *uj = loadings[j].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + cfg.noise * eps;
        }
        if let Some(s) = sc {
            let s = &scenarios[*s];
            for (&j, &m) in s.features.iter().zip(&s.magnitudes) {
                match s.kind {
                    AttackKind::Shift | AttackKind::Drift => u[j] += m,
                    AttackKind::Spread => u[j] *= m,
                }
            }
        }
        features.extend(
            u.iter()
                .enumerate()
                .map(|(j, v)| offsets[j] + scales[j] * v),
        );
        let mut label = u8::from(sc.is_some());
        if cfg.label_noise > 0.0 && rng.random::<f64>() < cfg.label_noise {
            label ^= 1;
        }
        labels.push(label);
    }

    let names = (0..d).map(|j| format!("S{:03}", j + 1)).collect();
    let ds = Dataset::new(features, labels, names)?;
    Ok((
        ds,
        SyntheticTruth {
            scenarios,
            row_scenario,
            offsets,
            scales,
        },
    ))
}

/// Lays out normal rows with attack episodes scattered between them.
fn timeline(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<Option<usize>> {
    let (min_len, max_len) = cfg.episode_len;
    let mut episodes = Vec::new();
    let mut left = cfg.n_attack;
    let order: Vec<usize> = (0..cfg.scenarios.len()).collect();
    while left > 0 {
        let len = rng.random_range(min_len..=max_len).min(left);
        // Cycle through scenarios so each one shows up.
        let s = if episodes.len() < order.len() {
            order[episodes.len()]
        } else {
            *order.choose(rng).expect("non-empty scenarios")
        };
        episodes.push((s, len));
        left -= len;
    }
    episodes.shuffle(rng);

    // Random cut points split the normal rows into len+1 gaps.
    let mut cuts: Vec<usize> = (0..episodes.len())
        .map(|_| rng.random_range(0..=cfg.n_normal))
        .collect();
    cuts.sort_unstable();

    let mut out = Vec::with_capacity(cfg.n_normal + cfg.n_attack);
    let mut placed = 0;
    for (&(s, len), &cut) in episodes.iter().zip(&cuts) {
        out.extend(std::iter::repeat_n(None, cut - placed));
        placed = cut;
        out.extend(std::iter::repeat_n(Some(s), len));
    }
    out.extend(std::iter::repeat_n(None, cfg.n_normal - placed));
    out
}
