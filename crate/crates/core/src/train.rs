//! Mini-batch training: teachers on cross-entropy, students on hard labels
//! mixed with decoupled distillation from a frozen teacher.
//!
//! Every epoch visits the rows in a fresh permutation drawn from a ChaCha8
//! stream seeded by [`TrainConfig::seed`]. Per-batch gradients are the mean of
//! per-sample gradients. With `threads > 1` a batch is cut into contiguous
//! chunks whose partial sums are added in chunk order, so results depend on
//! the thread count but not on scheduling.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::data::Dataset;
use crate::distill::{cross_entropy, cross_entropy_grad, student_objective, DkdConfig};
use crate::error::{Error, Result};
use crate::model::{Classifier, Trainable};
use crate::optim::{Optimizer, OptimizerKind};
use crate::store::Persist;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Present for distillation, absent for plain supervised training.
    pub dkd: Option<DkdConfig>,
    /// Multipliers on the hard-label loss for (normal, attack) rows.
    pub class_weights: Option<[f64; 2]>,
    /// Worker threads per batch; 1 gives a fixed summation order.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            dkd: None,
            class_weights: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if self.threads == 0 {
            return bad("thread count must be positive".into());
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad(format!("class weights must be positive, got {w:?}"));
            }
        }
        if let Some(d) = &self.dkd {
            d.validate()?;
        }
        Ok(())
    }
}

/// Mean per-sample losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Zero-based.
    pub epoch: usize,
    pub hard_loss: f64,
    /// Zero for supervised runs.
    pub dkd_loss: f64,
    /// `lambda * min(epoch / warmup, 1)`; zero for supervised runs.
    pub warmup_weight: f64,
    pub total_loss: f64,
}

pub const HISTORY_HEADER: &str = "epoch,hard_loss,dkd_loss,warmup_weight,total_loss";

pub fn history_to_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.hard_loss, r.dkd_loss, r.warmup_weight, r.total_loss
        ));
    }
    out
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    fs::write(path, history_to_csv(history))?;
    Ok(())
}

/// Frozen teacher used during distillation.
#[derive(Clone, Copy)]
pub enum Teacher<'a> {
    /// Logits computed on the fly for every batch.
    Live(&'a (dyn Classifier + Sync)),
    /// Precomputed logits, row-major `rows x classes`, aligned with the
    /// training rows (see [`cache_teacher_logits`]).
    Cached { logits: &'a [f64], classes: usize },
}

impl<'a, M: Classifier + Sync> From<&'a M> for Teacher<'a> {
    fn from(m: &'a M) -> Self {
        Teacher::Live(m)
    }
}

impl Teacher<'_> {
    fn output_dim(&self) -> usize {
        match self {
            Teacher::Live(t) => t.output_dim(),
            Teacher::Cached { classes, .. } => *classes,
        }
    }

    fn check(&self, data: &Dataset) -> Result<()> {
        match self {
            Teacher::Live(t) if t.input_dim() != data.num_features() => Err(Error::dim(
                "teacher input",
                t.input_dim(),
                data.num_features(),
            )),
            Teacher::Cached { logits, classes } if logits.len() != data.len() * classes => Err(
                Error::dim("cached teacher logits", data.len() * classes, logits.len()),
            ),
            _ => Ok(()),
        }
    }

    fn logits(&self, data: &Dataset, row: usize) -> Result<Vec<f64>> {
        match self {
            Teacher::Live(t) => t.forward(data.row(row)),
            Teacher::Cached { logits, classes } => {
                Ok(logits[row * classes..(row + 1) * classes].to_vec())
            }
        }
    }
}

/// Teacher logits for every row of `data`, for use with [`Teacher::Cached`].
pub fn cache_teacher_logits<M: Classifier + ?Sized>(
    teacher: &M,
    data: &Dataset,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len() * teacher.output_dim());
    for i in 0..data.len() {
        out.extend(teacher.forward(data.row(i))?);
    }
    Ok(out)
}

#[derive(Debug, Default)]
struct Partial {
    grad: Vec<f64>,
    hard: f64,
    dkd: f64,
    total: f64,
}

/// Training state that can be checkpointed and resumed.
#[derive(Debug, Clone)]
pub struct Trainer<M> {
    model: M,
    optimizer: Optimizer,
    rng: ChaCha8Rng,
    epoch: usize,
    history: Vec<EpochRecord>,
    cfg: TrainConfig,
}

impl<M: Trainable + Sync> Trainer<M> {
    pub fn new(model: M, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.parameter_count());
        Ok(Self {
            model,
            optimizer,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            epoch: 0,
            history: Vec::new(),
            cfg,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn into_parts(self) -> (M, Vec<EpochRecord>) {
        (self.model, self.history)
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    fn check_shapes(&self, data: &Dataset, teacher: Option<Teacher<'_>>) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        if self.model.input_dim() != data.num_features() {
            return Err(Error::dim(
                "model input",
                self.model.input_dim(),
                data.num_features(),
            ));
        }
        if self.model.output_dim() < 2 {
            return Err(Error::dim("model output", 2, self.model.output_dim()));
        }
        match (self.cfg.dkd.is_some(), teacher) {
            (true, None) => Err(Error::InvalidConfig(
                "distillation requires a teacher".into(),
            )),
            (false, Some(_)) => Err(Error::InvalidConfig(
                "a teacher was given but no distillation settings".into(),
            )),
            (_, Some(t)) => {
                t.check(data)?;
                if t.output_dim() != self.model.output_dim() {
                    return Err(Error::dim(
                        "teacher output",
                        self.model.output_dim(),
                        t.output_dim(),
                    ));
                }
                Ok(())
            }
            (false, None) => Ok(()),
        }
    }

    fn chunk(
        &self,
        data: &Dataset,
        rows: &[usize],
        teacher: Option<Teacher<'_>>,
        batch: usize,
    ) -> Result<Partial> {
        let mut p = Partial {
            grad: vec![0.0; self.model.parameter_count()],
            ..Partial::default()
        };
        for &i in rows {
            let x = data.row(i);
            let label = data.labels()[i] as usize;
            let weight = self.cfg.class_weights.map_or(1.0, |w| w[label]);
            let (logits, tape) = self.model.forward_tape(x)?;
            if logits.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: self.epoch,
                    batch,
                    loss: f64::NAN,
                });
            }
            let (hard, dkd, total, upstream) = match (&self.cfg.dkd, teacher) {
                (Some(cfg), Some(t)) => {
                    let t_logits = t.logits(data, i)?;
                    let l = student_objective(&t_logits, &logits, label, self.epoch, cfg, weight)?;
                    (l.hard, l.dkd, l.total, l.grad)
                }
                _ => {
                    let ce = weight * cross_entropy(&logits, label)?;
                    let mut g = cross_entropy_grad(&logits, label)?;
                    if weight != 1.0 {
                        g.iter_mut().for_each(|v| *v *= weight);
                    }
                    (ce, 0.0, ce, g)
                }
            };
            if !total.is_finite() || upstream.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch: self.epoch,
                    batch,
                    loss: total,
                });
            }
            p.hard += hard;
            p.dkd += dkd;
            p.total += total;
            self.model.backward_tape(&tape, &upstream, &mut p.grad)?;
        }
        Ok(p)
    }

    fn batch(
        &self,
        data: &Dataset,
        rows: &[usize],
        teacher: Option<Teacher<'_>>,
        batch: usize,
    ) -> Result<Partial> {
        if self.cfg.threads == 1 || rows.len() < 2 * self.cfg.threads {
            return self.chunk(data, rows, teacher, batch);
        }
        let size = rows.len().div_ceil(self.cfg.threads);
        let parts: Vec<Result<Partial>> = std::thread::scope(|s| {
            let handles: Vec<_> = rows
                .chunks(size)
                .map(|c| s.spawn(move || self.chunk(data, c, teacher, batch)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        });
        let mut acc: Option<Partial> = None;
        for part in parts {
            let part = part?;
            match &mut acc {
                None => acc = Some(part),
                Some(a) => {
                    a.grad.iter_mut().zip(&part.grad).for_each(|(x, y)| *x += y);
                    a.hard += part.hard;
                    a.dkd += part.dkd;
                    a.total += part.total;
                }
            }
        }
        Ok(acc.expect("non-empty batch"))
    }

    /// Runs one epoch and appends its record to the history.
    pub fn run_epoch(
        &mut self,
        data: &Dataset,
        teacher: Option<Teacher<'_>>,
    ) -> Result<EpochRecord> {
        self.check_shapes(data, teacher)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let (mut hard, mut dkd, mut total) = (0.0, 0.0, 0.0);
        for (b, rows) in order.chunks(self.cfg.batch_size).enumerate() {
            let mut p = self.batch(data, rows, teacher, b)?;
            let scale = 1.0 / rows.len() as f64;
            p.grad.iter_mut().for_each(|g| *g *= scale);
            self.optimizer.step_model(&mut self.model, &p.grad)?;
            hard += p.hard;
            dkd += p.dkd;
            total += p.total;
        }
        let n = data.len() as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            hard_loss: hard / n,
            dkd_loss: dkd / n,
            warmup_weight: self.cfg.dkd.map_or(0.0, |d| d.dkd_weight(self.epoch)),
            total_loss: total / n,
        };
        self.history.push(record);
        self.epoch += 1;
        Ok(record)
    }

    /// Runs the remaining epochs, calling `after_epoch` after each one.
    pub fn run_with(
        &mut self,
        data: &Dataset,
        teacher: Option<Teacher<'_>>,
        mut after_epoch: impl FnMut(&Self) -> Result<()>,
    ) -> Result<()> {
        while !self.is_done() {
            self.run_epoch(data, teacher)?;
            after_epoch(self)?;
        }
        Ok(())
    }

    pub fn run(&mut self, data: &Dataset, teacher: Option<Teacher<'_>>) -> Result<()> {
        self.run_with(data, teacher, |_| Ok(()))
    }
}

/// Plain supervised training on cross-entropy.
pub fn train_supervised<M: Trainable + Sync>(
    model: M,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<(M, Vec<EpochRecord>)> {
    if cfg.dkd.is_some() {
        return Err(Error::InvalidConfig(
            "supervised training takes no distillation settings".into(),
        ));
    }
    let mut t = Trainer::new(model, *cfg)?;
    t.run(train, None)?;
    Ok(t.into_parts())
}

/// Trains a KAN teacher on cross-entropy.
pub fn train_teacher(
    net: crate::kan::KanNetwork,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<(crate::kan::KanNetwork, Vec<EpochRecord>)> {
    train_supervised(net, train, cfg)
}

/// Trains `student` on the warm-up scheduled mix of hard labels and
/// decoupled distillation. The teacher is only read.
pub fn distill_student<M: Trainable + Sync>(
    student: M,
    teacher: Teacher<'_>,
    train: &Dataset,
    cfg: &TrainConfig,
) -> Result<(M, Vec<EpochRecord>)> {
    if cfg.dkd.is_none() {
        return Err(Error::InvalidConfig("distillation settings missing".into()));
    }
    let mut t = Trainer::new(student, *cfg)?;
    t.run(train, Some(teacher))?;
    Ok(t.into_parts())
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Model file bytes.
    pub model: Vec<u8>,
    /// Completed epochs.
    pub epoch: u64,
    /// Total loss of the last completed epoch.
    pub running_loss: f64,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
    pub optimizer: Optimizer,
    pub history: Vec<EpochRecord>,
}

impl<M: Persist + Sync> Trainer<M> {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.encode_model(),
            epoch: self.epoch as u64,
            running_loss: self.history.last().map_or(f64::NAN, |r| r.total_loss),
            rng_seed: self.rng.get_seed(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos(),
            optimizer: self.optimizer.clone(),
            history: self.history.clone(),
        }
    }

    /// Continues from `ckpt` under `cfg` (typically the original settings,
    /// possibly with more epochs).
    pub fn resume(ckpt: &Checkpoint, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = M::decode_model(&ckpt.model)?;
        if ckpt.optimizer.kind != cfg.optimizer {
            return Err(Error::InvalidConfig(format!(
                "checkpoint was written by {}, config asks for {}",
                ckpt.optimizer.kind, cfg.optimizer
            )));
        }
        if ckpt.optimizer.kind == OptimizerKind::Adam
            && ckpt.optimizer.m.len() != model.parameter_count()
        {
            return Err(Error::dim(
                "optimizer state",
                model.parameter_count(),
                ckpt.optimizer.m.len(),
            ));
        }
        let mut rng = ChaCha8Rng::from_seed(ckpt.rng_seed);
        rng.set_stream(ckpt.rng_stream);
        rng.set_word_pos(ckpt.rng_word_pos);
        Ok(Self {
            model,
            optimizer: ckpt.optimizer.clone(),
            rng,
            epoch: ckpt.epoch as usize,
            history: ckpt.history.clone(),
            cfg,
        })
    }
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let mut e = Encoder::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    e.bytes(&c.model);
    e.u64(c.epoch);
    e.f64(c.running_loss);
    e.raw(&c.rng_seed);
    e.u64(c.rng_stream);
    e.u128(c.rng_word_pos);
    let o = &c.optimizer;
    e.u8(o.kind.tag());
    e.f64(o.learning_rate);
    e.u64(o.step);
    e.u64(o.m.len() as u64);
    e.f64s(&o.m);
    e.f64s(&o.v);
    e.u64(c.history.len() as u64);
    for r in &c.history {
        e.u64(r.epoch as u64);
        e.f64(r.hard_loss);
        e.f64(r.dkd_loss);
        e.f64(r.warmup_weight);
        e.f64(r.total_loss);
    }
    e.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut d = Decoder::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
    let model = d.bytes()?.to_vec();
    let epoch = d.u64()?;
    let running_loss = d.f64()?;
    let rng_seed: [u8; 32] = d.raw(32)?.try_into().expect("32 bytes");
    let rng_stream = d.u64()?;
    let rng_word_pos = d.u128()?;
    let tag = d.u8()?;
    let kind = OptimizerKind::from_tag(tag)
        .ok_or_else(|| Error::Format(format!("unknown optimizer tag {tag}")))?;
    let learning_rate = d.f64()?;
    let step = d.u64()?;
    let n = d.u64()? as usize;
    if n > bytes.len() / 16 {
        return Err(Error::Format("optimizer state larger than file".into()));
    }
    let m = d.f64s(n)?;
    let v = d.f64s(n)?;
    let n_hist = d.u64()? as usize;
    if n_hist > bytes.len() / 40 {
        return Err(Error::Format("history larger than file".into()));
    }
    let mut history = Vec::with_capacity(n_hist);
    for _ in 0..n_hist {
        history.push(EpochRecord {
            epoch: d.u64()? as usize,
            hard_loss: d.f64()?,
            dkd_loss: d.f64()?,
            warmup_weight: d.f64()?,
            total_loss: d.f64()?,
        });
    }
    d.finish()?;
    Ok(Checkpoint {
        model,
        epoch,
        running_loss,
        rng_seed,
        rng_stream,
        rng_word_pos,
        optimizer: Optimizer {
            kind,
            learning_rate,
            step,
            m,
            v,
        },
        history,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, c: &Checkpoint) -> Result<()> {
    fs::write(path, encode_checkpoint(c))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::{KanNetwork, KanSpec};
    use crate::mlp::{Activation, MlpNetwork};

    /// Two Gaussian blobs separated along the first axis.
    fn blobs(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let c = if label == 1 { 1.5 } else { -1.5 };
            f.push(c + rng.random_range(-1.0..1.0));
            f.push(rng.random_range(-1.0..1.0));
            y.push(label);
        }
        Dataset::new(f, y, vec!["a".into(), "b".into()]).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 16,
            learning_rate: 1e-2,
            seed: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = blobs(64, 1);
        let net = KanNetwork::init(&KanSpec::new(vec![2, 3, 2], 5, 3), 2).unwrap();
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let cfg = TrainConfig {
                epochs: 1,
                learning_rate: 0.0,
                optimizer: kind,
                ..small_cfg()
            };
            let (out, hist) = train_teacher(net.clone(), &data, &cfg).unwrap();
            assert_eq!(out, net);
            assert_eq!(hist.len(), 1);
        }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let data = blobs(200, 3);
        let net = KanNetwork::init(&KanSpec::new(vec![2, 2], 5, 1), 4).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            ..small_cfg()
        };
        let (net, hist) = train_teacher(net, &data, &cfg).unwrap();
        let correct = (0..data.len())
            .filter(|&i| net.predict(data.row(i)).unwrap() == data.labels()[i] as usize)
            .count();
        assert!(correct as f64 / data.len() as f64 >= 0.99, "{correct}");
        assert!(hist.last().unwrap().total_loss < hist[0].total_loss);
    }

    #[test]
    fn same_seed_same_history() {
        let data = blobs(100, 5);
        let net = MlpNetwork::init(&[2, 4, 2], Activation::Relu, 1).unwrap();
        let a = train_supervised(net.clone(), &data, &small_cfg()).unwrap();
        let b = train_supervised(net, &data, &small_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threads_are_deterministic() {
        let data = blobs(300, 5);
        let net = MlpNetwork::init(&[2, 4, 2], Activation::Relu, 1).unwrap();
        let cfg = TrainConfig {
            threads: 3,
            ..small_cfg()
        };
        let a = train_supervised(net.clone(), &data, &cfg).unwrap();
        let b = train_supervised(net.clone(), &data, &cfg).unwrap();
        assert_eq!(a, b);
        let single = train_supervised(net, &data, &small_cfg()).unwrap();
        for (x, y) in a.0.flat_params().iter().zip(single.0.flat_params()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_lambda_matches_supervised_trajectory() {
        let data = blobs(120, 6);
        let teacher = KanNetwork::init(&KanSpec::new(vec![2, 3, 2], 5, 1), 8).unwrap();
        let student = MlpNetwork::init(&[2, 5, 2], Activation::Relu, 3).unwrap();
        let plain = train_supervised(student.clone(), &data, &small_cfg()).unwrap();
        let cfg = TrainConfig {
            dkd: Some(DkdConfig {
                lambda: 0.0,
                ..DkdConfig::default()
            }),
            ..small_cfg()
        };
        let distilled = distill_student(student, (&teacher).into(), &data, &cfg).unwrap();
        assert_eq!(plain.0, distilled.0);
        for (a, b) in plain.1.iter().zip(&distilled.1) {
            assert_eq!(a.hard_loss, b.hard_loss);
            assert_eq!(a.total_loss, b.total_loss);
        }
    }

    #[test]
    fn warmup_weight_is_logged() {
        let data = blobs(40, 6);
        let teacher = KanNetwork::init(&KanSpec::new(vec![2, 2], 3, 1), 8).unwrap();
        let student = MlpNetwork::init(&[2, 3, 2], Activation::Relu, 3).unwrap();
        let cfg = TrainConfig {
            epochs: 7,
            dkd: Some(DkdConfig {
                lambda: 0.2,
                warmup_epochs: 5,
                ..DkdConfig::default()
            }),
            ..small_cfg()
        };
        let (_, hist) = distill_student(student, (&teacher).into(), &data, &cfg).unwrap();
        let w: Vec<f64> = hist.iter().map(|r| r.warmup_weight).collect();
        let expected = [0.0, 0.04, 0.08, 0.12, 0.16, 0.2, 0.2];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(hist.iter().all(|r| r.dkd_loss > 0.0));
    }

    #[test]
    fn cached_teacher_matches_live() {
        let data = blobs(80, 4);
        let teacher = KanNetwork::init(&KanSpec::new(vec![2, 3, 2], 5, 1), 8).unwrap();
        let student = MlpNetwork::init(&[2, 5, 2], Activation::Relu, 3).unwrap();
        let cfg = TrainConfig {
            dkd: Some(DkdConfig::default()),
            ..small_cfg()
        };
        let live = distill_student(student.clone(), (&teacher).into(), &data, &cfg).unwrap();
        let logits = cache_teacher_logits(&teacher, &data).unwrap();
        let cached = Teacher::Cached {
            logits: &logits,
            classes: 2,
        };
        assert_eq!(
            distill_student(student.clone(), cached, &data, &cfg).unwrap(),
            live
        );
        let short = Teacher::Cached {
            logits: &logits[2..],
            classes: 2,
        };
        assert!(distill_student(student, short, &data, &cfg).is_err());
    }

    #[test]
    fn mode_mismatches_rejected() {
        let data = blobs(10, 1);
        let teacher = KanNetwork::init(&KanSpec::new(vec![2, 2], 3, 1), 8).unwrap();
        let student = MlpNetwork::init(&[2, 3, 2], Activation::Relu, 3).unwrap();
        assert!(distill_student(student.clone(), (&teacher).into(), &data, &small_cfg()).is_err());
        let cfg = TrainConfig {
            dkd: Some(DkdConfig::default()),
            ..small_cfg()
        };
        assert!(train_supervised(student.clone(), &data, &cfg).is_err());
        let wide = MlpNetwork::init(&[3, 3, 2], Activation::Relu, 3).unwrap();
        assert!(matches!(
            train_supervised(wide, &data, &small_cfg()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn divergence_aborts() {
        let data = blobs(32, 1);
        let mut net = MlpNetwork::init(&[2, 3, 2], Activation::Relu, 3).unwrap();
        net.bias_mut(1)[0] = f64::INFINITY;
        assert!(matches!(
            train_supervised(net, &data, &small_cfg()),
            Err(Error::Divergence {
                epoch: 0,
                batch: 0,
                ..
            })
        ));
    }

    #[test]
    fn resume_is_bit_exact() {
        let data = blobs(90, 2);
        let teacher = KanNetwork::init(&KanSpec::new(vec![2, 3, 2], 4, 2), 1).unwrap();
        let student = MlpNetwork::init(&[2, 4, 2], Activation::Relu, 5).unwrap();
        let cfg = TrainConfig {
            epochs: 6,
            dkd: Some(DkdConfig::default()),
            ..small_cfg()
        };
        let straight = distill_student(student.clone(), (&teacher).into(), &data, &cfg).unwrap();

        let mut first = Trainer::new(student, cfg).unwrap();
        for _ in 0..2 {
            first.run_epoch(&data, Some((&teacher).into())).unwrap();
        }
        let bytes = encode_checkpoint(&first.checkpoint());
        let ckpt = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ckpt, first.checkpoint());
        assert_eq!(encode_checkpoint(&ckpt), bytes);
        let mut resumed = Trainer::<MlpNetwork>::resume(&ckpt, cfg).unwrap();
        resumed.run(&data, Some((&teacher).into())).unwrap();
        assert_eq!(resumed.into_parts(), straight);
    }

    #[test]
    fn history_csv() {
        let h = [EpochRecord {
            epoch: 0,
            hard_loss: 0.5,
            dkd_loss: 0.25,
            warmup_weight: 0.0,
            total_loss: 0.4,
        }];
        assert_eq!(
            history_to_csv(&h),
            format!("{HISTORY_HEADER}\n0,0.5,0.25,0,0.4\n")
        );
    }
}
