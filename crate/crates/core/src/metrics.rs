//! Binary classification metrics with attack (label 1) as the positive class.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{argmax, Classifier};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(predicted: &[u8], actual: &[u8]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::dim("predictions", actual.len(), predicted.len()));
        }
        let mut m = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            m.record(p, a);
        }
        Ok(m)
    }

    pub fn record(&mut self, predicted: u8, actual: u8) {
        match (predicted == 1, actual == 1) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn merge(self, other: Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Rows are actual (normal, attack), columns predicted (normal, attack).
    pub fn to_csv(&self) -> String {
        format!(
            "actual\\predicted,normal,attack\nnormal,{},{}\nattack,{},{}\n",
            self.tn, self.fp, self.fn_, self.tp
        )
    }
}

/// Metrics with zero-denominator conventions applied (value 0, flag set).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        let c = confusion;
        if c.total() == 0 {
            return Err(Error::Data("cannot evaluate on an empty dataset".into()));
        }
        let (accuracy, _) = ratio(c.tp + c.tn, c.total());
        let (precision, precision_undefined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_undefined) = ratio(c.tp, c.tp + c.fn_);
        let (f1, f1_undefined) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        Ok(Self {
            confusion,
            accuracy,
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
            f1_undefined,
        })
    }

    /// `key=value` lines, one metric per line.
    pub fn to_key_value(&self) -> String {
        let c = &self.confusion;
        format!(
            "tp={}\nfp={}\ntn={}\nfn={}\naccuracy={}\nprecision={}\nrecall={}\nf1={}\n\
             precision_undefined={}\nrecall_undefined={}\nf1_undefined={}\n",
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.precision_undefined,
            self.recall_undefined,
            self.f1_undefined
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.confusion;
        let flag = |u: bool| if u { " (undefined)" } else { "" };
        writeln!(f, "Acc (%)   {:>7.2}", 100.0 * self.accuracy)?;
        writeln!(
            f,
            "Prec (%)  {:>7.2}{}",
            100.0 * self.precision,
            flag(self.precision_undefined)
        )?;
        writeln!(
            f,
            "Rec (%)   {:>7.2}{}",
            100.0 * self.recall,
            flag(self.recall_undefined)
        )?;
        writeln!(
            f,
            "F1 (%)    {:>7.2}{}",
            100.0 * self.f1,
            flag(self.f1_undefined)
        )?;
        writeln!(f)?;
        writeln!(f, "              pred normal  pred attack")?;
        writeln!(f, "normal        {:>11}  {:>11}", c.tn, c.fp)?;
        write!(f, "attack        {:>11}  {:>11}", c.fn_, c.tp)
    }
}

/// Argmax predictions of `model` over every row.
pub fn predict_all<M: Classifier + ?Sized>(model: &M, data: &Dataset) -> Result<Vec<u8>> {
    if model.input_dim() != data.num_features() {
        return Err(Error::dim(
            "model input",
            model.input_dim(),
            data.num_features(),
        ));
    }
    (0..data.len())
        .map(|i| Ok(argmax(&model.forward(data.row(i))?) as u8))
        .collect()
}

/// Evaluates `model` with the argmax decision rule.
pub fn evaluate<M: Classifier + ?Sized>(model: &M, data: &Dataset) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let pred = predict_all(model, data)?;
    EvalReport::from_confusion(ConfusionMatrix::from_predictions(&pred, data.labels())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingLayer {
    /// Activations entering the output layer.
    Penultimate,
    Logits,
}

impl FromStr for EmbeddingLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "penultimate" | "hidden" => Ok(EmbeddingLayer::Penultimate),
            "logits" | "output" => Ok(EmbeddingLayer::Logits),
            other => Err(Error::InvalidConfig(format!(
                "unknown layer tag `{other}` (expected `penultimate` or `logits`)"
            ))),
        }
    }
}

/// Writes one CSV row per sample: embedding values, then the true label.
pub fn export_embeddings<M: Classifier + ?Sized>(
    model: &M,
    data: &Dataset,
    layer: EmbeddingLayer,
    path: impl AsRef<Path>,
) -> Result<()> {
    if model.input_dim() != data.num_features() {
        return Err(Error::dim(
            "model input",
            model.input_dim(),
            data.num_features(),
        ));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..data.len() {
        let x = data.row(i);
        let emb = match layer {
            EmbeddingLayer::Penultimate => model.penultimate(x)?,
            EmbeddingLayer::Logits => model.forward(x)?,
        };
        let mut line = String::new();
        for v in emb {
            line.push_str(&format!("{v:e},"));
        }
        line.push_str(&data.labels()[i].to_string());
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
