mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kandistill::error::ErrorCategory;

use crate::config::Preset;

#[derive(Parser)]
#[command(
    name = "kandistill",
    version,
    about = "Train KAN teachers and distill them into small MLP students"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by the data and training commands. Anything left unset
/// falls back to the config file, then the preset, then built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct Tuning {
    #[arg(long, value_parser = ["swat", "wadi"])]
    pub preset: Option<String>,
    /// Plain `key = value` settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = ["adam", "sgd"])]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mask_prob: Option<f64>,
    #[arg(long, value_parser = ["standard", "minmax"])]
    pub scaler: Option<String>,
    #[arg(long, value_parser = ["sequential", "shuffled"])]
    pub split: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Comma-separated hidden widths of the teacher.
    #[arg(long)]
    pub teacher_hidden: Option<String>,
    /// Comma-separated hidden widths of the student.
    #[arg(long)]
    pub student_hidden: Option<String>,
    #[arg(long, value_parser = ["relu", "tanh", "sigmoid", "silu"])]
    pub activation: Option<String>,
    /// Hard-loss weights `normal,attack`.
    #[arg(long)]
    pub class_weights: Option<String>,
    /// Worker threads per batch (results depend on the count).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Force single-threaded, fixed-order gradient summation.
    #[arg(long)]
    pub deterministic: bool,
}

impl Tuning {
    pub fn preset(&self) -> Option<Preset> {
        self.preset
            .as_deref()
            .map(|p| p.parse().expect("validated by clap"))
    }

    /// Explicitly given flags as `(key, value)` pairs.
    pub fn flags(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! push {
            ($($field:ident => $key:literal),* $(,)?) => {
                $(if let Some(v) = &self.$field { out.push(($key, v.to_string())); })*
            };
        }
        push!(
            grid => "grid", order => "order", alpha => "alpha", beta => "beta",
            lambda => "lambda", warmup => "warmup", temperature => "temperature",
            epochs => "epochs", batch => "batch", lr => "lr", optimizer => "optimizer",
            seed => "seed", mask_prob => "mask-prob", scaler => "scaler", split => "split",
            test_fraction => "test-fraction", teacher_hidden => "teacher-hidden",
            student_hidden => "student-hidden", activation => "activation",
            class_weights => "class-weights", threads => "threads",
        );
        if self.deterministic {
            out.push(("deterministic", "true".into()));
        }
        out
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// Prepared training set.
    #[arg(long)]
    pub train: PathBuf,
    /// Prepared test set, evaluated after training.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Model file to write (default: under the output directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, split and standardize an attack-file CSV.
    Prepare {
        csv: PathBuf,
        #[arg(long)]
        label_column: String,
        /// Directory for `train.kdds` and `test.kdds`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Label values meaning "attack" (repeatable; default attack, -1).
        #[arg(long = "positive-label")]
        positive_labels: Vec<String>,
        /// Extra columns to treat as metadata (repeatable).
        #[arg(long = "metadata-column")]
        metadata_columns: Vec<String>,
        #[arg(long, default_value_t = ',')]
        delimiter: char,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Write a synthetic attack-file CSV.
    GenSynthetic {
        #[arg(long, default_value_t = 20_000)]
        rows: usize,
        #[arg(long, default_value_t = 20)]
        features: usize,
        #[arg(long, default_value_t = 0.06)]
        attack_fraction: f64,
        #[arg(long, default_value_t = 0.0)]
        label_noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a KAN teacher on cross-entropy.
    TrainTeacher(TrainArgs),
    /// Train an MLP student with decoupled distillation from a teacher.
    Distill {
        #[arg(long)]
        teacher: PathBuf,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Train an MLP student on hard labels only.
    TrainStudent(TrainArgs),
    /// Evaluate a model on a prepared dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the metrics as `key=value` lines.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the 2x2 confusion matrix as CSV.
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Write per-sample hidden activations or logits as CSV.
    ExportEmbeddings {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "penultimate")]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Usage => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Divergence => 4,
        ErrorCategory::Model => 5,
        ErrorCategory::Io => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare {
            csv,
            label_column,
            out_dir,
            positive_labels,
            metadata_columns,
            delimiter,
            tuning,
        } => commands::prepare(commands::PrepareArgs {
            csv,
            label_column,
            out_dir,
            positive_labels,
            metadata_columns,
            delimiter,
            tuning,
        }),
        Command::GenSynthetic {
            rows,
            features,
            attack_fraction,
            label_noise,
            seed,
            out,
        } => commands::gen_synthetic(rows, features, attack_fraction, label_noise, seed, out),
        Command::TrainTeacher(args) => commands::train_teacher(&args),
        Command::Distill { teacher, args } => commands::train_student(&args, Some(&teacher)),
        Command::TrainStudent(args) => commands::train_student(&args, None),
        Command::Eval {
            model,
            data,
            report,
            confusion,
        } => commands::eval(&model, &data, report.as_deref(), confusion.as_deref()),
        Command::ExportEmbeddings {
            model,
            data,
            layer,
            out,
        } => commands::export_embeddings(&model, &data, &layer, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
