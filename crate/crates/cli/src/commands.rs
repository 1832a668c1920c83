use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use kandistill::data::{
    self, load_csv, prepare as prepare_table, read_prepared, write_prepared, CsvOptions, Dataset,
    PrepareOptions, Prepared, PreparedFile, SyntheticConfig,
};
use kandistill::kan::{KanNetwork, KanSpec};
use kandistill::metrics::{
    evaluate, export_embeddings as write_embeddings, EmbeddingLayer, EvalReport,
};
use kandistill::mlp::MlpNetwork;
use kandistill::model::Classifier;
use kandistill::store::{load_kan, load_model, save, Persist};
use kandistill::train::{
    cache_teacher_logits, load_checkpoint, save_checkpoint, write_history, Teacher, TrainConfig,
    Trainer,
};
use kandistill::{Error, Result};

use crate::config::{read_config_file, resolve, RunConfig};
use crate::manifest::RunManifest;
use crate::{TrainArgs, Tuning};

pub const OUT_DIR_ENV: &str = "KANDISTILL_OUT_DIR";

fn out_dir(explicit: Option<PathBuf>) -> Result<PathBuf> {
    let dir = explicit
        .or_else(|| env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run_config(t: &Tuning) -> Result<RunConfig> {
    let file = match &t.config {
        Some(p) => read_config_file(p)?,
        None => Default::default(),
    };
    resolve(t.preset(), &file, &t.flags())
}

/// Names the offending file in I/O errors.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })
}

/// `teacher.kdkd` -> `teacher.<suffix>`, next to the model.
fn sibling(model: &Path, suffix: &str) -> PathBuf {
    model.with_extension(suffix)
}

pub struct PrepareArgs {
    pub csv: PathBuf,
    pub label_column: String,
    pub out_dir: Option<PathBuf>,
    pub positive_labels: Vec<String>,
    pub metadata_columns: Vec<String>,
    pub delimiter: char,
    pub tuning: Tuning,
}

pub fn prepare(args: PrepareArgs) -> Result<()> {
    let cfg = run_config(&args.tuning)?;
    if !args.delimiter.is_ascii() {
        return Err(Error::InvalidConfig(
            "delimiter must be a single ASCII character".into(),
        ));
    }
    let mut opts = CsvOptions::new(args.label_column);
    opts.delimiter = args.delimiter as u8;
    opts.metadata_columns = args.metadata_columns;
    if !args.positive_labels.is_empty() {
        opts.positive_labels = args
            .positive_labels
            .iter()
            .map(|l| data::normalize_label(l))
            .collect();
    }

    let table = at(&args.csv, load_csv(&args.csv, &opts))?;
    let label_mapping = table.label_mapping.clone();
    let prepared = prepare_table(
        table,
        &PrepareOptions {
            test_fraction: cfg.test_fraction,
            split: cfg.split,
            scaler: cfg.scaler,
            mask_prob: cfg.mask_prob,
            seed: cfg.seed,
        },
    )?;
    let Prepared {
        train,
        test,
        rows_dropped,
        masked_cells: masked,
    } = prepared;
    if train.is_single_class() {
        eprintln!("warning: the training split holds a single class");
    }

    let dir = out_dir(args.out_dir)?;
    let train_path = dir.join("train.kdds");
    let test_path = dir.join("test.kdds");
    write_prepared(
        &train_path,
        &PreparedFile {
            dataset: train.clone(),
            rows_dropped,
        },
    )?;
    write_prepared(
        &test_path,
        &PreparedFile {
            dataset: test.clone(),
            rows_dropped,
        },
    )?;

    println!("label mapping:");
    for (raw, class) in &label_mapping {
        println!(
            "  {raw} -> {}",
            if *class == 1 { "attack" } else { "normal" }
        );
    }
    println!("dropped columns ({}):", train.dropped_columns.len());
    for d in &train.dropped_columns {
        println!("  {}\t{}", d.name, d.reason);
    }
    println!("rows dropped for missing cells: {rows_dropped}");
    println!("features: {}", train.num_features());
    for (name, ds, path) in [("train", &train, &train_path), ("test", &test, &test_path)] {
        let (normal, attack) = ds.class_counts();
        println!(
            "{name}: {} rows ({normal} normal, {attack} attack) -> {}",
            ds.len(),
            path.display()
        );
    }
    if masked > 0 {
        println!("masked cells in train: {masked}");
    }
    Ok(())
}

pub fn gen_synthetic(
    rows: usize,
    features: usize,
    attack_fraction: f64,
    label_noise: f64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    if !(0.0..1.0).contains(&attack_fraction) {
        return Err(Error::InvalidConfig(
            "attack fraction must lie in [0, 1)".into(),
        ));
    }
    let mut cfg = SyntheticConfig::new(rows, features, seed);
    cfg.n_attack = (rows as f64 * attack_fraction).round() as usize;
    cfg.n_normal = rows - cfg.n_attack;
    cfg.label_noise = label_noise;
    let (ds, _) = data::gen_synthetic(&cfg)?;
    let path = match out {
        Some(p) => p,
        None => out_dir(None)?.join("synthetic.csv"),
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let mut header = vec!["Timestamp".to_string()];
    header.extend(ds.feature_names().iter().cloned());
    header.push("Normal/Attack".into());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..ds.len() {
        let mut rec = vec![i.to_string()];
        rec.extend(ds.row(i).iter().map(|v| v.to_string()));
        rec.push(
            if ds.labels()[i] == 1 {
                "Attack"
            } else {
                "Normal"
            }
            .into(),
        );
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    let (normal, attack) = ds.class_counts();
    println!(
        "wrote {} rows ({normal} normal, {attack} attack) to {}",
        ds.len(),
        path.display()
    );
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::Data(format!("{other:?}")),
    }
}

fn load_split(path: &Path) -> Result<Dataset> {
    let ds = at(path, read_prepared(path))?.dataset;
    if ds.is_single_class() {
        eprintln!("warning: {} holds a single class", path.display());
    }
    Ok(ds)
}

fn report_metrics(
    model: &dyn Classifier,
    data: &Dataset,
    name: &str,
    model_path: &Path,
) -> Result<()> {
    let r = evaluate(model, data)?;
    let path = sibling(model_path, &format!("{name}-metrics.txt"));
    fs::write(&path, r.to_key_value())?;
    println!("{name} ({} rows):\n{r}", data.len());
    println!("{name} metrics -> {}", path.display());
    Ok(())
}

/// Runs a trainer to completion, checkpointing after every epoch, then writes
/// the model, history and metrics.
fn drive<M: Persist + Classifier + Sync>(
    mut trainer: Trainer<M>,
    args: &TrainArgs,
    train: &Dataset,
    teacher: Option<Teacher<'_>>,
    model_path: &Path,
) -> Result<()> {
    let ckpt_path = sibling(model_path, "ckpt");
    let total = trainer.config().epochs;
    trainer.run_with(train, teacher, |t| {
        let r = t.history().last().expect("epoch recorded");
        eprintln!(
            "epoch {}/{total} hard={:.6} dkd={:.6} weight={:.3} total={:.6}",
            r.epoch + 1,
            r.hard_loss,
            r.dkd_loss,
            r.warmup_weight,
            r.total_loss
        );
        let tmp = ckpt_path.with_extension("ckpt.tmp");
        save_checkpoint(&tmp, &t.checkpoint())?;
        fs::rename(&tmp, &ckpt_path)?;
        Ok(())
    })?;
    let history_path = sibling(model_path, "history.csv");
    write_history(&history_path, trainer.history())?;
    let model = trainer.into_model();
    save(&model, model_path)?;
    println!(
        "model ({} parameters) -> {}",
        model.parameter_count(),
        model_path.display()
    );
    println!("history -> {}", history_path.display());
    report_metrics(&model, train, "train", model_path)?;
    if let Some(test) = &args.test {
        report_metrics(&model, &load_split(test)?, "test", model_path)?;
    }
    Ok(())
}

fn start<M: Persist + Sync>(
    fresh: impl FnOnce() -> Result<M>,
    resume: Option<&Path>,
    cfg: TrainConfig,
) -> Result<Trainer<M>> {
    match resume {
        Some(p) => {
            let t = Trainer::resume(&at(p, load_checkpoint(p))?, cfg)?;
            eprintln!("resuming after epoch {}", t.epoch());
            Ok(t)
        }
        None => Trainer::new(fresh()?, cfg),
    }
}

fn manifest(
    command: &str,
    cfg: &RunConfig,
    args: &TrainArgs,
    teacher: Option<&Path>,
    model_path: &Path,
) -> Result<()> {
    let mut m = RunManifest::new(command, cfg);
    m.input("train", &args.train)?;
    if let Some(t) = &args.test {
        m.input("test", t)?;
    }
    if let Some(t) = teacher {
        m.input("teacher", t)?;
    }
    if let Some(r) = &args.resume {
        m.input("resume", r)?;
    }
    m.artifact("model", model_path);
    m.artifact("history", &sibling(model_path, "history.csv"));
    m.artifact("checkpoint", &sibling(model_path, "ckpt"));
    m.artifact("train-metrics", &sibling(model_path, "train-metrics.txt"));
    if args.test.is_some() {
        m.artifact("test-metrics", &sibling(model_path, "test-metrics.txt"));
    }
    let path = sibling(model_path, "manifest.json");
    m.write(&path)?;
    eprintln!("manifest -> {}", path.display());
    Ok(())
}

fn model_path(args: &TrainArgs, default_name: &str) -> Result<PathBuf> {
    match &args.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            Ok(p.clone())
        }
        None => Ok(out_dir(None)?.join(default_name)),
    }
}

pub fn train_teacher(args: &TrainArgs) -> Result<()> {
    let cfg = run_config(&args.tuning)?;
    let path = model_path(args, "teacher.kdkd")?;
    let train = load_split(&args.train)?;
    manifest("train-teacher", &cfg, args, None, &path)?;
    let spec = KanSpec {
        dims: cfg.teacher_dims(train.num_features()),
        grid_size: cfg.grid,
        order: cfg.order,
        domain: cfg.domain,
    };
    let trainer = start(
        || KanNetwork::init(&spec, cfg.seed),
        args.resume.as_deref(),
        cfg.train_config(false),
    )?;
    check_inputs(trainer.model(), &train)?;
    drive(trainer, args, &train, None, &path)
}

/// Trains the student MLP, distilling from `teacher` when given.
pub fn train_student(args: &TrainArgs, teacher: Option<&Path>) -> Result<()> {
    let cfg = run_config(&args.tuning)?;
    let (command, default_name) = match teacher {
        Some(_) => ("distill", "student-dkd.kdkd"),
        None => ("train-student", "student.kdkd"),
    };
    let path = model_path(args, default_name)?;
    let train = load_split(&args.train)?;
    manifest(command, &cfg, args, teacher, &path)?;
    let dims = cfg.student_dims(train.num_features());
    let trainer = start(
        || MlpNetwork::init(&dims, cfg.activation, cfg.seed),
        args.resume.as_deref(),
        cfg.train_config(teacher.is_some()),
    )?;
    check_inputs(trainer.model(), &train)?;
    match teacher {
        Some(tp) => {
            let teacher = at(tp, load_kan(tp))?;
            check_inputs(&teacher, &train)?;
            println!("teacher: {} parameters", teacher.parameter_count());
            // The teacher is frozen, so its logits are computed once up front.
            let logits = cache_teacher_logits(&teacher, &train)?;
            let cached = Teacher::Cached {
                logits: &logits,
                classes: teacher.output_dim(),
            };
            drive(trainer, args, &train, Some(cached), &path)
        }
        None => drive(trainer, args, &train, None, &path),
    }
}

fn check_inputs(model: &dyn Classifier, data: &Dataset) -> Result<()> {
    if model.input_dim() != data.num_features() {
        return Err(Error::Dimension {
            what: "model input",
            expected: model.input_dim(),
            got: data.num_features(),
        });
    }
    Ok(())
}

pub fn eval(
    model_path: &Path,
    data_path: &Path,
    report: Option<&Path>,
    confusion: Option<&Path>,
) -> Result<()> {
    let model = at(model_path, load_model(model_path))?;
    let data = at(data_path, read_prepared(data_path))?.dataset;
    check_inputs(&model, &data)?;
    let r: EvalReport = evaluate(&model, &data)?;
    println!(
        "model: {} ({} parameters)",
        model.kind_name(),
        model.parameter_count()
    );
    println!("data: {} rows", data.len());
    println!("{r}");
    if let Some(p) = report {
        fs::write(p, r.to_key_value())?;
    }
    if let Some(p) = confusion {
        fs::write(p, r.confusion.to_csv())?;
    }
    Ok(())
}

pub fn export_embeddings(
    model_path: &Path,
    data_path: &Path,
    layer: &str,
    out: &Path,
) -> Result<()> {
    let layer: EmbeddingLayer = layer.parse()?;
    let model = at(model_path, load_model(model_path))?;
    let data = at(data_path, read_prepared(data_path))?.dataset;
    write_embeddings(&model, &data, layer, out)?;
    println!("wrote {} rows to {}", data.len(), out.display());
    Ok(())
}
