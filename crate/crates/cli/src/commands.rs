use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use kd_core::corpus::{
    encode_all, generate_synthetic, load_dataset, load_soft_labels, prepare, remap_labels, write_dataset, write_dataset_to,
    write_soft_labels_to, DataFormat, LabelMapping, PrepareOptions, SynthConfig,
};
use kd_core::distill::{generate_soft_labels, TeacherSource};
use kd_core::error::DataError;
use kd_core::eval::{default_lambda_grid, evaluate, lambda_sweep, latency_benchmark, size_report, ResultTable};
use kd_core::nn::{init_params, ModelConfig};
use kd_core::train::{load_checkpoint, save_checkpoint, train_model, train_teacher, Checkpoint, TrainConfig};
use kd_core::{LabelSpace, SoftLabelSet};
use log::{info, warn};

use crate::args::*;
use crate::datadir::{write_prepared, LabelsFile, PreparedDir, MANIFEST_FILE};
use crate::manifest::{beside, RunManifest};
use crate::UsageError;

/// Shared run context: global flags plus the manifest being built.
pub struct Ctx {
    pub seed: u64,
    pub threads: usize,
    pub manifest: RunManifest,
}

fn write_output(out: &Output, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    match out {
        Output::Stdout => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
        Output::File(path) => {
            let file = File::create(path).map_err(|source| DataError::Io {
                path: path.clone(),
                source,
            })?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn write_text(out: &Output, text: &str) -> Result<()> {
    write_output(out, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
}

/// Writes the manifest beside `out`, or logs it when `out` is stdout.
fn finish(ctx: &mut Ctx, out: &Output) -> Result<()> {
    match out {
        Output::File(path) => ctx.manifest.write(&beside(path)),
        Output::Stdout => {
            info!("run manifest:\n{}", ctx.manifest.to_json());
            Ok(())
        }
    }
}

fn apply_train_args(base: TrainConfig, t: &TrainArgs, seed: u64, data: &PreparedDir) -> TrainConfig {
    let mut cfg = TrainConfig {
        max_epochs: t.epochs,
        patience: t.patience,
        batch_size: t.batch_size,
        learning_rate: t.lr,
        min_delta: t.min_delta,
        clip_norm: t.clip_norm,
        seed,
        ..base
    };
    cfg.model.vocab_size = cfg.model.vocab_size.max(data.vocab.max_size());
    if let Some(e) = data.encoded.train.first() {
        cfg.model.max_len = e.token_ids.len();
    }
    cfg
}

fn load_data(ctx: &mut Ctx, dir: &Path) -> Result<PreparedDir> {
    let data = PreparedDir::load(dir)?;
    for f in data.files() {
        ctx.manifest.input(&f)?;
    }
    Ok(data)
}

fn load_ckpt(ctx: &mut Ctx, path: &Path) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    ctx.manifest.input(path)?;
    Ok(ckpt)
}

fn check_classes(what: &str, model: usize, data: &LabelSpace) -> Result<()> {
    if model != data.classes {
        return Err(DataError::Invalid(format!("{what} has {model} classes, the data has {}", data.classes)).into());
    }
    Ok(())
}

fn builtin_teacher(ckpt: Checkpoint) -> TeacherSource {
    TeacherSource::Builtin {
        params: ckpt.params,
        vocab: ckpt.vocab,
    }
}

/// Soft labels for the training split from a file or a teacher checkpoint.
fn soft_source(ctx: &mut Ctx, data: &PreparedDir, file: Option<&Path>, teacher: Option<&Path>) -> Result<Option<SoftLabelSet>> {
    if let Some(path) = file {
        ctx.manifest.input(path)?;
        return Ok(Some(load_soft_labels(path, &data.labels.labels)?));
    }
    if let Some(path) = teacher {
        let ckpt = load_ckpt(ctx, path)?;
        check_classes("teacher", ckpt.labels.classes, &data.labels.labels)?;
        return Ok(Some(generate_soft_labels(&builtin_teacher(ckpt), &data.raw.train)?));
    }
    Ok(None)
}

pub fn synth(ctx: &mut Ctx, a: &SynthArgs) -> Result<()> {
    let corpus = generate_synthetic(&SynthConfig {
        classes: a.k,
        n_per_class: a.n,
        noise_rate: a.noise,
        words_per_class: a.words_per_class,
        seed: ctx.seed,
        ..SynthConfig::default()
    })?;
    match &a.out {
        Output::File(path) => write_dataset(path, &corpus.examples, DataFormat::from_path(path))?,
        out => write_output(out, |w| write_dataset_to(w, &corpus.examples, DataFormat::Jsonl))?,
    }
    info!("wrote {} examples", corpus.examples.len());
    ctx.manifest.output(&a.out);
    finish(ctx, &a.out)
}

pub fn prepare_cmd(ctx: &mut Ctx, a: &PrepareArgs) -> Result<()> {
    let format = a.format.unwrap_or_else(|| DataFormat::from_path(&a.data));
    ctx.manifest.input(&a.data)?;
    ctx.manifest.phase("load");
    let (examples, labels_file) = match a.classes {
        Some(k) => {
            let (examples, labels) = load_dataset(&a.data, format, Some(k))?;
            let mapping = LabelMapping {
                original: (0..k).collect(),
            };
            (examples, LabelsFile { labels, mapping })
        }
        None => {
            let (examples, _) = load_dataset(&a.data, format, None)?;
            let (examples, mapping) = remap_labels(&examples);
            if !mapping.is_identity() {
                info!("labels remapped onto 0..{}: {:?}", mapping.original.len(), mapping.original);
            }
            let labels = LabelSpace::new(mapping.original.len())?;
            (examples, LabelsFile { labels, mapping })
        }
    };
    let ratios: [f64; 3] = a.ratios.as_slice().try_into().map_err(|_| UsageError("--ratios takes three values".into()))?;
    let opts = PrepareOptions {
        ratios,
        seed: ctx.seed,
        max_size: a.max_vocab,
        min_freq: a.min_freq,
        max_len: a.max_len,
    };
    ctx.manifest.phase("prepare");
    let prepared = prepare(examples, &labels_file.labels, &opts)?;
    let [tr, va, te] = prepared.raw.sizes();
    info!("split {tr}/{va}/{te}, vocabulary {} tokens", prepared.vocab.len());
    ctx.manifest.phase("write");
    for path in write_prepared(&a.out_dir, &prepared.raw, &prepared.encoded, &prepared.vocab, &labels_file)? {
        ctx.manifest.output(path.display());
    }
    ctx.manifest.write(&a.out_dir.join(MANIFEST_FILE))
}

fn save_trained(ctx: &mut Ctx, out: &Path, ckpt: &Checkpoint, report: Option<&Output>) -> Result<()> {
    save_checkpoint(out, ckpt)?;
    ctx.manifest.output(out.display());
    let report_out = report.cloned().unwrap_or_else(|| {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".report.json");
        Output::File(out.with_file_name(name))
    });
    let json = ckpt.report.as_ref().map(|r| r.to_json()).unwrap_or_default();
    write_text(&report_out, &json)?;
    ctx.manifest.output(&report_out);
    ctx.manifest.write(&beside(out))
}

pub fn train_teacher_cmd(ctx: &mut Ctx, a: &TeacherArgs) -> Result<()> {
    let data = load_data(ctx, &a.data_dir)?;
    let k = data.labels.labels.classes;
    let cfg = apply_train_args(TrainConfig::teacher(k), &a.train, ctx.seed, &data);
    ctx.manifest.config["resolved"] = serde_json::to_value(cfg)?;
    ctx.manifest.phase("train");
    let (params, report) = train_teacher(&cfg, &data.encoded)?;
    ctx.manifest.phase("save");
    let ckpt = Checkpoint {
        params,
        vocab: data.vocab.clone(),
        labels: data.labels.labels.clone(),
        train_config: cfg.with_lambda(0.0),
        report: Some(report),
    };
    save_trained(ctx, &a.out, &ckpt, None)
}

pub fn export(ctx: &mut Ctx, a: &ExportArgs) -> Result<()> {
    let data = load_data(ctx, &a.data_dir)?;
    let ckpt = load_ckpt(ctx, &a.teacher)?;
    check_classes("teacher", ckpt.labels.classes, &data.labels.labels)?;
    let examples: Vec<_> = if a.train_only {
        data.raw.train.clone()
    } else {
        data.raw.iter_all().cloned().collect()
    };
    ctx.manifest.phase("infer");
    let soft = generate_soft_labels(&builtin_teacher(ckpt), &examples)?;
    write_output(&a.out, |w| write_soft_labels_to(w, &soft))?;
    info!("wrote soft labels for {} examples", soft.len());
    ctx.manifest.output(&a.out);
    finish(ctx, &a.out)
}

pub fn distill(ctx: &mut Ctx, a: &DistillArgs) -> Result<()> {
    if !(a.lambda.is_finite() && a.lambda >= 0.0) {
        return Err(UsageError(format!("--lambda must be finite and >= 0, got {}", a.lambda)).into());
    }
    let has_source = a.soft_labels.is_some() || a.teacher.is_some();
    if a.lambda > 0.0 && !has_source {
        return Err(UsageError("distill with --lambda > 0 needs --soft-labels <file> or --teacher <checkpoint>".into()).into());
    }
    if a.lambda == 0.0 && has_source {
        warn!("--lambda 0 ignores the soft labels; training on hard labels only");
    }
    let data = load_data(ctx, &a.data_dir)?;
    let soft = soft_source(ctx, &data, a.soft_labels.as_deref(), a.teacher.as_deref())?;
    let k = data.labels.labels.classes;
    let cfg = apply_train_args(TrainConfig::student(k).with_lambda(a.lambda), &a.train, ctx.seed, &data);
    ctx.manifest.config["resolved"] = serde_json::to_value(cfg)?;
    ctx.manifest.phase("train");
    let (params, report) = train_model(&cfg, &data.encoded, soft.as_ref())?;
    ctx.manifest.phase("save");
    let ckpt = Checkpoint {
        params,
        vocab: data.vocab.clone(),
        labels: data.labels.labels.clone(),
        train_config: cfg,
        report: Some(report),
    };
    save_trained(ctx, &a.out, &ckpt, a.report.as_ref())
}

pub fn evaluate_cmd(ctx: &mut Ctx, a: &EvaluateArgs) -> Result<()> {
    let ckpt = load_ckpt(ctx, &a.checkpoint)?;
    let data = load_data(ctx, &a.data_dir)?;
    check_classes("checkpoint", ckpt.labels.classes, &data.labels.labels)?;
    let raw = data.raw_split(&a.split)?;
    let encoded = encode_all(raw, &ckpt.vocab, ckpt.model_config().max_len);
    ctx.manifest.phase("evaluate");
    let report = evaluate(&ckpt.params, &encoded)?;
    info!("{} {}: accuracy {:.4}, macro F1 {:.4}", a.split, report.n, report.accuracy, report.macro_f1);
    write_text(&a.out, &report.to_json())?;
    ctx.manifest.output(&a.out);
    finish(ctx, &a.out)
}

pub fn sweep(ctx: &mut Ctx, a: &SweepArgs) -> Result<()> {
    let data = load_data(ctx, &a.data_dir)?;
    let soft = soft_source(ctx, &data, a.soft_labels.as_deref(), a.teacher.as_deref())?
        .ok_or_else(|| UsageError("sweep needs --soft-labels or --teacher".into()))?;
    let grid = a.grid.clone().unwrap_or_else(default_lambda_grid);
    let k = data.labels.labels.classes;
    let base = apply_train_args(TrainConfig::student(k), &a.train, ctx.seed, &data);
    ctx.manifest.config["resolved"] = serde_json::to_value(base)?;
    ctx.manifest.phase("sweep");
    let report = lambda_sweep(&base, &grid, &a.seeds, &data.encoded, &soft, ctx.threads)?;

    let mut table = ResultTable::new(grid.iter().map(|l| format!("λ={l:.2}")));
    let cells: Vec<Option<&[f64]>> = report.accuracies.iter().map(|a| Some(a.as_slice())).collect();
    table.push_replicates(data.dir.display().to_string(), &cells);
    info!("test accuracy by lambda (spread {:.4}):\n{}", report.spread, table.render());
    write_text(&a.out, &report.to_json())?;
    ctx.manifest.output(&a.out);
    finish(ctx, &a.out)
}

pub fn bench(ctx: &mut Ctx, a: &BenchArgs) -> Result<()> {
    let student = load_ckpt(ctx, &a.student)?;
    let data = load_data(ctx, &a.data_dir)?;
    let k = student.labels.classes;
    let teacher = match &a.teacher {
        Some(path) => load_ckpt(ctx, path)?,
        None => {
            let cfg = ModelConfig {
                vocab_size: ModelConfig::teacher(k).vocab_size.max(student.vocab.max_size()),
                max_len: student.model_config().max_len,
                ..ModelConfig::teacher(k)
            };
            Checkpoint {
                params: init_params(&cfg, ctx.seed)?,
                vocab: student.vocab.clone(),
                labels: student.labels.clone(),
                train_config: TrainConfig::new(cfg).with_seed(ctx.seed),
                report: None,
            }
        }
    };
    let pool: Vec<_> = data.raw.iter_all().take(a.batch_size).cloned().collect();
    if pool.is_empty() {
        return Err(DataError::Invalid("no examples to benchmark".into()).into());
    }
    let batch = encode_all(&pool, &student.vocab, student.model_config().max_len);
    ctx.manifest.phase("latency");
    let latency = latency_benchmark(&student.params, &teacher.params, &batch, a.warmup, a.iters)
        .context("latency benchmark (the teacher must accept the student's token ids)")?;
    let size = size_report(&[("student", &student), ("teacher", &teacher)]);
    info!(
        "median forward: student {:.3} ms, teacher {:.3} ms, ratio {:.2}",
        latency.student.median_ms, latency.teacher.median_ms, latency.ratio
    );
    let json = serde_json::to_string_pretty(&serde_json::json!({ "latency": latency, "size": size }))?;
    write_text(&a.out, &json)?;
    ctx.manifest.output(&a.out);
    finish(ctx, &a.out)
}
