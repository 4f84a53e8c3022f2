//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fail.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kd_core::corpus::{
    generate_synthetic, load_dataset, load_soft_labels, prepare, write_dataset, write_soft_labels, DataFormat, EncodedExample,
    PrepareOptions, PreparedData, SynthConfig,
};
use kd_core::distill::{generate_soft_labels, hard_ce, kd_loss, soft_ce, KdObjective, TeacherSource};
use kd_core::eval::{
    default_lambda_grid, evaluate, lambda_sweep, latency_benchmark, mean_sd, REFERENCE_STUDENT_PARAMS, REFERENCE_TEACHER_PARAMS,
};
use kd_core::nn::{forward, gradient_check, infer, init_params, param_count, Batch, Mode, ModelConfig, GRADCHECK_EPSILON};
use kd_core::rng::{self, Stream};
use kd_core::train::{load_checkpoint, save_checkpoint, train_model, train_teacher, Checkpoint, TrainConfig};
use kd_core::{SoftLabelSet, Tensor};
use rand::Rng;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn within(limit: Duration, start: Instant) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    ensure!(s < limit.as_secs_f64(), "took {s:.1} s, limit {} s", limit.as_secs());
    Ok(s)
}

fn random_simplex(r: &mut impl Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -r.gen_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn random_examples(r: &mut impl Rng, cfg: &ModelConfig, n: usize) -> Vec<EncodedExample> {
    (0..n)
        .map(|i| {
            let len = r.gen_range(1..=cfg.max_len);
            let mut ids: Vec<u32> = (0..len).map(|_| r.gen_range(0..cfg.vocab_size as u32)).collect();
            ids.resize(cfg.max_len, 0);
            EncodedExample {
                id: format!("x{i}"),
                token_ids: ids,
                true_len: len,
                label: r.gen_range(0..cfg.num_classes),
            }
        })
        .collect()
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut checks, mut compared, mut kinks) = (0.0f64, 0, 0, 0);
    for seed in 0..3u64 {
        let mut r = rng::stream(seed, Stream::Bench, 1);
        let cfg = ModelConfig {
            vocab_size: r.gen_range(16..=64),
            embed_dim: r.gen_range(2..=8),
            lstm_units: r.gen_range(2..=4),
            dense_units: r.gen_range(2..=4),
            num_classes: r.gen_range(2..=3),
            dropout_embed: 0.3,
            dropout_dense: 0.3,
            max_len: 6,
        };
        let examples = random_examples(&mut r, &cfg, 4);
        let batch = Batch::from_examples(&examples);
        let labels: Vec<usize> = examples.iter().map(|x| x.label).collect();
        let p: Vec<f64> = (0..examples.len()).flat_map(|_| random_simplex(&mut r, cfg.num_classes)).collect();
        let p = Tensor::from_vec(&[examples.len(), cfg.num_classes], p);

        let hard = KdObjective::new(0.0).map_err(e)?;
        let mut runs = vec![("hard CE".to_string(), gradient_check(&cfg, &batch, &hard.bind(&labels, None), GRADCHECK_EPSILON, seed).map_err(e)?)];
        for lambda in [0.0, 0.2, 0.5] {
            let obj = KdObjective::new(lambda).map_err(e)?;
            let r = gradient_check(&cfg, &batch, &obj.bind(&labels, Some(&p)), GRADCHECK_EPSILON, seed).map_err(e)?;
            runs.push((format!("lambda {lambda}"), r));
        }
        for (what, r) in runs {
            ensure!(r.max_rel_error < 1e-4, "seed {seed} {what}: relative error {:.3e}", r.max_rel_error);
            ensure!(r.at_kinks * 100 <= r.checked, "seed {seed} {what}: {} of {} steps cross a kink", r.at_kinks, r.checked + r.at_kinks);
            worst = worst.max(r.max_rel_error);
            compared += r.checked;
            kinks += r.at_kinks;
            checks += 1;
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:.3e}");
    let s = within(Duration::from_secs(60), start)?;
    Ok(format!(
        "{checks} checks over 3 seeds, {compared} derivatives, max relative error {worst:.2e}, {kinks} steps across a relu/max-pool switch skipped, {s:.1} s"
    ))
}

fn loss_identities() -> Outcome {
    let mut r = rng::stream(7, Stream::Bench, 2);
    let mut worst_onehot = 0.0f64;
    for _ in 0..100 {
        let (n, k) = (r.gen_range(1..8), r.gen_range(2..6));
        let q = Tensor::from_vec(&[n, k], (0..n).flat_map(|_| random_simplex(&mut r, k)).collect());
        let p = Tensor::from_vec(&[n, k], (0..n).flat_map(|_| random_simplex(&mut r, k)).collect());
        let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..k)).collect();
        let h = hard_ce(&q, &labels).map_err(e)?;
        let kd = kd_loss(&q, &labels, &p, 0.0).map_err(e)?;
        ensure!(kd.combined.to_bits() == h.to_bits(), "lambda=0 gave {} vs hard {h}", kd.combined);
        let mut onehot = Tensor::zeros(&[n, k]);
        for (i, &y) in labels.iter().enumerate() {
            onehot.row_mut(i)[y] = 1.0;
        }
        let s = soft_ce(&q, &onehot).map_err(e)?;
        worst_onehot = worst_onehot.max((s - h).abs());
    }
    ensure!(worst_onehot <= 1e-12, "one-hot soft CE differs from hard CE by {worst_onehot:.3e}");
    for i in 0..1000 {
        let k = r.gen_range(2..10);
        let p = Tensor::from_vec(&[1, k], random_simplex(&mut r, k));
        let q = Tensor::from_vec(&[1, k], random_simplex(&mut r, k));
        let cross = soft_ce(&q, &p).map_err(e)?;
        let entropy = soft_ce(&p, &p).map_err(e)?;
        ensure!(cross >= entropy - 1e-12, "draw {i}: H(p,q)={cross} < H(p)={entropy}");
    }
    Ok(format!("lambda=0 bit-identical, one-hot gap {worst_onehot:.1e}, Gibbs holds on 1000 draws"))
}

fn normalization() -> Outcome {
    let mut worst = 0.0f64;
    let mut rows = 0;
    for case in 0..200u64 {
        let mut r = rng::stream(case, Stream::Bench, 3);
        let cfg = ModelConfig {
            vocab_size: r.gen_range(4..80),
            embed_dim: r.gen_range(1..12),
            lstm_units: r.gen_range(1..8),
            dense_units: r.gen_range(1..8),
            num_classes: r.gen_range(2..7),
            max_len: r.gen_range(1..12),
            ..ModelConfig::student(2)
        };
        let mut params = init_params(&cfg, case).map_err(e)?;
        let scale = r.gen_range(0.1..20.0);
        params.scale(scale);
        let n = r.gen_range(1..10);
        let examples = random_examples(&mut r, &cfg, n);
        let batch = Batch::from_examples(&examples);
        let mut drop = rng::stream(case, Stream::Dropout, 0);
        for mode in [Mode::Infer, Mode::Train(&mut drop)] {
            let (q, _) = forward(&params, &batch, mode).map_err(e)?;
            for row in q.iter_rows() {
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                rows += 1;
            }
        }
    }
    ensure!(worst <= 1e-12, "row sum off by {worst:.3e}");
    Ok(format!("{rows} rows over 200 random models, max |sum-1| = {worst:.1e}"))
}

fn separable_learning() -> Outcome {
    let start = Instant::now();
    let mut accs = Vec::new();
    for seed in 0..3u64 {
        let c = generate_synthetic(&SynthConfig {
            classes: 3,
            n_per_class: 50,
            seed,
            ..SynthConfig::default()
        })
        .map_err(e)?;
        let d = prepare(c.examples, &c.labels, &PrepareOptions { seed, ..Default::default() }).map_err(e)?;
        let cfg = TrainConfig {
            max_epochs: 30,
            ..TrainConfig::student(3).with_seed(seed)
        };
        let (params, report) = train_model(&cfg, &d.encoded, None).map_err(e)?;
        let acc = evaluate(&params, &d.encoded.train).map_err(e)?.accuracy;
        ensure!(acc >= 0.95, "seed {seed}: training accuracy {acc:.3} after {} epochs", report.epochs());
        accs.push(acc);
    }
    let s = within(Duration::from_secs(120), start)?;
    Ok(format!("training accuracy {accs:.3?} within 30 epochs, {s:.1} s"))
}

fn benchmark(seed: u64) -> Result<PreparedData, String> {
    let c = generate_synthetic(&SynthConfig {
        classes: 5,
        n_per_class: 200,
        noise_rate: 0.2,
        seed,
        ..SynthConfig::default()
    })
    .map_err(e)?;
    prepare(c.examples, &c.labels, &PrepareOptions { seed, ..Default::default() }).map_err(e)
}

fn teacher_for(d: &PreparedData, seed: u64) -> Result<(kd_core::ParamSet, SoftLabelSet), String> {
    let (tp, _) = train_teacher(&TrainConfig::teacher(5).with_seed(seed), &d.encoded).map_err(e)?;
    let soft = generate_soft_labels(
        &TeacherSource::Builtin {
            params: tp.clone(),
            vocab: d.vocab.clone(),
        },
        &d.raw.train,
    )
    .map_err(e)?;
    Ok((tp, soft))
}

fn distillation_benefit() -> Outcome {
    let (mut teacher, mut hard, mut kd) = (Vec::new(), Vec::new(), Vec::new());
    for seed in 0..5u64 {
        let d = benchmark(seed)?;
        let (tp, soft) = teacher_for(&d, seed)?;
        teacher.push(evaluate(&tp, &d.encoded.test).map_err(e)?.accuracy);
        for (lambda, acc) in [(0.0, &mut hard), (0.2, &mut kd)] {
            let cfg = TrainConfig::student(5).with_seed(seed).with_lambda(lambda);
            let (p, _) = train_model(&cfg, &d.encoded, Some(&soft)).map_err(e)?;
            acc.push(evaluate(&p, &d.encoded.test).map_err(e)?.accuracy);
        }
    }
    let ((t, ts), (h, hs), (k, ks)) = (mean_sd(&teacher), mean_sd(&hard), mean_sd(&kd));
    let detail = format!("teacher {t:.4}±{ts:.4}, lambda=0 {h:.4}±{hs:.4}, lambda=0.2 {k:.4}±{ks:.4}");
    ensure!(k >= h, "distilled student below hard-label student: {detail}");
    ensure!((t - k).abs() <= 0.05, "distilled student more than 0.05 from teacher: {detail}");
    Ok(detail)
}

fn lambda_sensitivity() -> Outcome {
    let start = Instant::now();
    let d = benchmark(0)?;
    let (_, soft) = teacher_for(&d, 0)?;
    let grid = default_lambda_grid();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(4);
    let a = lambda_sweep(&TrainConfig::student(5), &grid, &[0, 1, 2], &d.encoded, &soft, threads).map_err(e)?;
    let b = lambda_sweep(&TrainConfig::student(5), &grid, &[0, 1, 2], &d.encoded, &soft, 1).map_err(e)?;
    ensure!(a.to_json() == b.to_json(), "sweep differs between {threads} threads and 1 thread");
    ensure!(a.spread <= 0.05, "spread of per-lambda means {:.4}", a.spread);
    let s = within(Duration::from_secs(15 * 60), start)?;
    Ok(format!(
        "{} lambdas x 3 seeds, means {:.3?}, spread {:.4}, deterministic, {s:.1} s",
        grid.len(),
        a.means,
        a.spread
    ))
}

fn size_claim() -> Outcome {
    let student = param_count(&ModelConfig::student(5));
    let teacher = param_count(&ModelConfig::teacher(5));
    ensure!(student == 23_269, "student has {student} parameters");
    let ratio = teacher as f64 / student as f64;
    ensure!(ratio >= 20.0, "teacher/student ratio {ratio:.1}");
    Ok(format!(
        "student {student}, teacher {teacher}, ratio {ratio:.1}; reference BERT-class ratio {:.0} (reported only)",
        REFERENCE_TEACHER_PARAMS / REFERENCE_STUDENT_PARAMS
    ))
}

fn latency_claim() -> Outcome {
    let d = benchmark(0)?;
    let student = init_params(&ModelConfig::student(5), 0).map_err(e)?;
    let teacher = init_params(&ModelConfig::teacher(5), 0).map_err(e)?;
    let batch = &d.encoded.test[..32];
    let l = latency_benchmark(&student, &teacher, batch, 10, 50).map_err(e)?;
    let same = latency_benchmark(&student, &student, batch, 10, 50).map_err(e)?;
    ensure!(l.ratio > 1.0, "teacher/student ratio {:.3}", l.ratio);
    ensure!((0.8..=1.25).contains(&same.ratio), "self-comparison ratio {:.3}", same.ratio);
    Ok(format!(
        "median student {:.3} ms, teacher {:.3} ms, ratio {:.2}; self-comparison {:.3}",
        l.student.median_ms, l.teacher.median_ms, l.ratio, same.ratio
    ))
}

fn write_rows(path: &Path, rows: &str) {
    fs::write(path, rows).unwrap();
}

fn round_trips() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let d = benchmark(3)?;
    let cfg = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::student(5).with_seed(3)
    };
    let (params, report) = train_model(&cfg, &d.encoded, None).map_err(e)?;
    let ckpt = Checkpoint {
        params,
        vocab: d.vocab.clone(),
        labels: d.labels.clone(),
        train_config: cfg,
        report: Some(report),
    };
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &ckpt).map_err(e)?;
    let back = load_checkpoint(&path).map_err(e)?;
    let before = infer(&ckpt.params, &d.encoded.test, 64).map_err(e)?;
    let after = infer(&back.params, &d.encoded.test, 64).map_err(e)?;
    ensure!(
        before.data().iter().zip(after.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
        "checkpoint reload changed infer outputs"
    );

    let all: Vec<_> = d.raw.iter_all().cloned().collect();
    for (name, format) in [("d.jsonl", DataFormat::Jsonl), ("d.csv", DataFormat::Csv)] {
        let p = dir.path().join(name);
        write_dataset(&p, &all, format).map_err(e)?;
        let (read, _) = load_dataset(&p, format, Some(5)).map_err(e)?;
        ensure!(read == all, "{name} changed on write/read");
    }

    let soft = generate_soft_labels(
        &TeacherSource::Builtin {
            params: ckpt.params.clone(),
            vocab: d.vocab.clone(),
        },
        &all,
    )
    .map_err(e)?;
    let sp = dir.path().join("soft.jsonl");
    write_soft_labels(&sp, &soft).map_err(e)?;
    let read = load_soft_labels(&sp, &d.labels).map_err(e)?;
    ensure!(read == soft, "soft labels changed on write/read");

    let bad = [
        ("sum != 1", r#"{"id":"a","probs":[0.3,0.3,0.3,0.3,0.3]}"#),
        ("wrong K", r#"{"id":"a","probs":[0.5,0.5]}"#),
        ("negative", r#"{"id":"a","probs":[1.2,-0.2,0.0,0.0,0.0]}"#),
    ];
    for (what, row) in bad {
        let p = dir.path().join("bad.jsonl");
        write_rows(&p, &format!("{row}\n"));
        ensure!(load_soft_labels(&p, &d.labels).is_err(), "validator accepted a {what} row");
    }
    Ok(format!(
        "checkpoint bit-exact on {} outputs; {} examples via JSONL and CSV; {} soft rows; 3 invalid rows rejected",
        before.len(),
        all.len(),
        soft.len()
    ))
}

fn kd(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_kd"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(e)?;
    ensure!(
        out.status.success(),
        "kd {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e)?;
    let d = tmp.path();
    kd(d, &["synth", "--k", "3", "--n", "60", "--noise", "0.1", "--out", "data.jsonl"])?;
    kd(d, &["prepare", "--data", "data.jsonl", "--out-dir", "prep"])?;
    kd(d, &["train-teacher", "--data-dir", "prep", "--out", "t.ckpt", "--epochs", "2"])?;
    for name in ["a.ckpt", "b.ckpt"] {
        kd(d, &["--seed", "11", "distill", "--data-dir", "prep", "--teacher", "t.ckpt", "--lambda", "0.2", "--epochs", "5", "--out", name])?;
    }
    let ra = fs::read(d.join("a.ckpt.report.json")).map_err(e)?;
    let rb = fs::read(d.join("b.ckpt.report.json")).map_err(e)?;
    ensure!(ra == rb, "train reports differ");
    let (a, b) = (load_checkpoint(&d.join("a.ckpt")).map_err(e)?, load_checkpoint(&d.join("b.ckpt")).map_err(e)?);
    for ((name, x), (_, y)) in a.params.blocks().into_iter().zip(b.params.blocks()) {
        ensure!(
            x.shape() == y.shape() && x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()),
            "parameter block {name} differs"
        );
    }
    Ok(format!("two distill runs: identical {}-byte report and 11 parameter blocks", ra.len()))
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("gradient fidelity", gradient_fidelity),
        ("loss identities", loss_identities),
        ("normalization", normalization),
        ("separable learning", separable_learning),
        ("distillation benefit", distillation_benefit),
        ("lambda sensitivity", lambda_sensitivity),
        ("size claim", size_claim),
        ("latency claim", latency_claim),
        ("round trips", round_trips),
        ("determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<22} {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<22} {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
