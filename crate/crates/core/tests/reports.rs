use kd_core::corpus::{generate_synthetic, prepare, PrepareOptions, PreparedData, SoftLabelSet, SynthConfig};
use kd_core::error::Error;
use kd_core::eval::{evaluate, lambda_sweep, latency_benchmark, predict, size_report, ResultTable};
use kd_core::nn::{init_params, ModelConfig, ParamSet};
use kd_core::train::{Checkpoint, TrainConfig};

fn data() -> PreparedData {
    let c = generate_synthetic(&SynthConfig {
        classes: 3,
        n_per_class: 30,
        noise_rate: 0.1,
        seed: 9,
        ..SynthConfig::default()
    })
    .unwrap();
    prepare(c.examples, &c.labels, &PrepareOptions::default()).unwrap()
}

fn flat_soft(d: &PreparedData) -> SoftLabelSet {
    let mut soft = SoftLabelSet::new(3);
    for e in &d.encoded.train {
        let mut p = vec![0.1; 3];
        p[e.label] = 0.8;
        soft.insert(e.id.clone(), p).unwrap();
    }
    soft
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 3,
        ..TrainConfig::student(3)
    }
}

#[test]
fn sweep_records_every_cell_deterministically() {
    let d = data();
    let soft = flat_soft(&d);
    let grid = [0.1, 0.2];
    let a = lambda_sweep(&quick(), &grid, &[1, 2, 3], &d.encoded, &soft, 1).unwrap();
    assert_eq!(a.runs(), 6);
    assert_eq!(a.means.len(), 2);
    let b = lambda_sweep(&quick(), &grid, &[1, 2, 3], &d.encoded, &soft, 2).unwrap();
    assert_eq!(a, b);
    let same = lambda_sweep(&quick(), &[0.1], &[4, 4, 4], &d.encoded, &soft, 1).unwrap();
    assert!(same.accuracies[0].iter().all(|&x| x == same.accuracies[0][0]));
    assert_eq!(same.sds[0], 0.0);
}

#[test]
fn sweep_rejects_bad_grids_and_annotates_failures() {
    let d = data();
    let soft = flat_soft(&d);
    assert!(lambda_sweep(&quick(), &[0.2, 0.1], &[0], &d.encoded, &soft, 1).is_err());
    assert!(lambda_sweep(&quick(), &[0.1], &[], &d.encoded, &soft, 1).is_err());
    let bad = TrainConfig {
        batch_size: 0,
        ..quick()
    };
    match lambda_sweep(&bad, &[0.1], &[7], &d.encoded, &soft, 1) {
        Err(Error::SweepCell { lambda, seed, .. }) => assert_eq!((lambda, seed), (0.1, 7)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_parameters_predict_class_zero() {
    let d = data();
    let params = ParamSet::zeros(&ModelConfig::student(3));
    assert!(predict(&params, &d.encoded.test).unwrap().iter().all(|&c| c == 0));
    let report = evaluate(&params, &d.encoded.test).unwrap();
    assert_eq!(report.n, d.encoded.test.len());
    assert_eq!(report.confusion.predicted()[1..], [0, 0]);
}

#[test]
fn latency_self_comparison_and_teacher_ratio() {
    let d = data();
    let student = init_params(&ModelConfig::student(3), 0).unwrap();
    let teacher = init_params(&ModelConfig::teacher(3), 0).unwrap();
    let batch = &d.encoded.train[..32];
    let own = latency_benchmark(&student, &student, batch, 5, 40).unwrap();
    assert!((0.8..=1.25).contains(&own.ratio), "{}", own.ratio);
    let vs = latency_benchmark(&student, &teacher, batch, 3, 30).unwrap();
    assert!(vs.ratio > 1.0, "{}", vs.ratio);
    assert_eq!(vs.student.params, 23_235);
    assert!(vs.student.median_ms > 0.0 && vs.student.p95_ms >= vs.student.median_ms);
    assert!(latency_benchmark(&student, &teacher, batch, 0, 29).is_err());
}

#[test]
fn size_report_counts_and_ratios() {
    let d = data();
    let ckpt = |cfg: ModelConfig| Checkpoint {
        params: ParamSet::zeros(&cfg),
        vocab: d.vocab.clone(),
        labels: d.labels.clone(),
        train_config: TrainConfig::new(cfg),
        report: None,
    };
    let s = ckpt(ModelConfig::student(5));
    let t = ckpt(ModelConfig::teacher(5));
    let r = size_report(&[("student", &s), ("teacher", &t)]);
    assert_eq!(r.models[0].params, 23_269);
    assert_eq!(r.ratios.len(), 3);
    assert_eq!(r.ratios[0].param_ratio, 1.0);
    assert!(r.ratios[1].param_ratio >= 20.0);
    assert_eq!(r.ratios[1].larger, "teacher");
    assert!((3_600.0..=4_000.0).contains(&r.reference_ratio));
}

#[test]
fn table_renders_each_dataset() {
    let mut t = ResultTable::new(["Teacher", "KD", "Hard"]);
    t.push_replicates("synthetic", &[Some(&[0.8, 0.82][..]), Some(&[0.79][..]), None]);
    let text = t.render();
    assert!(text.starts_with("Dataset"));
    assert!(text.contains("0.810±0.014"));
}
