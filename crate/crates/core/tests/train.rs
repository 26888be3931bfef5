mod common;

use std::fs;

use a2f_core::model::{Model, ModelConfig};
use a2f_core::store::load_checkpoint;
use a2f_core::tensor::{set_parallel, Tensor};
use a2f_core::train::*;
use a2f_core::Error;
use common::*;

fn small_set(dir: &std::path::Path) -> TrainSet {
    let pairs = prepared("train", 2, dir);
    TrainSet::from_pairs(&pairs[..6], 2).unwrap()
}

fn config(steps: u64) -> TrainConfig {
    TrainConfig {
        total_steps: steps,
        batch_size: 2,
        lr_patch: 8,
        seed: 11,
        log_interval: 1,
        checkpoint_interval: 3,
        ..TrainConfig::default()
    }
}

fn micro() -> Model {
    Model::new(ModelConfig::micro(), 3).unwrap()
}

fn quiet<'a>() -> TrainOptions<'a> {
    TrainOptions { quiet: true, ..Default::default() }
}

#[test]
fn fixed_seed_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(dir.path());
    set_parallel(false);
    let a = train(micro(), &set, &config(6), quiet()).unwrap();
    let b = train(micro(), &set, &config(6), quiet()).unwrap();
    set_parallel(true);
    let c = train(micro(), &set, &config(6), quiet()).unwrap();
    assert_eq!(a.losses.len(), 6);
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.model, b.model);
    // batch parallelism keeps every reduction in the same order
    assert_eq!(a.losses, c.losses);
    let d = train(micro(), &set, &TrainConfig { seed: 12, ..config(6) }, quiet()).unwrap();
    assert_ne!(a.losses, d.losses);
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(&dir.path().join("data"));
    let full = train(micro(), &set, &config(7), quiet()).unwrap();

    let out = dir.path().join("run");
    let first = train(
        micro(),
        &set,
        &config(4),
        TrainOptions { out_dir: Some(&out), quiet: true, ..Default::default() },
    )
    .unwrap();
    let ck = load_checkpoint(out.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.metadata.step, 4);
    assert_eq!(ck.metadata.loss_tail, first.losses);
    let rest = train(
        micro(),
        &set,
        &config(7),
        TrainOptions { resume: Some(ck), quiet: true, ..Default::default() },
    )
    .unwrap();
    let stitched: Vec<f64> = first.losses.iter().chain(&rest.losses).copied().collect();
    assert_eq!(stitched, full.losses);
    assert_eq!(rest.model, full.model);
    assert_eq!(rest.optimizer, full.optimizer);
}

#[test]
fn resume_needs_a_matching_model_and_optimizer_state() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(&dir.path().join("data"));
    let out = dir.path().join("run");
    train(micro(), &set, &config(1), TrainOptions { out_dir: Some(&out), quiet: true, ..Default::default() })
        .unwrap();
    let other = Model::new(ModelConfig::custom(2, 3, 8).unwrap(), 0).unwrap();
    let ck = load_checkpoint(out.join(CHECKPOINT_FILE)).unwrap();
    let err = train(other, &set, &config(2), TrainOptions { resume: Some(ck), quiet: true, ..Default::default() })
        .unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("checkpoint is")), "{err}");
    let weights_only = load_checkpoint(out.join(MODEL_FILE)).unwrap();
    assert!(weights_only.optimizer.is_none());
    let err = train(micro(), &set, &config(2), TrainOptions { resume: Some(weights_only), quiet: true, ..Default::default() })
        .unwrap_err();
    assert!(err.to_string().contains("optimizer state"), "{err}");
}

#[test]
fn zero_steps_returns_the_model_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(&dir.path().join("data"));
    let out = dir.path().join("run");
    let outcome = train(micro(), &set, &config(0), TrainOptions { out_dir: Some(&out), quiet: true, ..Default::default() })
        .unwrap();
    assert_eq!(outcome.model, micro());
    assert!(outcome.losses.is_empty());
    assert_eq!(load_checkpoint(out.join(MODEL_FILE)).unwrap().model, micro());
}

#[test]
fn logs_and_lambda_snapshots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = prepared("train", 2, &dir.path().join("data"));
    let set = TrainSet::from_pairs(&pairs[..6], 2).unwrap();
    let out = dir.path().join("run");
    let cfg = TrainConfig { log_interval: 2, eval_interval: 4, ..config(4) };
    let outcome = train(
        micro(),
        &set,
        &cfg,
        TrainOptions { out_dir: Some(&out), validation: Some(&pairs[6..8]), quiet: true, ..Default::default() },
    )
    .unwrap();
    let log = fs::read_to_string(out.join(LOG_FILE)).unwrap();
    let records: Vec<LogRecord> = log
        .lines()
        .filter(|l| l.contains("\"loss\""))
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.iter().map(|r| r.step).collect::<Vec<_>>(), [2, 4]);
    assert!(records.iter().all(|r| r.lr == 1e-3 && r.ms_per_step > 0.0));
    assert!(log.contains("val_psnr"));
    assert_eq!(outcome.evals.len(), 1);
    let lambdas = fs::read_to_string(out.join(LAMBDA_FILE)).unwrap();
    let mut lines = lambdas.lines();
    assert_eq!(lines.next(), Some("step,block,lambda_res,lambda_att,lambda_x"));
    // steps 0, 2 and 4, two blocks each
    assert_eq!(lines.count(), 6);
    assert!(lambdas.contains("\n0,1,1,1,1\n"));
}

#[test]
fn divergence_aborts_and_keeps_the_last_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(&dir.path().join("data"));
    let out = dir.path().join("run");
    let opts = || TrainOptions { out_dir: Some(&out), quiet: true, ..Default::default() };
    train(micro(), &set, &config(3), opts()).unwrap();
    let mut ck = load_checkpoint(out.join(CHECKPOINT_FILE)).unwrap();
    let (_, slot) = ck.model.params_mut().into_iter().next().unwrap();
    slot.value.data_mut()[0] = f32::NAN;
    let err = train(micro(), &set, &config(6), TrainOptions { resume: Some(ck), ..opts() }).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Numerical { .. }), "{msg}");
    assert!(msg.contains("at step 3") && msg.contains("last good checkpoint"), "{msg}");
    let kept = load_checkpoint(out.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(kept.metadata.step, 3);
    assert!(kept.model.params().iter().all(|(_, s)| s.value.all_finite()));
}

#[test]
fn training_rejects_patches_larger_than_the_images() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(dir.path());
    let err = train(micro(), &set, &TrainConfig { lr_patch: 49, ..config(1) }, quiet()).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn batches_depend_only_on_seed_and_step() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(dir.path());
    let cfg = config(10);
    let (a, b) = sample_batch(&set, &cfg, 5).unwrap();
    let (c, d) = sample_batch(&set, &cfg, 5).unwrap();
    assert_eq!((&a, &b), (&c, &d));
    assert_eq!(a.shape().dims(), [2, 3, 8, 8]);
    assert_eq!(b.shape().dims(), [2, 3, 16, 16]);
    assert_ne!(sample_batch(&set, &cfg, 6).unwrap().0, a);
}

fn sorted(t: &Tensor) -> Vec<u32> {
    let mut v: Vec<u32> = t.data().iter().map(|x| x.to_bits()).collect();
    v.sort_unstable();
    v
}

#[test]
fn dihedral_transforms_are_exact_bijections() {
    let dir = tempfile::tempdir().unwrap();
    let set = small_set(dir.path());
    let img = &set.images[0].lr;
    assert_eq!(flip_horizontal(&flip_horizontal(img)), *img);
    let mut r = img.clone();
    for _ in 0..4 {
        r = rotate90(&r);
    }
    assert_eq!(r, *img);
    let all: Vec<Tensor> = (0..8).map(|k| dihedral(img, k)).collect();
    for (i, t) in all.iter().enumerate() {
        assert_eq!(sorted(t), sorted(img), "k={i}");
        for u in &all[i + 1..] {
            assert_ne!(t, u);
        }
    }
}
