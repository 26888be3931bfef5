use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::eval::evaluate;
use super::patch::{augment, sample_patch, TrainImage};
use super::{adam_step, l1_loss, AdamState, TrainConfig};
use crate::data::{ImagePair, MetricsReport};
use crate::error::{Error, Result};
use crate::model::{Model, LambdaTriple};
use crate::store::{save_checkpoint, Checkpoint, Metadata};
use crate::tensor::{batch_concat, Tensor};

/// Losses kept in checkpoint metadata.
const LOSS_TAIL: usize = 100;

pub const CHECKPOINT_FILE: &str = "checkpoint.a2f";
pub const MODEL_FILE: &str = "model.a2f";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const LAMBDA_FILE: &str = "lambdas.csv";

#[derive(Debug, Clone)]
pub struct TrainSet {
    pub scale: usize,
    pub images: Vec<TrainImage>,
}

impl TrainSet {
    pub fn from_pairs(pairs: &[ImagePair], scale: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::config("training set is empty"));
        }
        Ok(TrainSet {
            scale,
            images: pairs.iter().map(TrainImage::from_pair).collect(),
        })
    }

    /// Shortest LR edge over all images.
    pub fn min_lr_edge(&self) -> usize {
        self.images
            .iter()
            .map(|i| i.lr.shape().h.min(i.lr.shape().w))
            .min()
            .unwrap_or(0)
    }
}

/// The batch for `step`: drawn from an RNG keyed by (seed, step) alone, so a
/// resumed run sees exactly the batches an uninterrupted one would.
pub fn sample_batch(set: &TrainSet, config: &TrainConfig, step: u64) -> Result<(Tensor, Tensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(step);
    let mut lrs = Vec::with_capacity(config.batch_size);
    let mut hrs = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let image = &set.images[rand::Rng::random_range(&mut rng, 0..set.images.len())];
        let (lr, hr) = sample_patch(image, set.scale, config.lr_patch, &mut rng)?;
        let (lr, hr) = if config.augment { augment(&lr, &hr, &mut rng) } else { (lr, hr) };
        lrs.push(lr);
        hrs.push(hr);
    }
    Ok((batch_concat(&lrs)?, batch_concat(&hrs)?))
}

/// Forward, L1 loss, backward and one Adam update on a fixed batch.
pub fn train_step(
    model: &mut Model,
    state: &mut AdamState,
    lr_batch: &Tensor,
    hr_batch: &Tensor,
    config: &TrainConfig,
) -> Result<f64> {
    let (out, trace) = model.forward_train(lr_batch)?;
    let (loss, grad) = l1_loss(&out, hr_batch)?;
    if !loss.is_finite() {
        return Err(Error::numerical("loss", format!("non-finite loss {loss}")));
    }
    model.zero_grad();
    model.backward(&trace, &grad)?;
    adam_step(model, state, config)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub ms_per_step: f64,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Where logs and checkpoints go; nothing is written without it.
    pub out_dir: Option<&'a Path>,
    /// Held-out pairs scored every `eval_interval` steps.
    pub validation: Option<&'a [ImagePair]>,
    /// Continue from this checkpoint instead of the given model.
    pub resume: Option<Checkpoint>,
    /// Suppress per-record progress on stdout.
    pub quiet: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub optimizer: AdamState,
    /// Loss of every step run in this call, in order.
    pub losses: Vec<f64>,
    pub log: Vec<LogRecord>,
    pub evals: Vec<(u64, MetricsReport)>,
}

struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn append(&self, file: &str, text: &str) -> Result<()> {
        let path = self.dir.join(file);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    fn lambdas(&self, step: u64, report: &[LambdaTriple]) -> Result<()> {
        let path = self.dir.join(LAMBDA_FILE);
        let mut text = String::new();
        if !path.exists() {
            text += "step,block,lambda_res,lambda_att,lambda_x\n";
        }
        for t in report {
            text += &format!("{step},{},{},{},{}\n", t.block, t.res, t.att, t.x);
        }
        self.append(LAMBDA_FILE, &text)
    }
}

/// Runs `config.total_steps` optimizer steps (counting any already done in a
/// resumed checkpoint), logging, snapshotting λ, checkpointing and
/// validating along the way.
pub fn train(model: Model, set: &TrainSet, config: &TrainConfig, options: TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    if set.scale != model.config.scale {
        return Err(Error::config(format!(
            "training data is x{} but the model is x{}",
            set.scale, model.config.scale
        )));
    }
    if set.min_lr_edge() < config.lr_patch {
        return Err(Error::config(format!(
            "lr_patch {} x scale {} exceeds the smallest training image (LR edge {})",
            config.lr_patch,
            set.scale,
            set.min_lr_edge()
        )));
    }
    let (mut model, mut state, mut tail, start) = match options.resume {
        Some(ck) => {
            if ck.model.config != model.config {
                return Err(Error::config(format!(
                    "checkpoint is {} but {} was requested",
                    ck.model.config.label(),
                    model.config.label()
                )));
            }
            let state = ck
                .optimizer
                .ok_or_else(|| Error::config("checkpoint has no optimizer state to resume from"))?;
            (ck.model, state, ck.metadata.loss_tail, ck.metadata.step)
        }
        None => {
            let state = AdamState::new(&model);
            (model, state, Vec::new(), 0)
        }
    };
    state.check(&model)?;
    let outputs = match options.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            Some(Outputs { dir: dir.to_path_buf() })
        }
        None => None,
    };
    let metadata = |step: u64, tail: &[f64]| Metadata {
        step,
        seed: config.seed,
        loss_tail: tail.to_vec(),
    };
    if start == 0 {
        if let Some(out) = &outputs {
            out.lambdas(0, &model.lambda_report())?;
        }
    }

    let mut outcome_losses = Vec::new();
    let mut log = Vec::new();
    let mut evals = Vec::new();
    let mut interval_ms = 0.0;
    let mut interval_steps = 0u64;
    for step in start..config.total_steps {
        let timer = Instant::now();
        let (lr_batch, hr_batch) = sample_batch(set, config, step)?;
        let lr_now = config.learning_rate(step);
        let loss = match train_step(&mut model, &mut state, &lr_batch, &hr_batch, config) {
            Ok(loss) => loss,
            Err(Error::Numerical { param, detail }) => {
                let kept = match &outputs {
                    Some(o) if o.dir.join(CHECKPOINT_FILE).exists() => format!(
                        "; last good checkpoint kept at {}",
                        o.dir.join(CHECKPOINT_FILE).display()
                    ),
                    _ => String::new(),
                };
                return Err(Error::Numerical {
                    param,
                    detail: format!("{detail} at step {step}{kept}"),
                });
            }
            Err(e) => return Err(e),
        };
        interval_ms += timer.elapsed().as_secs_f64() * 1e3;
        interval_steps += 1;
        outcome_losses.push(loss);
        tail.push(loss);
        if tail.len() > LOSS_TAIL {
            tail.remove(0);
        }
        let done = step + 1;
        let last = done == config.total_steps;

        if done % config.log_interval == 0 || last {
            let record = LogRecord {
                step: done,
                loss,
                lr: lr_now,
                ms_per_step: interval_ms / interval_steps as f64,
            };
            (interval_ms, interval_steps) = (0.0, 0);
            if !options.quiet {
                println!("{}", serde_json::to_string(&record).expect("plain record"));
            }
            if let Some(out) = &outputs {
                out.append(LOG_FILE, &format!("{}\n", serde_json::to_string(&record).unwrap()))?;
                out.lambdas(done, &model.lambda_report())?;
            }
            log.push(record);
        }
        if let (Some(pairs), true) = (options.validation, config.eval_interval > 0) {
            if done % config.eval_interval == 0 || last {
                let report = evaluate(&model, pairs, set.scale)?;
                let line = serde_json::json!({
                    "step": done,
                    "val_psnr": report.mean_psnr,
                    "val_ssim": report.mean_ssim,
                });
                if !options.quiet {
                    println!("{line}");
                }
                if let Some(out) = &outputs {
                    out.append(LOG_FILE, &format!("{line}\n"))?;
                }
                evals.push((done, report));
            }
        }
        if let Some(out) = &outputs {
            if config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 && !last {
                save_checkpoint(out.dir.join(CHECKPOINT_FILE), &model, Some(&state), &metadata(done, &tail))?;
            }
        }
    }

    if let Some(out) = &outputs {
        let done = config.total_steps.max(start);
        save_checkpoint(out.dir.join(CHECKPOINT_FILE), &model, Some(&state), &metadata(done, &tail))?;
        save_checkpoint(out.dir.join(MODEL_FILE), &model, None, &metadata(done, &tail))?;
    }
    Ok(TrainOutcome {
        model,
        optimizer: state,
        losses: outcome_losses,
        log,
        evals,
    })
}
