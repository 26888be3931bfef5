//! The `a2f` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure. Every subcommand
//! accepts `--config-file <path>` naming `key=value` lines whose keys are
//! long flag names; flags given on the command line take precedence.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::data::{load_pairs, load_png, prepare_dataset, save_png, ImagePlane};
use crate::error::{Error, Result};
use crate::gradcheck::targets::{check_model, check_ops};
use crate::gradcheck::Precision;
use crate::model::{lambda_csv, Ablation, Model, ModelConfig, Variant};
use crate::store::{load_checkpoint, Checkpoint};
use crate::train::{evaluate, train, Bicubic, TrainConfig, TrainOptions, TrainSet, Upscaler, MODEL_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "a2f", version, about = "Lightweight single-image super-resolution")]
#[command(args_override_self = true)]
struct Cli {
    /// File of `key=value` lines supplying default flag values.
    #[arg(long, global = true, value_name = "PATH")]
    config_file: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop HR images and write bicubic LR counterparts plus a manifest.
    Prepare(PrepareArgs),
    /// Train a model with L1 loss and Adam.
    Train(TrainArgs),
    /// PSNR/SSIM on Y and forward timing over a prepared set.
    Eval(EvalArgs),
    /// Super-resolve a single PNG.
    Sr(SrArgs),
    /// Parameter and multi-add counts, layer list and λ table.
    Info(InfoArgs),
    /// Finite-difference gradient check of every op and a small model.
    Gradcheck(GradcheckArgs),
}

fn parse_scale(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(p @ 2..=4) => Ok(p),
        _ => Err(format!("unsupported scale '{s}' (expected 2, 3 or 4)")),
    }
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    hr_dir: PathBuf,
    #[arg(long, value_parser = parse_scale)]
    scale: usize,
    #[arg(long)]
    out: PathBuf,
    /// Plain 4-tap bicubic instead of the antialiased kernel.
    #[arg(long)]
    no_antialias: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// S, SD, M, L or custom.
    #[arg(long, default_value = "SD")]
    variant: Variant,
    #[arg(long, value_parser = parse_scale, default_value_t = 2)]
    scale: usize,
    /// Block count of a custom variant.
    #[arg(long)]
    blocks: Option<usize>,
    /// Trunk channels of a custom variant.
    #[arg(long)]
    channels: Option<usize>,
    /// full, no-ca or baseline.
    #[arg(long, default_value = "full")]
    ablation: AblationArg,
    #[arg(long)]
    head_kernel: Option<usize>,
}

impl ModelArgs {
    fn config(&self) -> Result<ModelConfig> {
        let mut ablation = self.ablation.0;
        if let Some(k) = self.head_kernel {
            ablation.head_kernel = k;
        }
        match (self.variant, self.blocks, self.channels) {
            (Variant::Custom, Some(l), Some(c)) => {
                ModelConfig::custom(self.scale, l, c)?.with_ablation(ablation)
            }
            (Variant::Custom, _, _) => Err(Error::config("--variant custom needs --blocks and --channels")),
            (v, None, None) => ModelConfig::variant(v, self.scale, ablation),
            (v, _, _) => Err(Error::config(format!(
                "--blocks/--channels only apply to --variant custom, not {v}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct AblationArg(Ablation);

impl FromStr for AblationArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(AblationArg(Ablation::default())),
            "no-ca" => Ok(AblationArg(Ablation::no_attention())),
            "baseline" => Ok(AblationArg(Ablation::baseline())),
            _ => Err(format!("unknown ablation '{s}' (expected full, no-ca or baseline)")),
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Prepared dataset root (output of `prepare`).
    #[arg(long)]
    data: PathBuf,
    /// Prepared held-out set scored every --eval-interval steps.
    #[arg(long)]
    val_data: Option<PathBuf>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// LR-space patch edge.
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr_halving_interval: Option<u64>,
    #[arg(long)]
    checkpoint_interval: Option<u64>,
    #[arg(long)]
    eval_interval: Option<u64>,
    #[arg(long)]
    log_interval: Option<u64>,
    #[arg(long)]
    no_augment: bool,
    /// Continue from a checkpoint written with optimizer state.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Single worker thread; identical seeds give identical loss curves.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    quiet: bool,
}

impl TrainArgs {
    fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::default();
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag { c.$field = v; }
            )*};
        }
        set!(steps => total_steps, batch => batch_size, lr => lr, patch => lr_patch,
             seed => seed, lr_halving_interval => lr_halving_interval,
             checkpoint_interval => checkpoint_interval, eval_interval => eval_interval,
             log_interval => log_interval);
        if self.val_data.is_some() && self.eval_interval.is_none() {
            c.eval_interval = c.checkpoint_interval;
        }
        c.augment = !self.no_augment;
        c
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long, required_unless_present = "bicubic")]
    model: Option<PathBuf>,
    /// Score plain bicubic upsampling instead of a model.
    #[arg(long, conflicts_with = "model", requires = "scale")]
    bicubic: bool,
    #[arg(long, value_parser = parse_scale)]
    scale: Option<usize>,
    #[arg(long)]
    data: PathBuf,
    /// Border pixels ignored per side; defaults to the scale.
    #[arg(long)]
    shave: Option<usize>,
    #[arg(long)]
    json: bool,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SrArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct InfoArgs {
    /// Named variant; ignored when --model is given.
    #[arg(long, conflicts_with = "model")]
    variant: Option<Variant>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_scale, default_value_t = 2)]
    scale: usize,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, default_value = "full")]
    ablation: AblationArg,
    /// Output resolution for multi-adds, WxH.
    #[arg(long, default_value = "1280x720", value_parser = parse_resolution)]
    resolution: (usize, usize),
    /// List every convolution.
    #[arg(long)]
    layers: bool,
    #[arg(long)]
    json: bool,
}

fn parse_resolution(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("'{v}': {e}"));
    Ok((dim(w)?, dim(h)?))
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// `micro` or `custom:L=<blocks>,C=<channels>,p=<scale>`.
    #[arg(long, default_value = "micro")]
    config: GradConfigArg,
    /// wide (64-bit) or standard (32-bit).
    #[arg(long, default_value = "wide")]
    precision: Precision,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds checked.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// LR input edge of the model instance.
    #[arg(long, default_value_t = 5)]
    size: usize,
}

#[derive(Debug, Clone)]
struct GradConfigArg(ModelConfig);

impl FromStr for GradConfigArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("micro") {
            return Ok(GradConfigArg(ModelConfig::micro()));
        }
        let spec = s
            .strip_prefix("custom:")
            .ok_or_else(|| format!("expected 'micro' or 'custom:L=..,C=..,p=..', got '{s}'"))?;
        let (mut l, mut c, mut p) = (None, None, None);
        for part in spec.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
            let value: usize = value.trim().parse().map_err(|e| format!("{part}: {e}"))?;
            match key.trim() {
                "L" => l = Some(value),
                "C" => c = Some(value),
                "p" => p = Some(value),
                k => return Err(format!("unknown key '{k}' (expected L, C or p)")),
            }
        }
        let config = ModelConfig::custom(p.unwrap_or(2), l.unwrap_or(2), c.unwrap_or(8))
            .map_err(|e| e.to_string())?;
        Ok(GradConfigArg(config))
    }
}

/// Inserts `--key=value` pairs from any `--config-file` right after the
/// subcommand, so later command-line flags override them.
fn expand_config_file(args: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config-file" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config-file=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            v => extra.push(OsString::from(format!("--{key}={v}"))),
        }
    }
    // the subcommand is the first argument that is not a flag or a flag value
    let mut at = 1;
    while at < args.len() {
        let s = args[at].to_string_lossy();
        if s == "--config-file" {
            at += 2;
        } else if s.starts_with('-') {
            at += 1;
        } else {
            break;
        }
    }
    let mut out = args;
    let insert = (at + 1).min(out.len());
    out.splice(insert..insert, extra);
    Ok(out)
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config_file(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: config file: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    run_with(std::env::args_os())
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sr(a) => cmd_sr(a),
        Command::Info(a) => cmd_info(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn cmd_prepare(a: PrepareArgs) -> Result<i32> {
    let manifest = prepare_dataset(&a.hr_dir, a.scale, &a.out, !a.no_antialias)?;
    println!("manifest: {}", manifest.path().display());
    println!("pairs: {}", manifest.pairs.len());
    for (path, why) in &manifest.skipped {
        println!("skipped {}: {why}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    if a.deterministic {
        crate::tensor::set_parallel(false);
    }
    let model_config = a.model.config()?;
    let config = a.train_config();
    let resume = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let pairs = load_pairs(&a.data, model_config.scale)?;
    let set = TrainSet::from_pairs(&pairs, model_config.scale)?;
    let validation = a
        .val_data
        .as_deref()
        .map(|d| load_pairs(d, model_config.scale))
        .transpose()?;
    let model = Model::new(model_config, config.seed)?;
    if !a.quiet {
        println!(
            "training {} ({} params) on {} images for {} steps",
            model.config.label(),
            model.count_params(),
            set.images.len(),
            config.total_steps
        );
    }
    let outcome = train(
        model,
        &set,
        &config,
        TrainOptions {
            out_dir: Some(&a.out),
            validation: validation.as_deref(),
            resume,
            quiet: a.quiet,
        },
    )?;
    if !a.quiet {
        if let Some(loss) = outcome.losses.last() {
            println!("final loss {loss:.6}");
        }
        println!("model written to {}", a.out.join(MODEL_FILE).display());
    }
    Ok(EXIT_OK)
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let upscaler: Box<dyn Upscaler> = match &a.model {
        Some(path) => {
            let model = load_checkpoint(path)?.model;
            if let Some(s) = a.scale.filter(|&s| s != model.config.scale) {
                return Err(Error::config(format!(
                    "--scale {s} disagrees with the x{} model",
                    model.config.scale
                )));
            }
            Box::new(model)
        }
        None => Box::new(Bicubic { scale: a.scale.expect("clap requires --scale") }),
    };
    let scale = upscaler.scale();
    let pairs = load_pairs(&a.data, scale)?;
    let report = evaluate(upscaler.as_ref(), &pairs, a.shave.unwrap_or(scale))?;
    if let Some(path) = &a.csv {
        fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    if a.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_table());
    }
    Ok(EXIT_OK)
}

fn cmd_sr(a: SrArgs) -> Result<i32> {
    let model = load_checkpoint(&a.model)?.model;
    let input = load_png(&a.input)?;
    let output = model.forward(&input.to_tensor())?;
    let plane = ImagePlane::from_tensor(&output, 0)?;
    save_png(&plane, &a.output)?;
    println!(
        "{}x{} -> {}x{} written to {}",
        input.width,
        input.height,
        plane.width,
        plane.height,
        a.output.display()
    );
    Ok(EXIT_OK)
}

fn info_model(a: &InfoArgs) -> Result<(Model, Option<Checkpoint>)> {
    if let Some(path) = &a.model {
        let ck = load_checkpoint(path)?;
        return Ok((ck.model.clone(), Some(ck)));
    }
    let args = ModelArgs {
        variant: a.variant.unwrap_or(if a.blocks.is_some() { Variant::Custom } else { Variant::SD }),
        scale: a.scale,
        blocks: a.blocks,
        channels: a.channels,
        ablation: a.ablation,
        head_kernel: None,
    };
    Ok((Model::new(args.config()?, 0)?, None))
}

fn cmd_info(a: InfoArgs) -> Result<i32> {
    let (model, checkpoint) = info_model(&a)?;
    let params = model.count_params();
    let multiadds = model.count_multiadds(a.resolution)?;
    let lambdas = model.lambda_report();
    if a.json {
        let mut v = json!({
            "model": model.config.label(),
            "config": model.config,
            "params": params,
            "resolution": [a.resolution.0, a.resolution.1],
            "multiadds": multiadds,
            "lambdas": lambdas,
        });
        if a.layers {
            v["layers"] = json!(model.layers());
        }
        if let Some(ck) = &checkpoint {
            v["step"] = json!(ck.metadata.step);
        }
        println!("{}", serde_json::to_string_pretty(&v).expect("plain data"));
        return Ok(EXIT_OK);
    }
    println!("model: {}", model.config.label());
    if let Some(ck) = &checkpoint {
        println!("trained steps: {}", ck.metadata.step);
    }
    println!("params: {}", group_thousands(params as u64));
    println!(
        "multi-adds at {}x{}: {} ({:.1}G)",
        a.resolution.0,
        a.resolution.1,
        group_thousands(multiadds),
        multiadds as f64 / 1e9
    );
    if a.layers {
        println!("\n{:<24} {:>3} {:>5} {:>5} {:>8}", "layer", "k", "in", "out", "params");
        for l in model.layers() {
            println!(
                "{:<24} {:>3} {:>5} {:>5} {:>8}",
                l.name, l.kernel, l.in_channels, l.out_channels, l.params
            );
        }
    }
    println!();
    print!("{}", lambda_csv(&lambdas));
    Ok(EXIT_OK)
}

fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<i32> {
    let threshold = a.precision.threshold();
    let config = a.config.0;
    println!(
        "gradcheck {} precision (eps {:e}, threshold {:e}) on {}",
        a.precision,
        a.precision.eps(),
        threshold,
        config.label()
    );
    let mut worst = 0.0f64;
    for seed in a.seed..a.seed + a.seeds.max(1) {
        for (name, report) in check_ops(a.precision, seed)? {
            println!("seed {seed} {name:<16} max rel error {:.3e}", report.max_rel_error);
            worst = worst.max(report.max_rel_error);
        }
        let report = check_model(&config, (a.size, a.size), a.precision, seed)?;
        println!(
            "seed {seed} {:<16} max rel error {:.3e} ({} checked, {} skipped at kinks)",
            "model",
            report.max_rel_error,
            report.checked,
            report.skipped_kinks
        );
        worst = worst.max(report.max_rel_error);
    }
    let pass = worst < threshold;
    println!("max rel error {worst:.3e}: {}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { EXIT_OK } else { EXIT_RUNTIME })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(318_536), "318,536");
        assert_eq!(group_thousands(999), "999");
        assert_eq!(group_thousands(1_000), "1,000");
    }

    #[test]
    fn resolutions_and_configs() {
        assert_eq!(parse_resolution("1280x720").unwrap(), (1280, 720));
        assert!(parse_resolution("1280").is_err());
        let c = GradConfigArg::from_str("custom:L=3,C=4,p=3").unwrap().0;
        assert_eq!((c.n_blocks, c.trunk_channels, c.scale), (3, 4, 3));
        assert!(GradConfigArg::from_str("custom:Q=1").is_err());
    }

    #[test]
    fn config_file_goes_before_command_line_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        fs::write(&path, "# defaults\nsteps=5\nbatch=2\ndeterministic=true\nquiet=false\n").unwrap();
        let args: Vec<OsString> = ["a2f", "--config-file", path.to_str().unwrap(), "train", "--steps", "9"]
            .iter()
            .map(OsString::from)
            .collect();
        let out: Vec<String> = expand_config_file(args)
            .unwrap()
            .into_iter()
            .map(|s| s.into_string().unwrap())
            .collect();
        assert_eq!(&out[3..8], ["train", "--steps=5", "--batch=2", "--deterministic", "--steps"]);
    }
}
