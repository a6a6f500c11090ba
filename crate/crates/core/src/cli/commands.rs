use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::ablation::{
    parse_grid, run_ablation_grid, write_ablation_csv, write_ablation_summary_csv,
    write_phase_manifest, GridOptions,
};
use crate::cli::config::RunConfig;
use crate::cli::evaluate;
use crate::cohort::{stratified_split, write_split};
use crate::error::{Error, Result};
use crate::models::{
    train_pipeline, write_predictions_csv, write_visit_predictions_csv, Family, TaskSpec,
    TrainOptions, SPLIT_FILE,
};
use crate::synthgen::{sample_cohort, write_dataset};

#[derive(Parser)]
#[command(
    name = "fundascreen",
    version,
    about = "Synthetic fundus pipeline: cohort generation, hemoglobin and anemia models, \
             clinical evaluation statistics, and masking/blur ablations"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Root seed for every random stream (fallback: FUNDASCREEN_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for internal parallelism (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Assign patients to train/tune/validation splits.
    Split(SplitArgs),
    /// Train one model family on one task.
    Train(TrainArgs),
    /// Evaluate a predictions file against the dataset's ground truth.
    Eval(EvalArgs),
    /// Train and score an ablation grid of input transforms.
    Ablate(AblateArgs),
    /// Consolidate a run directory into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    patients: Option<usize>,
    #[arg(long)]
    image_side: Option<usize>,
    #[arg(long)]
    hb_mean_female: Option<f64>,
    #[arg(long)]
    hb_mean_male: Option<f64>,
    #[arg(long)]
    hb_sd: Option<f64>,
    #[arg(long)]
    pallor_gain: Option<f64>,
    #[arg(long)]
    vessel_gain: Option<f64>,
    #[arg(long)]
    disc_gain: Option<f64>,
    #[arg(long)]
    nuisance_sd: Option<f64>,
    #[arg(long)]
    two_visit_fraction: Option<f64>,
    #[arg(long)]
    two_eye_fraction: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
}

#[derive(Args)]
struct SplitArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Comma-separated train,tune,validation fractions.
    #[arg(long, value_name = "A,B,C")]
    fractions: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory with a split file.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// metadata_only, fundus_only, or combined.
    #[arg(long)]
    family: String,
    /// Task token: anemia, moderate, approximate, lab values, or cbc.
    #[arg(long)]
    task: Option<String>,
    /// Ensemble members to train.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Model directory; defaults to DATA/models/{family}_{task}.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    base_lr: Option<f64>,
    #[arg(long)]
    warmup_start_lr: Option<f64>,
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    ema_decay: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Predictions CSV produced by train.
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Dataset directory holding the ground truth.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Bootstrap resamples for confidence intervals.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Per-visit predictions CSV; adds the across-visit residual
    /// correlation (regression tasks only).
    #[arg(long, value_name = "FILE")]
    pub visits: Option<PathBuf>,
    /// Output directory; defaults to DATA/eval/{family}_{task}.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Dataset directory with a split file.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Comma-separated arm tokens, e.g. none,center_stripe:0.2,gaussian_blur:4.
    #[arg(long)]
    grid: Option<String>,
    /// Classification task to ablate (default: first configured task).
    #[arg(long)]
    task: Option<String>,
    /// Members per arm.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Output directory; defaults to DATA/ablation.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Run directory: the dataset directory that train/eval/ablate wrote into.
    #[arg(long, value_name = "DIR")]
    pub run: PathBuf,
}

/// Resolved global flags handed to each command.
pub struct Global {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

fn single_line(msg: &str) -> String {
    msg.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parse the process arguments, run the selected command, and map every
/// failure onto a one-line `ERROR:<code>:` stderr message with a nonzero
/// exit, so callers can match outcomes mechanically.
pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("bad arguments");
            eprintln!("ERROR:BAD_INPUT:{}", first.trim_start_matches("error: "));
            return ExitCode::FAILURE;
        }
    };
    let global = Global {
        config: cli.config,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    let outcome = match cli.command {
        Command::Synth(args) => synth(&global, &args),
        Command::Split(args) => split(&global, &args),
        Command::Train(args) => train(&global, &args),
        Command::Eval(args) => evaluate::eval(&global, &args),
        Command::Ablate(args) => ablate(&global, &args),
        Command::Report(args) => evaluate::report(&global, &args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR:{}:{}", e.code(), single_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

/// Cap rayon's worker count; 0 keeps the default (all available cores).
fn setup_jobs(jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Error::InvalidConfig(format!("cannot set {jobs} worker threads: {e}")))
}

fn override_field<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn synth(global: &Global, args: &SynthArgs) -> Result<()> {
    let mut config = RunConfig::load_base(global.config.as_deref(), &args.out)?;
    let g = &mut config.generator;
    override_field(&mut g.n_patients, args.patients);
    override_field(&mut g.image_side, args.image_side);
    override_field(&mut g.hb_mean_female, args.hb_mean_female);
    override_field(&mut g.hb_mean_male, args.hb_mean_male);
    override_field(&mut g.hb_sd, args.hb_sd);
    override_field(&mut g.pallor_gain, args.pallor_gain);
    override_field(&mut g.vessel_gain, args.vessel_gain);
    override_field(&mut g.disc_gain, args.disc_gain);
    override_field(&mut g.nuisance_sd, args.nuisance_sd);
    override_field(&mut g.two_visit_fraction, args.two_visit_fraction);
    override_field(&mut g.two_eye_fraction, args.two_eye_fraction);
    override_field(&mut g.noise_sd, args.noise_sd);
    override_field(&mut config.jobs, global.jobs);
    let seed = config.resolve_seed(global.seed)?;
    config.generator.seed = seed;
    config.validate()?;
    let sampled = sample_cohort(&config.generator)?;
    write_dataset(&sampled, &config.generator, &args.out)?;
    config.write(&args.out)?;
    println!("dataset: {}", args.out.display());
    Ok(())
}

fn parse_fractions(raw: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::InvalidInput(format!(
            "fractions {raw:?}: expected train,tune,validation"
        )));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("fractions {raw:?}: bad number {part:?}")))?;
    }
    Ok(out)
}

fn split(global: &Global, args: &SplitArgs) -> Result<()> {
    let mut config = RunConfig::load_base(global.config.as_deref(), &args.data)?;
    if let Some(raw) = &args.fractions {
        config.split_fractions = parse_fractions(raw)?;
    }
    override_field(&mut config.jobs, global.jobs);
    let seed = config.resolve_seed(global.seed)?;
    config.validate()?;
    let cohort = crate::synthgen::read_dataset(&args.data)?;
    let [a, b, c] = config.split_fractions;
    let assignment = stratified_split(&cohort, seed, (a, b, c))?;
    let path = args.data.join(SPLIT_FILE);
    write_split(&assignment, &path)?;
    config.write(&args.data)?;
    println!("split: {}", path.display());
    Ok(())
}

fn train(global: &Global, args: &TrainArgs) -> Result<()> {
    let mut config = RunConfig::load_base(global.config.as_deref(), &args.data)?;
    let s = &mut config.schedule;
    override_field(&mut s.base_lr, args.base_lr);
    override_field(&mut s.warmup_start_lr, args.warmup_start_lr);
    override_field(&mut s.warmup_epochs, args.warmup_epochs);
    override_field(&mut s.batch_size, args.batch_size);
    override_field(&mut s.max_epochs, args.max_epochs);
    override_field(&mut s.patience, args.patience);
    override_field(&mut s.ema_decay, args.ema_decay);
    override_field(&mut s.momentum, args.momentum);
    override_field(&mut s.weight_decay, args.weight_decay);
    override_field(&mut config.ensemble, args.ensemble);
    override_field(&mut config.jobs, global.jobs);
    if let Some(token) = &args.task {
        config.tasks = vec![token.clone()];
    }
    let seed = config.resolve_seed(global.seed)?;
    config.validate()?;
    setup_jobs(config.jobs)?;

    let family = Family::parse(&args.family)?;
    let task = TaskSpec::parse(&config.tasks[0])?;
    let mut opts = TrainOptions::new(family, task.clone(), seed);
    opts.n_members = config.ensemble;
    opts.schedule = config.schedule.clone();
    opts.augment = config.augment.clone();
    let outcome = train_pipeline(&args.data, &opts)?;

    let out = model_dir(&args.data, args.out.as_deref(), family, &task);
    crate::models::save_bundle(&out, &outcome.bundle.meta, &outcome.member_params)?;
    write_predictions_csv(
        &out.join("predictions.csv"),
        &outcome.val_predictions,
        family,
        &task,
    )?;
    if !outcome.visit_predictions.is_empty() {
        write_visit_predictions_csv(
            &out.join("visits.csv"),
            &outcome.visit_predictions,
            family,
            &task,
        )?;
    }
    config.write(&out)?;
    println!("model: {}", out.display());
    Ok(())
}

pub fn model_dir(data: &Path, out: Option<&Path>, family: Family, task: &TaskSpec) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => data
            .join("models")
            .join(format!("{}_{}", family.as_str(), task.name())),
    }
}

fn ablate(global: &Global, args: &AblateArgs) -> Result<()> {
    let mut config = RunConfig::load_base(global.config.as_deref(), &args.data)?;
    if let Some(grid) = &args.grid {
        config.ablation_grid = grid.clone();
    }
    override_field(&mut config.ensemble, args.ensemble);
    override_field(&mut config.jobs, global.jobs);
    if let Some(token) = &args.task {
        config.tasks = vec![token.clone()];
    }
    let seed = config.resolve_seed(global.seed)?;
    config.validate()?;
    if config.ablation_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "no ablation grid: pass --grid or set ablation_grid in the config".into(),
        ));
    }
    setup_jobs(config.jobs)?;

    let specs = parse_grid(&config.ablation_grid)?;
    let mut opts = GridOptions::new(seed);
    opts.task = TaskSpec::parse(&config.tasks[0])?;
    opts.n_members = config.ensemble;
    opts.schedule = config.schedule.clone();
    opts.augment = config.augment.clone();
    let report = run_ablation_grid(&args.data, &specs, &opts)?;

    let out = match &args.out {
        Some(p) => p.clone(),
        None => args.data.join("ablation"),
    };
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_ablation_csv(&out.join("ablation_report.csv"), &report)?;
    write_ablation_summary_csv(&out.join("ablation_summary.csv"), &report)?;
    write_phase_manifest(&out.join("ablation_manifest.json"), &report)?;
    config.write(&out)?;
    for (token, error) in &report.failures {
        eprintln!("warning: arm {token} failed: {error}");
    }
    println!("ablation: {}", out.display());
    Ok(())
}
