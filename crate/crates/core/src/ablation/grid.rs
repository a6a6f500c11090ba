use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ablation::mask::AblationSpec;
use crate::error::{Error, Result};
use crate::image::FundusImage;
use crate::metrics::roc_auc;
use crate::models::pipeline::{load_split_view, partition, train_class_counts};
use crate::models::{
    apply_named_params, default_layer_specs, image_to_input, load_examples, softmax,
    train_member, ExampleTarget, NetArch, TaskSpec, TrainContext,
};
use crate::rng;
use crate::tensornet::{class_weights, AugmentRanges, TrainSchedule};

pub const ABLATION_HEADER: &str = "kind,param,seed,auc";
pub const ABLATION_SUMMARY_HEADER: &str = "kind,param,mean_auc,delta_auc";

/// Shared settings for every arm of an ablation grid.
pub struct GridOptions {
    /// Classification task whose AUC the grid measures.
    pub task: TaskSpec,
    /// Independently seeded members per arm; each contributes one AUC.
    pub n_members: usize,
    pub schedule: TrainSchedule,
    pub augment: AugmentRanges,
    pub root_seed: u64,
}

impl GridOptions {
    pub fn new(root_seed: u64) -> Self {
        GridOptions {
            task: TaskSpec::parse("anemia").expect("known task"),
            n_members: 3,
            schedule: TrainSchedule::default(),
            augment: AugmentRanges::default(),
            root_seed,
        }
    }
}

/// Hash of an arm's canonical serialization; train and eval phases must
/// present the same hash before their results may be combined.
pub fn spec_hash(spec: &AblationSpec) -> String {
    let body = serde_json::to_string(spec).expect("spec serializes");
    let digest = Sha256::digest(body.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Members trained under one arm's transform.
pub struct TrainedArm {
    pub spec: AblationSpec,
    pub train_hash: String,
    pub arch: NetArch,
    pub member_params: Vec<Vec<(String, Vec<f64>)>>,
}

/// Train the arm's members: fundus-only nets on transformed images, each
/// member seeded from the arm token so arms are independent and reruns
/// reproduce bit for bit.
pub fn train_arm(data_dir: &Path, spec: &AblationSpec, opts: &GridOptions) -> Result<TrainedArm> {
    spec.validate()?;
    if !opts.task.is_classification() {
        return Err(Error::InvalidConfig(
            "ablation grids need a classification task".into(),
        ));
    }
    if opts.n_members == 0 {
        return Err(Error::InvalidConfig("ablation needs at least one member".into()));
    }
    let (view, split) = load_split_view(data_dir)?;
    let (train, tune, _) = partition(&view, &split)?;
    if train.is_empty() || tune.is_empty() {
        return Err(Error::InvalidInput(
            "ablation needs non-empty train and tune splits".into(),
        ));
    }
    let weights = class_weights(&train_class_counts(&opts.task, &train)?, -0.9);
    let train_ex = load_examples(data_dir, &train, &opts.task, None, None)?;
    let tune_ex = load_examples(data_dir, &tune, &opts.task, None, None)?;
    let arch = NetArch {
        image_side: train_ex[0].image.side(),
        side_dim: 0,
        specs: default_layer_specs(opts.task.n_outputs(), false),
    };
    let template = arch.build()?;
    let arm_seed = rng::derive_u64(opts.root_seed, &format!("ablate/{}", spec.token()));
    let owned = *spec;
    let transform = move |img: &FundusImage| owned.apply(img);
    let task_name = opts.task.name();
    let ctx = TrainContext {
        task_name: &task_name,
        schedule: &opts.schedule,
        augment_ranges: &opts.augment,
        class_weights: weights,
        root_seed: arm_seed,
        transform: Some(&transform),
    };
    let member_params = (0..opts.n_members)
        .into_par_iter()
        .map(|m| {
            train_member(&template, &train_ex, &tune_ex, &ctx, m)
                .map(|tm| tm.params)
                .map_err(|e| Error::Member {
                    member: m,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedArm {
        spec: *spec,
        train_hash: spec_hash(spec),
        arch,
        member_params,
    })
}

/// Per-member validation AUC over per-eye examples: no ensembling and no eye
/// averaging, so each member's score stands alone. The eval spec must hash
/// to the arm's training hash — transformed training demands identically
/// transformed evaluation.
pub fn eval_arm(
    arm: &TrainedArm,
    spec: &AblationSpec,
    data_dir: &Path,
    opts: &GridOptions,
) -> Result<Vec<f64>> {
    if spec_hash(spec) != arm.train_hash {
        return Err(Error::InvalidInput(format!(
            "ablation phase mismatch: members trained under {} evaluated under {}",
            arm.spec.token(),
            spec.token()
        )));
    }
    let (view, split) = load_split_view(data_dir)?;
    let (_, _, val) = partition(&view, &split)?;
    let val_ex = load_examples(data_dir, &val, &opts.task, None, None)?;
    if val_ex.is_empty() {
        return Err(Error::InvalidInput(
            "ablation needs a non-empty validation split".into(),
        ));
    }
    let labels: Vec<bool> = val_ex
        .iter()
        .map(|e| e.target == ExampleTarget::Class(1))
        .collect();
    let inputs: Vec<Vec<f64>> = val_ex
        .iter()
        .map(|e| image_to_input(&spec.apply(&e.image)))
        .collect();
    let template = arm.arch.build()?;
    arm.member_params
        .iter()
        .map(|params| {
            let mut net = template.clone();
            apply_named_params(&mut net, params, "ema/")?;
            let scores = inputs
                .iter()
                .map(|input| Ok(softmax(&net.forward(input, None)?)[1]))
                .collect::<Result<Vec<f64>>>()?;
            let (_, auc) = roc_auc(&scores, &labels)?;
            Ok(auc)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmResult {
    pub spec: AblationSpec,
    pub spec_hash: String,
    /// One AUC per member seed.
    pub aucs: Vec<f64>,
    pub mean_auc: f64,
    /// Baseline (none-arm) mean AUC minus this arm's mean: positive when
    /// the ablation removed signal the net was using.
    pub delta_auc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub arms: Vec<ArmResult>,
    /// Failed non-baseline arms as (token, error); a baseline failure fails
    /// the whole grid instead.
    pub failures: Vec<(String, String)>,
}

fn summarize(outcomes: Vec<(AblationSpec, String, Result<Vec<f64>>)>) -> Result<AblationReport> {
    let mut baseline_mean = None;
    let mut kept = Vec::new();
    let mut failures = Vec::new();
    for (spec, hash, result) in outcomes {
        match result {
            Ok(aucs) => {
                if aucs.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "arm {} produced no member scores",
                        spec.token()
                    )));
                }
                let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
                if spec.is_none() {
                    baseline_mean = Some(mean);
                }
                kept.push((spec, hash, aucs, mean));
            }
            Err(e) if spec.is_none() => return Err(e),
            Err(e) => failures.push((spec.token(), e.to_string())),
        }
    }
    let baseline = baseline_mean.ok_or_else(|| {
        Error::InvalidConfig("ablation grid must include the none arm".into())
    })?;
    let arms = kept
        .into_iter()
        .map(|(spec, spec_hash, aucs, mean_auc)| ArmResult {
            spec,
            spec_hash,
            aucs,
            mean_auc,
            delta_auc: baseline - mean_auc,
        })
        .collect();
    Ok(AblationReport { arms, failures })
}

/// Run every arm end to end. The none arm anchors the deltas and is added
/// automatically when missing; a failing arm is recorded without sinking the
/// rest of the grid.
pub fn run_ablation_grid(
    data_dir: &Path,
    grid: &[AblationSpec],
    opts: &GridOptions,
) -> Result<AblationReport> {
    let mut specs = Vec::with_capacity(grid.len() + 1);
    if !grid.iter().any(AblationSpec::is_none) {
        specs.push(AblationSpec::None);
    }
    specs.extend_from_slice(grid);
    let outcomes = specs
        .iter()
        .map(|spec| {
            let result = train_arm(data_dir, spec, opts)
                .and_then(|arm| eval_arm(&arm, spec, data_dir, opts));
            (*spec, spec_hash(spec), result)
        })
        .collect();
    summarize(outcomes)
}

/// Per-seed rows: `kind,param,seed,auc`, one line per member of each arm.
pub fn write_ablation_csv(path: &Path, report: &AblationReport) -> Result<()> {
    let mut body = String::from(ABLATION_HEADER);
    body.push('\n');
    for arm in &report.arms {
        for (seed, auc) in arm.aucs.iter().enumerate() {
            body.push_str(&format!(
                "{},{},{},{}\n",
                arm.spec.kind_str(),
                arm.spec.param(),
                seed,
                auc
            ));
        }
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Per-arm means: `kind,param,mean_auc,delta_auc`.
pub fn write_ablation_summary_csv(path: &Path, report: &AblationReport) -> Result<()> {
    let mut body = String::from(ABLATION_SUMMARY_HEADER);
    body.push('\n');
    for arm in &report.arms {
        body.push_str(&format!(
            "{},{},{},{}\n",
            arm.spec.kind_str(),
            arm.spec.param(),
            arm.mean_auc,
            arm.delta_auc
        ));
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_ablation_summary_csv(path: &Path) -> Result<Vec<(String, f64, f64, f64)>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines();
    if lines.next() != Some(ABLATION_SUMMARY_HEADER) {
        return Err(Error::InvalidInput(format!(
            "{}: expected header {ABLATION_SUMMARY_HEADER:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::InvalidInput(format!(
                "{}:{}: expected 4 fields",
                path.display(),
                i + 2
            )));
        }
        let num = |f: &str| {
            f.parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("{}:{}: bad number {f:?}", path.display(), i + 2))
            })
        };
        rows.push((
            fields[0].to_string(),
            num(fields[1])?,
            num(fields[2])?,
            num(fields[3])?,
        ));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct PhaseEntry<'a> {
    token: String,
    kind: &'a str,
    param: f64,
    train_hash: &'a str,
    eval_hash: &'a str,
}

/// Phase manifest: per arm, the spec hash both phases presented. Hashes are
/// equal by construction because [`eval_arm`] rejects mismatches.
pub fn write_phase_manifest(path: &Path, report: &AblationReport) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        arms: Vec<PhaseEntry<'a>>,
        failures: &'a [(String, String)],
    }
    let manifest = Manifest {
        arms: report
            .arms
            .iter()
            .map(|arm| PhaseEntry {
                token: arm.spec.token(),
                kind: arm.spec.kind_str(),
                param: arm.spec.param(),
                train_hash: &arm.spec_hash,
                eval_hash: &arm.spec_hash,
            })
            .collect(),
        failures: &report.failures,
    };
    let mut body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(path, e))?;
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))
}
