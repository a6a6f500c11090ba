use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::cohort::{multi_visit_pairs, read_split, Split, Standardizer};
use crate::cohort::{first_visit_view, PatientRecord};
use crate::error::{Error, Result};
use crate::models::baseline::{fit_metadata_logistic, fit_metadata_regression};
use crate::models::data::{
    image_to_input, load_examples, metadata_columns, metadata_features, metadata_feature_names,
    TrainExample,
};
use crate::models::predict::{BaselineParams, BundleMeta, ModelBundle, NetArch, PatientPrediction};
use crate::models::task::{Family, TaskSpec};
use crate::models::train::{
    apply_named_params, default_layer_specs, train_member, ImageTransform, TrainContext, TrainLog,
};
use crate::rng;
use crate::synthgen::read_dataset;
use crate::tensornet::{class_weights, AugmentRanges, LayerSpec, Network, Shape, TrainSchedule};

pub const SPLIT_FILE: &str = "split.csv";
pub const PREDICTIONS_HEADER: &str = "patient_id,family,task,target,value";
pub const VISIT_PREDICTIONS_HEADER: &str = "patient_id,visit_index,family,task,target,value";

/// Everything `train_pipeline` needs beyond the dataset directory.
pub struct TrainOptions<'a> {
    pub family: Family,
    pub task: TaskSpec,
    pub n_members: usize,
    pub schedule: TrainSchedule,
    pub augment: AugmentRanges,
    pub root_seed: u64,
    pub transform: Option<&'a ImageTransform>,
    pub logistic_max_iters: usize,
}

impl<'a> TrainOptions<'a> {
    pub fn new(family: Family, task: TaskSpec, root_seed: u64) -> Self {
        TrainOptions {
            family,
            task,
            n_members: 3,
            schedule: TrainSchedule::default(),
            augment: AugmentRanges::default(),
            root_seed,
            transform: None,
            logistic_max_iters: 200_000,
        }
    }
}

/// A trained family plus everything needed to persist and audit it.
#[derive(Debug)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    /// Checkpoint entries per member, aligned with `bundle.meta.members`.
    pub member_params: Vec<Vec<(String, Vec<f64>)>>,
    pub logs: Vec<TrainLog>,
    /// Predictions for every validation patient, ordered by patient id.
    pub val_predictions: Vec<PatientPrediction>,
    /// Per-visit predictions for validation patients with two eligible
    /// visits: (patient_id, visit_index, values).
    pub visit_predictions: Vec<(String, usize, Vec<f64>)>,
}

pub(crate) fn load_split_view(
    data_dir: &Path,
) -> Result<(Vec<PatientRecord>, crate::cohort::SplitAssignment)> {
    let cohort = read_dataset(data_dir)?;
    let split = read_split(&data_dir.join(SPLIT_FILE))?;
    Ok((first_visit_view(&cohort), split))
}

pub(crate) fn partition<'a>(
    view: &'a [PatientRecord],
    split: &crate::cohort::SplitAssignment,
) -> Result<(
    Vec<&'a PatientRecord>,
    Vec<&'a PatientRecord>,
    Vec<&'a PatientRecord>,
)> {
    let mut train = Vec::new();
    let mut tune = Vec::new();
    let mut val = Vec::new();
    for p in view {
        match split.get(&p.patient_id) {
            Some(Split::Train) => train.push(p),
            Some(Split::Tune) => tune.push(p),
            Some(Split::Validation) => val.push(p),
            None => {
                return Err(Error::MissingInput(format!(
                    "patient {} has no split assignment",
                    p.patient_id
                )))
            }
        }
    }
    for set in [&mut train, &mut tune, &mut val] {
        set.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    }
    Ok((train, tune, val))
}

pub(crate) fn train_class_counts(task: &TaskSpec, train: &[&PatientRecord]) -> Result<Vec<usize>> {
    let mut counts = vec![0usize; task.n_outputs()];
    for p in train {
        counts[task.class_of(p, &p.visits[0])?] += 1;
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::SingleClass(format!(
            "train split has no class-{c} patients for task {}",
            task.name()
        )));
    }
    Ok(counts)
}

fn fit_target_standardizer(task: &TaskSpec, train: &[&PatientRecord]) -> Result<Standardizer> {
    let names = task.target_names();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let mut columns = vec![Vec::with_capacity(train.len()); names.len()];
    for p in train {
        for (col, v) in columns.iter_mut().zip(task.target_values(&p.visits[0])?) {
            col.push(v);
        }
    }
    Standardizer::fit(&name_refs, &columns)
}

fn fit_baseline(
    task: &TaskSpec,
    train: &[&PatientRecord],
    std: &Standardizer,
    logistic_max_iters: usize,
) -> Result<BaselineParams> {
    let rows: Vec<Vec<f64>> = train
        .iter()
        .map(|p| std.apply(&metadata_features(p)))
        .collect::<Result<_>>()?;
    if task.is_classification() {
        let mut labels = Vec::with_capacity(train.len());
        for p in train {
            labels.push(task.class_of(p, &p.visits[0])? == 1);
        }
        Ok(BaselineParams::Logistic(fit_metadata_logistic(
            &rows,
            &labels,
            logistic_max_iters,
        )?))
    } else {
        let mut models = Vec::new();
        for (t, _) in task.target_names().iter().enumerate() {
            let mut y = Vec::with_capacity(train.len());
            for p in train {
                y.push(task.target_values(&p.visits[0])?[t]);
            }
            models.push(fit_metadata_regression(&rows, &y)?);
        }
        Ok(BaselineParams::Linear(models))
    }
}

/// Scale factor matching unit-variance metadata to the trunk's activation
/// scale at the concat point: the RMS of the global-average-pool output of a
/// freshly initialized trunk over (a sample of) the training images. Without
/// it the side features dwarf the pooled image features and their weights,
/// churned by gradient noise, bury the image signal in the shared head.
fn fusion_side_gain(
    image_side: usize,
    examples: &[TrainExample],
    transform: Option<&ImageTransform>,
    root_seed: u64,
    task_name: &str,
) -> Result<f64> {
    const SAMPLE: usize = 256;
    let mut specs = default_layer_specs(1, false);
    let gap = specs
        .iter()
        .position(|s| matches!(s, LayerSpec::GlobalAvgPool))
        .expect("trunk ends in a global average pool");
    specs.truncate(gap + 1);
    let mut trunk = Network::new(
        Shape::Map {
            c: 3,
            h: image_side,
            w: image_side,
        },
        0,
        &specs,
    )?;
    trunk.init_params(&mut rng::stream(
        root_seed,
        &format!("train/{task_name}/fusion-scale"),
    ));
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for ex in examples.iter().take(SAMPLE) {
        let pooled = match transform {
            Some(t) => trunk.forward(&image_to_input(&t(&ex.image)), None)?,
            None => trunk.forward(&image_to_input(&ex.image), None)?,
        };
        count += pooled.len();
        sum_sq += pooled.iter().map(|v| v * v).sum::<f64>();
    }
    Ok((sum_sq / count as f64).sqrt().min(1.0))
}

fn scale_sides(examples: &mut [TrainExample], gain: f64) {
    for ex in examples {
        if let Some(side) = &mut ex.side {
            for v in side {
                *v *= gain;
            }
        }
    }
}

/// Train one family on a dataset directory laid out as `manifest.csv`,
/// `images/`, and `split.csv`, then predict the validation split.
pub fn train_pipeline(data_dir: &Path, opts: &TrainOptions) -> Result<TrainOutcome> {
    opts.task.validate()?;
    let cohort = read_dataset(data_dir)?;
    let split = read_split(&data_dir.join(SPLIT_FILE))?;
    let view = first_visit_view(&cohort);
    let (train, tune, val) = partition(&view, &split)?;
    if train.is_empty() {
        return Err(Error::InvalidInput("train split is empty".into()));
    }

    let meta_std = if opts.family.uses_metadata() {
        let names = metadata_feature_names();
        Some(Standardizer::fit(&names, &metadata_columns(&train))?)
    } else {
        None
    };
    let weights = if opts.task.is_classification() {
        class_weights(&train_class_counts(&opts.task, &train)?, -0.9)
    } else {
        Vec::new()
    };
    let target_std = if opts.task.is_classification() {
        None
    } else {
        Some(fit_target_standardizer(&opts.task, &train)?)
    };

    let (meta, member_params, logs) = if opts.family == Family::MetadataOnly {
        let std = meta_std.as_ref().expect("metadata family");
        let baseline = fit_baseline(&opts.task, &train, std, opts.logistic_max_iters)?;
        let meta = BundleMeta {
            family: opts.family,
            task: opts.task.clone(),
            meta_standardizer: meta_std.clone(),
            side_gain: None,
            target_standardizer: None,
            arch: None,
            members: Vec::new(),
            baseline: Some(baseline),
        };
        (meta, Vec::new(), Vec::new())
    } else {
        if opts.n_members == 0 {
            return Err(Error::InvalidConfig("ensemble size must be positive".into()));
        }
        if tune.is_empty() {
            return Err(Error::InvalidInput("tune split is empty".into()));
        }
        let net_target_std = if opts.task.is_classification() {
            None
        } else {
            target_std.clone()
        };
        let mut train_examples = load_examples(
            data_dir,
            &train,
            &opts.task,
            meta_std.as_ref(),
            net_target_std.as_ref(),
        )?;
        let mut tune_examples = load_examples(
            data_dir,
            &tune,
            &opts.task,
            meta_std.as_ref(),
            net_target_std.as_ref(),
        )?;
        if train_examples.is_empty() || tune_examples.is_empty() {
            return Err(Error::InvalidInput(
                "train and tune splits need at least one image each".into(),
            ));
        }
        let arch = NetArch {
            image_side: train_examples[0].image.side(),
            side_dim: meta_std.as_ref().map_or(0, |s| s.n_retained()),
            specs: default_layer_specs(opts.task.n_outputs(), opts.family.uses_metadata()),
        };
        let template = arch.build()?;
        let task_name = opts.task.name();
        let side_gain = if opts.family.uses_metadata() {
            let gain = fusion_side_gain(
                arch.image_side,
                &train_examples,
                opts.transform,
                opts.root_seed,
                &task_name,
            )?;
            scale_sides(&mut train_examples, gain);
            scale_sides(&mut tune_examples, gain);
            Some(gain)
        } else {
            None
        };
        let ctx = TrainContext {
            task_name: &task_name,
            schedule: &opts.schedule,
            augment_ranges: &opts.augment,
            class_weights: weights,
            root_seed: opts.root_seed,
            transform: opts.transform,
        };
        let members = (0..opts.n_members)
            .into_par_iter()
            .map(|m| {
                train_member(&template, &train_examples, &tune_examples, &ctx, m)
                    .map_err(|e| Error::Member {
                        member: m,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = BundleMeta {
            family: opts.family,
            task: opts.task.clone(),
            meta_standardizer: meta_std.clone(),
            side_gain,
            target_standardizer: net_target_std,
            arch: Some(arch),
            members: (0..opts.n_members)
                .map(|m| format!("member{m}.fsck"))
                .collect(),
            baseline: None,
        };
        let mut params = Vec::with_capacity(members.len());
        let mut logs = Vec::with_capacity(members.len());
        for member in members {
            params.push(member.params);
            logs.push(member.log);
        }
        (meta, params, logs)
    };

    let mut nets = Vec::with_capacity(member_params.len());
    if let Some(arch) = &meta.arch {
        for params in &member_params {
            let mut net = arch.build()?;
            apply_named_params(&mut net, params, "ema/")?;
            nets.push(net);
        }
    }
    let bundle = ModelBundle { meta, nets };

    let mut val_predictions = Vec::with_capacity(val.len());
    for p in &val {
        val_predictions.push(bundle.predict_patient(p, data_dir, opts.transform)?);
    }

    let mut visit_predictions = Vec::new();
    for (p, first, second) in multi_visit_pairs(&cohort) {
        if split.get(&p.patient_id) != Some(Split::Validation) {
            continue;
        }
        for visit in [first, second] {
            let pred = bundle.predict_visit(p, visit, data_dir, opts.transform)?;
            visit_predictions.push((p.patient_id.clone(), visit.visit_index, pred.value));
        }
    }

    Ok(TrainOutcome {
        bundle,
        member_params,
        logs,
        val_predictions,
        visit_predictions,
    })
}

/// One predictions-file row as written by [`write_predictions_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub patient_id: String,
    pub family: String,
    pub task: String,
    pub target: String,
    pub value: f64,
}

fn prediction_targets(task: &TaskSpec, value: &[f64]) -> Vec<(String, f64)> {
    if task.is_classification() {
        // The positive-class probability is the operating score.
        vec![(task.name(), value[1])]
    } else {
        task.target_names()
            .into_iter()
            .zip(value.iter().copied())
            .collect()
    }
}

pub fn write_predictions_csv(
    path: &Path,
    predictions: &[PatientPrediction],
    family: Family,
    task: &TaskSpec,
) -> Result<()> {
    let mut body = String::from(PREDICTIONS_HEADER);
    body.push('\n');
    for pred in predictions {
        for (target, value) in prediction_targets(task, &pred.value) {
            body.push_str(&format!(
                "{},{},{},{},{}\n",
                pred.patient_id,
                family.as_str(),
                task.name(),
                target,
                value
            ));
        }
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn write_visit_predictions_csv(
    path: &Path,
    rows: &[(String, usize, Vec<f64>)],
    family: Family,
    task: &TaskSpec,
) -> Result<()> {
    let mut body = String::from(VISIT_PREDICTIONS_HEADER);
    body.push('\n');
    for (patient_id, visit_index, value) in rows {
        for (target, v) in prediction_targets(task, value) {
            body.push_str(&format!(
                "{},{},{},{},{},{}\n",
                patient_id,
                visit_index,
                family.as_str(),
                task.name(),
                target,
                v
            ));
        }
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn parse_line(path: &Path, lineno: usize, line: &str, want: usize) -> Result<Vec<String>> {
    let fields: Vec<String> = line.split(',').map(str::to_string).collect();
    if fields.len() != want {
        return Err(Error::InvalidInput(format!(
            "{}:{lineno}: expected {want} fields, found {}",
            path.display(),
            fields.len()
        )));
    }
    Ok(fields)
}

fn parse_value(path: &Path, lineno: usize, field: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!(
            "{}:{lineno}: bad value {field:?}",
            path.display()
        ))
    })
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PREDICTIONS_HEADER => {}
        other => {
            return Err(Error::InvalidInput(format!(
                "{}: expected header {PREDICTIONS_HEADER:?}, found {:?}",
                path.display(),
                other.map(|(_, h)| h).unwrap_or_default()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f = parse_line(path, i + 1, line, 5)?;
        rows.push(PredictionRow {
            value: parse_value(path, i + 1, &f[4])?,
            patient_id: f[0].clone(),
            family: f[1].clone(),
            task: f[2].clone(),
            target: f[3].clone(),
        });
    }
    Ok(rows)
}

/// Rows of a visit-predictions file: (patient_id, visit_index, target, value).
pub fn read_visit_predictions_csv(path: &Path) -> Result<Vec<(String, usize, String, f64)>> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == VISIT_PREDICTIONS_HEADER => {}
        other => {
            return Err(Error::InvalidInput(format!(
                "{}: expected header {VISIT_PREDICTIONS_HEADER:?}, found {:?}",
                path.display(),
                other.map(|(_, h)| h).unwrap_or_default()
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f = parse_line(path, i + 1, line, 6)?;
        let visit_index = f[1].parse::<usize>().map_err(|_| {
            Error::InvalidInput(format!(
                "{}:{}: bad visit index {:?}",
                path.display(),
                i + 1,
                f[1]
            ))
        })?;
        rows.push((
            f[0].clone(),
            visit_index,
            f[4].clone(),
            parse_value(path, i + 1, &f[5])?,
        ));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{stratified_split, write_split};
    use crate::models::predict::{load_bundle, save_bundle};
    use crate::synthgen::{sample_cohort, write_dataset, GeneratorConfig};
    use std::collections::BTreeSet;
    use tempfile::tempdir;

    fn make_dataset(dir: &Path, config: &GeneratorConfig) -> Vec<PatientRecord> {
        let sampled = sample_cohort(config).unwrap();
        write_dataset(&sampled, config, dir).unwrap();
        let cohort = read_dataset(dir).unwrap();
        let split = stratified_split(&cohort, config.seed, (0.6, 0.2, 0.2)).unwrap();
        write_split(&split, &dir.join(SPLIT_FILE)).unwrap();
        cohort
    }

    fn small_config(n: usize, seed: u64, two_visit: f64) -> GeneratorConfig {
        GeneratorConfig {
            n_patients: n,
            image_side: 32,
            two_visit_fraction: two_visit,
            seed,
            ..GeneratorConfig::default()
        }
    }

    /// Lower hemoglobin means so small cohorts carry both anemia classes.
    fn enriched(mut config: GeneratorConfig) -> GeneratorConfig {
        config.hb_mean_female = 12.5;
        config.hb_mean_male = 13.5;
        config
    }

    fn short_schedule() -> TrainSchedule {
        TrainSchedule {
            base_lr: 0.01,
            warmup_start_lr: 0.002,
            warmup_epochs: 1,
            batch_size: 16,
            max_epochs: 2,
            patience: 2,
            ..TrainSchedule::default()
        }
    }

    fn split_ids(dir: &Path, split: Split) -> BTreeSet<String> {
        let assignment = read_split(&dir.join(SPLIT_FILE)).unwrap();
        assignment
            .patients_in(split)
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    #[test]
    fn metadata_classification_pipeline_runs() {
        let dir = tempdir().unwrap();
        make_dataset(dir.path(), &enriched(small_config(80, 11, 0.0)));
        let opts = TrainOptions::new(
            Family::MetadataOnly,
            TaskSpec::parse("anemia").unwrap(),
            11,
        );
        let outcome = train_pipeline(dir.path(), &opts).unwrap();
        assert!(matches!(
            outcome.bundle.meta.baseline,
            Some(BaselineParams::Logistic(_))
        ));
        assert!(outcome.bundle.nets.is_empty());
        assert!(outcome.logs.is_empty());
        let val = split_ids(dir.path(), Split::Validation);
        assert_eq!(outcome.val_predictions.len(), val.len());
        for pred in &outcome.val_predictions {
            assert!(val.contains(&pred.patient_id));
            assert!(pred.value[1] > 0.0 && pred.value[1] < 1.0);
            assert!((pred.value[0] + pred.value[1] - 1.0).abs() < 1e-12);
        }
        let ids: Vec<&str> = outcome
            .val_predictions
            .iter()
            .map(|p| p.patient_id.as_str())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        assert_eq!(ids, sorted);

        let csv = dir.path().join("preds.csv");
        write_predictions_csv(&csv, &outcome.val_predictions, opts.family, &opts.task).unwrap();
        let rows = read_predictions_csv(&csv).unwrap();
        assert_eq!(rows.len(), outcome.val_predictions.len());
        assert!(rows
            .iter()
            .all(|r| r.family == "metadata_only" && r.task == "anemia" && r.target == "anemia"));
        assert!((rows[0].value - outcome.val_predictions[0].value[1]).abs() < 1e-15);
    }

    #[test]
    fn fundus_training_isolates_validation_and_reloads() {
        let dir = tempdir().unwrap();
        make_dataset(dir.path(), &enriched(small_config(60, 13, 0.0)));
        let opts = TrainOptions {
            n_members: 2,
            schedule: short_schedule(),
            ..TrainOptions::new(Family::FundusOnly, TaskSpec::parse("anemia").unwrap(), 13)
        };
        let outcome = train_pipeline(dir.path(), &opts).unwrap();
        assert_eq!(outcome.logs.len(), 2);
        assert_eq!(outcome.bundle.nets.len(), 2);
        assert!(outcome.bundle.meta.side_gain.is_none());

        let train = split_ids(dir.path(), Split::Train);
        let tune = split_ids(dir.path(), Split::Tune);
        let val = split_ids(dir.path(), Split::Validation);
        for log in &outcome.logs {
            assert!(log.gradient_patient_ids.is_subset(&train));
            assert!(log.tune_patient_ids.is_subset(&tune));
            assert!(log.gradient_patient_ids.is_disjoint(&val));
            assert!(log.tune_patient_ids.is_disjoint(&val));
            assert!(log
                .gradient_patient_ids
                .is_disjoint(&log.tune_patient_ids));
        }

        let bundle_dir = dir.path().join("bundle");
        save_bundle(
            &bundle_dir,
            &outcome.bundle.meta,
            &outcome.member_params,
        )
        .unwrap();
        let reloaded = load_bundle(&bundle_dir).unwrap();
        for p in &outcome.val_predictions {
            let cohort = read_dataset(dir.path()).unwrap();
            let patient = cohort
                .iter()
                .find(|c| c.patient_id == p.patient_id)
                .unwrap();
            let again = reloaded.predict_patient(patient, dir.path(), None).unwrap();
            for (a, b) in p.value.iter().zip(&again.value) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            break;
        }
    }

    #[test]
    fn combined_regression_emits_visit_predictions() {
        let dir = tempdir().unwrap();
        let cohort = make_dataset(dir.path(), &small_config(80, 17, 0.5));
        let opts = TrainOptions {
            n_members: 1,
            schedule: short_schedule(),
            ..TrainOptions::new(Family::Combined, TaskSpec::parse("hb").unwrap(), 17)
        };
        let outcome = train_pipeline(dir.path(), &opts).unwrap();
        assert!(outcome.bundle.meta.meta_standardizer.is_some());
        assert!(outcome.bundle.meta.target_standardizer.is_some());
        // The fusion gain matches side features to the trunk's activation
        // scale, so it must land strictly inside (0, 1].
        let gain = outcome.bundle.meta.side_gain.unwrap();
        assert!(gain > 0.0 && gain <= 1.0, "{gain}");
        assert!(!outcome.visit_predictions.is_empty());

        let val = split_ids(dir.path(), Split::Validation);
        let pair_ids: BTreeSet<&str> = multi_visit_pairs(&cohort)
            .iter()
            .map(|(p, _, _)| p.patient_id.as_str())
            .filter(|id| val.contains(*id))
            .collect();
        assert_eq!(outcome.visit_predictions.len(), 2 * pair_ids.len());
        for (id, visit_index, value) in &outcome.visit_predictions {
            assert!(pair_ids.contains(id.as_str()));
            assert!(*visit_index <= 1);
            assert!(value[0].is_finite());
        }

        let csv = dir.path().join("visits.csv");
        write_visit_predictions_csv(&csv, &outcome.visit_predictions, opts.family, &opts.task)
            .unwrap();
        let rows = read_visit_predictions_csv(&csv).unwrap();
        assert_eq!(rows.len(), outcome.visit_predictions.len());
        assert_eq!(rows[0].2, "hb");
    }

    #[test]
    fn member_failure_names_the_member() {
        let dir = tempdir().unwrap();
        make_dataset(dir.path(), &enriched(small_config(40, 19, 0.0)));
        let opts = TrainOptions {
            n_members: 1,
            schedule: TrainSchedule {
                base_lr: 1e18,
                warmup_start_lr: 1e18,
                warmup_epochs: 0,
                batch_size: 8,
                max_epochs: 3,
                ..TrainSchedule::default()
            },
            ..TrainOptions::new(Family::FundusOnly, TaskSpec::parse("anemia").unwrap(), 19)
        };
        let err = train_pipeline(dir.path(), &opts).unwrap_err();
        match err {
            Error::Member { member, source } => {
                assert_eq!(member, 0);
                assert!(matches!(*source, Error::Diverged { .. }), "{source}");
            }
            other => panic!("expected member failure, got {other}"),
        }
    }

    #[test]
    fn metadata_regression_beats_constant_mean() {
        let dir = tempdir().unwrap();
        let cohort = make_dataset(dir.path(), &small_config(120, 23, 0.0));
        let opts = TrainOptions::new(Family::MetadataOnly, TaskSpec::parse("hb").unwrap(), 23);
        let outcome = train_pipeline(dir.path(), &opts).unwrap();

        let split = read_split(&dir.path().join(SPLIT_FILE)).unwrap();
        let train_hb: Vec<f64> = cohort
            .iter()
            .filter(|p| split.get(&p.patient_id) == Some(Split::Train))
            .map(|p| p.visits[0].hb.unwrap())
            .collect();
        let train_mean = train_hb.iter().sum::<f64>() / train_hb.len() as f64;

        let truth: std::collections::BTreeMap<&str, f64> = cohort
            .iter()
            .map(|p| (p.patient_id.as_str(), p.visits[0].hb.unwrap()))
            .collect();
        let mut model_mae = 0.0;
        let mut const_mae = 0.0;
        for pred in &outcome.val_predictions {
            let t = truth[pred.patient_id.as_str()];
            model_mae += (pred.value[0] - t).abs();
            const_mae += (train_mean - t).abs();
        }
        assert!(
            model_mae <= const_mae,
            "model {model_mae} vs constant {const_mae}"
        );
    }
}
