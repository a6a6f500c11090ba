use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::ablation::{read_ablation_summary_csv, ABLATION_SUMMARY_HEADER};
use crate::cli::commands::{EvalArgs, Global, ReportArgs};
use crate::cli::config::RunConfig;
use crate::cohort::PatientRecord;
use crate::error::{Error, Result};
use crate::metrics::{
    agreement_stats, bootstrap_ci, regression_metrics, residual_visit_correlation, roc_auc,
    roc_curve, sensitivity_at_specificity, write_metric_reports, write_roc_csv,
};
use crate::models::{
    first_eligible_visit, read_predictions_csv, read_visit_predictions_csv, Family,
    PredictionRow, TaskSpec, CLASSIFICATION_TARGETS,
};
use crate::synthgen::read_dataset;

pub const SENSITIVITY_HEADER: &str = "task,family,sens_at_70,sens_at_80,sens_at_90";
pub const AUC_HEADER: &str = "task,family,auc";
pub const AGREEMENT_HEADER: &str = "task,family,target,mean_diff,sd_diff,expected_mae";

/// A predictions file reshaped into per-target columns, with the family and
/// task reconstructed from its rows.
struct PredTable {
    family: Family,
    task: TaskSpec,
    patients: Vec<String>,
    /// Target name and its per-patient values, aligned with `patients`.
    columns: Vec<(String, Vec<f64>)>,
}

fn collect_table(rows: &[PredictionRow]) -> Result<PredTable> {
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidInput("empty predictions file".into()))?;
    let family = Family::parse(&first.family)?;
    for row in rows {
        if row.family != first.family || row.task != first.task {
            return Err(Error::InvalidInput(format!(
                "mixed predictions: {}/{} next to {}/{}",
                first.family, first.task, row.family, row.task
            )));
        }
    }
    let mut patients: Vec<String> = Vec::new();
    let mut groups: Vec<Vec<&PredictionRow>> = Vec::new();
    for row in rows {
        if patients.last() != Some(&row.patient_id) {
            if patients.contains(&row.patient_id) {
                return Err(Error::InvalidInput(format!(
                    "patient {} appears in separated row blocks",
                    row.patient_id
                )));
            }
            patients.push(row.patient_id.clone());
            groups.push(Vec::new());
        }
        groups.last_mut().expect("group exists").push(row);
    }
    let targets: Vec<String> = groups[0].iter().map(|r| r.target.clone()).collect();
    for (patient, group) in patients.iter().zip(&groups) {
        if !group.iter().map(|r| &r.target).eq(targets.iter()) {
            return Err(Error::InvalidInput(format!(
                "patient {patient}: targets disagree with the first patient's rows"
            )));
        }
    }
    let task = if CLASSIFICATION_TARGETS.contains(&first.task.as_str()) {
        if targets.len() != 1 || targets[0] != first.task {
            return Err(Error::InvalidInput(format!(
                "classification task {} must carry exactly its own target column",
                first.task
            )));
        }
        TaskSpec::Classification {
            target: first.task.clone(),
            n_classes: 2,
        }
    } else {
        let spec = TaskSpec::Regression {
            targets: targets.clone(),
        };
        spec.validate()?;
        spec
    };
    let columns = targets
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), groups.iter().map(|g| g[i].value).collect()))
        .collect();
    Ok(PredTable {
        family,
        task,
        patients,
        columns,
    })
}

fn cohort_index(data: &Path) -> Result<BTreeMap<String, PatientRecord>> {
    let cohort = read_dataset(data)?;
    Ok(cohort
        .into_iter()
        .map(|p| (p.patient_id.clone(), p))
        .collect())
}

fn find_patient<'a>(
    index: &'a BTreeMap<String, PatientRecord>,
    id: &str,
) -> Result<&'a PatientRecord> {
    index
        .get(id)
        .ok_or_else(|| Error::MissingInput(format!("patient {id} not in the dataset")))
}

fn truth_classes(
    task: &TaskSpec,
    index: &BTreeMap<String, PatientRecord>,
    patients: &[String],
) -> Result<Vec<bool>> {
    patients
        .iter()
        .map(|id| {
            let patient = find_patient(index, id)?;
            let visit = first_eligible_visit(patient)?;
            Ok(task.class_of(patient, visit)? == 1)
        })
        .collect()
}

/// Ground truth per patient, in the task's target order.
fn truth_values(
    task: &TaskSpec,
    index: &BTreeMap<String, PatientRecord>,
    patients: &[String],
) -> Result<Vec<Vec<f64>>> {
    patients
        .iter()
        .map(|id| {
            let patient = find_patient(index, id)?;
            let visit = first_eligible_visit(patient)?;
            task.target_values(visit)
        })
        .collect()
}

fn take<T: Copy>(values: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Residuals of a patient's two visits against its first regression target:
/// the correlated part is what a patient-specific nuisance leaves behind.
fn residual_pairs(
    visits_file: &Path,
    task: &TaskSpec,
    index: &BTreeMap<String, PatientRecord>,
) -> Result<Vec<(f64, f64)>> {
    let target = &task.target_names()[0];
    let mut per_patient: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for (patient_id, visit_index, row_target, value) in read_visit_predictions_csv(visits_file)? {
        if &row_target == target {
            per_patient
                .entry(patient_id)
                .or_default()
                .push((visit_index, value));
        }
    }
    if per_patient.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no rows for target {target}",
            visits_file.display()
        )));
    }
    let mut pairs = Vec::with_capacity(per_patient.len());
    for (patient_id, mut rows) in per_patient {
        rows.sort_by_key(|&(visit_index, _)| visit_index);
        if rows.len() != 2 {
            return Err(Error::InvalidInput(format!(
                "patient {patient_id}: expected two visit rows, found {}",
                rows.len()
            )));
        }
        let patient = find_patient(index, &patient_id)?;
        let mut residuals = [0.0; 2];
        for (slot, &(visit_index, pred)) in residuals.iter_mut().zip(&rows) {
            let visit = patient
                .visits
                .iter()
                .find(|v| v.visit_index == visit_index)
                .ok_or_else(|| {
                    Error::MissingInput(format!("patient {patient_id} has no visit {visit_index}"))
                })?;
            *slot = pred - task.target_values(visit)?[0];
        }
        pairs.push((residuals[0], residuals[1]));
    }
    Ok(pairs)
}

pub fn eval(global: &Global, args: &EvalArgs) -> Result<()> {
    let mut config = RunConfig::load_base(global.config.as_deref(), &args.data)?;
    if let Some(b) = args.bootstrap {
        config.bootstrap = b;
    }
    if let Some(j) = global.jobs {
        config.jobs = j;
    }
    let seed = config.resolve_seed(global.seed)?;
    config.validate()?;

    let rows = read_predictions_csv(&args.pred)?;
    let table = collect_table(&rows)?;
    if args.visits.is_some() && table.task.is_classification() {
        return Err(Error::InvalidInput(
            "--visits applies to regression predictions".into(),
        ));
    }
    let index = cohort_index(&args.data)?;
    let out = match &args.out {
        Some(p) => p.clone(),
        None => args
            .data
            .join("eval")
            .join(format!("{}_{}", table.family.as_str(), table.task.name())),
    };
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let n = table.patients.len();
    let b = config.bootstrap;
    let mut reports = Vec::new();
    if table.task.is_classification() {
        let scores = &table.columns[0].1;
        let labels = truth_classes(&table.task, &index, &table.patients)?;
        // Surfaces a single-class validation set before any resampling runs.
        let (curve, _) = roc_auc(scores, &labels)?;
        write_roc_csv(&out.join("roc.csv"), &curve)?;
        reports.push(bootstrap_ci(
            "auc",
            n,
            |idx| {
                roc_auc(&take(scores, idx), &take(&labels, idx))
                    .ok()
                    .map(|(_, a)| a)
            },
            b,
            seed,
        )?);
        for spec in [0.7, 0.8, 0.9] {
            let name = format!("sensitivity_at_{:.0}", spec * 100.0);
            reports.push(bootstrap_ci(
                &name,
                n,
                |idx| {
                    roc_curve(&take(scores, idx), &take(&labels, idx))
                        .ok()
                        .and_then(|c| sensitivity_at_specificity(&c, spec).ok())
                },
                b,
                seed,
            )?);
        }
    } else {
        let truths = truth_values(&table.task, &index, &table.patients)?;
        for (t_i, (name, preds)) in table.columns.iter().enumerate() {
            let truth: Vec<f64> = truths.iter().map(|row| row[t_i]).collect();
            reports.push(bootstrap_ci(
                &format!("mae_{name}"),
                n,
                |idx| {
                    regression_metrics(&take(preds, idx), &take(&truth, idx))
                        .ok()
                        .map(|m| m.mae)
                },
                b,
                seed,
            )?);
            reports.push(bootstrap_ci(
                &format!("r_squared_{name}"),
                n,
                |idx| {
                    regression_metrics(&take(preds, idx), &take(&truth, idx))
                        .ok()
                        .and_then(|m| m.r_squared)
                },
                b,
                seed,
            )?);
            reports.push(bootstrap_ci(
                &format!("sd_diff_{name}"),
                n,
                |idx| {
                    agreement_stats(&take(preds, idx), &take(&truth, idx))
                        .ok()
                        .map(|a| a.sd_diff)
                },
                b,
                seed,
            )?);
        }
        if let Some(visits_file) = &args.visits {
            let pairs = residual_pairs(visits_file, &table.task, &index)?;
            reports.push(residual_visit_correlation(&pairs, b, seed)?);
        }
    }
    write_metric_reports(&out.join("metrics.json"), &reports)?;
    config.write(&out)?;
    println!("metrics: {}", out.display());
    Ok(())
}

fn family_rank(family: Family) -> usize {
    Family::ALL
        .iter()
        .position(|f| *f == family)
        .expect("family listed")
}

fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut body = String::from(header);
    body.push('\n');
    for row in rows {
        body.push_str(row);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn report(global: &Global, args: &ReportArgs) -> Result<()> {
    let run = &args.run;
    let mut config = RunConfig::load_base(global.config.as_deref(), run)?;
    if let Some(j) = global.jobs {
        config.jobs = j;
    }
    config.resolve_seed(global.seed)?;
    config.validate()?;

    let models = run.join("models");
    let entries = fs::read_dir(&models).map_err(|e| Error::io(&models, e))?;
    let mut pred_files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("predictions.csv"))
        .filter(|p| p.exists())
        .collect();
    pred_files.sort();
    if pred_files.is_empty() {
        return Err(Error::MissingInput(format!(
            "no predictions under {}",
            models.display()
        )));
    }
    let index = cohort_index(run)?;

    // (task, family rank) sort keys keep the tables in the conventional
    // metadata / fundus / combined row order within each task.
    let mut auc_rows: Vec<(String, usize, String)> = Vec::new();
    let mut sens_rows: Vec<(String, usize, String)> = Vec::new();
    let mut agreement_rows: Vec<(String, usize, String)> = Vec::new();
    for file in &pred_files {
        let table = collect_table(&read_predictions_csv(file)?)?;
        let task_name = table.task.name();
        let family = table.family.as_str();
        let rank = family_rank(table.family);
        if table.task.is_classification() {
            let scores = &table.columns[0].1;
            let labels = truth_classes(&table.task, &index, &table.patients)?;
            let (curve, auc) = roc_auc(scores, &labels)?;
            auc_rows.push((
                task_name.clone(),
                rank,
                format!("{task_name},{family},{auc}"),
            ));
            let sens = [0.7, 0.8, 0.9]
                .map(|s| sensitivity_at_specificity(&curve, s))
                .map(|r| r.map(|v| v.to_string()));
            let [s70, s80, s90] = sens;
            sens_rows.push((
                task_name.clone(),
                rank,
                format!("{task_name},{family},{},{},{}", s70?, s80?, s90?),
            ));
        } else {
            let truths = truth_values(&table.task, &index, &table.patients)?;
            for (t_i, (target, preds)) in table.columns.iter().enumerate() {
                let truth: Vec<f64> = truths.iter().map(|row| row[t_i]).collect();
                let stats = agreement_stats(preds, &truth)?;
                agreement_rows.push((
                    task_name.clone(),
                    rank,
                    format!(
                        "{task_name},{family},{target},{},{},{}",
                        stats.mean_diff, stats.sd_diff, stats.gaussian_mae_estimate
                    ),
                ));
            }
        }
    }
    let sort_then_strip = |mut rows: Vec<(String, usize, String)>| -> Vec<String> {
        rows.sort();
        rows.into_iter().map(|(_, _, row)| row).collect()
    };

    let out = run.join("report");
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_csv(
        &out.join("sensitivity.csv"),
        SENSITIVITY_HEADER,
        &sort_then_strip(sens_rows),
    )?;
    write_csv(&out.join("auc.csv"), AUC_HEADER, &sort_then_strip(auc_rows))?;
    write_csv(
        &out.join("agreement.csv"),
        AGREEMENT_HEADER,
        &sort_then_strip(agreement_rows),
    )?;

    let summary = run.join("ablation").join("ablation_summary.csv");
    if summary.exists() {
        let rows: Vec<String> = read_ablation_summary_csv(&summary)?
            .into_iter()
            .map(|(kind, param, mean, delta)| format!("{kind},{param},{mean},{delta}"))
            .collect();
        write_csv(&out.join("ablation.csv"), ABLATION_SUMMARY_HEADER, &rows)?;
    }
    config.write(&out)?;
    println!("report: {}", out.display());
    Ok(())
}
