use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;

use fundascreen::ablation::{masked_fraction, run_ablation_grid, AblationSpec, GridOptions};
use fundascreen::cohort::{stratified_split, write_split, PatientRecord};
use fundascreen::metrics::{
    agreement_stats, bootstrap_ci, gaussian_mae_from_sd, mann_whitney_auc,
    residual_visit_correlation, roc_auc,
};
use fundascreen::models::{
    first_eligible_visit, train_pipeline, Family, TaskSpec, TrainOptions, SPLIT_FILE,
};
use fundascreen::rng;
use fundascreen::synthgen::{read_dataset, sample_cohort, write_dataset, GeneratorConfig};
use fundascreen::tensornet::{
    class_weights, loss_mse, lr_at, EmaState, Gradients, LayerSpec, Network, Shape,
    TrainSchedule,
};

fn check(n: usize, label: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {n} {label}: {verdict} — {detail}");
    assert!(ok, "ACCEPTANCE {n} {label}: FAIL — {detail}");
}

#[test]
fn a01_desk_scale_statement() {
    // The clinical-scale figures (hemoglobin MAE 0.63 g/dL, anemia AUC 0.88,
    // the published sensitivity table) were measured on restricted biobank
    // data that cannot ship with this repository, so they are not
    // reproduction targets. The synthetic-data property and oracle suites in
    // the remaining criteria stand in for them.
    check(
        1,
        "desk-scale substitution",
        true,
        "clinical-scale figures need restricted data; property suites 2-11 substitute",
    );
}

#[test]
fn a02_auc_equals_pair_counting() {
    let start = Instant::now();
    let mut max_diff = 0.0f64;
    for i in 0..200 {
        let mut stream = rng::stream(202, &format!("auc-oracle/{i}"));
        let n = 2 + stream.random_range(0..199);
        let quantize = stream.random_bool(0.6);
        let levels = 2 + stream.random_range(0..9);
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        // Force one member of each class, then fill the rest at random.
        labels.push(true);
        labels.push(false);
        for _ in 2..n {
            labels.push(stream.random_bool(0.35));
        }
        for _ in 0..n {
            let score = if quantize {
                stream.random_range(0..levels) as f64 / levels as f64
            } else {
                stream.random_range(0.0..1.0)
            };
            scores.push(score);
        }
        let (_, trapezoid) = roc_auc(&scores, &labels).unwrap();
        let pair_count = mann_whitney_auc(&scores, &labels).unwrap();
        max_diff = max_diff.max((trapezoid - pair_count).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        2,
        "trapezoid AUC vs pair counting",
        max_diff <= 1e-10 && elapsed < 10.0,
        &format!("max |diff| {max_diff:.2e} over 200 instances in {elapsed:.1}s"),
    );
}

fn fd_check(net: &mut Network, input: &[f64], side: Option<&[f64]>, target: &[f64]) -> f64 {
    let (out, cache) = net.forward_cached(input, side).unwrap();
    let (_, dout) = loss_mse(&out, target);
    let mut grads = Gradients::zeros_like(net);
    net.backward(&cache, &dout, &mut grads);
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let h = 1e-4;
    let mut worst = 0.0f64;
    for slot in 0..analytic.len() {
        for idx in 0..analytic[slot].len() {
            let orig = net.param_slices()[slot][idx];
            net.param_slices_mut()[slot][idx] = orig + h;
            let (loss_p, _) = loss_mse(&net.forward(input, side).unwrap(), target);
            net.param_slices_mut()[slot][idx] = orig - h;
            let (loss_m, _) = loss_mse(&net.forward(input, side).unwrap(), target);
            net.param_slices_mut()[slot][idx] = orig;
            let fd = (loss_p - loss_m) / (2.0 * h);
            let a = analytic[slot][idx];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
        }
    }
    worst
}

fn random_params(net: &mut Network, seed: u64, path: &str) {
    let mut stream = rng::stream(seed, path);
    for p in net.param_slices_mut() {
        for v in p.iter_mut() {
            *v = 0.5 * stream.sample::<f64, _>(StandardNormal);
        }
    }
}

fn random_vec(n: usize, seed: u64, path: &str) -> Vec<f64> {
    let mut stream = rng::stream(seed, path);
    (0..n).map(|_| stream.sample(StandardNormal)).collect()
}

#[test]
fn a03_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..4u64 {
        let mut stream = rng::stream(303, &format!("shapes/{i}"));
        let side = 9 + stream.random_range(0..4usize);
        let c_in = 1 + stream.random_range(0..3usize);
        let ch1 = 2 + stream.random_range(0..3usize);
        let ch2 = 2 + stream.random_range(0..3usize);
        let k = if stream.random_bool(0.5) { 1 } else { 3 };
        let out_dim = 1 + stream.random_range(0..3usize);
        let specs = [
            LayerSpec::Conv { out_ch: ch1, k, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::MaxPool2,
            LayerSpec::Conv { out_ch: ch2, k: 3, stride: 1 },
            LayerSpec::Relu,
            LayerSpec::GlobalAvgPool,
            LayerSpec::Dense { out_dim },
        ];
        let shape = Shape::Map { c: c_in, h: side, w: side };
        let mut net = Network::new(shape, 0, &specs).unwrap();
        random_params(&mut net, 303, &format!("params/{i}"));
        let input = random_vec(c_in * side * side, 303, &format!("input/{i}"));
        let target = random_vec(out_dim, 303, &format!("target/{i}"));
        worst = worst.max(fd_check(&mut net, &input, None, &target));
    }

    // Side-channel fusion and a flat stack cover the remaining layer kinds.
    let specs = [
        LayerSpec::Conv { out_ch: 3, k: 3, stride: 1 },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::ConcatSide,
        LayerSpec::Dense { out_dim: 2 },
    ];
    let mut net = Network::new(Shape::Map { c: 2, h: 8, w: 8 }, 3, &specs).unwrap();
    random_params(&mut net, 303, "params/concat");
    let input = random_vec(2 * 8 * 8, 303, "input/concat");
    let side_vals = random_vec(3, 303, "side/concat");
    let target = random_vec(2, 303, "target/concat");
    worst = worst.max(fd_check(&mut net, &input, Some(&side_vals), &target));

    let specs = [
        LayerSpec::Dense { out_dim: 5 },
        LayerSpec::Relu,
        LayerSpec::Dense { out_dim: 2 },
    ];
    let mut net = Network::new(Shape::Flat(7), 0, &specs).unwrap();
    random_params(&mut net, 303, "params/flat");
    let input = random_vec(7, 303, "input/flat");
    let target = random_vec(2, 303, "target/flat");
    worst = worst.max(fd_check(&mut net, &input, None, &target));

    let elapsed = start.elapsed().as_secs_f64();
    check(
        3,
        "analytic gradients vs finite differences",
        worst <= 1e-6 && elapsed < 60.0,
        &format!("worst relative error {worst:.2e} in {elapsed:.1}s"),
    );
}

fn round_two_significant(x: f64) -> f64 {
    let scale = 10f64.powf(1.0 - x.abs().log10().floor());
    (x * scale).round() / scale
}

#[test]
fn a04_agreement_sd_to_mae_conversion() {
    let cases = [(0.18, 0.14), (0.64, 0.51), (1.4, 1.1)];
    let mut detail = String::new();
    let mut ok = true;
    for (sd, expected) in cases {
        let mae = gaussian_mae_from_sd(sd);
        let exact = sd * (2.0 / std::f64::consts::PI).sqrt();
        ok &= (mae - exact).abs() < 1e-15;
        ok &= (round_two_significant(mae) - expected).abs() < 1e-12;
        detail.push_str(&format!("{sd}->{:.4} ({expected}) ", mae));
    }
    // The per-target agreement summary must wire the same conversion.
    let pred = [14.2, 13.1, 15.0, 12.4, 14.8, 13.3];
    let truth = [14.0, 13.5, 14.6, 12.9, 14.9, 13.0];
    let stats = agreement_stats(&pred, &truth).unwrap();
    ok &= stats.gaussian_mae_estimate == gaussian_mae_from_sd(stats.sd_diff);
    check(4, "sd-to-MAE conversion", ok, detail.trim());
}

fn build_dataset(dir: &Path, config: &GeneratorConfig) -> Vec<PatientRecord> {
    let sampled = sample_cohort(config).unwrap();
    write_dataset(&sampled, config, dir).unwrap();
    let cohort = read_dataset(dir).unwrap();
    let split = stratified_split(&cohort, config.seed, (0.7, 0.1, 0.2)).unwrap();
    write_split(&split, &dir.join(SPLIT_FILE)).unwrap();
    cohort
}

fn anemia_auc(
    cohort: &[PatientRecord],
    task: &TaskSpec,
    predictions: &[fundascreen::models::PatientPrediction],
) -> f64 {
    let index: BTreeMap<&str, &PatientRecord> = cohort
        .iter()
        .map(|p| (p.patient_id.as_str(), p))
        .collect();
    let mut scores = Vec::with_capacity(predictions.len());
    let mut labels = Vec::with_capacity(predictions.len());
    for pred in predictions {
        let patient = index[pred.patient_id.as_str()];
        let visit = first_eligible_visit(patient).unwrap();
        scores.push(pred.value[1]);
        labels.push(task.class_of(patient, visit).unwrap() == 1);
    }
    roc_auc(&scores, &labels).unwrap().1
}

#[test]
fn a05_family_ordering_end_to_end() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig {
        seed: 505,
        ..GeneratorConfig::default()
    };
    let cohort = build_dataset(dir.path(), &config);
    let task = TaskSpec::parse("anemia").unwrap();

    let mut aucs = BTreeMap::new();
    for family in Family::ALL {
        let opts = TrainOptions::new(family, task.clone(), 505);
        let outcome = train_pipeline(dir.path(), &opts).unwrap();
        aucs.insert(
            family.as_str(),
            anemia_auc(&cohort, &task, &outcome.val_predictions),
        );
    }
    let (metadata, fundus, combined) = (
        aucs["metadata_only"],
        aucs["fundus_only"],
        aucs["combined"],
    );
    let elapsed = start.elapsed().as_secs_f64();
    check(
        5,
        "family ordering at default scale",
        combined >= fundus - 0.01 && fundus >= metadata + 0.05 && elapsed <= 900.0,
        &format!(
            "AUC metadata {metadata:.3}, fundus {fundus:.3}, combined {combined:.3} in {elapsed:.0}s"
        ),
    );
}

fn residual_report(nuisance_sd: f64, seed: u64) -> fundascreen::metrics::MetricReport {
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig {
        n_patients: 1600,
        two_visit_fraction: 0.3,
        nuisance_sd,
        seed,
        ..GeneratorConfig::default()
    };
    let cohort = build_dataset(dir.path(), &config);
    let index: BTreeMap<&str, &PatientRecord> = cohort
        .iter()
        .map(|p| (p.patient_id.as_str(), p))
        .collect();

    let task = TaskSpec::parse("hb").unwrap();
    let mut opts = TrainOptions::new(Family::FundusOnly, task, seed);
    opts.n_members = 2;
    let outcome = train_pipeline(dir.path(), &opts).unwrap();

    let mut per_patient: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    for (patient_id, visit_index, values) in &outcome.visit_predictions {
        per_patient
            .entry(patient_id.as_str())
            .or_default()
            .push((*visit_index, values[0]));
    }
    let mut pairs = Vec::with_capacity(per_patient.len());
    for (patient_id, mut rows) in per_patient {
        rows.sort_by_key(|&(visit_index, _)| visit_index);
        assert_eq!(rows.len(), 2, "patient {patient_id}");
        let patient = index[patient_id];
        let mut residuals = [0.0; 2];
        for (slot, &(visit_index, pred)) in residuals.iter_mut().zip(&rows) {
            let visit = patient
                .visits
                .iter()
                .find(|v| v.visit_index == visit_index)
                .unwrap();
            *slot = pred - visit.hb.unwrap();
        }
        pairs.push((residuals[0], residuals[1]));
    }
    residual_visit_correlation(&pairs, 2000, seed).unwrap()
}

#[test]
fn a06_residual_correlation_across_visits() {
    let planted = residual_report(GeneratorConfig::default().nuisance_sd, 606);
    let flat = residual_report(0.0, 607);
    check(
        6,
        "across-visit residual correlation",
        planted.point > 0.2 && planted.ci_lo > 0.0 && flat.point.abs() < 0.15,
        &format!(
            "planted r {:.3} (CI {:.3}..{:.3}, n {}), zero-nuisance r {:.3}",
            planted.point, planted.ci_lo, planted.ci_hi, planted.n, flat.point
        ),
    );
}

#[test]
fn a07_mask_area_exactness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for side in [64usize, 128] {
        let tolerance = 0.01 + 1.0 / side as f64;
        for step in 1..=9 {
            let fraction = step as f64 / 10.0;
            let specs = [
                AblationSpec::TopBottom { fraction },
                AblationSpec::CenterStripe { fraction },
                AblationSpec::OuterRim { fraction },
                AblationSpec::CentralCore { fraction },
            ];
            for spec in specs {
                let err = (masked_fraction(&spec, side) - fraction).abs();
                worst = worst.max(err - tolerance);
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        7,
        "mask area exactness",
        worst <= 0.0 && elapsed < 5.0,
        &format!(
            "max excess over 1%+1px tolerance {worst:.2e} across 4 geometries x 9 fractions in {elapsed:.1}s"
        ),
    );
}

#[test]
fn a08_ablation_ordering_and_blur_dose_response() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = GeneratorConfig {
        n_patients: 700,
        hb_mean_female: 12.5,
        hb_mean_male: 13.5,
        seed: 808,
        ..GeneratorConfig::default()
    };
    build_dataset(dir.path(), &config);

    let grid = [
        AblationSpec::CenterStripe { fraction: 0.2 },
        AblationSpec::TopBottom { fraction: 0.2 },
        AblationSpec::GaussianBlur { sigma: 0.0 },
        AblationSpec::GaussianBlur { sigma: 2.0 },
        AblationSpec::GaussianBlur { sigma: 4.0 },
        AblationSpec::GaussianBlur { sigma: 8.0 },
    ];
    let opts = GridOptions::new(808);
    let report = run_ablation_grid(dir.path(), &grid, &opts).unwrap();
    assert!(report.failures.is_empty(), "{:?}", report.failures);

    let arm = |token: &str| {
        report
            .arms
            .iter()
            .find(|a| a.spec.token() == token)
            .unwrap_or_else(|| panic!("missing arm {token}"))
    };
    let center = arm("center_stripe:0.2").delta_auc;
    let bands = arm("top_bottom:0.2").delta_auc;
    let blur: Vec<f64> = ["gaussian_blur:0", "gaussian_blur:2", "gaussian_blur:4", "gaussian_blur:8"]
        .iter()
        .map(|t| arm(t).mean_auc)
        .collect();
    let blur_ok = blur.windows(2).all(|w| w[1] <= w[0] + 0.02);
    let elapsed = start.elapsed().as_secs_f64();
    check(
        8,
        "ablation ordering and blur dose response",
        center > bands && blur_ok && elapsed <= 1800.0,
        &format!(
            "delta center_stripe {center:.3} vs top_bottom {bands:.3}; blur mean AUC {blur:?} in {elapsed:.0}s"
        ),
    );
}

#[test]
fn a09_training_recipe_constants() {
    let schedule = TrainSchedule::default();
    let steps_per_epoch = 100;
    let lr_start = lr_at(0, &schedule, steps_per_epoch);
    let lr_end = lr_at(3 * steps_per_epoch, &schedule, steps_per_epoch);

    let weights = class_weights(&[100, 10], -0.9);
    let ratio = weights[1] / weights[0];
    let ratio_err = (ratio - 10f64.powf(0.9)).abs();

    let mut net = Network::new(Shape::Flat(1), 0, &[LayerSpec::Dense { out_dim: 1 }]).unwrap();
    for p in net.param_slices_mut() {
        for v in p.iter_mut() {
            *v = 0.0;
        }
    }
    let mut ema = EmaState::zeros(&net);
    net.param_slices_mut()[0][0] = 1.0;
    ema.update(&net, 0.9).unwrap();
    ema.update(&net, 0.9).unwrap();
    // Dense slot 0 is the weight matrix; its single entry went 0 -> 1.
    let shadow = ema.shadow_slices()[0][0];

    check(
        9,
        "training recipe constants",
        lr_start == 0.0001
            && lr_end == 0.0008
            && ratio_err < 1e-9
            && (shadow - 0.19).abs() < 1e-12,
        &format!(
            "lr {lr_start}/{lr_end}, weight ratio {ratio:.6} (err {ratio_err:.1e}), two-step shadow {shadow}"
        ),
    );
}

fn run_cli(args: &[&str]) {
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_fundascreen"))
        .args(args)
        .output()
        .expect("spawn");
    assert!(
        output.status.success(),
        "fundascreen {:?} failed\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stderr),
    );
}

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn a10_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let runs = [dir.path().join("a"), dir.path().join("b")];
    for run in &runs {
        let run_str = run.to_str().unwrap();
        run_cli(&[
            "synth", "--out", run_str, "--patients", "50", "--image-side", "32",
            "--hb-mean-female", "12.5", "--hb-mean-male", "13.5", "--seed", "77",
        ]);
        run_cli(&["split", "--data", run_str]);
        run_cli(&[
            "train", "--data", run_str, "--family", "fundus_only", "--task", "anemia",
            "--ensemble", "2", "--max-epochs", "2", "--batch-size", "16",
        ]);
        let pred = run.join("models/fundus_only_anemia/predictions.csv");
        run_cli(&[
            "eval", "--pred", pred.to_str().unwrap(), "--data", run_str,
            "--bootstrap", "50",
        ]);
        run_cli(&[
            "ablate", "--data", run_str, "--grid", "center_stripe:0.5",
            "--ensemble", "1",
        ]);
        run_cli(&["report", "--run", run_str]);
    }
    let (a, b) = (tree_bytes(&runs[0]), tree_bytes(&runs[1]));
    let keys_match = a.keys().eq(b.keys());
    let mut first_mismatch = String::new();
    let mut identical = keys_match;
    if keys_match {
        for (path, bytes) in &a {
            if b[path] != *bytes {
                identical = false;
                first_mismatch = path.display().to_string();
                break;
            }
        }
    }
    check(
        10,
        "byte-identical reruns",
        identical,
        &if identical {
            format!("{} files identical across two full runs", a.len())
        } else if !keys_match {
            "file sets differ between runs".to_string()
        } else {
            format!("first differing file: {first_mismatch}")
        },
    );
}

#[test]
fn a11_bootstrap_validity() {
    let sets = 100;
    let resamples = 1000;
    let mut contained = 0;
    let mut widths_small = Vec::with_capacity(sets);
    let mut widths_large = Vec::with_capacity(sets);
    for i in 0..sets {
        let mut stream = rng::stream(1111, &format!("sets/{i}"));
        let n = 80 + stream.random_range(0..120);
        for (rows, widths) in [(n, &mut widths_small), (2 * n, &mut widths_large)] {
            let mut scores = Vec::with_capacity(rows);
            let mut labels = Vec::with_capacity(rows);
            labels.push(true);
            labels.push(false);
            for _ in 2..rows {
                labels.push(stream.random_bool(0.3));
            }
            for &label in &labels {
                let shift = if label { 0.8 } else { 0.0 };
                scores.push(shift + stream.sample::<f64, _>(StandardNormal));
            }
            let seed = rng::derive_u64(1111, &format!("ci/{i}/{rows}"));
            let report = bootstrap_ci(
                "auc",
                rows,
                |idx| {
                    let s: Vec<f64> = idx.iter().map(|&j| scores[j]).collect();
                    let l: Vec<bool> = idx.iter().map(|&j| labels[j]).collect();
                    roc_auc(&s, &l).ok().map(|(_, a)| a)
                },
                resamples,
                seed,
            )
            .unwrap();
            if rows == n && report.ci_lo <= report.point && report.point <= report.ci_hi {
                contained += 1;
            }
            widths.push(report.ci_hi - report.ci_lo);
        }
    }
    let median = |values: &mut Vec<f64>| {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values[values.len() / 2]
    };
    let ratio = median(&mut widths_small) / median(&mut widths_large);
    check(
        11,
        "bootstrap validity",
        contained == sets && (1.2..=1.7).contains(&ratio),
        &format!("containment {contained}/{sets}, doubling-n width ratio {ratio:.3}"),
    );
}
