use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::image::FundusImage;
use crate::models::data::{image_to_input, ExampleTarget, TrainExample};
use crate::rng;
use crate::tensornet::{
    augment, loss_mse, loss_weighted_ce, lr_at, sgd_step, should_stop, AugmentRanges, EmaState,
    Gradients, LayerSpec, Network, OptimizerState, Shape, TrainSchedule,
};

/// Image-space transform applied identically at train and eval time
/// (ablation masks and blurs plug in here).
pub type ImageTransform = dyn Fn(&FundusImage) -> FundusImage + Sync;

/// Default conv trunk: three conv/relu blocks with pooling, global average
/// pooling, optional metadata fusion, and one dense head.
pub fn default_layer_specs(out_dim: usize, with_side: bool) -> Vec<LayerSpec> {
    let mut specs = vec![
        LayerSpec::Conv {
            out_ch: 8,
            k: 3,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv {
            out_ch: 16,
            k: 3,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        LayerSpec::Conv {
            out_ch: 32,
            k: 3,
            stride: 1,
        },
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
    ];
    if with_side {
        specs.push(LayerSpec::ConcatSide);
    }
    specs.push(LayerSpec::Dense { out_dim });
    specs
}

pub fn build_network(image_side: usize, side_dim: usize, out_dim: usize) -> Result<Network> {
    Network::new(
        Shape::Map {
            c: 3,
            h: image_side,
            w: image_side,
        },
        side_dim,
        &default_layer_specs(out_dim, side_dim > 0),
    )
}

/// Everything a single member training run needs besides its data.
pub struct TrainContext<'a> {
    /// Task name used in stream derivation; members of different families
    /// share streams on purpose (common random numbers).
    pub task_name: &'a str,
    pub schedule: &'a TrainSchedule,
    pub augment_ranges: &'a AugmentRanges,
    /// Per-class loss weights; empty for regression.
    pub class_weights: Vec<f64>,
    pub root_seed: u64,
    pub transform: Option<&'a ImageTransform>,
}

/// Instrumentation record proving which patients influenced training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    /// Patients whose examples entered gradient steps.
    pub gradient_patient_ids: BTreeSet<String>,
    /// Patients whose examples drove early stopping.
    pub tune_patient_ids: BTreeSet<String>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub tune_history: Vec<f64>,
    pub steps: usize,
}

/// A trained member: named parameter arrays for the best epoch, raw weights
/// under plain names and the evaluation (EMA) weights under `ema/`.
#[derive(Debug, Clone)]
pub struct TrainedMember {
    pub params: Vec<(String, Vec<f64>)>,
    pub log: TrainLog,
}

/// EMA decay ramp: early steps average aggressively, converging to the
/// configured decay as training lengthens.
fn effective_decay(configured: f64, step: usize) -> f64 {
    configured.min((1.0 + step as f64) / (10.0 + step as f64))
}

fn example_loss(
    net: &Network,
    example: &TrainExample,
    image: &FundusImage,
    class_weights: &[f64],
) -> Result<(f64, Vec<f64>, crate::tensornet::ForwardCache)> {
    let input = image_to_input(image);
    let (out, cache) = net.forward_cached(&input, example.side.as_deref())?;
    let (loss, dout) = match &example.target {
        ExampleTarget::Class(c) => loss_weighted_ce(&out, *c, class_weights)?,
        ExampleTarget::Values(v) => loss_mse(&out, v),
    };
    Ok((loss, dout, cache))
}

/// Mean task loss over a set, without augmentation.
fn mean_loss(
    net: &Network,
    examples: &[TrainExample],
    ctx: &TrainContext,
) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        let image = match ctx.transform {
            Some(t) => t(&ex.image),
            None => (*ex.image).clone(),
        };
        let (loss, _, _) = example_loss(net, ex, &image, &ctx.class_weights)?;
        total += loss;
    }
    Ok(total / examples.len() as f64)
}

fn snapshot(net: &Network, ema: &EmaState) -> Vec<(String, Vec<f64>)> {
    let names = net.param_names();
    let mut entries: Vec<(String, Vec<f64>)> = names
        .iter()
        .zip(net.param_slices())
        .map(|(n, s)| (n.clone(), s.to_vec()))
        .collect();
    entries.extend(
        names
            .iter()
            .zip(ema.shadow_slices())
            .map(|(n, s)| (format!("ema/{n}"), s.to_vec())),
    );
    entries
}

/// Copy named arrays into a network's parameters; `prefix` selects the raw
/// (`""`) or EMA (`"ema/"`) variant.
pub fn apply_named_params(
    net: &mut Network,
    entries: &[(String, Vec<f64>)],
    prefix: &str,
) -> Result<()> {
    let names = net.param_names();
    let mut slices = net.param_slices_mut();
    for (name, slice) in names.iter().zip(slices.iter_mut()) {
        let want = format!("{prefix}{name}");
        let (_, values) = entries
            .iter()
            .find(|(n, _)| *n == want)
            .ok_or_else(|| Error::MissingInput(format!("checkpoint entry {want}")))?;
        if values.len() != slice.len() {
            return Err(Error::ShapeMismatch(format!(
                "{want}: {} values for {} parameters",
                values.len(),
                slice.len()
            )));
        }
        slice.copy_from_slice(values);
    }
    Ok(())
}

/// Train one ensemble member: SGD with momentum and warmup, augmentation on
/// every training example, EMA tracking, per-epoch tune evaluation, and
/// early stopping. Returns the parameters from the best tune epoch.
pub fn train_member(
    template: &Network,
    train: &[TrainExample],
    tune: &[TrainExample],
    ctx: &TrainContext,
    member: usize,
) -> Result<TrainedMember> {
    if train.is_empty() || tune.is_empty() {
        return Err(Error::InvalidInput(format!(
            "member {member}: empty train ({}) or tune ({}) set",
            train.len(),
            tune.len()
        )));
    }
    ctx.schedule.validate()?;
    let prefix = format!("train/{}/member{member}", ctx.task_name);

    let mut net = template.clone();
    net.init_params(&mut rng::stream(ctx.root_seed, &format!("{prefix}/init")));
    let mut opt = OptimizerState::new(
        &net,
        ctx.schedule.momentum,
        ctx.schedule.weight_decay,
        ctx.schedule.nesterov,
    );
    let mut ema = EmaState::new(&net);
    let mut grads = Gradients::zeros_like(&net);

    let batch = ctx.schedule.batch_size.max(1);
    let steps_per_epoch = train.len().div_ceil(batch);
    let mut global_step = 0usize;
    let mut tune_history = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = Vec::new();

    let mut indices: Vec<usize> = (0..train.len()).collect();
    let mut epochs_run = 0;
    for epoch in 0..ctx.schedule.max_epochs {
        epochs_run = epoch + 1;
        let mut shuffle_stream =
            rng::stream(ctx.root_seed, &format!("{prefix}/shuffle/epoch{epoch}"));
        indices.shuffle(&mut shuffle_stream);
        let mut aug_stream = rng::stream(ctx.root_seed, &format!("{prefix}/aug/epoch{epoch}"));

        for chunk in indices.chunks(batch) {
            grads.reset();
            for &i in chunk {
                let ex = &train[i];
                let mut image = augment(&ex.image, ctx.augment_ranges, &mut aug_stream);
                if let Some(t) = ctx.transform {
                    image = t(&image);
                }
                let (loss, dout, cache) =
                    match example_loss(&net, ex, &image, &ctx.class_weights) {
                        // Non-finite activations mean the optimizer blew up.
                        Err(Error::NonFinite(_)) => {
                            return Err(Error::Diverged { step: global_step })
                        }
                        other => other?,
                    };
                if !loss.is_finite() {
                    return Err(Error::Diverged { step: global_step });
                }
                net.backward(&cache, &dout, &mut grads);
            }
            grads.scale(1.0 / chunk.len() as f64);
            let lr = lr_at(global_step, ctx.schedule, steps_per_epoch);
            sgd_step(&mut net, &grads, &mut opt, lr)?;
            global_step += 1;
            ema.update(&net, effective_decay(ctx.schedule.ema_decay, global_step))?;
        }

        ema.swap(&mut net)?;
        let tune_result = mean_loss(&net, tune, ctx);
        ema.swap(&mut net)?;
        let tune_loss = match tune_result {
            Err(Error::NonFinite(_)) => return Err(Error::Diverged { step: global_step }),
            other => other?,
        };
        if !tune_loss.is_finite() {
            return Err(Error::Diverged { step: global_step });
        }
        tune_history.push(tune_loss);
        if tune_loss < best_loss {
            best_loss = tune_loss;
            best_epoch = epoch;
            best_params = snapshot(&net, &ema);
        }
        if should_stop(&tune_history, ctx.schedule.patience) {
            break;
        }
    }

    Ok(TrainedMember {
        params: best_params,
        log: TrainLog {
            gradient_patient_ids: train.iter().map(|e| e.patient_id.clone()).collect(),
            tune_patient_ids: tune.iter().map(|e| e.patient_id.clone()).collect(),
            epochs_run,
            best_epoch,
            tune_history,
            steps: global_step,
        },
    })
}
