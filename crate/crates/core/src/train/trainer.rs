use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::adam::{adam_step, clip_global_norm, AdamState, DEFAULT_LR};
use super::objective::loss_var;
use super::{TrainError, TrainingExample};
use crate::model::{Noise, PairInput, RankerModel};
use crate::rng::stream_rng;
use crate::tensor::{Array, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global-norm clip; `None` disables it.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Optimizer steps over which the KL weight ramps linearly from 0 to
    /// `alpha`. 0 applies the full weight from the first step.
    pub kl_warmup_steps: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 3,
            batch_size: 8,
            lr: DEFAULT_LR,
            clip_norm: Some(1.0),
            seed: 42,
            kl_warmup_steps: 0,
        }
    }
}

/// A training example with its model inputs already built.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub example: TrainingExample,
    pub input: PairInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean of `-ln p(y)`.
    pub mean_nll: f64,
    /// Mean over examples of the per-layer average KL.
    pub mean_kl: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct ExampleOutcome {
    pub loss: f64,
    pub nll: f64,
    pub kl: f64,
    pub grads: BTreeMap<String, Array>,
}

/// Loss and parameter gradients for one example under the given noise.
pub fn example_gradients(
    model: &RankerModel,
    input: &PairInput,
    label: bool,
    noise: &Noise,
    alpha: f64,
) -> Result<ExampleOutcome, TrainError> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape)?;
    let vars = model.forward(&mut tape, &bound, input, noise)?;
    let (loss, nll) = loss_var(&mut tape, &vars, label, alpha)?;
    tape.backward(loss)?;
    let kls: Vec<f64> = vars.kl.iter().map(|v| tape.value(*v).data()[0]).collect();
    Ok(ExampleOutcome {
        loss: tape.value(loss).data()[0],
        nll: tape.value(nll).data()[0],
        kl: kls.iter().sum::<f64>() / kls.len().max(1) as f64,
        grads: model.params().gradients(&tape, &bound),
    })
}

/// KL weight at optimizer step `step` (0-based) under a linear warm-up.
pub fn kl_weight(alpha: f64, step: usize, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        alpha
    } else {
        alpha * step as f64 / warmup as f64
    }
}

/// Seeded mini-batch Adam on the mean batch loss.
///
/// Examples in a batch are evaluated in parallel; their gradients are summed
/// in batch order, so results do not depend on the thread count.
pub fn train(
    model: &mut RankerModel,
    data: &[PreparedExample],
    opts: &TrainOptions,
) -> Result<Vec<EpochMetrics>, TrainError> {
    if opts.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(TrainError::Config("no training examples".into()));
    }
    let mut state = AdamState::new(opts.lr);
    let mut log = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut global_step = 0usize;
    for epoch in 1..=opts.epochs {
        let started = Instant::now();
        order.sort_unstable();
        order.shuffle(&mut stream_rng(&[opts.seed, epoch as u64]));
        let (mut loss_sum, mut nll_sum, mut kl_sum) = (0.0, 0.0, 0.0);
        for (step, batch) in order.chunks(opts.batch_size).enumerate() {
            let model_ref: &RankerModel = model;
            let alpha = kl_weight(model_ref.config().alpha, global_step, opts.kl_warmup_steps);
            global_step += 1;
            let outcomes: Vec<Result<ExampleOutcome, TrainError>> = batch
                .par_iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let mut rng = stream_rng(&[opts.seed, epoch as u64, step as u64, pos as u64]);
                    let noise = Noise::standard(model_ref.config(), &mut rng);
                    let ex = &data[i];
                    example_gradients(model_ref, &ex.input, ex.example.label, &noise, alpha)
                })
                .collect();
            let scale = 1.0 / batch.len() as f64;
            let mut total: Option<BTreeMap<String, Array>> = None;
            for o in outcomes {
                let mut o = o?;
                loss_sum += o.loss;
                nll_sum += o.nll;
                kl_sum += o.kl;
                match total.as_mut() {
                    None => {
                        for g in o.grads.values_mut() {
                            g.scale_in_place(scale);
                        }
                        total = Some(o.grads);
                    }
                    Some(t) => {
                        for (name, g) in o.grads.iter_mut() {
                            g.scale_in_place(scale);
                            t.get_mut(name).expect("same parameter set").add_assign(g);
                        }
                    }
                }
            }
            let mut grads = total.expect("non-empty batch");
            if let Some(max) = opts.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            adam_step(model.params_mut(), &grads, &mut state)?;
        }
        let n = data.len() as f64;
        let m = EpochMetrics {
            epoch,
            mean_loss: loss_sum / n,
            mean_nll: nll_sum / n,
            mean_kl: kl_sum / n,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} nll {:.4} kl {:.4} ({:.1}s)",
            m.mean_loss,
            m.mean_nll,
            m.mean_kl,
            m.wall_time_s
        );
        log.push(m);
    }
    Ok(log)
}

/// `epoch,mean_nll,mean_kl,wall_time_s`
pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,mean_nll,mean_kl,wall_time_s\n");
    for m in log {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.3}",
            m.epoch, m.mean_nll, m.mean_kl, m.wall_time_s
        );
    }
    out
}
