use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

use super::{GnnHyperParams, GnnMode, GnnModel, Gradients, TrainingSample};

/// Number of gradient partial sums per batch. Fixed, so the reduction
/// order does not depend on the thread count.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GnnModel,
    /// Mean batch loss before each update; one entry per iteration.
    pub loss_trace: Vec<f64>,
}

/// Mini-batch SGD. Each iteration draws `batch_size` samples with
/// replacement, averages their gradients and steps by `−η·mean`.
pub fn train<R: Rng + ?Sized>(
    mut model: GnnModel,
    dataset: &[TrainingSample],
    hyper: &GnnHyperParams,
    rng: &mut R,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Contract("training needs at least one sample".into()));
    }
    if !hyper.same_architecture(&model.hyper) {
        return Err(Error::Contract(
            "training hyperparameters disagree with the model architecture".into(),
        ));
    }
    if !(hyper.learning_rate >= 0.0 && hyper.learning_rate.is_finite()) || hyper.batch_size == 0 {
        return Err(Error::Config(
            "learning rate must be finite and ≥ 0, batch size ≥ 1".into(),
        ));
    }
    model.validate()?;
    if let Some(s) = dataset.iter().find(|s| s.label.len() != model.target_count + 1) {
        return Err(Error::Contract(format!(
            "sample from SPV {} has {} label entries, the model expects {}",
            s.source_id,
            s.label.len(),
            model.target_count + 1
        )));
    }

    let mut trace = Vec::with_capacity(hyper.iterations);
    let scale = 1.0 / hyper.batch_size as f64;
    for iteration in 0..hyper.iterations {
        let batch: Vec<usize> = (0..hyper.batch_size).map(|_| rng.gen_range(0..dataset.len())).collect();
        let chunk = batch.len().div_ceil(GRAD_CHUNKS);
        let partials: Vec<Result<(f64, Gradients)>> = batch
            .par_chunks(chunk)
            .map(|idx| {
                let mut g = Gradients::zeros(&model.hyper, model.target_count);
                let mut loss = 0.0;
                for &i in idx {
                    loss += model.backward_into(&dataset[i].input, &dataset[i].label, &mut g)?;
                }
                Ok((loss, g))
            })
            .collect();
        let mut total = Gradients::zeros(&model.hyper, model.target_count);
        let mut loss = 0.0;
        for part in partials {
            let (l, g) = part?;
            loss += l;
            total.axpy(1.0, &g);
        }
        let loss = loss * scale;
        if !loss.is_finite() || !total.is_finite() {
            return Err(Error::Divergence { iteration, loss });
        }
        trace.push(loss);
        if hyper.learning_rate != 0.0 {
            model.params.axpy(-hyper.learning_rate * scale, &total);
            if model.hyper.mode == GnnMode::Homogeneous {
                model.params.tie();
            }
        }
    }
    Ok(TrainOutcome {
        model,
        loss_trace: trace,
    })
}
