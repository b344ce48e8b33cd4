use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{grhd_loss, Batch, GrhdModel, LabelledSet, LossBreakdown, LossSpec, Mode, ModelError, Reversal, TrainConfig};
use crate::autodiff::{cosine_anneal, Adam, AdamConfig, Graph};
use crate::Scalar;

/// Reversal intensity `2 / (1 + exp(-k·p)) - 1` at training progress `p`.
pub fn lambda_schedule(progress: f64, gain: f64) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&progress) || !(gain > 0.0 && gain.is_finite()) {
        return Err(ModelError::InvalidSchedule { progress, gain });
    }
    Ok(2.0 / (1.0 + (-gain * progress).exp()) - 1.0)
}

pub struct TrainOutcome {
    pub log: Vec<LossBreakdown>,
    pub steps: u64,
}

/// Runs the epoch loop on `model` in place. `on_epoch` sees every log row
/// as soon as it is complete.
pub fn train<S: Scalar>(
    model: &mut GrhdModel<S>,
    data: &LabelledSet<S>,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&LossBreakdown),
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::NoTrainingData("empty training set".into()));
    }
    if data.num_sections != model.num_sections() || data.num_groups != model.num_groups() {
        return Err(ModelError::InvalidConfig(format!(
            "model has {}/{} section/group classes, data {}/{}",
            model.num_sections(),
            model.num_groups(),
            data.num_sections,
            data.num_groups
        )));
    }
    let group_weights: Option<Vec<S>> = cfg
        .class_weighting
        .then(|| data.group_weights.iter().map(|&w| S::of(w)).collect());
    let spec = LossSpec {
        weights: cfg.weights,
        focal_gamma: cfg.focal_gamma,
        group_weights: group_weights.as_deref(),
    };
    let mut opt = Adam::<S>::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464C_4500);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_anneal(cfg.lr, 0.0, epoch, cfg.epochs)?;
        let lambda = lambda_schedule(epoch as f64 / cfg.epochs as f64, cfg.lambda_gain)?;
        opt.set_lr(lr);
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 3];
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let feats: Vec<_> = idx.iter().map(|&i| &data.features[i]).collect();
            let sections: Vec<usize> = idx.iter().map(|&i| data.sections[i]).collect();
            let groups: Vec<usize> = idx.iter().map(|&i| data.groups[i]).collect();
            let batch = Batch::stack(&feats)?;
            let mut g = Graph::new();
            let f = model.forward(&mut g, &batch, Mode::Train, S::of(lambda), Reversal::Reverse)?;
            let l = grhd_loss(&mut g, f.logits_rev, f.logits_sec, f.logits_att, &sections, &groups, &spec)?;
            let total = g.value(l.total).item();
            if !total.is_finite() {
                return Err(ModelError::DivergenceDetected {
                    epoch: epoch + 1,
                    batch: bi,
                    detail: format!("total loss {total}"),
                });
            }
            let grads = g.backward(l.total)?;
            let pg = grads.param_grads(&g, model.store());
            opt.step(model.store_mut(), &pg)?;
            model.update_running_stats(&f.bn_stats);
            let n = idx.len() as f64;
            for (s, v) in sums.iter_mut().zip([l.l_rev, l.l_sec, l.l_att]) {
                *s += n * g.value(v).item().as_f64();
            }
        }
        let n = data.len() as f64;
        let row = LossBreakdown::compose(epoch + 1, lr, lambda, sums.map(|s| s / n), &cfg.weights);
        if !row.l_total.is_finite() {
            return Err(ModelError::DivergenceDetected {
                epoch: epoch + 1,
                batch: 0,
                detail: format!("epoch mean loss {}", row.l_total),
            });
        }
        on_epoch(&row);
        log.push(row);
    }
    Ok(TrainOutcome {
        log,
        steps: opt.steps(),
    })
}
