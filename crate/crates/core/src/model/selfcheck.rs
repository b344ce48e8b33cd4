//! Whole-network gradient checks on a miniature configuration, shared by
//! the command-line self test and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grhd_loss, Batch, ClipFeatures, GrhdModel, LossSpec, LossWeights, Mode, ModelConfig, ModelError, Reversal};
use crate::autodiff::gradcheck::{relative_error, BlockReport};
use crate::autodiff::{Graph, Tensor};
use crate::dsp::SpectrogramConfig;

const CLIP_LEN: usize = 288;
const SECTIONS: [usize; 4] = [0, 1, 1, 0];
const GROUPS: [usize; 4] = [0, 3, 2, 1];

/// 8 mel bands by 8 frames from 288-sample clips; every block narrow.
pub fn miniature_config() -> ModelConfig {
    ModelConfig {
        spectrogram: SpectrogramConfig {
            frame_size: 64,
            hop: 32,
            num_mels: 8,
            ..SpectrogramConfig::default()
        },
        sample_rate: 1000,
        temporal_channels: 2,
        block_channels: [3, 3, 4],
        reversal_hidden: 5,
        ..ModelConfig::default()
    }
}

fn miniature(seed: u64) -> Result<(GrhdModel<f64>, Batch<f64>), ModelError> {
    let cfg = miniature_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6D69_6E69);
    let frames = 1 + (CLIP_LEN - cfg.spectrogram.frame_size) / cfg.spectrogram.hop;
    let clips: Vec<ClipFeatures<f64>> = (0..SECTIONS.len())
        .map(|_| ClipFeatures {
            waveform: (0..CLIP_LEN).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            logmel: (0..cfg.spectrogram.num_mels * frames).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            num_mels: cfg.spectrogram.num_mels,
            num_frames: frames,
        })
        .collect();
    let batch = Batch::stack(&clips.iter().collect::<Vec<_>>())?;
    let mut model = GrhdModel::new(cfg, 2, 4, seed)?;
    // Zero biases would put all-zero ReLU windows exactly on the kink.
    for id in model.store().ids().collect::<Vec<_>>() {
        let name = model.store().name(id);
        if name.ends_with("bias") || name.ends_with("beta") {
            for v in model.store_mut().tensor_mut(id).data_mut() {
                *v += rng.gen_range(-0.2..0.2);
            }
        }
    }
    Ok((model, batch))
}

fn loss(
    model: &GrhdModel<f64>,
    batch: &Batch<f64>,
    lambda: f64,
    reversal: Reversal,
    weights: LossWeights,
    group_weights: Option<&[f64]>,
) -> Result<(Graph<f64>, crate::autodiff::Var), ModelError> {
    let mut g = Graph::new();
    let f = model.forward(&mut g, batch, Mode::Train, lambda, reversal)?;
    let spec = LossSpec {
        weights,
        focal_gamma: 2.0,
        group_weights,
    };
    let l = grhd_loss(&mut g, f.logits_rev, f.logits_sec, f.logits_att, &SECTIONS, &GROUPS, &spec)?;
    Ok((g, l.total))
}

fn grads(model: &GrhdModel<f64>, batch: &Batch<f64>, lambda: f64, reversal: Reversal) -> Result<Vec<Tensor<f64>>, ModelError> {
    let w = LossWeights {
        alpha: 1.0,
        beta: 0.0,
        gamma: 0.0,
    };
    let (g, total) = loss(model, batch, lambda, reversal, w, None)?;
    Ok(g.backward(total)?.param_grads(&g, model.store()))
}

/// Largest relative deviation, over backbone parameters, of the reversal
/// loss gradient taken through `reversal` from `-lambda` times the
/// gradient through a plain identity.
pub fn reversal_twin_error(seed: u64, lambda: f64, reversal: Reversal) -> Result<f64, ModelError> {
    let (model, batch) = miniature(seed)?;
    let got = grads(&model, &batch, lambda, reversal)?;
    let reference = grads(&model, &batch, lambda, Reversal::Identity)?;
    let mut worst = 0.0f64;
    for id in model.backbone_params() {
        for (a, r) in got[id.index()].data().iter().zip(reference[id.index()].data()) {
            let want = -lambda * r;
            let scale = want.abs().max(a.abs()).max(1e-300);
            if a != &want {
                worst = worst.max((a - want).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// Central differences over a subsample of every parameter block of the
/// assembled network (identity reversal, all three losses, weighted focal
/// terms), compared with backpropagation.
pub fn network_gradcheck(seed: u64, per_block: usize, step: f64, floor: f64) -> Result<Vec<BlockReport>, ModelError> {
    let (mut model, batch) = miniature(seed)?;
    let w = LossWeights {
        alpha: 0.7,
        beta: 1.1,
        gamma: 0.9,
    };
    let gw = [0.5, 1.5, 1.2, 0.8];
    let analytic = {
        let (g, total) = loss(&model, &batch, 0.0, Reversal::Identity, w, Some(&gw))?;
        g.backward(total)?.param_grads(&g, model.store())
    };
    let eval = |m: &GrhdModel<f64>| -> Result<f64, ModelError> {
        let (g, total) = loss(m, &batch, 0.0, Reversal::Identity, w, Some(&gw))?;
        Ok(g.value(total).item())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::new();
    for id in model.store().ids().collect::<Vec<_>>() {
        let n = model.store().tensor(id).numel();
        let picks: Vec<usize> = if n <= per_block {
            (0..n).collect()
        } else {
            (0..per_block).map(|_| rng.gen_range(0..n)).collect()
        };
        let mut report = BlockReport {
            name: model.store().name(id).to_string(),
            checked: picks.len(),
            max_rel_err: 0.0,
            worst_index: 0,
        };
        for i in picks {
            let orig = model.store().tensor(id).data()[i];
            model.store_mut().tensor_mut(id).data_mut()[i] = orig + step;
            let up = eval(&model)?;
            model.store_mut().tensor_mut(id).data_mut()[i] = orig - step;
            let down = eval(&model)?;
            model.store_mut().tensor_mut(id).data_mut()[i] = orig;
            let err = relative_error(analytic[id.index()].data()[i], (up - down) / (2.0 * step), floor);
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_index = i;
            }
        }
        reports.push(report);
    }
    Ok(reports)
}
