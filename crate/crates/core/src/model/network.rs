use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Batch, ModelConfig, ModelError};
use crate::autodiff::{kaiming_uniform, BatchStats, BnMode, Graph, ParamId, ParamStore, Tensor, Var};
use crate::Scalar;

/// Batch-norm statistics source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Behaviour of the gradient-reversal node in front of the reversal
/// classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reversal {
    /// Gradient times `-lambda`.
    Reverse,
    /// Plain identity; reference for checking the reversal.
    Identity,
    /// Gradient times `+lambda`. Fault injection for harness self-tests.
    SignFlipFault,
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layout {
    temporal: [Conv; 3],
    blocks: [(Conv, Norm); 3],
    sec_conv: (Conv, Norm),
    sec_fc: Dense,
    att_conv: (Conv, Norm),
    att_fc: Dense,
    rev_fc1: Dense,
    rev_fc2: Dense,
    /// Parameters of each part, for per-part gradient inspection.
    backbone: Vec<ParamId>,
    reversal: Vec<ParamId>,
    section_head: Vec<ParamId>,
    attribute_head: Vec<ParamId>,
}

/// Backbone output and the batch statistics of its norm layers.
pub struct BackboneOutput<S> {
    pub z_rev: Var,
    pub bn_stats: Vec<(usize, BatchStats<S>)>,
}

pub struct HeadsOutput<S> {
    pub logits_rev: Var,
    pub z_sec: Var,
    pub logits_sec: Var,
    pub z_att: Var,
    pub logits_att: Var,
    pub bn_stats: Vec<(usize, BatchStats<S>)>,
}

pub struct ForwardOutput<S> {
    pub z_rev: Var,
    pub logits_rev: Var,
    pub z_sec: Var,
    pub logits_sec: Var,
    pub z_att: Var,
    pub logits_att: Var,
    /// `(norm layer index, batch statistics)` in training mode.
    pub bn_stats: Vec<(usize, BatchStats<S>)>,
}

/// Pooled embeddings of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub z_rev: Vec<f64>,
    pub z_sec: Vec<f64>,
    pub z_att: Vec<f64>,
}

/// Eval-mode outputs of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub logits_sec: Vec<f64>,
    pub logits_att: Vec<f64>,
    pub embedding: Embedding,
}

/// Parameters and layout of the network; see the module docs for the
/// layer table.
#[derive(Debug, Clone)]
pub struct GrhdModel<S> {
    config: ModelConfig,
    num_sections: usize,
    num_groups: usize,
    store: ParamStore<S>,
    layout: Layout,
    norms: Vec<Norm>,
}

struct Builder<'a, S> {
    store: ParamStore<S>,
    rng: &'a mut ChaCha8Rng,
    norms: Vec<Norm>,
}

impl<S: Scalar> Builder<'_, S> {
    fn conv(&mut self, name: &str, shape: Vec<usize>, bias: bool) -> Result<Conv, ModelError> {
        let fan_in: usize = shape[1..].iter().product();
        let out = shape[0];
        let w = self.store.add(&format!("{name}.weight"), kaiming_uniform(shape, fan_in, self.rng))?;
        let b = if bias {
            Some(self.store.add(&format!("{name}.bias"), Tensor::zeros(vec![out]))?)
        } else {
            None
        };
        Ok(Conv { w, b })
    }

    fn norm(&mut self, name: &str, c: usize) -> Result<Norm, ModelError> {
        let gamma = self.store.add(&format!("{name}.gamma"), Tensor::full(vec![c], S::one()))?;
        let beta = self.store.add(&format!("{name}.beta"), Tensor::zeros(vec![c]))?;
        let mean = self.store.add_buffer(&format!("{name}.running_mean"), Tensor::zeros(vec![c]))?;
        let var = self.store.add_buffer(&format!("{name}.running_var"), Tensor::full(vec![c], S::one()))?;
        let n = Norm { gamma, beta, mean, var };
        self.norms.push(n);
        Ok(n)
    }

    fn dense(&mut self, name: &str, out: usize, inp: usize) -> Result<Dense, ModelError> {
        let w = self.store.add(&format!("{name}.weight"), kaiming_uniform(vec![out, inp], inp, self.rng))?;
        let b = self.store.add(&format!("{name}.bias"), Tensor::zeros(vec![out]))?;
        Ok(Dense { w, b })
    }
}

fn ids(c: &Conv) -> Vec<ParamId> {
    std::iter::once(c.w).chain(c.b).collect()
}

fn norm_ids(n: &Norm) -> [ParamId; 2] {
    [n.gamma, n.beta]
}

impl<S: Scalar> GrhdModel<S> {
    /// Fresh model with Kaiming-uniform weights drawn from `seed`.
    pub fn new(config: ModelConfig, num_sections: usize, num_groups: usize, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if num_sections == 0 || num_groups == 0 {
            return Err(ModelError::InvalidConfig("need at least one section and one group".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder {
            store: ParamStore::new(),
            rng: &mut rng,
            norms: Vec::new(),
        };
        let (t, m, frame) = (config.temporal_channels, config.spectrogram.num_mels, config.spectrogram.frame_size);
        let temporal = [
            b.conv("temporal.0", vec![t, 1, frame], true)?,
            b.conv("temporal.1", vec![t, t, 3], true)?,
            b.conv("temporal.2", vec![m, t, 3], true)?,
        ];
        let ch = config.block_channels;
        let mut blocks = Vec::with_capacity(3);
        let mut cin = 2;
        for (i, &c) in ch.iter().enumerate() {
            let conv = b.conv(&format!("block.{i}.conv"), vec![c, cin, 3, 3], false)?;
            let norm = b.norm(&format!("block.{i}.bn"), c)?;
            blocks.push((conv, norm));
            cin = c;
        }
        let c = ch[2];
        let sec_conv = (b.conv("section.conv", vec![c, c, 3, 3], false)?, b.norm("section.bn", c)?);
        let sec_fc = b.dense("section.fc", num_sections, c)?;
        let att_conv = (b.conv("attribute.conv", vec![c, c, 3, 3], false)?, b.norm("attribute.bn", c)?);
        let att_fc = b.dense("attribute.fc", num_groups, c)?;
        let rev_fc1 = b.dense("reversal.fc1", config.reversal_hidden, c)?;
        let rev_fc2 = b.dense("reversal.fc2", num_groups, config.reversal_hidden)?;

        let mut backbone: Vec<ParamId> = temporal.iter().flat_map(ids).collect();
        for (conv, norm) in &blocks {
            backbone.extend(ids(conv));
            backbone.extend(norm_ids(norm));
        }
        let reversal = vec![rev_fc1.w, rev_fc1.b, rev_fc2.w, rev_fc2.b];
        let mut section_head = ids(&sec_conv.0);
        section_head.extend(norm_ids(&sec_conv.1));
        section_head.extend([sec_fc.w, sec_fc.b]);
        let mut attribute_head = ids(&att_conv.0);
        attribute_head.extend(norm_ids(&att_conv.1));
        attribute_head.extend([att_fc.w, att_fc.b]);

        let layout = Layout {
            temporal,
            blocks: [blocks[0], blocks[1], blocks[2]],
            sec_conv,
            sec_fc,
            att_conv,
            att_fc,
            rev_fc1,
            rev_fc2,
            backbone,
            reversal,
            section_head,
            attribute_head,
        };
        let norms = b.norms;
        Ok(Self {
            config,
            num_sections,
            num_groups,
            store: b.store,
            layout,
            norms,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_sections(&self) -> usize {
        self.num_sections
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn store(&self) -> &ParamStore<S> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.store
    }

    pub fn backbone_params(&self) -> &[ParamId] {
        &self.layout.backbone
    }

    pub fn reversal_params(&self) -> &[ParamId] {
        &self.layout.reversal
    }

    pub fn section_head_params(&self) -> &[ParamId] {
        &self.layout.section_head
    }

    pub fn attribute_head_params(&self) -> &[ParamId] {
        &self.layout.attribute_head
    }

    /// Same weights in another precision.
    pub fn cast<T: Scalar>(&self) -> GrhdModel<T> {
        GrhdModel {
            config: self.config.clone(),
            num_sections: self.num_sections,
            num_groups: self.num_groups,
            store: self.store.cast(),
            layout: self.layout.clone(),
            norms: self.norms.clone(),
        }
    }

    fn conv(&self, g: &mut Graph<S>, x: Var, c: &Conv, stride: usize, pad: usize) -> Result<Var, ModelError> {
        let w = g.param(&self.store, c.w);
        let b = c.b.map(|b| g.param(&self.store, b));
        Ok(g.conv2d(x, w, b, (stride, stride), (pad, pad))?)
    }

    fn conv1d(&self, g: &mut Graph<S>, x: Var, c: &Conv, stride: usize, pad: usize) -> Result<Var, ModelError> {
        let w = g.param(&self.store, c.w);
        let b = c.b.map(|b| g.param(&self.store, b));
        Ok(g.conv1d(x, w, b, stride, pad)?)
    }

    fn norm(
        &self,
        g: &mut Graph<S>,
        x: Var,
        n: &Norm,
        mode: Mode,
        stats: &mut Vec<(usize, BatchStats<S>)>,
    ) -> Result<Var, ModelError> {
        let gamma = g.param(&self.store, n.gamma);
        let beta = g.param(&self.store, n.beta);
        let eps = S::of(self.config.bn_eps);
        let bn_mode = match mode {
            Mode::Train => BnMode::Train { eps },
            Mode::Eval => BnMode::Eval {
                mean: self.store.buffer(n.mean).data(),
                var: self.store.buffer(n.var).data(),
                eps,
            },
        };
        let (y, s) = g.batch_norm(x, gamma, beta, bn_mode)?;
        if let Some(s) = s {
            let idx = self
                .norms
                .iter()
                .position(|k| k.gamma == n.gamma)
                .expect("norm layer is registered");
            stats.push((idx, s));
        }
        Ok(y)
    }

    fn dense(&self, g: &mut Graph<S>, x: Var, d: &Dense) -> Result<Var, ModelError> {
        let w = g.param(&self.store, d.w);
        let b = g.param(&self.store, d.b);
        Ok(g.dense(x, w, Some(b))?)
    }

    /// Fused temporal and spectral features to `z_rev [N×C×H×W]`.
    pub fn backbone_forward(&self, g: &mut Graph<S>, batch: &Batch<S>, mode: Mode) -> Result<BackboneOutput<S>, ModelError> {
        let sc = &self.config.spectrogram;
        let wave = g.constant(batch.waveforms.clone());
        let mel = g.constant(batch.logmels.clone());
        let [n, _, m, f]: [usize; 4] = batch.logmels.shape().try_into().expect("rank-4 log-mel batch");
        if m != sc.num_mels {
            return Err(crate::autodiff::AutodiffError::ShapeMismatch(format!(
                "{m} mel bands in batch, model expects {}",
                sc.num_mels
            ))
            .into());
        }
        let lt = &self.layout.temporal;
        let mut t = self.conv1d(g, wave, &lt[0], sc.hop, 0)?;
        t = g.relu(t);
        t = self.conv1d(g, t, &lt[1], 1, 1)?;
        t = g.relu(t);
        t = self.conv1d(g, t, &lt[2], 1, 1)?;
        if g.shape(t)[2] != f {
            return Err(crate::autodiff::AutodiffError::ShapeMismatch(format!(
                "temporal branch yields {} frames, log-mel has {f}",
                g.shape(t)[2]
            ))
            .into());
        }
        let t = g.reshape(t, vec![n, 1, m, f])?;
        let mut x = g.concat(&[t, mel], 1)?;
        let mut stats = Vec::new();
        for (conv, norm) in &self.layout.blocks {
            x = self.conv(g, x, conv, 2, 1)?;
            x = self.norm(g, x, norm, mode, &mut stats)?;
            x = g.relu(x);
        }
        Ok(BackboneOutput { z_rev: x, bn_stats: stats })
    }

    /// Reversal classifier on `z_rev`, then the section head and the
    /// attribute head stacked on the section features.
    pub fn heads_forward(
        &self,
        g: &mut Graph<S>,
        z_rev: Var,
        lambda: S,
        mode: Mode,
        reversal: Reversal,
    ) -> Result<HeadsOutput<S>, ModelError> {
        let r = match reversal {
            Reversal::Reverse => g.grad_reverse(z_rev, lambda)?,
            Reversal::Identity => z_rev,
            Reversal::SignFlipFault => g.grad_scale(z_rev, lambda),
        };
        let p = g.global_avg_pool(r)?;
        let h = self.dense(g, p, &self.layout.rev_fc1)?;
        let h = g.relu(h);
        let logits_rev = self.dense(g, h, &self.layout.rev_fc2)?;

        let mut stats = Vec::new();
        let (sc, sn) = &self.layout.sec_conv;
        let mut z_sec = self.conv(g, z_rev, sc, 1, 1)?;
        z_sec = self.norm(g, z_sec, sn, mode, &mut stats)?;
        z_sec = g.relu(z_sec);
        let ps = g.global_avg_pool(z_sec)?;
        let logits_sec = self.dense(g, ps, &self.layout.sec_fc)?;

        let (ac, an) = &self.layout.att_conv;
        let mut z_att = self.conv(g, z_sec, ac, 1, 1)?;
        z_att = self.norm(g, z_att, an, mode, &mut stats)?;
        z_att = g.relu(z_att);
        let pa = g.global_avg_pool(z_att)?;
        let logits_att = self.dense(g, pa, &self.layout.att_fc)?;
        Ok(HeadsOutput {
            logits_rev,
            z_sec,
            logits_sec,
            z_att,
            logits_att,
            bn_stats: stats,
        })
    }

    pub fn forward(
        &self,
        g: &mut Graph<S>,
        batch: &Batch<S>,
        mode: Mode,
        lambda: S,
        reversal: Reversal,
    ) -> Result<ForwardOutput<S>, ModelError> {
        let bb = self.backbone_forward(g, batch, mode)?;
        let h = self.heads_forward(g, bb.z_rev, lambda, mode, reversal)?;
        let mut bn_stats = bb.bn_stats;
        bn_stats.extend(h.bn_stats);
        Ok(ForwardOutput {
            z_rev: bb.z_rev,
            logits_rev: h.logits_rev,
            z_sec: h.z_sec,
            logits_sec: h.logits_sec,
            z_att: h.z_att,
            logits_att: h.logits_att,
            bn_stats,
        })
    }

    /// Blends batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[(usize, BatchStats<S>)]) {
        let mom = S::of(self.config.bn_momentum);
        let keep = S::one() - mom;
        for (idx, s) in stats {
            let n = self.norms[*idx];
            for (r, v) in self.store.buffer_mut(n.mean).data_mut().iter_mut().zip(&s.mean) {
                *r = keep * *r + mom * *v;
            }
            for (r, v) in self.store.buffer_mut(n.var).data_mut().iter_mut().zip(&s.var) {
                *r = keep * *r + mom * *v;
            }
        }
    }

    /// Eval-mode logits and pooled embeddings, `batch_size` clips at a time.
    pub fn infer(&self, features: &[super::ClipFeatures<S>], batch_size: usize) -> Result<Vec<Inference>, ModelError> {
        let mut out = Vec::with_capacity(features.len());
        for chunk in features.chunks(batch_size.max(1)) {
            let refs: Vec<_> = chunk.iter().collect();
            let batch = Batch::stack(&refs)?;
            let mut g = Graph::new();
            let f = self.forward(&mut g, &batch, Mode::Eval, S::zero(), Reversal::Identity)?;
            let pooled = |g: &mut Graph<S>, v: Var| -> Result<Tensor<S>, ModelError> {
                let p = g.global_avg_pool(v)?;
                Ok(g.value(p).clone())
            };
            let (zr, zs, za) = (pooled(&mut g, f.z_rev)?, pooled(&mut g, f.z_sec)?, pooled(&mut g, f.z_att)?);
            let rows = |t: &Tensor<S>, i: usize| -> Vec<f64> {
                let w = t.shape()[1];
                t.data()[i * w..(i + 1) * w].iter().map(|v| v.as_f64()).collect()
            };
            let (ls, la) = (g.value(f.logits_sec).clone(), g.value(f.logits_att).clone());
            for i in 0..chunk.len() {
                out.push(Inference {
                    logits_sec: rows(&ls, i),
                    logits_att: rows(&la, i),
                    embedding: Embedding {
                        z_rev: rows(&zr, i),
                        z_sec: rows(&zs, i),
                        z_att: rows(&za, i),
                    },
                });
            }
        }
        Ok(out)
    }

    /// Pooled `(z_rev, z_sec, z_att)` per clip.
    pub fn embed(&self, features: &[super::ClipFeatures<S>], batch_size: usize) -> Result<Vec<Embedding>, ModelError> {
        Ok(self.infer(features, batch_size)?.into_iter().map(|i| i.embedding).collect())
    }
}
