//! Subcommand bodies. Each writes its human-readable output to `out` so
//! tests can capture it.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use grhd::dataset::{build_attribute_groups, write_manifest, write_wav_pcm16, AudioClip, Condition, Split, SynthConfig};
use grhd::metrics::{evaluate, score_knn, score_nls, EvalReport, ScoredClip};
use grhd::model::{prepare_features, train, GrhdModel, LabelledSet, LossBreakdown};
use grhd::{DType, Scalar};

use crate::checkpoint::{AnyModel, Checkpoint, CheckpointMeta};
use crate::config::{RunConfig, Scorer};
use crate::corpus::{load_split, threads, MANIFEST_FILE};
use crate::error::{io_err, CliError};

/// Clips per inference batch.
const INFER_BATCH: usize = 64;

fn emit(out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Run configuration from an optional file plus `key, value` overrides.
pub fn run_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = match file {
        Some(p) => RunConfig::from_kv_text(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

// ---- synth --------------------------------------------------------------

pub struct SynthArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Renders the corpus to `<out>/<machine>/<split>/*.wav` with a manifest
/// and the effective generator config next to it.
pub fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => SynthConfig::from_kv_text(&std::fs::read_to_string(p).map_err(io_err(p))?)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let corpus = grhd::dataset::synth_generate(&cfg)?;
    for (clip, row) in corpus.clips.iter().zip(&corpus.manifest) {
        let path = args.out.join(&row.filename);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        write_wav_pcm16(&path, &clip.samples, clip.sample_rate)?;
    }
    let manifest_path = args.out.join(MANIFEST_FILE);
    let mut w = create(&manifest_path)?;
    write_manifest(&mut w, &corpus.manifest).map_err(io_err(&manifest_path))?;
    w.flush().map_err(io_err(&manifest_path))?;
    write_file(&args.out.join("synth.cfg"), &cfg.to_kv_text())?;
    emit(
        out,
        &format!("wrote {} clips and {} to {}\n", corpus.clips.len(), MANIFEST_FILE, args.out.display()),
    )
}

// ---- train --------------------------------------------------------------

pub struct TrainArgs {
    pub data: PathBuf,
    pub machine: String,
    /// Checkpoint path.
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    /// Loss log path; `<out>.loss.csv` when absent.
    pub log: Option<PathBuf>,
}

pub fn default_log_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".loss.csv");
    PathBuf::from(s)
}

struct Trained<S> {
    model: GrhdModel<S>,
    stats: grhd::dsp::StandardizeStats,
    last: Option<LossBreakdown>,
}

fn train_as<S: Scalar>(
    clips: &[AudioClip],
    model_cfg: &grhd::model::ModelConfig,
    groups: &grhd::dataset::AttributeGroupTable,
    cfg: &RunConfig,
    log_path: &Path,
) -> Result<Trained<S>, CliError> {
    let (feats, stats) = prepare_features::<S>(clips, model_cfg, None, threads()?)?;
    let set = LabelledSet::new(clips, feats, groups)?;
    let mut model = GrhdModel::<S>::new(model_cfg.clone(), set.num_sections, set.num_groups, cfg.train.seed)?;
    let mut log = create(log_path)?;
    writeln!(log, "{}", LossBreakdown::CSV_HEADER).map_err(io_err(log_path))?;
    let mut write_err = None;
    let result = train(&mut model, &set, &cfg.train, |row| {
        if write_err.is_none() {
            if let Err(e) = writeln!(log, "{}", row.csv_row()).and_then(|_| log.flush()) {
                write_err = Some(e);
            }
        }
    });
    log.flush().map_err(io_err(log_path))?;
    if let Some(e) = write_err {
        return Err(io_err(log_path)(e));
    }
    let last = result?.log.last().cloned();
    Ok(Trained { model, stats, last })
}

/// Trains one machine's model and writes the checkpoint and loss log.
pub fn train_cmd(args: &TrainArgs, out: &mut dyn Write) -> Result<Checkpoint, CliError> {
    let cfg = run_config(args.config.as_deref(), &args.overrides)?;
    if cfg.seed.is_none() {
        return Err(CliError::Usage("train needs a seed: pass --seed or set `seed` in the config".into()));
    }
    let echo = cfg.echo();
    emit(out, &echo)?;
    let clips = load_split(&args.data, &args.machine, Split::Train)?;
    if clips.is_empty() {
        return Err(CliError::NoTrainingData(format!(
            "no training clips for `{}` under {}",
            args.machine,
            args.data.display()
        )));
    }
    if let Some(c) = clips.iter().find(|c| c.metadata.condition == Condition::Anomaly) {
        return Err(CliError::Config(format!("training clip {} is labelled anomalous", c.id)));
    }
    let mut model_cfg = cfg.model.clone();
    model_cfg.sample_rate = clips[0].sample_rate;
    model_cfg.validate()?;
    let metas: Vec<_> = clips.iter().map(|c| c.metadata.clone()).collect();
    let groups = build_attribute_groups(&metas);
    let log_path = args.log.clone().unwrap_or_else(|| default_log_path(&args.out));
    let (model, stats, last) = match cfg.precision {
        DType::F32 => {
            let t = train_as::<f32>(&clips, &model_cfg, &groups, &cfg, &log_path)?;
            (AnyModel::F32(t.model), t.stats, t.last)
        }
        DType::F64 => {
            let t = train_as::<f64>(&clips, &model_cfg, &groups, &cfg, &log_path)?;
            (AnyModel::F64(t.model), t.stats, t.last)
        }
    };
    let meta = CheckpointMeta {
        machine: args.machine.clone(),
        model: model_cfg,
        num_sections: groups.num_sections(),
        num_groups: groups.num_global_groups(),
        stats,
        groups,
        train: cfg.train.clone(),
        config_echo: echo,
    };
    let ckpt = Checkpoint { meta, model };
    ckpt.save(&args.out)?;
    if let Some(row) = last {
        emit(out, &format!("{}\n{}\n", LossBreakdown::CSV_HEADER, row.csv_row()))?;
    }
    emit(out, &format!("checkpoint {}\nloss log {}\n", args.out.display(), log_path.display()))?;
    Ok(ckpt)
}

// ---- eval / embed -------------------------------------------------------

fn infer_as<S: Scalar>(
    model: &GrhdModel<S>,
    meta: &CheckpointMeta,
    clips: &[AudioClip],
) -> Result<Vec<grhd::model::Inference>, CliError> {
    let (feats, _) = prepare_features::<S>(clips, &meta.model, Some(&meta.stats), threads()?)?;
    Ok(model.infer(&feats, INFER_BATCH)?)
}

/// Eval-mode outputs for `clips`, in order.
pub fn infer(ckpt: &Checkpoint, clips: &[AudioClip]) -> Result<Vec<grhd::model::Inference>, CliError> {
    if clips.is_empty() {
        return Ok(Vec::new());
    }
    match &ckpt.model {
        AnyModel::F32(m) => infer_as(m, &ckpt.meta, clips),
        AnyModel::F64(m) => infer_as(m, &ckpt.meta, clips),
    }
}

/// Anomaly scores of one machine's test clips.
pub fn score_clips(
    ckpt: &Checkpoint,
    data: &Path,
    test: &[AudioClip],
    scorer: Scorer,
    k: usize,
) -> Result<Vec<ScoredClip>, CliError> {
    let outputs = infer(ckpt, test)?;
    let bank: Vec<Vec<f64>> = match scorer {
        Scorer::Nls => Vec::new(),
        Scorer::Knn => {
            let train = load_split(data, &ckpt.meta.machine, Split::Train)?;
            if train.is_empty() {
                return Err(CliError::NoTrainingData(format!(
                    "knn scoring needs the training clips of `{}`",
                    ckpt.meta.machine
                )));
            }
            infer(ckpt, &train)?.into_iter().map(|i| i.embedding.z_att).collect()
        }
    };
    test.iter()
        .zip(outputs)
        .map(|(clip, o)| {
            let score = match scorer {
                Scorer::Nls => {
                    let idx = ckpt.meta.groups.section_index(clip.metadata.section_id).ok_or_else(|| {
                        CliError::Config(format!(
                            "{}: section {} never occurs in training",
                            clip.id, clip.metadata.section_id
                        ))
                    })?;
                    score_nls(&o.logits_sec, idx)?
                }
                Scorer::Knn => score_knn(&o.embedding.z_att, &bank, k)?,
            };
            Ok(ScoredClip {
                id: clip.id.clone(),
                metadata: clip.metadata.clone(),
                score,
            })
        })
        .collect()
}

pub struct EvalArgs {
    pub checkpoints: Vec<PathBuf>,
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    /// Report CSV path.
    pub out: Option<PathBuf>,
}

/// Full-precision totals, one `key=value` per field, for scripts.
pub fn totals_raw(report: &EvalReport) -> String {
    let t = &report.totals;
    let f = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:?}"));
    format!(
        "totals auc_s={} auc_t={} pauc={} hauc={}",
        f(t.auc_s),
        f(t.auc_t),
        f(t.pauc),
        f(t.hauc)
    )
}

/// Scores every checkpoint's machine and reports them together.
pub fn eval_cmd(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport, CliError> {
    let cfg = run_config(args.config.as_deref(), &args.overrides)?;
    if args.checkpoints.is_empty() {
        return Err(CliError::Usage("eval needs at least one --checkpoint".into()));
    }
    let mut scored = Vec::new();
    let mut machines = Vec::new();
    for path in &args.checkpoints {
        let ckpt = Checkpoint::load(path)?;
        let machine = ckpt.meta.machine.clone();
        if machines.contains(&machine) {
            return Err(CliError::Usage(format!("two checkpoints for machine `{machine}`")));
        }
        let test = load_split(&args.data, &machine, Split::Test)?;
        if test.is_empty() {
            return Err(CliError::NoTestData(format!("no test clips for `{machine}` under {}", args.data.display())));
        }
        scored.extend(score_clips(&ckpt, &args.data, &test, cfg.scorer, cfg.knn_k)?);
        machines.push(machine);
    }
    let report = evaluate(&scored, cfg.p)?;
    if let Some(p) = &args.out {
        write_file(p, &report.to_csv())?;
    }
    let mut text = String::new();
    for c in report.degenerate_cells() {
        if let Err(e) = &c.value {
            let domain = c.domain.map_or("all", |d| d.as_str());
            let _ = writeln!(text, "degenerate {} {:02} {domain} {}: {e}", c.machine, c.section, c.metric);
        }
    }
    if report.unlabelled > 0 {
        let _ = writeln!(text, "{} clips without a normal/anomaly label left out", report.unlabelled);
    }
    let _ = writeln!(text, "{}", report.totals_line());
    let _ = writeln!(text, "{}", totals_raw(&report));
    emit(out, &text)?;
    Ok(report)
}

pub struct EmbedArgs {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub split: Split,
}

/// `clip,section,domain,condition` then the pooled `z_rev`, `z_sec` and
/// `z_att` vectors, one column per channel.
pub fn embed_cmd(args: &EmbedArgs, out: &mut dyn Write) -> Result<usize, CliError> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let clips = load_split(&args.data, &ckpt.meta.machine, args.split)?;
    let outputs = infer(&ckpt, &clips)?;
    let mut text = String::from("clip,section,domain,condition");
    let b = ckpt.meta.model.block_channels[2];
    let widths = outputs.first().map_or([b, b, b], |o| {
        let e = &o.embedding;
        [e.z_rev.len(), e.z_sec.len(), e.z_att.len()]
    });
    for (prefix, w) in ["z_rev", "z_sec", "z_att"].iter().zip(widths) {
        for i in 0..w {
            let _ = write!(text, ",{prefix}_{i}");
        }
    }
    text.push('\n');
    for (clip, o) in clips.iter().zip(&outputs) {
        let m = &clip.metadata;
        let _ = write!(text, "{},{:02},{},{}", clip.id, m.section_id, m.domain.as_str(), m.condition.as_str());
        let e = &o.embedding;
        for v in e.z_rev.iter().chain(&e.z_sec).chain(&e.z_att) {
            let _ = write!(text, ",{v:?}");
        }
        text.push('\n');
    }
    write_file(&args.out, &text)?;
    emit(out, &format!("wrote {} rows to {}\n", clips.len(), args.out.display()))?;
    Ok(clips.len())
}
