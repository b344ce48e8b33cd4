//! Audio ingestion, hierarchical clip metadata and synthetic corpora.

mod groups;
mod manifest;
mod metadata;
mod split;
mod synth;
mod wav;

pub use groups::{build_attribute_groups, AttributeGroupTable, SectionGroups};
pub use manifest::{manifest_rows, read_manifest, write_manifest, ManifestRow, MANIFEST_HEADER};
pub use metadata::{
    format_clip_filename, parse_clip_metadata, parse_clip_path, ClipMetadata, Condition, Domain,
    Split,
};
pub use split::{split_corpus, SplitPolicy};
pub use synth::{
    click_positions, parse_kv_lines, render_clip, render_samples, synth_attributes,
    synth_generate, synth_plan, AnomalyMode, ClipPlan, MachineProfile, SynthConfig, SynthCorpus,
    CLICK_LEN,
};
pub use wav::{load_wav, quantize_pcm16, read_wav_samples, write_wav_pcm16, AudioClip};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("malformed clip filename `{name}`: {reason}")]
    MalformedFilename { name: String, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported audio in {path}: {reason}")]
    UnsupportedFormat { path: String, reason: String },
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
}
