use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Normal,
    Anomaly,
    /// Filename carried no condition segment (concealed labels).
    Unknown,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "source" => Some(Domain::Source),
            "target" => Some(Domain::Target),
            _ => None,
        }
    }
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Normal => "normal",
            Condition::Anomaly => "anomaly",
            Condition::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normal" => Some(Condition::Normal),
            "anomaly" => Some(Condition::Anomaly),
            "unknown" => Some(Condition::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hierarchical labels of one recording: machine type, section, domain and
/// the attribute key-value pairs that define its attribute group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClipMetadata {
    pub machine_type: String,
    pub section_id: u32,
    pub domain: Domain,
    pub split: Split,
    pub condition: Condition,
    pub attributes: Vec<(String, String)>,
}

impl ClipMetadata {
    /// Training data is normal-only.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.split == Split::Train && self.condition == Condition::Anomaly {
            return Err(DatasetError::ContractViolation(format!(
                "train clip of {} section {:02} is labelled anomaly",
                self.machine_type, self.section_id
            )));
        }
        Ok(())
    }

    /// Canonical attribute-combination string: pairs sorted and
    /// deduplicated, rendered as `key=value` joined by `;`. Empty when the
    /// clip carries no attributes.
    pub fn attribute_key(&self) -> String {
        let mut pairs: Vec<_> = self.attributes.iter().collect();
        pairs.sort();
        pairs.dedup();
        pairs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn malformed(name: &str, why: &str) -> DatasetError {
    DatasetError::MalformedFilename {
        name: name.to_string(),
        reason: why.to_string(),
    }
}

/// Parses `section_<NN>_<domain>_<split>[_<condition>]_<index>[_<key>_<val>]*.wav`.
///
/// The machine type is not part of the filename; it is left empty here and
/// filled in by [`parse_clip_path`] or the manifest.
pub fn parse_clip_metadata(filename: &str) -> Result<ClipMetadata, DatasetError> {
    let stem = filename
        .strip_suffix(".wav")
        .or_else(|| filename.strip_suffix(".WAV"))
        .unwrap_or(filename);
    let tokens: Vec<&str> = stem.split('_').collect();
    if tokens.len() < 5 || tokens[0] != "section" {
        return Err(malformed(filename, "expected section_<NN>_<domain>_<split>_..."));
    }
    let section_id = tokens[1]
        .parse::<u32>()
        .ok()
        .filter(|_| tokens[1].chars().all(|c| c.is_ascii_digit()))
        .ok_or_else(|| malformed(filename, "section id is not a number"))?;
    let domain =
        Domain::parse(tokens[2]).ok_or_else(|| malformed(filename, "domain must be source or target"))?;
    let split =
        Split::parse(tokens[3]).ok_or_else(|| malformed(filename, "split must be train or test"))?;

    let is_index = |t: &str| !t.is_empty() && t.chars().all(|c| c.is_ascii_digit());
    let (condition, tail_start) = match Condition::parse(tokens[4]) {
        Some(c) if c != Condition::Unknown => {
            if tokens.len() < 6 || !is_index(tokens[5]) {
                return Err(malformed(filename, "missing clip index after condition"));
            }
            (c, 6)
        }
        _ if is_index(tokens[4]) => (Condition::Unknown, 5),
        _ => return Err(malformed(filename, "condition must be normal or anomaly")),
    };

    let tail = &tokens[tail_start..];
    let attributes = if tail.is_empty() {
        Vec::new()
    } else if tail.len() % 2 == 0 && tail.iter().all(|t| !t.is_empty()) {
        tail.chunks(2)
            .map(|kv| (kv[0].to_string(), kv[1].to_string()))
            .collect()
    } else {
        vec![("raw".to_string(), tail.join("_"))]
    };

    Ok(ClipMetadata {
        machine_type: String::new(),
        section_id,
        domain,
        split,
        condition,
        attributes,
    })
}

/// Like [`parse_clip_metadata`], taking the machine type from the directory
/// layout `<machine>/<split>/<file>.wav` (or `<machine>/<file>.wav`).
pub fn parse_clip_path(path: &Path) -> Result<ClipMetadata, DatasetError> {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| malformed(&path.display().to_string(), "no file name"))?;
    let mut meta = parse_clip_metadata(name)?;
    let mut parent = path.parent();
    if let Some(dir) = parent.and_then(|p| p.file_name()).and_then(|n| n.to_str()) {
        if dir == "train" || dir == "test" {
            parent = parent.and_then(|p| p.parent());
        }
    }
    if let Some(machine) = parent.and_then(|p| p.file_name()).and_then(|n| n.to_str()) {
        meta.machine_type = machine.to_string();
    }
    Ok(meta)
}

/// Inverse of [`parse_clip_metadata`] for metadata whose attribute keys and
/// values contain no underscores.
pub fn format_clip_filename(meta: &ClipMetadata, index: usize) -> String {
    let mut name = format!(
        "section_{:02}_{}_{}",
        meta.section_id,
        meta.domain.as_str(),
        meta.split.as_str()
    );
    if meta.condition != Condition::Unknown {
        name.push('_');
        name.push_str(meta.condition.as_str());
    }
    name.push_str(&format!("_{index:04}"));
    for (k, v) in &meta.attributes {
        name.push('_');
        name.push_str(k);
        name.push('_');
        name.push_str(v);
    }
    name.push_str(".wav");
    name
}
