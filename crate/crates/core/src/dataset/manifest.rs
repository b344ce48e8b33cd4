use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{build_attribute_groups, ClipMetadata, Condition, DatasetError, Domain, Split};

pub const MANIFEST_HEADER: &str = "filename,machine_type,section,domain,split,condition,attr_group";

/// One manifest line. `attr_group` is the clip's attribute-group index
/// within its section, taken from the machine's training clips; `None`
/// when the combination never occurs in training.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub filename: String,
    pub machine_type: String,
    pub section: u32,
    pub domain: Domain,
    pub split: Split,
    pub condition: Condition,
    pub attr_group: Option<usize>,
}

/// Builds manifest rows, labelling attribute groups per machine.
pub fn manifest_rows<'a>(
    clips: impl IntoIterator<Item = (&'a str, &'a ClipMetadata)>,
) -> Vec<ManifestRow> {
    let clips: Vec<_> = clips.into_iter().collect();
    let mut train_by_machine: BTreeMap<&str, Vec<ClipMetadata>> = BTreeMap::new();
    for (_, m) in &clips {
        if m.split == Split::Train {
            train_by_machine
                .entry(m.machine_type.as_str())
                .or_default()
                .push((*m).clone());
        }
    }
    let tables: BTreeMap<&str, _> = train_by_machine
        .iter()
        .map(|(k, v)| (*k, build_attribute_groups(v)))
        .collect();
    clips
        .into_iter()
        .map(|(name, m)| ManifestRow {
            filename: name.to_string(),
            machine_type: m.machine_type.clone(),
            section: m.section_id,
            domain: m.domain,
            split: m.split,
            condition: m.condition,
            attr_group: tables
                .get(m.machine_type.as_str())
                .and_then(|t| t.local_group(m)),
        })
        .collect()
}

/// Writes UTF-8, LF-terminated CSV.
pub fn write_manifest<W: Write>(mut w: W, rows: &[ManifestRow]) -> std::io::Result<()> {
    writeln!(w, "{MANIFEST_HEADER}")?;
    for r in rows {
        let group = r.attr_group.map(|g| g.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.filename, r.machine_type, r.section, r.domain, r.split, r.condition, group
        )?;
    }
    Ok(())
}

fn bad_row(line: usize, why: &str) -> DatasetError {
    DatasetError::MalformedManifest(format!("line {line}: {why}"))
}

pub fn read_manifest<R: BufRead>(r: R) -> Result<Vec<ManifestRow>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::MalformedManifest(e.to_string()))?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim_end() != MANIFEST_HEADER {
                return Err(bad_row(lineno, "unexpected header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad_row(lineno, "expected 7 fields"));
        }
        rows.push(ManifestRow {
            filename: f[0].to_string(),
            machine_type: f[1].to_string(),
            section: f[2].parse().map_err(|_| bad_row(lineno, "section"))?,
            domain: Domain::parse(f[3]).ok_or_else(|| bad_row(lineno, "domain"))?,
            split: Split::parse(f[4]).ok_or_else(|| bad_row(lineno, "split"))?,
            condition: Condition::parse(f[5]).ok_or_else(|| bad_row(lineno, "condition"))?,
            attr_group: if f[6].is_empty() {
                None
            } else {
                Some(f[6].parse().map_err(|_| bad_row(lineno, "attr_group"))?)
            },
        });
    }
    Ok(rows)
}
