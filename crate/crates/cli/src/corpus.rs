//! Locating clips of one machine and split inside a data directory.
//!
//! With a `manifest.csv` at the root, its rows decide which files belong to
//! a split and each file's labels are cross-checked against the manifest.
//! Without one, `<data>/<machine>/<split>/*.wav` is scanned in name order.

use std::io::BufReader;
use std::path::Path;

use grhd::dataset::{load_wav, read_manifest, AudioClip, ManifestRow, Split};

use crate::error::{io_err, CliError};

pub const MANIFEST_FILE: &str = "manifest.csv";

/// Preprocessing threads from `GRHD_THREADS`: unset means every core,
/// 0 means single-threaded. Results never depend on it.
pub fn threads() -> Result<usize, CliError> {
    match std::env::var("GRHD_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .map_err(|_| CliError::Config(format!("GRHD_THREADS=`{v}` is not a count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn read_rows(data: &Path) -> Result<Option<Vec<ManifestRow>>, CliError> {
    let path = data.join(MANIFEST_FILE);
    match std::fs::File::open(&path) {
        Ok(f) => Ok(Some(read_manifest(BufReader::new(f))?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(&path)(e)),
    }
}

fn load_listed(data: &Path, row: &ManifestRow) -> Result<AudioClip, CliError> {
    let mut clip = load_wav(&data.join(&row.filename))?;
    let m = &clip.metadata;
    if m.machine_type != row.machine_type
        || m.section_id != row.section
        || m.domain != row.domain
        || m.split != row.split
        || m.condition != row.condition
    {
        return Err(CliError::Config(format!(
            "{}: labels in the file name disagree with {MANIFEST_FILE}",
            row.filename
        )));
    }
    clip.id = row.filename.clone();
    Ok(clip)
}

/// Clips of `machine` in `split`, ids relative to `data`.
pub fn load_split(data: &Path, machine: &str, split: Split) -> Result<Vec<AudioClip>, CliError> {
    if let Some(rows) = read_rows(data)? {
        return rows
            .iter()
            .filter(|r| r.machine_type == machine && r.split == split)
            .map(|r| load_listed(data, r))
            .collect();
    }
    let dir = data.join(machine).join(split.as_str());
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&dir)(e)),
    };
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(io_err(&dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.ends_with(".wav") {
            names.push(name);
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let mut clip = load_wav(&dir.join(&name))?;
            clip.id = format!("{machine}/{}/{name}", split.as_str());
            Ok(clip)
        })
        .collect()
}
