use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ClipMetadata;

/// Attribute groups of one section, sorted by canonical combination string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionGroups {
    pub section_id: u32,
    /// Canonical combination strings (see [`ClipMetadata::attribute_key`]).
    /// The empty string is the section's no-attribute group.
    pub combinations: Vec<String>,
    pub counts: Vec<usize>,
}

impl SectionGroups {
    pub fn num_groups(&self) -> usize {
        self.combinations.len()
    }

    pub fn local_index(&self, key: &str) -> Option<usize> {
        self.combinations.binary_search_by(|c| c.as_str().cmp(key)).ok()
    }
}

/// Dense attribute-group labelling per section, plus a global label space
/// that concatenates all sections in ascending section order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeGroupTable {
    sections: Vec<SectionGroups>,
}

/// Builds the table from clip metadata (normally the training clips of one
/// machine). Permutation-invariant in its input.
pub fn build_attribute_groups(clips: &[ClipMetadata]) -> AttributeGroupTable {
    let mut per_section: BTreeMap<u32, BTreeMap<String, usize>> = BTreeMap::new();
    for clip in clips {
        *per_section
            .entry(clip.section_id)
            .or_default()
            .entry(clip.attribute_key())
            .or_insert(0) += 1;
    }
    let sections = per_section
        .into_iter()
        .map(|(section_id, combos)| {
            let (combinations, counts) = combos.into_iter().unzip();
            SectionGroups {
                section_id,
                combinations,
                counts,
            }
        })
        .collect();
    AttributeGroupTable { sections }
}

impl AttributeGroupTable {
    pub fn sections(&self) -> &[SectionGroups] {
        &self.sections
    }

    pub fn section_ids(&self) -> Vec<u32> {
        self.sections.iter().map(|s| s.section_id).collect()
    }

    pub fn num_sections(&self) -> usize {
        self.sections.len()
    }

    pub fn section(&self, section_id: u32) -> Option<&SectionGroups> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }

    /// Dense section class index (position in ascending section order).
    pub fn section_index(&self, section_id: u32) -> Option<usize> {
        self.sections.iter().position(|s| s.section_id == section_id)
    }

    pub fn num_global_groups(&self) -> usize {
        self.sections.iter().map(SectionGroups::num_groups).sum()
    }

    pub fn local_group(&self, meta: &ClipMetadata) -> Option<usize> {
        self.section(meta.section_id)?
            .local_index(&meta.attribute_key())
    }

    /// Attribute-group class index over all sections of the machine.
    pub fn global_group(&self, meta: &ClipMetadata) -> Option<usize> {
        let mut offset = 0;
        for s in &self.sections {
            if s.section_id == meta.section_id {
                return s.local_index(&meta.attribute_key()).map(|i| offset + i);
            }
            offset += s.num_groups();
        }
        None
    }

    /// Per-global-group clip counts in class-index order.
    pub fn global_counts(&self) -> Vec<usize> {
        self.sections
            .iter()
            .flat_map(|s| s.counts.iter().copied())
            .collect()
    }

    /// Inverse-frequency class weights over global groups, normalized to mean 1.
    pub fn inverse_frequency_weights(&self) -> Vec<f64> {
        let inv: Vec<f64> = self
            .global_counts()
            .into_iter()
            .map(|c| 1.0 / c.max(1) as f64)
            .collect();
        if inv.is_empty() {
            return inv;
        }
        let mean = inv.iter().sum::<f64>() / inv.len() as f64;
        inv.into_iter().map(|w| w / mean).collect()
    }

    pub fn distinct_combinations(&self) -> BTreeSet<(u32, &str)> {
        self.sections
            .iter()
            .flat_map(|s| s.combinations.iter().map(move |c| (s.section_id, c.as_str())))
            .collect()
    }
}
