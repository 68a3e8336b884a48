//! Label normalization shared by graph construction, claim extraction, and
//! knowledge-graph matching.
//!
//! The rule is deliberately small: trim, case-fold, collapse internal
//! whitespace. Anything smarter (aliases, abbreviations) goes through an
//! explicit [`SynonymTable`] supplied by the caller.

use std::collections::BTreeMap;

/// Trim, case-fold, and collapse internal whitespace.
pub fn normalize_label(raw: &str) -> String {
    raw.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Optional alias -> canonical mapping applied after [`normalize_label`].
///
/// Both sides of every entry are normalized when inserted, so lookups are
/// insensitive to case and spacing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymTable {
    map: BTreeMap<String, String>,
}

impl SynonymTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alias: &str, canonical: &str) {
        self.map
            .insert(normalize_label(alias), normalize_label(canonical));
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Normalize `raw` and resolve it through the table.
    pub fn canonical(&self, raw: &str) -> String {
        let norm = normalize_label(raw);
        match self.map.get(&norm) {
            Some(c) => c.clone(),
            None => norm,
        }
    }
}
