//! Shared in-memory model: schemas, tables, groups, and report types.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use crate::bitcodec::{CellWord, ColumnSpec};
use crate::crypto::{int_key_bytes, SecretKey};
use crate::error::{Error, Result};

/// Primary-key flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyKind {
    Integer,
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimaryKeySpec {
    pub name: String,
    pub kind: KeyKind,
}

/// Table shape: the primary key plus `y >= 2` watermarkable columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub primary_key: PrimaryKeySpec,
    pub columns: Vec<ColumnSpec>,
}

impl Schema {
    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.len() < 2 {
            return Err(Error::Schema(format!(
                "need at least 2 columns, got {}",
                self.columns.len()
            )));
        }
        let mut names = HashSet::new();
        names.insert(self.primary_key.name.as_str());
        for column in &self.columns {
            column.validate()?;
            if !names.insert(column.name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate column name {:?}",
                    column.name
                )));
            }
        }
        Ok(())
    }
}

/// One primary-key value; integer keys sort numerically, text keys by bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum KeyValue {
    Integer(i64),
    Text(String),
}

impl KeyValue {
    /// Canonical bytes fed to the grouping digest.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        match self {
            KeyValue::Integer(v) => int_key_bytes(*v).to_vec(),
            KeyValue::Text(s) => s.as_bytes().to_vec(),
        }
    }

    pub fn render(&self) -> String {
        match self {
            KeyValue::Integer(v) => v.to_string(),
            KeyValue::Text(s) => s.clone(),
        }
    }
}

impl Ord for KeyValue {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (KeyValue::Integer(a), KeyValue::Integer(b)) => a.cmp(b),
            (KeyValue::Text(a), KeyValue::Text(b)) => a.as_bytes().cmp(b.as_bytes()),
            // A table never mixes kinds; order them arbitrarily but totally.
            (KeyValue::Integer(_), KeyValue::Text(_)) => Ordering::Less,
            (KeyValue::Text(_), KeyValue::Integer(_)) => Ordering::Greater,
        }
    }
}

impl PartialOrd for KeyValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// An in-memory table. Row order is the physical file order and is preserved
/// by every pipeline; grouping and sorting are logical views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub schema: Schema,
    pub keys: Vec<KeyValue>,
    pub rows: Vec<Vec<CellWord>>,
}

impl Table {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        if self.keys.len() != self.rows.len() {
            return Err(Error::Schema("key/row count mismatch".into()));
        }
        let mut seen = HashSet::new();
        for key in &self.keys {
            if !seen.insert(key) {
                return Err(Error::DuplicatePrimaryKey { key: key.render() });
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.schema.columns.len() {
                return Err(Error::Schema(format!("row {r} has {} cells", row.len())));
            }
            for (word, spec) in row.iter().zip(&self.schema.columns) {
                if spec.width_bits < 64 && word.0 >> spec.width_bits != 0 {
                    return Err(Error::Schema(format!(
                        "cell exceeds {} bits in column {:?}",
                        spec.width_bits, spec.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Embedding/verification parameters: the secret key and the group count.
#[derive(Debug, Clone)]
pub struct Params {
    pub key: SecretKey,
    pub groups: u32,
}

impl Params {
    pub fn new(key: SecretKey, groups: u32) -> Result<Self> {
        if groups < 1 {
            return Err(Error::Schema("group count must be at least 1".into()));
        }
        Ok(Params { key, groups })
    }
}

/// One keyed partition of rows: members are row indices sorted by primary key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub index: u32,
    /// Cyclic column-permutation shift, `1 <= shift <= y-1`.
    pub shift: usize,
    pub members: Vec<usize>,
}

impl Group {
    /// Group size `v`, also the attribute-watermark length.
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Per-group watermarks: `y` attribute strings of `v` bits and `v` tuple
/// strings of `y` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WatermarkSet {
    pub attribute: Vec<crate::bitcodec::BitString>,
    pub tuple: Vec<crate::bitcodec::BitString>,
}

/// Verification outcome for one group.
///
/// `v1_raw` holds the column checks before the disambiguation pass; `v1` is
/// the published vector after it. Localization intersects failed rows with
/// failed columns of `v1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationVectors {
    pub v1: Vec<bool>,
    pub v1_raw: Vec<bool>,
    pub v2: Vec<bool>,
    /// `(member position, column index)` pairs, 0-based within the group.
    pub localized: Vec<(usize, usize)>,
}

impl VerificationVectors {
    /// Clean means no raw failure anywhere; the disambiguation pass can mask
    /// whole failure cycles, so `v1` alone is not trusted for cleanliness.
    pub fn is_clean(&self) -> bool {
        self.v1_raw.iter().all(|&b| b) && self.v2.iter().all(|&b| b)
    }
}

/// Table-level verdict of verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    #[serde(rename = "clean")]
    Clean,
    #[serde(rename = "single-cell")]
    SingleCell,
    #[serde(rename = "multi-cell")]
    MultiCell,
    #[serde(rename = "low-bit-only")]
    LowBitOnly,
    #[serde(rename = "group-structure")]
    GroupStructure,
}

/// A localized cell named for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellRef {
    pub pk: String,
    pub column: String,
}

/// Per-group slice of a tamper report.
#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub index: u32,
    pub size: usize,
    pub v1: Vec<bool>,
    pub v1_raw: Vec<bool>,
    pub v2: Vec<bool>,
    pub localized: Vec<CellRef>,
    pub status: Classification,
}

/// Machine-readable verification verdict.
#[derive(Debug, Clone, Serialize)]
pub struct TamperReport {
    pub classification: Classification,
    pub groups: Vec<GroupReport>,
}

impl TamperReport {
    pub fn is_clean(&self) -> bool {
        self.classification == Classification::Clean
    }
}

/// Recovery status of one group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RecoveryStatus {
    #[serde(rename = "clean")]
    Clean,
    #[serde(rename = "recovered-exact")]
    RecoveredExact,
    #[serde(rename = "recovered-lowbits")]
    RecoveredLowBits,
    #[serde(rename = "localized-only")]
    LocalizedOnly,
    #[serde(rename = "failed")]
    Failed,
}

impl RecoveryStatus {
    /// True when the group needs no further attention.
    pub fn is_resolved(self) -> bool {
        matches!(
            self,
            RecoveryStatus::Clean | RecoveryStatus::RecoveredExact | RecoveryStatus::RecoveredLowBits
        )
    }
}

/// One rewritten cell, old and new whole words.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveredCell {
    pub pk: String,
    pub column: String,
    pub old_word: u64,
    pub new_word: u64,
}

/// Per-group recovery outcome.
#[derive(Debug, Clone, Serialize)]
pub struct GroupRecovery {
    pub index: u32,
    pub size: usize,
    pub status: RecoveryStatus,
    pub localized: Vec<CellRef>,
    pub recovered: Vec<RecoveredCell>,
}

/// Machine-readable recovery verdict with per-status counts.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub clean: usize,
    pub recovered_exact: usize,
    pub recovered_lowbits: usize,
    pub localized_only: usize,
    pub failed: usize,
    pub groups: Vec<GroupRecovery>,
}

impl RecoveryReport {
    pub fn from_groups(groups: Vec<GroupRecovery>) -> Self {
        let count = |status: RecoveryStatus| groups.iter().filter(|g| g.status == status).count();
        RecoveryReport {
            clean: count(RecoveryStatus::Clean),
            recovered_exact: count(RecoveryStatus::RecoveredExact),
            recovered_lowbits: count(RecoveryStatus::RecoveredLowBits),
            localized_only: count(RecoveryStatus::LocalizedOnly),
            failed: count(RecoveryStatus::Failed),
            groups,
        }
    }

    /// True when every group is clean or repaired.
    pub fn is_fully_resolved(&self) -> bool {
        self.localized_only == 0 && self.failed == 0
    }
}
