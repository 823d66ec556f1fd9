//! Watermark verification, tamper localization, and table classification.
//!
//! Per group, `v1[j]` checks column `j`'s attribute watermark against the
//! bits stored in column `p(j)`, and `v2[i]` checks row `i`'s tuple watermark
//! against the bits stored across row `i`. A failed cell sits at the crossing
//! of a failed row and a failed column.
//!
//! A tamper that touches bit 0 of a cell in column `c` damages the *stored*
//! copy of `W1[p^-1(c)]`, so column `p^-1(c)` fails alongside `c`. The
//! disambiguation pass clears `j` whenever `j` and `p(j)` both failed in the
//! raw vector, which keeps exactly the genuinely modified column. The pass
//! reads a frozen snapshot: in-place clearing would make the result depend on
//! scan order when failures chain under `p`.

use crate::crypto::SecretKey;
use crate::embed::{attribute_watermark, tuple_watermark};
use crate::error::Result;
use crate::grouping::{partition, permute};
use crate::model::{
    CellRef, Classification, Group, GroupReport, Params, Table, TamperReport, VerificationVectors,
};

/// Raw falses at or above this count (with every row check passing) are
/// treated as structural damage, i.e. a suspected primary-key modification.
pub fn dense_failure_threshold(column_count: usize) -> usize {
    column_count.div_ceil(2).max(3)
}

/// Recompute and compare both watermark families for one group.
pub fn verify_group(key: &SecretKey, table: &Table, group: &Group) -> VerificationVectors {
    let y = table.schema.column_count();
    let v = group.size();
    if v == 0 {
        // An empty group vacuously verifies; nothing was embedded.
        return VerificationVectors {
            v1: vec![true; y],
            v1_raw: vec![true; y],
            v2: Vec::new(),
            localized: Vec::new(),
        };
    }

    let v1_raw: Vec<bool> = (0..y)
        .map(|j| {
            let expected = attribute_watermark(key, table, group, j);
            let stored_in = permute(j, group.shift, y);
            let mut extracted = crate::bitcodec::BitString::zeros(v);
            for (i, &row) in group.members.iter().enumerate() {
                extracted.set_bit(i, table.rows[row][stored_in].bit(0));
            }
            extracted == expected
        })
        .collect();

    let mut v1 = v1_raw.clone();
    for j in 0..y {
        if !v1_raw[j] && !v1_raw[permute(j, group.shift, y)] {
            v1[j] = true;
        }
    }

    let mut v2 = vec![true; v];
    for (i, &row) in group.members.iter().enumerate() {
        let expected = tuple_watermark(key, table, group, i);
        let mut extracted = crate::bitcodec::BitString::zeros(y);
        for j in 0..y {
            extracted.set_bit(j, table.rows[row][j].bit(1));
        }
        v2[i] = extracted == expected;
    }

    let localized = (0..v)
        .filter(|&i| !v2[i])
        .flat_map(|i| (0..y).filter(|&j| !v1[j]).map(move |j| (i, j)))
        .collect();

    VerificationVectors {
        v1,
        v1_raw,
        v2,
        localized,
    }
}

/// Failure pattern of one group, used for both report classification and
/// recovery routing.
pub(crate) fn group_pattern(vectors: &VerificationVectors) -> Classification {
    let y = vectors.v1.len();
    let raw_false = vectors.v1_raw.iter().filter(|&&b| !b).count();
    let rows_false = vectors.v2.iter().filter(|&&b| !b).count();
    if raw_false == 0 && rows_false == 0 {
        return Classification::Clean;
    }
    if rows_false == 0 {
        // Every row still authenticates, so the masked data is intact;
        // either stored watermark bits were clipped, or the group's
        // membership changed under it (primary-key tamper).
        return if raw_false >= dense_failure_threshold(y) {
            Classification::GroupStructure
        } else {
            Classification::LowBitOnly
        };
    }
    if raw_false == 0 {
        // Rows fail but every column authenticates: tuple-watermark bits
        // were clipped, or a masked change hid inside a fold collision.
        return Classification::LowBitOnly;
    }
    let post_false = vectors.v1.iter().filter(|&&b| !b).count();
    if post_false == 1 && rows_false == 1 {
        Classification::SingleCell
    } else {
        Classification::MultiCell
    }
}

fn classify_table(patterns: &[Classification]) -> Classification {
    let non_clean: Vec<Classification> = patterns
        .iter()
        .copied()
        .filter(|&p| p != Classification::Clean)
        .collect();
    if non_clean.is_empty() {
        Classification::Clean
    } else if non_clean.contains(&Classification::GroupStructure) {
        Classification::GroupStructure
    } else if non_clean.iter().all(|&p| p == Classification::LowBitOnly) {
        Classification::LowBitOnly
    } else if non_clean.iter().all(|&p| p == Classification::SingleCell) {
        Classification::SingleCell
    } else {
        Classification::MultiCell
    }
}

pub(crate) fn localized_refs(
    table: &Table,
    group: &Group,
    vectors: &VerificationVectors,
) -> Vec<CellRef> {
    vectors
        .localized
        .iter()
        .map(|&(i, j)| CellRef {
            pk: table.keys[group.members[i]].render(),
            column: table.schema.columns[j].name.clone(),
        })
        .collect()
}

/// Verify a whole table and classify what happened to it.
pub fn verify_table(table: &Table, params: &Params) -> Result<TamperReport> {
    table.validate()?;
    let groups = partition(table, params)?;
    let mut reports = Vec::with_capacity(groups.len());
    let mut patterns = Vec::with_capacity(groups.len());
    for group in &groups {
        let vectors = verify_group(&params.key, table, group);
        let pattern = group_pattern(&vectors);
        patterns.push(pattern);
        reports.push(GroupReport {
            index: group.index,
            size: group.size(),
            localized: localized_refs(table, group, &vectors),
            v1: vectors.v1,
            v1_raw: vectors.v1_raw,
            v2: vectors.v2,
            status: pattern,
        });
    }
    Ok(TamperReport {
        classification: classify_table(&patterns),
        groups: reports,
    })
}
