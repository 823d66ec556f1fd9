//! True-data recovery for localized tampering.
//!
//! The attribute watermark is an XOR accumulation: key material XORed with
//! the fold of every member's masked word. Removing every untampered member's
//! fold from the stored watermark leaves exactly the tampered cell's original
//! fold, so a single modified cell per group can be rebuilt outright whenever
//! the fold lost no information (masked value below `2^v`).
//!
//! Recovery never trusts its own arithmetic: a rebuilt cell is accepted only
//! if a full re-verification of the group comes back clean, otherwise the
//! group is rolled back and reported. Tampers that left every masked word
//! intact (watermark-bit clipping, or a mislocalization provably caused by a
//! single damaged stored bit) are repaired by re-embedding the group, which
//! rewrites only bits 0 and 1.

use crate::bitcodec::{fold_word, BitString, CellWord};
use crate::crypto::SecretKey;
use crate::embed::{attribute_keymat, attribute_watermark, group_watermarks, tuple_watermark, write_group_watermarks};
use crate::error::Result;
use crate::grouping::{partition, permute, permute_inv};
use crate::model::{
    Classification, Group, GroupRecovery, Params, RecoveredCell, RecoveryReport, RecoveryStatus,
    Table, VerificationVectors,
};
use crate::verify::{group_pattern, localized_refs, verify_group};

fn snapshot_group(table: &Table, group: &Group) -> Vec<Vec<CellWord>> {
    group
        .members
        .iter()
        .map(|&row| table.rows[row].clone())
        .collect()
}

fn restore_group(table: &mut Table, group: &Group, snapshot: &[Vec<CellWord>]) {
    for (&row, words) in group.members.iter().zip(snapshot) {
        table.rows[row] = words.clone();
    }
}

fn changed_cells(
    table: &Table,
    group: &Group,
    before: &[Vec<CellWord>],
) -> Vec<RecoveredCell> {
    let mut cells = Vec::new();
    for (m, &row) in group.members.iter().enumerate() {
        for (j, (old, new)) in before[m].iter().zip(&table.rows[row]).enumerate() {
            if old != new {
                cells.push(RecoveredCell {
                    pk: table.keys[row].render(),
                    column: table.schema.columns[j].name.clone(),
                    old_word: old.0,
                    new_word: new.0,
                });
            }
        }
    }
    cells
}

/// Re-embed every watermark bit of the group from its current masked words.
/// Only bits 0 and 1 may change; returns `RecoveredLowBits` when the group
/// re-verifies clean afterwards.
fn low_bit_repair(table: &mut Table, group: &Group, key: &SecretKey) -> (RecoveryStatus, Vec<RecoveredCell>) {
    let before = snapshot_group(table, group);
    let set = group_watermarks(key, table, group);
    write_group_watermarks(table, group, &set);

    let masked_intact = group
        .members
        .iter()
        .zip(&before)
        .all(|(&row, old)| {
            table.rows[row]
                .iter()
                .zip(old)
                .all(|(new, old)| new.masked() == old.masked())
        });
    if masked_intact && verify_group(key, table, group).is_clean() {
        let cells = changed_cells(table, group, &before);
        (RecoveryStatus::RecoveredLowBits, cells)
    } else {
        restore_group(table, group, &before);
        (RecoveryStatus::Failed, Vec::new())
    }
}

/// Rebuild the single localized cell through XOR heredity and re-verify.
fn recover_single_cell(
    table: &mut Table,
    group: &Group,
    key: &SecretKey,
    vectors: &VerificationVectors,
) -> (RecoveryStatus, Vec<RecoveredCell>) {
    let y = table.schema.column_count();
    let v = group.size();
    let column = vectors.v1.iter().position(|&ok| !ok).expect("one false column");
    let member = vectors.v2.iter().position(|&ok| !ok).expect("one false row");
    let row = group.members[member];
    let spec = &table.schema.columns[column];

    // Accumulate key material plus every other member's fold; XOR against the
    // stored watermark leaves the tampered cell's original fold.
    let mut accumulator = attribute_keymat(key, group.index, column, v);
    let mut acc_folds = 0u64;
    for (i, &r) in group.members.iter().enumerate() {
        if i != member {
            acc_folds ^= fold_word(table.rows[r][column].masked(), v);
        }
    }
    accumulator.xor_word(acc_folds);

    let stored_in = permute(column, group.shift, y);
    let mut stored = BitString::zeros(v);
    for (i, &r) in group.members.iter().enumerate() {
        stored.set_bit(i, table.rows[r][stored_in].bit(0));
    }
    stored.xor_assign(&accumulator);
    let candidate_fold = stored;

    // If the candidate differs from the cell's own fold by exactly one bit,
    // the localization itself was misdirected: a single damaged stored bit in
    // column p(column) fails this column while the data here is intact. The
    // masked words then carry no damage at all, so re-embedding repairs the
    // group. Checked only after reconstruction is off the table.
    let current_fold = fold_word(table.rows[row][column].masked(), v);
    let misdirection_evidence = || {
        let mut delta = candidate_fold.clone();
        delta.xor_word(current_fold);
        delta.count_ones() == 1
    };

    let reconstructed = candidate_fold.to_word().filter(|&m| {
        m & 0b11 == 0 && (spec.width_bits == 64 || m < (1u64 << spec.width_bits))
    });

    let Some(masked_value) = reconstructed else {
        return if misdirection_evidence() {
            low_bit_repair(table, group, key)
        } else {
            (RecoveryStatus::Failed, Vec::new())
        };
    };

    let before = snapshot_group(table, group);
    table.rows[row][column] = CellWord(masked_value);
    // Re-stamp the rebuilt cell's own watermark bits from recomputed marks.
    let owner = permute_inv(column, group.shift, y);
    let bit0 = attribute_watermark(key, table, group, owner).bit(member);
    table.rows[row][column] = table.rows[row][column].with_bit(0, bit0);
    let bit1 = tuple_watermark(key, table, group, member).bit(column);
    table.rows[row][column] = table.rows[row][column].with_bit(1, bit1);

    if verify_group(key, table, group).is_clean() {
        let cells = changed_cells(table, group, &before);
        (RecoveryStatus::RecoveredExact, cells)
    } else {
        restore_group(table, group, &before);
        if misdirection_evidence() {
            low_bit_repair(table, group, key)
        } else {
            (RecoveryStatus::Failed, Vec::new())
        }
    }
}

/// Attempt recovery of one group in place.
pub fn recover_group(table: &mut Table, group: &Group, key: &SecretKey) -> GroupRecovery {
    let vectors = verify_group(key, table, group);
    let localized = localized_refs(table, group, &vectors);
    let (status, recovered) = match group_pattern(&vectors) {
        Classification::Clean => (RecoveryStatus::Clean, Vec::new()),
        // Suspected primary-key modification: the data may be authentic in a
        // different group; re-stamping here would bless the moved key.
        Classification::GroupStructure => (RecoveryStatus::LocalizedOnly, Vec::new()),
        Classification::LowBitOnly => low_bit_repair(table, group, key),
        Classification::SingleCell => recover_single_cell(table, group, key, &vectors),
        Classification::MultiCell => (RecoveryStatus::LocalizedOnly, Vec::new()),
    };
    GroupRecovery {
        index: group.index,
        size: group.size(),
        status,
        localized,
        recovered,
    }
}

/// Recover a whole table: verify, repair what is repairable, report the rest.
/// Untouched groups are copied verbatim.
pub fn recover_table(table: &Table, params: &Params) -> Result<(Table, RecoveryReport)> {
    table.validate()?;
    let groups = partition(table, params)?;
    let mut out = table.clone();
    let outcomes = groups
        .iter()
        .map(|group| recover_group(&mut out, group, &params.key))
        .collect();
    Ok((out, RecoveryReport::from_groups(outcomes)))
}
