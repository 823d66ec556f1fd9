//! Watermark computation and embedding (bit 0: attribute, bit 1: tuple).
//!
//! For a group of `v` rows and `y` columns the watermark grid is:
//!
//! * attribute watermark `W1[j]` (`v` bits): keyed material for `(group, j)`
//!   XORed with the `v`-bit fold of every member's masked word in column `j`;
//!   bit `i` is stored at bit 0 of cell `(i, p(j))`.
//! * tuple watermark `W2[i]` (`y` bits): keyed digest of row `i`'s masked
//!   words; bit `j` is stored at bit 1 of cell `(i, j)`.
//!
//! Because every digest and fold reads `masked()` words, writing the two low
//! bits never changes any watermark input: all watermarks are computed from a
//! snapshot before the first write, and re-computing them on the embedded
//! table reproduces them exactly.

use crate::bitcodec::{extract_bits, fold_word, BitString};
use crate::crypto::{
    index_bytes, keyed_digest, word_bytes, SecretKey, TAG_ATTRIBUTE_KEY, TAG_TUPLE_HASH,
};
use crate::error::Result;
use crate::grouping::{partition, permute};
use crate::model::{Group, Params, Table, WatermarkSet};

/// Keyed material for the attribute watermark of `(group, column)`, already
/// stretched to the group size `v`.
pub fn attribute_keymat(key: &SecretKey, group_index: u32, column: usize, v: usize) -> BitString {
    let digest = keyed_digest(
        key,
        TAG_ATTRIBUTE_KEY,
        &[&index_bytes(group_index), &index_bytes(column as u32)],
    );
    extract_bits(&digest.bits(), v)
}

/// Attribute watermark `W1[column]` of a non-empty group.
pub fn attribute_watermark(
    key: &SecretKey,
    table: &Table,
    group: &Group,
    column: usize,
) -> BitString {
    let v = group.size();
    let mut wm = attribute_keymat(key, group.index, column, v);
    let mut acc = 0u64;
    for &row in &group.members {
        acc ^= fold_word(table.rows[row][column].masked(), v);
    }
    wm.xor_word(acc);
    wm
}

/// Tuple watermark `W2[member]` of a group: keyed digest of the row's masked
/// words in column order, stretched to `y` bits.
pub fn tuple_watermark(key: &SecretKey, table: &Table, group: &Group, member: usize) -> BitString {
    let row = group.members[member];
    let parts: Vec<[u8; 8]> = table.rows[row]
        .iter()
        .map(|cell| word_bytes(cell.masked()))
        .collect();
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    let digest = keyed_digest(key, TAG_TUPLE_HASH, &refs);
    extract_bits(&digest.bits(), table.schema.column_count())
}

/// All watermarks of a group, computed from the current masked words.
pub fn group_watermarks(key: &SecretKey, table: &Table, group: &Group) -> WatermarkSet {
    let y = table.schema.column_count();
    WatermarkSet {
        attribute: (0..y)
            .map(|j| attribute_watermark(key, table, group, j))
            .collect(),
        tuple: (0..group.size())
            .map(|i| tuple_watermark(key, table, group, i))
            .collect(),
    }
}

/// Write a group's watermark bits into the table, bit 0 of column `p(j)` and
/// bit 1 of column `j`. Only bits 0 and 1 change.
pub fn write_group_watermarks(table: &mut Table, group: &Group, set: &WatermarkSet) {
    let y = table.schema.column_count();
    for j in 0..y {
        let target = permute(j, group.shift, y);
        for (i, &row) in group.members.iter().enumerate() {
            let cell = table.rows[row][target];
            table.rows[row][target] = cell.with_bit(0, set.attribute[j].bit(i));
        }
    }
    for (i, &row) in group.members.iter().enumerate() {
        for j in 0..y {
            let cell = table.rows[row][j];
            table.rows[row][j] = cell.with_bit(1, set.tuple[i].bit(j));
        }
    }
}

/// Compute and write all watermarks of one group.
pub fn embed_group(table: &mut Table, group: &Group, key: &SecretKey) {
    if group.members.is_empty() {
        return;
    }
    let set = group_watermarks(key, table, group);
    write_group_watermarks(table, group, &set);
}

/// Embedding statistics for operator output.
#[derive(Debug, Clone)]
pub struct EmbedSummary {
    pub rows: usize,
    pub groups: u32,
    pub min_group_size: usize,
    pub max_group_size: usize,
    /// Largest whole-word change introduced anywhere (at most 3).
    pub max_distortion: u64,
}

/// Watermark an entire table: keyed partition, then per-group embedding.
/// Physical row order, primary keys, and masked data are untouched.
pub fn embed_table(table: &Table, params: &Params) -> Result<(Table, EmbedSummary)> {
    table.validate()?;
    let groups = partition(table, params)?;
    let mut out = table.clone();
    for group in &groups {
        embed_group(&mut out, group, &params.key);
    }
    let max_distortion = table
        .rows
        .iter()
        .zip(&out.rows)
        .flat_map(|(before, after)| {
            before
                .iter()
                .zip(after)
                .map(|(b, a)| a.0.abs_diff(b.0))
        })
        .max()
        .unwrap_or(0);
    let sizes: Vec<usize> = groups.iter().map(Group::size).collect();
    let summary = EmbedSummary {
        rows: table.row_count(),
        groups: params.groups,
        min_group_size: sizes.iter().copied().min().unwrap_or(0),
        max_group_size: sizes.iter().copied().max().unwrap_or(0),
        max_distortion,
    };
    Ok((out, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcodec::{CellWord, ColumnSpec};
    use crate::model::{KeyKind, KeyValue, PrimaryKeySpec, Schema};
    use crate::verify::verify_group;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_key() -> SecretKey {
        SecretKey::from_bytes((0..16).collect()).unwrap()
    }

    fn table_from_words(words: Vec<Vec<u64>>, width: u32) -> Table {
        let columns = words[0].len();
        Table {
            schema: Schema {
                primary_key: PrimaryKeySpec {
                    name: "id".into(),
                    kind: KeyKind::Integer,
                },
                columns: (0..columns)
                    .map(|j| ColumnSpec::integer(format!("a{}", j + 1)).with_width_bits(width))
                    .collect(),
            },
            keys: (0..words.len() as i64).map(KeyValue::Integer).collect(),
            rows: words
                .into_iter()
                .map(|row| row.into_iter().map(CellWord).collect())
                .collect(),
        }
    }

    fn single_group(table: &Table, key: &SecretKey) -> Group {
        let params = Params::new(key.clone(), 1).unwrap();
        partition(table, &params).unwrap().remove(0)
    }

    #[test]
    fn zero_masked_cells_yield_the_keymat() {
        let key = test_key();
        // Words 0..3 all mask to zero.
        let table = table_from_words(vec![vec![1, 2], vec![3, 0], vec![2, 1]], 16);
        let group = single_group(&table, &key);
        for j in 0..2 {
            assert_eq!(
                attribute_watermark(&key, &table, &group, j),
                attribute_keymat(&key, group.index, j, 3)
            );
        }
    }

    #[test]
    fn fold_contributions_cancel_in_pairs() {
        let key = test_key();
        // 4 ^ 8 ^ 12 = 0 at any fold width, so the watermark is pure keymat.
        let table = table_from_words(vec![vec![4, 0], vec![8, 0], vec![12, 0]], 16);
        let group = single_group(&table, &key);
        assert_eq!(
            attribute_watermark(&key, &table, &group, 0),
            attribute_keymat(&key, group.index, 0, 3)
        );
    }

    #[test]
    fn tuple_watermark_ignores_low_bits_and_sees_masked_bits() {
        let key = test_key();
        let mut table = table_from_words(vec![vec![100, 200, 300], vec![40, 52, 64]], 32);
        let group = single_group(&table, &key);
        let before = tuple_watermark(&key, &table, &group, 0);

        // Bits 0-1 are invisible to the digest.
        let row = group.members[0];
        table.rows[row][1] = table.rows[row][1].with_bit(0, 1).with_bit(1, 1);
        assert_eq!(tuple_watermark(&key, &table, &group, 0), before);

        // A masked-bit change almost surely lands elsewhere.
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let y = 10;
        let wide = table_from_words(
            vec![(0..y).map(|j| 1000 + 8 * j as u64).collect::<Vec<_>>()],
            32,
        );
        let wide_group = single_group(&wide, &key);
        let baseline = tuple_watermark(&key, &wide, &wide_group, 0);
        let mut changed = 0;
        for _ in 0..1_000 {
            let mut flipped = wide.clone();
            let col = rng.random_range(0..y as usize);
            let bit = rng.random_range(2u32..32);
            flipped.rows[0][col] = CellWord(flipped.rows[0][col].0 ^ (1 << bit));
            if tuple_watermark(&key, &flipped, &wide_group, 0) != baseline {
                changed += 1;
            }
        }
        assert!(changed >= 990, "only {changed}/1000 flips changed the digest");
    }

    #[test]
    fn tuple_watermark_stretches_past_the_digest_periodically() {
        let key = test_key();
        let y = 300;
        let table = table_from_words(vec![(0..y).map(|j| 4 * j as u64).collect()], 32);
        let group = single_group(&table, &key);
        let wm = tuple_watermark(&key, &table, &group, 0);
        assert_eq!(wm.len(), 300);
        for i in 0..(300 - 256) {
            assert_eq!(wm.bit(256 + i), wm.bit(i), "period break at {i}");
        }
    }

    #[test]
    fn embedding_round_trips_through_verification() {
        let key = test_key();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<u64>> = (0..20)
            .map(|_| (0..5).map(|_| rng.random_range(0u64..1 << 20)).collect())
            .collect();
        let table = table_from_words(rows, 32);
        let params = Params::new(key.clone(), 3).unwrap();
        let (embedded, summary) = embed_table(&table, &params).unwrap();
        assert!(summary.max_distortion <= 3);
        for group in partition(&embedded, &params).unwrap() {
            assert!(verify_group(&key, &embedded, &group).is_clean());
        }
    }

    #[test]
    fn embedding_is_idempotent() {
        let key = test_key();
        let table = table_from_words(
            vec![vec![11, 22, 33], vec![44, 55, 66], vec![77, 88, 99]],
            16,
        );
        let params = Params::new(key, 2).unwrap();
        let (once, _) = embed_table(&table, &params).unwrap();
        let (twice, _) = embed_table(&once, &params).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn embedding_touches_only_watermark_bits() {
        let key = test_key();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rows: Vec<Vec<u64>> = (0..50)
            .map(|_| (0..4).map(|_| rng.random_range(0u64..1 << 30)).collect())
            .collect();
        let table = table_from_words(rows, 32);
        let params = Params::new(key, 5).unwrap();
        let (embedded, _) = embed_table(&table, &params).unwrap();
        assert_eq!(embedded.keys, table.keys);
        for (before, after) in table.rows.iter().zip(&embedded.rows) {
            for (b, a) in before.iter().zip(after) {
                assert_eq!(a.masked(), b.masked());
                assert!(a.0.abs_diff(b.0) <= 3);
            }
        }
    }

    #[test]
    fn stored_column_bits_equal_the_attribute_watermark() {
        // The grid property: bit 0 of column p(j) spells W1[j].
        let key = test_key();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rows: Vec<Vec<u64>> = (0..12)
            .map(|_| (0..6).map(|_| rng.random_range(0u64..1 << 24)).collect())
            .collect();
        let table = table_from_words(rows, 32);
        let params = Params::new(key.clone(), 2).unwrap();
        let (embedded, _) = embed_table(&table, &params).unwrap();
        for group in partition(&embedded, &params).unwrap() {
            let y = 6;
            for j in 0..y {
                let expected = attribute_watermark(&key, &embedded, &group, j);
                let target = permute(j, group.shift, y);
                for (i, &row) in group.members.iter().enumerate() {
                    assert_eq!(embedded.rows[row][target].bit(0), expected.bit(i));
                }
            }
        }
    }

    #[test]
    fn singleton_groups_embed_and_verify() {
        let key = test_key();
        let table = table_from_words(vec![vec![123, 456]], 32);
        let params = Params::new(key.clone(), 1).unwrap();
        let (embedded, _) = embed_table(&table, &params).unwrap();
        let group = single_group(&embedded, &key);
        assert_eq!(group.size(), 1);
        assert!(verify_group(&key, &embedded, &group).is_clean());
    }
}
