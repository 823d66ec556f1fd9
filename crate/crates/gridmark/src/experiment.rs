//! Monte-Carlo harness measuring single-cell recovery failure probability
//! over a grid of group sizes and column counts.
//!
//! Each trial builds one group-sized table of uniform integers, watermarks
//! it, replaces one uniformly chosen cell with a fresh uniform value, then
//! runs verification and recovery. The trial fails unless recovery reports
//! `recovered-exact` or `recovered-lowbits` *and* the recovered table is
//! bit-identical to the pre-attack watermarked table.
//!
//! Trials are independent and each derives its generator from
//! `(seed, v, y, trial)`, so results are reproducible regardless of how the
//! trial loop is parallelized.

use std::io::Write;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bitcodec::{decode_scaled, encode_scaled, ColumnSpec};
use crate::crypto::SecretKey;
use crate::embed::embed_table;
use crate::error::{Error, Result};
use crate::model::{KeyKind, KeyValue, Params, PrimaryKeySpec, RecoveryStatus, Schema, Table};
use crate::recover::recover_table;

/// Grid and sampling parameters for the failure-probability sweep.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    /// Group sizes `v` to sweep.
    pub group_sizes: Vec<usize>,
    /// Column counts `y` to sweep.
    pub column_counts: Vec<usize>,
    /// Trials per `(v, y)` grid cell.
    pub trials: u32,
    /// Cell values are drawn uniformly from `[value_lo, value_hi)`.
    pub value_lo: i64,
    pub value_hi: i64,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            group_sizes: vec![10, 30, 50],
            column_counts: vec![10, 20, 30, 40, 50],
            trials: 10_000,
            value_lo: 4,
            value_hi: 1_000,
            seed: 42,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::ExperimentConfig("trials must be at least 1".into()));
        }
        if self.group_sizes.is_empty() || self.column_counts.is_empty() {
            return Err(Error::ExperimentConfig("empty sweep axis".into()));
        }
        if self.group_sizes.iter().any(|&v| v < 1) {
            return Err(Error::ExperimentConfig("group sizes must be positive".into()));
        }
        if self.column_counts.iter().any(|&y| y < 2) {
            return Err(Error::ExperimentConfig(
                "column counts must be at least 2".into(),
            ));
        }
        if self.value_lo < 4 || self.value_hi <= self.value_lo {
            return Err(Error::ExperimentConfig(
                "value range must satisfy 4 <= lo < hi".into(),
            ));
        }
        let min_v = *self.group_sizes.iter().min().expect("non-empty");
        if min_v < 63 && self.value_hi > (1i64 << min_v) {
            return Err(Error::ExperimentConfig(format!(
                "value_hi {} exceeds 2^{min_v}; folds would lose information",
                self.value_hi
            )));
        }
        Ok(())
    }
}

/// One grid cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub v: usize,
    pub y: usize,
    pub trials: u32,
    pub failures: u32,
    pub failure_probability: f64,
}

/// A grid cell plus side diagnostics that are not part of the results file.
#[derive(Debug, Clone)]
pub struct PointStats {
    pub row: ResultRow,
    /// Trials where verification reported anything other than clean.
    pub detected: u32,
    /// Trials where recovery claimed `recovered-exact` yet the output
    /// differed from the pre-attack table. Must stay zero.
    pub exact_mismatches: u32,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial generator seed; a pure function of the coordinates.
pub fn trial_seed(seed: u64, v: usize, y: usize, trial: u32) -> u64 {
    let mut s = splitmix64(seed);
    s = splitmix64(s ^ v as u64);
    s = splitmix64(s ^ y as u64);
    splitmix64(s ^ u64::from(trial))
}

/// Build one group-sized table: `v` rows, `y` 32-bit integer columns,
/// sequential primary keys, values uniform in `[lo, hi)`.
pub fn gen_table(v: usize, y: usize, lo: i64, hi: i64, rng: &mut ChaCha8Rng) -> Table {
    let schema = Schema {
        primary_key: PrimaryKeySpec {
            name: "id".into(),
            kind: KeyKind::Integer,
        },
        columns: (1..=y).map(|j| ColumnSpec::integer(format!("a{j}"))).collect(),
    };
    let spec = &schema.columns[0];
    let rows = (0..v)
        .map(|_| {
            (0..y)
                .map(|_| {
                    encode_scaled(i128::from(rng.random_range(lo..hi)), spec)
                        .expect("range fits 32 bits")
                })
                .collect()
        })
        .collect();
    Table {
        keys: (1..=v as i64).map(KeyValue::Integer).collect(),
        rows,
        schema,
    }
}

/// Ground truth of one injected modification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackInfo {
    pub row: usize,
    pub column: usize,
    pub old_word: u64,
    pub new_word: u64,
}

/// Replace one uniformly chosen non-key cell with a fresh uniform value whose
/// decoded reading differs from the current one.
pub fn attack_single_cell(table: &mut Table, lo: i64, hi: i64, rng: &mut ChaCha8Rng) -> AttackInfo {
    let row = rng.random_range(0..table.row_count());
    let column = rng.random_range(0..table.schema.column_count());
    let spec = &table.schema.columns[column];
    let old = table.rows[row][column];
    let old_value = decode_scaled(old, spec);
    let new = loop {
        let candidate = rng.random_range(lo..hi);
        if candidate != old_value {
            break encode_scaled(i128::from(candidate), spec).expect("range fits 32 bits");
        }
    };
    table.rows[row][column] = new;
    AttackInfo {
        row,
        column,
        old_word: old.0,
        new_word: new.0,
    }
}

struct TrialOutcome {
    failed: bool,
    detected: bool,
    exact_mismatch: bool,
}

fn run_trial(cfg: &TrialConfig, v: usize, y: usize, trial: u32) -> TrialOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.seed, v, y, trial));
    let mut key_bytes = vec![0u8; 32];
    rng.fill(&mut key_bytes[..]);
    let key = SecretKey::from_bytes(key_bytes).expect("32-byte key");
    let params = Params::new(key, 1).expect("one group");

    let table = gen_table(v, y, cfg.value_lo, cfg.value_hi, &mut rng);
    let (watermarked, _) = embed_table(&table, &params).expect("embedding valid table");
    let mut attacked = watermarked.clone();
    attack_single_cell(&mut attacked, cfg.value_lo, cfg.value_hi, &mut rng);

    let (recovered, report) = recover_table(&attacked, &params).expect("recovering valid table");
    let status = report.groups[0].status;
    let equal = recovered == watermarked;
    let repaired = matches!(
        status,
        RecoveryStatus::RecoveredExact | RecoveryStatus::RecoveredLowBits
    );
    TrialOutcome {
        failed: !(repaired && equal),
        detected: status != RecoveryStatus::Clean,
        exact_mismatch: status == RecoveryStatus::RecoveredExact && !equal,
    }
}

/// Run all trials of one `(v, y)` grid cell in parallel.
pub fn run_grid_point(cfg: &TrialConfig, v: usize, y: usize) -> PointStats {
    let (failures, detected, exact_mismatches) = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let outcome = run_trial(cfg, v, y, trial);
            (
                u32::from(outcome.failed),
                u32::from(outcome.detected),
                u32::from(outcome.exact_mismatch),
            )
        })
        .reduce(|| (0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    PointStats {
        row: ResultRow {
            v,
            y,
            trials: cfg.trials,
            failures,
            failure_probability: f64::from(failures) / f64::from(cfg.trials),
        },
        detected,
        exact_mismatches,
    }
}

/// Sweep the whole grid; rows come back sorted by `(v, y)`.
pub fn run_trials(cfg: &TrialConfig) -> Result<Vec<ResultRow>> {
    Ok(run_sweep(cfg)?.into_iter().map(|p| p.row).collect())
}

/// Sweep the whole grid keeping diagnostics.
pub fn run_sweep(cfg: &TrialConfig) -> Result<Vec<PointStats>> {
    cfg.validate()?;
    let mut sizes = cfg.group_sizes.clone();
    sizes.sort_unstable();
    let mut columns = cfg.column_counts.clone();
    columns.sort_unstable();
    let mut out = Vec::with_capacity(sizes.len() * columns.len());
    for &v in &sizes {
        for &y in &columns {
            out.push(run_grid_point(cfg, v, y));
        }
    }
    Ok(out)
}

/// Write the results CSV: `v,y,trials,failures,failure_probability`.
pub fn emit_results_to_writer(rows: &[ResultRow], mut writer: impl Write) -> Result<()> {
    writeln!(writer, "v,y,trials,failures,failure_probability")?;
    for row in rows {
        writeln!(
            writer,
            "{},{},{},{},{}",
            row.v, row.y, row.trials, row.failures, row.failure_probability
        )?;
    }
    Ok(())
}

pub fn emit_results(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    emit_results_to_writer(rows, &mut file)?;
    file.flush()?;
    Ok(())
}
