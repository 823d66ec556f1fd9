//! gridmark: fragile watermarking for CSV tables.
//!
//! Subcommands: `keygen`, `embed`, `verify`, `recover`, `experiment`.
//!
//! Exit codes across all subcommands:
//!   0  success / clean
//!   1  tampering detected (`verify`)
//!   2  recovery incomplete: some group failed or was only localized (`recover`)
//!   3  usage or I/O error

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use rand::RngExt;

use gridmark::crypto::SecretKey;
use gridmark::embed::embed_table;
use gridmark::experiment::{emit_results, run_grid_point, ResultRow, TrialConfig};
use gridmark::model::Params;
use gridmark::recover::recover_table;
use gridmark::tableio::{load_table, read_config, save_table, Config};
use gridmark::verify::verify_table;

/// Environment variable naming a default key file.
const KEY_FILE_ENV: &str = "GRIDMARK_KEY_FILE";

#[derive(Parser)]
#[command(name = "gridmark", version, about = "Fragile watermarking for tabular data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random key and write it as lowercase hex.
    Keygen {
        /// Key length in bytes (minimum 16).
        #[arg(long, default_value_t = 32)]
        bytes: usize,
        /// Output key file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Watermark a CSV table.
    Embed {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        /// Key as lowercase hex (prefer --key-file to keep keys out of shell history).
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        key_file: Option<PathBuf>,
        /// Number of groups; falls back to the schema config's "groups".
        #[arg(long)]
        groups: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a watermarked CSV table and localize modifications.
    Verify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        key_file: Option<PathBuf>,
        #[arg(long)]
        groups: Option<u32>,
        /// Write the tamper report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recover true data from localized modifications.
    Recover {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        key_file: Option<PathBuf>,
        #[arg(long)]
        groups: Option<u32>,
        #[arg(long)]
        out: PathBuf,
        /// Write the recovery report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Measure single-cell recovery failure probability over a (v, y) grid.
    Experiment {
        /// Group sizes to sweep, comma separated.
        #[arg(long = "rows-per-group", value_delimiter = ',', default_values_t = vec![10, 30, 50])]
        rows_per_group: Vec<usize>,
        /// Column counts to sweep, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10, 20, 30, 40, 50])]
        columns: Vec<usize>,
        /// Trials per grid cell.
        #[arg(long, default_value_t = 10_000)]
        trials: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Uniform value range as LO..HI (HI exclusive).
        #[arg(long, default_value = "4..1000")]
        range: String,
        /// Results CSV path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 3,
            };
            let _ = err.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            3
        }
    }
}

fn run(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Keygen { bytes, out } => cmd_keygen(bytes, &out),
        Command::Embed {
            input,
            schema,
            key,
            key_file,
            groups,
            out,
        } => cmd_embed(&input, &schema, key, key_file, groups, &out),
        Command::Verify {
            input,
            schema,
            key,
            key_file,
            groups,
            report,
        } => cmd_verify(&input, &schema, key, key_file, groups, report.as_deref()),
        Command::Recover {
            input,
            schema,
            key,
            key_file,
            groups,
            out,
            report,
        } => cmd_recover(&input, &schema, key, key_file, groups, &out, report.as_deref()),
        Command::Experiment {
            rows_per_group,
            columns,
            trials,
            seed,
            range,
            out,
        } => cmd_experiment(rows_per_group, columns, trials, seed, &range, &out),
    }
}

fn cmd_keygen(bytes: usize, out: &Path) -> anyhow::Result<i32> {
    if bytes < 16 {
        return Err(anyhow!("key length {bytes} is below the 16-byte minimum"));
    }
    let mut key = vec![0u8; bytes];
    rand::rng().fill(&mut key[..]);
    fs::write(out, format!("{}\n", hex::encode(&key)))
        .with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}-byte key to {}", bytes, out.display());
    Ok(0)
}

/// Key precedence: --key, then --key-file, then $GRIDMARK_KEY_FILE, then the
/// schema config's "key" field.
fn resolve_key(
    key: Option<String>,
    key_file: Option<PathBuf>,
    config: &Config,
) -> anyhow::Result<SecretKey> {
    if let Some(hex_text) = key {
        return Ok(SecretKey::from_hex(&hex_text)?);
    }
    let env_file = std::env::var_os(KEY_FILE_ENV).map(PathBuf::from);
    if let Some(path) = key_file.or(env_file) {
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading key file {}", path.display()))?;
        return Ok(SecretKey::from_hex(text.trim())?);
    }
    config
        .key
        .clone()
        .ok_or_else(|| anyhow!("no key given: use --key, --key-file, ${KEY_FILE_ENV}, or \"key\" in the schema config"))
}

fn resolve_params(
    key: Option<String>,
    key_file: Option<PathBuf>,
    groups: Option<u32>,
    config: &Config,
) -> anyhow::Result<Params> {
    let key = resolve_key(key, key_file, config)?;
    let groups = groups
        .or(config.groups)
        .ok_or_else(|| anyhow!("no group count given: use --groups or \"groups\" in the schema config"))?;
    Ok(Params::new(key, groups)?)
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_embed(
    input: &Path,
    schema: &Path,
    key: Option<String>,
    key_file: Option<PathBuf>,
    groups: Option<u32>,
    out: &Path,
) -> anyhow::Result<i32> {
    let config = read_config(schema)?;
    let params = resolve_params(key, key_file, groups, &config)?;
    let table = load_table(input, &config.schema)?;
    if params.groups as usize > table.row_count() {
        eprintln!(
            "warning: {} groups for {} rows; some groups will be empty",
            params.groups,
            table.row_count()
        );
    }
    let (watermarked, summary) = embed_table(&table, &params)?;
    save_table(&watermarked, out)?;
    println!(
        "embedded {} rows into {} groups (sizes {}..{}), max distortion {} word units",
        summary.rows, summary.groups, summary.min_group_size, summary.max_group_size, summary.max_distortion
    );
    Ok(0)
}

fn cmd_verify(
    input: &Path,
    schema: &Path,
    key: Option<String>,
    key_file: Option<PathBuf>,
    groups: Option<u32>,
    report_path: Option<&Path>,
) -> anyhow::Result<i32> {
    let config = read_config(schema)?;
    let params = resolve_params(key, key_file, groups, &config)?;
    let table = load_table(input, &config.schema)?;
    let report = verify_table(&table, &params)?;
    if let Some(path) = report_path {
        write_json(&report, path)?;
    }
    let localized: usize = report.groups.iter().map(|g| g.localized.len()).sum();
    println!(
        "classification: {}; {} group(s), {} localized cell(s)",
        serde_json::to_value(report.classification)?
            .as_str()
            .unwrap_or("?"),
        report.groups.len(),
        localized
    );
    for group in report.groups.iter().filter(|g| !g.localized.is_empty()) {
        for cell in &group.localized {
            println!("  group {}: pk {} column {}", group.index, cell.pk, cell.column);
        }
    }
    Ok(if report.is_clean() { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn cmd_recover(
    input: &Path,
    schema: &Path,
    key: Option<String>,
    key_file: Option<PathBuf>,
    groups: Option<u32>,
    out: &Path,
    report_path: Option<&Path>,
) -> anyhow::Result<i32> {
    let config = read_config(schema)?;
    let params = resolve_params(key, key_file, groups, &config)?;
    let table = load_table(input, &config.schema)?;
    let (recovered, report) = recover_table(&table, &params)?;
    save_table(&recovered, out)?;
    if let Some(path) = report_path {
        write_json(&report, path)?;
    }
    println!(
        "groups: {} clean, {} recovered-exact, {} recovered-lowbits, {} localized-only, {} failed",
        report.clean,
        report.recovered_exact,
        report.recovered_lowbits,
        report.localized_only,
        report.failed
    );
    Ok(if report.is_fully_resolved() { 0 } else { 2 })
}

fn parse_range(text: &str) -> anyhow::Result<(i64, i64)> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| anyhow!("range must look like LO..HI, got {text:?}"))?;
    Ok((
        lo.trim().parse().context("range low bound")?,
        hi.trim().parse().context("range high bound")?,
    ))
}

fn cmd_experiment(
    rows_per_group: Vec<usize>,
    columns: Vec<usize>,
    trials: u32,
    seed: u64,
    range: &str,
    out: &Path,
) -> anyhow::Result<i32> {
    let (value_lo, value_hi) = parse_range(range)?;
    let config = TrialConfig {
        group_sizes: rows_per_group,
        column_counts: columns,
        trials,
        value_lo,
        value_hi,
        seed,
    };
    config.validate()?;

    let mut sizes = config.group_sizes.clone();
    sizes.sort_unstable();
    let mut column_counts = config.column_counts.clone();
    column_counts.sort_unstable();

    let mut rows: Vec<ResultRow> = Vec::with_capacity(sizes.len() * column_counts.len());
    for &v in &sizes {
        for &y in &column_counts {
            let stats = run_grid_point(&config, v, y);
            eprintln!(
                "v={v} y={y}: {}/{} failures (p={}), detected {}/{}",
                stats.row.failures, stats.row.trials, stats.row.failure_probability,
                stats.detected, stats.row.trials
            );
            if stats.exact_mismatches > 0 {
                eprintln!(
                    "warning: v={v} y={y}: {} recovered-exact outcome(s) disagreed with ground truth",
                    stats.exact_mismatches
                );
            }
            rows.push(stats.row);
        }
    }
    emit_results(&rows, out)?;
    println!("wrote {} grid rows to {}", rows.len(), out.display());
    Ok(0)
}
