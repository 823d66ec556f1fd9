//! CSV ingestion and persistence plus the JSON schema/parameter config.
//!
//! Data travels as plain CSV with a mandatory header, the primary key first.
//! The schema lives in a separate JSON document so the same file can be read
//! under different widths and scales. Rendering is canonical: decimal columns
//! always print exactly `scale` fractional digits, so a load/save round trip
//! is byte-stable.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::bitcodec::{decode_cell, encode_cell, ColumnKind, ColumnSpec, DEFAULT_WIDTH_BITS};
use crate::crypto::SecretKey;
use crate::error::{Error, Result};
use crate::model::{KeyKind, KeyValue, PrimaryKeySpec, Schema, Table};

/// Parsed configuration: the schema plus whatever parameters the file pinned.
#[derive(Debug, Clone)]
pub struct Config {
    pub schema: Schema,
    pub groups: Option<u32>,
    pub key: Option<SecretKey>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigJson {
    primary_key: PrimaryKeyJson,
    columns: Vec<ColumnJson>,
    #[serde(default)]
    groups: Option<u32>,
    #[serde(default)]
    key: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimaryKeyJson {
    name: String,
    kind: KeyKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ColumnJson {
    name: String,
    kind: ColumnKind,
    #[serde(default)]
    scale: Option<u32>,
    #[serde(default)]
    width_bits: Option<u32>,
}

/// Parse the JSON schema/params document, applying defaults
/// (`scale = 0`, `width_bits = 32`) and enforcing every invariant.
pub fn parse_schema(text: &str) -> Result<Config> {
    let raw: ConfigJson =
        serde_json::from_str(text).map_err(|e| Error::ConfigJson(e.to_string()))?;
    let columns = raw
        .columns
        .into_iter()
        .map(|c| ColumnSpec {
            name: c.name,
            kind: c.kind,
            scale: c.scale.unwrap_or(0),
            width_bits: c.width_bits.unwrap_or(DEFAULT_WIDTH_BITS),
        })
        .collect();
    let schema = Schema {
        primary_key: PrimaryKeySpec {
            name: raw.primary_key.name,
            kind: raw.primary_key.kind,
        },
        columns,
    };
    schema.validate()?;
    if let Some(groups) = raw.groups {
        if groups < 1 {
            return Err(Error::Schema("group count must be at least 1".into()));
        }
    }
    let key = raw.key.as_deref().map(SecretKey::from_hex).transpose()?;
    Ok(Config {
        schema,
        groups: raw.groups,
        key,
    })
}

/// Read a schema config from a file.
pub fn read_config(path: impl AsRef<Path>) -> Result<Config> {
    parse_schema(&fs::read_to_string(path)?)
}

fn parse_key_value(text: &str, kind: KeyKind, row: usize, column: &str) -> Result<KeyValue> {
    match kind {
        KeyKind::Integer => text
            .trim()
            .parse::<i64>()
            .map(KeyValue::Integer)
            .map_err(|_| Error::Cell {
                row,
                column: column.to_string(),
                detail: format!("cannot parse {text:?} as an integer key"),
            }),
        KeyKind::Text => {
            if text.is_empty() {
                Err(Error::Cell {
                    row,
                    column: column.to_string(),
                    detail: "empty primary key".into(),
                })
            } else {
                Ok(KeyValue::Text(text.to_string()))
            }
        }
    }
}

/// Load a CSV table under a schema. The header must match the schema exactly,
/// primary key first; every cell is encoded into its column's word format.
pub fn load_table_from_reader(reader: impl Read, schema: &Schema) -> Result<Table> {
    schema.validate()?;
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let header = csv_reader.headers()?.clone();
    let expected: Vec<&str> = std::iter::once(schema.primary_key.name.as_str())
        .chain(schema.columns.iter().map(|c| c.name.as_str()))
        .collect();
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::HeaderMismatch(format!(
            "expected {expected:?}, found {got:?}"
        )));
    }

    let mut keys = Vec::new();
    let mut rows = Vec::new();
    for (idx, record) in csv_reader.records().enumerate() {
        let row_number = idx + 1;
        let record = record?;
        let pk_text = record.get(0).ok_or_else(|| Error::Cell {
            row: row_number,
            column: schema.primary_key.name.clone(),
            detail: "missing primary key".into(),
        })?;
        keys.push(parse_key_value(
            pk_text,
            schema.primary_key.kind,
            row_number,
            &schema.primary_key.name,
        )?);

        let mut cells = Vec::with_capacity(schema.columns.len());
        for (j, spec) in schema.columns.iter().enumerate() {
            let text = record.get(j + 1).ok_or_else(|| Error::Cell {
                row: row_number,
                column: spec.name.clone(),
                detail: "missing value".into(),
            })?;
            if text.trim().is_empty() {
                return Err(Error::Cell {
                    row: row_number,
                    column: spec.name.clone(),
                    detail: "missing value".into(),
                });
            }
            let word = encode_cell(text, spec).map_err(|e| Error::Cell {
                row: row_number,
                column: spec.name.clone(),
                detail: e.to_string(),
            })?;
            cells.push(word);
        }
        rows.push(cells);
    }

    let table = Table {
        schema: schema.clone(),
        keys,
        rows,
    };
    table.validate()?;
    Ok(table)
}

pub fn load_table(path: impl AsRef<Path>, schema: &Schema) -> Result<Table> {
    load_table_from_reader(fs::File::open(path)?, schema)
}

/// Write a table as canonical CSV: UTF-8, LF line endings, quoting only where
/// needed, decimals with exactly `scale` fractional digits.
pub fn save_table_to_writer(table: &Table, writer: impl Write) -> Result<()> {
    let mut csv_writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let header: Vec<&str> = std::iter::once(table.schema.primary_key.name.as_str())
        .chain(table.schema.columns.iter().map(|c| c.name.as_str()))
        .collect();
    csv_writer.write_record(&header)?;
    for (key, row) in table.keys.iter().zip(&table.rows) {
        let mut record = Vec::with_capacity(row.len() + 1);
        record.push(key.render());
        for (word, spec) in row.iter().zip(&table.schema.columns) {
            record.push(decode_cell(*word, spec));
        }
        csv_writer.write_record(&record)?;
    }
    csv_writer.flush()?;
    Ok(())
}

pub fn save_table(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    save_table_to_writer(table, fs::File::create(path)?)
}

/// Render a table to a CSV string (used by tests and diffing).
pub fn table_to_csv_string(table: &Table) -> Result<String> {
    let mut buf = Vec::new();
    save_table_to_writer(table, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Schema(format!("non-utf8 output: {e}")))
}
