//! Shipped reference values and cell-by-cell comparison of generated tables.
//!
//! Fixtures are long-format CSV (`table,row,column,value,origin`). A row key
//! is the non-empty identifying cells of a table row joined by `:`, e.g.
//! `VaR:100` or `E[L]/N`. Known discrepancies are listed in `errata.csv`;
//! a flagged cell on that list is reported as expected, nothing else is
//! suppressed.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Result, RiskError};
use crate::tables::TableId;

const T1: &str = include_str!("../fixtures/t1.csv");
const T2: &str = include_str!("../fixtures/t2.csv");
const T3: &str = include_str!("../fixtures/t3.csv");
const T4: &str = include_str!("../fixtures/t4.csv");
const T5: &str = include_str!("../fixtures/t5.csv");
pub const ERRATA_CSV: &str = include_str!("../fixtures/errata.csv");

pub fn fixture_csv(id: TableId) -> &'static str {
    match id {
        TableId::T1 => T1,
        TableId::T2 => T2,
        TableId::T3 => T3,
        TableId::T4 => T4,
        TableId::T5 => T5,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCell {
    pub table: TableId,
    pub row: String,
    pub column: String,
    pub value: f64,
    pub origin: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Erratum {
    pub table: TableId,
    pub row: String,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Match,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellComparison {
    pub table: TableId,
    pub row: String,
    pub column: String,
    /// `None` when the generated table lacks the cell.
    pub generated: Option<f64>,
    pub reference: f64,
    pub tolerance: f64,
    pub status: CellStatus,
    /// Reason from the errata list, when the cell is on it.
    pub erratum: Option<String>,
}

impl CellComparison {
    pub fn is_unexpected(&self) -> bool {
        self.status == CellStatus::Flagged && self.erratum.is_none()
    }
}

/// One entry per reference cell, in fixture order.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DiscrepancyReport {
    pub cells: Vec<CellComparison>,
}

impl DiscrepancyReport {
    pub fn flagged(&self) -> impl Iterator<Item = &CellComparison> {
        self.cells
            .iter()
            .filter(|c| c.status == CellStatus::Flagged)
    }

    /// Flagged cells not covered by the errata list.
    pub fn unexpected(&self) -> impl Iterator<Item = &CellComparison> {
        self.cells.iter().filter(|c| c.is_unexpected())
    }

    pub fn is_clean(&self) -> bool {
        self.unexpected().next().is_none()
    }

    pub fn extend(&mut self, other: DiscrepancyReport) {
        self.cells.extend(other.cells);
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("table,row,column,generated,reference,tolerance,status,erratum\n");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        for c in &self.cells {
            let status = match c.status {
                CellStatus::Match => "match",
                CellStatus::Flagged => "flagged",
            };
            w.write_record([
                c.table.label(),
                &c.row,
                &c.column,
                &c.generated.map(|g| g.to_string()).unwrap_or_default(),
                &c.reference.to_string(),
                &c.tolerance.to_string(),
                status,
                c.erratum.as_deref().unwrap_or(""),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }
}

fn parse_error(row: usize, column: usize, message: impl Into<String>) -> RiskError {
    RiskError::Parse {
        row,
        column,
        message: message.into(),
    }
}

type Records = (Vec<String>, Vec<(usize, Vec<String>)>);

/// Records of a CSV document with 1-based row numbers (the header is row 1).
fn records(text: &str) -> Result<Records> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| parse_error(1, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_error(row, 1, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_error(
                row,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        rows.push((row, rec.iter().map(|c| c.trim().to_string()).collect()));
    }
    Ok((header, rows))
}

fn expect_header(header: &[String], expected: &[&str]) -> Result<()> {
    for (i, name) in expected.iter().enumerate() {
        if header.get(i).map(String::as_str) != Some(name) {
            return Err(parse_error(1, i + 1, format!("expected column {name:?}")));
        }
    }
    Ok(())
}

fn parse_value(text: &str, row: usize, column: usize) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_error(row, column, format!("not a number: {text:?}")))
}

/// Parses a long-format reference fixture.
pub fn parse_reference(text: &str) -> Result<Vec<ReferenceCell>> {
    let (header, rows) = records(text)?;
    expect_header(&header, &["table", "row", "column", "value", "origin"])?;
    rows.into_iter()
        .map(|(row, f)| {
            Ok(ReferenceCell {
                table: f[0]
                    .parse()
                    .map_err(|_| parse_error(row, 1, "unknown table id"))?,
                row: f[1].clone(),
                column: f[2].clone(),
                value: parse_value(&f[3], row, 4)?,
                origin: f[4].clone(),
            })
        })
        .collect()
}

pub fn reference_cells(id: TableId) -> Result<Vec<ReferenceCell>> {
    parse_reference(fixture_csv(id))
}

pub fn parse_errata(text: &str) -> Result<Vec<Erratum>> {
    let (header, rows) = records(text)?;
    expect_header(&header, &["table", "row", "column", "reason"])?;
    rows.into_iter()
        .map(|(row, f)| {
            Ok(Erratum {
                table: f[0]
                    .parse()
                    .map_err(|_| parse_error(row, 1, "unknown table id"))?,
                row: f[1].clone(),
                column: f[2].clone(),
                reason: f[3].clone(),
            })
        })
        .collect()
}

/// The documented erratum list shipped with the crate.
pub fn errata() -> Result<Vec<Erratum>> {
    parse_errata(ERRATA_CSV)
}

/// Numeric cells of a generated wide-format table, keyed by (row, column).
pub fn parse_generated(csv: &str, id: TableId) -> Result<HashMap<(String, String), f64>> {
    let (header, rows) = records(csv)?;
    let keys = id.key_columns();
    if header.len() <= keys {
        return Err(parse_error(1, header.len() + 1, "no value columns"));
    }
    let mut cells = HashMap::new();
    for (row, fields) in rows {
        let key = fields[..keys]
            .iter()
            .filter(|f| !f.is_empty())
            .cloned()
            .collect::<Vec<_>>()
            .join(":");
        if key.is_empty() {
            return Err(parse_error(row, 1, "empty row key"));
        }
        for (j, text) in fields.iter().enumerate().skip(keys) {
            let value = parse_value(text, row, j + 1)?;
            if cells
                .insert((key.clone(), header[j].clone()), value)
                .is_some()
            {
                return Err(parse_error(
                    row,
                    j + 1,
                    format!("duplicate cell {key}/{}", header[j]),
                ));
            }
        }
    }
    Ok(cells)
}

/// Compares a generated table against the shipped fixture for `id`.
pub fn compare_with_reference(generated: &str, id: TableId) -> Result<DiscrepancyReport> {
    compare_cells(generated, id, &reference_cells(id)?, &errata()?)
}

/// Compares a generated table against explicit reference cells and errata.
pub fn compare_cells(
    generated: &str,
    id: TableId,
    reference: &[ReferenceCell],
    errata: &[Erratum],
) -> Result<DiscrepancyReport> {
    let values = parse_generated(generated, id)?;
    let tolerance = id.tolerance();
    let cells = reference
        .iter()
        .filter(|r| r.table == id)
        .map(|r| {
            let generated = values.get(&(r.row.clone(), r.column.clone())).copied();
            // half a unit of slack in the last printed place of a rounded value
            let status = match generated {
                Some(g) if (g - r.value).abs() <= tolerance * (1.0 + 1e-9) => CellStatus::Match,
                _ => CellStatus::Flagged,
            };
            let erratum = errata
                .iter()
                .find(|e| e.table == id && e.row == r.row && e.column == r.column)
                .map(|e| e.reason.clone());
            CellComparison {
                table: id,
                row: r.row.clone(),
                column: r.column.clone(),
                generated,
                reference: r.value,
                tolerance,
                status,
                erratum,
            }
        })
        .collect();
    Ok(DiscrepancyReport { cells })
}
