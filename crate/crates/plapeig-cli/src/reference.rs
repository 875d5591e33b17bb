//! Embedded reference quotients and the summary comparison.
//!
//! The two tables hold five-sweep Rayleigh quotients on a 64x64 unit
//! square for exponents 1.6 through 5.0, one seeded with the midline
//! guess and one with the diagonal guess. They come from an independent
//! earlier computation of the same scheme and are quoted to two decimals,
//! so comparisons are about reproducing the experiment, not bit equality.
//! Keeping them in the binary means `compare` needs no network and no
//! extra files.

use std::fs;
use std::path::Path;

use thiserror::Error;

pub struct ReferenceTable {
    /// CLI name of the table ("table1" / "table2").
    pub name: &'static str,
    /// Initial guess the reference runs used.
    pub guess: &'static str,
    /// (p, five-sweep Rayleigh quotient), ascending in p.
    pub rows: &'static [(f64, f64)],
}

pub static TABLE1_MIDLINE: ReferenceTable = ReferenceTable {
    name: "table1",
    guess: "midline",
    rows: &[
        (1.6, 23.68),
        (1.7, 28.61),
        (1.8, 34.44),
        (1.9, 41.32),
        (2.0, 49.46),
        (2.1, 59.06),
        (2.2, 70.38),
        (2.3, 83.74),
        (2.4, 99.48),
        (2.5, 118.02),
        (2.6, 139.83),
        (2.7, 165.49),
        (2.8, 195.66),
        (2.9, 231.11),
        (3.0, 272.74),
        (3.1, 321.60),
        (3.2, 378.94),
        (3.3, 446.19),
        (3.4, 525.02),
        (3.5, 617.40),
        (3.6, 725.61),
        (3.7, 852.32),
        (3.8, 1000.63),
        (3.9, 1174.18),
        (4.0, 1377.19),
        (4.1, 1614.59),
        (4.2, 1892.11),
        (4.3, 2216.45),
        (4.4, 2595.40),
        (4.5, 3038.03),
        (4.6, 3554.91),
        (4.7, 4158.34),
        (4.8, 4862.65),
        (4.9, 5684.50),
        (5.0, 6643.28),
    ],
};

pub static TABLE2_DIAGONAL: ReferenceTable = ReferenceTable {
    name: "table2",
    guess: "diagonal",
    rows: &[
        (1.6, 24.02),
        (1.7, 28.92),
        (1.8, 34.69),
        (1.9, 41.47),
        (2.0, 49.43),
        (2.1, 58.77),
        (2.2, 69.71),
        (2.3, 82.53),
        (2.4, 97.53),
        (2.5, 115.07),
        (2.6, 135.55),
        (2.7, 159.46),
        (2.8, 187.35),
        (2.9, 219.85),
        (3.0, 257.71),
        (3.1, 301.78),
        (3.2, 353.04),
        (3.3, 412.64),
        (3.4, 481.89),
        (3.5, 562.30),
        (3.6, 655.63),
        (3.7, 763.90),
        (3.8, 889.45),
        (3.9, 1034.95),
        (4.0, 1203.50),
        (4.1, 1398.68),
        (4.2, 1624.60),
        (4.3, 1885.99),
        (4.4, 2188.32),
        (4.5, 2537.85),
        (4.6, 2941.83),
        (4.7, 3408.57),
        (4.8, 3947.64),
        (4.9, 4570.06),
        (5.0, 5288.49),
    ],
};

pub fn table_by_name(name: &str) -> Option<&'static ReferenceTable> {
    match name {
        "table1" => Some(&TABLE1_MIDLINE),
        "table2" => Some(&TABLE2_DIAGONAL),
        _ => None,
    }
}

/// Accepted relative deviation from the reference at exponent `p`: the
/// quadratic case is backed by an exact eigenvalue, so it gets the tight
/// band; everything else carries the references' two-decimal rounding and
/// mesh bias.
pub fn tolerance_for(p: f64) -> f64 {
    if (p - 2.0).abs() < 1e-9 {
        0.02
    } else {
        0.05
    }
}

fn lookup(table: &ReferenceTable, p: f64) -> Option<f64> {
    table.rows.iter().find(|(q, _)| (q - p).abs() < 1e-9).map(|&(_, v)| v)
}

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("cannot read summary: {0}")]
    Io(#[from] std::io::Error),
    /// The summary parsed but contains no data rows to compare.
    #[error("summary has a header but no data rows")]
    MissingRow,
    #[error("summary line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug)]
pub struct CompareRow {
    pub p: f64,
    pub computed: f64,
    /// None when the table has no row for this exponent.
    pub reference: Option<f64>,
    pub rel_dev: Option<f64>,
    pub tolerance: f64,
    pub flagged: bool,
}

#[derive(Debug)]
pub struct CompareReport {
    pub table: &'static str,
    pub rows: Vec<CompareRow>,
    pub flagged: usize,
    pub skipped: usize,
}

/// Compares a summary CSV produced by `run`/`sweep` against an embedded
/// table. Rows whose exponent the table does not list are kept in the
/// report but marked skipped.
pub fn compare_to_reference(
    summary: &Path,
    table: &'static ReferenceTable,
) -> Result<CompareReport, CompareError> {
    let text = fs::read_to_string(summary)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CompareError::MissingRow)?;
    let columns: Vec<&str> = header.split(',').collect();
    let p_col = column(&columns, "p")?;
    let r_col = column(&columns, "R")?;

    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let p = field_f64(&fields, p_col, idx)?;
        let computed = field_f64(&fields, r_col, idx)?;
        let reference = lookup(table, p);
        let tolerance = tolerance_for(p);
        let rel_dev = reference.map(|r| (computed - r).abs() / r);
        rows.push(CompareRow {
            p,
            computed,
            reference,
            rel_dev,
            tolerance,
            flagged: rel_dev.is_some_and(|d| d > tolerance),
        });
    }
    if rows.is_empty() {
        return Err(CompareError::MissingRow);
    }
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let skipped = rows.iter().filter(|r| r.reference.is_none()).count();
    Ok(CompareReport { table: table.name, rows, flagged, skipped })
}

fn column(columns: &[&str], name: &str) -> Result<usize, CompareError> {
    columns.iter().position(|c| *c == name).ok_or_else(|| CompareError::Malformed {
        line: 1,
        message: format!("no \"{name}\" column in header"),
    })
}

fn field_f64(fields: &[&str], col: usize, idx: usize) -> Result<f64, CompareError> {
    let raw = fields.get(col).ok_or_else(|| CompareError::Malformed {
        line: idx + 1,
        message: format!("row has {} fields, column {} needed", fields.len(), col + 1),
    })?;
    raw.parse().map_err(|_| CompareError::Malformed {
        line: idx + 1,
        message: format!("\"{raw}\" is not a number"),
    })
}
