//! Diagnostics CSV files.

use std::io::{Read, Write};
use std::path::Path;

use srhlab_core::DiagnosticsRow;

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 15] = [
    "t",
    "nbar",
    "pbar",
    "ntrbar",
    "mass",
    "E",
    "D",
    "E_rel",
    "l1_n",
    "l1_p",
    "l1_ntr",
    "ckp",
    "maxn",
    "maxp",
    "singular_flag",
];

/// 17 significant digits, enough to round-trip every `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn record(row: &DiagnosticsRow) -> [String; 15] {
    let f = format_float;
    [
        f(row.t),
        f(row.nbar),
        f(row.pbar),
        f(row.ntrbar),
        f(row.mass),
        f(row.e),
        f(row.d),
        f(row.e_rel),
        f(row.l1_n),
        f(row.l1_p),
        f(row.l1_ntr),
        f(row.ckp),
        f(row.maxn),
        f(row.maxp),
        (row.singular_flag as u8).to_string(),
    ]
}

pub fn write_diagnostics<W: Write>(out: W, rows: &[DiagnosticsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_diagnostics_file(path: &Path, rows: &[DiagnosticsRow]) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_diagnostics(std::io::BufWriter::new(file), rows).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        kind => CliError::Config(format!("{}: {kind:?}", path.display())),
    }
}

/// Reads rows back; columns are located by header name, so extra columns and
/// reordering are tolerated.
pub fn read_diagnostics<R: Read>(input: R) -> CliResult<Vec<DiagnosticsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| CliError::Config(format!("diagnostics header: {e}")))?
        .clone();
    let mut index = [0usize; 15];
    for (slot, name) in index.iter_mut().zip(HEADER) {
        *slot = header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Config(format!("diagnostics: missing column `{name}`")))?;
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec =
            rec.map_err(|e| CliError::Config(format!("diagnostics row {}: {e}", line + 1)))?;
        let field = |k: usize| -> CliResult<f64> {
            let text = rec.get(index[k]).unwrap_or("").trim();
            text.parse().map_err(|_| {
                CliError::Config(format!(
                    "diagnostics row {}, column {}: bad number `{text}`",
                    line + 1,
                    HEADER[k]
                ))
            })
        };
        let flag = match rec.get(index[14]).unwrap_or("").trim() {
            "0" | "false" => false,
            "1" | "true" => true,
            other => {
                return Err(CliError::Config(format!(
                    "diagnostics row {}, column singular_flag: bad flag `{other}`",
                    line + 1
                )))
            }
        };
        rows.push(DiagnosticsRow {
            t: field(0)?,
            nbar: field(1)?,
            pbar: field(2)?,
            ntrbar: field(3)?,
            mass: field(4)?,
            e: field(5)?,
            d: field(6)?,
            e_rel: field(7)?,
            l1_n: field(8)?,
            l1_p: field(9)?,
            l1_ntr: field(10)?,
            ckp: field(11)?,
            maxn: field(12)?,
            maxp: field(13)?,
            singular_flag: flag,
        });
    }
    Ok(rows)
}

pub fn read_diagnostics_file(path: &Path) -> CliResult<Vec<DiagnosticsRow>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_diagnostics(std::io::BufReader::new(file))
}
