//! Population CSV ingestion.
//!
//! Schema: header `x1,...,xp,z,y`, then one row per record; `z` is 0 or 1
//! and every other field is a finite decimal.  Validation is strict — any
//! malformed row is rejected with its line number — because ingested tables
//! are treated as the exact data-generating law for bootstrap studies.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::model::PopulationTable;
use crate::Result;

/// Summary statistics printed after ingesting a population.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub records: usize,
    pub dim: usize,
    pub count0: usize,
    pub count1: usize,
    pub mean_y0: f64,
    pub mean_y1: f64,
}

impl IngestSummary {
    /// Mean-response gap between subgroups, `E(Y|Z=1) - E(Y|Z=0)`.
    pub fn disparity(&self) -> f64 {
        self.mean_y1 - self.mean_y0
    }
}

/// Compute the ingest summary of a validated population.
pub fn summarize(pop: &PopulationTable) -> IngestSummary {
    IngestSummary {
        records: pop.len(),
        dim: pop.dim(),
        count0: pop.subgroup_count(0),
        count1: pop.subgroup_count(1),
        mean_y0: pop.subgroup_mean_y(0),
        mean_y1: pop.subgroup_mean_y(1),
    }
}

/// Parse a population table from CSV text.
///
/// Line numbers in errors are 1-based positions in the input, counting the
/// header.  Fields may carry surrounding ASCII whitespace (so CRLF files
/// parse); empty lines are skipped.
pub fn parse_population_csv(text: &str) -> Result<PopulationTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());

    let (header_row, header) = lines.next().ok_or_else(|| Error::CsvFormat {
        row: 1,
        reason: "empty input; expected header x1,...,xp,z,y".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 {
        return Err(Error::CsvFormat {
            row: header_row,
            reason: "header needs at least x1,z,y".into(),
        });
    }
    let p = cols.len() - 2;
    for (j, col) in cols.iter().take(p).enumerate() {
        let expect = format!("x{}", j + 1);
        if *col != expect {
            return Err(Error::CsvFormat {
                row: header_row,
                reason: format!("column {}: expected `{expect}`, found `{col}`", j + 1),
            });
        }
    }
    if cols[p] != "z" || cols[p + 1] != "y" {
        return Err(Error::CsvFormat {
            row: header_row,
            reason: "last two columns must be `z,y`".into(),
        });
    }

    let mut features = Vec::new();
    let mut z = Vec::new();
    let mut y = Vec::new();
    for (row, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != p + 2 {
            return Err(Error::CsvFormat {
                row,
                reason: format!("expected {} fields, found {}", p + 2, fields.len()),
            });
        }
        for (j, field) in fields.iter().take(p).enumerate() {
            let v = parse_finite(field).map_err(|reason| Error::CsvFormat {
                row,
                reason: format!("column x{}: {reason}", j + 1),
            })?;
            features.push(v);
        }
        let zv = match fields[p] {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::CsvFormat {
                    row,
                    reason: format!("column z: expected 0 or 1, found `{other}`"),
                })
            }
        };
        let yv = parse_finite(fields[p + 1]).map_err(|reason| Error::CsvFormat {
            row,
            reason: format!("column y: {reason}"),
        })?;
        z.push(zv);
        y.push(yv);
    }

    let n = z.len();
    PopulationTable::new(DMatrix::from_row_slice(n, p, &features), z, y)
}

fn parse_finite(field: &str) -> std::result::Result<f64, String> {
    if field.is_empty() {
        return Err("missing field".into());
    }
    let v: f64 = field
        .parse()
        .map_err(|_| format!("not a decimal: `{field}`"))?;
    if !v.is_finite() {
        return Err(format!("not finite: `{field}`"));
    }
    Ok(v)
}

/// Load and validate a population CSV from disk.
pub fn load_population_csv(path: &Path) -> Result<PopulationTable> {
    let text = std::fs::read_to_string(path)?;
    parse_population_csv(&text)
}

/// Write a population table in the ingestion schema (round-trips through
/// [`parse_population_csv`]).
pub fn write_population_csv(pop: &PopulationTable, w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    let p = pop.dim();
    let header: Vec<String> = (1..=p)
        .map(|j| format!("x{j}"))
        .chain(["z".into(), "y".into()])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..pop.len() {
        let mut fields: Vec<String> = (0..p).map(|j| full_precision(pop.features[(i, j)])).collect();
        fields.push(pop.z[i].to_string());
        fields.push(full_precision(pop.y[i]));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Shortest decimal that round-trips the value exactly.
fn full_precision(v: f64) -> String {
    let mut s = format!("{v}");
    // `{}` on f64 is round-trip precise but may print an exponent form that
    // still parses fine; normalize integral values to carry a decimal point
    // so the file is visibly numeric.
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}
