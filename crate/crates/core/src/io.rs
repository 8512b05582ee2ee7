//! File formats.
//!
//! Curves are exchanged as long-format CSV: a header row, one sample per row,
//! comma separated, LF line endings, `.` as decimal mark. The default layout
//! is `curve_id,t,value`; warp and alignment files use the same layout with a
//! different value column. Floating-point fields are written with 17
//! significant digits so they parse back to the identical `f64`.
//!
//! Configurations are JSON objects; unknown fields are rejected and missing
//! fields take their defaults.

use std::io::{Read, Write};

use crate::basis::SampledCurve;
use crate::error::{Error, Result};
use crate::registration::RegistrationConfig;
use crate::simulate::DatasetConfig;

/// Curves keyed by integer id, in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub ids: Vec<u64>,
    pub curves: Vec<SampledCurve>,
}

impl CurveSet {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// True when every curve has exactly the grid of the first.
    pub fn has_common_grid(&self) -> bool {
        match self.curves.first() {
            None => true,
            Some(first) => self.curves.iter().all(|c| c.grid() == first.grid()),
        }
    }
}

/// Lossless text form of an `f64` (17 significant digits).
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(field: &str, what: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse {what} `{field}`")))?;
    if !v.is_finite() {
        return Err(Error::Format(format!("line {line}: {what} is not finite")));
    }
    Ok(v)
}

/// Reads a long-format table with columns `curve_id`, `t` and `value_column`
/// (in any order; other columns are ignored).
pub fn read_long_csv<R: Read>(reader: R, value_column: &str) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    };
    let (id_col, t_col, v_col) = (column("curve_id")?, column("t")?, column(value_column)?);

    let mut ids: Vec<u64> = Vec::new();
    let mut grids: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let record = record.map_err(|e| Error::Format(format!("line {line}: {e}")))?;
        let get = |i: usize| {
            record
                .get(i)
                .ok_or_else(|| Error::Format(format!("line {line}: too few fields")))
        };
        let id: u64 = get(id_col)?
            .parse()
            .map_err(|_| Error::Format(format!("line {line}: curve_id must be a nonnegative integer")))?;
        let t = parse_f64(get(t_col)?, "t", line)?;
        let v = parse_f64(get(v_col)?, value_column, line)?;
        let slot = match ids.iter().position(|&x| x == id) {
            Some(s) => s,
            None => {
                ids.push(id);
                grids.push(Vec::new());
                values.push(Vec::new());
                ids.len() - 1
            }
        };
        grids[slot].push(t);
        values[slot].push(v);
    }
    if ids.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let curves = grids
        .into_iter()
        .zip(values)
        .zip(&ids)
        .map(|((g, v), id)| {
            SampledCurve::new(g, v).map_err(|e| Error::Format(format!("curve {id}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurveSet { ids, curves })
}

/// Parses `curve_id,t,value` CSV from bytes.
pub fn parse_curves_csv(bytes: &[u8]) -> Result<CurveSet> {
    read_long_csv(bytes, "value")
}

/// A CSV table held as strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("missing column `{name}`")))
    }
}

/// Reads a CSV table with a header row; every row must have the header's width.
pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format(format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let rows = rdr
        .records()
        .enumerate()
        .map(|(i, r)| {
            r.map(|rec| rec.iter().map(str::to_owned).collect())
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 2)))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(Table { header, rows })
}

/// Writes a long-format table `curve_id,t,<value_column>`.
pub fn write_long_csv<W: Write>(
    writer: W,
    value_column: &str,
    ids: &[u64],
    curves: &[SampledCurve],
) -> Result<()> {
    let rows = ids.iter().zip(curves).flat_map(|(id, c)| {
        c.grid()
            .iter()
            .zip(c.values())
            .map(move |(t, v)| vec![id.to_string(), format_f64(*t), format_f64(*v)])
    });
    write_table(writer, &["curve_id", "t", value_column], rows)
}

/// Writes a CSV table with a header row and LF line endings.
pub fn write_table<W, I>(writer: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let io_err = |e: csv::Error| Error::Format(format!("write failed: {e}"));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| Error::Format(format!("write failed: {e}")))
}

fn json_error(e: serde_json::Error) -> Error {
    // serde reports unknown or mistyped fields in its message; surface it whole
    Error::Format(format!("invalid JSON config: {e}"))
}

fn json_object(text: &str) -> Result<serde_json::Value> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(json_error)?;
    if !value.is_object() {
        return Err(Error::Format("config must be a JSON object".into()));
    }
    Ok(value)
}

/// Parses and validates a dataset configuration.
pub fn parse_dataset_config(text: &str) -> Result<DatasetConfig> {
    let cfg: DatasetConfig = serde_json::from_value(json_object(text)?).map_err(json_error)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses and validates a registration configuration.
pub fn parse_registration_config(text: &str) -> Result<RegistrationConfig> {
    let cfg: RegistrationConfig = serde_json::from_value(json_object(text)?).map_err(json_error)?;
    cfg.validate()?;
    Ok(cfg)
}
