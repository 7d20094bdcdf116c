//! CSV ingestion: UTF-8, header row, comma separated.
//!
//! Levels are encoded in order of first appearance. Columns with a single
//! observed level are dropped when loading training data, since such a
//! predictor can never be included.

use std::io::{Read, Write};

use super::{Column, Dataset, Schema, MAX_LEVELS};
use crate::error::{Error, Result};

/// Non-fatal events while loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Constant predictor columns removed from the dataset.
    pub dropped_constant: Vec<String>,
    /// `(column, token)` pairs not present in the reference schema; appended
    /// as new levels.
    pub unseen_levels: Vec<(String, String)>,
}

impl LoadReport {
    pub fn warnings(&self) -> Vec<String> {
        let mut w: Vec<String> = self
            .dropped_constant
            .iter()
            .map(|c| format!("dropped constant column `{c}`"))
            .collect();
        w.extend(
            self.unseen_levels
                .iter()
                .map(|(c, t)| format!("column `{c}`: level `{t}` not seen in training data")),
        );
        w
    }
}

struct Table {
    header: Vec<String>,
    /// `(line number, fields)`
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header: Vec<String> = match records.next() {
        None => return Err(Error::parse(1, "missing header row")),
        Some(r) => {
            let r = r.map_err(csv_error)?;
            r.iter().map(str::to_owned).collect()
        }
    };
    if header.iter().any(String::is_empty) {
        return Err(Error::parse(1, "empty column name in header"));
    }
    for (a, name) in header.iter().enumerate() {
        if header[..a].contains(name) {
            return Err(Error::parse(1, format!("duplicate column `{name}`")));
        }
    }
    let mut rows = Vec::new();
    for r in records {
        let r = r.map_err(csv_error)?;
        let line = r.position().map_or(0, |p| p.line() as usize);
        if r.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), r.len()),
            ));
        }
        if let Some(c) = r.iter().position(str::is_empty) {
            return Err(Error::parse(line, format!("empty cell in column `{}`", header[c])));
        }
        rows.push((line, r.iter().map(str::to_owned).collect()));
    }
    if rows.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    Ok(Table { header, rows })
}

fn csv_error(e: ::csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::parse(line, e.to_string())
}

/// First-appearance encoder for one column.
struct Encoder {
    column: Column,
}

impl Encoder {
    fn new(name: &str) -> Self {
        Encoder {
            column: Column::new(name, Vec::new()),
        }
    }

    fn from_column(column: Column) -> Self {
        Encoder { column }
    }

    /// Returns the index and whether the token was new.
    fn encode(&mut self, token: &str) -> Result<(usize, bool)> {
        if let Some(v) = self.column.encode(token) {
            return Ok((v, false));
        }
        if self.column.levels.len() == MAX_LEVELS {
            return Err(Error::Capacity(format!(
                "column `{}` has more than {MAX_LEVELS} levels",
                self.column.name
            )));
        }
        self.column.levels.push(token.to_owned());
        Ok((self.column.levels.len() - 1, true))
    }
}

/// Loads a training dataset. `response` names the class column; every other
/// column is a predictor.
pub fn read_csv<R: Read>(reader: R, response: &str) -> Result<(Dataset, LoadReport)> {
    let table = read_table(reader)?;
    let ycol = table
        .header
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::MissingColumn(response.to_owned()))?;
    let pcols: Vec<usize> = (0..table.header.len()).filter(|&c| c != ycol).collect();

    let mut yenc = Encoder::new(response);
    let mut encs: Vec<Encoder> = pcols.iter().map(|&c| Encoder::new(&table.header[c])).collect();
    let mut y = Vec::with_capacity(table.rows.len());
    let mut rows = Vec::with_capacity(table.rows.len());
    for (_, fields) in &table.rows {
        y.push(yenc.encode(&fields[ycol])?.0);
        let row = pcols
            .iter()
            .zip(encs.iter_mut())
            .map(|(&c, e)| e.encode(&fields[c]).map(|(v, _)| v))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if yenc.column.level_count() < 2 {
        return Err(Error::Validation(format!(
            "response column `{response}` has a single class"
        )));
    }

    let keep: Vec<usize> = (0..encs.len()).filter(|&j| encs[j].column.level_count() > 1).collect();
    let report = LoadReport {
        dropped_constant: (0..encs.len())
            .filter(|j| !keep.contains(j))
            .map(|j| encs[j].column.name.clone())
            .collect(),
        unseen_levels: Vec::new(),
    };
    let rows = if keep.len() == encs.len() {
        rows
    } else {
        rows.into_iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect()
    };
    let schema = Schema {
        response: yenc.column,
        predictors: keep
            .iter()
            .map(|&j| std::mem::replace(&mut encs[j].column, Column::new("", Vec::new())))
            .collect(),
    };
    Ok((Dataset::new(schema, y, rows)?, report))
}

struct Encoded {
    schema: Schema,
    y: Option<Vec<usize>>,
    rows: Vec<Vec<usize>>,
    report: LoadReport,
}

fn encode_against(table: Table, schema: &Schema, require_response: bool) -> Result<Encoded> {
    let ycol = table.header.iter().position(|h| *h == schema.response.name);
    if require_response && ycol.is_none() {
        return Err(Error::MissingColumn(schema.response.name.clone()));
    }
    let pcols = schema
        .predictors
        .iter()
        .map(|c| {
            table
                .header
                .iter()
                .position(|h| *h == c.name)
                .ok_or_else(|| Error::MissingColumn(c.name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = LoadReport::default();
    let mut yenc = Encoder::from_column(schema.response.clone());
    let mut encs: Vec<Encoder> = schema.predictors.iter().cloned().map(Encoder::from_column).collect();
    let mut y = Vec::with_capacity(table.rows.len());
    let mut rows = Vec::with_capacity(table.rows.len());
    for (_, fields) in &table.rows {
        if let Some(c) = ycol {
            let (v, new) = yenc.encode(&fields[c])?;
            if new {
                report.unseen_levels.push((yenc.column.name.clone(), fields[c].clone()));
            }
            y.push(v);
        }
        let mut row = Vec::with_capacity(pcols.len());
        for (&c, e) in pcols.iter().zip(encs.iter_mut()) {
            let (v, new) = e.encode(&fields[c])?;
            if new {
                report.unseen_levels.push((e.column.name.clone(), fields[c].clone()));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Encoded {
        schema: Schema {
            response: yenc.column,
            predictors: encs.into_iter().map(|e| e.column).collect(),
        },
        y: ycol.map(|_| y),
        rows,
        report,
    })
}

/// Loads labelled data against a training schema. Columns are matched by
/// name; tokens absent from the schema become new trailing levels and are
/// listed in the report.
pub fn read_csv_with_schema<R: Read>(reader: R, schema: &Schema) -> Result<(Dataset, LoadReport)> {
    let enc = encode_against(read_table(reader)?, schema, true)?;
    let y = enc.y.expect("response required");
    Ok((Dataset::new(enc.schema, y, enc.rows)?, enc.report))
}

/// Predictor rows encoded against `schema`, plus responses when the file
/// has the response column.
pub fn read_points_with_schema<R: Read>(
    reader: R,
    schema: &Schema,
) -> Result<(Vec<Vec<usize>>, Option<Vec<usize>>, Schema, LoadReport)> {
    let enc = encode_against(read_table(reader)?, schema, false)?;
    Ok((enc.rows, enc.y, enc.schema, enc.report))
}

/// Writes `dataset` with the response column first.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = ::csv::Writer::from_writer(writer);
    let schema = dataset.schema();
    let header = std::iter::once(schema.response.name.as_str())
        .chain(schema.predictors.iter().map(|c| c.name.as_str()));
    w.write_record(header).map_err(|e| Error::Io(e.into()))?;
    for i in 0..dataset.len() {
        let (y, xs) = dataset.tokens(i);
        w.write_record(std::iter::once(y).chain(xs)).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
