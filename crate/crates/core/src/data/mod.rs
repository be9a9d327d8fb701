//! CSV ingestion, chronological splits, z-score normalisation, sliding
//! windows and a synthetic series with level shifts.

mod split;
mod synth;

use std::path::Path;

use crate::error::{Error, Result};

pub use split::{split_and_normalize, windows, Dataset, NormStats, SplitData, SplitSpec};
pub use synth::{synth_jump_series, Jump, SynthConfig, SynthSeries};

/// A `T × D` multivariate series, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSeries {
    values: Vec<f64>,
    rows: usize,
    channel_names: Vec<String>,
    timestamps: Option<Vec<String>>,
}

impl RawSeries {
    pub fn new(values: Vec<f64>, channel_names: Vec<String>, timestamps: Option<Vec<String>>) -> Result<Self> {
        let d = channel_names.len();
        if d == 0 {
            return Err(Error::Data("series needs at least one channel".into()));
        }
        if !values.len().is_multiple_of(d) {
            return Err(Error::Data(format!("{} values do not fill rows of {d} channels", values.len())));
        }
        let rows = values.len() / d;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at row {}, channel '{}'",
                i / d,
                channel_names[i % d]
            )));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != rows {
                return Err(Error::Data(format!("{} timestamps for {rows} rows", ts.len())));
            }
        }
        Ok(Self {
            values,
            rows,
            channel_names,
            timestamps,
        })
    }

    /// Number of time steps T.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    /// Number of channels D.
    pub fn channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize, channel: usize) -> f64 {
        self.values[t * self.channels() + channel]
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok()
}

/// Reads a CSV with a header row. A first column whose first data cell is not
/// numeric is taken as an opaque timestamp column.
pub fn read_csv(reader: impl std::io::Read) -> Result<RawSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut records = Vec::new();
    for rec in rdr.records() {
        records.push(rec.map_err(|e| Error::Data(format!("malformed CSV: {e}")))?);
    }
    let first = records.first().ok_or_else(|| Error::Data("CSV has no data rows".into()))?;
    let has_timestamp = header.len() > 1 && first.get(0).and_then(parse_cell).is_none();
    let skip = usize::from(has_timestamp);
    let names = header[skip..].to_vec();
    let mut values = Vec::with_capacity(records.len() * names.len());
    let mut stamps = has_timestamp.then(|| Vec::with_capacity(records.len()));
    for (row, rec) in records.iter().enumerate() {
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {}: {} fields, header has {}",
                row + 1,
                rec.len(),
                header.len()
            )));
        }
        if let Some(s) = stamps.as_mut() {
            s.push(rec[0].to_string());
        }
        for (col, cell) in rec.iter().enumerate().skip(skip) {
            let v = parse_cell(cell).filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Data(format!(
                    "row {}, column {} ('{}'): cannot parse {cell:?} as a finite number",
                    row + 1,
                    col + 1,
                    header[col]
                ))
            })?;
            values.push(v);
        }
    }
    RawSeries::new(values, names, stamps)
}

pub fn load_csv(path: &Path) -> Result<RawSeries> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(f)).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Writes values with shortest round-trip formatting, so a reload is exact.
pub fn write_csv(writer: impl std::io::Write, series: &RawSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Data(format!("CSV write failed: {e}"));
    let mut header: Vec<&str> = Vec::new();
    if series.timestamps.is_some() {
        header.push("date");
    }
    header.extend(series.channel_names.iter().map(String::as_str));
    w.write_record(&header).map_err(err)?;
    let d = series.channels();
    let mut row: Vec<String> = Vec::with_capacity(d + 1);
    for t in 0..series.rows {
        row.clear();
        if let Some(ts) = &series.timestamps {
            row.push(ts[t].clone());
        }
        row.extend(series.values[t * d..(t + 1) * d].iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("CSV write failed: {e}")))
}

pub fn save_csv(path: &Path, series: &RawSeries) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(f), series)
}
