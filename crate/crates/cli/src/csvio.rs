//! Plain numeric CSV interchange for `N × C` tensors.

use std::io::{Read, Write};
use std::path::Path;

use isonorm::format::TensorFile;
use isonorm::{Error, Result};
use ndarray::Array2;

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

/// Reads a rectangular numeric CSV into an `N × C` f64 tensor. Line numbers in
/// errors count from 1 and include the header.
pub fn import_csv_from<R: Read>(reader: R, has_header: bool) -> Result<TensorFile> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(has_header).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_err(line, format!("expected {w} fields, found {}", record.len())));
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: `{cell}` is not a number", col + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0);
    if rows == 0 || cols == 0 {
        return Err(parse_err(1, "no data rows"));
    }
    let m = Array2::from_shape_vec((rows, cols), values).expect("rows have equal width");
    Ok(TensorFile::from_matrix(&m))
}

pub fn import_csv(path: &Path, has_header: bool) -> Result<TensorFile> {
    import_csv_from(std::fs::File::open(path)?, has_header)
}

/// Writes a rank-1 or rank-2 tensor as CSV using shortest round-trip formatting, so
/// importing the output reproduces every value exactly.
pub fn export_csv_to<W: Write>(t: &TensorFile, writer: W, header: bool) -> Result<()> {
    let m = match t.dims().len() {
        1 => t.to_vector()?.insert_axis(ndarray::Axis(1)),
        2 => t.to_matrix()?,
        r => return Err(Error::Shape(format!("CSV export needs a rank 1 or 2 tensor, got rank {r}"))),
    };
    let mut w = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if header {
        w.write_record((0..m.ncols()).map(|j| format!("c{j}"))).map_err(csv_err)?;
    }
    for row in m.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(t: &TensorFile, header: bool) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    export_csv_to(t, &mut out, header)?;
    Ok(out)
}
