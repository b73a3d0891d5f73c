//! Field files: CSV with header `index,x1..xN,value`, one row per unknown.

use std::io::{Read, Write};
use std::path::Path;

use plap::{Field, Grid};

use crate::CliError;

fn header(grid: &Grid<f64>) -> Vec<String> {
    let mut h = vec!["index".to_string()];
    h.extend((1..=grid.dims()).map(|a| format!("x{a}")));
    h.push("value".into());
    h
}

/// Writes `u` with node coordinates; values carry 17 significant digits so
/// reading the file back is bitwise exact.
pub fn write_field<W: Write>(u: &Field<f64>, grid: &Grid<f64>, out: W) -> Result<(), CliError> {
    if u.len() != grid.num_dofs() {
        return Err(CliError::Field(format!(
            "field has {} values, grid has {} unknowns",
            u.len(),
            grid.num_dofs()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(grid))?;
    for (i, v) in u.values().iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(grid.coords(grid.dof_node(i)).iter().map(|x| format!("{x:.16e}")));
        row.push(format!("{v:.16e}"));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field<R: Read>(input: R, grid: &Grid<f64>) -> Result<Field<f64>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    let expected = header(grid);
    let got: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if got != expected {
        return Err(CliError::Field(format!(
            "header must be '{}', found '{}'",
            expected.join(","),
            got.join(",")
        )));
    }
    let n = grid.num_dofs();
    let mut values = Vec::with_capacity(n);
    for (k, rec) in r.records().enumerate() {
        // data rows are numbered from 1, after the header
        let row = k + 1;
        let rec = rec?;
        let index: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| CliError::Field(format!("row {row}: bad index '{}'", &rec[0])))?;
        if index != k {
            return Err(CliError::Field(format!("row {row}: index {index}, expected {k}")));
        }
        let raw = rec[rec.len() - 1].trim();
        let v: f64 = raw
            .parse()
            .map_err(|_| CliError::Field(format!("row {row}: bad value '{raw}'")))?;
        if !v.is_finite() {
            return Err(CliError::Field(format!("row {row}: non-finite value '{raw}'")));
        }
        values.push(v);
    }
    if values.len() != n {
        return Err(CliError::Field(format!(
            "{} rows, grid has {n} unknowns",
            values.len()
        )));
    }
    Ok(Field::new(values)?)
}

pub fn write_field_file(u: &Field<f64>, grid: &Grid<f64>, path: &Path) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    write_field(u, grid, std::io::BufWriter::new(file))
}

pub fn read_field_file(path: &Path, grid: &Grid<f64>) -> Result<Field<f64>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_field(std::io::BufReader::new(file), grid)
        .map_err(|e| CliError::Field(format!("{}: {e}", path.display())))
}
