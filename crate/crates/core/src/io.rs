//! Matrix ingestion and dumps.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFormat {
    /// Comma-separated, no header.
    Csv,
    /// Any run of spaces or tabs separates cells.
    Whitespace,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MatrixFormat::Csv),
            "whitespace" | "txt" => Ok(MatrixFormat::Whitespace),
            other => Err(Error::invalid(format!("unknown matrix format {other:?}"))),
        }
    }
}

fn parse_cell(text: &str, line: usize, column: usize) -> Result<f64> {
    let text = text.trim();
    match text.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Parse {
            line,
            column,
            message: format!("non-finite value {v}"),
        }),
        Err(_) => Err(Error::Parse {
            line,
            column,
            message: format!("not a number: {text:?}"),
        }),
    }
}

fn assemble(rows: Vec<(usize, Vec<f64>)>, drop_label_column: bool) -> Result<DenseMatrix> {
    let Some((first_line, first)) = rows.first() else {
        return Err(Error::invalid("matrix file has no data rows"));
    };
    let width = first.len();
    if let Some((line, row)) = rows.iter().find(|(_, r)| r.len() != width) {
        return Err(Error::Parse {
            line: *line,
            column: row.len().min(width) + 1,
            message: format!("row has {} cells, line {first_line} has {width}", row.len()),
        });
    }
    let cols = if drop_label_column { width - 1 } else { width };
    if cols == 0 {
        return Err(Error::invalid("matrix has no columns"));
    }
    let n = rows.len();
    let mut data = Vec::with_capacity(n * cols);
    for (_, row) in rows {
        data.extend_from_slice(&row[..cols]);
    }
    DenseMatrix::new(n, cols, data)
}

/// Reads a rectangular numeric table. Blank lines are skipped; with
/// `drop_label_column` the last column is discarded. Line and column numbers
/// in errors are 1-based.
pub fn load_matrix(
    path: impl AsRef<Path>,
    format: MatrixFormat,
    drop_label_column: bool,
) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let file = File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let rows = match format {
        MatrixFormat::Csv => read_csv(file)?,
        MatrixFormat::Whitespace => read_whitespace(BufReader::new(file))?,
    };
    let m = assemble(rows, drop_label_column)?;
    log::info!(
        "loaded {} x {} matrix from {}",
        m.rows(),
        m.cols(),
        path.display()
    );
    Ok(m)
}

fn read_csv(reader: impl std::io::Read) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            column: 0,
            message: e.to_string(),
        })?;
        let line = record
            .position()
            .map_or(rows.len() + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, line, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((line, row));
    }
    Ok(rows)
}

fn read_whitespace(reader: impl BufRead) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, idx + 1, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((idx + 1, row));
    }
    Ok(rows)
}

/// Writes `rows cols` on the first line, then one whitespace-separated row
/// per line using shortest round-trip formatting.
pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", m.rows(), m.cols())?;
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_matrix`].
pub fn read_matrix_dump(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let dims: Vec<&str> = header.split_whitespace().collect();
    let parse_dim = |s: Option<&&str>, column: usize| -> Result<usize> {
        s.and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
            line: 1,
            column,
            message: format!("bad header {header:?}"),
        })
    };
    if dims.len() != 2 {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("expected `rows cols`, got {header:?}"),
        });
    }
    let (rows, cols) = (parse_dim(dims.first(), 1)?, parse_dim(dims.get(1), 2)?);
    let mut data = Vec::with_capacity(rows * cols);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for (c, cell) in line.split_whitespace().enumerate() {
            data.push(parse_cell(cell, idx + 2, c + 1)?);
        }
        if data.len() - before != cols {
            return Err(Error::Parse {
                line: idx + 2,
                column: data.len() - before,
                message: format!("expected {cols} cells"),
            });
        }
    }
    if data.len() != rows * cols {
        return Err(Error::invalid(format!(
            "dump declares {rows} rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    DenseMatrix::new(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn temp_file(content: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), content).unwrap();
        f
    }

    #[test]
    fn csv_examples() {
        let f = temp_file("1,2\n3,4\n");
        let m = load_matrix(f.path(), MatrixFormat::Csv, false).unwrap();
        assert_eq!(
            m,
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()
        );
        let f = temp_file("1, 2, 0\n3, 4, 1\n\n");
        let m = load_matrix(f.path(), MatrixFormat::Csv, true).unwrap();
        assert_eq!(m.shape(), (2, 2));
    }

    #[test]
    fn whitespace_examples() {
        let f = temp_file("1 2\t3\n\n4  5 6\n");
        let m = load_matrix(f.path(), MatrixFormat::Whitespace, false).unwrap();
        assert_eq!(m.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn parse_errors_carry_locations() {
        let f = temp_file("1,2\n3,x\n");
        match load_matrix(f.path(), MatrixFormat::Csv, false) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 2)),
            other => panic!("{other:?}"),
        }
        let f = temp_file("1 2\n3\n");
        match load_matrix(f.path(), MatrixFormat::Whitespace, false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let f = temp_file("1,2\n3,4,5\n");
        assert!(matches!(
            load_matrix(f.path(), MatrixFormat::Csv, false),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(load_matrix("/nonexistent/file.csv", MatrixFormat::Csv, false).is_err());
        assert!(load_matrix(temp_file("").path(), MatrixFormat::Csv, false).is_err());
    }

    #[test]
    fn dump_round_trip() {
        let m = DenseMatrix::from_rows(&[vec![0.1, -2.5e-300], vec![1.0 / 3.0, 7.0]]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_matrix(f.path(), &m).unwrap();
        let text = fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("2 2\n"));
        assert_eq!(read_matrix_dump(f.path()).unwrap(), m);
        assert!(read_matrix_dump(temp_file("2 2\n1 2\n").path()).is_err());
        assert!(read_matrix_dump(temp_file("2\n").path()).is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<MatrixFormat>().unwrap(), MatrixFormat::Csv);
        assert!("xml".parse::<MatrixFormat>().is_err());
    }
}
