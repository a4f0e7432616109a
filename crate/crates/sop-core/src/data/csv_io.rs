use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::RawSeries;
use crate::error::{Error, Result};

/// Loads a CSV with a header row. A first column named `date` or
/// `timestamp` (case-insensitive) is kept as the time axis; every other
/// column must parse as a finite number. Errors name the offending cell by
/// 1-based data row and column header.
pub fn load_csv(path: &Path) -> Result<RawSeries> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Ingestion(format!("{}: {e}", path.display())),
        })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.is_empty() {
        return Err(Error::Ingestion(format!("{}: empty header", path.display())));
    }
    let has_time = matches!(
        headers[0].to_ascii_lowercase().as_str(),
        "date" | "timestamp"
    );
    let first_var = usize::from(has_time);
    let variable_names: Vec<String> = headers[first_var..].to_vec();

    let mut values = Vec::new();
    let mut timestamps = has_time.then(Vec::new);
    for (i, record) in reader.records().enumerate() {
        let row = i + 1; // 1-based data row for messages
        let record = record.map_err(|e| {
            Error::Ingestion(format!("{}: row {row}: {e}", path.display()))
        })?;
        if let Some(ts) = &mut timestamps {
            ts.push(record[0].trim().to_string());
        }
        for (c, cell) in record.iter().enumerate().skip(first_var) {
            let trimmed = cell.trim();
            let v: f32 = trimmed.parse().map_err(|_| {
                Error::Ingestion(format!(
                    "{}: row {row}, column '{}': cannot parse '{trimmed}' as a number",
                    path.display(),
                    headers[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion(format!(
                    "{}: row {row}, column '{}': non-finite value '{trimmed}'",
                    path.display(),
                    headers[c]
                )));
            }
            values.push(v);
        }
    }
    RawSeries::new(name, variable_names, timestamps, values)
}

/// Writes a series back out. Floats go through `Display`, whose shortest
/// round-trip representation re-parses to the identical f32, so a
/// write/load cycle is lossless.
pub fn write_csv(path: &Path, series: &RawSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let emit = |w: &mut BufWriter<File>, line: String| -> Result<()> {
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))
    };
    let header = match &series.timestamps {
        Some(_) => format!("date,{}", series.variable_names.join(",")),
        None => series.variable_names.join(","),
    };
    emit(&mut w, header)?;
    for r in 0..series.rows() {
        let cells: Vec<String> = series.row(r).iter().map(|v| v.to_string()).collect();
        let line = match &series.timestamps {
            Some(ts) => format!("{},{}", ts[r], cells.join(",")),
            None => cells.join(","),
        };
        emit(&mut w, line)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_a_timestamped_file() {
        let (_d, path) = write_tmp(
            "date,a,b\n2020-01-01,1.5,2\n2020-01-02,2.5,1\n2020-01-03,0.5,3\n",
        );
        let s = load_csv(&path).unwrap();
        assert_eq!(s.name, "data");
        assert_eq!(s.variable_names, vec!["a", "b"]);
        assert_eq!(s.rows(), 3);
        assert_eq!(s.value(1, 0), 2.5);
        assert_eq!(s.value(2, 1), 3.0);
        assert_eq!(s.timestamps.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn loads_without_time_column() {
        let (_d, path) = write_tmp("a,b\n1,2\n3,4\n");
        let s = load_csv(&path).unwrap();
        assert!(s.timestamps.is_none());
        assert_eq!(s.n(), 2);
    }

    #[test]
    fn nan_cell_is_named() {
        let (_d, path) = write_tmp("a,b\n1,2\n3,NaN\n5,6\n");
        let err = load_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("'b'"), "{msg}");
    }

    #[test]
    fn non_numeric_cell_is_named() {
        let (_d, path) = write_tmp("a\n1\noops\n");
        let err = load_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 2") && msg.contains("oops"), "{msg}");
    }

    #[test]
    fn ragged_row_is_an_ingestion_error() {
        let (_d, path) = write_tmp("a,b\n1,2\n3\n");
        let err = load_csv(&path).unwrap_err();
        assert!(matches!(err, Error::Ingestion(_)), "{err:?}");
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_csv(Path::new("/nonexistent.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err:?}");
    }

    #[test]
    fn write_then_load_is_lossless() {
        let series = RawSeries::new(
            "rt".into(),
            vec!["x".into(), "y".into()],
            None,
            vec![0.1, -2.7182817, 3.0, 1e-6, 42.125, 0.3],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        write_csv(&path, &series).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.variable_names, series.variable_names);
        for r in 0..series.rows() {
            assert_eq!(back.row(r), series.row(r));
        }
    }
}
