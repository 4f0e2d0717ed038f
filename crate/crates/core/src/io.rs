//! Matrix files and number formatting shared by the command-line tools.
//!
//! Two matrix formats are understood:
//! * CSV, one matrix row per line, no header;
//! * binary, a one-line JSON header `{"rows","cols","dtype":"f64","layout":"row-major"}`
//!   followed by `\n` and `rows * cols` little-endian `f64` values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub layout: String,
}

/// Real number with 17 significant digits, round-trippable.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_owned()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_owned()
    } else {
        format!("{x:.16e}")
    }
}

/// Reads either format, choosing by the first byte (`{` means binary).
pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    let mut reader = BufReader::new(File::open(path)?);
    let binary = reader.fill_buf()?.first() == Some(&b'{');
    if binary {
        read_binary(&mut reader)
    } else {
        read_csv(reader)
    }
}

fn read_binary(reader: &mut impl BufRead) -> Result<Mat<f64>> {
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: BinaryHeader =
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Parse(format!("binary matrix header: {e}")))?;
    if header.dtype != "f64" || header.layout != "row-major" {
        return Err(Error::Parse(format!(
            "unsupported binary matrix dtype `{}` / layout `{}`",
            header.dtype, header.layout
        )));
    }
    let count = header
        .rows
        .checked_mul(header.cols)
        .ok_or_else(|| Error::Parse("binary matrix dimensions overflow".into()))?;
    let mut bytes = Vec::with_capacity(count * 8);
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Parse(format!(
            "binary matrix payload has {} bytes, header implies {}",
            bytes.len(),
            count * 8
        )));
    }
    let value = |k: usize| f64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8 bytes"));
    Ok(Mat::from_fn(header.rows, header.cols, |i, j| value(i * header.cols + j)))
}

fn read_csv(reader: impl Read) -> Result<Mat<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("matrix CSV: {e}")))?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("matrix CSV row {}: `{s}` is not a number", line + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse(format!(
                    "matrix CSV row {} has {} entries, expected {}",
                    line + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn write_matrix_csv(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| fmt_real(m[(i, j)])).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_binary(path: &Path, m: &Mat<f64>) -> Result<()> {
    let header = BinaryHeader {
        rows: m.nrows(),
        cols: m.ncols(),
        dtype: "f64".into(),
        layout: "row-major".into(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Parse(e.to_string()))?;
    w.write_all(b"\n")?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Mat<f64> {
        Mat::from_fn(3, 4, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0) - 0.1 * j as f64)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let m = sample();
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        let m = sample();
        write_matrix_binary(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Parse(_))));
        std::fs::write(&p, "1,x\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Parse(_))));
        std::fs::write(&p, "{\"rows\":2,\"cols\":2,\"dtype\":\"f64\",\"layout\":\"row-major\"}\n1234").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Parse(_))));
    }

    #[test]
    fn reals_keep_seventeen_digits() {
        let x = 0.1 + 0.2;
        assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        assert_eq!(fmt_real(f64::NAN), "NaN");
    }
}
