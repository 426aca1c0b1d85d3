use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Writes a point cloud (or dataset): first line the dimension `d`, then one
/// comma-separated row of `d` values per point.
pub fn write_cloud<W: Write>(cloud: &Tensor, mut w: W) -> Result<()> {
    let d = cloud.cols();
    writeln!(w, "{d}")?;
    for i in 0..cloud.rows() {
        let row: Vec<String> = cloud
            .row_slice(i)
            .iter()
            .map(|v| format!("{v:e}"))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads the format written by [`write_cloud`].
pub fn read_cloud<R: Read>(r: R) -> Result<Tensor> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty cloud file".into()))??;
    let d: usize = header
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line 1: expected the dimension, got {header:?}")))?;
    if d == 0 {
        return Err(Error::Parse("line 1: dimension must be >= 1".into()));
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?;
        if vals.len() != d {
            return Err(Error::Parse(format!(
                "line {}: expected {d} values, got {}",
                i + 2,
                vals.len()
            )));
        }
        data.extend(vals);
        rows += 1;
    }
    Tensor::matrix(rows, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = Tensor::from_rows(&[vec![0.1, -2.5e-7], vec![3.0, 1e300]]).unwrap();
        let mut buf = Vec::new();
        write_cloud(&t, &mut buf).unwrap();
        assert!(buf.starts_with(b"2\n"));
        assert_eq!(read_cloud(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn ragged_row_is_parse_error() {
        let err = read_cloud("2\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }
}
