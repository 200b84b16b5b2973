//! Flat binary matrix layout: `rows: u64`, `cols: u64`, then `rows·cols` row-major
//! `f64` values, all little-endian. Vectors are stored as `n × 1` matrices.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SekiError};

pub fn write_matrix<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| SekiError::invalid("matrix header", "dimension overflow"))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        r.read_exact(&mut word)?;
        data.push(f64::from_le_bytes(word));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    read_matrix(BufReader::new(File::open(path)?))
}

pub fn save_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    save_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

pub fn load_vector(path: &Path) -> Result<DVector<f64>> {
    let m = load_matrix(path)?;
    if m.ncols() != 1 {
        return Err(SekiError::dim(format!("expected a column vector, found {} columns", m.ncols())));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_little_endian() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, -2.0]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 16 + 16);
        assert_eq!(&buf[0..8], &1u64.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&buf[24..32], &(-2.0f64).to_le_bytes());
    }

    #[test]
    fn truncated_input_is_an_error() {
        let mut buf = Vec::new();
        write_matrix(&mut buf, &DMatrix::from_element(2, 2, 1.0)).unwrap();
        buf.truncate(30);
        assert!(read_matrix(&buf[..]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let m = DMatrix::from_fn(rows, cols, |i, j| (seed as f64 + i as f64 * 7.0 - j as f64).sin() * 1e3);
            let mut buf = Vec::new();
            write_matrix(&mut buf, &m).unwrap();
            let back = read_matrix(&buf[..]).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
