//! JSON encodings shared by the persisted model files.

use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How matrix payloads are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixEncoding {
    /// A row-major array of numbers.
    #[default]
    Plain,
    /// Base64 of the row-major little-endian f64 bytes.
    Base64,
}

/// A dense matrix in JSON. Exactly one of `data` or `base64` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base64: Option<String>,
}

impl MatrixJson {
    pub fn encode(m: &DMatrix<f64>, encoding: MatrixEncoding) -> Self {
        let row_major: Vec<f64> = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        let (data, base64) = match encoding {
            MatrixEncoding::Plain => (Some(row_major), None),
            MatrixEncoding::Base64 => {
                let bytes: Vec<u8> = row_major.iter().flat_map(|v| v.to_le_bytes()).collect();
                (None, Some(base64::engine::general_purpose::STANDARD.encode(bytes)))
            }
        };
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
            base64,
        }
    }

    pub fn decode(&self) -> Result<DMatrix<f64>> {
        let values = match (&self.data, &self.base64) {
            (Some(d), None) => d.clone(),
            (None, Some(b)) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b)
                    .map_err(|e| Error::Format(format!("bad base64 matrix payload: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::Format(
                        "base64 payload is not a whole number of f64 values".into(),
                    ));
                }
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect()
            }
            _ => return Err(Error::Format("matrix needs exactly one of data or base64".into())),
        };
        if values.len() != self.rows * self.cols {
            return Err(Error::Format(format!(
                "matrix payload has {} values, expected {}×{}",
                values.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &values))
    }

    pub fn encode_vector(v: &DVector<f64>, encoding: MatrixEncoding) -> Self {
        Self::encode(&DMatrix::from_column_slice(1, v.len(), v.as_slice()), encoding)
    }

    pub fn decode_vector(&self) -> Result<DVector<f64>> {
        let m = self.decode()?;
        Ok(DVector::from_iterator(m.len(), m.transpose().iter().copied()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_encodings_round_trip_exactly() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 1e-300, 5.0, f64::MAX, -0.0]);
        for enc in [MatrixEncoding::Plain, MatrixEncoding::Base64] {
            let j = serde_json::to_string(&MatrixJson::encode(&m, enc)).unwrap();
            let back: MatrixJson = serde_json::from_str(&j).unwrap();
            assert_eq!(back.decode().unwrap(), m);
        }
    }
}
