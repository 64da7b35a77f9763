//! JSON encodings of complex matrices: row-major arrays of `[re, im]` pairs.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMat, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl From<&CMat> for ComplexMatrix {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        ComplexMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl ComplexMatrix {
    pub fn to_matrix(&self) -> Result<CMat, String> {
        if self.data.len() != self.rows * self.cols {
            return Err(format!(
                "expected {} entries, found {}",
                self.rows * self.cols,
                self.data.len()
            ));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |r, c| {
            let [re, im] = self.data[r * self.cols + c];
            C64::new(re, im)
        }))
    }
}

pub fn serialize_matrix<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    ComplexMatrix::from(m).serialize(s)
}

pub fn deserialize_matrix<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
    let m = ComplexMatrix::deserialize(d)?;
    m.to_matrix().map_err(serde::de::Error::custom)
}

pub fn serialize_matrices<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
    let v: Vec<ComplexMatrix> = ms.iter().map(ComplexMatrix::from).collect();
    v.serialize(s)
}
