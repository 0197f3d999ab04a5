//! Element types for on-disk arrays. All encodings are little-endian.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    U16,
    I32,
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::U16 => 2,
            DType::I32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::U8 => "u8",
            DType::U16 => "u16",
            DType::I32 => "i32",
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }

    /// True when `v` survives the round trip through this type unchanged.
    pub fn represents(self, v: f64) -> bool {
        match self {
            DType::U8 => v.fract() == 0.0 && (0.0..=255.0).contains(&v),
            DType::U16 => v.fract() == 0.0 && (0.0..=65535.0).contains(&v),
            DType::I32 => v.fract() == 0.0 && (-2_147_483_648.0..=2_147_483_647.0).contains(&v),
            DType::F32 => v.is_nan() || f64::from(v as f32) == v,
            DType::F64 => true,
        }
    }

    /// Encodes `values`, refusing any that would change.
    pub fn encode(self, values: &[f64]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(values.len() * self.size());
        for (i, &v) in values.iter().enumerate() {
            if !self.represents(v) {
                return Err(Error::data(format!("value {v} at element {i} does not fit {self}")));
            }
            match self {
                DType::U8 => out.push(v as u8),
                DType::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
                DType::I32 => out.extend_from_slice(&(v as i32).to_le_bytes()),
                DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        Ok(out)
    }

    pub fn decode(self, bytes: &[u8]) -> Result<Vec<f64>> {
        let size = self.size();
        if !bytes.len().is_multiple_of(size) {
            return Err(Error::data(format!("{} bytes is not a whole number of {self} elements", bytes.len())));
        }
        Ok(bytes
            .chunks_exact(size)
            .map(|b| match self {
                DType::U8 => f64::from(b[0]),
                DType::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
                DType::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
                DType::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
                DType::F64 => f64::from_le_bytes(b.try_into().expect("chunk of 8")),
            })
            .collect())
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let cases: [(DType, Vec<f64>); 5] = [
            (DType::U8, vec![0.0, 7.0, 255.0]),
            (DType::U16, vec![0.0, 65535.0, 300.0]),
            (DType::I32, vec![-5.0, 2_147_483_647.0, -2_147_483_648.0]),
            (DType::F32, vec![0.5, -1.25, 2f64.powi(100)]),
            (DType::F64, vec![0.1, -1e-300, f64::MAX]),
        ];
        for (dt, vals) in cases {
            let bytes = dt.encode(&vals).unwrap();
            assert_eq!(bytes.len(), vals.len() * dt.size());
            assert_eq!(dt.decode(&bytes).unwrap(), vals);
        }
    }

    #[test]
    fn lossy_values_rejected() {
        assert!(DType::U8.encode(&[256.0]).is_err());
        assert!(DType::U8.encode(&[1.5]).is_err());
        assert!(DType::F32.encode(&[0.1]).is_err());
        assert!(DType::U16.decode(&[1, 2, 3]).is_err());
    }

    #[test]
    fn serde_names() {
        assert_eq!(serde_json::to_string(&DType::F32).unwrap(), "\"f32\"");
    }
}
