//! JSON containers for ensembles, observations, matrices and anchors.
//!
//! Floating-point payloads are base64 strings of little-endian `f64`s so
//! values round-trip bit-exactly; complex data is interleaved `(re, im)`.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::anchor::{Anchor, AnchorMethod};
use crate::error::{Error, Result};
use crate::model::{Ensemble, EnsembleKind, Observations, RngSpec, Store};
use crate::numlin::{DenseMatrix, C64};

pub fn encode_f64(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

pub fn decode_f64(text: &str) -> Result<Vec<f64>> {
    let bytes = B64.decode(text).map_err(|e| Error::Decode(format!("base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Decode(format!("payload of {} bytes is not a whole number of f64s", bytes.len())));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    /// Real payloads store one `f64` per entry, complex ones two.
    pub complex: bool,
    /// Column-major.
    pub data: String,
}

impl MatrixFile {
    pub fn from_matrix(m: &DenseMatrix) -> Self {
        let complex = !m.is_real();
        let vals: Vec<f64> = if complex {
            m.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
        } else {
            m.as_slice().iter().map(|z| z.re).collect()
        };
        Self {
            rows: m.rows(),
            cols: m.cols(),
            complex,
            data: encode_f64(&vals),
        }
    }

    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        let vals = decode_f64(&self.data)?;
        let n = self.rows * self.cols;
        let entries: Vec<C64> = if self.complex {
            if vals.len() != 2 * n {
                return Err(Error::Decode(format!("expected {} values, found {}", 2 * n, vals.len())));
            }
            vals.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
        } else {
            if vals.len() != n {
                return Err(Error::Decode(format!("expected {n} values, found {}", vals.len())));
            }
            vals.iter().map(|&v| C64::new(v, 0.0)).collect()
        };
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Decode("non-finite matrix entry".into()));
        }
        DenseMatrix::from_col_major(self.rows, self.cols, entries)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnsembleData {
    /// `M` column-major real `d1 x d2` blocks, back to back.
    Dense { phi: String },
    /// Columns `a_m` and `b_m`.
    Factored { a: MatrixFile, b: MatrixFile },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleFile {
    pub kind: EnsembleKind,
    pub d1: usize,
    pub d2: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: Option<RngSpec>,
    pub data: EnsembleData,
}

impl EnsembleFile {
    pub fn from_ensemble(ens: &Ensemble) -> Self {
        let data = match ens.store() {
            Store::Dense(phi) => EnsembleData::Dense { phi: encode_f64(phi) },
            Store::Factored { a, b } => EnsembleData::Factored {
                a: MatrixFile::from_matrix(a),
                b: MatrixFile::from_matrix(b),
            },
        };
        Self {
            kind: ens.kind(),
            d1: ens.d1(),
            d2: ens.d2(),
            m: ens.num_measurements(),
            seed: ens.seed(),
            data,
        }
    }

    pub fn to_ensemble(&self) -> Result<Ensemble> {
        let store = match &self.data {
            EnsembleData::Dense { phi } => Store::Dense(decode_f64(phi)?),
            EnsembleData::Factored { a, b } => Store::Factored {
                a: a.to_matrix()?,
                b: b.to_matrix()?,
            },
        };
        Ensemble::from_parts(self.kind, self.d1, self.d2, self.m, self.seed, store)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsFile {
    #[serde(rename = "M")]
    pub m: usize,
    pub y: String,
    pub xi: String,
    pub clean: String,
}

impl ObservationsFile {
    pub fn from_observations(obs: &Observations) -> Self {
        Self {
            m: obs.len(),
            y: encode_f64(&obs.y),
            xi: encode_f64(&obs.xi),
            clean: encode_f64(&obs.clean),
        }
    }

    pub fn to_observations(&self) -> Result<Observations> {
        let obs = Observations {
            y: decode_f64(&self.y)?,
            xi: decode_f64(&self.xi)?,
            clean: decode_f64(&self.clean)?,
        };
        if obs.y.len() != self.m || obs.xi.len() != self.m || obs.clean.len() != self.m {
            return Err(Error::Decode(format!("observation vectors do not all have length {}", self.m)));
        }
        if obs.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Decode("non-finite observation".into()));
        }
        Ok(obs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorFile {
    pub method: AnchorMethod,
    pub u0: MatrixFile,
    pub v0: MatrixFile,
    /// Anchor quality against the ground truth, when it was available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

impl AnchorFile {
    pub fn from_anchor(a: &Anchor, quality: Option<f64>) -> Self {
        Self {
            method: a.method,
            u0: MatrixFile::from_matrix(&a.u0),
            v0: MatrixFile::from_matrix(&a.v0),
            quality,
        }
    }

    /// Rebuilds the anchor, re-checking orthonormality of both factors.
    pub fn to_anchor(&self) -> Result<Anchor> {
        Anchor::new(self.u0.to_matrix()?, self.v0.to_matrix()?, self.method)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::anchor_oracle;
    use crate::model::{complex_normal, measure, sample_gaussian_iid, sample_rank1_complex};
    use proptest::prelude::*;

    #[test]
    fn f64_payload_is_little_endian() {
        // 1.0 = 0x3FF0000000000000
        assert_eq!(encode_f64(&[1.0]), B64.encode([0, 0, 0, 0, 0, 0, 0xf0, 0x3f]));
        assert!(decode_f64("AAAA").is_err());
    }

    #[test]
    fn ensembles_round_trip() {
        for ens in [
            sample_rank1_complex(3, 2, 5, RngSpec::new(1, 0)).unwrap(),
            sample_gaussian_iid(2, 3, 4, RngSpec::new(2, 0)).unwrap(),
        ] {
            let file = EnsembleFile::from_ensemble(&ens);
            let text = serde_json::to_string(&file).unwrap();
            let back: EnsembleFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_ensemble().unwrap(), ens);
        }
    }

    #[test]
    fn mismatched_payload_is_rejected() {
        let ens = sample_gaussian_iid(2, 2, 3, RngSpec::new(2, 0)).unwrap();
        let mut file = EnsembleFile::from_ensemble(&ens);
        file.m = 4;
        assert!(file.to_ensemble().is_err());
        let text = serde_json::to_string(&EnsembleFile::from_ensemble(&ens)).unwrap();
        let extra = text.replacen('{', "{\"bogus\":1,", 1);
        assert!(serde_json::from_str::<EnsembleFile>(&extra).is_err());
    }

    #[test]
    fn observations_and_anchor_round_trip() {
        let ens = sample_rank1_complex(3, 3, 6, RngSpec::new(3, 0)).unwrap();
        let mut r = RngSpec::new(3, 1).rng();
        let x = DenseMatrix::from_fn(3, 3, |_, _| complex_normal(&mut r));
        let obs = measure(&ens, &x, Some(&[0.1, -0.2, 0.0, 0.3, 0.0, 0.0])).unwrap();
        let back = ObservationsFile::from_observations(&obs).to_observations().unwrap();
        assert_eq!(back, obs);
        let a = anchor_oracle(&x).unwrap();
        let file = AnchorFile::from_anchor(&a, Some(0.25));
        let b = file.to_anchor().unwrap();
        assert_eq!(b.x0, a.x0);
        let mut bad = file.clone();
        bad.u0 = MatrixFile::from_matrix(&a.u0.scale_real(2.0));
        assert!(bad.to_anchor().is_err());
    }

    proptest! {
        #[test]
        fn payloads_round_trip_bit_exactly(vals in proptest::collection::vec(any::<f64>(), 0..64)) {
            let back = decode_f64(&encode_f64(&vals)).unwrap();
            prop_assert_eq!(back.len(), vals.len());
            for (a, b) in back.iter().zip(&vals) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn matrices_round_trip(rows in 1usize..5, cols in 1usize..5, seed in 0u64..1000, real in any::<bool>()) {
            let mut r = RngSpec::new(seed, 0).rng();
            let m = DenseMatrix::from_fn(rows, cols, |_, _| {
                let z = complex_normal(&mut r);
                if real { C64::new(z.re, 0.0) } else { z }
            });
            prop_assert_eq!(MatrixFile::from_matrix(&m).to_matrix().unwrap(), m);
        }
    }
}
