//! Self-describing normalizer file.
//!
//! Layout: magic `b"ISNB"`, version u16, reserved u16, manifest length u64, the JSON
//! manifest, the tensors it lists (each a complete tensor file) in manifest order,
//! and a CRC32 over everything before it. Each tensor's SHA-256 is also recorded in
//! the manifest and checked on load.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{LinearMap, Method, Normalizer, NormalizerParts};
use crate::error::{Error, Result};
use crate::format::{sha256_hex, verify_trailing_crc, Cursor, TensorFile};
use crate::moments::Eigensystem;

pub const BUNDLE_MAGIC: &[u8; 4] = b"ISNB";
pub const BUNDLE_VERSION: u16 = 1;
const HEADER: usize = 4 + 2 + 2 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<usize>,
    pub bytes: u64,
    pub sha256: String,
}

/// Human-readable summary stored at the head of a normalizer file. The scalar
/// fields are informational; the authoritative values live in the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub method: String,
    pub channels: usize,
    pub n_samples: u64,
    pub alpha: Option<f64>,
    pub phi: f64,
    pub global_mean: f64,
    pub global_sigma: f64,
    pub hadamard_recipe: Option<String>,
    pub tensors: Vec<TensorEntry>,
}

fn map_tensor(m: &LinearMap) -> TensorFile {
    match m {
        LinearMap::Scalar(s) => TensorFile::new(vec![], crate::format::TensorData::F64(vec![*s])).expect("scalar"),
        LinearMap::Diagonal(d) => TensorFile::from_vector(d),
        LinearMap::Dense(a) => TensorFile::from_matrix(a),
    }
}

fn tensor_map(t: &TensorFile) -> Result<LinearMap> {
    match t.dims().len() {
        0 => Ok(LinearMap::Scalar(t.values_f64()[0])),
        1 => Ok(LinearMap::Diagonal(t.to_vector()?)),
        2 => Ok(LinearMap::Dense(t.to_matrix()?)),
        r => Err(Error::Format(format!("linear map tensor has rank {r}"))),
    }
}

impl Normalizer {
    fn named_tensors(&self) -> Vec<(&'static str, TensorFile)> {
        let scalars = Array1::from(vec![self.phi, self.global_mean, self.global_sigma]);
        let mut out = vec![
            ("scalars", TensorFile::from_vector(&scalars)),
            ("offset", TensorFile::from_vector(&self.offset)),
            ("forward", map_tensor(&self.forward)),
            ("inverse", map_tensor(&self.inverse)),
        ];
        if let Some(e) = &self.eigensystem {
            out.push(("eigenvalues", TensorFile::from_vector(&e.values)));
            out.push(("eigenvectors", TensorFile::from_matrix(&e.vectors)));
        }
        if let Some((_, h)) = &self.hadamard {
            out.push(("hadamard", TensorFile::from_matrix(h)));
        }
        out
    }

    fn manifest_with(&self, tensors: Vec<TensorEntry>) -> Manifest {
        Manifest {
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            method: self.method.tag().to_string(),
            channels: self.channels(),
            n_samples: self.n_samples,
            alpha: self.alpha(),
            phi: self.phi,
            global_mean: self.global_mean,
            global_sigma: self.global_sigma,
            hadamard_recipe: self.hadamard_recipe().map(ToString::to_string),
            tensors,
        }
    }

    fn encoded(&self) -> (Manifest, Vec<Vec<u8>>) {
        let mut entries = Vec::new();
        let mut blobs = Vec::new();
        for (name, tensor) in self.named_tensors() {
            let bytes = tensor.to_bytes();
            entries.push(TensorEntry {
                name: name.to_string(),
                dims: tensor.dims().to_vec(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
            blobs.push(bytes);
        }
        (self.manifest_with(entries), blobs)
    }

    pub fn manifest(&self) -> Manifest {
        self.encoded().0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (manifest, blobs) = self.encoded();
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_MAGIC);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for blob in blobs {
            out.extend_from_slice(&blob);
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Normalizer> {
        let (manifest, tensors) = decode(bytes)?;
        let take = |name: &str| -> Option<&TensorFile> {
            manifest.tensors.iter().position(|e| e.name == name).map(|i| &tensors[i])
        };
        let need = |name: &str| -> Result<&TensorFile> {
            take(name).ok_or_else(|| Error::IncompleteNormalizer(format!("missing tensor `{name}`")))
        };
        let method: Method = manifest.method.parse()?;
        let scalars = need("scalars")?.to_vector()?;
        if scalars.len() != 3 {
            return Err(Error::Format("scalars tensor must hold 3 values".into()));
        }
        let eigensystem = match (take("eigenvalues"), take("eigenvectors")) {
            (Some(v), Some(u)) => Some(Eigensystem { values: v.to_vector()?, vectors: u.to_matrix()? }),
            (None, None) => None,
            _ => return Err(Error::IncompleteNormalizer("eigensystem is only partly stored".into())),
        };
        let hadamard = match (take("hadamard"), &manifest.hadamard_recipe) {
            (Some(h), Some(r)) => Some((r.parse()?, h.to_matrix()?)),
            (None, None) => None,
            _ => return Err(Error::IncompleteNormalizer("Hadamard matrix and recipe must both be stored".into())),
        };
        Normalizer::from_parts(NormalizerParts {
            method,
            offset: need("offset")?.to_vector()?,
            forward: tensor_map(need("forward")?)?,
            inverse: tensor_map(need("inverse")?)?,
            phi: scalars[0],
            global_mean: scalars[1],
            global_sigma: scalars[2],
            n_samples: manifest.n_samples,
            eigensystem,
            hadamard,
        })
    }
}

/// Manifest of a serialized normalizer, after integrity checks.
pub fn read_manifest(bytes: &[u8]) -> Result<Manifest> {
    decode(bytes).map(|(m, _)| m)
}

fn decode(bytes: &[u8]) -> Result<(Manifest, Vec<TensorFile>)> {
    if bytes.len() < 4 || &bytes[..4] != BUNDLE_MAGIC {
        return Err(Error::Format("missing normalizer magic".into()));
    }
    let body = verify_trailing_crc(bytes, HEADER)?;
    let mut cursor = Cursor { bytes: body, pos: 4 };
    let version = cursor.u16()?;
    if version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: BUNDLE_VERSION });
    }
    cursor.u16()?;
    let len = usize::try_from(cursor.u64()?).map_err(|_| Error::Format("manifest too large".into()))?;
    let manifest: Manifest = serde_json::from_slice(cursor.take(len)?)?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        let n = usize::try_from(entry.bytes).map_err(|_| Error::Format("tensor too large".into()))?;
        let blob = cursor.take(n)?;
        if sha256_hex(blob) != entry.sha256 {
            return Err(Error::ChecksumFailure);
        }
        let tensor = TensorFile::from_bytes(blob)?;
        if tensor.dims() != entry.dims.as_slice() {
            return Err(Error::Format(format!("tensor `{}` dims disagree with manifest", entry.name)));
        }
        tensors.push(tensor);
    }
    if !cursor.rest().is_empty() {
        return Err(Error::Format("trailing bytes after tensors".into()));
    }
    Ok((manifest, tensors))
}
