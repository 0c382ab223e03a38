//! Binary artifact container.
//!
//! ```text
//! "BFRM" | version u32 | metadata length u32 | metadata (UTF-8 JSON)
//! then, until end of file, sections:
//! name length u32 | name | dtype u8 (0 = f64, 1 = u64) | rank u8 | dims u64 × rank | row-major payload
//! ```
//!
//! All integers and floats are little-endian. The metadata carries a SHA-256
//! digest of every section record, so any flipped byte is caught on load
//! before the numerical invariants are re-checked.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::offline::{BuildMeta, RomArtifact};
use crate::snapshots::{ParameterSet, Provenance};
use crate::sparse::SparsityPattern;

pub const MAGIC: &[u8; 4] = b"BFRM";
pub const FORMAT_VERSION: u32 = 1;

const DTYPE_F64: u8 = 0;
const DTYPE_U64: u8 = 1;

#[derive(Serialize, Deserialize)]
struct Metadata {
    build: BuildMeta,
    gamma_seed: Option<u64>,
    /// Section name → hex SHA-256 of the full section record.
    sections: BTreeMap<String, String>,
}

enum Payload {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

struct Section {
    name: String,
    dims: Vec<usize>,
    payload: Payload,
}

impl Section {
    fn matrix(name: &str, m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Section { name: name.into(), dims: vec![m.nrows(), m.ncols()], payload: Payload::F64(data) }
    }

    fn indices(name: &str, v: &[usize]) -> Self {
        Section { name: name.into(), dims: vec![v.len()], payload: Payload::U64(v.iter().map(|&x| x as u64).collect()) }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.name.len() as u32).to_le_bytes());
        out.extend(self.name.as_bytes());
        out.push(match self.payload {
            Payload::F64(_) => DTYPE_F64,
            Payload::U64(_) => DTYPE_U64,
        });
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend((d as u64).to_le_bytes());
        }
        match &self.payload {
            Payload::F64(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
            Payload::U64(v) => v.iter().for_each(|x| out.extend(x.to_le_bytes())),
        }
        out
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sections_of(a: &RomArtifact) -> Vec<Section> {
    let k = a.n_rb();
    let stack = |name: &str, dims: Vec<usize>, data: Vec<f64>| Section { name: name.into(), dims, payload: Payload::F64(data) };
    let l_rb: Vec<f64> = a
        .l_rb_basis
        .iter()
        .flat_map(|m| (0..k).flat_map(move |i| (0..k).map(move |j| m[(i, j)])))
        .collect();
    let f_rb: Vec<f64> = a.f_rb_basis.iter().flat_map(|v| v.iter().copied()).collect();
    let pattern = &a.lf_pattern;
    vec![
        Section::matrix("Q", &a.q),
        stack("L_rb_basis", vec![a.n_l(), k, k], l_rb),
        stack("f_rb_basis", vec![a.n_f(), k], f_rb),
        Section::matrix("G_L", &a.g_l),
        Section::matrix("G_F", &a.g_f),
        Section::matrix("Llow_gamma", &a.llow_gamma),
        Section::matrix("Flow_gamma", &a.flow_gamma),
        Section::matrix("gamma_u", &a.gamma_u.to_matrix()),
        Section::matrix("gamma_L", &a.gamma_l.to_matrix()),
        Section::matrix("gamma_f", &a.gamma_f.to_matrix()),
        Section::indices("gamma_u_index", a.gamma_u.indices.as_deref().unwrap_or_default()),
        Section::indices("gamma_L_index", a.gamma_l.indices.as_deref().unwrap_or_default()),
        Section::indices("gamma_f_index", a.gamma_f.indices.as_deref().unwrap_or_default()),
        Section::indices("lf_pattern.row_ptr", pattern.row_ptr()),
        Section::indices("lf_pattern.col_idx", pattern.col_idx()),
        Section::matrix("ref_lf_u", &a.ref_lf_u),
        Section::matrix("ref_hf_coeffs", &a.ref_hf_coeffs),
    ]
}

/// Serializes an artifact to bytes.
pub fn to_bytes(artifact: &RomArtifact) -> Result<Vec<u8>> {
    artifact.validate().map_err(|e| Error::Contract(format!("refusing to save an invalid artifact: {e}")))?;
    let encoded: Vec<(String, Vec<u8>)> = sections_of(artifact).into_iter().map(|s| (s.name.clone(), s.encode())).collect();
    let meta = Metadata {
        build: artifact.meta.clone(),
        gamma_seed: artifact.gamma_u.seed,
        sections: encoded.iter().map(|(n, b)| (n.clone(), hex(&Sha256::digest(b)))).collect(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + encoded.iter().map(|(_, b)| b.len()).sum::<usize>());
    out.extend(MAGIC);
    out.extend(FORMAT_VERSION.to_le_bytes());
    out.extend((json.len() as u32).to_le_bytes());
    out.extend(json);
    for (_, bytes) in encoded {
        out.extend(bytes);
    }
    Ok(out)
}

pub fn save(artifact: &RomArtifact, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(artifact)?)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated { section: section.to_string() }),
        }
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, section)?.try_into().unwrap()))
    }

    fn u64(&mut self, section: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, section)?.try_into().unwrap()))
    }

    fn at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn read_section(r: &mut Reader) -> Result<(Section, Vec<u8>)> {
    let start = r.pos;
    let name_len = r.u32("<section header>")? as usize;
    let name = String::from_utf8(r.take(name_len, "<section name>")?.to_vec())
        .map_err(|_| Error::Format("section name is not UTF-8".into()))?;
    let head = r.take(2, &name)?;
    let (dtype, rank) = (head[0], head[1] as usize);
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        dims.push(usize::try_from(r.u64(&name)?).map_err(|_| Error::Format(format!("dimension overflow in `{name}`")))?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("dimension overflow in `{name}`")))?;
    let raw = r.take(count.checked_mul(8).ok_or_else(|| Error::Format("payload too large".into()))?, &name)?;
    let words = raw.chunks_exact(8).map(|c| c.try_into().unwrap());
    let payload = match dtype {
        DTYPE_F64 => Payload::F64(words.map(f64::from_le_bytes).collect()),
        DTYPE_U64 => Payload::U64(words.map(u64::from_le_bytes).collect()),
        other => return Err(Error::Format(format!("unknown dtype tag {other} in `{name}`"))),
    };
    let record = r.bytes[start..r.pos].to_vec();
    Ok((Section { name, dims, payload }, record))
}

struct Sections(BTreeMap<String, Section>);

impl Sections {
    fn get(&self, name: &str) -> Result<&Section> {
        self.0.get(name).ok_or_else(|| Error::Format(format!("missing section `{name}`")))
    }

    fn f64s(&self, name: &str, rank: usize) -> Result<(&[usize], &[f64])> {
        let s = self.get(name)?;
        match &s.payload {
            Payload::F64(v) if s.dims.len() == rank => Ok((&s.dims, v)),
            _ => Err(Error::Format(format!("section `{name}` has the wrong dtype or rank"))),
        }
    }

    fn matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        let (d, v) = self.f64s(name, 2)?;
        Ok(DMatrix::from_row_slice(d[0], d[1], v))
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        let s = self.get(name)?;
        match &s.payload {
            Payload::U64(v) if s.dims.len() == 1 => v
                .iter()
                .map(|&x| usize::try_from(x).map_err(|_| Error::Format(format!("index overflow in `{name}`"))))
                .collect(),
            _ => Err(Error::Format(format!("section `{name}` has the wrong dtype or rank"))),
        }
    }

    fn params(&self, name: &str, provenance: Provenance, seed: Option<u64>) -> Result<ParameterSet> {
        let m = self.matrix(name)?;
        let points = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        Ok(ParameterSet { points, provenance, seed, indices: Some(self.indices(&format!("{name}_index"))?) })
    }
}

/// Parses and validates an artifact.
pub fn from_bytes(bytes: &[u8]) -> Result<RomArtifact> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "<header>").map_err(|_| Error::Format("file too short for magic bytes".into()))? != MAGIC {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u32("<header>")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, expected: FORMAT_VERSION });
    }
    let meta_len = r.u32("<metadata>")? as usize;
    let meta: Metadata =
        serde_json::from_slice(r.take(meta_len, "<metadata>")?).map_err(|e| Error::Format(format!("metadata: {e}")))?;

    let mut sections = BTreeMap::new();
    while !r.at_end() {
        let (section, record) = read_section(&mut r)?;
        let expected = meta
            .sections
            .get(&section.name)
            .ok_or_else(|| Error::Format(format!("unexpected section `{}`", section.name)))?;
        if hex(&Sha256::digest(&record)) != *expected {
            return Err(Error::Corrupt(format!("digest mismatch in section `{}`", section.name)));
        }
        sections.insert(section.name.clone(), section);
    }
    if let Some(missing) = meta.sections.keys().find(|n| !sections.contains_key(*n)) {
        return Err(Error::Truncated { section: missing.clone() });
    }
    let s = Sections(sections);

    let (d, l_rb) = s.f64s("L_rb_basis", 3)?;
    let (n_l, k) = (d[0], d[1]);
    if d[2] != k {
        return Err(Error::Format("L_rb_basis blocks are not square".into()));
    }
    let l_rb_basis = (0..n_l).map(|j| DMatrix::from_row_slice(k, k, &l_rb[j * k * k..(j + 1) * k * k])).collect();
    let (d, f_rb) = s.f64s("f_rb_basis", 2)?;
    let f_rb_basis = (0..d[0]).map(|j| DVector::from_column_slice(&f_rb[j * d[1]..(j + 1) * d[1]])).collect();

    let row_ptr = s.indices("lf_pattern.row_ptr")?;
    let col_idx = s.indices("lf_pattern.col_idx")?;
    let n_rows = row_ptr.len().saturating_sub(1);
    let lf_pattern = Arc::new(SparsityPattern::new(n_rows, n_rows, row_ptr, col_idx).map_err(|e| Error::Corrupt(e.to_string()))?);

    let seed = meta.gamma_seed;
    let artifact = RomArtifact {
        meta: meta.build,
        q: s.matrix("Q")?,
        l_rb_basis,
        f_rb_basis,
        g_l: s.matrix("G_L")?,
        g_f: s.matrix("G_F")?,
        llow_gamma: s.matrix("Llow_gamma")?,
        flow_gamma: s.matrix("Flow_gamma")?,
        gamma_u: s.params("gamma_u", Provenance::GammaU, seed)?,
        gamma_l: s.params("gamma_L", Provenance::GammaL, seed)?,
        gamma_f: s.params("gamma_f", Provenance::GammaF, seed)?,
        lf_pattern,
        ref_lf_u: s.matrix("ref_lf_u")?,
        ref_hf_coeffs: s.matrix("ref_hf_coeffs")?,
    };
    artifact.validate()?;
    Ok(artifact)
}

pub fn load(path: impl AsRef<Path>) -> Result<RomArtifact> {
    from_bytes(&fs::read(path)?)
}
