//! On-disk formats: matrix CSV, the binary matrix container, vector CSVs,
//! problem bundles and run manifests.
//!
//! Floats are written as `{:.16e}` (17 significant digits) and read back
//! exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, norm, DenseMatrix, ROW_NORM_TOL};
use crate::sysgen::{CorruptedProblem, GenSpec};

pub const MAGIC: &[u8; 4] = b"KQRK";
pub const CONTAINER_VERSION: u32 = 1;
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Writes one row per line, no header.
pub fn write_matrix_csv<W: Write>(a: &DenseMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..a.rows() {
        w.write_record(a.row(i).iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless CSV matrix. The normalized flag is set when every row
/// has unit norm.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(Error::DimensionMismatch(format!("row {rows} has {} entries", rec.len())));
        }
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidSpec(format!("bad number {field:?} in row {rows}")))?;
            data.push(v);
        }
        rows += 1;
    }
    let a = DenseMatrix::new(rows, cols.unwrap_or(0), data)?;
    let unit = a.row_sq_norms().iter().all(|s| (s.sqrt() - 1.0).abs() <= ROW_NORM_TOL);
    if unit && rows > 0 {
        a.with_row_normalized_flag(true)
    } else {
        Ok(a)
    }
}

/// Binary container: magic, version (u32), m and n (u64), normalized flag
/// (u8), then the entries row-major, all little-endian.
pub fn write_matrix_bin<W: Write>(a: &DenseMatrix, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(25 + 8 * a.as_slice().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
    buf.extend_from_slice(&(a.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(a.cols() as u64).to_le_bytes());
    buf.push(a.is_row_normalized() as u8);
    for v in a.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    decode_matrix_bin(&bytes).map_err(|reason| format_err(path, reason))?
}

fn decode_matrix_bin(bytes: &[u8]) -> std::result::Result<Result<DenseMatrix>, String> {
    if bytes.len() < 25 || &bytes[..4] != MAGIC {
        return Err("not a KQRK matrix container".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != CONTAINER_VERSION {
        return Err(format!("unsupported container version {version}"));
    }
    let m = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes")) as usize;
    let flag = match bytes[24] {
        0 => false,
        1 => true,
        f => return Err(format!("bad normalized flag {f}")),
    };
    let expected = m.checked_mul(n).and_then(|c| c.checked_mul(8)).ok_or("dimensions overflow")?;
    let body = &bytes[25..];
    if body.len() != expected {
        return Err(format!("expected {expected} bytes of entries for {m}x{n}, found {}", body.len()));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DenseMatrix::new(m, n, data).and_then(|a| a.with_row_normalized_flag(flag)))
}

/// Single-column CSV with a header naming the vector.
pub fn write_vector_csv<W: Write>(name: &str, v: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([name])?;
    for x in v {
        w.write_record([fmt_f64(*x)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vector_csv<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let field = rec.get(0).unwrap_or("");
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("bad number {field:?}")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite { index: out.len(), value: v });
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleNorms {
    pub frobenius_sq: f64,
    pub x_star_norm: f64,
    pub eta_inf: f64,
    pub xi_inf: f64,
    pub xi_support: usize,
    pub b_norm: f64,
}

/// `manifest.json` of a problem directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub schema_version: u32,
    pub m: usize,
    pub n: usize,
    pub spec: Option<GenSpec>,
    pub norms: BundleNorms,
    /// File name to hex SHA-256.
    pub checksums: BTreeMap<String, String>,
}

const VECTORS: [&str; 5] = ["x_star", "b_t", "eta", "xi", "b"];
const MATRIX_FILE: &str = "matrix.kqrk";

fn vector_of<'a>(p: &'a CorruptedProblem, name: &str) -> &'a [f64] {
    match name {
        "x_star" => &p.x_star,
        "b_t" => &p.b_t,
        "eta" => &p.eta,
        "xi" => &p.xi,
        _ => &p.b,
    }
}

/// Writes a problem directory and returns its manifest.
pub fn save_problem(dir: &Path, problem: &CorruptedProblem, spec: Option<&GenSpec>) -> Result<BundleManifest> {
    fs::create_dir_all(dir)?;
    let mut checksums = BTreeMap::new();
    let mut bin = Vec::new();
    write_matrix_bin(&problem.system, &mut bin)?;
    fs::write(dir.join(MATRIX_FILE), &bin)?;
    checksums.insert(MATRIX_FILE.to_string(), sha256_hex(&bin));
    for name in VECTORS {
        let mut buf = Vec::new();
        write_vector_csv(name, vector_of(problem, name), &mut buf)?;
        let file = format!("{name}.csv");
        fs::write(dir.join(&file), &buf)?;
        checksums.insert(file, sha256_hex(&buf));
    }
    let manifest = BundleManifest {
        schema_version: BUNDLE_SCHEMA_VERSION,
        m: problem.m(),
        n: problem.n(),
        spec: spec.cloned(),
        norms: BundleNorms {
            frobenius_sq: problem.system.frobenius_sq(),
            x_star_norm: norm(&problem.x_star),
            eta_inf: inf_norm(&problem.eta),
            xi_inf: inf_norm(&problem.xi),
            xi_support: problem.xi.iter().filter(|v| **v != 0.0).count(),
            b_norm: norm(&problem.b),
        },
        checksums,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Reads a problem directory, checking every file against its checksum.
pub fn load_problem(dir: &Path) -> Result<(CorruptedProblem, BundleManifest)> {
    let manifest: BundleManifest = read_json(&dir.join(MANIFEST_FILE))?;
    verify_checksums(dir, &manifest.checksums)?;
    let system = read_matrix_bin(&dir.join(MATRIX_FILE))?;
    let mut vecs = BTreeMap::new();
    for name in VECTORS {
        let path = dir.join(format!("{name}.csv"));
        vecs.insert(name, read_vector_csv(fs::File::open(&path)?)?);
    }
    let mut take = |k: &str| vecs.remove(k).expect("read above");
    let problem = CorruptedProblem {
        system,
        x_star: take("x_star"),
        b_t: take("b_t"),
        eta: take("eta"),
        xi: take("xi"),
        b: take("b"),
    };
    if problem.m() != manifest.m || problem.n() != manifest.n {
        return Err(format_err(dir, "matrix dimensions disagree with the manifest"));
    }
    Ok((problem, manifest))
}

pub fn verify_checksums(dir: &Path, checksums: &BTreeMap<String, String>) -> Result<()> {
    for (file, expected) in checksums {
        let path = dir.join(file);
        let actual = sha256_file(&path)?;
        if &actual != expected {
            return Err(Error::Checksum(format!("{} has sha256 {actual}, manifest says {expected}", path.display())));
        }
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_bytes(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// Provenance written next to every command's outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub build: String,
    pub subcommand: String,
    /// Fully resolved parameters.
    pub params: serde_json::Value,
    pub seeds: Vec<u64>,
    /// Levels moved to the nearest feasible value, one message each.
    pub snapped: Vec<String>,
    pub inputs: Vec<PathBuf>,
    /// Output file name (relative to the manifest) to hex SHA-256.
    pub outputs: BTreeMap<String, String>,
    /// Excluded from reproducibility comparisons.
    pub wall_clock_seconds: Option<f64>,
}

impl RunManifest {
    /// Checks every listed output in `dir` against its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        verify_checksums(dir, &self.outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraction::Fraction;
    use crate::sysgen::generate;

    #[test]
    fn matrix_csv_round_trip() {
        let a = DenseMatrix::from_rows(&[[0.1, -2.5e-300], [std::f64::consts::PI, 1e300]]).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&a, &mut buf).unwrap();
        let b = read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn binary_round_trip_keeps_flag() {
        let p = generate(&GenSpec::new(10, 3, Fraction::new(1, 10).unwrap(), 1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.kqrk");
        let mut buf = Vec::new();
        write_matrix_bin(&p.system, &mut buf).unwrap();
        assert_eq!(buf.len(), 25 + 8 * 30);
        assert_eq!(&buf[..4], b"KQRK");
        fs::write(&path, &buf).unwrap();
        let back = read_matrix_bin(&path).unwrap();
        assert_eq!(back, p.system);
        assert!(back.is_row_normalized());
    }

    #[test]
    fn corrupt_container_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.kqrk");
        fs::write(&path, b"KQRK\x01\0\0\0").unwrap();
        assert!(matches!(read_matrix_bin(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn bundle_round_trip_and_tamper_detection() {
        let spec = GenSpec::new(20, 4, Fraction::new(1, 10).unwrap(), 5);
        let p = generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = save_problem(dir.path(), &p, Some(&spec)).unwrap();
        assert_eq!(m.norms.xi_support, 2);
        let (back, m2) = load_problem(dir.path()).unwrap();
        assert_eq!(back, p);
        assert_eq!(m, m2);
        fs::write(dir.path().join("b.csv"), "b\n1.0\n").unwrap();
        assert!(matches!(load_problem(dir.path()), Err(Error::Checksum(_))));
    }
}
