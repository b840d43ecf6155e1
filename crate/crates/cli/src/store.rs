//! On-disk layout of trained bases: `<out>/k<K>/class_<i>.tsvd` plus a
//! `manifest.json` describing and checksumming them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tsvd_core::classifier::ClassBasisSet;
use tsvd_core::container;
use tsvd_core::mnist::Normalization;
use tsvd_core::{Tensor3, TubeSpectrum};

use crate::exit::CliError;

const FORMAT: &str = "TSVD1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub k: usize,
    pub ell: usize,
    pub n: usize,
    pub normalization: String,
    pub classes: Vec<ClassEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub label: usize,
    pub count: usize,
    pub file: String,
    pub sha256: String,
    /// Norms of all singular tubes of the class tensor.
    pub tube_norms: Vec<f64>,
}

pub fn k_dir(out: &Path, k: usize) -> PathBuf {
    out.join(format!("k{k}"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Writes one basis file per class and the manifest; returns bytes written.
pub fn save(
    out: &Path,
    set: &ClassBasisSet,
    spectra: &[TubeSpectrum],
    normalization: Normalization,
) -> Result<u64, CliError> {
    let dir = k_dir(out, set.k());
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let (ell, n) = set.slice_shape();
    let mut classes = Vec::new();
    let mut written = 0u64;
    for (basis, spectrum) in set.bases().iter().zip(spectra) {
        let file = format!("class_{}.tsvd", basis.label());
        let bytes = container::encode_basis(basis.u(), basis.source_count());
        write_file(&dir.join(&file), &bytes)?;
        written += bytes.len() as u64;
        classes.push(ClassEntry {
            label: basis.label(),
            count: basis.source_count(),
            file,
            sha256: sha256_hex(&bytes),
            tube_norms: spectrum.norms().to_vec(),
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        k: set.k(),
        ell,
        n,
        normalization: normalization.name().into(),
        classes,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(written)
}

pub fn read_manifest(out: &Path, k: usize) -> Result<Manifest, CliError> {
    let path = k_dir(out, k).join("manifest.json");
    let text = read_file(&path)?;
    let manifest: Manifest = serde_json::from_slice(&text)
        .map_err(|e| CliError::parse(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT || manifest.k != k {
        return Err(CliError::manifest(format!(
            "{}: expected {FORMAT} bases with k = {k}, found {} with k = {}",
            path.display(),
            manifest.format,
            manifest.k
        )));
    }
    Ok(manifest)
}

pub struct Loaded {
    pub manifest: Manifest,
    pub bases: ClassBasisSet,
}

impl Loaded {
    pub fn normalization(&self) -> Result<Normalization, CliError> {
        self.manifest
            .normalization
            .parse()
            .map_err(|_| CliError::manifest(format!("unknown normalization `{}`", self.manifest.normalization)))
    }
}

/// Loads and cross-checks the bases for `k` against their manifest.
pub fn load(out: &Path, k: usize) -> Result<Loaded, CliError> {
    let manifest = read_manifest(out, k)?;
    let dir = k_dir(out, k);
    let mut entries: Vec<(usize, Tensor3, usize)> = Vec::new();
    for (i, entry) in manifest.classes.iter().enumerate() {
        let path = dir.join(&entry.file);
        let bytes = read_file(&path)?;
        if entry.label != i {
            return Err(CliError::manifest(format!(
                "manifest lists label {} at position {i}",
                entry.label
            )));
        }
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CliError::manifest(format!("{}: checksum mismatch", path.display())));
        }
        let c = container::decode(&bytes)?;
        let d = c.u.dims();
        if (d.ell, d.m, d.n) != (manifest.ell, k, manifest.n) || c.source.m != entry.count {
            return Err(CliError::manifest(format!(
                "{}: basis {} from {} images, manifest says {}x{k}x{} from {}",
                path.display(),
                d,
                c.source.m,
                manifest.ell,
                manifest.n,
                entry.count
            )));
        }
        entries.push((entry.label, c.u, entry.count));
    }
    let bases = ClassBasisSet::new(entries)?;
    Ok(Loaded { manifest, bases })
}
