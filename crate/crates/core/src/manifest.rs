//! On-disk dataset manifests.
//!
//! A dataset directory holds `manifest.json` (header + records),
//! `manifest.csv` (the records alone, for spreadsheets), and two `LVEC` files
//! with one latent row and one embedding row per record.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::identity::GenerationConfig;
use crate::vecfile::{read_vectors, write_vectors, VectorFileError, VectorMatrix};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_CSV: &str = "manifest.csv";
pub const LATENT_FILE: &str = "latents.lvec";
pub const EMBEDDING_FILE: &str = "embeddings.lvec";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Reference,
    Pose,
    Illumination,
    Expression,
}

impl Covariate {
    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::Reference => "reference",
            Covariate::Pose => "pose",
            Covariate::Illumination => "illumination",
            Covariate::Expression => "expression",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub identity_id: usize,
    pub attempts_used: usize,
    /// Embedding distance to the nearest earlier identity at acceptance.
    pub closest_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub latent_dim: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    pub config: GenerationConfig,
    pub bank_fingerprint: String,
    /// False when generation stopped early; `failure` then says why.
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub identities: Vec<IdentitySummary>,
    pub latent_file: String,
    pub embedding_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub sample_id: usize,
    pub identity_id: usize,
    pub covariate: Covariate,
    /// Signed edit distance for pose/illumination, expression index for
    /// expression records, 0 for references.
    pub parameter: f64,
    pub latent_row: usize,
    pub embedding_row: usize,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    header: ManifestHeader,
    records: Vec<ManifestRecord>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Vectors(#[from] VectorFileError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io { path: path.display().to_string(), source }
}

/// Records plus the latent and embedding rows they point into.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<ManifestRecord>,
    pub latents: Vec<Vec<f64>>,
    pub embeddings: Vec<Vec<f64>>,
}

impl DatasetManifest {
    /// Checks that sample ids are dense from 0 and every row index resolves.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let fail = |m: String| Err(ManifestError::Integrity(m));
        for (i, r) in self.records.iter().enumerate() {
            if r.sample_id != i {
                return fail(format!("record {i} has sample_id {}", r.sample_id));
            }
            if r.latent_row >= self.latents.len() {
                return fail(format!("sample {i}: latent_row {} out of {} rows", r.latent_row, self.latents.len()));
            }
            if r.embedding_row >= self.embeddings.len() {
                return fail(format!("sample {i}: embedding_row {} out of {} rows", r.embedding_row, self.embeddings.len()));
            }
            if r.covariate == Covariate::Reference && r.parameter != 0.0 {
                return fail(format!("sample {i}: reference with parameter {}", r.parameter));
            }
        }
        if let Some(row) = self.latents.iter().find(|l| l.len() != self.header.latent_dim) {
            return fail(format!("latent row of dimension {} in a {}-d manifest", row.len(), self.header.latent_dim));
        }
        if let Some(row) = self.embeddings.iter().find(|e| e.len() != self.header.embedding_dim) {
            return fail(format!("embedding row of dimension {} in a {}-d manifest", row.len(), self.header.embedding_dim));
        }
        Ok(())
    }

    pub fn identity_ids(&self) -> BTreeSet<usize> {
        self.records.iter().map(|r| r.identity_id).collect()
    }

    pub fn embedding(&self, record: &ManifestRecord) -> &[f64] {
        &self.embeddings[record.embedding_row]
    }

    pub fn latent(&self, record: &ManifestRecord) -> &[f64] {
        &self.latents[record.latent_row]
    }

    /// Reference record of each identity, in identity order.
    pub fn references(&self) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(|r| r.covariate == Covariate::Reference)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id,identity_id,covariate,parameter,latent_row,embedding_row\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.sample_id,
                r.identity_id,
                r.covariate.as_str(),
                r.parameter,
                r.latent_row,
                r.embedding_row
            );
        }
        out
    }

    /// Writes the four dataset files into `dir` (created if missing).
    pub fn write(&self, dir: &Path) -> Result<(), ManifestError> {
        self.validate()?;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let file = ManifestFile { header: self.header.clone(), records: self.records.clone() };
        let mut json = serde_json::to_string_pretty(&file).expect("manifest serializes");
        json.push('\n');
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, json).map_err(io_err(&path))?;
        let csv = dir.join(MANIFEST_CSV);
        fs::write(&csv, self.to_csv()).map_err(io_err(&csv))?;
        write_vectors(&dir.join(&self.header.latent_file), &VectorMatrix::from_rows(self.header.latent_dim, &self.latents)?)?;
        write_vectors(&dir.join(&self.header.embedding_file), &VectorMatrix::from_rows(self.header.embedding_dim, &self.embeddings)?)?;
        Ok(())
    }

    /// Loads a manifest from its JSON file or its directory.
    pub fn read(path: &Path) -> Result<Self, ManifestError> {
        let json_path: PathBuf = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let dir = json_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&json_path).map_err(io_err(&json_path))?;
        let file: ManifestFile =
            serde_json::from_str(&text).map_err(|source| ManifestError::Json { path: json_path.display().to_string(), source })?;
        let latents = read_vectors(&dir.join(&file.header.latent_file))?;
        let embeddings = read_vectors(&dir.join(&file.header.embedding_file))?;
        let manifest = DatasetManifest {
            header: file.header,
            records: file.records,
            latents: latents.to_f64_rows(),
            embeddings: embeddings.to_f64_rows(),
        };
        manifest.validate()?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> DatasetManifest {
        let header = ManifestHeader {
            latent_dim: 2,
            embedding_dim: 2,
            seed: 1,
            config: GenerationConfig::default(),
            bank_fingerprint: "abc".into(),
            complete: true,
            failure: None,
            identities: vec![IdentitySummary { identity_id: 0, attempts_used: 1, closest_distance: 3.0 }],
            latent_file: LATENT_FILE.into(),
            embedding_file: EMBEDDING_FILE.into(),
        };
        let records = vec![
            ManifestRecord { sample_id: 0, identity_id: 0, covariate: Covariate::Reference, parameter: 0.0, latent_row: 0, embedding_row: 0 },
            ManifestRecord { sample_id: 1, identity_id: 0, covariate: Covariate::Pose, parameter: -0.75, latent_row: 1, embedding_row: 1 },
        ];
        DatasetManifest {
            header,
            records,
            latents: vec![vec![0.5, 0.25], vec![-0.25, 0.25]],
            embeddings: vec![vec![1.0, 0.0], vec![0.6, 0.8]],
        }
    }

    #[test]
    fn write_read_round_trip() {
        let m = tiny();
        let dir = tempfile::tempdir().unwrap();
        m.write(dir.path()).unwrap();
        let back = DatasetManifest::read(dir.path()).unwrap();
        assert_eq!(back.records, m.records);
        assert_eq!(back.header, m.header);
        assert_eq!(back.latents, m.latents);
        let again = tempfile::tempdir().unwrap();
        back.write(again.path()).unwrap();
        for f in [MANIFEST_FILE, MANIFEST_CSV, LATENT_FILE, EMBEDDING_FILE] {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), fs::read(again.path().join(f)).unwrap(), "{f}");
        }
        let csv = fs::read_to_string(dir.path().join(MANIFEST_CSV)).unwrap();
        assert_eq!(csv.lines().nth(2), Some("1,0,pose,-0.75,1,1"));
    }

    #[test]
    fn dangling_rows_fail_on_load() {
        let mut m = tiny();
        let dir = tempfile::tempdir().unwrap();
        m.write(dir.path()).unwrap();
        m.records[1].embedding_row = 7;
        let file = ManifestFile { header: m.header.clone(), records: m.records.clone() };
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&file).unwrap()).unwrap();
        assert!(matches!(DatasetManifest::read(dir.path()), Err(ManifestError::Integrity(_))));
    }

    #[test]
    fn validate_catches_sparse_ids() {
        let mut m = tiny();
        m.records[1].sample_id = 5;
        assert!(m.validate().is_err());
        let mut m = tiny();
        m.records[0].parameter = 1.0;
        assert!(m.validate().is_err());
    }
}
