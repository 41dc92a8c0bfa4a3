//! Loading embeddings and labelled corpora from disk.

use std::path::{Path, PathBuf};

use latentforge::directions::LabeledCorpus;
use latentforge::toy::Class;
use latentforge::{read_vectors, Attribute, DatasetManifest, DiscoveryError, EmbeddingVector};

/// Embeddings from a manifest (references only, or every record) or a bare
/// vector file, with identity labels where known.
pub fn load_embeddings(path: &Path, references_only: bool) -> Result<Vec<(usize, EmbeddingVector)>, String> {
    let err = |e: &dyn std::fmt::Display| format!("{}: {e}", path.display());
    if path.extension().is_some_and(|e| e == "lvec") {
        let m = read_vectors(path).map_err(|e| err(&e))?;
        return m.to_f64_rows().into_iter().enumerate().map(|(i, v)| Ok((i, unit(v).map_err(|e| err(&e))?))).collect();
    }
    let manifest = DatasetManifest::read(path).map_err(|e| err(&e))?;
    manifest
        .records
        .iter()
        .filter(|r| !references_only || r.covariate == latentforge::Covariate::Reference)
        .map(|r| Ok((r.identity_id, unit(manifest.embedding(r).to_vec()).map_err(|e| err(&e))?)))
        .collect()
}

/// Vector files store 32-bit floats, so the norm is restored before use.
fn unit(v: Vec<f64>) -> Result<EmbeddingVector, latentforge::GeometryError> {
    EmbeddingVector::normalize(v)
}

/// `<dir>/<attribute>.a.lvec` and `<dir>/<attribute>.b.lvec` per attribute,
/// e.g. `pose.a.lvec`, `expression_0_1.b.lvec`.
pub struct DirCorpus {
    pub dir: PathBuf,
}

impl LabeledCorpus for DirCorpus {
    fn observables(&self, attribute: Attribute, class: Class) -> Result<Vec<Vec<f64>>, DiscoveryError> {
        let side = match class {
            Class::A => "a",
            Class::B => "b",
        };
        let path = self.dir.join(format!("{attribute}.{side}.lvec"));
        let m = read_vectors(&path).map_err(|e| DiscoveryError::Corpus(format!("{}: {e}", path.display())))?;
        Ok(m.to_f64_rows())
    }
}
