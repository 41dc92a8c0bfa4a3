//! Serializable reports written by the pipeline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::manifest::DatasetManifest;
use crate::metrics::{
    build_protocol_scores, fnmr_at_fmr, mgs, sep, summarize, MetricError, MetricResult, Protocol, RocCurve, ScoreSummary,
    UniquenessOptions, UniquenessResult,
};
use crate::runtime::RuntimeModel;
use crate::scaling::ScalingSeries;

/// FNMR difference beyond which a synthetic result is flagged against the
/// real one (absolute, in FNMR units).
pub const HIGHLIGHT_DELTA: f64 = 0.05;

/// JSON has no infinities, so non-finite floats are written as strings.
mod tagged_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float tag {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FnmrEntry {
    pub fmr_target: f64,
    #[serde(with = "tagged_float")]
    pub threshold: f64,
    pub fnmr: f64,
    pub achieved_fmr: f64,
}

impl From<MetricResult<f64>> for FnmrEntry {
    fn from(r: MetricResult<f64>) -> Self {
        Self { fmr_target: r.fmr_target, threshold: r.threshold, fnmr: r.fnmr, achieved_fmr: r.achieved_fmr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub genuine_count: usize,
    pub impostor_count: usize,
    pub summary: ScoreSummary<f64>,
    pub result: FnmrEntry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityComparison {
    pub protocol: Protocol,
    pub mgs: f64,
    pub sep: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub system: String,
    /// "synthetic" or "real".
    pub dataset: String,
    pub fmr_target: f64,
    pub bank_fingerprint: String,
    pub protocols: Vec<ProtocolReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub similarity: Vec<SimilarityComparison>,
}

impl BenchmarkReport {
    pub fn protocol(&self, p: Protocol) -> Option<&ProtocolReport> {
        self.protocols.iter().find(|r| r.protocol == p)
    }

    /// MGS/SEP per protocol against a report on real data. Protocols missing
    /// from either side are skipped.
    pub fn compare_with(&mut self, real: &BenchmarkReport) -> Result<(), MetricError> {
        self.similarity.clear();
        for syn in &self.protocols {
            if let Some(r) = real.protocol(syn.protocol) {
                self.similarity.push(SimilarityComparison {
                    protocol: syn.protocol,
                    mgs: mgs(&syn.summary, &r.summary)?,
                    sep: sep(&syn.summary, &r.summary)?,
                });
            }
        }
        Ok(())
    }
}

/// Scores each requested protocol of a manifest at one FMR target.
pub fn benchmark(
    manifest: &DatasetManifest,
    system: &str,
    dataset: &str,
    protocols: &[Protocol],
    fmr_target: f64,
) -> Result<BenchmarkReport, MetricError> {
    let mut out = Vec::with_capacity(protocols.len());
    for &protocol in protocols {
        let scores = build_protocol_scores(manifest, protocol)?;
        let result = fnmr_at_fmr(&scores, fmr_target)?;
        out.push(ProtocolReport {
            protocol,
            genuine_count: scores.genuine.len(),
            impostor_count: scores.impostor.len(),
            summary: summarize(&scores)?,
            result: result.into(),
        });
    }
    Ok(BenchmarkReport {
        system: system.to_string(),
        dataset: dataset.to_string(),
        fmr_target,
        bank_fingerprint: manifest.header.bank_fingerprint.clone(),
        protocols: out,
        similarity: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TprRow {
    pub fmr: f64,
    pub reference: f64,
    pub sy_se: f64,
    pub sy_sy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub options: UniquenessOptions,
    pub sy_count: usize,
    pub se_count: usize,
    pub sy_se_pairs: usize,
    pub sy_se_total: usize,
    pub sy_sy_pairs: usize,
    pub sy_sy_total: usize,
    pub subsampled: bool,
    pub tpr_at_fmr: Vec<TprRow>,
    pub ref_roc: RocCurve<f64>,
    pub sy_se_roc: RocCurve<f64>,
    pub sy_sy_roc: RocCurve<f64>,
}

pub const REPORT_FMRS: [f64; 5] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1];

impl UniquenessReport {
    pub fn new(result: UniquenessResult<f64>, options: UniquenessOptions, sy_count: usize, se_count: usize) -> Self {
        let tpr_at_fmr = REPORT_FMRS
            .iter()
            .map(|&fmr| TprRow {
                fmr,
                reference: result.ref_roc.tpr_at_fmr(fmr),
                sy_se: result.sy_se_roc.tpr_at_fmr(fmr),
                sy_sy: result.sy_sy_roc.tpr_at_fmr(fmr),
            })
            .collect();
        Self {
            options,
            sy_count,
            se_count,
            sy_se_pairs: result.sy_se_pairs,
            sy_se_total: result.sy_se_total,
            sy_sy_pairs: result.sy_sy_pairs,
            sy_sy_total: result.sy_sy_total,
            subsampled: result.subsampled,
            tpr_at_fmr,
            ref_roc: result.ref_roc,
            sy_se_roc: result.sy_se_roc,
            sy_sy_roc: result.sy_sy_roc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub ict: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<RuntimeModel<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub seed: u64,
    pub checkpoints: Vec<usize>,
    pub series: Vec<ScalingSeries>,
    /// Fits of cumulative attempts against identity count.
    pub fits: Vec<ScalingFit>,
}

impl ScalingReport {
    pub fn new(seed: u64, checkpoints: Vec<usize>, series: Vec<ScalingSeries>) -> Self {
        let fits = series
            .iter()
            .map(|s| match s.fit_attempts() {
                Ok(m) => ScalingFit { ict: s.ict, model: Some(m), error: None },
                Err(e) => ScalingFit { ict: s.ict, model: None, error: Some(e.to_string()) },
            })
            .collect();
        Self { seed, checkpoints, series, fits }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub fnmr: f64,
    /// Set on synthetic rows whose FNMR is off from the same system's real
    /// row by more than [`HIGHLIGHT_DELTA`].
    pub highlight: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub system: String,
    pub dataset: String,
    pub cells: BTreeMap<Protocol, TableCell>,
}

/// FNMR per (system, dataset) row and protocol column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub fmr_target: f64,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TableError {
    #[error("no reports to merge")]
    Empty,
    #[error("reports use different FMR targets ({0} vs {1})")]
    MixedTargets(f64, f64),
    #[error("duplicate row for system {system:?} on {dataset:?} data")]
    DuplicateRow { system: String, dataset: String },
}

impl ComparisonTable {
    pub fn merge(reports: &[BenchmarkReport]) -> Result<Self, TableError> {
        let first = reports.first().ok_or(TableError::Empty)?;
        let mut rows: BTreeMap<(String, String), BTreeMap<Protocol, f64>> = BTreeMap::new();
        for r in reports {
            if r.fmr_target != first.fmr_target {
                return Err(TableError::MixedTargets(first.fmr_target, r.fmr_target));
            }
            let key = (r.system.clone(), r.dataset.clone());
            if rows.contains_key(&key) {
                return Err(TableError::DuplicateRow { system: key.0, dataset: key.1 });
            }
            rows.insert(key, r.protocols.iter().map(|p| (p.protocol, p.result.fnmr)).collect());
        }
        let rows = rows
            .iter()
            .map(|((system, dataset), values)| {
                let real = (dataset != "real").then(|| rows.get(&(system.clone(), "real".to_string()))).flatten();
                let cells = values
                    .iter()
                    .map(|(&p, &fnmr)| {
                        let highlight = real.and_then(|r| r.get(&p)).is_some_and(|&r| (fnmr - r).abs() > HIGHLIGHT_DELTA);
                        (p, TableCell { fnmr, highlight })
                    })
                    .collect();
                TableRow { system: system.clone(), dataset: dataset.clone(), cells }
            })
            .collect();
        Ok(Self { fmr_target: first.fmr_target, rows })
    }

    /// Markdown rendering; highlighted cells are bold.
    pub fn to_markdown(&self) -> String {
        let mut out = format!("FNMR at FMR {:e}\n\n| system | dataset | U | E | P |\n|---|---|---|---|---|\n", self.fmr_target);
        for row in &self.rows {
            let _ = write!(out, "| {} | {} |", row.system, row.dataset);
            for p in Protocol::ALL {
                match row.cells.get(&p) {
                    Some(c) if c.highlight => {
                        let _ = write!(out, " **{:.4}** |", c.fnmr);
                    }
                    Some(c) => {
                        let _ = write!(out, " {:.4} |", c.fnmr);
                    }
                    None => out.push_str(" - |"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}
