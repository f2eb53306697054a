//! Corpus ingestion, the two training pipelines and run-time conversion.

pub mod checkpoint;
pub mod convert;
pub mod features;
pub mod manifest;
pub mod toy;
pub mod train;

pub use checkpoint::{check_vocabularies, ModelCheckpoint};
pub use convert::{convert_utterance, convert_waveform, map_statistics, Conversion};
pub use features::{analyze_waveform, energy_gate, AnalysisConfig, Utterance};
pub use manifest::{CorpusManifest, EmotionId, EmotionVocabulary, ManifestEntry};
pub use toy::{make_toy_corpus, ToyConfig, ToyCorpus, ToyUtterance};
pub use train::{
    summarize, train_prosody, train_spectrum, CorpusSummary, Profile, TrainOutcome, TrainingSet,
};

use std::path::PathBuf;

use crate::signal_io::{load_archive, read_wav, FeatureArchive};
use features::{META_EMOTION, META_ID, META_SPEAKER};

#[derive(Debug, Clone)]
pub struct IngestFailure {
    pub id: String,
    pub path: PathBuf,
    pub error: String,
    pub io_or_corruption: bool,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    /// `(id, archive)` in manifest order.
    pub archives: Vec<(String, FeatureArchive)>,
    pub failures: Vec<IngestFailure>,
}

impl IngestReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty()
    }
}

fn is_archive(path: &std::path::Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("evcf"))
}

fn ingest_entry(
    entry: &ManifestEntry,
    cfg: &AnalysisConfig,
) -> crate::error::Result<FeatureArchive> {
    if is_archive(&entry.path) {
        let mut a = load_archive(&entry.path)?;
        // tags are only filled in when absent, so extracted archives pass through unchanged
        for (key, value) in [
            (META_ID, &entry.id),
            (META_SPEAKER, &entry.speaker),
            (META_EMOTION, &entry.emotion),
        ] {
            if a.meta(key).is_none() {
                a.set_meta(key, value.clone());
            }
        }
        Utterance::from_archive(&a)?;
        return Ok(a);
    }
    let mut a = analyze_waveform(&read_wav(&entry.path)?, cfg)?;
    a.set_meta(META_ID, entry.id.clone());
    a.set_meta(META_SPEAKER, entry.speaker.clone());
    a.set_meta(META_EMOTION, entry.emotion.clone());
    Ok(a)
}

/// Analyzes WAV entries and loads `.evcf` entries. Failures are collected
/// per entry instead of aborting the run.
pub fn ingest(manifest: &CorpusManifest, cfg: &AnalysisConfig) -> IngestReport {
    let mut report = IngestReport::default();
    for entry in manifest.entries() {
        match ingest_entry(entry, cfg) {
            Ok(a) => report.archives.push((entry.id.clone(), a)),
            Err(e) => report.failures.push(IngestFailure {
                id: entry.id.clone(),
                path: entry.path.clone(),
                error: e.to_string(),
                io_or_corruption: e.is_io_or_corruption(),
            }),
        }
    }
    report
}
