use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::vawgan::{ConditionVector, EMOTION_SLOTS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub speaker: String,
    pub emotion: String,
}

/// Ordered emotion labels; a label's position is its one-hot slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionVocabulary {
    labels: Vec<String>,
}

/// A label resolved against a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmotionId {
    pub label: String,
    pub slot: usize,
}

impl EmotionId {
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; EMOTION_SLOTS];
        v[self.slot] = 1.0;
        v
    }

    pub fn condition(&self, f0: Option<f64>) -> Result<ConditionVector> {
        ConditionVector::new(self.one_hot(), f0)
    }
}

fn valid_token(s: &str) -> bool {
    !s.is_empty() && !s.contains(['\t', '\n', '\r', ',']) && s.trim() == s
}

impl EmotionVocabulary {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() || labels.len() > EMOTION_SLOTS {
            return Err(Error::Vocabulary(format!(
                "{} labels, expected 1..={EMOTION_SLOTS}",
                labels.len()
            )));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != labels.len() || !labels.iter().all(|l| valid_token(l)) {
            return Err(Error::Vocabulary(format!(
                "labels must be unique plain tokens: {labels:?}"
            )));
        }
        Ok(Self { labels })
    }

    /// Sorted distinct labels.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let set: BTreeSet<&str> = labels.into_iter().collect();
        Self::new(set.into_iter().map(str::to_string).collect())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Result<EmotionId> {
        match self.labels.iter().position(|l| l == label) {
            Some(slot) => Ok(EmotionId {
                label: label.to_string(),
                slot,
            }),
            None => Err(Error::UnknownEmotion {
                label: label.to_string(),
                vocabulary: self.to_meta(),
            }),
        }
    }

    pub fn to_meta(&self) -> String {
        self.labels.join(",")
    }

    pub fn from_meta(s: &str) -> Result<Self> {
        Self::new(s.split(',').map(str::to_string).collect())
    }
}

/// Tab-separated `id, path, speaker, emotion` lines; blank lines and lines
/// starting with `#` are skipped. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    entries: Vec<ManifestEntry>,
    vocabulary: EmotionVocabulary,
}

impl CorpusManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for e in &entries {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id '{}'", e.id)));
            }
            for field in [&e.id, &e.speaker, &e.emotion] {
                if !valid_token(field) {
                    return Err(Error::Manifest(format!(
                        "invalid field '{field}' in entry '{}'",
                        e.id
                    )));
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::Manifest("no entries".into()));
        }
        let vocabulary = EmotionVocabulary::from_labels(entries.iter().map(|e| e.emotion.as_str()))
            .map_err(|e| Error::Manifest(e.to_string()))?;
        Ok(Self {
            entries,
            vocabulary,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Manifest(format!(
                    "line {}: expected 4 tab-separated fields, found {}",
                    n + 1,
                    fields.len()
                )));
            }
            let path = PathBuf::from(fields[1]);
            entries.push(ManifestEntry {
                id: fields[0].to_string(),
                path: if path.is_relative() {
                    base_dir.join(path)
                } else {
                    path
                },
                speaker: fields[2].to_string(),
                emotion: fields[3].to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Serializes with paths relative to `base_dir` where possible.
    pub fn to_text(&self, base_dir: &Path) -> String {
        let mut s = String::from("# id\tpath\tspeaker\temotion\n");
        for e in &self.entries {
            let p = e.path.strip_prefix(base_dir).unwrap_or(&e.path);
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.id,
                p.display(),
                e.speaker,
                e.emotion
            ));
        }
        s
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn vocabulary(&self) -> &EmotionVocabulary {
        &self.vocabulary
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves_paths() {
        let text = "# header\nu1\twav/u1.wav\ts1\tneutral\n\nu2\t/abs/u2.evcf\ts1\tangry\n";
        let m = CorpusManifest::parse(text, Path::new("/corpus")).unwrap();
        assert_eq!(m.entries().len(), 2);
        assert_eq!(m.entries()[0].path, PathBuf::from("/corpus/wav/u1.wav"));
        assert_eq!(m.entries()[1].path, PathBuf::from("/abs/u2.evcf"));
        assert_eq!(m.vocabulary().labels(), &["angry", "neutral"]);
        let again =
            CorpusManifest::parse(&m.to_text(Path::new("/corpus")), Path::new("/corpus")).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_bad_manifests() {
        assert!(matches!(
            CorpusManifest::parse("u1\ta.wav\ts\tn\nu1\tb.wav\ts\tn\n", Path::new(".")),
            Err(Error::Manifest(_))
        ));
        assert!(matches!(
            CorpusManifest::parse("u1\ta.wav\ts\n", Path::new(".")),
            Err(Error::Manifest(_))
        ));
        assert!(matches!(
            CorpusManifest::parse("# nothing\n", Path::new(".")),
            Err(Error::Manifest(_))
        ));
        let eleven: String = (0..11).map(|i| format!("u{i}\ta.wav\ts\te{i}\n")).collect();
        assert!(matches!(
            CorpusManifest::parse(&eleven, Path::new(".")),
            Err(Error::Manifest(_))
        ));
    }

    #[test]
    fn vocabulary_lookup() {
        let v = EmotionVocabulary::from_labels(["neutral", "angry", "neutral"]).unwrap();
        assert_eq!(v.len(), 2);
        let id = v.id("neutral").unwrap();
        assert_eq!(id.slot, 1);
        assert_eq!(id.one_hot().iter().sum::<f64>(), 1.0);
        assert_eq!(id.condition(Some(0.5)).unwrap().width(), 11);
        assert!(matches!(v.id("joyful"), Err(Error::UnknownEmotion { .. })));
        assert_eq!(EmotionVocabulary::from_meta(&v.to_meta()).unwrap(), v);
        assert!(EmotionVocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert!(EmotionVocabulary::new(vec!["a,b".into()]).is_err());
    }
}
