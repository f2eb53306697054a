use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::ModelCheckpoint;
use super::features::{energy_gate, AnalysisConfig, Utterance, META_EMOTION};
use super::manifest::EmotionVocabulary;
use crate::error::{Error, Result};
use crate::neuro::Tensor;
use crate::prosody::{interpolate_unvoiced, F0Statistics};
use crate::signal_io::FeatureArchive;
use crate::vawgan::{ArchConfig, LossReport, Role, TrainBatch, TrainConfig, VawGan};

/// Spectrum steps in the desk profile.
pub const DESK_SPECTRUM_STEPS: usize = 600;
/// Prosody steps in the desk profile; prosody steps are cheap.
pub const DESK_PROSODY_STEPS: usize = 2000;

/// Named training presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// Small fixed step budget that runs on a laptop CPU.
    Desk,
    /// Learning rate 1e-5, batch 256, 45 epochs.
    Paper,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }

    pub fn train_config(self, role: Role) -> TrainConfig {
        match (self, role) {
            (Profile::Paper, _) => TrainConfig::paper(),
            (Profile::Desk, Role::Spectrum) => TrainConfig {
                steps: DESK_SPECTRUM_STEPS,
                ..TrainConfig::desk()
            },
            (Profile::Desk, Role::Prosody) => TrainConfig {
                steps: DESK_PROSODY_STEPS,
                ..TrainConfig::desk()
            },
        }
    }
}

/// Per-dimension standard deviations are floored here before normalizing.
const NORM_STD_FLOOR: f64 = 1e-3;
/// Frames in the fixed batch used to report reconstruction before and after.
const PROBE_FRAMES: usize = 256;

/// Frames, emotion slots and (spectrum only) F0 conditions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub dim: usize,
    pub frames: Vec<f64>,
    pub emotions: Vec<usize>,
    pub f0: Option<Vec<f64>>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.emotions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emotions.is_empty()
    }

    fn batch(&self, idx: &[usize], mean: &[f64], std: &[f64]) -> Result<TrainBatch> {
        let d = self.dim;
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            for k in 0..d {
                data.push((self.frames[i * d + k] - mean[k]) / std[k]);
            }
        }
        Ok(TrainBatch {
            frames: Tensor::new(vec![idx.len(), d], data)?,
            emotions: idx.iter().map(|&i| self.emotions[i]).collect(),
            f0: self
                .f0
                .as_ref()
                .map(|f| idx.iter().map(|&i| f[i]).collect()),
        })
    }

    fn normalization(&self) -> (Vec<f64>, Vec<f64>) {
        let (n, d) = (self.len() as f64, self.dim);
        let mut mean = vec![0.0; d];
        for row in self.frames.chunks(d) {
            mean.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in self.frames.chunks(d) {
            for k in 0..d {
                var[k] += (row[k] - mean[k]).powi(2);
            }
        }
        let std = var
            .iter()
            .map(|v| (v / n).sqrt().max(NORM_STD_FLOOR))
            .collect();
        (mean, std)
    }
}

/// Shared corpus-level facts both pipelines need.
#[derive(Debug, Clone)]
pub struct CorpusSummary {
    pub vocabulary: EmotionVocabulary,
    pub analysis: AnalysisConfig,
    pub utterances: Vec<(Utterance, usize)>,
    pub pooled: F0Statistics,
    pub emotion_stats: Vec<F0Statistics>,
}

/// Parses archives, builds the sorted emotion vocabulary and gathers F0
/// statistics. Fails on fewer than two emotions or mixed analysis settings.
pub fn summarize(archives: &[(String, FeatureArchive)]) -> Result<CorpusSummary> {
    if archives.is_empty() {
        return Err(Error::Invalid("no training archives".into()));
    }
    let labels: Vec<&str> = archives
        .iter()
        .map(|(id, a)| {
            a.meta(META_EMOTION)
                .ok_or_else(|| Error::MissingMetadata(format!("{META_EMOTION} ({id})")))
        })
        .collect::<Result<_>>()?;
    let vocabulary = EmotionVocabulary::from_labels(labels.iter().copied())?;
    if vocabulary.len() < 2 {
        return Err(Error::SingleEmotion);
    }
    let mut utterances = Vec::with_capacity(archives.len());
    for ((_, a), label) in archives.iter().zip(&labels) {
        utterances.push((Utterance::from_archive(a)?, vocabulary.id(label)?.slot));
    }
    let analysis = utterances[0].0.analysis;
    if utterances.iter().any(|(u, _)| u.analysis != analysis) {
        return Err(Error::Config(
            "training archives were analyzed with different settings".into(),
        ));
    }
    let pooled = F0Statistics::pooled(utterances.iter().map(|(u, _)| &u.f0))?;
    let emotion_stats = (0..vocabulary.len())
        .map(|slot| {
            let own: Vec<&F0Statistics> = utterances
                .iter()
                .filter(|(_, s)| *s == slot)
                .map(|(u, _)| &u.stats)
                .collect();
            let n = own.len() as f64;
            F0Statistics::new(
                own.iter().map(|s| s.mu_log).sum::<f64>() / n,
                own.iter().map(|s| s.sigma_log).sum::<f64>() / n,
            )
        })
        .collect::<Result<_>>()?;
    Ok(CorpusSummary {
        vocabulary,
        analysis,
        utterances,
        pooled,
        emotion_stats,
    })
}

/// The F0 condition: interpolated log-F0 standardized by pooled statistics.
pub fn f0_condition(log_f0: f64, pooled: &F0Statistics) -> f64 {
    (log_f0 - pooled.mu_log) / pooled.sigma_log
}

/// Energy-gated envelope frames with their emotion slot and F0 condition.
pub fn spectrum_training_set(
    summary: &CorpusSummary,
    archives: &[(String, FeatureArchive)],
) -> Result<TrainingSet> {
    let dim = summary.analysis.bins();
    let mut set = TrainingSet {
        dim,
        frames: Vec::new(),
        emotions: Vec::new(),
        f0: Some(Vec::new()),
    };
    for ((u, slot), _) in summary.utterances.iter().zip(archives) {
        let filled = interpolate_unvoiced(&u.f0)?;
        for (t, keep) in energy_gate(&u.sp).into_iter().enumerate() {
            if keep {
                set.frames.extend_from_slice(u.sp.frame(t));
                set.emotions.push(*slot);
                if let Some(f) = set.f0.as_mut() {
                    f.push(f0_condition(filled.values()[t].ln(), &summary.pooled));
                }
            }
        }
    }
    Ok(set)
}

/// CWT columns of voiced frames.
pub fn prosody_training_set(
    summary: &CorpusSummary,
    archives: &[(String, FeatureArchive)],
) -> Result<TrainingSet> {
    let mut set = TrainingSet {
        dim: 0,
        frames: Vec::new(),
        emotions: Vec::new(),
        f0: None,
    };
    for ((u, slot), (id, a)) in summary.utterances.iter().zip(archives) {
        let cwt = a.require("cwt")?;
        let (t, s) = match cwt.shape.as_slice() {
            [t, s] => (*t, *s),
            other => return Err(Error::Shape(format!("cwt of '{id}' has shape {other:?}"))),
        };
        if t != u.num_frames() || (set.dim != 0 && s != set.dim) {
            return Err(Error::Shape(format!(
                "cwt of '{id}' does not match its frames"
            )));
        }
        set.dim = s;
        let data = cwt.to_f64();
        for (i, &f) in u.f0.values().iter().enumerate() {
            if f > 0.0 {
                set.frames.extend_from_slice(&data[i * s..(i + 1) * s]);
                set.emotions.push(*slot);
            }
        }
    }
    Ok(set)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<LossReport>,
    /// Reconstruction loss on a fixed probe batch before the first step.
    pub initial_recon: f64,
    pub final_recon: f64,
}

pub type Progress<'a> = &'a mut dyn FnMut(usize, usize, &LossReport);

/// Runs training on a prepared set. Batches are drawn uniformly with
/// replacement from a stream separate from parameter initialization.
pub fn train_model(
    arch: ArchConfig,
    set: &TrainingSet,
    summary: &CorpusSummary,
    cfg: &TrainConfig,
    mut progress: Option<Progress>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.len() < cfg.batch.max(2) {
        return Err(Error::BatchTooSmall(set.len()));
    }
    if set.dim != arch.feature_dim {
        return Err(Error::Dimension {
            expected: arch.feature_dim,
            actual: set.dim,
        });
    }
    let (mean, std) = set.normalization();
    let mut model = VawGan::new(arch, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let probe_idx: Vec<usize> = (0..PROBE_FRAMES.min(set.len()))
        .map(|i| i * set.len() / PROBE_FRAMES.min(set.len()))
        .collect();
    let probe = set.batch(&probe_idx, &mean, &std)?;
    let initial_recon = model.evaluate_losses(&probe, cfg)?.recon;

    let steps = cfg.total_steps(set.len());
    let mut history = Vec::with_capacity(steps);
    for step in 0..steps {
        let idx: Vec<usize> = (0..cfg.batch)
            .map(|_| rng.random_range(0..set.len()))
            .collect();
        let batch = set.batch(&idx, &mean, &std)?;
        let report = model.train_step(&batch, cfg, &mut rng)?;
        if let Some(p) = progress.as_mut() {
            p(step + 1, steps, &report);
        }
        history.push(report);
    }
    let final_recon = model.evaluate_losses(&probe, cfg)?.recon;
    let mut provenance = BTreeMap::new();
    provenance.insert("training_frames".into(), set.len().to_string());
    provenance.insert("initial_recon".into(), initial_recon.to_string());
    provenance.insert("final_recon".into(), final_recon.to_string());
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint {
            model,
            vocabulary: summary.vocabulary.clone(),
            analysis: summary.analysis,
            train: *cfg,
            steps_done: steps,
            norm_mean: mean,
            norm_std: std,
            f0_condition_stats: summary.pooled,
            emotion_stats: summary.emotion_stats.clone(),
            provenance,
        },
        history,
        initial_recon,
        final_recon,
    })
}

/// Trains the F0-conditioned spectrum network (139-wide conditioning), or
/// the 138-wide ablation when `f0_condition` is false.
pub fn train_spectrum(
    archives: &[(String, FeatureArchive)],
    cfg: &TrainConfig,
    f0_condition: bool,
    progress: Option<Progress>,
) -> Result<TrainOutcome> {
    let summary = summarize(archives)?;
    let mut set = spectrum_training_set(&summary, archives)?;
    let mut arch = ArchConfig::spectrum(set.dim);
    if !f0_condition {
        arch = arch.without_f0();
        set.f0 = None;
    }
    train_model(arch, &set, &summary, cfg, progress)
}

/// Trains the prosody network on CWT columns (138-wide conditioning).
pub fn train_prosody(
    archives: &[(String, FeatureArchive)],
    cfg: &TrainConfig,
    progress: Option<Progress>,
) -> Result<TrainOutcome> {
    let summary = summarize(archives)?;
    let set = prosody_training_set(&summary, archives)?;
    train_model(ArchConfig::prosody(set.dim), &set, &summary, cfg, progress)
}
