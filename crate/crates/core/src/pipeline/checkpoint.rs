use std::collections::BTreeMap;
use std::path::Path;

use super::features::AnalysisConfig;
use super::manifest::EmotionVocabulary;
use crate::error::{Error, Result};
use crate::neuro::ParameterStore;
use crate::prosody::F0Statistics;
use crate::signal_io::{load_archive, save_archive, FeatureArchive};
use crate::vawgan::{ArchConfig, Role, TrainConfig, VawGan};

const KIND: &str = "model_checkpoint";
const PREFIXES: [&str; 3] = ["enc/", "gen/", "disc/"];

/// A trained network plus everything needed to apply it: feature
/// normalization, emotion vocabulary, per-emotion F0 statistics and the
/// settings it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: VawGan,
    pub vocabulary: EmotionVocabulary,
    pub analysis: AnalysisConfig,
    pub train: TrainConfig,
    pub steps_done: usize,
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    /// Pooled voiced log-F0 statistics used to scale the F0 condition.
    pub f0_condition_stats: F0Statistics,
    /// Mean utterance log-F0 statistics per vocabulary slot.
    pub emotion_stats: Vec<F0Statistics>,
    /// Free-form provenance copied into metadata under `prov.`.
    pub provenance: BTreeMap<String, String>,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_usize(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.parse()
                .map_err(|_| Error::Corrupt(format!("bad integer list '{s}'")))
        })
        .collect()
}

fn write_arch(a: &mut FeatureArchive, arch: &ArchConfig) {
    a.set_meta("role", arch.role.as_str());
    a.set_meta("arch.feature_dim", arch.feature_dim.to_string());
    a.set_meta("arch.latent_dim", arch.latent_dim.to_string());
    a.set_meta("arch.emotion_slots", arch.emotion_slots.to_string());
    a.set_meta("arch.f0_condition", arch.f0_condition.to_string());
    a.set_meta("arch.cond_width", arch.cond_width().to_string());
    a.set_meta("arch.enc_channels", join(&arch.enc_channels));
    a.set_meta("arch.enc_kernel", arch.enc_kernel.to_string());
    a.set_meta("arch.enc_stride", arch.enc_stride.to_string());
    a.set_meta("arch.gen_seed_channels", arch.gen_seed_channels.to_string());
    a.set_meta("arch.gen_channels", join(&arch.gen_channels));
    a.set_meta("arch.gen_kernels", join(&arch.gen_kernels));
    a.set_meta("arch.gen_strides", join(&arch.gen_strides));
    a.set_meta("arch.disc_channels", join(&arch.disc_channels));
    a.set_meta("arch.disc_kernels", join(&arch.disc_kernels));
    a.set_meta("arch.disc_stride", arch.disc_stride.to_string());
}

fn read_arch(a: &FeatureArchive) -> Result<ArchConfig> {
    let arch = ArchConfig {
        role: Role::parse(a.require_meta("role")?)?,
        feature_dim: a.meta_parse("arch.feature_dim")?,
        latent_dim: a.meta_parse("arch.latent_dim")?,
        emotion_slots: a.meta_parse("arch.emotion_slots")?,
        f0_condition: a.meta_parse("arch.f0_condition")?,
        enc_channels: split_usize(a.require_meta("arch.enc_channels")?)?,
        enc_kernel: a.meta_parse("arch.enc_kernel")?,
        enc_stride: a.meta_parse("arch.enc_stride")?,
        gen_seed_channels: a.meta_parse("arch.gen_seed_channels")?,
        gen_channels: split_usize(a.require_meta("arch.gen_channels")?)?,
        gen_kernels: split_usize(a.require_meta("arch.gen_kernels")?)?,
        gen_strides: split_usize(a.require_meta("arch.gen_strides")?)?,
        disc_channels: split_usize(a.require_meta("arch.disc_channels")?)?,
        disc_kernels: split_usize(a.require_meta("arch.disc_kernels")?)?,
        disc_stride: a.meta_parse("arch.disc_stride")?,
    };
    let recorded: usize = a.meta_parse("arch.cond_width")?;
    if recorded != arch.cond_width() {
        return Err(Error::ConditionWidth {
            expected: arch.cond_width(),
            actual: recorded,
        });
    }
    Ok(arch)
}

pub fn write_train_config(a: &mut FeatureArchive, t: &TrainConfig) {
    a.set_meta("train.lr", t.lr.to_string());
    a.set_meta("train.batch", t.batch.to_string());
    a.set_meta("train.epochs", t.epochs.to_string());
    a.set_meta("train.steps", t.steps.to_string());
    a.set_meta("train.n_critic", t.n_critic.to_string());
    a.set_meta("train.clip_c", t.clip_c.to_string());
    a.set_meta("train.lambda_adv", t.lambda_adv.to_string());
    a.set_meta("train.lambda_kl", t.lambda_kl.to_string());
    a.set_meta("seed", t.seed.to_string());
}

fn read_train_config(a: &FeatureArchive) -> Result<TrainConfig> {
    Ok(TrainConfig {
        lr: a.meta_parse("train.lr")?,
        batch: a.meta_parse("train.batch")?,
        epochs: a.meta_parse("train.epochs")?,
        steps: a.meta_parse("train.steps")?,
        n_critic: a.meta_parse("train.n_critic")?,
        clip_c: a.meta_parse("train.clip_c")?,
        lambda_adv: a.meta_parse("train.lambda_adv")?,
        lambda_kl: a.meta_parse("train.lambda_kl")?,
        seed: a.meta_parse("seed")?,
    })
}

impl ModelCheckpoint {
    pub fn role(&self) -> Role {
        self.model.arch().role
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }

    pub fn expect_role(&self, role: Role) -> Result<&Self> {
        if self.role() != role {
            return Err(Error::RoleMismatch {
                expected: role.as_str().into(),
                actual: self.role().as_str().into(),
            });
        }
        Ok(self)
    }

    pub fn normalize(&self, frame: &[f64]) -> Vec<f64> {
        frame
            .iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, frame: &[f64]) -> Vec<f64> {
        frame
            .iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(z, (m, s))| z * s + m)
            .collect()
    }

    pub fn to_archive(&self) -> Result<FeatureArchive> {
        let mut a = FeatureArchive::new();
        a.set_meta("kind", KIND);
        write_arch(&mut a, self.model.arch());
        write_train_config(&mut a, &self.train);
        self.analysis.write_meta(&mut a);
        a.set_meta("vocabulary", self.vocabulary.to_meta());
        a.set_meta("steps_done", self.steps_done.to_string());
        a.set_meta(
            "f0_condition.mu_log",
            self.f0_condition_stats.mu_log.to_string(),
        );
        a.set_meta(
            "f0_condition.sigma_log",
            self.f0_condition_stats.sigma_log.to_string(),
        );
        let mus: Vec<f64> = self.emotion_stats.iter().map(|s| s.mu_log).collect();
        let sigmas: Vec<f64> = self.emotion_stats.iter().map(|s| s.sigma_log).collect();
        a.set_meta("emotion.mu_log", join(&mus));
        a.set_meta("emotion.sigma_log", join(&sigmas));
        for (k, v) in &self.provenance {
            a.set_meta(&format!("prov.{k}"), v.clone());
        }
        let d = self.norm_mean.len();
        a.insert("norm/mean", vec![d], &self.norm_mean)?;
        a.insert("norm/std", vec![d], &self.norm_std)?;
        for (prefix, store) in
            PREFIXES
                .iter()
                .zip([&self.model.enc, &self.model.gen, &self.model.disc])
        {
            store.write_to_archive(&mut a, prefix)?;
        }
        Ok(a)
    }

    pub fn from_archive(a: &FeatureArchive) -> Result<Self> {
        if a.meta("kind") != Some(KIND) {
            return Err(Error::Corrupt("archive is not a model checkpoint".into()));
        }
        let arch = read_arch(a)?;
        let stores: Vec<ParameterStore> = PREFIXES
            .iter()
            .map(|p| ParameterStore::read_from_archive(a, p))
            .collect::<Result<_>>()?;
        let [enc, gen, disc]: [ParameterStore; 3] = stores.try_into().expect("three prefixes");
        let model =
            VawGan::from_stores(arch, enc, gen, disc).map_err(|e| Error::Corrupt(e.to_string()))?;
        let vocabulary = EmotionVocabulary::from_meta(a.require_meta("vocabulary")?)?;
        let parse_list = |key: &str| -> Result<Vec<f64>> {
            a.require_meta(key)?
                .split(',')
                .map(|x| {
                    x.parse()
                        .map_err(|_| Error::Corrupt(format!("bad number in '{key}'")))
                })
                .collect()
        };
        let mus = parse_list("emotion.mu_log")?;
        let sigmas = parse_list("emotion.sigma_log")?;
        if mus.len() != vocabulary.len() || sigmas.len() != vocabulary.len() {
            return Err(Error::Corrupt(
                "per-emotion statistics do not match the vocabulary".into(),
            ));
        }
        let emotion_stats = mus
            .iter()
            .zip(&sigmas)
            .map(|(&m, &s)| F0Statistics::new(m, s))
            .collect::<Result<_>>()?;
        let norm_mean = a.require("norm/mean")?.to_f64();
        let norm_std = a.require("norm/std")?.to_f64();
        let d = model.arch().feature_dim;
        if norm_mean.len() != d || norm_std.len() != d {
            return Err(Error::Corrupt(
                "normalization does not match the feature dimension".into(),
            ));
        }
        let provenance = a
            .metadata()
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("prov.").map(|s| (s.to_string(), v.clone())))
            .collect();
        Ok(Self {
            model,
            vocabulary,
            analysis: AnalysisConfig::from_meta(a)?,
            train: read_train_config(a)?,
            steps_done: a.meta_parse("steps_done")?,
            norm_mean,
            norm_std,
            f0_condition_stats: F0Statistics::new(
                a.meta_parse("f0_condition.mu_log")?,
                a.meta_parse("f0_condition.sigma_log")?,
            )?,
            emotion_stats,
            provenance,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_archive(path, &self.to_archive()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&load_archive(path)?)
    }

    /// The checkpoint as it will read back from disk (parameters rounded to
    /// the archive's 32-bit payloads).
    pub fn round_tripped(&self) -> Result<Self> {
        Self::from_archive(&FeatureArchive::from_bytes(&self.to_archive()?.to_bytes())?)
    }
}

/// Errors unless both checkpoints use the same emotion vocabulary.
pub fn check_vocabularies(a: &ModelCheckpoint, b: &ModelCheckpoint) -> Result<()> {
    if a.vocabulary != b.vocabulary {
        return Err(Error::Vocabulary(format!(
            "{} checkpoint has [{}], {} checkpoint has [{}]",
            a.role().as_str(),
            a.vocabulary.to_meta(),
            b.role().as_str(),
            b.vocabulary.to_meta()
        )));
    }
    Ok(())
}
