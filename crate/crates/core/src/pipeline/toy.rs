use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::manifest::{CorpusManifest, ManifestEntry};
use crate::analysis::{synthesize_waveform, F0Contour, SpectralEnvelope, SynthesisConfig};
use crate::error::{Error, Result};
use crate::signal_io::{write_wav, Waveform};

pub const TOY_NEUTRAL: &str = "neutral";
pub const TOY_ANGRY: &str = "angry";
/// F0 ratio between the two toy emotions.
pub const TOY_F0_RATIO: f64 = 1.4;
/// Formant shift of the second emotion.
pub const TOY_FORMANT_RATIO: f64 = 1.1;

const SAMPLE_RATE: u32 = 16000;
const HOP_MS: f64 = 5.0;
const FRAME_MS: f64 = 25.0;
const FFT_SIZE: usize = 1024;

const SPEAKER_F0: [f64; 3] = [110.0, 150.0, 200.0];
const SPEAKER_FORMANTS: [f64; 3] = [1.0, 0.9, 1.12];
const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [80.0, 100.0, 150.0];
const GAINS: [f64; 3] = [1.0, 0.5, 0.25];
const FLOOR: f64 = 0.003;
const GAP_LEVEL: f64 = 0.02;
/// Above this the glottal source rolls off at 6 dB per octave.
const GLOTTAL_CORNER_HZ: f64 = 250.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    /// At most three speakers.
    pub speakers: usize,
    /// Utterances per speaker and emotion. Utterance `k` has the same
    /// content and timing in both emotions.
    pub utterances: usize,
    pub duration_s: f64,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            speakers: 3,
            utterances: 4,
            duration_s: 1.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ToyUtterance {
    pub id: String,
    pub speaker: String,
    pub emotion: String,
    pub wave: Waveform,
    /// Generator F0 per analysis frame, 0 in pauses.
    pub f0_truth: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyCorpus {
    pub config: ToyConfig,
    pub utterances: Vec<ToyUtterance>,
}

struct Syllable {
    start: usize,
    len: usize,
    vowel: usize,
    accent: f64,
}

fn plan(rng: &mut ChaCha8Rng, frames: usize) -> Vec<Syllable> {
    let mut out = Vec::new();
    let mut t = 10;
    while t + 20 < frames.saturating_sub(10) {
        let len = rng.random_range(28..=44).min(frames - 10 - t);
        out.push(Syllable {
            start: t,
            len,
            vowel: rng.random_range(0..VOWELS.len()),
            accent: rng.random_range(0.03..0.12),
        });
        t += len + rng.random_range(6..=10);
    }
    out
}

fn envelope_frame(formants: &[f64; 3], tilt: f64, level: f64, bins: usize) -> Vec<f64> {
    let nyq = SAMPLE_RATE as f64 / 2.0;
    (0..bins)
        .map(|k| {
            let f = k as f64 * nyq / (bins - 1) as f64;
            let a: f64 = (0..3)
                .map(|i| GAINS[i] / (1.0 + ((f - formants[i]) / BANDWIDTHS[i]).powi(2)))
                .sum();
            (a + FLOOR).ln() - (1.0 + f / GLOTTAL_CORNER_HZ).ln() - tilt * f / nyq + level.ln()
        })
        .collect()
}

fn render(
    syllables: &[Syllable],
    frames: usize,
    base_f0: f64,
    formant_scale: f64,
    angry: bool,
    synth_seed: u64,
) -> Result<(Waveform, Vec<f64>)> {
    let bins = FFT_SIZE / 2 + 1;
    let (ratio, offset, slope, accent_gain, tilt, shift) = if angry {
        (TOY_F0_RATIO, 0.05, 0.1, 2.2, 1.2, TOY_FORMANT_RATIO)
    } else {
        (1.0, 0.15, 0.3, 1.0, 2.5, 1.0)
    };
    let accent = |t: usize| -> f64 {
        syllables
            .iter()
            .map(|s| {
                let c = s.start as f64 + s.len as f64 / 2.0;
                let w = s.len as f64 / 4.0;
                s.accent * (-(t as f64 - c).powi(2) / (2.0 * w * w)).exp()
            })
            .sum()
    };
    let mut f0 = vec![0.0; frames];
    let gap = VOWELS[0].map(|f| f * formant_scale * shift);
    let mut sp: Vec<f64> = Vec::with_capacity(frames * bins);
    for t in 0..frames {
        let syl = syllables
            .iter()
            .position(|s| t >= s.start && t < s.start + s.len);
        match syl {
            Some(i) => {
                let s = &syllables[i];
                let x = t as f64 / frames as f64;
                f0[t] =
                    ((base_f0 * ratio).ln() + offset - slope * x + accent_gain * accent(t)).exp();
                let target = VOWELS[s.vowel];
                let prev = if i == 0 {
                    target
                } else {
                    VOWELS[syllables[i - 1].vowel]
                };
                let w = ((t - s.start) as f64 / 6.0).min(1.0);
                let formants: [f64; 3] = std::array::from_fn(|k| {
                    (prev[k] + w * (target[k] - prev[k])) * formant_scale * shift
                });
                let edge = (t - s.start).min(s.start + s.len - 1 - t) as f64;
                let level = ((edge + 1.0) / 4.0).min(1.0);
                sp.extend(envelope_frame(&formants, tilt, level, bins));
            }
            None => sp.extend(envelope_frame(&gap, tilt, GAP_LEVEL, bins)),
        }
    }
    let contour = F0Contour::new(f0.clone(), HOP_MS)?;
    let env = SpectralEnvelope::new(sp, FFT_SIZE, SAMPLE_RATE)?;
    let wave = synthesize_waveform(
        &contour,
        &env,
        None,
        &SynthesisConfig {
            frame_ms: FRAME_MS,
            seed: synth_seed,
        },
    )?;
    Ok((wave, f0))
}

/// Deterministic two-emotion corpus. The second emotion raises F0 by
/// [`TOY_F0_RATIO`], flattens declination, exaggerates accents, shifts
/// formants up by [`TOY_FORMANT_RATIO`] and brightens the spectral tilt.
pub fn make_toy_corpus(cfg: &ToyConfig) -> Result<ToyCorpus> {
    if cfg.speakers == 0 || cfg.speakers > SPEAKER_F0.len() || cfg.utterances == 0 {
        return Err(Error::Config(format!(
            "toy corpus needs 1..={} speakers and at least one utterance",
            SPEAKER_F0.len()
        )));
    }
    let samples = (cfg.duration_s * SAMPLE_RATE as f64).round() as usize;
    let frame = (FRAME_MS * SAMPLE_RATE as f64 / 1000.0) as usize;
    let hop = (HOP_MS * SAMPLE_RATE as f64 / 1000.0) as usize;
    if samples < frame + 60 * hop {
        return Err(Error::Config(
            "toy utterances must be at least 0.33 s".into(),
        ));
    }
    let frames = (samples - frame) / hop + 1;
    let mut utterances = Vec::new();
    for spk in 0..cfg.speakers {
        for k in 0..cfg.utterances {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((spk * 1000 + k) as u64 + 1);
            let syllables = plan(&mut rng, frames);
            for (angry, label) in [(false, TOY_NEUTRAL), (true, TOY_ANGRY)] {
                let synth_seed = rng.random::<u64>();
                let (wave, f0_truth) = render(
                    &syllables,
                    frames,
                    SPEAKER_F0[spk],
                    SPEAKER_FORMANTS[spk],
                    angry,
                    synth_seed,
                )?;
                utterances.push(ToyUtterance {
                    id: format!("s{spk}_{label}_{k:02}"),
                    speaker: format!("s{spk}"),
                    emotion: label.to_string(),
                    wave,
                    f0_truth,
                });
            }
        }
    }
    Ok(ToyCorpus {
        config: *cfg,
        utterances,
    })
}

impl ToyCorpus {
    pub fn of_emotion<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ToyUtterance> + 'a {
        self.utterances.iter().filter(move |u| u.emotion == label)
    }

    /// Writes `wav/<id>.wav` for every utterance plus `manifest.tsv`.
    pub fn write(&self, dir: &Path) -> Result<CorpusManifest> {
        let wav_dir = dir.join("wav");
        std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
        let mut entries = Vec::with_capacity(self.utterances.len());
        for u in &self.utterances {
            let path = wav_dir.join(format!("{}.wav", u.id));
            write_wav(&path, &u.wave)?;
            entries.push(ManifestEntry {
                id: u.id.clone(),
                path,
                speaker: u.speaker.clone(),
                emotion: u.emotion.clone(),
            });
        }
        let manifest = CorpusManifest::new(entries)?;
        let path = dir.join("manifest.tsv");
        std::fs::write(&path, manifest.to_text(dir)).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_share_timing_and_differ_by_ratio() {
        let c = make_toy_corpus(&ToyConfig {
            speakers: 1,
            utterances: 2,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(c.utterances.len(), 4);
        let (a, b) = (&c.utterances[0], &c.utterances[1]);
        assert_eq!(
            (a.emotion.as_str(), b.emotion.as_str()),
            (TOY_NEUTRAL, TOY_ANGRY)
        );
        assert_eq!(a.wave.len(), 19200);
        let voiced_a: Vec<bool> = a.f0_truth.iter().map(|&f| f > 0.0).collect();
        let voiced_b: Vec<bool> = b.f0_truth.iter().map(|&f| f > 0.0).collect();
        assert_eq!(voiced_a, voiced_b);
        let ratios: Vec<f64> = a
            .f0_truth
            .iter()
            .zip(&b.f0_truth)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, y)| y / x)
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean > 1.3 && mean < 1.6, "{mean}");
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ToyConfig {
            speakers: 1,
            utterances: 1,
            seed: 5,
            ..Default::default()
        };
        let a = make_toy_corpus(&cfg).unwrap();
        let b = make_toy_corpus(&cfg).unwrap();
        for (x, y) in a.utterances.iter().zip(&b.utterances) {
            assert_eq!(x.wave, y.wave);
        }
    }
}
