use crate::analysis::{
    estimate_f0_and_aperiodicity, extract_envelope, ApFrames, F0Config, F0Contour, SpectralEnvelope,
};
use crate::error::{Error, Result};
use crate::prosody::{continuous_log_f0, cwt_decompose, CwtConfig, CwtMatrix, F0Statistics};
use crate::signal_io::{frame_signal, FeatureArchive, Waveform, WindowKind};

pub const META_SAMPLE_RATE: &str = "sample_rate_hz";
pub const META_FRAME_MS: &str = "frame_ms";
pub const META_HOP_MS: &str = "hop_ms";
pub const META_FFT_SIZE: &str = "fft_size";
pub const META_F0_MIN: &str = "f0_min_hz";
pub const META_F0_MAX: &str = "f0_max_hz";
pub const META_VOICING: &str = "voicing_threshold";
pub const META_MU_LOG: &str = "f0_mu_log";
pub const META_SIGMA_LOG: &str = "f0_sigma_log";
pub const META_ID: &str = "id";
pub const META_SPEAKER: &str = "speaker";
pub const META_EMOTION: &str = "emotion";

/// Frames quieter than the utterance's loudest frame by more than this are
/// left out of spectrum training and conversion.
pub const ENERGY_GATE_DB: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub sample_rate_hz: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub voicing_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16000,
            frame_ms: 25.0,
            hop_ms: 5.0,
            fft_size: 1024,
            f0_min_hz: 50.0,
            f0_max_hz: 600.0,
            voicing_threshold: 0.15,
        }
    }
}

impl AnalysisConfig {
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn f0_config(&self) -> F0Config {
        F0Config {
            fmin_hz: self.f0_min_hz,
            fmax_hz: self.f0_max_hz,
            frame_ms: self.frame_ms,
            hop_ms: self.hop_ms,
            threshold: self.voicing_threshold,
        }
    }

    pub fn write_meta(&self, a: &mut FeatureArchive) {
        a.set_meta(META_SAMPLE_RATE, self.sample_rate_hz.to_string());
        a.set_meta(META_FRAME_MS, self.frame_ms.to_string());
        a.set_meta(META_HOP_MS, self.hop_ms.to_string());
        a.set_meta(META_FFT_SIZE, self.fft_size.to_string());
        a.set_meta(META_F0_MIN, self.f0_min_hz.to_string());
        a.set_meta(META_F0_MAX, self.f0_max_hz.to_string());
        a.set_meta(META_VOICING, self.voicing_threshold.to_string());
    }

    pub fn from_meta(a: &FeatureArchive) -> Result<Self> {
        Ok(Self {
            sample_rate_hz: a.meta_parse(META_SAMPLE_RATE)?,
            frame_ms: a.meta_parse(META_FRAME_MS)?,
            hop_ms: a.meta_parse(META_HOP_MS)?,
            fft_size: a.meta_parse(META_FFT_SIZE)?,
            f0_min_hz: a.meta_parse(META_F0_MIN)?,
            f0_max_hz: a.meta_parse(META_F0_MAX)?,
            voicing_threshold: a.meta_parse(META_VOICING)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.sample_rate_hz >= crate::signal_io::MIN_SAMPLE_RATE
            && self.hop_ms > 0.0
            && self.frame_ms >= self.hop_ms
            && self.fft_size.is_power_of_two()
            && self.fft_size >= crate::signal_io::ms_to_samples(self.frame_ms, self.sample_rate_hz)
            && self.voicing_threshold > 0.0
            && self.voicing_threshold < 1.0;
        if !ok {
            return Err(Error::Config(format!("invalid analysis settings {self:?}")));
        }
        Ok(())
    }
}

/// Analyzes a waveform into an utterance archive holding `f0` `[T]`, `sp`,
/// `ap` `[T, bins]` and `cwt` `[T, scales]`, with the utterance's log-F0
/// statistics and the analysis settings in metadata.
pub fn analyze_waveform(wave: &Waveform, cfg: &AnalysisConfig) -> Result<FeatureArchive> {
    cfg.validate()?;
    if wave.sample_rate_hz() != cfg.sample_rate_hz {
        return Err(Error::Config(format!(
            "audio is sampled at {} Hz, analysis expects {} Hz",
            wave.sample_rate_hz(),
            cfg.sample_rate_hz
        )));
    }
    let (f0, ap) = estimate_f0_and_aperiodicity(wave, &cfg.f0_config(), cfg.bins())?;
    let frames = frame_signal(wave, cfg.frame_ms, cfg.hop_ms, WindowKind::Hann)?;
    let sp = extract_envelope(&frames, cfg.fft_size)?;
    if sp.num_frames() != f0.len() {
        return Err(Error::FrameCountMismatch {
            left: f0.len(),
            right: sp.num_frames(),
        });
    }
    let cont = continuous_log_f0(&f0)?;
    let cwt = cwt_decompose(&cont, &CwtConfig::default())?;
    let t = f0.len();
    let columns: Vec<f64> = (0..t).flat_map(|i| cwt.column(i)).collect();

    let mut a = FeatureArchive::new();
    a.insert("f0", vec![t], f0.values())?;
    a.insert("sp", vec![t, sp.bins()], sp.as_slice())?;
    a.insert("ap", vec![t, ap.bins()], ap.as_slice())?;
    a.insert("cwt", vec![t, cwt.num_scales()], &columns)?;
    cfg.write_meta(&mut a);
    let stats = cont.stats();
    a.set_meta(META_MU_LOG, stats.mu_log.to_string());
    a.set_meta(META_SIGMA_LOG, stats.sigma_log.to_string());
    Ok(a)
}

/// Typed view of an utterance archive.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub analysis: AnalysisConfig,
    pub f0: F0Contour,
    pub sp: SpectralEnvelope,
    pub stats: F0Statistics,
}

impl Utterance {
    pub fn from_archive(a: &FeatureArchive) -> Result<Self> {
        let analysis = AnalysisConfig::from_meta(a)?;
        let f0 = F0Contour::new_unchecked_range(a.require("f0")?.to_f64(), analysis.hop_ms)?;
        let sp = SpectralEnvelope::new(
            a.require("sp")?.to_f64(),
            analysis.fft_size,
            analysis.sample_rate_hz,
        )?;
        if sp.num_frames() != f0.len() {
            return Err(Error::FrameCountMismatch {
                left: f0.len(),
                right: sp.num_frames(),
            });
        }
        let stats = F0Statistics::new(a.meta_parse(META_MU_LOG)?, a.meta_parse(META_SIGMA_LOG)?)?;
        Ok(Self {
            analysis,
            f0,
            sp,
            stats,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.f0.len()
    }
}

/// Reads `cwt` as a coefficient matrix.
pub fn archive_cwt(a: &FeatureArchive, hop_ms: f64) -> Result<CwtMatrix> {
    CwtMatrix::from_columns(&a.require("cwt")?.to_f64(), hop_ms, CwtConfig::default())
}

pub fn archive_ap(a: &FeatureArchive) -> Result<ApFrames> {
    let arr = a.require("ap")?;
    let bins = *arr.shape.last().unwrap_or(&0);
    ApFrames::new(arr.to_f64(), bins)
}

/// Frames within [`ENERGY_GATE_DB`] of the loudest frame.
pub fn energy_gate(sp: &SpectralEnvelope) -> Vec<bool> {
    let db: Vec<f64> = (0..sp.num_frames())
        .map(|t| {
            let f = sp.frame(t);
            let power = f.iter().map(|v| (2.0 * v).exp()).sum::<f64>() / f.len() as f64;
            10.0 * power.max(1e-300).log10()
        })
        .collect();
    let peak = db.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    db.iter().map(|&d| d >= peak - ENERGY_GATE_DB).collect()
}
