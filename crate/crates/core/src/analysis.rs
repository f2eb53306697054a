//! Lightweight vocoder: YIN-style F0 tracking, liftered log-spectral
//! envelopes, mel-cepstra and pulse/noise resynthesis.
//!
//! All frame grids share one convention: frame `t` covers samples
//! `[t * hop, t * hop + frame_len)` and is centred at `t * hop + frame_len / 2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal_io::{frame_count, ms_to_samples, FrameSequence, Waveform};

/// Natural-log amplitude floor, `ln(1e-10)`.
pub const LOG_FLOOR: f64 = -23.025850929940457;

pub const VOICED_MIN_HZ: f64 = 40.0;
pub const VOICED_MAX_HZ: f64 = 800.0;

/// Pitch trajectory on the analysis grid; `0.0` marks unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    values_hz: Vec<f64>,
    hop_ms: f64,
}

impl F0Contour {
    pub fn new(values_hz: Vec<f64>, hop_ms: f64) -> Result<Self> {
        if !(hop_ms > 0.0) {
            return Err(Error::Invalid(format!(
                "hop_ms must be positive, got {hop_ms}"
            )));
        }
        for (i, &v) in values_hz.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Invalid(format!(
                    "F0 frame {i} = {v} is not finite and >= 0"
                )));
            }
            if v > 0.0 && !(VOICED_MIN_HZ..=VOICED_MAX_HZ).contains(&v) {
                return Err(Error::Invalid(format!(
                    "voiced F0 frame {i} = {v} Hz outside [{VOICED_MIN_HZ}, {VOICED_MAX_HZ}]"
                )));
            }
        }
        Ok(Self { values_hz, hop_ms })
    }

    /// Builds a contour without the voiced-range check. Used for
    /// intermediate contours that may leave [40, 800] Hz after arithmetic.
    pub fn new_unchecked_range(values_hz: Vec<f64>, hop_ms: f64) -> Result<Self> {
        if values_hz.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("F0 values must be finite and >= 0".into()));
        }
        Ok(Self { values_hz, hop_ms })
    }

    pub fn values(&self) -> &[f64] {
        &self.values_hz
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_ms
    }

    pub fn len(&self) -> usize {
        self.values_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values_hz.is_empty()
    }

    pub fn voicing_mask(&self) -> Vec<bool> {
        self.values_hz.iter().map(|&v| v > 0.0).collect()
    }

    pub fn voiced_count(&self) -> usize {
        self.values_hz.iter().filter(|&&v| v > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Config {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Cumulative-mean-normalized difference threshold for a voiced decision.
    pub threshold: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            fmin_hz: 50.0,
            fmax_hz: 600.0,
            frame_ms: 25.0,
            hop_ms: 5.0,
            threshold: 0.15,
        }
    }
}

const F0_PREFILTER_HZ: f64 = 1000.0;

/// Zero-phase Hann-windowed sinc lowpass; `cutoff` is in cycles per sample.
fn lowpass(x: &[f64], cutoff: f64) -> Vec<f64> {
    let half = (2.0 / cutoff).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| {
            let k = k as f64;
            let w = 0.5 * (1.0 + (PI * k / (half as f64 + 1.0)).cos());
            2.0 * cutoff * sinc(2.0 * cutoff * k) * w
        })
        .collect();
    let gain: f64 = taps.iter().sum();
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, h) in taps.iter().enumerate() {
                let idx = i + j as isize - half;
                if idx >= 0 && idx < n {
                    acc += h * x[idx as usize];
                }
            }
            acc / gain
        })
        .collect()
}

/// Frame-synchronous F0 using the YIN difference function with parabolic
/// refinement of the chosen lag. The signal is lowpassed at 1 kHz first.
pub fn estimate_f0(wave: &Waveform, cfg: &F0Config) -> Result<F0Contour> {
    let (values, _) = yin_track(wave, cfg)?;
    F0Contour::new(values, cfg.hop_ms)
}

/// F0 plus a per-bin aperiodicity on the same grid. A voiced frame's
/// broadband aperiodicity is the YIN dip at the chosen lag, rising
/// quadratically to 1 at Nyquist; unvoiced frames are fully aperiodic.
pub fn estimate_f0_and_aperiodicity(
    wave: &Waveform,
    cfg: &F0Config,
    bins: usize,
) -> Result<(F0Contour, ApFrames)> {
    if bins < 2 {
        return Err(Error::Invalid(format!(
            "aperiodicity needs at least 2 bins, got {bins}"
        )));
    }
    let (values, dips) = yin_track(wave, cfg)?;
    let mut ap = Vec::with_capacity(values.len() * bins);
    for (&f0, &dip) in values.iter().zip(&dips) {
        let base = if f0 > 0.0 { dip.clamp(0.0, 1.0) } else { 1.0 };
        ap.extend((0..bins).map(|k| {
            let r = k as f64 / (bins - 1) as f64;
            base + (1.0 - base) * r * r
        }));
    }
    Ok((
        F0Contour::new(values, cfg.hop_ms)?,
        ApFrames::new(ap, bins)?,
    ))
}

/// Per-frame F0 (0 when unvoiced) and CMND dip (1 when unvoiced).
fn yin_track(wave: &Waveform, cfg: &F0Config) -> Result<(Vec<f64>, Vec<f64>)> {
    if wave.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(VOICED_MIN_HZ <= cfg.fmin_hz && cfg.fmin_hz < cfg.fmax_hz && cfg.fmax_hz <= VOICED_MAX_HZ)
    {
        return Err(Error::Invalid(format!(
            "F0 search range must satisfy 40 <= fmin < fmax <= 800 (got {}..{})",
            cfg.fmin_hz, cfg.fmax_hz
        )));
    }
    let sr = wave.sample_rate_hz() as f64;
    let frame_len = ms_to_samples(cfg.frame_ms, wave.sample_rate_hz()).max(1);
    let hop = ms_to_samples(cfg.hop_ms, wave.sample_rate_hz()).max(1);
    let num_frames = frame_count(wave.len(), frame_len, hop);
    let max_lag = (sr / cfg.fmin_hz).ceil() as usize;
    let min_lag = ((sr / cfg.fmax_hz).floor() as usize).max(2);
    let integ = max_lag;
    let span = integ + max_lag + 1;

    let x = lowpass(wave.samples(), F0_PREFILTER_HZ / sr);
    let mut seg = vec![0.0; span];
    let mut diff = vec![0.0; max_lag + 2];
    let mut cmnd = vec![1.0; max_lag + 2];
    let mut values = Vec::with_capacity(num_frames);
    let mut dips = Vec::with_capacity(num_frames);
    for t in 0..num_frames {
        let centre = (t * hop + frame_len / 2) as isize;
        let start = centre - (span / 2) as isize;
        for (j, s) in seg.iter_mut().enumerate() {
            let idx = start + j as isize;
            *s = if idx >= 0 && (idx as usize) < x.len() {
                x[idx as usize]
            } else {
                0.0
            };
        }
        let energy: f64 = seg.iter().map(|v| v * v).sum::<f64>() / span as f64;
        if energy < 1e-10 {
            values.push(0.0);
            dips.push(1.0);
            continue;
        }
        diff[0] = 0.0;
        for tau in 1..=max_lag + 1 {
            let mut acc = 0.0;
            for j in 0..integ {
                let e = seg[j] - seg[j + tau];
                acc += e * e;
            }
            diff[tau] = acc;
        }
        let mut running = 0.0;
        cmnd[0] = 1.0;
        for tau in 1..=max_lag + 1 {
            running += diff[tau];
            cmnd[tau] = if running > 0.0 {
                diff[tau] * tau as f64 / running
            } else {
                1.0
            };
        }
        let mut chosen = None;
        let mut tau = min_lag;
        while tau <= max_lag {
            if cmnd[tau] < cfg.threshold {
                while tau < max_lag && cmnd[tau + 1] < cmnd[tau] {
                    tau += 1;
                }
                chosen = Some(tau);
                break;
            }
            tau += 1;
        }
        let chosen = chosen.map(|tau| best_dip(&cmnd, tau, max_lag, cfg.threshold));
        let f0 = match chosen {
            Some(tau) => {
                let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
                let denom = a - 2.0 * b + c;
                let shift = if denom.abs() > 1e-12 {
                    (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                sr / (tau as f64 + shift)
            }
            None => 0.0,
        };
        if f0 >= cfg.fmin_hz && f0 <= cfg.fmax_hz {
            values.push(f0);
            dips.push(chosen.map_or(1.0, |tau| cmnd[tau]));
        } else {
            values.push(0.0);
            dips.push(1.0);
        }
    }
    Ok((values, dips))
}

/// Added to a candidate's dip per octave of lag beyond the first candidate.
const OCTAVE_COST: f64 = 0.02;

/// Formant ringing can pass the threshold at a fraction of the true period,
/// so every local minimum below the threshold competes on depth plus
/// [`OCTAVE_COST`] per octave above the first one.
fn best_dip(cmnd: &[f64], tau: usize, max_lag: usize, threshold: f64) -> usize {
    let mut best = (tau, cmnd[tau]);
    for l in tau + 1..max_lag {
        if cmnd[l] < threshold && cmnd[l] <= cmnd[l - 1] && cmnd[l] < cmnd[l + 1] {
            let score = cmnd[l] + OCTAVE_COST * (l as f64 / tau as f64).log2();
            if score < best.1 {
                best = (l, score);
            }
        }
    }
    best.0
}

/// Per-frame natural-log amplitude envelope, `num_frames × bins`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEnvelope {
    log_amp: Vec<f64>,
    num_frames: usize,
    fft_size: usize,
    sample_rate_hz: u32,
}

impl SpectralEnvelope {
    pub fn new(log_amp: Vec<f64>, fft_size: usize, sample_rate_hz: u32) -> Result<Self> {
        if !fft_size.is_power_of_two() || fft_size < 2 {
            return Err(Error::FftSize(fft_size));
        }
        let bins = fft_size / 2 + 1;
        if !log_amp.len().is_multiple_of(bins) {
            return Err(Error::Shape(format!(
                "{} values is not a multiple of {bins} bins",
                log_amp.len()
            )));
        }
        if log_amp.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spectral envelope".into()));
        }
        Ok(Self {
            num_frames: log_amp.len() / bins,
            log_amp,
            fft_size,
            sample_rate_hz,
        })
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let k = self.bins();
        &self.log_amp[t * k..(t + 1) * k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.log_amp
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.log_amp
    }
}

/// Aperiodicity in `[0, 1]` per frame and bin. Carried through conversion
/// untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ApFrames {
    values: Vec<f64>,
    bins: usize,
}

impl ApFrames {
    pub fn new(values: Vec<f64>, bins: usize) -> Result<Self> {
        if bins == 0 || !values.len().is_multiple_of(bins) {
            return Err(Error::Shape(format!(
                "{} aperiodicity values do not tile {bins} bins",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("aperiodicity outside [0, 1]".into()));
        }
        Ok(Self { values, bins })
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / self.bins
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Quefrency cutoff (in samples) used by [`extract_envelope`].
pub fn default_lifter(fft_size: usize) -> usize {
    (fft_size / 8).max(2)
}

pub fn extract_envelope(frames: &FrameSequence, fft_size: usize) -> Result<SpectralEnvelope> {
    extract_envelope_liftered(frames, fft_size, default_lifter(fft_size))
}

/// Log-magnitude spectrum per frame, floored at [`LOG_FLOOR`] and smoothed by
/// keeping cepstral coefficients below `lifter` samples.
pub fn extract_envelope_liftered(
    frames: &FrameSequence,
    fft_size: usize,
    lifter: usize,
) -> Result<SpectralEnvelope> {
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::FftSize(fft_size));
    }
    if frames.frame_len() > fft_size {
        return Err(Error::Invalid(format!(
            "frame length {} exceeds fft size {fft_size}",
            frames.frame_len()
        )));
    }
    let bins = fft_size / 2 + 1;
    let fft = FftPair::new(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut log_amp = Vec::with_capacity(frames.num_frames() * bins);
    for frame in frames.iter() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (b, &s) in buf.iter_mut().zip(frame) {
            b.re = s;
        }
        fft.forward.process(&mut buf);
        let spec: Vec<f64> = buf.iter().map(|c| c.norm().max(1e-10).ln()).collect();
        log_amp.extend(lifter_log_spectrum(&fft, &spec, lifter));
    }
    SpectralEnvelope::new(log_amp, fft_size, frames.sample_rate_hz())
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }

    /// Real cepstrum of a full-length (n) symmetric log spectrum.
    fn cepstrum(&self, full_log: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = full_log.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.inverse.process(&mut buf);
        buf.iter().map(|c| c.re / self.n as f64).collect()
    }
}

fn mirror_full(half: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| if k <= n / 2 { half[k] } else { half[n - k] })
        .collect()
}

/// Keeps quefrencies `< lifter` (and their mirror) of a full-length log
/// spectrum; returns the half spectrum.
fn lifter_log_spectrum(fft: &FftPair, full_log: &[f64], lifter: usize) -> Vec<f64> {
    let n = fft.n;
    let bins = n / 2 + 1;
    if lifter >= n / 2 {
        return full_log[..bins].to_vec();
    }
    let mut cep = fft.cepstrum(full_log);
    for (q, c) in cep.iter_mut().enumerate() {
        if q >= lifter && q <= n - lifter {
            *c = 0.0;
        }
    }
    let mut buf: Vec<Complex64> = cep.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward.process(&mut buf);
    buf[..bins].iter().map(|c| c.re).collect()
}

/// Mel-cepstral coefficients `c_0..c_order` per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct McepSequence {
    coeffs: Vec<f64>,
    order: usize,
    alpha: f64,
}

impl McepSequence {
    pub fn new(coeffs: Vec<f64>, order: usize, alpha: f64) -> Result<Self> {
        if order < 1 {
            return Err(Error::Invalid("mel-cepstral order must be >= 1".into()));
        }
        if !coeffs.len().is_multiple_of(order + 1) {
            return Err(Error::Shape(format!(
                "{} coefficients do not tile order {order}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mel-cepstrum".into()));
        }
        Ok(Self {
            coeffs,
            order,
            alpha,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_frames(&self) -> usize {
        self.coeffs.len() / (self.order + 1)
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let w = self.order + 1;
        &self.coeffs[t * w..(t + 1) * w]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }
}

/// All-pass frequency warping: maps linear angular frequency to the warped
/// axis for constant `alpha`.
pub fn warp_frequency(omega: f64, alpha: f64) -> f64 {
    omega + 2.0 * (alpha * omega.sin() / (1.0 - alpha * omega.cos())).atan()
}

/// Least-squares fit of `ln A(w) = c0 + 2 Σ c_m cos(m β(w))` over the linear
/// bins, where `β` is the warped frequency. Being an orthogonal projection,
/// analysis followed by synthesis is idempotent.
pub struct MelCepstrumBasis {
    bins: usize,
    order: usize,
    /// `bins × (order+1)`, row-major.
    basis: Vec<f64>,
    /// `(order+1) × bins`, row-major.
    pinv: Vec<f64>,
}

impl MelCepstrumBasis {
    pub fn new(bins: usize, order: usize, alpha: f64) -> Result<Self> {
        if !(alpha > -1.0 && alpha < 1.0) {
            return Err(Error::Alpha(alpha));
        }
        if order < 1 || order + 1 > bins {
            return Err(Error::Invalid(format!(
                "mel-cepstral order {order} needs 1 <= order+1 <= {bins} bins"
            )));
        }
        let w = order + 1;
        let mut basis = vec![0.0; bins * w];
        for k in 0..bins {
            let omega = PI * k as f64 / (bins - 1) as f64;
            let beta = warp_frequency(omega, alpha);
            basis[k * w] = 1.0;
            for m in 1..w {
                basis[k * w + m] = 2.0 * (m as f64 * beta).cos();
            }
        }
        let phi = DMatrix::from_row_slice(bins, w, &basis);
        let gram = phi.transpose() * &phi;
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Invalid("mel-cepstral basis is singular".into()))?;
        let pinv_m = chol.solve(&phi.transpose());
        let mut pinv = vec![0.0; w * bins];
        for m in 0..w {
            for k in 0..bins {
                pinv[m * bins + k] = pinv_m[(m, k)];
            }
        }
        Ok(Self {
            bins,
            order,
            basis,
            pinv,
        })
    }

    pub fn analyze_frame(&self, log_amp: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(log_amp);
        (0..=self.order)
            .map(|m| {
                self.pinv[m * self.bins..(m + 1) * self.bins]
                    .iter()
                    .zip(v.iter())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn synthesize_frame(&self, coeffs: &[f64]) -> Vec<f64> {
        let w = self.order + 1;
        (0..self.bins)
            .map(|k| {
                self.basis[k * w..(k + 1) * w]
                    .iter()
                    .zip(coeffs)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

pub fn mcep_from_envelope(
    env: &SpectralEnvelope,
    order: usize,
    alpha: f64,
) -> Result<McepSequence> {
    let basis = MelCepstrumBasis::new(env.bins(), order, alpha)?;
    let mut coeffs = Vec::with_capacity(env.num_frames() * (order + 1));
    for t in 0..env.num_frames() {
        coeffs.extend(basis.analyze_frame(env.frame(t)));
    }
    McepSequence::new(coeffs, order, alpha)
}

pub fn envelope_from_mcep(
    mcep: &McepSequence,
    fft_size: usize,
    sample_rate_hz: u32,
) -> Result<SpectralEnvelope> {
    if !fft_size.is_power_of_two() || fft_size < 2 {
        return Err(Error::FftSize(fft_size));
    }
    let basis = MelCepstrumBasis::new(fft_size / 2 + 1, mcep.order(), mcep.alpha())?;
    let mut log_amp = Vec::with_capacity(mcep.num_frames() * basis.bins);
    for t in 0..mcep.num_frames() {
        log_amp.extend(basis.synthesize_frame(mcep.frame(t)));
    }
    SpectralEnvelope::new(log_amp, fft_size, sample_rate_hz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub frame_ms: f64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            frame_ms: 25.0,
            seed: 0,
        }
    }
}

/// Peak level of synthesized audio.
pub const SYNTH_PEAK: f64 = 0.99;

/// Overlap-add resynthesis: a pulse train at F0 (voiced) and white noise
/// (unvoiced, or mixed per bin by aperiodicity) are shaped frame by frame by
/// a minimum-phase filter derived from the envelope.
///
/// Output length is `(T - 1) * hop + frame_len`, matching the analysis grid.
pub fn synthesize_waveform(
    f0: &F0Contour,
    env: &SpectralEnvelope,
    ap: Option<&ApFrames>,
    cfg: &SynthesisConfig,
) -> Result<Waveform> {
    let t_frames = f0.len();
    if t_frames != env.num_frames() {
        return Err(Error::FrameCountMismatch {
            left: t_frames,
            right: env.num_frames(),
        });
    }
    if let Some(ap) = ap {
        if ap.num_frames() != t_frames {
            return Err(Error::FrameCountMismatch {
                left: t_frames,
                right: ap.num_frames(),
            });
        }
        if ap.bins() != env.bins() {
            return Err(Error::Shape(format!(
                "aperiodicity has {} bins, envelope {}",
                ap.bins(),
                env.bins()
            )));
        }
    }
    let rate = env.sample_rate_hz();
    if t_frames == 0 {
        return Waveform::new(Vec::new(), rate);
    }
    let sr = rate as f64;
    let hop = ms_to_samples(f0.hop_ms(), rate).max(1);
    let frame_len = ms_to_samples(cfg.frame_ms, rate).max(hop);
    let n_out = (t_frames - 1) * hop + frame_len;
    let fft_size = env.fft_size();
    let seg_len = (4 * hop).min(fft_size);
    let bins = env.bins();

    // excitation signals
    let centre = |t: usize| (t * hop + frame_len / 2) as f64;
    let mut pulses = vec![0.0; n_out];
    let mut phase = 0.0;
    for n in 0..n_out {
        let pos = (n as f64 - frame_len as f64 / 2.0) / hop as f64;
        let t = pos.round().clamp(0.0, (t_frames - 1) as f64) as usize;
        let hz = f0.values()[t];
        if hz > 0.0 {
            let step = hz / sr;
            phase += step;
            if phase >= 1.0 {
                phase -= 1.0;
                let at = n as f64 - phase / step;
                add_fractional_pulse(&mut pulses, at, (sr / hz).sqrt());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise: Vec<f64> = (0..n_out)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    let fft = FftPair::new(fft_size);
    let win: Vec<f64> = (0..seg_len)
        .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / seg_len as f64).cos()))
        .collect();
    let ola_gain = seg_len as f64 / (2.0 * hop as f64);
    let mut out = vec![0.0; n_out];
    let mut pbuf = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut nbuf = vec![Complex64::new(0.0, 0.0); fft_size];
    for t in 0..t_frames {
        let start = centre(t) as isize - (seg_len / 2) as isize;
        pbuf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        nbuf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for j in 0..seg_len {
            let idx = start + j as isize;
            if idx >= 0 && (idx as usize) < n_out {
                pbuf[j].re = pulses[idx as usize] * win[j];
                nbuf[j].re = noise[idx as usize] * win[j];
            }
        }
        fft.forward.process(&mut pbuf);
        fft.forward.process(&mut nbuf);
        let filter = minimum_phase_response(&fft, env.frame(t));
        let voiced = f0.values()[t] > 0.0;
        let ap_frame = ap.map(|a| a.frame(t));
        for k in 0..fft_size {
            let bin = if k < bins { k } else { fft_size - k };
            let mix = match (ap_frame, voiced) {
                (Some(apf), true) => {
                    let a = apf[bin];
                    pbuf[k] * (1.0 - a).sqrt() + nbuf[k] * a.sqrt()
                }
                (_, true) => pbuf[k],
                (_, false) => nbuf[k],
            };
            pbuf[k] = mix * filter[k];
        }
        fft.inverse.process(&mut pbuf);
        for (j, c) in pbuf.iter().enumerate() {
            let idx = start + j as isize;
            if idx >= 0 && (idx as usize) < n_out {
                out[idx as usize] += c.re / fft_size as f64 / ola_gain;
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = SYNTH_PEAK / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(out, rate)
}

const PULSE_LOBES: isize = 3;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Adds an impulse at fractional sample position `at` using a Lanczos kernel.
fn add_fractional_pulse(buf: &mut [f64], at: f64, amp: f64) {
    let base = at.floor() as isize;
    let a = PULSE_LOBES as f64;
    for k in (base - PULSE_LOBES + 1)..=(base + PULSE_LOBES) {
        if k < 0 || k as usize >= buf.len() {
            continue;
        }
        let x = k as f64 - at;
        buf[k as usize] += amp * sinc(x) * sinc(x / a);
    }
}

/// Minimum-phase spectrum `exp(FFT(folded cepstrum))` for a half log
/// spectrum.
fn minimum_phase_response(fft: &FftPair, half_log: &[f64]) -> Vec<Complex64> {
    let n = fft.n;
    let cep = fft.cepstrum(&mirror_full(half_log, n));
    let mut folded = vec![Complex64::new(0.0, 0.0); n];
    folded[0].re = cep[0];
    for q in 1..n / 2 {
        folded[q].re = 2.0 * cep[q];
    }
    folded[n / 2].re = cep[n / 2];
    fft.forward.process(&mut folded);
    folded.iter().map(|c| c.exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_io::{frame_signal, WindowKind};

    fn tone(freq: f64, secs: f64, amp: f64) -> Waveform {
        let n = (secs * 16000.0) as usize;
        Waveform::new(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap()
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    }

    #[test]
    fn sine_f0_within_one_percent() {
        let f0 = estimate_f0(&tone(220.0, 0.5, 0.5), &F0Config::default()).unwrap();
        let voiced: Vec<f64> = f0.values().iter().cloned().filter(|&v| v > 0.0).collect();
        assert!(voiced.len() > f0.len() * 9 / 10);
        assert!(
            voiced.iter().all(|v| (v - 220.0).abs() <= 2.2),
            "{voiced:?}"
        );
    }

    #[test]
    fn aperiodicity_follows_voicing() {
        let cfg = F0Config::default();
        let mut samples = tone(200.0, 0.3, 0.5).samples().to_vec();
        samples.extend(vec![0.0; 4800]);
        let w = Waveform::new(samples, 16000).unwrap();
        let (f0, ap) = estimate_f0_and_aperiodicity(&w, &cfg, 513).unwrap();
        assert_eq!(f0, estimate_f0(&w, &cfg).unwrap());
        assert_eq!(ap.num_frames(), f0.len());
        for (t, &v) in f0.values().iter().enumerate() {
            let frame = ap.frame(t);
            assert_eq!(frame[512], 1.0);
            if v > 0.0 {
                assert!(frame[0] < 0.15 && frame.windows(2).all(|p| p[0] <= p[1]));
            } else {
                assert!(frame.iter().all(|&a| a == 1.0));
            }
        }
        assert!(estimate_f0_and_aperiodicity(&w, &cfg, 1).is_err());
    }

    #[test]
    fn silence_is_unvoiced() {
        let w = Waveform::new(vec![0.0; 8000], 16000).unwrap();
        let f0 = estimate_f0(&w, &F0Config::default()).unwrap();
        assert!(!f0.is_empty());
        assert!(f0.values().iter().all(|&v| v == 0.0));
        assert!(matches!(
            estimate_f0(&Waveform::new(vec![], 16000).unwrap(), &F0Config::default()),
            Err(Error::EmptySignal)
        ));
    }

    #[test]
    fn noisy_sawtooth_median_error_within_three_percent() {
        let n = 16000;
        let saw: Vec<f64> = (0..n)
            .map(|i| 2.0 * ((100.0 * i as f64 / 16000.0).fract()) - 1.0)
            .collect();
        let sig_power = saw.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let noise_std = (sig_power / 100.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<f64> = saw
            .iter()
            .map(|s| {
                let nz: f64 = StandardNormal.sample(&mut rng);
                0.5 * (s + noise_std * nz)
            })
            .collect();
        let f0 = estimate_f0(
            &Waveform::new(samples, 16000).unwrap(),
            &F0Config::default(),
        )
        .unwrap();
        let errs: Vec<f64> = f0
            .values()
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|v| (v - 100.0).abs() / 100.0)
            .collect();
        assert!(errs.len() > f0.len() / 2);
        assert!(median(errs) <= 0.03);
    }

    #[test]
    fn f0_is_shift_invariant_by_one_hop() {
        let base = tone(180.0, 0.4, 0.4);
        let mut shifted = vec![0.0; 80];
        shifted.extend_from_slice(base.samples());
        let shifted = Waveform::new(shifted, 16000).unwrap();
        let a = estimate_f0(&base, &F0Config::default()).unwrap();
        let b = estimate_f0(&shifted, &F0Config::default()).unwrap();
        for t in 10..a.len() - 10 {
            let (x, y) = (a.values()[t], b.values()[t + 1]);
            assert!((x - y).abs() <= 0.01 * x.max(y), "frame {t}: {x} vs {y}");
        }
    }

    #[test]
    fn sine_envelope_peaks_at_expected_bin() {
        let frames = frame_signal(&tone(440.0, 0.2, 0.5), 25.0, 5.0, WindowKind::Hann).unwrap();
        let env = extract_envelope(&frames, 1024).unwrap();
        let expected = (440.0f64 * 1024.0 / 16000.0).round() as usize;
        for t in 0..env.num_frames() {
            let f = env.frame(t);
            let argmax = (0..f.len())
                .max_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap())
                .unwrap();
            assert_eq!(argmax, expected);
        }
    }

    #[test]
    fn zero_frames_sit_on_the_floor() {
        let w = Waveform::new(vec![0.0; 1200], 16000).unwrap();
        let frames = frame_signal(&w, 25.0, 5.0, WindowKind::Hann).unwrap();
        let env = extract_envelope(&frames, 512).unwrap();
        assert!(env.as_slice().iter().all(|v| (v - LOG_FLOOR).abs() < 1e-9));
        assert!(matches!(
            extract_envelope(&frames, 500),
            Err(Error::FftSize(500))
        ));
    }

    #[test]
    fn white_noise_mean_log_spectrum_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 199 * 80 + 400;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * z
            })
            .map(|v: f64| v.clamp(-1.0, 1.0))
            .collect();
        let frames = frame_signal(
            &Waveform::new(samples, 16000).unwrap(),
            25.0,
            5.0,
            WindowKind::Hann,
        )
        .unwrap();
        assert_eq!(frames.num_frames(), 200);
        let env = extract_envelope(&frames, 1024).unwrap();
        let k = env.bins();
        let mut mean = vec![0.0; k];
        for t in 0..env.num_frames() {
            for (m, v) in mean.iter_mut().zip(env.frame(t)) {
                *m += v / env.num_frames() as f64;
            }
        }
        let avg = mean.iter().sum::<f64>() / k as f64;
        assert!(mean.iter().all(|m| (m - avg).abs() <= 1.5));
    }

    fn smooth_envelope(frames: usize, bins: usize) -> SpectralEnvelope {
        let mut v = Vec::new();
        for t in 0..frames {
            for k in 0..bins {
                let x = k as f64 / (bins - 1) as f64;
                v.push(
                    -2.0 + 1.5 * (-((x - 0.1 - 0.01 * t as f64) / 0.05).powi(2)).exp()
                        + 0.8 * (-((x - 0.35) / 0.08).powi(2)).exp()
                        - 2.0 * x,
                );
            }
        }
        SpectralEnvelope::new(v, 2 * (bins - 1), 16000).unwrap()
    }

    #[test]
    fn flat_envelope_gives_pure_c0() {
        let env = SpectralEnvelope::new(vec![-3.5; 513 * 2], 1024, 16000).unwrap();
        let mc = mcep_from_envelope(&env, 24, 0.42).unwrap();
        assert_eq!(mc.frame(0).len(), 25);
        for t in 0..2 {
            assert!((mc.frame(t)[0] + 3.5).abs() <= 1e-8);
            assert!(mc.frame(t)[1..].iter().all(|c| c.abs() <= 1e-8));
        }
        assert!(matches!(
            mcep_from_envelope(&env, 24, 1.0),
            Err(Error::Alpha(_))
        ));
    }

    #[test]
    fn mcep_round_trip_correlates() {
        let env = smooth_envelope(5, 513);
        let mc = mcep_from_envelope(&env, 24, 0.42).unwrap();
        let back = envelope_from_mcep(&mc, 1024, 16000).unwrap();
        for t in 0..5 {
            let r = pearson(env.frame(t), back.frame(t));
            assert!(r >= 0.99, "frame {t}: r = {r}");
        }
    }

    #[test]
    fn mcep_round_trip_is_a_projection() {
        let env = smooth_envelope(3, 257);
        let once =
            envelope_from_mcep(&mcep_from_envelope(&env, 24, 0.42).unwrap(), 512, 16000).unwrap();
        let twice =
            envelope_from_mcep(&mcep_from_envelope(&once, 24, 0.42).unwrap(), 512, 16000).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    /// Measured on the 16-bit samples that would be written to disk.
    fn zero_crossing_rate(x: &[f64]) -> f64 {
        let q: Vec<i16> = x
            .iter()
            .map(|&v| crate::signal_io::quantize_pcm16(v))
            .collect();
        q.windows(2).filter(|w| (w[0] >= 0) != (w[1] >= 0)).count() as f64 / q.len() as f64
    }

    #[test]
    fn voiced_synthesis_reestimates_its_f0() {
        let t = 120;
        let f0 = F0Contour::new(vec![110.0; t], 5.0).unwrap();
        let env = SpectralEnvelope::new(vec![0.0; t * 513], 1024, 16000).unwrap();
        let wave = synthesize_waveform(&f0, &env, None, &SynthesisConfig::default()).unwrap();
        assert_eq!(wave.len(), (t - 1) * 80 + 400);
        assert!(wave.samples().iter().all(|v| v.abs() <= SYNTH_PEAK + 1e-12));
        let est = estimate_f0(&wave, &F0Config::default()).unwrap();
        let voiced: Vec<f64> = est.values()[10..t - 10].to_vec();
        assert!(
            voiced.iter().all(|v| (v - 110.0).abs() <= 2.2),
            "{voiced:?}"
        );

        let unvoiced = F0Contour::new(vec![0.0; t], 5.0).unwrap();
        let noise =
            synthesize_waveform(&unvoiced, &env, None, &SynthesisConfig::default()).unwrap();
        let (zv, zu) = (
            zero_crossing_rate(wave.samples()),
            zero_crossing_rate(noise.samples()),
        );
        assert!(zu >= 5.0 * zv, "unvoiced zcr {zu} vs voiced {zv}");
    }

    #[test]
    fn synthesis_edge_cases() {
        let empty = F0Contour::new(vec![], 5.0).unwrap();
        let env = SpectralEnvelope::new(vec![], 1024, 16000).unwrap();
        assert!(
            synthesize_waveform(&empty, &env, None, &SynthesisConfig::default())
                .unwrap()
                .is_empty()
        );
        let f0 = F0Contour::new(vec![100.0; 3], 5.0).unwrap();
        let env2 = SpectralEnvelope::new(vec![0.0; 2 * 513], 1024, 16000).unwrap();
        assert!(matches!(
            synthesize_waveform(&f0, &env2, None, &SynthesisConfig::default()),
            Err(Error::FrameCountMismatch { left: 3, right: 2 })
        ));
    }

    #[test]
    fn synthesis_with_aperiodicity_is_bounded() {
        let t = 40;
        let f0 = F0Contour::new(
            (0..t)
                .map(|i| if i % 7 == 0 { 0.0 } else { 150.0 })
                .collect(),
            5.0,
        )
        .unwrap();
        let env = smooth_envelope(t, 513);
        let ap = ApFrames::new(vec![0.3; t * 513], 513).unwrap();
        let w = synthesize_waveform(&f0, &env, Some(&ap), &SynthesisConfig::default()).unwrap();
        assert!(w
            .samples()
            .iter()
            .all(|v| v.is_finite() && v.abs() <= SYNTH_PEAK + 1e-12));
    }
}
