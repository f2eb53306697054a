//! F0 preprocessing, continuous wavelet decomposition of log-F0 and the
//! log-Gaussian linear F0 transform.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::analysis::{F0Contour, VOICED_MAX_HZ, VOICED_MIN_HZ};
use crate::error::{Error, Result};

pub const SIGMA_GUARD: f64 = 1e-8;
pub const MIN_CWT_FRAMES: usize = 16;

/// Moments of natural-log F0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Statistics {
    pub mu_log: f64,
    pub sigma_log: f64,
}

impl F0Statistics {
    pub fn new(mu_log: f64, sigma_log: f64) -> Result<Self> {
        if !mu_log.is_finite() || !sigma_log.is_finite() {
            return Err(Error::NonFinite("F0 statistics".into()));
        }
        if sigma_log <= SIGMA_GUARD {
            return Err(Error::DegenerateVariance(sigma_log));
        }
        Ok(Self { mu_log, sigma_log })
    }

    /// Mean and population standard deviation of `ln f0` over voiced frames.
    pub fn from_voiced(f0: &F0Contour) -> Result<Self> {
        let logs: Vec<f64> = f0
            .values()
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|v| v.ln())
            .collect();
        if logs.is_empty() {
            return Err(Error::AllUnvoiced);
        }
        let (mu, sigma) = mean_std(&logs);
        Self::new(mu, sigma)
    }

    /// Pools voiced log-F0 over several contours.
    pub fn pooled<'a>(contours: impl IntoIterator<Item = &'a F0Contour>) -> Result<Self> {
        let logs: Vec<f64> = contours
            .into_iter()
            .flat_map(|c| c.values().iter().filter(|&&v| v > 0.0).map(|v| v.ln()))
            .collect();
        if logs.is_empty() {
            return Err(Error::AllUnvoiced);
        }
        let (mu, sigma) = mean_std(&logs);
        Self::new(mu, sigma)
    }
}

pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    (mu, var.sqrt())
}

/// Gap-free, z-normalized log-F0 with the original voicing decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousLogF0 {
    values: Vec<f64>,
    voicing_mask: Vec<bool>,
    stats: F0Statistics,
    hop_ms: f64,
}

impl ContinuousLogF0 {
    pub fn new(
        values: Vec<f64>,
        voicing_mask: Vec<bool>,
        stats: F0Statistics,
        hop_ms: f64,
    ) -> Result<Self> {
        if values.len() != voicing_mask.len() {
            return Err(Error::FrameCountMismatch {
                left: values.len(),
                right: voicing_mask.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalized log-F0".into()));
        }
        Ok(Self {
            values,
            voicing_mask,
            stats,
            hop_ms,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn voicing_mask(&self) -> &[bool] {
        &self.voicing_mask
    }

    pub fn stats(&self) -> F0Statistics {
        self.stats
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_ms
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(values, self.voicing_mask.clone(), self.stats, self.hop_ms)
    }
}

/// Fills unvoiced frames by linear interpolation between voiced neighbours,
/// holding the nearest voiced value at the edges.
pub fn interpolate_unvoiced(f0: &F0Contour) -> Result<F0Contour> {
    let v = f0.values();
    let voiced: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
    let (&first, &last) = match (voiced.first(), voiced.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::AllUnvoiced),
    };
    let mut out = v.to_vec();
    out[..first].iter_mut().for_each(|x| *x = v[first]);
    out[last + 1..].iter_mut().for_each(|x| *x = v[last]);
    for pair in voiced.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        for i in a + 1..b {
            let w = (i - a) as f64 / (b - a) as f64;
            out[i] = v[a] + w * (v[b] - v[a]);
        }
    }
    F0Contour::new(out, f0.hop_ms())
}

/// Z-scores `ln f0` over the whole gap-free contour. Every frame is marked
/// voiced; use [`continuous_log_f0`] to keep the original voicing.
pub fn normalize_log_f0(f0: &F0Contour) -> Result<ContinuousLogF0> {
    normalize_with_mask(f0, vec![true; f0.len()])
}

/// Interpolates over unvoiced frames, then normalizes, keeping the raw
/// voicing mask.
pub fn continuous_log_f0(raw: &F0Contour) -> Result<ContinuousLogF0> {
    let filled = interpolate_unvoiced(raw)?;
    normalize_with_mask(&filled, raw.voicing_mask())
}

fn normalize_with_mask(f0: &F0Contour, mask: Vec<bool>) -> Result<ContinuousLogF0> {
    if f0.is_empty() {
        return Err(Error::EmptySignal);
    }
    if let Some(&bad) = f0.values().iter().find(|&&v| v <= 0.0) {
        return Err(Error::NonPositiveF0(bad));
    }
    let logs: Vec<f64> = f0.values().iter().map(|v| v.ln()).collect();
    let (mu, sigma) = mean_std(&logs);
    let stats = F0Statistics::new(mu, sigma)?;
    let values = logs.iter().map(|l| (l - mu) / sigma).collect();
    ContinuousLogF0::new(values, mask, stats, f0.hop_ms())
}

/// Maps normalized values back to Hz with the stored (or overriding)
/// statistics. Unvoiced frames become 0; voiced frames are clamped to the
/// valid F0 range.
pub fn denormalize_log_f0(
    c: &ContinuousLogF0,
    stats_override: Option<F0Statistics>,
) -> Result<F0Contour> {
    let s = stats_override.unwrap_or(c.stats);
    let values = c
        .values
        .iter()
        .zip(&c.voicing_mask)
        .map(|(&v, &voiced)| {
            if voiced {
                (v * s.sigma_log + s.mu_log)
                    .exp()
                    .clamp(VOICED_MIN_HZ, VOICED_MAX_HZ)
            } else {
                0.0
            }
        })
        .collect();
    F0Contour::new(values, c.hop_ms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwtConfig {
    pub num_scales: usize,
    /// Finest scale in frame hops.
    pub base_scale_hops: f64,
    /// Coefficients are scaled by `s^-norm_exponent` (0.5 keeps unit L2 norm).
    pub norm_exponent: f64,
    pub weight_offset: f64,
    pub weight_exponent: f64,
}

impl Default for CwtConfig {
    fn default() -> Self {
        Self {
            num_scales: 10,
            base_scale_hops: 2.0,
            norm_exponent: 0.5,
            weight_offset: 2.5,
            weight_exponent: 2.5,
        }
    }
}

impl CwtConfig {
    /// Scale `i` in frames.
    pub fn scale_frames(&self, i: usize) -> f64 {
        self.base_scale_hops * 2f64.powi(i as i32)
    }

    pub fn weight(&self, i: usize) -> f64 {
        (i as f64 + self.weight_offset).powf(-self.weight_exponent)
    }
}

/// `S × T` wavelet coefficients, row-major by scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CwtMatrix {
    coefficients: Vec<f64>,
    scales_s: Vec<f64>,
    num_frames: usize,
    hop_ms: f64,
    config: CwtConfig,
}

impl CwtMatrix {
    pub fn new(
        coefficients: Vec<f64>,
        num_frames: usize,
        hop_ms: f64,
        config: CwtConfig,
    ) -> Result<Self> {
        let s = config.num_scales;
        if s == 0 || coefficients.len() != s * num_frames {
            return Err(Error::Shape(format!(
                "{} coefficients for {s} scales x {num_frames} frames",
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("wavelet coefficients".into()));
        }
        let scales_s = (0..s)
            .map(|i| config.scale_frames(i) * hop_ms / 1000.0)
            .collect();
        Ok(Self {
            coefficients,
            scales_s,
            num_frames,
            hop_ms,
            config,
        })
    }

    pub fn num_scales(&self) -> usize {
        self.config.num_scales
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_ms
    }

    /// Scales in seconds.
    pub fn scales(&self) -> &[f64] {
        &self.scales_s
    }

    pub fn config(&self) -> &CwtConfig {
        &self.config
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coefficients[i * self.num_frames..(i + 1) * self.num_frames]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coefficients
    }

    /// Frame `t` across all scales.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.num_scales())
            .map(|i| self.coefficients[i * self.num_frames + t])
            .collect()
    }

    /// Builds a matrix from per-frame columns (`T × S`, row-major).
    pub fn from_columns(columns: &[f64], hop_ms: f64, config: CwtConfig) -> Result<Self> {
        let s = config.num_scales;
        if s == 0 || !columns.len().is_multiple_of(s) {
            return Err(Error::Shape(format!(
                "{} values do not tile {s} scales",
                columns.len()
            )));
        }
        let t = columns.len() / s;
        let mut coeffs = vec![0.0; s * t];
        for f in 0..t {
            for i in 0..s {
                coeffs[i * t + f] = columns[f * s + i];
            }
        }
        Self::new(coeffs, t, hop_ms, config)
    }
}

fn mexican_hat(t: f64) -> f64 {
    (1.0 - t * t) * (-0.5 * t * t).exp()
}

/// Symmetric reflection of index `i` into `[0, n)`, repeating as needed.
fn reflect(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

pub fn cwt_decompose(c: &ContinuousLogF0, cfg: &CwtConfig) -> Result<CwtMatrix> {
    cwt_decompose_values(c.values(), c.hop_ms(), cfg)
}

/// Mexican-hat CWT at dyadic scales. The input is mirror-padded by twice
/// the coarsest scale on each side and the padding is cropped afterwards.
pub fn cwt_decompose_values(x: &[f64], hop_ms: f64, cfg: &CwtConfig) -> Result<CwtMatrix> {
    let t = x.len();
    if t < MIN_CWT_FRAMES {
        return Err(Error::ContourTooShort {
            len: t,
            min: MIN_CWT_FRAMES,
        });
    }
    if cfg.num_scales == 0 || !(cfg.base_scale_hops > 0.0) {
        return Err(Error::Config("wavelet scales must be positive".into()));
    }
    let coarsest = cfg.scale_frames(cfg.num_scales - 1);
    let pad = (2.0 * coarsest).round() as usize;
    let padded_len = t + 2 * pad;
    let max_half = (5.0 * coarsest).ceil() as usize;
    let n = (padded_len + max_half + 1).next_power_of_two();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut xs = vec![Complex64::new(0.0, 0.0); n];
    for (j, v) in xs.iter_mut().take(padded_len).enumerate() {
        v.re = x[reflect(j as isize - pad as isize, t)];
    }
    fwd.process(&mut xs);

    let mut coeffs = Vec::with_capacity(cfg.num_scales * t);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..cfg.num_scales {
        let s = cfg.scale_frames(i);
        let half = (5.0 * s).ceil() as isize;
        let gain = s.powf(-cfg.norm_exponent);
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for k in -half..=half {
            buf[k.rem_euclid(n as isize) as usize].re = mexican_hat(k as f64 / s) * gain;
        }
        fwd.process(&mut buf);
        for (b, xv) in buf.iter_mut().zip(&xs) {
            *b *= xv;
        }
        inv.process(&mut buf);
        coeffs.extend(buf[pad..pad + t].iter().map(|c| c.re / n as f64));
    }
    CwtMatrix::new(coeffs, t, hop_ms, *cfg)
}

/// Weighted sum over scales, without re-standardization.
pub fn cwt_reconstruct_raw(m: &CwtMatrix) -> Vec<f64> {
    let mut out = vec![0.0; m.num_frames()];
    for i in 0..m.num_scales() {
        let w = m.config().weight(i);
        for (o, c) in out.iter_mut().zip(m.row(i)) {
            *o += w * c;
        }
    }
    out
}

/// Weighted sum over scales, re-standardized to zero mean and unit
/// variance. A constant result (such as an all-zero matrix) maps to zeros.
pub fn cwt_reconstruct(m: &CwtMatrix) -> Vec<f64> {
    standardize(cwt_reconstruct_raw(m))
}

pub(crate) fn standardize(mut v: Vec<f64>) -> Vec<f64> {
    if v.is_empty() {
        return v;
    }
    let (mu, sigma) = mean_std(&v);
    if sigma <= SIGMA_GUARD {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        v.iter_mut().for_each(|x| *x = (*x - mu) / sigma);
    }
    v
}

/// `ln f0' = (ln f0 - mu_s) * sigma_t / sigma_s + mu_t` on voiced frames.
pub fn lg_convert_f0(f0: &F0Contour, src: F0Statistics, tgt: F0Statistics) -> Result<F0Contour> {
    if src.sigma_log <= SIGMA_GUARD {
        return Err(Error::DegenerateVariance(src.sigma_log));
    }
    if f0.voiced_count() == 0 {
        return Err(Error::AllUnvoiced);
    }
    let ratio = tgt.sigma_log / src.sigma_log;
    let values = f0
        .values()
        .iter()
        .map(|&v| {
            if v > 0.0 {
                ((v.ln() - src.mu_log) * ratio + tgt.mu_log)
                    .exp()
                    .clamp(VOICED_MIN_HZ, VOICED_MAX_HZ)
            } else {
                0.0
            }
        })
        .collect();
    F0Contour::new(values, f0.hop_ms())
}

/// Seeded family of band-limited test contours: sums of four sinusoids
/// between 0.2 and 2 Hz with Gaussian amplitudes, z-normalized.
pub fn band_limited_contour(seed: u64, frames: usize, hop_ms: f64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; frames];
    for _ in 0..4 {
        let f: f64 = rng.random_range(0.2..2.0);
        let amp: f64 = StandardNormal.sample(&mut rng);
        let phase: f64 = rng.random_range(0.0..2.0 * PI);
        for (n, v) in x.iter_mut().enumerate() {
            *v += amp * (2.0 * PI * f * n as f64 * hop_ms / 1000.0 + phase).sin();
        }
    }
    standardize(x)
}
