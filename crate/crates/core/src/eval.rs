//! Objective metrics: DTW alignment, mel-cepstral and log-spectral
//! distortion, F0 correlation and RMSE, and the report that collects them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::analysis::{mcep_from_envelope, F0Contour, McepSequence, SpectralEnvelope, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::prosody::SIGMA_GUARD;
use crate::signal_io::FeatureArchive;

/// `10 / ln 10`, the dB factor for natural-log cepstra.
pub const DB_PER_NEPER: f64 = 10.0 / std::f64::consts::LN_10;

/// Mel-cepstral order used for MCD and alignment.
pub const MCD_ORDER: usize = 24;
pub const MCD_ALPHA: f64 = 0.42;

pub type WarpPath = Vec<(usize, usize)>;

/// DTW over `dim`-dimensional frames stored row-major, Euclidean frame
/// distance, steps (1,0), (0,1), (1,1). Ties prefer the diagonal.
pub fn dtw_path(a: &[f64], b: &[f64], dim: usize) -> Result<WarpPath> {
    if dim == 0 || a.is_empty() || b.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !a.len().is_multiple_of(dim) || !b.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!(
            "frames of width {dim} do not tile {} / {}",
            a.len(),
            b.len()
        )));
    }
    let (n, m) = (a.len() / dim, b.len() / dim);
    let dist = |i: usize, j: usize| {
        a[i * dim..(i + 1) * dim]
            .iter()
            .zip(&b[j * dim..(j + 1) * dim])
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut cost = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 {
                    cost[(i - 1) * m + j - 1]
                } else {
                    f64::INFINITY
                };
                let up = if i > 0 {
                    cost[(i - 1) * m + j]
                } else {
                    f64::INFINITY
                };
                let left = if j > 0 {
                    cost[i * m + j - 1]
                } else {
                    f64::INFINITY
                };
                diag.min(up).min(left)
            };
            cost[i * m + j] = best + dist(i, j);
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut path = vec![(i, j)];
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 {
            cost[(i - 1) * m + j - 1]
        } else {
            f64::INFINITY
        };
        let up = if i > 0 {
            cost[(i - 1) * m + j]
        } else {
            f64::INFINITY
        };
        let left = if j > 0 {
            cost[i * m + j - 1]
        } else {
            f64::INFINITY
        };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    Ok(path)
}

/// Summed frame distance along a path.
pub fn path_cost(a: &[f64], b: &[f64], dim: usize, path: &[(usize, usize)]) -> f64 {
    path.iter()
        .map(|&(i, j)| {
            a[i * dim..(i + 1) * dim]
                .iter()
                .zip(&b[j * dim..(j + 1) * dim])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

fn without_c0(m: &McepSequence) -> Vec<f64> {
    (0..m.num_frames())
        .flat_map(|t| m.frame(t)[1..].to_vec())
        .collect()
}

/// Aligns two mel-cepstral sequences on c1..cM.
pub fn dtw_align(a: &McepSequence, b: &McepSequence) -> Result<WarpPath> {
    check_order(a, b)?;
    if a.order() == 0 {
        return Err(Error::Invalid("alignment needs at least c1".into()));
    }
    dtw_path(&without_c0(a), &without_c0(b), a.order())
}

fn check_order(a: &McepSequence, b: &McepSequence) -> Result<()> {
    if a.order() != b.order() {
        return Err(Error::Dimension {
            expected: a.order(),
            actual: b.order(),
        });
    }
    Ok(())
}

fn check_path(path: &[(usize, usize)], la: usize, lb: usize) -> Result<()> {
    if path.is_empty() {
        return Err(Error::EmptySignal);
    }
    if path.iter().any(|&(i, j)| i >= la || j >= lb) {
        return Err(Error::Invalid(format!("path leaves the {la}x{lb} grid")));
    }
    Ok(())
}

/// Mean over the path of `(10 / ln 10) * sqrt(2 * sum_{d>=1} (c_d - c'_d)^2)`.
pub fn mcd(a: &McepSequence, b: &McepSequence, path: &[(usize, usize)]) -> Result<f64> {
    check_order(a, b)?;
    check_path(path, a.num_frames(), b.num_frames())?;
    let total: f64 = path
        .iter()
        .map(|&(i, j)| {
            let sq: f64 = a.frame(i)[1..]
                .iter()
                .zip(&b.frame(j)[1..])
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            DB_PER_NEPER * (2.0 * sq).sqrt()
        })
        .sum();
    Ok(total / path.len() as f64)
}

/// Mean over the path of the RMS (over bins) of `20 log10` amplitude ratios.
pub fn lsd(a: &SpectralEnvelope, b: &SpectralEnvelope, path: &[(usize, usize)]) -> Result<f64> {
    if a.bins() != b.bins() {
        return Err(Error::Dimension {
            expected: a.bins(),
            actual: b.bins(),
        });
    }
    check_path(path, a.num_frames(), b.num_frames())?;
    let db = 20.0 / std::f64::consts::LN_10;
    let total: f64 = path
        .iter()
        .map(|&(i, j)| {
            let ms: f64 = a
                .frame(i)
                .iter()
                .zip(b.frame(j))
                .map(|(x, y)| (db * (x.max(LOG_FLOOR) - y.max(LOG_FLOOR))).powi(2))
                .sum::<f64>()
                / a.bins() as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / path.len() as f64)
}

fn voiced_pairs(a: &F0Contour, b: &F0Contour, path: &[(usize, usize)]) -> Result<Vec<(f64, f64)>> {
    check_path(path, a.len(), b.len())?;
    Ok(path
        .iter()
        .map(|&(i, j)| (a.values()[i], b.values()[j]))
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .collect())
}

/// Pearson correlation over jointly voiced aligned frames.
pub fn pcc(a: &F0Contour, b: &F0Contour, path: &[(usize, usize)]) -> Result<f64> {
    let pairs = voiced_pairs(a, b, path)?;
    if pairs.len() < 2 {
        return Err(Error::Invalid(format!(
            "{} jointly voiced frames, need 2",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    let guard = SIGMA_GUARD * SIGMA_GUARD * n;
    if sxx <= guard || syy <= guard {
        return Err(Error::DegenerateVariance(sxx.min(syy) / n));
    }
    if sxx == syy && sxy == sxx {
        return Ok(1.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// RMS Hz difference over jointly voiced aligned frames.
pub fn rmse_f0(a: &F0Contour, b: &F0Contour, path: &[(usize, usize)]) -> Result<f64> {
    let pairs = voiced_pairs(a, b, path)?;
    if pairs.is_empty() {
        return Err(Error::Invalid("no jointly voiced frames".into()));
    }
    Ok((pairs.iter().map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / pairs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub condition: String,
    pub source: String,
    pub target: String,
    pub mcd_db: f64,
    pub lsd_db: f64,
    pub pcc: f64,
    pub rmse_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub pairs: usize,
    pub mcd_db: f64,
    pub lsd_db: f64,
    pub pcc: f64,
    pub rmse_hz: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub metadata: BTreeMap<String, String>,
}

pub const ZERO_EFFORT: &str = "zero-effort";
pub const CONVERTED: &str = "converted";

impl EvalReport {
    pub fn conditions(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.condition.as_str()) {
                out.push(&r.condition);
            }
        }
        out
    }

    /// Means of the rows with the given condition label.
    pub fn aggregate(&self, condition: &str) -> Option<Aggregate> {
        let rows: Vec<&EvalRow> = self
            .rows
            .iter()
            .filter(|r| r.condition == condition)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        Some(Aggregate {
            pairs: rows.len(),
            mcd_db: mean(|r| r.mcd_db),
            lsd_db: mean(|r| r.lsd_db),
            pcc: mean(|r| r.pcc),
            rmse_hz: mean(|r| r.rmse_hz),
        })
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
        self.metadata.extend(other.metadata);
    }

    /// Tab-separated rows, then a `key = value` block with metadata and
    /// per-condition means.
    pub fn to_text(&self) -> String {
        let mut s = String::from("condition\tsource\ttarget\tmcd_db\tlsd_db\tpcc\trmse_hz\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}",
                r.condition, r.source, r.target, r.mcd_db, r.lsd_db, r.pcc, r.rmse_hz
            );
        }
        s.push('\n');
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "{k} = {v}");
        }
        for c in self.conditions() {
            let a = self.aggregate(c).expect("condition has rows");
            let _ = writeln!(s, "{c}.pairs = {}", a.pairs);
            let _ = writeln!(s, "{c}.mcd_db = {:.6}", a.mcd_db);
            let _ = writeln!(s, "{c}.lsd_db = {:.6}", a.lsd_db);
            let _ = writeln!(s, "{c}.pcc = {:.6}", a.pcc);
            let _ = writeln!(s, "{c}.rmse_hz = {:.6}", a.rmse_hz);
        }
        s
    }
}

/// Features needed for evaluation, read from an utterance archive.
#[derive(Debug, Clone)]
pub struct EvalFeatures {
    pub f0: F0Contour,
    pub sp: SpectralEnvelope,
    pub mcep: McepSequence,
}

impl EvalFeatures {
    pub fn from_archive(a: &FeatureArchive) -> Result<Self> {
        let hop: f64 = a.meta_parse("hop_ms")?;
        let rate: u32 = a.meta_parse("sample_rate_hz")?;
        let fft: usize = a.meta_parse("fft_size")?;
        let f0 = F0Contour::new_unchecked_range(a.require("f0")?.to_f64(), hop)?;
        let sp = SpectralEnvelope::new(a.require("sp")?.to_f64(), fft, rate)?;
        if sp.num_frames() != f0.len() {
            return Err(Error::FrameCountMismatch {
                left: f0.len(),
                right: sp.num_frames(),
            });
        }
        let mcep = mcep_from_envelope(&sp, MCD_ORDER, MCD_ALPHA)?;
        Ok(Self { f0, sp, mcep })
    }
}

/// All four metrics for one pair, aligned by DTW on mel-cepstra.
pub fn evaluate_pair(
    condition: &str,
    source: (&str, &EvalFeatures),
    target: (&str, &EvalFeatures),
) -> Result<EvalRow> {
    let (a, b) = (source.1, target.1);
    let path = dtw_align(&a.mcep, &b.mcep)?;
    Ok(EvalRow {
        condition: condition.to_string(),
        source: source.0.to_string(),
        target: target.0.to_string(),
        mcd_db: mcd(&a.mcep, &b.mcep, &path)?,
        lsd_db: lsd(&a.sp, &b.sp, &path)?,
        pcc: pcc(&a.f0, &b.f0, &path)?,
        rmse_hz: rmse_f0(&a.f0, &b.f0, &path)?,
    })
}

/// Source-vs-target metrics with no model applied, pairing the lists in order.
pub fn zero_effort_report(
    sources: &[(String, FeatureArchive)],
    targets: &[(String, FeatureArchive)],
) -> Result<EvalReport> {
    pair_report(ZERO_EFFORT, sources, targets)
}

/// Metrics for a list of in-order pairs under a condition label.
pub fn pair_report(
    condition: &str,
    sources: &[(String, FeatureArchive)],
    targets: &[(String, FeatureArchive)],
) -> Result<EvalReport> {
    if sources.len() != targets.len() {
        return Err(Error::Invalid(format!(
            "{} sources but {} targets",
            sources.len(),
            targets.len()
        )));
    }
    let mut report = EvalReport::default();
    for ((sid, sa), (tid, ta)) in sources.iter().zip(targets) {
        let s = EvalFeatures::from_archive(sa)?;
        let t = EvalFeatures::from_archive(ta)?;
        report
            .rows
            .push(evaluate_pair(condition, (sid, &s), (tid, &t))?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mcep(frames: &[Vec<f64>]) -> McepSequence {
        let order = frames[0].len() - 1;
        McepSequence::new(frames.concat(), order, MCD_ALPHA).unwrap()
    }

    fn random_mcep(seed: u64, t: usize) -> McepSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        mcep(
            &(0..t)
                .map(|_| (0..25).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect::<Vec<_>>(),
        )
    }

    /// Every monotone continuous path from (0,0) to (n-1,m-1).
    fn all_paths(n: usize, m: usize) -> Vec<WarpPath> {
        fn go(i: usize, j: usize, n: usize, m: usize, cur: &mut WarpPath, out: &mut Vec<WarpPath>) {
            cur.push((i, j));
            if i == n - 1 && j == m - 1 {
                out.push(cur.clone());
            } else {
                if i + 1 < n && j + 1 < m {
                    go(i + 1, j + 1, n, m, cur, out);
                }
                if i + 1 < n {
                    go(i + 1, j, n, m, cur, out);
                }
                if j + 1 < m {
                    go(i, j + 1, n, m, cur, out);
                }
            }
            cur.pop();
        }
        let mut out = Vec::new();
        go(0, 0, n, m, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn dtw_matches_exhaustive_search() {
        let (a, b) = ([0.0, 1.0, 2.0], [0.0, 0.0, 1.0, 2.0]);
        let path = dtw_path(&a, &b, 1).unwrap();
        let best = all_paths(3, 4)
            .iter()
            .map(|p| path_cost(&a, &b, 1, p))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(path_cost(&a, &b, 1, &path), best);
        assert_eq!(best, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.random_range(1..6);
            let m = rng.random_range(1..6);
            let a: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2 * m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let path = dtw_path(&a, &b, 2).unwrap();
            let best = all_paths(n, m)
                .iter()
                .map(|p| path_cost(&a, &b, 2, p))
                .fold(f64::INFINITY, f64::min);
            assert!((path_cost(&a, &b, 2, &path) - best).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_sequences_align_diagonally() {
        let m = random_mcep(1, 30);
        let path = dtw_align(&m, &m).unwrap();
        assert_eq!(path, (0..30).map(|i| (i, i)).collect::<Vec<_>>());
        assert!(dtw_path(&[], &[1.0], 1).is_err());
    }

    #[test]
    fn mcd_examples() {
        let m = random_mcep(2, 10);
        let diag: WarpPath = (0..10).map(|i| (i, i)).collect();
        assert_eq!(mcd(&m, &m, &diag).unwrap(), 0.0);
        let a = mcep(&[vec![0.3; 25]]);
        for delta in [0.01, 0.1, 1.0] {
            let mut f = vec![0.3; 25];
            f[7] += delta;
            let b = mcep(&[f]);
            let expected = (10.0 / std::f64::consts::LN_10) * (2.0 * delta * delta).sqrt();
            assert!((mcd(&a, &b, &[(0, 0)]).unwrap() - expected).abs() < 1e-9);
        }
        let mut f = vec![0.3; 25];
        f[3] += 0.1;
        assert!((mcd(&a, &mcep(&[f]), &[(0, 0)]).unwrap() - 0.6141).abs() < 1e-4);
        let short = McepSequence::new(vec![0.0; 13], 12, MCD_ALPHA).unwrap();
        assert!(matches!(
            mcd(&a, &short, &[(0, 0)]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mcd_ignores_c0() {
        let a = random_mcep(3, 5);
        let mut shifted = a.as_slice().to_vec();
        for t in 0..5 {
            shifted[t * 25] += 3.0;
        }
        let b = McepSequence::new(shifted, 24, MCD_ALPHA).unwrap();
        let diag: WarpPath = (0..5).map(|i| (i, i)).collect();
        assert_eq!(mcd(&a, &b, &diag).unwrap(), 0.0);
    }

    fn env(frames: usize, seed: u64) -> SpectralEnvelope {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralEnvelope::new(
            (0..frames * 33)
                .map(|_| rng.random_range(-5.0..1.0))
                .collect(),
            64,
            16000,
        )
        .unwrap()
    }

    #[test]
    fn lsd_examples() {
        let a = env(4, 1);
        let diag: WarpPath = (0..4).map(|i| (i, i)).collect();
        assert_eq!(lsd(&a, &a, &diag).unwrap(), 0.0);
        let louder = SpectralEnvelope::new(
            a.as_slice()
                .iter()
                .map(|v| v + std::f64::consts::LN_10)
                .collect(),
            64,
            16000,
        )
        .unwrap();
        assert!((lsd(&a, &louder, &diag).unwrap() - 20.0).abs() < 1e-9);
        let b = env(3, 2);
        let path = vec![(0, 0), (1, 0), (2, 1), (3, 2)];
        let mut brute = 0.0;
        for &(i, j) in &path {
            let mut acc = 0.0;
            for k in 0..33 {
                let ratio = a.frame(i)[k].exp() / b.frame(j)[k].exp();
                acc += (20.0 * ratio.log10()).powi(2);
            }
            brute += (acc / 33.0).sqrt();
        }
        assert!((lsd(&a, &b, &path).unwrap() - brute / 4.0).abs() < 1e-9);
    }

    fn contour(v: Vec<f64>) -> F0Contour {
        F0Contour::new(v, 5.0).unwrap()
    }

    #[test]
    fn f0_metric_examples() {
        let x = contour(vec![100.0, 0.0, 120.0, 140.0, 110.0, 0.0]);
        let diag: WarpPath = (0..6).map(|i| (i, i)).collect();
        assert_eq!(pcc(&x, &x, &diag).unwrap(), 1.0);
        assert_eq!(rmse_f0(&x, &x, &diag).unwrap(), 0.0);
        let mirrored = contour(
            x.values()
                .iter()
                .map(|&v| if v > 0.0 { 360.0 - v } else { 0.0 })
                .collect(),
        );
        assert!((pcc(&x, &mirrored, &diag).unwrap() + 1.0).abs() < 1e-12);
        let up = contour(
            x.values()
                .iter()
                .map(|&v| if v > 0.0 { v + 10.0 } else { 0.0 })
                .collect(),
        );
        assert!((rmse_f0(&x, &up, &diag).unwrap() - 10.0).abs() < 1e-12);
        let flat = contour(vec![100.0; 6]);
        assert!(matches!(
            pcc(&x, &flat, &diag),
            Err(Error::DegenerateVariance(_))
        ));
        let one = contour(vec![100.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(pcc(&x, &one, &diag).is_err());
    }

    #[test]
    fn report_aggregates_are_row_means() {
        let mut r = EvalReport::default();
        for (i, c) in [ZERO_EFFORT, CONVERTED, ZERO_EFFORT].iter().enumerate() {
            r.rows.push(EvalRow {
                condition: c.to_string(),
                source: format!("s{i}"),
                target: format!("t{i}"),
                mcd_db: i as f64,
                lsd_db: 2.0 * i as f64,
                pcc: 0.1 * i as f64,
                rmse_hz: 10.0 * i as f64,
            });
        }
        let z = r.aggregate(ZERO_EFFORT).unwrap();
        assert_eq!(z.pairs, 2);
        assert!((z.mcd_db - 1.0).abs() < 1e-9 && (z.rmse_hz - 10.0).abs() < 1e-9);
        assert_eq!(r.aggregate(CONVERTED).unwrap().pairs, 1);
        assert!(r.aggregate("other").is_none());
        let text = r.to_text();
        assert!(text.starts_with("condition\tsource"));
        assert!(text.contains("zero-effort.mcd_db = 1.000000"));
        assert!(text.contains("converted.pairs = 1"));
    }

    proptest! {
        #[test]
        fn pcc_is_affine_invariant(vals in prop::collection::vec(60.0f64..400.0, 3..40), scale in 0.1f64..5.0, shift in -50.0f64..50.0) {
            let x = contour(vals.clone());
            let y = contour(vals.iter().enumerate().map(|(i, v)| v + 20.0 * (i as f64).sin()).collect());
            let z = contour(y.values().iter().map(|v| (scale * v + shift).clamp(41.0, 799.0)).collect());
            prop_assume!(y.values().iter().all(|v| (scale * v + shift) > 41.0 && (scale * v + shift) < 799.0));
            let diag: WarpPath = (0..vals.len()).map(|i| (i, i)).collect();
            if let (Ok(a), Ok(b)) = (pcc(&x, &y, &diag), pcc(&x, &z, &diag)) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn dtw_is_no_worse_than_diagonal(seed in 0u64..500, t in 1usize..25) {
            let a = random_mcep(seed, t);
            let b = random_mcep(seed + 1000, t);
            let path = dtw_align(&a, &b).unwrap();
            let diag: WarpPath = (0..t).map(|i| (i, i)).collect();
            let (fa, fb) = (without_c0(&a), without_c0(&b));
            prop_assert!(path_cost(&fa, &fb, 24, &path) <= path_cost(&fa, &fb, 24, &diag) + 1e-12);
            prop_assert!(path.len() >= t);
            let continuous = path.windows(2).all(|w| {
                let (di, dj) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
                di <= 1 && dj <= 1 && di + dj >= 1
            });
            prop_assert!(continuous);
        }

        #[test]
        fn metrics_vanish_on_identical_inputs(seed in 0u64..200, t in 1usize..20) {
            let m = random_mcep(seed, t);
            let e = env(t, seed);
            let diag: WarpPath = (0..t).map(|i| (i, i)).collect();
            prop_assert_eq!(mcd(&m, &m, &diag).unwrap(), 0.0);
            prop_assert_eq!(lsd(&e, &e, &diag).unwrap(), 0.0);
        }
    }
}
