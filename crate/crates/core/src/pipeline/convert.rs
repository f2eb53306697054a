use super::checkpoint::{check_vocabularies, ModelCheckpoint};
use super::features::{
    analyze_waveform, archive_ap, energy_gate, Utterance, META_EMOTION, META_ID, META_MU_LOG,
    META_SIGMA_LOG, META_SPEAKER,
};
use super::train::f0_condition;
use crate::analysis::{
    synthesize_waveform, SpectralEnvelope, SynthesisConfig, VOICED_MAX_HZ, VOICED_MIN_HZ,
};
use crate::error::{Error, Result};
use crate::neuro::Tensor;
use crate::prosody::{
    continuous_log_f0, cwt_decompose, cwt_reconstruct, denormalize_log_f0, ContinuousLogF0,
    CwtConfig, CwtMatrix, F0Statistics,
};
use crate::signal_io::{FeatureArchive, Waveform};
use crate::vawgan::{ConditionVector, Role};

#[derive(Debug, Clone)]
pub struct Conversion {
    pub wave: Waveform,
    pub archive: FeatureArchive,
}

/// Utterance log-F0 statistics moved from the source emotion's average to
/// the target's: the mean shifts by the difference of emotion means and the
/// spread scales by the ratio of emotion spreads.
pub fn map_statistics(
    utt: F0Statistics,
    src: F0Statistics,
    tgt: F0Statistics,
) -> Result<F0Statistics> {
    F0Statistics::new(
        utt.mu_log + (tgt.mu_log - src.mu_log),
        utt.sigma_log * tgt.sigma_log / src.sigma_log,
    )
}

fn run_network(
    ckpt: &ModelCheckpoint,
    rows: &[Vec<f64>],
    conds: &[ConditionVector],
) -> Result<Vec<Vec<f64>>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let d = ckpt.model.arch().feature_dim;
    let data: Vec<f64> = rows.iter().flat_map(|r| ckpt.normalize(r)).collect();
    let out = ckpt
        .model
        .convert(&Tensor::new(vec![rows.len(), d], data)?, conds)?;
    Ok(out.data().chunks(d).map(|z| ckpt.denormalize(z)).collect())
}

/// Converts an analyzed utterance of emotion `source_emotion` to `target`.
///
/// The prosody network rewrites the CWT coefficients of the normalized
/// log-F0, which are reconstructed and mapped back to Hz with target-emotion
/// statistics. The spectrum network then rewrites each gated envelope frame,
/// conditioned on the converted F0. Aperiodicity is copied from the source.
pub fn convert_utterance(
    source: &FeatureArchive,
    source_emotion: &str,
    target: &str,
    spectrum: &ModelCheckpoint,
    prosody: &ModelCheckpoint,
    synth_seed: u64,
) -> Result<Conversion> {
    spectrum.expect_role(Role::Spectrum)?;
    prosody.expect_role(Role::Prosody)?;
    check_vocabularies(spectrum, prosody)?;
    let tgt = prosody.vocabulary.id(target)?;
    let src = prosody.vocabulary.id(source_emotion)?;
    let u = Utterance::from_archive(source)?;
    if u.analysis != spectrum.analysis || u.analysis != prosody.analysis {
        return Err(Error::Config(
            "utterance was analyzed with settings the models were not trained on".into(),
        ));
    }
    let t = u.num_frames();
    let hop = u.analysis.hop_ms;

    let cont = continuous_log_f0(&u.f0)?;
    let cwt = cwt_decompose(&cont, &CwtConfig::default())?;
    let columns: Vec<Vec<f64>> = (0..t).map(|i| cwt.column(i)).collect();
    let pros_conds = vec![tgt.condition(None)?; t];
    let converted_cols: Vec<f64> = run_network(prosody, &columns, &pros_conds)?.concat();
    let converted_cwt = CwtMatrix::from_columns(&converted_cols, hop, CwtConfig::default())?;
    let shape = cwt_reconstruct(&converted_cwt);
    let stats = map_statistics(
        u.stats,
        prosody.emotion_stats[src.slot],
        prosody.emotion_stats[tgt.slot],
    )?;
    let converted_cont = ContinuousLogF0::new(shape.clone(), u.f0.voicing_mask(), stats, hop)?;
    let f0 = denormalize_log_f0(&converted_cont, None)?;

    let (lo, hi) = (VOICED_MIN_HZ.ln(), VOICED_MAX_HZ.ln());
    let gate = energy_gate(&u.sp);
    let kept: Vec<usize> = (0..t).filter(|&i| gate[i]).collect();
    let rows: Vec<Vec<f64>> = kept.iter().map(|&i| u.sp.frame(i).to_vec()).collect();
    let spec_conds: Vec<ConditionVector> = kept
        .iter()
        .map(|&i| {
            let log_f0 = (shape[i] * stats.sigma_log + stats.mu_log).clamp(lo, hi);
            let scalar = spectrum
                .model
                .arch()
                .f0_condition
                .then(|| f0_condition(log_f0, &spectrum.f0_condition_stats));
            tgt.condition(scalar)
        })
        .collect::<Result<_>>()?;
    let converted_rows = run_network(spectrum, &rows, &spec_conds)?;
    let mut sp = u.sp.as_slice().to_vec();
    let bins = u.sp.bins();
    for (&i, row) in kept.iter().zip(&converted_rows) {
        sp[i * bins..(i + 1) * bins].copy_from_slice(row);
    }
    let sp = SpectralEnvelope::new(sp, u.analysis.fft_size, u.analysis.sample_rate_hz)?;

    let ap = archive_ap(source)?;
    let wave = synthesize_waveform(
        &f0,
        &sp,
        Some(&ap),
        &SynthesisConfig {
            frame_ms: u.analysis.frame_ms,
            seed: synth_seed,
        },
    )?;

    let mut out = FeatureArchive::new();
    out.insert("f0", vec![t], f0.values())?;
    out.insert("sp", vec![t, bins], sp.as_slice())?;
    out.insert_array("ap", source.require("ap")?.clone())?;
    out.insert("cwt", vec![t, converted_cwt.num_scales()], &converted_cols)?;
    u.analysis.write_meta(&mut out);
    out.set_meta(META_MU_LOG, stats.mu_log.to_string());
    out.set_meta(META_SIGMA_LOG, stats.sigma_log.to_string());
    out.set_meta(META_EMOTION, tgt.label.clone());
    out.set_meta("source_emotion", src.label.clone());
    if let Some(id) = source.meta(META_ID) {
        out.set_meta("converted_from", id);
    }
    if let Some(s) = source.meta(META_SPEAKER) {
        out.set_meta(META_SPEAKER, s);
    }
    out.set_meta("spectrum.seed", spectrum.seed().to_string());
    out.set_meta("spectrum.steps", spectrum.steps_done.to_string());
    out.set_meta("prosody.seed", prosody.seed().to_string());
    out.set_meta("prosody.steps", prosody.steps_done.to_string());
    out.set_meta("synthesis.seed", synth_seed.to_string());
    Ok(Conversion { wave, archive: out })
}

/// Analyzes a waveform with the checkpoints' settings, then converts it.
pub fn convert_waveform(
    wave: &Waveform,
    source_emotion: &str,
    target: &str,
    spectrum: &ModelCheckpoint,
    prosody: &ModelCheckpoint,
    synth_seed: u64,
) -> Result<Conversion> {
    let source = analyze_waveform(wave, &spectrum.analysis)?;
    convert_utterance(
        &source,
        source_emotion,
        target,
        spectrum,
        prosody,
        synth_seed,
    )
}
