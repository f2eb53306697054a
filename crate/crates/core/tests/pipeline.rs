use std::path::Path;
use std::sync::OnceLock;

use evoconv::error::Error;
use evoconv::eval::{dtw_align, mcd, EvalFeatures};
use evoconv::pipeline::checkpoint::write_train_config;
use evoconv::pipeline::toy::{TOY_ANGRY, TOY_NEUTRAL};
use evoconv::pipeline::*;
use evoconv::signal_io::{save_archive, FeatureArchive};
use evoconv::vawgan::{Role, TrainConfig, PROSODY_COND_WIDTH, SPECTRUM_COND_WIDTH};

struct Fixture {
    _dir: tempfile::TempDir,
    manifest: CorpusManifest,
    archives: Vec<(String, FeatureArchive)>,
    spectrum: ModelCheckpoint,
    prosody: ModelCheckpoint,
}

fn quick(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        ..TrainConfig::desk()
    }
}

/// Ten toy utterances (one speaker, five per emotion) with briefly trained models.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let corpus = make_toy_corpus(&ToyConfig {
            speakers: 1,
            utterances: 5,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let manifest = corpus.write(dir.path()).unwrap();
        let report = ingest(&manifest, &AnalysisConfig::default());
        assert!(report.is_clean(), "{:?}", report.failures);
        let spectrum = train_spectrum(&report.archives, &quick(200), true, None)
            .unwrap()
            .checkpoint;
        let prosody = train_prosody(&report.archives, &quick(300), None)
            .unwrap()
            .checkpoint;
        Fixture {
            _dir: dir,
            manifest,
            archives: report.archives,
            spectrum: spectrum.round_tripped().unwrap(),
            prosody: prosody.round_tripped().unwrap(),
        }
    })
}

fn archive<'a>(f: &'a Fixture, id: &str) -> &'a FeatureArchive {
    &f.archives.iter().find(|(i, _)| i == id).unwrap().1
}

#[test]
fn toy_corpus_ingests_into_complete_archives() {
    let f = fixture();
    assert_eq!(f.archives.len(), 10);
    for (id, a) in &f.archives {
        for name in ["f0", "sp", "ap", "cwt"] {
            assert!(a.contains(name), "{id} lacks {name}");
        }
        assert_eq!(a.meta("id"), Some(id.as_str()));
        assert!(a.meta("f0_mu_log").is_some() && a.meta("f0_sigma_log").is_some());
    }
    assert_eq!(f.manifest.vocabulary().labels(), &[TOY_ANGRY, TOY_NEUTRAL]);
}

#[test]
fn corrupt_wav_is_recorded_without_aborting() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut entries = f.manifest.entries().to_vec();
    let bad = dir.path().join("broken.wav");
    std::fs::write(&bad, b"RIFF\x10\x00\x00\x00WAVEjunk").unwrap();
    entries[4].path = bad;
    let report = ingest(
        &CorpusManifest::new(entries).unwrap(),
        &AnalysisConfig::default(),
    );
    assert_eq!(report.archives.len(), 9);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].id, f.manifest.entries()[4].id);
    assert!(report.failures[0].io_or_corruption);
}

#[test]
fn extracted_archives_pass_through_unchanged() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let (id, a) = &f.archives[0];
    let path = dir.path().join(format!("{id}.evcf"));
    save_archive(&path, a).unwrap();
    let entry = ManifestEntry {
        id: id.clone(),
        path,
        speaker: "s0".into(),
        emotion: a.meta("emotion").unwrap().into(),
    };
    let report = ingest(
        &CorpusManifest::new(vec![entry]).unwrap(),
        &AnalysisConfig::default(),
    );
    assert_eq!(report.archives[0].1.to_bytes(), a.to_bytes());
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    for ckpt in [&f.spectrum, &f.prosody] {
        let path = dir.path().join(format!("{}.evcf", ckpt.role().as_str()));
        ckpt.save(&path).unwrap();
        let back = ModelCheckpoint::load(&path).unwrap();
        assert_eq!(&back, ckpt);
        assert_eq!(
            back.to_archive().unwrap().to_bytes(),
            std::fs::read(&path).unwrap()
        );
    }
}

#[test]
fn checkpoints_record_conditioning_widths_and_settings() {
    let f = fixture();
    let s = f.spectrum.to_archive().unwrap();
    let p = f.prosody.to_archive().unwrap();
    assert_eq!(
        s.meta_parse::<usize>("arch.cond_width").unwrap(),
        SPECTRUM_COND_WIDTH
    );
    assert_eq!(
        p.meta_parse::<usize>("arch.cond_width").unwrap(),
        PROSODY_COND_WIDTH
    );
    assert_eq!(s.meta("train.batch"), Some("32"));
    assert_eq!(s.meta("seed"), Some("0"));
    assert_eq!(p.meta("vocabulary"), Some("angry,neutral"));
    // the two pipelines keep separate parameters
    assert_eq!(f.spectrum.model.arch().feature_dim, 513);
    assert_eq!(f.prosody.model.arch().feature_dim, 10);
    assert_ne!(
        f.spectrum.model.gen.num_scalars(),
        f.prosody.model.gen.num_scalars()
    );

    let mut a = FeatureArchive::new();
    write_train_config(&mut a, &Profile::Paper.train_config(Role::Spectrum));
    assert_eq!(a.meta("train.lr"), Some("0.00001"));
    assert_eq!(a.meta("train.batch"), Some("256"));
    assert_eq!(a.meta("train.epochs"), Some("45"));
}

#[test]
fn role_mismatch_and_truncation_are_rejected() {
    let f = fixture();
    let src = archive(f, "s0_neutral_00");
    let err =
        convert_utterance(src, TOY_NEUTRAL, TOY_ANGRY, &f.prosody, &f.spectrum, 0).unwrap_err();
    assert!(matches!(err, Error::RoleMismatch { .. }), "{err}");
    assert!(f.prosody.expect_role(Role::Spectrum).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.evcf");
    f.prosody.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = ModelCheckpoint::load(&path).unwrap_err();
    assert!(err.is_io_or_corruption(), "{err}");
}

#[test]
fn unknown_labels_and_mismatched_vocabularies_are_rejected() {
    let f = fixture();
    let src = archive(f, "s0_neutral_00");
    let err =
        convert_utterance(src, TOY_NEUTRAL, "joyful", &f.spectrum, &f.prosody, 0).unwrap_err();
    assert!(matches!(err, Error::UnknownEmotion { .. }), "{err}");
    let mut other = f.prosody.clone();
    other.vocabulary = EmotionVocabulary::from_labels(["angry", "sad"]).unwrap();
    let err = convert_utterance(src, TOY_NEUTRAL, TOY_ANGRY, &f.spectrum, &other, 0).unwrap_err();
    assert!(matches!(err, Error::Vocabulary(_)), "{err}");
}

#[test]
fn single_emotion_corpus_cannot_train() {
    let f = fixture();
    let neutral: Vec<_> = f
        .archives
        .iter()
        .filter(|(id, _)| id.contains(TOY_NEUTRAL))
        .cloned()
        .collect();
    assert!(matches!(
        train_prosody(&neutral, &quick(1), None),
        Err(Error::SingleEmotion)
    ));
    assert!(matches!(
        train_spectrum(&neutral, &quick(1), true, None),
        Err(Error::SingleEmotion)
    ));
}

#[test]
fn conversion_keeps_frames_voicing_and_aperiodicity() {
    let f = fixture();
    let src = archive(f, "s0_neutral_01");
    let conv = convert_utterance(src, TOY_NEUTRAL, TOY_ANGRY, &f.spectrum, &f.prosody, 9).unwrap();
    let a = &conv.archive;
    assert_eq!(a.require("ap").unwrap(), src.require("ap").unwrap());
    let bits = |x: &FeatureArchive| -> Vec<u32> {
        x.require("ap")
            .unwrap()
            .data
            .iter()
            .map(|v| v.to_bits())
            .collect()
    };
    assert_eq!(bits(a), bits(src));
    let (f_src, f_out) = (
        src.require("f0").unwrap().to_f64(),
        a.require("f0").unwrap().to_f64(),
    );
    assert_eq!(f_src.len(), f_out.len());
    assert_eq!(
        a.require("sp").unwrap().shape,
        src.require("sp").unwrap().shape
    );
    for (x, y) in f_src.iter().zip(&f_out) {
        assert_eq!(*x > 0.0, *y > 0.0);
    }
    assert_eq!(a.meta("emotion"), Some(TOY_ANGRY));
    let t = f_src.len();
    assert_eq!(conv.wave.len(), (t - 1) * 80 + 400);

    let again = convert_utterance(src, TOY_NEUTRAL, TOY_ANGRY, &f.spectrum, &f.prosody, 9).unwrap();
    assert_eq!(again.archive.to_bytes(), a.to_bytes());
    assert_eq!(again.wave, conv.wave);
}

#[test]
fn waveform_input_matches_archive_input() {
    let f = fixture();
    let entry = &f.manifest.entries()[0];
    let wave = evoconv::signal_io::read_wav(&entry.path).unwrap();
    let from_wave =
        convert_waveform(&wave, &entry.emotion, TOY_ANGRY, &f.spectrum, &f.prosody, 1).unwrap();
    let from_archive = convert_utterance(
        archive(f, &entry.id),
        &entry.emotion,
        TOY_ANGRY,
        &f.spectrum,
        &f.prosody,
        1,
    )
    .unwrap();
    assert_eq!(from_wave.wave, from_archive.wave);
}

fn mcep_of(a: &FeatureArchive) -> evoconv::analysis::McepSequence {
    EvalFeatures::from_archive(a).unwrap().mcep
}

#[test]
fn same_emotion_conversion_stays_closest_to_its_input() {
    let f = fixture();
    for (id, src) in f
        .archives
        .iter()
        .filter(|(id, _)| id.contains(TOY_NEUTRAL))
        .take(3)
    {
        let out =
            convert_utterance(src, TOY_NEUTRAL, TOY_NEUTRAL, &f.spectrum, &f.prosody, 0).unwrap();
        let out_mcep = mcep_of(&out.archive);
        let dist = |a: &FeatureArchive| {
            let m = mcep_of(a);
            mcd(&m, &out_mcep, &dtw_align(&m, &out_mcep).unwrap()).unwrap()
        };
        let own = dist(src);
        // a briefly trained model keeps the emotion class and leans toward its own input
        let (mut same, mut other) = (Vec::new(), Vec::new());
        for (other_id, x) in f.archives.iter().filter(|(o, _)| o != id) {
            if other_id.contains(TOY_NEUTRAL) {
                same.push(dist(x))
            } else {
                other.push(dist(x))
            }
        }
        let nearest_other = other.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean_same = same.iter().sum::<f64>() / same.len() as f64;
        assert!(
            own < nearest_other,
            "{id}: {own:.3} vs other emotion {nearest_other:.3}"
        );
        assert!(
            own < mean_same,
            "{id}: {own:.3} vs same emotion mean {mean_same:.3}"
        );
    }
}

#[test]
fn manifest_written_by_toy_corpus_reloads() {
    let f = fixture();
    let path = f.manifest.entries()[0]
        .path
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .join("manifest.tsv");
    let back = CorpusManifest::load(&path).unwrap();
    assert_eq!(back.entries(), f.manifest.entries());
    assert!(Path::new(&back.entries()[0].path).exists());
}
