//! The `evoconv` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::hash::{DefaultHasher, Hasher};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::eval::{pair_report, EvalReport, CONVERTED, ZERO_EFFORT};
use crate::pipeline::features::META_EMOTION;
use crate::pipeline::{
    analyze_waveform, convert_utterance, ingest, make_toy_corpus, train_prosody, train_spectrum,
    AnalysisConfig, CorpusManifest, IngestReport, ManifestEntry, ModelCheckpoint, Profile,
    ToyConfig, TrainOutcome,
};
use crate::signal_io::{load_archive, read_wav, save_archive, write_wav, FeatureArchive};
use crate::vawgan::{LossReport, Role, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileArg {
    Desk,
    Paper,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Desk => Profile::Desk,
            ProfileArg::Paper => Profile::Paper,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "evoconv",
    version,
    about = "Emotional voice conversion toolkit"
)]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub profile: Option<ProfileArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic two-emotion corpus (WAVs plus manifest.tsv).
    MakeToyCorpus {
        #[arg(long)]
        speakers: Option<usize>,
        #[arg(long)]
        utterances: Option<usize>,
    },
    /// Analyze every manifest entry into feature archives.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the F0-conditioned spectrum network.
    TrainSpectrum {
        #[arg(long)]
        manifest: PathBuf,
        /// Drop the F0 condition (138-wide conditioning).
        #[arg(long)]
        no_f0: bool,
        #[arg(long, default_value = "spectrum.evcf")]
        name: String,
    },
    /// Train the CWT prosody network.
    TrainProsody {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "prosody.evcf")]
        name: String,
    },
    /// Convert one utterance (WAV or archive) to a target emotion.
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        target: String,
        /// Required for WAV input; archives carry their emotion tag.
        #[arg(long)]
        source_emotion: Option<String>,
        #[arg(long)]
        spectrum: Option<PathBuf>,
        #[arg(long)]
        prosody: Option<PathBuf>,
    },
    /// Compare utterances pairwise; `--source` adds zero-effort rows.
    Evaluate {
        #[arg(long, num_args = 1.., required = true)]
        a: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        b: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        source: Vec<PathBuf>,
        #[arg(long, default_value = CONVERTED)]
        condition: String,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    profile: Option<ProfileArg>,
    out: Option<PathBuf>,
    analysis: Option<AnalysisSection>,
    spectrum: Option<TrainSection>,
    prosody: Option<TrainSection>,
    toy: Option<ToySection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalysisSection {
    sample_rate_hz: Option<u32>,
    frame_ms: Option<f64>,
    hop_ms: Option<f64>,
    fft_size: Option<usize>,
    f0_min_hz: Option<f64>,
    f0_max_hz: Option<f64>,
    voicing_threshold: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    lr: Option<f64>,
    batch: Option<usize>,
    epochs: Option<usize>,
    steps: Option<usize>,
    n_critic: Option<usize>,
    clip_c: Option<f64>,
    lambda_adv: Option<f64>,
    lambda_kl: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ToySection {
    speakers: Option<usize>,
    utterances: Option<usize>,
    duration_s: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl TrainSection {
    fn apply(self, t: &mut TrainConfig) {
        set(&mut t.lr, self.lr);
        set(&mut t.batch, self.batch);
        set(&mut t.epochs, self.epochs);
        set(&mut t.steps, self.steps);
        set(&mut t.n_critic, self.n_critic);
        set(&mut t.clip_c, self.clip_c);
        set(&mut t.lambda_adv, self.lambda_adv);
        set(&mut t.lambda_kl, self.lambda_kl);
    }
}

/// Settings after merging profile defaults, the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    pub analysis: AnalysisConfig,
    pub spectrum: TrainConfig,
    pub prosody: TrainConfig,
    pub toy: ToyConfig,
}

impl EffectiveConfig {
    fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))?
            }
            None => FileConfig::default(),
        };
        let profile: Profile = cli
            .profile
            .or(file.profile)
            .unwrap_or(ProfileArg::Desk)
            .into();
        let seed = cli.seed.or(file.seed).unwrap_or(0);
        let out = cli
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out"));

        let mut analysis = AnalysisConfig::default();
        if let Some(a) = file.analysis {
            set(&mut analysis.sample_rate_hz, a.sample_rate_hz);
            set(&mut analysis.frame_ms, a.frame_ms);
            set(&mut analysis.hop_ms, a.hop_ms);
            set(&mut analysis.fft_size, a.fft_size);
            set(&mut analysis.f0_min_hz, a.f0_min_hz);
            set(&mut analysis.f0_max_hz, a.f0_max_hz);
            set(&mut analysis.voicing_threshold, a.voicing_threshold);
        }
        analysis.validate()?;
        let mut spectrum = profile.train_config(Role::Spectrum);
        let mut prosody = profile.train_config(Role::Prosody);
        if let Some(s) = file.spectrum {
            s.apply(&mut spectrum);
        }
        if let Some(s) = file.prosody {
            s.apply(&mut prosody);
        }
        spectrum.seed = seed;
        prosody.seed = seed;
        spectrum.validate()?;
        prosody.validate()?;
        let mut toy = ToyConfig {
            seed,
            ..ToyConfig::default()
        };
        if let Some(t) = file.toy {
            set(&mut toy.speakers, t.speakers);
            set(&mut toy.utterances, t.utterances);
            set(&mut toy.duration_s, t.duration_s);
        }
        Ok(Self {
            profile,
            seed,
            out,
            analysis,
            spectrum,
            prosody,
            toy,
        })
    }

    /// Every setting as `config.*` key/value pairs.
    pub fn to_meta(&self) -> Vec<(String, String)> {
        let mut v = vec![
            (
                "config.profile".to_string(),
                self.profile.as_str().to_string(),
            ),
            ("config.seed".to_string(), self.seed.to_string()),
        ];
        let a = &self.analysis;
        for (k, x) in [
            ("sample_rate_hz", a.sample_rate_hz.to_string()),
            ("frame_ms", a.frame_ms.to_string()),
            ("hop_ms", a.hop_ms.to_string()),
            ("fft_size", a.fft_size.to_string()),
            ("f0_min_hz", a.f0_min_hz.to_string()),
            ("f0_max_hz", a.f0_max_hz.to_string()),
            ("voicing_threshold", a.voicing_threshold.to_string()),
        ] {
            v.push((format!("config.analysis.{k}"), x));
        }
        for (name, t) in [("spectrum", &self.spectrum), ("prosody", &self.prosody)] {
            for (k, x) in [
                ("lr", t.lr.to_string()),
                ("batch", t.batch.to_string()),
                ("epochs", t.epochs.to_string()),
                ("steps", t.steps.to_string()),
                ("n_critic", t.n_critic.to_string()),
                ("clip_c", t.clip_c.to_string()),
                ("lambda_adv", t.lambda_adv.to_string()),
                ("lambda_kl", t.lambda_kl.to_string()),
            ] {
                v.push((format!("config.{name}.{k}"), x));
            }
        }
        v.push(("config.toy.speakers".into(), self.toy.speakers.to_string()));
        v.push((
            "config.toy.utterances".into(),
            self.toy.utterances.to_string(),
        ));
        v.push((
            "config.toy.duration_s".into(),
            self.toy.duration_s.to_string(),
        ));
        v
    }

    fn stamp(&self, a: &mut FeatureArchive, command: &str) {
        a.set_meta("config.command", command);
        for (k, v) in self.to_meta() {
            a.set_meta(&k, v);
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "utterance".into(), |s| s.to_string_lossy().into_owned())
}

fn load_utterance(path: &Path, analysis: &AnalysisConfig) -> Result<FeatureArchive> {
    if is_wav(path) {
        analyze_waveform(&read_wav(path)?, analysis)
    } else {
        load_archive(path)
    }
}

fn report_ingest(report: &IngestReport) -> Result<()> {
    for f in &report.failures {
        eprintln!(
            "warning: skipped '{}' ({}): {}",
            f.id,
            f.path.display(),
            f.error
        );
    }
    if report.archives.is_empty() {
        let first_io = report.failures.iter().any(|f| f.io_or_corruption);
        let msg = "no manifest entry could be read".to_string();
        return Err(if first_io {
            Error::Corrupt(msg)
        } else {
            Error::Invalid(msg)
        });
    }
    Ok(())
}

fn progress_printer(tag: &'static str) -> impl FnMut(usize, usize, &LossReport) {
    move |step, total, r| {
        let every = (total / 20).max(1);
        if step == 1 || step == total || step % every == 0 {
            eprintln!(
                "[{tag}] step {step}/{total} recon {:.4} kl {:.4} critic {:.4} adv {:.4}",
                r.recon, r.kl, r.d_loss, r.g_adv
            );
        }
    }
}

fn save_checkpoint(
    cfg: &EffectiveConfig,
    outcome: &TrainOutcome,
    command: &str,
    name: &str,
) -> Result<PathBuf> {
    create_dir(&cfg.out)?;
    let mut a = outcome.checkpoint.to_archive()?;
    cfg.stamp(&mut a, command);
    let path = cfg.out.join(name);
    save_archive(&path, &a)?;
    eprintln!(
        "[{command}] reconstruction {:.4} -> {:.4}; wrote {}",
        outcome.initial_recon,
        outcome.final_recon,
        path.display()
    );
    Ok(path)
}

fn input_hash(paths: &[PathBuf]) -> Result<String> {
    let mut h = DefaultHasher::new();
    for p in paths {
        h.write(&std::fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    Ok(format!("{:016x}", h.finish()))
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = EffectiveConfig::resolve(&cli)?;
    match cli.command {
        Command::MakeToyCorpus {
            speakers,
            utterances,
        } => {
            let mut toy = cfg.toy;
            set(&mut toy.speakers, speakers);
            set(&mut toy.utterances, utterances);
            let corpus = make_toy_corpus(&toy)?;
            create_dir(&cfg.out)?;
            let manifest = corpus.write(&cfg.out)?;
            let mut text = String::new();
            let mut meta = cfg.to_meta();
            meta.retain(|(k, _)| !k.starts_with("config.toy."));
            meta.push(("config.toy.speakers".into(), toy.speakers.to_string()));
            meta.push(("config.toy.utterances".into(), toy.utterances.to_string()));
            meta.push(("config.toy.duration_s".into(), toy.duration_s.to_string()));
            for (k, v) in meta {
                let _ = writeln!(text, "# {k} = {v}");
            }
            text.push_str(&manifest.to_text(&cfg.out));
            write_text(&cfg.out.join("manifest.tsv"), &text)?;
            eprintln!(
                "wrote {} utterances to {}",
                corpus.utterances.len(),
                cfg.out.display()
            );
        }
        Command::Extract { manifest } => {
            let m = CorpusManifest::load(&manifest)?;
            let report = ingest(&m, &cfg.analysis);
            report_ingest(&report)?;
            let dir = cfg.out.join("features");
            create_dir(&dir)?;
            let mut entries = Vec::new();
            for (id, mut a) in report.archives {
                cfg.stamp(&mut a, "extract");
                let path = dir.join(format!("{id}.evcf"));
                save_archive(&path, &a)?;
                let src = m
                    .entries()
                    .iter()
                    .find(|e| e.id == id)
                    .expect("ingested ids come from the manifest");
                entries.push(ManifestEntry {
                    path,
                    ..src.clone()
                });
            }
            let out_manifest = CorpusManifest::new(entries)?;
            write_text(
                &cfg.out.join("manifest.tsv"),
                &out_manifest.to_text(&cfg.out),
            )?;
            if !report.failures.is_empty() {
                let mut text = String::from("# id\tpath\terror\n");
                for f in &report.failures {
                    let _ = writeln!(text, "{}\t{}\t{}", f.id, f.path.display(), f.error);
                }
                write_text(&cfg.out.join("failures.tsv"), &text)?;
            }
            eprintln!(
                "extracted {} archives, {} failures",
                out_manifest.entries().len(),
                report.failures.len()
            );
        }
        Command::TrainSpectrum {
            manifest,
            no_f0,
            name,
        } => {
            let report = ingest(&CorpusManifest::load(&manifest)?, &cfg.analysis);
            report_ingest(&report)?;
            let mut progress = progress_printer("train-spectrum");
            let outcome =
                train_spectrum(&report.archives, &cfg.spectrum, !no_f0, Some(&mut progress))?;
            save_checkpoint(&cfg, &outcome, "train-spectrum", &name)?;
        }
        Command::TrainProsody { manifest, name } => {
            let report = ingest(&CorpusManifest::load(&manifest)?, &cfg.analysis);
            report_ingest(&report)?;
            let mut progress = progress_printer("train-prosody");
            let outcome = train_prosody(&report.archives, &cfg.prosody, Some(&mut progress))?;
            save_checkpoint(&cfg, &outcome, "train-prosody", &name)?;
        }
        Command::Convert {
            input,
            target,
            source_emotion,
            spectrum,
            prosody,
        } => {
            let (Some(spectrum), Some(prosody)) = (spectrum, prosody) else {
                return Err(Error::Config(
                    "missing model: both --spectrum and --prosody checkpoints are required".into(),
                ));
            };
            let spec = ModelCheckpoint::load(&spectrum)?;
            let pros = ModelCheckpoint::load(&prosody)?;
            let source = load_utterance(&input, &spec.analysis)?;
            let source_emotion =
                match source_emotion.or_else(|| source.meta(META_EMOTION).map(str::to_string)) {
                    Some(e) => e,
                    None => {
                        return Err(Error::Config(
                            "source emotion unknown: pass --source-emotion for WAV input".into(),
                        ))
                    }
                };
            let mut conv =
                convert_utterance(&source, &source_emotion, &target, &spec, &pros, cfg.seed)?;
            cfg.stamp(&mut conv.archive, "convert");
            conv.archive
                .set_meta("source_path", input.display().to_string());
            create_dir(&cfg.out)?;
            let base = cfg.out.join(format!("{}.{target}", stem(&input)));
            write_wav(base.with_extension(format!("{target}.wav")), &conv.wave)?;
            save_archive(base.with_extension(format!("{target}.evcf")), &conv.archive)?;
            eprintln!("wrote {}.{{wav,evcf}}", base.display());
        }
        Command::Evaluate {
            a,
            b,
            source,
            condition,
        } => {
            if a.len() != b.len() || (!source.is_empty() && source.len() != b.len()) {
                return Err(Error::Invalid(
                    "--a, --b and --source need the same number of files".into(),
                ));
            }
            let load_all = |paths: &[PathBuf]| -> Result<Vec<(String, FeatureArchive)>> {
                paths
                    .iter()
                    .map(|p| Ok((stem(p), load_utterance(p, &cfg.analysis)?)))
                    .collect()
            };
            let (aa, bb) = (load_all(&a)?, load_all(&b)?);
            let mut report = EvalReport::default();
            if !source.is_empty() {
                report.extend(pair_report(ZERO_EFFORT, &load_all(&source)?, &bb)?);
            }
            report.extend(pair_report(&condition, &aa, &bb)?);
            for (k, v) in cfg.to_meta() {
                report.metadata.insert(k, v);
            }
            let all: Vec<PathBuf> = source.iter().chain(&a).chain(&b).cloned().collect();
            report
                .metadata
                .insert("input_hash".into(), input_hash(&all)?);
            for key in [
                "spectrum.seed",
                "spectrum.steps",
                "prosody.seed",
                "prosody.steps",
            ] {
                if let Some(v) = aa.iter().find_map(|(_, x)| x.meta(key)) {
                    report
                        .metadata
                        .insert(format!("model.{key}"), v.to_string());
                }
            }
            let text = report.to_text();
            print!("{text}");
            if cli.out.is_some() {
                create_dir(&cfg.out)?;
                write_text(&cfg.out.join("report.tsv"), &text)?;
            }
        }
    }
    Ok(())
}

/// Runs the command line: exit code 0 on success, 1 for invalid input or
/// usage, 2 for I/O failures and damaged files.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io_or_corruption() {
                2
            } else {
                1
            }
        }
    }
}
