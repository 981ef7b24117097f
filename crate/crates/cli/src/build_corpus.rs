use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use qadst::corpus::{self, jsonl, ExtractiveFormat, Loaded, MultiChoiceFormat};
use qadst::rng::derive_seed;
use qadst::synthesis::{synthesize_stream, SynthesisConfig, SynthesisStats};
use qadst::QaExample;
use serde::{Serialize, Serializer};

use crate::error::CliError;
use crate::run::{
    default_manifest_path, require_inputs, require_output_dirs, write_atomic_with, RunManifest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QaFormat {
    Squad,
    Mrqa,
    Race,
    Dream,
    Unified,
}

/// `FORMAT:PATH`, one source dataset.
#[derive(Debug, Clone)]
pub struct QaInput {
    pub format: QaFormat,
    pub path: PathBuf,
}

impl FromStr for QaInput {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (fmt, path) = s
            .split_once(':')
            .ok_or_else(|| format!("expected FORMAT:PATH, got `{s}`"))?;
        let format = QaFormat::from_str(fmt, true)?;
        if path.is_empty() {
            return Err(format!("empty path in `{s}`"));
        }
        Ok(QaInput {
            format,
            path: PathBuf::from(path),
        })
    }
}

impl Serialize for QaInput {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let name = self
            .format
            .to_possible_value()
            .expect("no skipped variants");
        s.serialize_str(&format!("{}:{}", name.get_name(), self.path.display()))
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildCorpusArgs {
    /// Source dataset as FORMAT:PATH, where FORMAT is squad, mrqa, race, dream
    /// or unified. Repeatable; sources are concatenated in the given order
    #[arg(long = "input", value_name = "FORMAT:PATH", required = true)]
    pub inputs: Vec<QaInput>,
    /// Fraction of examples replaced by an unanswerable variant
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Share of unanswerable variants made by negative question sampling; the
    /// rest truncate the context before the answer
    #[arg(long, default_value_t = 0.95)]
    pub nqs_fraction: f64,
    /// Also sample negative questions for multi-choice examples
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    pub nqs_multichoice: Toggle,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Unified QA JSONL output
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Run manifest; defaults to <out>.manifest.json
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

fn load(input: &QaInput) -> Result<Loaded<QaExample>, CliError> {
    let p = &input.path;
    Ok(match input.format {
        QaFormat::Squad => corpus::load_extractive_dataset(p, ExtractiveFormat::Squad2Json)?,
        QaFormat::Mrqa => corpus::load_extractive_dataset(p, ExtractiveFormat::MrqaJsonl)?,
        QaFormat::Race => corpus::load_multichoice_dataset(p, MultiChoiceFormat::RaceJson)?,
        QaFormat::Dream => corpus::load_multichoice_dataset(p, MultiChoiceFormat::DreamJson)?,
        QaFormat::Unified => corpus::load_unified_jsonl(p)?,
    })
}

pub fn run(args: BuildCorpusArgs) -> Result<(), CliError> {
    let paths: Vec<&std::path::Path> = args.inputs.iter().map(|i| i.path.as_path()).collect();
    require_inputs(&paths)?;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| default_manifest_path(&args.out));
    require_output_dirs(&[&args.out, &manifest_path])?;

    let cfg = SynthesisConfig {
        alpha: args.alpha,
        nqs_fraction: args.nqs_fraction,
        seed: derive_seed(args.seed, "build-corpus/synthesis"),
        nqs_multichoice: matches!(args.nqs_multichoice, Toggle::On),
    };
    cfg.validate()?;

    let mut sources = Vec::new();
    for input in &args.inputs {
        let loaded = load(input)?;
        for r in &loaded.rejected {
            log::debug!(
                "{}: rejected {}: {}",
                input.path.display(),
                r.record_id,
                r.reason
            );
        }
        let unanswerable = loaded
            .records
            .iter()
            .filter(|e| e.is_unanswerable())
            .count();
        log::info!(
            "{}: {} examples ({} unanswerable), {} rejected",
            input.path.display(),
            loaded.records.len(),
            unanswerable,
            loaded.rejected.len()
        );
        sources.extend(loaded.records);
    }
    if sources.is_empty() {
        return Err(CliError::Data("no usable QA examples in the inputs".into()));
    }

    let out = synthesize_stream(&sources, &cfg)?;
    let stats = SynthesisStats::from_outputs(&out);
    log::info!(
        "synthesized {} of {} ({} negative questions, {} truncated contexts, {} truncation fallbacks)",
        stats.synthesized(),
        stats.total,
        stats.negative_question,
        stats.truncated_context,
        stats.negative_question_fallback
    );

    RunManifest::new("build-corpus", &args, Some(args.seed), &paths)?.write(&manifest_path)?;
    write_atomic_with(&args.out, |w| {
        jsonl::write(w, out.iter().map(|s| &s.example))
    })?;
    log::info!("wrote {} records to {}", out.len(), args.out.display());
    Ok(())
}
