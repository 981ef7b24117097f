//! Flags and loaders shared by the dialogue-facing commands.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qadst::corpus::{self, DialogueFormat, DialogueLoadOptions, UnknownSlotPolicy};
use qadst::tracker::Canonicalizer;
use qadst::{Dialogue, Schema};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DialogueFormatArg {
    /// MultiWOZ data.json
    Multiwoz,
    /// SGD dialogue file
    Sgd,
    /// One dialogue per line
    Jsonl,
}

impl From<DialogueFormatArg> for DialogueFormat {
    fn from(f: DialogueFormatArg) -> Self {
        match f {
            DialogueFormatArg::Multiwoz => DialogueFormat::MultiWozJson,
            DialogueFormatArg::Sgd => DialogueFormat::SgdJson,
            DialogueFormatArg::Jsonl => DialogueFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownSlotsArg {
    /// Abort the run
    Error,
    /// Skip the whole dialogue
    DropDialogue,
    /// Drop only the unknown assignment
    Ignore,
}

impl From<UnknownSlotsArg> for UnknownSlotPolicy {
    fn from(p: UnknownSlotsArg) -> Self {
        match p {
            UnknownSlotsArg::Error => UnknownSlotPolicy::Error,
            UnknownSlotsArg::DropDialogue => UnknownSlotPolicy::DropDialogue,
            UnknownSlotsArg::Ignore => UnknownSlotPolicy::Ignore,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SchemaArgs {
    /// Slot schema JSON
    #[arg(long, value_name = "PATH")]
    pub schema: PathBuf,
    /// Keep slots whose candidates are all numbers categorical instead of
    /// answering them extractively
    #[arg(long)]
    pub categorical_numbers: bool,
}

impl SchemaArgs {
    pub fn load(&self) -> Result<Schema, CliError> {
        Ok(corpus::load_schema(
            &self.schema,
            !self.categorical_numbers,
        )?)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DialogueArgs {
    /// Dialogue file layout
    #[arg(long, value_enum, default_value_t = DialogueFormatArg::Jsonl)]
    pub format: DialogueFormatArg,
    /// Handling of annotations for slots missing from the schema
    #[arg(long, value_enum, default_value_t = UnknownSlotsArg::Error)]
    pub unknown_slots: UnknownSlotsArg,
}

impl DialogueArgs {
    pub fn load(&self, path: &Path, schema: &Schema) -> Result<Vec<Dialogue>, CliError> {
        let options = DialogueLoadOptions {
            unknown_slots: self.unknown_slots.into(),
        };
        let loaded = corpus::load_dialogue_dataset(path, schema, self.format.into(), options)?;
        for r in &loaded.rejected {
            log::debug!("{}: rejected {}: {}", path.display(), r.record_id, r.reason);
        }
        log::info!(
            "{}: {} dialogues, {} rejected",
            path.display(),
            loaded.records.len(),
            loaded.rejected.len()
        );
        Ok(loaded.records)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CanonicalArgs {
    /// Alias table JSON replacing the built-in one
    #[arg(long, value_name = "PATH")]
    pub aliases: Option<PathBuf>,
    /// Minimum token overlap for snapping a value to a categorical candidate
    #[arg(long, default_value_t = qadst::tracker::DEFAULT_MATCH_THRESHOLD)]
    pub match_threshold: f64,
}

impl CanonicalArgs {
    pub fn load(&self) -> Result<Canonicalizer, CliError> {
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(CliError::Config(format!(
                "--match-threshold must be within [0, 1], got {}",
                self.match_threshold
            )));
        }
        let c = match &self.aliases {
            Some(p) => Canonicalizer::load(p)?,
            None => Canonicalizer::default(),
        };
        Ok(c.with_threshold(self.match_threshold))
    }
}
