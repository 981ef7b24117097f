use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use clap::Args;
use qadst::corpus::{jsonl, SchemaFile};
use qadst::normalize::normalize_value;
use qadst::tracker::Canonicalizer;
use qadst::{SlotDescriptor, NONE_VALUE};
use serde::Serialize;

use crate::error::CliError;
use crate::inputs::{CanonicalArgs, SchemaArgs};
use crate::run::{
    default_manifest_path, require_inputs, require_output_dirs, write_atomic, RunManifest,
};

#[derive(Debug, Args, Serialize)]
pub struct LintArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub canonical: CanonicalArgs,
    /// Lint report JSON; printed to stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub slot_id: String,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Serialize)]
pub struct LintReport {
    pub slots: usize,
    pub categorical: usize,
    pub domains: Vec<String>,
    pub errors: usize,
    pub warnings: usize,
    pub issues: Vec<Issue>,
}

/// Checks every slot and reports all problems instead of stopping at the
/// first one, as schema loading does.
pub fn lint(slots: &[SlotDescriptor], canonicalizer: &Canonicalizer) -> LintReport {
    let mut issues = Vec::new();
    let mut push = |slot: &str, severity, message: String| {
        issues.push(Issue {
            slot_id: slot.to_string(),
            severity,
            message,
        })
    };
    let mut ids = HashSet::new();
    let mut domains: Vec<String> = Vec::new();
    for slot in slots {
        let id = &slot.slot_id;
        if !domains.contains(&slot.domain) {
            domains.push(slot.domain.clone());
        }
        if slot.domain.is_empty() || slot.slot_name.is_empty() {
            push(id, Severity::Error, "empty domain or slot name".into());
        }
        if !ids.insert(id.as_str()) {
            push(id, Severity::Error, "slot defined more than once".into());
        }
        if slot.question.is_none() {
            push(
                id,
                Severity::Warning,
                "no question text, the default template is used".into(),
            );
        }
        if !slot.is_categorical() {
            continue;
        }
        if slot.value_candidates.len() < 2 {
            push(
                id,
                Severity::Error,
                format!(
                    "categorical slot with {} candidates",
                    slot.value_candidates.len()
                ),
            );
        }
        let mut seen: HashMap<String, &str> = HashMap::new();
        for c in &slot.value_candidates {
            let norm = normalize_value(c);
            if norm == NONE_VALUE || norm.is_empty() {
                push(
                    id,
                    Severity::Error,
                    format!("candidate `{c}` is reserved for inactive slots"),
                );
                continue;
            }
            if let Some(first) = seen.insert(norm.clone(), c) {
                push(
                    id,
                    Severity::Error,
                    format!("candidates `{first}` and `{c}` normalize to the same value"),
                );
            }
            let canonical = canonicalizer.canonicalize(c, slot);
            if canonical != norm {
                push(
                    id,
                    Severity::Error,
                    format!(
                        "candidate `{c}` canonicalizes to `{canonical}` and can never be predicted"
                    ),
                );
            }
        }
    }
    let errors = issues
        .iter()
        .filter(|i| i.severity == Severity::Error)
        .count();
    LintReport {
        slots: slots.len(),
        categorical: slots.iter().filter(|s| s.is_categorical()).count(),
        domains,
        errors,
        warnings: issues.len() - errors,
        issues,
    }
}

pub fn run(args: LintArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&args.schema.schema];
    inputs.extend(args.canonical.aliases.as_deref());
    require_inputs(&inputs)?;
    let manifest_path = args.out.as_deref().map(default_manifest_path);
    let outputs: Vec<&Path> = args
        .out
        .iter()
        .map(PathBuf::as_path)
        .chain(manifest_path.as_deref())
        .collect();
    require_output_dirs(&outputs)?;

    let path = &args.schema.schema;
    let file: SchemaFile = serde_json::from_str(&jsonl::read_file(path)?)
        .map_err(|e| CliError::Data(format!("{}: malformed schema: {e}", path.display())))?;
    let slots = file.into_slots(!args.schema.categorical_numbers);
    let report = lint(&slots, &args.canonical.load()?);
    for i in &report.issues {
        match i.severity {
            Severity::Error => log::error!("{}: {}", i.slot_id, i.message),
            Severity::Warning => log::debug!("{}: {}", i.slot_id, i.message),
        }
    }

    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match (&args.out, &manifest_path) {
        (Some(p), Some(m)) => {
            RunManifest::new("schema-lint", &args, None, &inputs)?.write(m)?;
            write_atomic(p, text.as_bytes())?;
        }
        _ => print!("{text}"),
    }
    if report.errors > 0 {
        return Err(CliError::Data(format!(
            "schema has {} lint errors",
            report.errors
        )));
    }
    Ok(())
}
