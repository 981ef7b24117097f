use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use qadst::corpus::jsonl;
use qadst::eval::{self, DomainTurnSelection, EvalOptions};
use qadst::tracker::TurnPrediction;
use serde::Serialize;

use crate::error::CliError;
use crate::inputs::{DialogueArgs, SchemaArgs};
use crate::run::{
    default_manifest_path, require_inputs, require_output_dirs, write_atomic, RunManifest,
};

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainSelectionArg {
    /// Every turn of dialogues that ever touch the domain
    Touching,
    /// Only turns whose gold state has a slot of the domain
    Active,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Gold dialogues
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
    #[command(flatten)]
    pub dialogue: DialogueArgs,
    /// Predictions JSONL from `track`
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// Diagnostics JSONL from `track`; supplies the raw answers for
    /// --oracle-gate
    #[arg(long, value_name = "PATH")]
    pub diagnostics: Option<PathBuf>,
    /// Domains to score separately, comma separated
    #[arg(long, value_delimiter = ',', value_name = "DOMAINS")]
    pub per_domain: Vec<String>,
    /// Turns counted in a domain's joint accuracy
    #[arg(long, value_enum, default_value_t = DomainSelectionArg::Touching)]
    pub domain_selection: DomainSelectionArg,
    /// Average goal accuracy per slot, then across slots
    #[arg(long)]
    pub aga_macro: bool,
    /// Also rescore with gold gates
    #[arg(long)]
    pub oracle_gate: bool,
    /// Metrics report JSON; printed to stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Per-slot error counts CSV
    #[arg(long, value_name = "PATH")]
    pub slot_csv: Option<PathBuf>,
    /// Run manifest; defaults to <out>.manifest.json
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

/// Attaches the diagnostics of `diag` to the predictions with the same key.
fn merge_diagnostics(predictions: &mut [TurnPrediction], diag: Vec<TurnPrediction>) {
    let mut by_key: HashMap<(String, usize), TurnPrediction> = diag
        .into_iter()
        .map(|d| ((d.dialogue_id.clone(), d.turn_index), d))
        .collect();
    let mut missing = 0;
    for p in predictions.iter_mut() {
        match by_key.remove(&(p.dialogue_id.clone(), p.turn_index)) {
            Some(d) => {
                if d.state != p.state {
                    log::warn!(
                        "diagnostics for {} turn {} disagree with the predicted state",
                        p.dialogue_id,
                        p.turn_index
                    );
                }
                p.gate = d.gate;
                p.raw_values = d.raw_values;
                p.pass2_values = d.pass2_values;
            }
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{missing} predictions have no diagnostics");
    }
}

pub fn run(args: EvaluateArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&args.schema.schema, &args.gold, &args.predictions];
    inputs.extend(args.diagnostics.as_deref());
    require_inputs(&inputs)?;
    let manifest_path = args
        .manifest
        .clone()
        .or_else(|| args.out.as_deref().map(default_manifest_path));
    let mut outputs: Vec<&Path> = Vec::new();
    outputs.extend(args.out.as_deref());
    outputs.extend(args.slot_csv.as_deref());
    outputs.extend(manifest_path.as_deref());
    require_output_dirs(&outputs)?;

    let schema = args.schema.load()?;
    let golds = args.dialogue.load(&args.gold, &schema)?;
    let mut predictions: Vec<TurnPrediction> = jsonl::read(&args.predictions)?;
    if let Some(p) = &args.diagnostics {
        merge_diagnostics(&mut predictions, jsonl::read(p)?);
    }
    let foreign: usize = predictions
        .iter()
        .map(|p| p.state.slot_ids().filter(|s| !schema.contains(s)).count())
        .sum();
    if foreign > 0 {
        log::warn!("{foreign} predicted assignments name slots outside the schema; they count as gate errors");
    }

    let options = EvalOptions {
        aga_macro: args.aga_macro,
        per_domain: args.per_domain.clone(),
        domain_selection: match args.domain_selection {
            DomainSelectionArg::Touching => DomainTurnSelection::TouchingDialogues,
            DomainSelectionArg::Active => DomainTurnSelection::ActiveTurns,
        },
        oracle_gate: args.oracle_gate,
    };
    let report = eval::evaluate(&predictions, &golds, &schema, &options)?;
    let csv = match &args.slot_csv {
        Some(_) => Some(eval::slot_breakdown_csv(&predictions, &golds, &schema)?),
        None => None,
    };
    log::info!(
        "jga {:.4}  aga {}  sga {:.4} over {} turns",
        report.jga,
        report.aga.map_or("n/a".to_string(), |a| format!("{a:.4}")),
        report.sga,
        report.counts.turns
    );

    if let Some(m) = &manifest_path {
        RunManifest::new("evaluate", &args, None, &inputs)?.write(m)?;
    }
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    match &args.out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    if let (Some(p), Some(csv)) = (&args.slot_csv, csv) {
        write_atomic(p, csv.as_bytes())?;
    }
    Ok(())
}
