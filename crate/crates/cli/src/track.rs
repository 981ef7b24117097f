use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use qadst::backend::{oracle_from_gold, Backend, OracleBackend, RemoteBackend, RemoteConfig};
use qadst::corpus::jsonl;
use qadst::prompt::PromptConfig;
use qadst::tracker::{Tracker, TurnPrediction};
use serde::Serialize;

use crate::error::CliError;
use crate::inputs::{CanonicalArgs, DialogueArgs, SchemaArgs};
use crate::run::{
    default_manifest_path, require_inputs, require_output_dirs, write_atomic_with, RunManifest,
};

pub const BACKEND_ENV: &str = "TRANSFERQA_BACKEND_URL";

#[derive(Debug, Args, Serialize)]
pub struct TrackArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Dialogues to track
    #[arg(long, value_name = "PATH")]
    pub dialogues: PathBuf,
    #[command(flatten)]
    pub dialogue: DialogueArgs,
    /// `oracle` (answers from the dialogues' own gold states), `lookup:PATH`
    /// (replay a lookup file) or the base URL of an answer server
    #[arg(long, env = BACKEND_ENV, hide_env_values = true, value_name = "SPEC")]
    pub backend: String,
    /// Predictions JSONL
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Per-turn gates and raw answers of both passes, needed for oracle-gate
    /// rescoring
    #[arg(long, value_name = "PATH")]
    pub diagnostics: Option<PathBuf>,
    /// Write the oracle's query-to-answer table (oracle backend only)
    #[arg(long, value_name = "PATH")]
    pub oracle_lookup_out: Option<PathBuf>,
    /// Run manifest; defaults to <out>.manifest.json
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub canonical: CanonicalArgs,
    /// Dialogue context budget in characters; the oldest turns are dropped first
    #[arg(long, default_value_t = PromptConfig::default().max_input_chars)]
    pub max_input_chars: usize,
    /// Tracking threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Queries per HTTP request
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Concurrent HTTP requests per tracking thread
    #[arg(long, default_value_t = 4)]
    pub max_inflight: usize,
    /// Per-request HTTP timeout in seconds
    #[arg(long, default_value_t = 60)]
    pub timeout_secs: u64,
}

pub enum BackendSpec {
    Oracle,
    Lookup(PathBuf),
    Remote(String),
}

impl BackendSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if s == "oracle" {
            Ok(BackendSpec::Oracle)
        } else if let Some(p) = s.strip_prefix("lookup:") {
            Ok(BackendSpec::Lookup(PathBuf::from(p)))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(BackendSpec::Remote(s.to_string()))
        } else {
            Err(CliError::Config(format!(
                "--backend must be `oracle`, `lookup:PATH` or an http(s) URL, got `{s}`"
            )))
        }
    }
}

pub fn run(args: TrackArgs) -> Result<(), CliError> {
    let spec = BackendSpec::parse(&args.backend)?;
    let mut inputs: Vec<&Path> = vec![&args.schema.schema, &args.dialogues];
    if let Some(a) = &args.canonical.aliases {
        inputs.push(a);
    }
    if let BackendSpec::Lookup(p) = &spec {
        inputs.push(p);
    }
    require_inputs(&inputs)?;
    if args.oracle_lookup_out.is_some() && !matches!(spec, BackendSpec::Oracle) {
        return Err(CliError::Config(
            "--oracle-lookup-out needs --backend oracle".into(),
        ));
    }
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| default_manifest_path(&args.out));
    let mut outputs: Vec<&Path> = vec![&args.out, &manifest_path];
    outputs.extend(args.diagnostics.as_deref());
    outputs.extend(args.oracle_lookup_out.as_deref());
    require_output_dirs(&outputs)?;
    if args.max_input_chars == 0 {
        return Err(CliError::Config(
            "--max-input-chars must be positive".into(),
        ));
    }

    let schema = args.schema.load()?;
    let canonicalizer = args.canonical.load()?;
    let dialogues = args.dialogue.load(&args.dialogues, &schema)?;
    let prompt = PromptConfig {
        max_input_chars: args.max_input_chars,
    };

    let (oracle, remote) = match &spec {
        BackendSpec::Oracle => {
            if dialogues.iter().all(|d| d.gold_states.is_empty()) {
                log::warn!(
                    "oracle backend: the dialogues carry no gold states, every answer will be none"
                );
            }
            (
                Some(oracle_from_gold(&dialogues, schema.slots(), &prompt)),
                None,
            )
        }
        BackendSpec::Lookup(p) => {
            let o = OracleBackend::read_lookup(p)?;
            log::info!("{}: {} lookup entries", p.display(), o.len());
            (Some(o), None)
        }
        BackendSpec::Remote(url) => {
            let remote = RemoteBackend::new(RemoteConfig {
                batch_size: args.batch_size,
                max_inflight: args.max_inflight,
                timeout: Duration::from_secs(args.timeout_secs),
                ..RemoteConfig::new(url.as_str())
            })
            .map_err(|e| CliError::Config(e.to_string()))?;
            if let Err(e) = remote.health() {
                log::warn!("health check against {url} failed: {e}");
            }
            (None, Some(remote))
        }
    };
    let backend: &dyn Backend = match (&oracle, &remote) {
        (Some(o), _) => o,
        (None, Some(r)) => r,
        (None, None) => unreachable!("every spec builds a backend"),
    };

    let tracker = Tracker::new(&schema, backend)
        .with_prompt_config(prompt)
        .with_canonicalizer(canonicalizer);
    let predictions = tracker.track_corpus(&dialogues, args.workers)?;
    log::info!(
        "tracked {} turns of {} dialogues",
        predictions.len(),
        dialogues.len()
    );

    RunManifest::new("track", &args, None, &inputs)?.write(&manifest_path)?;
    write_predictions(&args.out, &predictions)?;
    if let Some(p) = &args.diagnostics {
        write_atomic_with(p, |w| jsonl::write(w, &predictions))?;
    }
    if let (Some(p), Some(oracle)) = (&args.oracle_lookup_out, &oracle) {
        write_atomic_with(p, |w| oracle.write_lookup(w))?;
    }
    Ok(())
}

fn write_predictions(path: &Path, predictions: &[TurnPrediction]) -> Result<(), CliError> {
    write_atomic_with(path, |w| {
        jsonl::write(w, predictions.iter().map(TurnPrediction::record))
    })?;
    log::info!("predictions: {}", path.display());
    Ok(())
}
