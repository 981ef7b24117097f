use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use qadst::backend::{NoiseConfig, NoisyBackend};
use qadst::eval::{self, EvalOptions};
use qadst::prompt::PromptConfig;
use qadst::rng::derive_seed;
use qadst::tracker::Tracker;
use serde::Serialize;

use crate::error::CliError;
use crate::inputs::{CanonicalArgs, DialogueArgs, SchemaArgs};
use crate::run::{
    default_manifest_path, require_inputs, require_output_dirs, write_atomic, RunManifest,
};

/// Scores the tracker against a synthetic answerer whose gate errors depend on
/// the unanswerable-question rate: false positives at `gate_noise * (1 - alpha)`,
/// misses at `gate_noise * alpha`.
#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Gold dialogues
    #[arg(long, value_name = "PATH")]
    pub dialogues: PathBuf,
    #[command(flatten)]
    pub dialogue: DialogueArgs,
    /// Rates to evaluate, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    pub alphas: Vec<f64>,
    /// Scale of the simulated gate errors
    #[arg(long, default_value_t = 0.2)]
    pub gate_noise: f64,
    /// Chance that a correctly gated slot gets a wrong value
    #[arg(long, default_value_t = 0.0)]
    pub value_noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub canonical: CanonicalArgs,
    /// Tracking threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// CSV with columns alpha,jga,aga,sga
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Run manifest; defaults to <out>.manifest.json
    #[arg(long, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
}

fn check_rate(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must be within [0, 1], got {v}"
        )))
    }
}

pub fn run(args: SweepArgs) -> Result<(), CliError> {
    let mut inputs: Vec<&Path> = vec![&args.schema.schema, &args.dialogues];
    inputs.extend(args.canonical.aliases.as_deref());
    require_inputs(&inputs)?;
    let manifest_path = args
        .manifest
        .clone()
        .unwrap_or_else(|| default_manifest_path(&args.out));
    require_output_dirs(&[&args.out, &manifest_path])?;
    if args.alphas.is_empty() {
        return Err(CliError::Config("--alphas is empty".into()));
    }
    for &a in &args.alphas {
        check_rate("--alphas", a)?;
    }
    check_rate("--gate-noise", args.gate_noise)?;
    check_rate("--value-noise", args.value_noise)?;

    let schema = args.schema.load()?;
    let canonicalizer = args.canonical.load()?;
    let golds = args.dialogue.load(&args.dialogues, &schema)?;
    let prompt = PromptConfig::default();
    let noise_seed = derive_seed(args.seed, "sweep-alpha/noise");

    let mut csv = String::from("alpha,jga,aga,sga\n");
    for &alpha in &args.alphas {
        let noise = NoiseConfig {
            value_error_rate: args.value_noise,
            ..NoiseConfig::for_alpha(alpha, args.gate_noise, noise_seed)
        };
        let backend = NoisyBackend::from_gold(&golds, schema.slots(), &prompt, noise);
        let predictions = Tracker::new(&schema, &backend)
            .with_canonicalizer(canonicalizer.clone())
            .track_corpus(&golds, args.workers)?;
        let r = eval::evaluate(&predictions, &golds, &schema, &EvalOptions::default())?;
        let aga = r.aga.map_or(String::new(), |a| format!("{a:.6}"));
        log::info!("alpha {alpha}: jga {:.4} sga {:.4}", r.jga, r.sga);
        writeln!(csv, "{alpha},{:.6},{aga},{:.6}", r.jga, r.sga).expect("writing to a String");
    }

    RunManifest::new("sweep-alpha", &args, Some(args.seed), &inputs)?.write(&manifest_path)?;
    write_atomic(&args.out, csv.as_bytes())?;
    Ok(())
}
