//! Command-line front end for the matching pipeline.

use clap::Parser;
use psmatch::config::{EmitKind, OrderSetting, RunConfig};
use psmatch::matcher::CaliperScale;
use psmatch::report;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "psmatch", version, about = "Propensity-score matching pipeline")]
struct Cli {
    /// Config file in flat `key = value` format; flags override it
    #[arg(long)]
    config: Option<PathBuf>,

    /// Input cohort CSV
    #[arg(long)]
    input: Option<PathBuf>,

    /// Covariate schema JSON (defaults to the built-in glioma schema)
    #[arg(long)]
    schema: Option<PathBuf>,

    /// Column to treat as the exposure
    #[arg(long)]
    treatment: Option<String>,

    /// Column to treat as the outcome
    #[arg(long)]
    outcome: Option<String>,

    /// Caliper as a multiple of the propensity-score SD
    #[arg(long)]
    caliper: Option<f64>,

    /// Caliper scale: probability or logit
    #[arg(long)]
    caliper_scale: Option<String>,

    /// Processing order of the source group: random or descending
    #[arg(long)]
    order: Option<String>,

    /// RNG seed; required when --order random
    #[arg(long)]
    seed: Option<u64>,

    /// Bootstrap replicates for effect intervals
    #[arg(long)]
    replicates: Option<usize>,

    /// Absolute SMD threshold for calling a covariate balanced
    #[arg(long)]
    threshold: Option<f64>,

    /// Output directory (or set PSMATCH_OUT)
    #[arg(long)]
    out: Option<PathBuf>,

    /// Comma-separated artifact list:
    /// report_json,balance_csv,pairs_csv,histograms_csv,loveplot_csv,loveplot_svg
    #[arg(long)]
    emit: Option<String>,

    /// Check inputs and configuration, print findings, and exit
    #[arg(long)]
    validate_only: bool,
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("config {}: {e}", path.display()))?;
            RunConfig::from_file_text(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    if cli.config.is_none() {
        if let Ok(dir) = std::env::var("PSMATCH_OUT") {
            cfg.output_directory = PathBuf::from(dir);
        }
    }
    if let Some(v) = &cli.input {
        cfg.input_path = v.clone();
    }
    if let Some(v) = &cli.schema {
        cfg.schema_path = Some(v.clone());
    }
    if let Some(v) = &cli.treatment {
        cfg.treatment_column = Some(v.clone());
    }
    if let Some(v) = &cli.outcome {
        cfg.outcome_column = Some(v.clone());
    }
    if let Some(v) = cli.caliper {
        if v < 0.0 || !v.is_finite() {
            return Err("caliper multiplier must be nonnegative".into());
        }
        cfg.caliper_multiplier = v;
    }
    if let Some(v) = &cli.caliper_scale {
        cfg.caliper_scale = match v.as_str() {
            "probability" => CaliperScale::Probability,
            "logit" => CaliperScale::Logit,
            other => return Err(format!("--caliper-scale: expected probability|logit, got '{other}'")),
        };
    }
    if let Some(v) = &cli.order {
        cfg.match_order = match v.as_str() {
            "random" => OrderSetting::Random,
            "descending" => OrderSetting::Descending,
            other => return Err(format!("--order: expected random|descending, got '{other}'")),
        };
    }
    if let Some(v) = cli.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = cli.replicates {
        if v < 100 {
            return Err("need at least 100 bootstrap replicates".into());
        }
        cfg.bootstrap_replicates = v;
    }
    if let Some(v) = cli.threshold {
        cfg.balance_threshold = v;
    }
    if let Some(v) = &cli.out {
        cfg.output_directory = v.clone();
    }
    if let Some(list) = &cli.emit {
        let mut kinds = Vec::new();
        for part in list.split(',') {
            let kind = EmitKind::parse(part)
                .ok_or_else(|| format!("--emit: unknown artifact '{}'", part.trim()))?;
            if !kinds.contains(&kind) {
                kinds.push(kind);
            }
        }
        cfg.emit = kinds;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    if cli.validate_only {
        let findings = report::validate(&cfg);
        if findings.is_empty() {
            println!("ok: configuration and input pass validation");
            return ExitCode::SUCCESS;
        }
        for f in &findings {
            println!("{}: {}", f.code, f.message);
        }
        return ExitCode::from(2);
    }

    match report::run(&cfg) {
        Ok(rep) => {
            println!(
                "n = {} ({} treated, {} control)",
                rep.n, rep.n_treated, rep.n_control
            );
            println!(
                "matched pairs: {} (caliper width {:.6}, {} treated unmatched)",
                rep.match_summary.pair_count,
                rep.match_summary.caliper_width,
                rep.match_summary.unmatched_treated
            );
            if let Some(balance) = &rep.balance {
                println!(
                    "post-match max |SMD| = {:.3} ({})",
                    balance.max_after_smd,
                    if balance.balanced { "balanced" } else { "imbalanced" }
                );
            }
            match &rep.effects {
                Some(block) => print!("{}", report::effects_table(block)),
                None => println!("effects: not computed (no matched pairs)"),
            }
            println!("report written to {}", cfg.output_directory.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
