//! End-to-end pipeline: ingest, fit, match, balance, estimate, and emit
//! machine-readable reports and plot-data files.

use crate::balance::{self, BalanceReport, PsHistograms};
use crate::cohort::{self, Cohort, DescriptiveSummary, Schema, VarRole};
use crate::config::{AteMethod, EmitKind, OrderSetting, RunConfig};
use crate::effects::{self, BootstrapConfig, EffectEstimate};
use crate::logit::{self, DesignMatrix};
use crate::matcher::{self, Caliper, MatchDirection, MatchOrder, MatchedSample};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    /// Configuration or input-data problems; exit code 2.
    #[error("validation failed: {0}")]
    Validation(String),
    /// Failures while estimating effects; exit code 3.
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Estimation(_) => 3,
            RunError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropensityDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub separation_warning: bool,
    pub log_likelihood: f64,
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub score_sd: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchSummary {
    pub pair_count: usize,
    pub unmatched_treated: usize,
    pub unmatched_control: usize,
    pub reverse_pair_count: usize,
    pub caliper_multiplier: f64,
    pub caliper_width: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EffectsBlock {
    pub odds_ratio: EffectEstimate,
    pub att: EffectEstimate,
    pub atc: EffectEstimate,
    pub ate: EffectEstimate,
    pub ate_method: AteMethod,
    /// Standard errors and intervals are a percentile-bootstrap
    /// reconstruction; flagged here because reports should say so.
    pub inference: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config: RunConfig,
    pub version: String,
    pub unix_timestamp: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub descriptive: DescriptiveSummary,
    pub propensity: PropensityDiagnostics,
    pub match_summary: MatchSummary,
    pub balance: Option<BalanceReport>,
    pub histograms: PsHistograms,
    /// None when no pairs were matched (e.g. a zero caliper).
    pub effects: Option<EffectsBlock>,
    /// SHA-256 over the JSON of every field above; provenance (which holds
    /// the timestamp) is excluded so reruns hash identically.
    pub determinism_hash: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub code: String,
    pub message: String,
}

fn load_schema(config: &RunConfig) -> Result<Schema, RunError> {
    let mut schema = match &config.schema_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| RunError::Validation(format!("schema {}: {e}", path.display())))?;
            Schema::from_json(&text).map_err(|e| RunError::Validation(e.to_string()))?
        }
        None => cohort::glioma_schema(),
    };
    // Optional role overrides from the CLI.
    if config.treatment_column.is_some() || config.outcome_column.is_some() {
        let mut specs = schema.specs().to_vec();
        if let Some(t) = &config.treatment_column {
            if !specs.iter().any(|s| &s.name == t) {
                return Err(RunError::Validation(format!("treatment column '{t}' not in schema")));
            }
            for s in &mut specs {
                if s.role == VarRole::Treatment {
                    s.role = VarRole::Covariate;
                }
            }
            for s in &mut specs {
                if &s.name == t {
                    s.role = VarRole::Treatment;
                }
            }
        }
        if let Some(o) = &config.outcome_column {
            if !specs.iter().any(|s| &s.name == o) {
                return Err(RunError::Validation(format!("outcome column '{o}' not in schema")));
            }
            for s in &mut specs {
                if s.role == VarRole::Outcome {
                    s.role = VarRole::Covariate;
                }
            }
            for s in &mut specs {
                if &s.name == o {
                    s.role = VarRole::Outcome;
                }
            }
        }
        schema = Schema::new(specs).map_err(|e| RunError::Validation(e.to_string()))?;
    }
    Ok(schema)
}

fn load_input(config: &RunConfig) -> Result<Cohort, RunError> {
    config
        .require_input()
        .map_err(|e| RunError::Validation(e.to_string()))?;
    let schema = load_schema(config)?;
    let file = fs::File::open(&config.input_path)
        .map_err(|e| RunError::Validation(format!("{}: {e}", config.input_path.display())))?;
    cohort::load_cohort(file, schema).map_err(|e| RunError::Validation(e.to_string()))
}

fn match_order(config: &RunConfig) -> Result<MatchOrder, RunError> {
    Ok(match config.match_order {
        OrderSetting::Random => MatchOrder::Random(config.seed.ok_or_else(|| {
            RunError::Validation("a seed is required when match order is random".into())
        })?),
        OrderSetting::Descending => MatchOrder::DescendingPs,
    })
}

/// Execute the pipeline. On success the report is returned and the
/// requested artifacts are written atomically under the output directory.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    let order = match_order(config)?;
    let cohort = load_input(config)?;
    let schema = cohort.schema().clone();
    let outcome_name = schema.specs()[schema.outcome_index()].name.clone();
    let (treated, control) = cohort.arms();
    let descriptive = cohort::describe(&cohort, &outcome_name)
        .map_err(|e| RunError::Validation(e.to_string()))?;

    let design = DesignMatrix::from_cohort(
        &cohort,
        schema.treatment_index(),
        &schema.covariate_indices(),
    )
    .map_err(|e| RunError::Validation(e.to_string()))?;
    let fit = logit::fit(&design, 1e-8, 25).map_err(|e| RunError::Estimation(e.to_string()))?;
    let ps = matcher::score(&cohort, &fit).map_err(|e| RunError::Estimation(e.to_string()))?;
    let caliper = Caliper::from_scores(config.caliper_multiplier, &ps, config.caliper_scale);

    let forward = matcher::match_pairs(&ps, &caliper, order, MatchDirection::TreatedToControl)
        .map_err(|e| RunError::Estimation(e.to_string()))?;
    let reverse = matcher::match_pairs(&ps, &caliper, order, MatchDirection::ControlToTreated)
        .map_err(|e| RunError::Estimation(e.to_string()))?;

    let histograms = balance::ps_histograms(&ps, &forward, config.histogram_bins);
    let (balance_report, effects_block) = if forward.pairs.is_empty() {
        (None, None)
    } else {
        let matched = matcher::matched_cohort(&cohort, &forward)
            .map_err(|e| RunError::Estimation(e.to_string()))?;
        let report = balance::balance_report(&cohort, &matched, config.balance_threshold)
            .map_err(|e| RunError::Estimation(e.to_string()))?;
        let effects = if reverse.pairs.is_empty() {
            None
        } else {
            Some(estimate_effects(
                config,
                &cohort,
                &matched,
                &forward,
                &reverse,
                treated.len(),
                control.len(),
            )?)
        };
        (Some(report), effects)
    };

    let mut report = RunReport {
        n: cohort.n(),
        n_treated: treated.len(),
        n_control: control.len(),
        descriptive,
        propensity: PropensityDiagnostics {
            converged: fit.converged,
            iterations: fit.iterations,
            separation_warning: fit.separation_warning,
            log_likelihood: fit.log_likelihood,
            coefficients: fit.coefficients.clone(),
            standard_errors: fit.standard_errors.clone(),
            score_sd: ps.sd,
        },
        match_summary: MatchSummary {
            pair_count: forward.pairs.len(),
            unmatched_treated: forward.unmatched_treated,
            unmatched_control: forward.unmatched_control,
            reverse_pair_count: reverse.pairs.len(),
            caliper_multiplier: config.caliper_multiplier,
            caliper_width: caliper.absolute_width,
        },
        balance: balance_report,
        histograms,
        effects: effects_block,
        determinism_hash: String::new(),
        provenance: Provenance {
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
    };
    report.determinism_hash = determinism_hash(&report);

    emit_artifacts(config, &report, &forward)?;
    Ok(report)
}

fn estimate_effects(
    config: &RunConfig,
    cohort: &Cohort,
    matched: &Cohort,
    forward: &MatchedSample,
    reverse: &MatchedSample,
    n_treated: usize,
    n_control: usize,
) -> Result<EffectsBlock, RunError> {
    let outcomes = cohort.column(cohort.schema().outcome_index());
    let seed = config.seed.unwrap_or(0);
    let boot_att = BootstrapConfig::new(config.bootstrap_replicates, seed ^ 0xa77);
    let boot_atc = BootstrapConfig::new(config.bootstrap_replicates, seed ^ 0xa7c);
    let or = effects::odds_ratio(matched).map_err(|e| RunError::Estimation(e.to_string()))?;
    let (att_est, att_reps) = effects::att(forward, &outcomes, &boot_att)
        .map_err(|e| RunError::Estimation(e.to_string()))?;
    let (atc_est, atc_reps) = effects::atc(reverse, &outcomes, &boot_atc)
        .map_err(|e| RunError::Estimation(e.to_string()))?;
    let mut ate_est = effects::ate(&att_est, &atc_est, n_treated, n_control, &att_reps, &atc_reps)
        .map_err(|e| RunError::Estimation(e.to_string()))?;
    if config.ate_method == AteMethod::DifferenceInMeans {
        ate_est.point = effects::ate_difference_in_means(matched);
    }
    Ok(EffectsBlock {
        odds_ratio: or,
        att: att_est,
        atc: atc_est,
        ate: ate_est,
        ate_method: config.ate_method,
        inference: "percentile bootstrap over matched pairs (reconstruction; Wald for OR)",
    })
}

/// Hash of the report body with provenance stripped.
fn determinism_hash(report: &RunReport) -> String {
    #[derive(Serialize)]
    struct Body<'a> {
        n: usize,
        n_treated: usize,
        n_control: usize,
        descriptive: &'a DescriptiveSummary,
        propensity: &'a PropensityDiagnostics,
        match_summary: &'a MatchSummary,
        balance: &'a Option<BalanceReport>,
        histograms: &'a PsHistograms,
        effects: &'a Option<EffectsBlock>,
    }
    let body = Body {
        n: report.n,
        n_treated: report.n_treated,
        n_control: report.n_control,
        descriptive: &report.descriptive,
        propensity: &report.propensity,
        match_summary: &report.match_summary,
        balance: &report.balance,
        histograms: &report.histograms,
        effects: &report.effects,
    };
    let json = serde_json::to_vec(&body).expect("report body serializes");
    let mut hasher = Sha256::new();
    hasher.update(&json);
    format!("{:x}", hasher.finalize())
}

/// Write a file atomically: temp file in the target directory, then rename.
fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<(), RunError> {
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.persist(dir.join(name)).map_err(|e| RunError::Io(e.error))?;
    Ok(())
}

fn emit_artifacts(
    config: &RunConfig,
    report: &RunReport,
    forward: &MatchedSample,
) -> Result<(), RunError> {
    let dir = &config.output_directory;
    for kind in &config.emit {
        match kind {
            EmitKind::ReportJson => {
                let json = serde_json::to_string_pretty(report).expect("report serializes");
                write_atomic(dir, kind.file_name(), json.as_bytes())?;
            }
            EmitKind::BalanceCsv => {
                if let Some(b) = &report.balance {
                    write_atomic(dir, kind.file_name(), b.to_csv().as_bytes())?;
                }
            }
            EmitKind::PairsCsv => {
                write_atomic(dir, kind.file_name(), forward.to_csv().as_bytes())?;
            }
            EmitKind::HistogramsCsv => {
                write_atomic(dir, kind.file_name(), report.histograms.to_csv().as_bytes())?;
            }
            EmitKind::LoveplotCsv => {
                if let Some(b) = &report.balance {
                    write_atomic(dir, kind.file_name(), b.love_plot_csv().as_bytes())?;
                }
            }
            EmitKind::LoveplotSvg => {
                if let Some(b) = &report.balance {
                    write_atomic(dir, kind.file_name(), b.love_plot_svg().as_bytes())?;
                }
            }
        }
    }
    Ok(())
}

/// Dry-run checks without any estimation. Findings are data, not errors.
pub fn validate(config: &RunConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut push = |code: &str, message: String| {
        findings.push(Finding {
            code: code.to_string(),
            message,
        })
    };
    if config.match_order == OrderSetting::Random && config.seed.is_none() {
        push("MissingSeed", "match order is random but no seed was given".into());
    }
    if config.require_input().is_err() {
        push("MissingInput", "no input path configured".into());
        return findings;
    }
    let schema = match load_schema(config) {
        Ok(s) => s,
        Err(e) => {
            push("BadSchema", e.to_string());
            return findings;
        }
    };
    let file = match fs::File::open(&config.input_path) {
        Ok(f) => f,
        Err(e) => {
            push("UnreadableInput", format!("{}: {e}", config.input_path.display()));
            return findings;
        }
    };
    match cohort::load_cohort(file, schema) {
        Ok(c) => {
            let (treated, control) = c.arms();
            if treated.is_empty() || control.is_empty() {
                push("SingleArm", "cohort has a single treatment level".into());
            }
        }
        Err(cohort::CohortError::MissingColumn(name)) => {
            push("MissingColumn", format!("schema references absent column '{name}'"));
        }
        Err(cohort::CohortError::SingleArm) => {
            push("SingleArm", "cohort has a single treatment level".into());
        }
        Err(e) => push("BadData", e.to_string()),
    }
    findings
}

/// Human-readable effect table rendered from the JSON report block.
pub fn effects_table(block: &EffectsBlock) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<6} {:>10} {:>16} {:>24} {:>10}\n",
        "", "Estimate", "Standard Error", "95% Confidence Interval", "p-value"
    ));
    let p_fmt = |p: f64| {
        if p < 0.05 {
            "< 0.05".to_string()
        } else {
            format!("{p:.3}")
        }
    };
    for (name, e) in [
        ("OR", &block.odds_ratio),
        ("ATE", &block.ate),
        ("ATC", &block.atc),
        ("ATT", &block.att),
    ] {
        out.push_str(&format!(
            "{:<6} {:>10.3} {:>16.3} {:>14.3}  {:>8.3} {:>10}\n",
            name, e.point, e.standard_error, e.ci_low, e.ci_high, p_fmt(e.p_value)
        ));
    }
    out
}
