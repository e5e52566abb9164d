//! Synthetic observational cohorts with known ground-truth effects and
//! controllable confounding, for validating the matching pipeline.

use crate::cohort::{Cohort, CovariateSpec, Schema, VarRole};
use crate::effects::{self, BootstrapConfig};
use crate::logit::{sigmoid, DesignMatrix};
use crate::matcher::{self, Caliper, CaliperScale, MatchDirection, MatchOrder};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("pipeline failure: {0}")]
    Pipeline(String),
}

/// Marginal distribution of one generated covariate.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum CovariateDist {
    Binary { prevalence: f64 },
    Continuous { mean: f64, sd: f64 },
}

/// Scale on which `true_effect` acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EffectScale {
    /// Added to the outcome model's linear predictor for treated units.
    LogOdds,
    /// Added to the outcome probability for treated units (clamped to [0,1]).
    RiskDifference,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub covariates: Vec<CovariateDist>,
    /// Intercept of the treatment-assignment model.
    pub treatment_intercept: f64,
    /// Per-covariate log-odds contribution to treatment assignment.
    pub confounding_coefficients: Vec<f64>,
    /// Intercept of the outcome model.
    pub outcome_intercept: f64,
    /// Per-covariate log-odds contribution to the outcome.
    pub outcome_coefficients: Vec<f64>,
    pub true_effect: f64,
    pub effect_scale: EffectScale,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n < 20 {
            return Err(SynthError::InvalidConfig("n must be at least 20".into()));
        }
        if self.confounding_coefficients.len() != self.covariates.len()
            || self.outcome_coefficients.len() != self.covariates.len()
        {
            return Err(SynthError::InvalidConfig(
                "coefficient vectors must match the covariate list".into(),
            ));
        }
        for c in &self.covariates {
            if let CovariateDist::Binary { prevalence } = c {
                if !(*prevalence > 0.0 && *prevalence < 1.0) {
                    return Err(SynthError::InvalidConfig(format!(
                        "prevalence {prevalence} outside (0,1)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// A cohort shaped like the glioma table: twelve binary markers at their
    /// observed prevalences plus one age-like covariate, with adjustable
    /// confounding into treatment and outcome.
    pub fn glioma_like(n: usize, confounding_strength: f64, true_effect: f64, seed: u64) -> Self {
        let prevalences = [
            0.4815, 0.2586, 0.1681, 0.1335, 0.1323, 0.0346, 0.1168, 0.0644, 0.0262, 0.0322,
            0.0274, 0.0274,
        ];
        let mut covariates: Vec<CovariateDist> = prevalences
            .iter()
            .map(|&p| CovariateDist::Binary { prevalence: p })
            .collect();
        covariates.push(CovariateDist::Continuous { mean: 50.94, sd: 15.70 });
        let k = covariates.len();
        let mut confounding = vec![0.0; k];
        let mut outcome = vec![0.0; k];
        // Confounding through a handful of markers and (weakly) age.
        for i in [0, 1, 4, 7] {
            confounding[i] = confounding_strength;
            outcome[i] = confounding_strength;
        }
        confounding[k - 1] = confounding_strength * 0.005;
        outcome[k - 1] = confounding_strength * 0.01;
        GeneratorConfig {
            n,
            covariates,
            treatment_intercept: -0.3,
            confounding_coefficients: confounding,
            outcome_intercept: -0.8,
            outcome_coefficients: outcome,
            true_effect,
            effect_scale: EffectScale::LogOdds,
            seed,
        }
    }
}

fn generated_schema(config: &GeneratorConfig) -> Schema {
    let mut specs = Vec::new();
    for (i, c) in config.covariates.iter().enumerate() {
        specs.push(match c {
            CovariateDist::Binary { .. } => {
                CovariateSpec::binary(&format!("x{}", i + 1), VarRole::Covariate)
            }
            CovariateDist::Continuous { .. } => {
                CovariateSpec::continuous(&format!("x{}", i + 1), VarRole::Covariate, None)
            }
        });
    }
    specs.push(CovariateSpec::binary("treatment", VarRole::Treatment));
    specs.push(CovariateSpec::binary("outcome", VarRole::Outcome));
    Schema::new(specs).expect("generated schema is valid")
}

/// Draw a cohort. Returns the cohort and the ground-truth marginal risk
/// difference, computed by averaging the two potential-outcome
/// probabilities over the generated covariate sample.
pub fn generate(config: &GeneratorConfig) -> Result<(Cohort, f64), SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = config.covariates.len();
    let mut records = Vec::with_capacity(config.n);
    let mut truth_sum = 0.0;
    for _ in 0..config.n {
        let mut x = Vec::with_capacity(k);
        for c in &config.covariates {
            x.push(match *c {
                CovariateDist::Binary { prevalence } => {
                    if rng.gen::<f64>() < prevalence { 1.0 } else { 0.0 }
                }
                CovariateDist::Continuous { mean, sd } => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    mean + sd * z
                }
            });
        }
        let t_eta = config.treatment_intercept
            + x.iter()
                .zip(&config.confounding_coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let t = if rng.gen::<f64>() < sigmoid(t_eta) { 1.0 } else { 0.0 };
        let y_eta = config.outcome_intercept
            + x.iter()
                .zip(&config.outcome_coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>();
        let (p0, p1) = match config.effect_scale {
            EffectScale::LogOdds => (sigmoid(y_eta), sigmoid(y_eta + config.true_effect)),
            EffectScale::RiskDifference => {
                let p0 = sigmoid(y_eta);
                (p0, (p0 + config.true_effect).clamp(0.0, 1.0))
            }
        };
        truth_sum += p1 - p0;
        let p = if t == 1.0 { p1 } else { p0 };
        let y = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        let mut rec = x;
        rec.push(t);
        rec.push(y);
        records.push(rec);
    }
    let truth = truth_sum / config.n as f64;
    let cohort = Cohort::new(generated_schema(config), records)
        .map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    Ok((cohort, truth))
}

/// One full PSM pass on a generated cohort: propensity fit on the covariate
/// columns, treated-to-control matching at the given caliper, ATT as the
/// mean within-pair outcome difference.
pub fn psm_att(
    cohort: &Cohort,
    caliper_multiplier: f64,
    seed: u64,
    bootstrap: &BootstrapConfig,
) -> Result<effects::EffectEstimate, SynthError> {
    let schema = cohort.schema();
    let design = DesignMatrix::from_cohort(cohort, schema.treatment_index(), &schema.covariate_indices())
        .map_err(|e| SynthError::Pipeline(e.to_string()))?;
    let fit = crate::logit::fit(&design, 1e-8, 25).map_err(|e| SynthError::Pipeline(e.to_string()))?;
    let ps = matcher::score(cohort, &fit).map_err(|e| SynthError::Pipeline(e.to_string()))?;
    let caliper = Caliper::from_scores(caliper_multiplier, &ps, CaliperScale::Probability);
    let sample = matcher::match_pairs(
        &ps,
        &caliper,
        MatchOrder::Random(seed),
        MatchDirection::TreatedToControl,
    )
    .map_err(|e| SynthError::Pipeline(e.to_string()))?;
    let outcomes = cohort.column(schema.outcome_index());
    let (est, _) = effects::att(&sample, &outcomes, bootstrap)
        .map_err(|e| SynthError::Pipeline(e.to_string()))?;
    Ok(est)
}

/// Unadjusted difference in mean outcomes between arms.
pub fn naive_estimate(cohort: &Cohort) -> f64 {
    let y_idx = cohort.schema().outcome_index();
    let (treated, control) = cohort.arms();
    let mt = treated.iter().map(|&i| cohort.records()[i][y_idx]).sum::<f64>() / treated.len() as f64;
    let mc = control.iter().map(|&i| cohort.records()[i][y_idx]).sum::<f64>() / control.len() as f64;
    mt - mc
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasStudy {
    pub seeds: usize,
    pub naive_mean_abs_bias: f64,
    pub psm_mean_abs_bias: f64,
    /// 1 - psm/naive; positive when matching reduces bias.
    pub bias_reduction_fraction: f64,
    /// Fraction of seeds whose PSM 95% CI covers the truth... of zero when
    /// the configured effect is zero.
    pub ci_covers_truth_fraction: f64,
}

/// Replicated comparison of the naive and PSM estimators against the
/// generator truth.
pub fn bias_study(
    config: &GeneratorConfig,
    seeds: usize,
    bootstrap_replicates: usize,
) -> Result<BiasStudy, SynthError> {
    if seeds < 10 {
        return Err(SynthError::InvalidConfig("need at least 10 seeds".into()));
    }
    let results: Vec<Result<(f64, f64, bool), SynthError>> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| {
            let cfg = GeneratorConfig {
                seed: config.seed.wrapping_add(s.wrapping_mul(0x9e3779b9)),
                ..config.clone()
            };
            let (cohort, truth) = generate(&cfg)?;
            let naive = naive_estimate(&cohort);
            let boot = BootstrapConfig::new(bootstrap_replicates.max(100), cfg.seed ^ 0xb007);
            let est = psm_att(&cohort, 0.25, cfg.seed ^ 0x5eed, &boot)?;
            let covers = est.ci_low <= truth && truth <= est.ci_high;
            Ok((naive - truth, est.point - truth, covers))
        })
        .collect();
    let mut naive_abs = 0.0;
    let mut psm_abs = 0.0;
    let mut covered = 0usize;
    let mut count = 0usize;
    for r in results {
        let (nb, pb, cov) = r?;
        naive_abs += nb.abs();
        psm_abs += pb.abs();
        if cov {
            covered += 1;
        }
        count += 1;
    }
    let naive_mean_abs_bias = naive_abs / count as f64;
    let psm_mean_abs_bias = psm_abs / count as f64;
    Ok(BiasStudy {
        seeds: count,
        naive_mean_abs_bias,
        psm_mean_abs_bias,
        bias_reduction_fraction: 1.0 - psm_mean_abs_bias / naive_mean_abs_bias,
        ci_covers_truth_fraction: covered as f64 / count as f64,
    })
}
