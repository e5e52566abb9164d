//! Propensity-score matching for observational cohorts.
//!
//! The pipeline: ingest a cohort from CSV ([`cohort`]), fit a logistic
//! propensity model by IRLS ([`logit`]), pair treated and control units by
//! 1:1 greedy nearest-neighbor matching under a caliper ([`matcher`]),
//! check covariate balance via standardized mean differences ([`balance`]),
//! and estimate effects (odds ratio, ATE/ATT/ATC) with bootstrap inference
//! ([`effects`]). [`synth`] generates cohorts with known ground truth for
//! validating the estimators, and [`report`] drives the whole pipeline from
//! a run configuration.

pub mod balance;
pub mod cohort;
pub mod config;
pub mod effects;
pub mod fixture;
pub mod logit;
pub mod matcher;
pub mod report;
pub mod synth;
