//! Covariate balance diagnostics: standardized mean differences before and
//! after matching, propensity-score histograms, and love-plot exports.

use crate::cohort::{sample_mean, Cohort, VarKind};
use crate::matcher::{MatchedSample, PropensityScores};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("one of the groups is empty")]
    EmptyGroup,
    #[error("pooled variance is zero but group means differ")]
    ZeroVarianceUnequalMeans,
    #[error("before/after cohorts have different schemas")]
    SchemaMismatch,
}

/// How group variances are pooled in the SMD denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariancePooling {
    /// Classical pooled variance with (n-1) weights:
    /// ((n_t-1) v_t + (n_c-1) v_c) / (n_t + n_c - 2).
    /// This is the convention that reproduces the published balance table.
    Weighted,
    /// Unweighted average (v_t + v_c) / 2.
    Average,
}

fn group_variance(values: &[f64], kind: VarKind) -> f64 {
    match kind {
        VarKind::Binary => {
            let p = sample_mean(values);
            p * (1.0 - p)
        }
        VarKind::Continuous => {
            let sd = crate::cohort::sample_sd(values);
            sd * sd
        }
    }
}

/// Signed standardized mean difference between two groups.
pub fn smd_with(
    treated: &[f64],
    control: &[f64],
    kind: VarKind,
    pooling: VariancePooling,
) -> Result<f64, BalanceError> {
    if treated.is_empty() || control.is_empty() {
        return Err(BalanceError::EmptyGroup);
    }
    let mt = sample_mean(treated);
    let mc = sample_mean(control);
    let vt = group_variance(treated, kind);
    let vc = group_variance(control, kind);
    let pooled = match pooling {
        VariancePooling::Weighted => {
            let wt = (treated.len() - 1) as f64;
            let wc = (control.len() - 1) as f64;
            if wt + wc == 0.0 {
                (vt + vc) / 2.0
            } else {
                (wt * vt + wc * vc) / (wt + wc)
            }
        }
        VariancePooling::Average => (vt + vc) / 2.0,
    };
    if pooled == 0.0 {
        if mt == mc {
            return Ok(0.0);
        }
        return Err(BalanceError::ZeroVarianceUnequalMeans);
    }
    Ok((mt - mc) / pooled.sqrt())
}

pub fn smd(treated: &[f64], control: &[f64], kind: VarKind) -> Result<f64, BalanceError> {
    smd_with(treated, control, kind, VariancePooling::Weighted)
}

/// Per-group summary shown next to each SMD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSummary {
    Binary { percent: f64 },
    Continuous { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub treated: GroupSummary,
    pub control: GroupSummary,
    /// Signed SMD; reports display the absolute value.
    pub smd_signed: f64,
    pub smd_abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceReport {
    pub before: Vec<BalanceRow>,
    pub after: Vec<BalanceRow>,
    pub threshold: f64,
    pub balanced: bool,
    pub max_after_smd: f64,
}

fn panel(cohort: &Cohort, pooling: VariancePooling) -> Result<Vec<BalanceRow>, BalanceError> {
    let schema = cohort.schema();
    let (treated_idx, control_idx) = cohort.arms();
    let mut rows = Vec::new();
    for &ci in &schema.covariate_indices() {
        let spec = &schema.specs()[ci];
        let tv: Vec<f64> = treated_idx.iter().map(|&i| cohort.records()[i][ci]).collect();
        let cv: Vec<f64> = control_idx.iter().map(|&i| cohort.records()[i][ci]).collect();
        let summarize = |vals: &[f64]| match spec.kind {
            VarKind::Binary => GroupSummary::Binary {
                percent: 100.0 * sample_mean(vals),
            },
            VarKind::Continuous => GroupSummary::Continuous {
                mean: sample_mean(vals),
                sd: crate::cohort::sample_sd(vals),
            },
        };
        let s = smd_with(&tv, &cv, spec.kind, pooling)?;
        rows.push(BalanceRow {
            covariate: spec.name.clone(),
            treated: summarize(&tv),
            control: summarize(&cv),
            smd_signed: s,
            smd_abs: s.abs(),
        });
    }
    Ok(rows)
}

/// One SMD panel per cohort (treatment and outcome columns excluded), plus
/// the balanced flag against the threshold.
pub fn balance_report(
    before: &Cohort,
    after: &Cohort,
    threshold: f64,
) -> Result<BalanceReport, BalanceError> {
    let names_b: Vec<&str> = before.schema().specs().iter().map(|s| s.name.as_str()).collect();
    let names_a: Vec<&str> = after.schema().specs().iter().map(|s| s.name.as_str()).collect();
    if names_b != names_a {
        return Err(BalanceError::SchemaMismatch);
    }
    let before_rows = panel(before, VariancePooling::Weighted)?;
    let after_rows = panel(after, VariancePooling::Weighted)?;
    let max_after_smd = after_rows
        .iter()
        .map(|r| r.smd_abs)
        .fold(0.0_f64, f64::max);
    Ok(BalanceReport {
        balanced: after_rows.iter().all(|r| r.smd_abs <= threshold),
        before: before_rows,
        after: after_rows,
        threshold,
        max_after_smd,
    })
}

impl BalanceReport {
    /// CSV with one row per covariate and both panels side by side.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("covariate,smd_before,smd_after,abs_smd_before,abs_smd_after,threshold\n");
        for (b, a) in self.before.iter().zip(&self.after) {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.3},{:.3},{}\n",
                b.covariate, b.smd_signed, a.smd_signed, b.smd_abs, a.smd_abs, self.threshold
            ));
        }
        out
    }

    /// Love-plot coordinates: covariate, before/after signed SMD, threshold.
    pub fn love_plot_csv(&self) -> String {
        let mut out = String::from("covariate,smd_before,smd_after,threshold\n");
        for (b, a) in self.before.iter().zip(&self.after) {
            out.push_str(&format!(
                "{},{:.6},{:.6},{}\n",
                b.covariate, b.smd_signed, a.smd_signed, self.threshold
            ));
        }
        out
    }

    /// Minimal static love plot: one dot pair per covariate and dotted
    /// threshold lines at +-threshold.
    pub fn love_plot_svg(&self) -> String {
        let w = 640.0;
        let row_h = 24.0;
        let top = 40.0;
        let h = top + row_h * self.before.len() as f64 + 30.0;
        let left = 140.0;
        let plot_w = w - left - 30.0;
        let max_abs = self
            .before
            .iter()
            .chain(&self.after)
            .map(|r| r.smd_signed.abs())
            .fold(self.threshold * 1.5, f64::max);
        let x_of = |v: f64| left + plot_w * (v + max_abs) / (2.0 * max_abs);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{top}\" x2=\"{x}\" y2=\"{b}\" stroke=\"#888\" stroke-width=\"1\"/>\n",
            x = x_of(0.0),
            b = h - 20.0
        ));
        for t in [-self.threshold, self.threshold] {
            svg.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{top}\" x2=\"{x}\" y2=\"{b}\" stroke=\"red\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
                x = x_of(t),
                b = h - 20.0
            ));
        }
        for (i, (b, a)) in self.before.iter().zip(&self.after).enumerate() {
            let y = top + row_h * i as f64 + row_h / 2.0;
            svg.push_str(&format!(
                "<text x=\"8\" y=\"{y}\" font-size=\"12\" dominant-baseline=\"middle\">{}</text>\n",
                b.covariate
            ));
            svg.push_str(&format!(
                "<circle cx=\"{x}\" cy=\"{y}\" r=\"4\" fill=\"#d95f02\"/>\n",
                x = x_of(b.smd_signed)
            ));
            svg.push_str(&format!(
                "<circle cx=\"{x}\" cy=\"{y}\" r=\"4\" fill=\"#1b9e77\"/>\n",
                x = x_of(a.smd_signed)
            ));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Histograms of propensity scores: treated/control x before/after matching,
/// equal-width bins over [0,1].
#[derive(Debug, Clone, Serialize)]
pub struct PsHistograms {
    pub bins: usize,
    pub treated_before: Vec<usize>,
    pub control_before: Vec<usize>,
    pub treated_after: Vec<usize>,
    pub control_after: Vec<usize>,
}

pub fn ps_histograms(ps: &PropensityScores, sample: &MatchedSample, bins: usize) -> PsHistograms {
    assert!(bins >= 2, "need at least 2 bins");
    let bin_of = |s: f64| ((s * bins as f64) as usize).min(bins - 1);
    let hist = |rows: &[usize]| {
        let mut counts = vec![0usize; bins];
        for &r in rows {
            counts[bin_of(ps.scores[r])] += 1;
        }
        counts
    };
    let matched_t: Vec<usize> = sample.pairs.iter().map(|p| p.treated).collect();
    let matched_c: Vec<usize> = sample.pairs.iter().map(|p| p.control).collect();
    PsHistograms {
        bins,
        treated_before: hist(&ps.treated_indices),
        control_before: hist(&ps.control_indices),
        treated_after: hist(&matched_t),
        control_after: hist(&matched_c),
    }
}

impl PsHistograms {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lower,upper,treated_before,control_before,treated_after,control_after\n");
        let width = 1.0 / self.bins as f64;
        for b in 0..self.bins {
            out.push_str(&format!(
                "{},{:.4},{:.4},{},{},{},{}\n",
                b,
                b as f64 * width,
                (b + 1) as f64 * width,
                self.treated_before[b],
                self.control_before[b],
                self.treated_after[b],
                self.control_after[b]
            ));
        }
        out
    }

    /// Total-variation distance between the treated and control score
    /// distributions for one panel; used to check that matching tightens
    /// the overlap.
    pub fn tv_distance(treated: &[usize], control: &[usize]) -> f64 {
        let nt: usize = treated.iter().sum();
        let nc: usize = control.iter().sum();
        if nt == 0 || nc == 0 {
            return 1.0;
        }
        0.5 * treated
            .iter()
            .zip(control)
            .map(|(&t, &c)| (t as f64 / nt as f64 - c as f64 / nc as f64).abs())
            .sum::<f64>()
    }
}
