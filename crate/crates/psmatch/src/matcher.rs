//! Propensity scoring and 1:1 greedy nearest-neighbor matching without
//! replacement under a caliper.

use crate::cohort::{Cohort, CohortError};
use crate::logit::{logit, LogisticFit, LogitError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error(transparent)]
    Logit(#[from] LogitError),
    #[error("one of the groups is empty")]
    EmptyGroup,
    #[error("pair index out of range: {0}")]
    IndexOutOfRange(usize),
    #[error("matched sample is empty")]
    EmptySample,
    #[error(transparent)]
    Cohort(#[from] CohortError),
}

/// Per-record propensity scores with the arm partition of the cohort.
#[derive(Debug, Clone)]
pub struct PropensityScores {
    pub scores: Vec<f64>,
    /// Sample SD (n-1) of all scores.
    pub sd: f64,
    pub treated_indices: Vec<usize>,
    pub control_indices: Vec<usize>,
}

/// Scale on which PS distances and the caliper width are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaliperScale {
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Caliper {
    pub multiplier: f64,
    pub scale: CaliperScale,
    /// multiplier x SD of the scores on the chosen scale.
    pub absolute_width: f64,
}

impl Caliper {
    /// Caliper as a multiple of the SD of the propensity scores.
    pub fn from_scores(multiplier: f64, ps: &PropensityScores, scale: CaliperScale) -> Caliper {
        assert!(multiplier >= 0.0, "caliper multiplier must be nonnegative");
        let sd = match scale {
            CaliperScale::Probability => ps.sd,
            CaliperScale::Logit => {
                let logits: Vec<f64> = ps.scores.iter().map(|&p| logit(p)).collect();
                crate::cohort::sample_sd(&logits)
            }
        };
        Caliper {
            multiplier,
            scale,
            absolute_width: multiplier * sd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOrder {
    /// Random permutation of the source group under the given seed.
    Random(u64),
    /// Source units processed from highest PS to lowest (ties by index).
    DescendingPs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchDirection {
    TreatedToControl,
    ControlToTreated,
}

/// One matched pair, always stored as (treated, control) cohort row indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pair {
    pub treated: usize,
    pub control: usize,
    pub ps_treated: f64,
    pub ps_control: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MatchedSample {
    pub pairs: Vec<Pair>,
    pub unmatched_treated: usize,
    pub unmatched_control: usize,
    pub caliper: Caliper,
    pub direction: MatchDirection,
    pub seed: Option<u64>,
}

/// Apply a fitted propensity model to every record. Predictors are the
/// covariate columns in schema order; treatment and outcome are excluded.
pub fn score(cohort: &Cohort, fit: &LogisticFit) -> Result<PropensityScores, MatchError> {
    let cov = cohort.schema().covariate_indices();
    let mut scores = Vec::with_capacity(cohort.n());
    for rec in cohort.records() {
        let row: Vec<f64> = cov.iter().map(|&j| rec[j]).collect();
        scores.push(fit.predict(&row)?);
    }
    let sd = crate::cohort::sample_sd(&scores);
    let (treated_indices, control_indices) = cohort.arms();
    Ok(PropensityScores {
        scores,
        sd,
        treated_indices,
        control_indices,
    })
}

/// Greedy 1:1 nearest-neighbor matching without replacement. Each source
/// unit, in the requested order, takes the unused candidate with the
/// smallest PS distance if that distance is within the caliper; ties go to
/// the lowest candidate row index. Deterministic given identical inputs.
pub fn match_pairs(
    ps: &PropensityScores,
    caliper: &Caliper,
    order: MatchOrder,
    direction: MatchDirection,
) -> Result<MatchedSample, MatchError> {
    if ps.treated_indices.is_empty() || ps.control_indices.is_empty() {
        return Err(MatchError::EmptyGroup);
    }
    let (source, candidates) = match direction {
        MatchDirection::TreatedToControl => (&ps.treated_indices, &ps.control_indices),
        MatchDirection::ControlToTreated => (&ps.control_indices, &ps.treated_indices),
    };
    let dist_of = |row: usize| -> f64 {
        match caliper.scale {
            CaliperScale::Probability => ps.scores[row],
            CaliperScale::Logit => logit(ps.scores[row]),
        }
    };

    let mut ordered: Vec<usize> = source.clone();
    let seed = match order {
        MatchOrder::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ordered.shuffle(&mut rng);
            Some(seed)
        }
        MatchOrder::DescendingPs => {
            ordered.sort_by(|&a, &b| {
                ps.scores[b]
                    .partial_cmp(&ps.scores[a])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            None
        }
    };

    let mut used = vec![false; candidates.len()];
    let mut pairs = Vec::new();
    for &src in &ordered {
        let s = dist_of(src);
        let mut best: Option<(usize, f64)> = None;
        for (slot, &cand) in candidates.iter().enumerate() {
            if used[slot] {
                continue;
            }
            let d = (s - dist_of(cand)).abs();
            let better = match best {
                None => true,
                // Strict inequality keeps the lowest-index candidate on ties.
                Some((_, bd)) => d < bd,
            };
            if better {
                best = Some((slot, d));
            }
        }
        if let Some((slot, d)) = best {
            if d <= caliper.absolute_width {
                used[slot] = true;
                let cand = candidates[slot];
                let (treated, control) = match direction {
                    MatchDirection::TreatedToControl => (src, cand),
                    MatchDirection::ControlToTreated => (cand, src),
                };
                pairs.push(Pair {
                    treated,
                    control,
                    ps_treated: ps.scores[treated],
                    ps_control: ps.scores[control],
                    distance: d,
                });
            }
        }
    }
    Ok(MatchedSample {
        unmatched_treated: ps.treated_indices.len()
            - pairs.len(),
        unmatched_control: ps.control_indices.len() - pairs.len(),
        pairs,
        caliper: *caliper,
        direction,
        seed,
    })
}

/// Materialize the matched cohort: the paired records only, in pair order
/// (treated row then control row), so pair adjacency is preserved.
pub fn matched_cohort(cohort: &Cohort, sample: &MatchedSample) -> Result<Cohort, MatchError> {
    if sample.pairs.is_empty() {
        return Err(MatchError::EmptySample);
    }
    let mut records = Vec::with_capacity(sample.pairs.len() * 2);
    for pair in &sample.pairs {
        for &idx in &[pair.treated, pair.control] {
            let rec = cohort
                .records()
                .get(idx)
                .ok_or(MatchError::IndexOutOfRange(idx))?;
            records.push(rec.clone());
        }
    }
    Ok(Cohort::new(cohort.schema().clone(), records)?)
}

impl MatchedSample {
    /// Audit CSV: one row per pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,treated_row,control_row,ps_treated,ps_control,distance\n");
        for (id, p) in self.pairs.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                id, p.treated, p.control, p.ps_treated, p.ps_control, p.distance
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logit::LogisticFit;

    fn scores_from(treated: &[f64], control: &[f64]) -> PropensityScores {
        let mut scores = treated.to_vec();
        scores.extend_from_slice(control);
        PropensityScores {
            sd: crate::cohort::sample_sd(&scores),
            treated_indices: (0..treated.len()).collect(),
            control_indices: (treated.len()..treated.len() + control.len()).collect(),
            scores,
        }
    }

    fn width(w: f64) -> Caliper {
        Caliper {
            multiplier: f64::NAN,
            scale: CaliperScale::Probability,
            absolute_width: w,
        }
    }

    #[test]
    fn exact_twins_all_match() {
        let ps = scores_from(&[0.3, 0.6], &[0.3, 0.6]);
        let sample =
            match_pairs(&ps, &width(0.01), MatchOrder::DescendingPs, MatchDirection::TreatedToControl)
                .unwrap();
        assert_eq!(sample.pairs.len(), 2);
        let total: f64 = sample.pairs.iter().map(|p| p.distance).sum();
        assert_eq!(total, 0.0);
        assert_eq!(sample.unmatched_treated, 0);
        assert_eq!(sample.unmatched_control, 0);
    }

    #[test]
    fn zero_caliper_distinct_scores_matches_nothing() {
        let ps = scores_from(&[0.2, 0.4], &[0.3, 0.5]);
        let sample =
            match_pairs(&ps, &width(0.0), MatchOrder::DescendingPs, MatchDirection::TreatedToControl)
                .unwrap();
        assert!(sample.pairs.is_empty());
        assert_eq!(sample.unmatched_treated, 2);
        assert_eq!(sample.unmatched_control, 2);
    }

    #[test]
    fn descending_order_fixture() {
        // treated rows 0..3 = {0.50, 0.52, 0.90}; control rows 3..6 = {0.51, 0.53, 0.10}
        let ps = scores_from(&[0.50, 0.52, 0.90], &[0.51, 0.53, 0.10]);
        let sample =
            match_pairs(&ps, &width(0.05), MatchOrder::DescendingPs, MatchDirection::TreatedToControl)
                .unwrap();
        // 0.90 first: nearest is 0.53 at distance 0.37 — outside the caliper.
        // 0.52 next: 0.51 and 0.53 tie at 0.01, lowest index wins (row 3).
        // 0.50 last: 0.53 at distance 0.03.
        assert_eq!(sample.pairs.len(), 2);
        assert_eq!((sample.pairs[0].treated, sample.pairs[0].control), (1, 3));
        assert_eq!((sample.pairs[1].treated, sample.pairs[1].control), (0, 4));
        assert_eq!(sample.unmatched_treated, 1);
    }

    #[test]
    fn all_pairs_satisfy_caliper_and_no_reuse() {
        let ps = scores_from(
            &[0.11, 0.32, 0.35, 0.58, 0.72, 0.9],
            &[0.1, 0.33, 0.41, 0.55, 0.61, 0.88, 0.95],
        );
        let caliper = width(0.07);
        let sample = match_pairs(
            &ps,
            &caliper,
            MatchOrder::Random(7),
            MatchDirection::TreatedToControl,
        )
        .unwrap();
        let mut seen = std::collections::HashSet::new();
        for p in &sample.pairs {
            assert!(p.distance <= caliper.absolute_width);
            assert!(seen.insert(p.treated));
            assert!(seen.insert(p.control));
        }
        assert_eq!(
            sample.pairs.len() + sample.unmatched_treated,
            ps.treated_indices.len()
        );
        assert_eq!(
            sample.pairs.len() + sample.unmatched_control,
            ps.control_indices.len()
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let ps = scores_from(&[0.2, 0.4, 0.6, 0.8], &[0.25, 0.45, 0.65, 0.85]);
        let a = match_pairs(&ps, &width(0.1), MatchOrder::Random(42), MatchDirection::TreatedToControl)
            .unwrap();
        let b = match_pairs(&ps, &width(0.1), MatchOrder::Random(42), MatchDirection::TreatedToControl)
            .unwrap();
        assert_eq!(a.pairs, b.pairs);
    }

    #[test]
    fn widening_caliper_never_loses_pairs() {
        let ps = scores_from(
            &[0.1, 0.25, 0.4, 0.55, 0.7, 0.85],
            &[0.12, 0.3, 0.52, 0.57, 0.8, 0.99],
        );
        let mut last = 0;
        for w in [0.0, 0.01, 0.03, 0.05, 0.1, 0.2, 0.5, 1.0] {
            let sample = match_pairs(
                &ps,
                &width(w),
                MatchOrder::Random(11),
                MatchDirection::TreatedToControl,
            )
            .unwrap();
            assert!(sample.pairs.len() >= last, "width {w}");
            last = sample.pairs.len();
        }
    }

    #[test]
    fn empty_group_is_an_error() {
        let ps = PropensityScores {
            scores: vec![0.5, 0.5],
            sd: 0.0,
            treated_indices: vec![0, 1],
            control_indices: vec![],
        };
        assert!(matches!(
            match_pairs(&ps, &width(0.1), MatchOrder::DescendingPs, MatchDirection::TreatedToControl),
            Err(MatchError::EmptyGroup)
        ));
    }

    #[test]
    fn constant_scores_from_intercept_only_fit() {
        let cohort = crate::fixture::glioma_fixture();
        let fit = LogisticFit {
            coefficients: vec![logit(0.4184); 1]
                .into_iter()
                .chain(std::iter::repeat(0.0).take(13))
                .collect(),
            standard_errors: vec![1.0; 14],
            iterations: 0,
            converged: true,
            separation_warning: false,
            log_likelihood: 0.0,
        };
        let ps = score(&cohort, &fit).unwrap();
        assert!(ps.scores.iter().all(|&s| (s - 0.4184).abs() < 1e-12));
        assert!(ps.sd.abs() < 1e-12);
        assert_eq!(ps.treated_indices.len(), 351);
        assert_eq!(ps.control_indices.len(), 488);
    }

    #[test]
    fn scores_are_hand_evaluated_sigmoids() {
        use crate::cohort::{Cohort, CovariateSpec, Schema, VarRole};
        let schema = Schema::new(vec![
            CovariateSpec::continuous("x", VarRole::Covariate, None),
            CovariateSpec::binary("t", VarRole::Treatment),
            CovariateSpec::binary("y", VarRole::Outcome),
        ])
        .unwrap();
        let records = vec![
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![-1.0, 1.0, 0.0],
            vec![2.0, 0.0, 1.0],
        ];
        let cohort = Cohort::new(schema, records).unwrap();
        let fit = LogisticFit {
            coefficients: vec![0.5, -1.0],
            standard_errors: vec![1.0, 1.0],
            iterations: 0,
            converged: true,
            separation_warning: false,
            log_likelihood: 0.0,
        };
        let ps = score(&cohort, &fit).unwrap();
        let expect = [0.5_f64, -0.5, 1.5, -1.5].map(crate::logit::sigmoid);
        for (s, e) in ps.scores.iter().zip(expect) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn matched_cohort_extracts_pair_rows() {
        use crate::cohort::{Cohort, CovariateSpec, Schema, VarRole};
        let schema = Schema::new(vec![
            CovariateSpec::continuous("x", VarRole::Covariate, None),
            CovariateSpec::binary("t", VarRole::Treatment),
            CovariateSpec::binary("y", VarRole::Outcome),
        ])
        .unwrap();
        let records = vec![
            vec![1.0, 1.0, 0.0],
            vec![2.0, 1.0, 1.0],
            vec![3.0, 0.0, 0.0],
            vec![4.0, 0.0, 1.0],
        ];
        let cohort = Cohort::new(schema, records.clone()).unwrap();
        let sample = MatchedSample {
            pairs: vec![
                Pair { treated: 1, control: 2, ps_treated: 0.5, ps_control: 0.5, distance: 0.0 },
                Pair { treated: 0, control: 3, ps_treated: 0.5, ps_control: 0.5, distance: 0.0 },
            ],
            unmatched_treated: 0,
            unmatched_control: 0,
            caliper: width(1.0),
            direction: MatchDirection::TreatedToControl,
            seed: None,
        };
        let matched = matched_cohort(&cohort, &sample).unwrap();
        assert_eq!(matched.n(), 4);
        assert_eq!(matched.records()[0], records[1]);
        assert_eq!(matched.records()[1], records[2]);
        assert_eq!(matched.records()[2], records[0]);
        assert_eq!(matched.records()[3], records[3]);

        let empty = MatchedSample { pairs: vec![], ..sample };
        assert!(matches!(
            matched_cohort(&cohort, &empty),
            Err(MatchError::EmptySample)
        ));
    }

    // Naive O(n^2) replay of the same greedy policy, kept deliberately
    // independent of the implementation above.
    pub(crate) fn brute_force_greedy(
        ps: &PropensityScores,
        caliper_width: f64,
        order: MatchOrder,
        direction: MatchDirection,
    ) -> Vec<(usize, usize)> {
        let (src, cand) = match direction {
            MatchDirection::TreatedToControl => {
                (ps.treated_indices.clone(), ps.control_indices.clone())
            }
            MatchDirection::ControlToTreated => {
                (ps.control_indices.clone(), ps.treated_indices.clone())
            }
        };
        let mut src = src;
        match order {
            MatchOrder::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                src.shuffle(&mut rng);
            }
            MatchOrder::DescendingPs => {
                src.sort_by(|&a, &b| {
                    ps.scores[b].partial_cmp(&ps.scores[a]).unwrap().then(a.cmp(&b))
                });
            }
        }
        let mut remaining = cand;
        let mut pairs = Vec::new();
        for s in src {
            if remaining.is_empty() {
                break;
            }
            let mut best_i = 0;
            for i in 1..remaining.len() {
                let d = (ps.scores[s] - ps.scores[remaining[i]]).abs();
                let bd = (ps.scores[s] - ps.scores[remaining[best_i]]).abs();
                if d < bd || (d == bd && remaining[i] < remaining[best_i]) {
                    best_i = i;
                }
            }
            let d = (ps.scores[s] - ps.scores[remaining[best_i]]).abs();
            if d <= caliper_width {
                let c = remaining.remove(best_i);
                pairs.push(match direction {
                    MatchDirection::TreatedToControl => (s, c),
                    MatchDirection::ControlToTreated => (c, s),
                });
            }
        }
        pairs
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..40 {
            let nt = rng.gen_range(1..=8);
            let nc = rng.gen_range(1..=8);
            let treated: Vec<f64> = (0..nt).map(|_| rng.gen_range(0.01..0.99)).collect();
            let control: Vec<f64> = (0..nc).map(|_| rng.gen_range(0.01..0.99)).collect();
            let ps = scores_from(&treated, &control);
            for w in [0.0, 0.02, 0.05, 0.1, 0.3, 1.0] {
                for order in [MatchOrder::Random(trial), MatchOrder::DescendingPs] {
                    for dir in [MatchDirection::TreatedToControl, MatchDirection::ControlToTreated] {
                        let got = match_pairs(&ps, &width(w), order, dir).unwrap();
                        let got: Vec<(usize, usize)> =
                            got.pairs.iter().map(|p| (p.treated, p.control)).collect();
                        let want = brute_force_greedy(&ps, w, order, dir);
                        assert_eq!(got, want, "trial {trial} width {w} {order:?} {dir:?}");
                    }
                }
            }
        }
    }
}
