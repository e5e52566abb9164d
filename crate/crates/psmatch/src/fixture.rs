//! Deterministic glioma-like synthetic cohort.
//!
//! The original glioma cohort is not redistributed with this crate. This
//! fixture is an 839-row stand-in constructed so that its marginal
//! statistics — covariate counts per glioma grade, covariate proportions
//! per gender, and the age mean/SD of every margin — reproduce the
//! published summary tables at reporting precision. Joint structure beyond
//! those margins is synthetic and carries no clinical meaning.

use crate::cohort::{glioma_schema, Cohort};

/// (male LGG, male GBM, female LGG, female GBM) cell sizes.
const CELL_SIZES: [usize; 4] = [216, 135, 271, 217];

/// Count of mutated records per (male LGG, male GBM, female LGG, female GBM)
/// cell for each marker, chosen to hit both the per-grade and per-gender
/// marginal counts exactly.
const MARKER_CELLS: [(&str, [usize; 4]); 12] = [
    ("IDH1", [169, 10, 212, 13]),
    ("ATRX", [85, 16, 98, 18]),
    ("PTEN", [10, 44, 15, 72]),
    ("EGFR", [12, 30, 19, 51]),
    ("CIC", [53, 2, 54, 2]),
    ("BCOR", [11, 7, 6, 5]),
    ("MUC16", [18, 25, 23, 32]),
    ("PIK3R1", [7, 10, 14, 23]),
    ("PDGFRA", [3, 8, 3, 8]),
    ("CSMD3", [6, 8, 6, 7]),
    ("IDH2", [10, 1, 11, 1]),
    ("FAT4", [7, 7, 4, 5]),
];

/// Age mean per cell, solved so every margin (overall, per grade, per
/// gender) lands on its published mean within rounding.
const AGE_MEANS: [f64; 4] = [44.20929781, 60.90520246, 43.60489662, 60.57513311];
/// Age sample SD per cell, solved the same way for the margin SDs.
const AGE_SDS: [f64; 4] = [13.22342926, 13.40819268, 13.30659455, 13.47242895];

/// Equally spaced pattern with exact zero mean and unit sample SD.
fn unit_pattern(n: usize) -> Vec<f64> {
    let z: Vec<f64> = (0..n)
        .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
        .collect();
    let sd = crate::cohort::sample_sd(&z);
    z.iter().map(|v| v / sd).collect()
}

/// Deterministic spread of `count` ones over `n` rows. Rows are ranked by a
/// fixed multiplicative hash so different markers place their ones in
/// different (but reproducible) rows instead of stacking on a prefix.
fn spread(n: usize, count: usize, salt: usize) -> Vec<f64> {
    let mut keyed: Vec<(usize, usize)> = (0..n)
        .map(|i| ((i * (2 * salt + 13) + salt * 7) % n, i))
        .collect();
    keyed.sort();
    let mut out = vec![0.0; n];
    for &(_, row) in keyed.iter().take(count) {
        out[row] = 1.0;
    }
    out
}

/// Build the 839-row fixture cohort under the canonical glioma schema.
pub fn glioma_fixture() -> Cohort {
    let schema = glioma_schema();
    let genders = [1.0, 1.0, 0.0, 0.0];
    let grades = [0.0, 1.0, 0.0, 1.0];
    let mut records = Vec::with_capacity(839);
    for (cell, &n) in CELL_SIZES.iter().enumerate() {
        let ages: Vec<f64> = unit_pattern(n)
            .iter()
            .map(|z| AGE_MEANS[cell] + AGE_SDS[cell] * z)
            .collect();
        let markers: Vec<Vec<f64>> = MARKER_CELLS
            .iter()
            .enumerate()
            .map(|(mi, (_, counts))| spread(n, counts[cell], mi * 4 + cell + 1))
            .collect();
        for i in 0..n {
            // Schema order: Age, Gender, 12 markers, Grade.
            let mut rec = Vec::with_capacity(15);
            rec.push(ages[i]);
            rec.push(genders[cell]);
            for m in &markers {
                rec.push(m[i]);
            }
            rec.push(grades[cell]);
            records.push(rec);
        }
    }
    Cohort::new(schema, records).expect("fixture cohort is valid")
}
