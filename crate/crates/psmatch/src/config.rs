//! Run configuration: a flat key-value config file format plus the parsed
//! settings that drive a pipeline run. Command-line flags override file
//! values; both feed the same `RunConfig`.

use crate::matcher::CaliperScale;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected 'key = value'")]
    BadLine(usize),
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("missing required setting '{0}'")]
    Missing(String),
}

/// Which artifacts a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitKind {
    ReportJson,
    BalanceCsv,
    PairsCsv,
    HistogramsCsv,
    LoveplotCsv,
    LoveplotSvg,
}

impl EmitKind {
    pub const ALL: [EmitKind; 6] = [
        EmitKind::ReportJson,
        EmitKind::BalanceCsv,
        EmitKind::PairsCsv,
        EmitKind::HistogramsCsv,
        EmitKind::LoveplotCsv,
        EmitKind::LoveplotSvg,
    ];

    pub fn parse(s: &str) -> Option<EmitKind> {
        Some(match s.trim() {
            "report_json" => EmitKind::ReportJson,
            "balance_csv" => EmitKind::BalanceCsv,
            "pairs_csv" => EmitKind::PairsCsv,
            "histograms_csv" => EmitKind::HistogramsCsv,
            "loveplot_csv" => EmitKind::LoveplotCsv,
            "loveplot_svg" => EmitKind::LoveplotSvg,
            _ => return None,
        })
    }

    pub fn file_name(self) -> &'static str {
        match self {
            EmitKind::ReportJson => "report.json",
            EmitKind::BalanceCsv => "balance.csv",
            EmitKind::PairsCsv => "pairs.csv",
            EmitKind::HistogramsCsv => "histograms.csv",
            EmitKind::LoveplotCsv => "loveplot.csv",
            EmitKind::LoveplotSvg => "loveplot.svg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderSetting {
    Random,
    Descending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AteMethod {
    /// (n_T, n_C)-weighted average of ATT and ATC.
    Weighted,
    /// Plain difference in mean outcomes on the matched sample.
    DifferenceInMeans,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub input_path: PathBuf,
    pub schema_path: Option<PathBuf>,
    pub treatment_column: Option<String>,
    pub outcome_column: Option<String>,
    pub caliper_multiplier: f64,
    pub caliper_scale: CaliperScale,
    pub match_order: OrderSetting,
    /// Required when match_order is random.
    pub seed: Option<u64>,
    pub bootstrap_replicates: usize,
    pub balance_threshold: f64,
    pub histogram_bins: usize,
    pub ate_method: AteMethod,
    pub output_directory: PathBuf,
    pub emit: Vec<EmitKind>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input_path: PathBuf::new(),
            schema_path: None,
            treatment_column: None,
            outcome_column: None,
            caliper_multiplier: 0.25,
            caliper_scale: CaliperScale::Probability,
            match_order: OrderSetting::Random,
            seed: None,
            bootstrap_replicates: 2000,
            balance_threshold: 0.1,
            histogram_bins: 20,
            ate_method: AteMethod::Weighted,
            output_directory: PathBuf::from("out"),
            emit: EmitKind::ALL.to_vec(),
        }
    }
}

/// Parse the flat `key = value` config format: one setting per line,
/// `#` starts a comment, keys may not repeat.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::BadLine(i + 1))?;
        let key = key.trim().to_string();
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() || key.chars().any(|c| c.is_whitespace()) {
            return Err(ConfigError::BadLine(i + 1));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(ConfigError::DuplicateKey(key));
        }
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("cannot parse '{value}'"),
    })
}

impl RunConfig {
    /// Apply settings from a parsed key-value map on top of `self`.
    pub fn apply(&mut self, map: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (key, value) in map {
            match key.as_str() {
                "input" => self.input_path = PathBuf::from(value),
                "schema" => self.schema_path = Some(PathBuf::from(value)),
                "treatment" => self.treatment_column = Some(value.clone()),
                "outcome" => self.outcome_column = Some(value.clone()),
                "caliper" => {
                    let v: f64 = parse_num(key, value)?;
                    if v < 0.0 || !v.is_finite() {
                        return Err(ConfigError::BadValue {
                            key: key.clone(),
                            reason: "caliper multiplier must be nonnegative".into(),
                        });
                    }
                    self.caliper_multiplier = v;
                }
                "caliper_scale" => {
                    self.caliper_scale = match value.as_str() {
                        "probability" => CaliperScale::Probability,
                        "logit" => CaliperScale::Logit,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.clone(),
                                reason: format!("expected probability|logit, got '{other}'"),
                            })
                        }
                    };
                }
                "order" => {
                    self.match_order = match value.as_str() {
                        "random" => OrderSetting::Random,
                        "descending" => OrderSetting::Descending,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.clone(),
                                reason: format!("expected random|descending, got '{other}'"),
                            })
                        }
                    };
                }
                "seed" => self.seed = Some(parse_num(key, value)?),
                "replicates" => {
                    let v: usize = parse_num(key, value)?;
                    if v < 100 {
                        return Err(ConfigError::BadValue {
                            key: key.clone(),
                            reason: "need at least 100 bootstrap replicates".into(),
                        });
                    }
                    self.bootstrap_replicates = v;
                }
                "threshold" => self.balance_threshold = parse_num(key, value)?,
                "bins" => {
                    let v: usize = parse_num(key, value)?;
                    if v < 2 {
                        return Err(ConfigError::BadValue {
                            key: key.clone(),
                            reason: "need at least 2 bins".into(),
                        });
                    }
                    self.histogram_bins = v;
                }
                "ate_method" => {
                    self.ate_method = match value.as_str() {
                        "weighted" => AteMethod::Weighted,
                        "difference_in_means" => AteMethod::DifferenceInMeans,
                        other => {
                            return Err(ConfigError::BadValue {
                                key: key.clone(),
                                reason: format!(
                                    "expected weighted|difference_in_means, got '{other}'"
                                ),
                            })
                        }
                    };
                }
                "out" => self.output_directory = PathBuf::from(value),
                "emit" => {
                    let mut kinds = Vec::new();
                    for part in value.split(',') {
                        let kind = EmitKind::parse(part).ok_or_else(|| ConfigError::BadValue {
                            key: key.clone(),
                            reason: format!("unknown artifact '{}'", part.trim()),
                        })?;
                        if !kinds.contains(&kind) {
                            kinds.push(kind);
                        }
                    }
                    self.emit = kinds;
                }
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            }
        }
        Ok(())
    }

    pub fn from_file_text(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply(&parse_key_values(text)?)?;
        Ok(cfg)
    }

    pub fn require_input(&self) -> Result<(), ConfigError> {
        if self.input_path.as_os_str().is_empty() {
            return Err(ConfigError::Missing("input".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_key_values() {
        let text = "\
# pipeline settings
input = data/cohort.csv
caliper = 0.25
order = random
seed = 7
emit = report_json, balance_csv
";
        let cfg = RunConfig::from_file_text(text).unwrap();
        assert_eq!(cfg.input_path, PathBuf::from("data/cohort.csv"));
        assert_eq!(cfg.caliper_multiplier, 0.25);
        assert_eq!(cfg.match_order, OrderSetting::Random);
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.emit, vec![EmitKind::ReportJson, EmitKind::BalanceCsv]);
    }

    #[test]
    fn rejects_unknown_key() {
        assert!(matches!(
            RunConfig::from_file_text("bogus = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn rejects_negative_caliper() {
        assert!(matches!(
            RunConfig::from_file_text("caliper = -0.1"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn rejects_duplicate_and_malformed_lines() {
        assert!(matches!(
            parse_key_values("a = 1\na = 2"),
            Err(ConfigError::DuplicateKey(_))
        ));
        assert!(matches!(
            parse_key_values("no equals sign here"),
            Err(ConfigError::BadLine(1))
        ));
    }

    #[test]
    fn comments_and_blanks_ignored(){
        let map = parse_key_values("\n# full comment\nseed = 3 # trailing\n\n").unwrap();
        assert_eq!(map.get("seed").unwrap(), "3");
    }

    #[test]
    fn parser_never_panics_on_arbitrary_text() {
        // smoke test mirrored by the fuzz target
        for text in ["=", "====", "a=\u{0}", "\u{FFFD}=x", "k = = =", "#", " = "] {
            let _ = RunConfig::from_file_text(text);
        }
    }
}
