//! JSON records and the suite configuration file.
//!
//! Suite report (`schema_version` 1):
//!
//! ```json
//! { "schema_version": 1, "seed": 20240601, "passed": true,
//!   "records": [ { "name": "heat-value", "criterion": 1, "control": false,
//!                  "pass": true, "kind": "bound", "lhs": ..., ... } ] }
//! ```
//!
//! `kind` is `bound`, `growth` or `error`; the remaining fields mirror
//! [`BoundCheck`] and [`GrowthReport`]. Non-finite numbers are written as
//! `null`.
//!
//! Suite configuration (TOML, every key optional):
//!
//! ```toml
//! seed = 20240601
//! checks = ["heat-value", "growth-values"]   # omitted: every check
//! negative_controls = false
//! path_scale = 1.0                           # multiplies path budgets
//! ```

use std::path::Path;

use kolmo_core::fk::{Estimate, EstimateKind};
use kolmo_core::harness::suite::{Outcome, Record, SuiteConfig, SuiteReport};
use kolmo_core::sde::ConvergenceReport;
use kolmo_core::spaces::{TermKind, WeightedNormResult};
use kolmo_core::{BoundCheck, GrowthReport};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn nullable<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

fn nullable_vec<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Ok(Vec::<Option<f64>>::deserialize(d)?
        .into_iter()
        .map(|v| v.unwrap_or(f64::NAN))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub checks: Option<Vec<String>>,
    #[serde(default)]
    pub negative_controls: bool,
    #[serde(default)]
    pub path_scale: Option<f64>,
}

impl SuiteFile {
    pub fn parse(src: &str) -> Result<Self> {
        let f: SuiteFile = toml::from_str(src)?;
        if let Some(s) = f.path_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::format("path_scale must be positive"));
            }
        }
        Ok(f)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn config(&self) -> SuiteConfig {
        let d = SuiteConfig::default();
        SuiteConfig {
            seed: self.seed.unwrap_or(d.seed),
            checks: self.checks.clone(),
            negative_controls: self.negative_controls,
            path_scale: self.path_scale.unwrap_or(d.path_scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub key: String,
    pub value: String,
}

fn inputs(list: &[(String, String)]) -> Vec<Input> {
    list.iter()
        .map(|(k, v)| Input {
            key: k.clone(),
            value: v.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Body {
    Bound {
        check: String,
        bound: String,
        #[serde(deserialize_with = "nullable")]
        lhs: f64,
        #[serde(deserialize_with = "nullable")]
        rhs: f64,
        #[serde(deserialize_with = "nullable")]
        margin: f64,
        #[serde(deserialize_with = "nullable")]
        tolerance: f64,
        inputs: Vec<Input>,
        series: Vec<[Option<f64>; 3]>,
        notes: Vec<String>,
    },
    Growth {
        check: String,
        order: usize,
        t: f64,
        radii: Vec<f64>,
        #[serde(deserialize_with = "nullable_vec")]
        sup_values: Vec<f64>,
        #[serde(deserialize_with = "nullable")]
        slope: f64,
        exponent: f64,
        sharp_exponent: Option<f64>,
        slack: f64,
        inputs: Vec<Input>,
        notes: Vec<String>,
    },
    Error {
        message: String,
    },
}

impl From<&BoundCheck> for Body {
    fn from(b: &BoundCheck) -> Self {
        let fin = |v: f64| v.is_finite().then_some(v);
        Body::Bound {
            check: b.check.clone(),
            bound: b.bound.clone(),
            lhs: b.lhs,
            rhs: b.rhs,
            margin: b.margin,
            tolerance: b.tolerance,
            inputs: inputs(&b.inputs),
            series: b
                .series
                .iter()
                .map(|s| [fin(s[0]), fin(s[1]), fin(s[2])])
                .collect(),
            notes: b.notes.clone(),
        }
    }
}

impl From<&GrowthReport> for Body {
    fn from(g: &GrowthReport) -> Self {
        Body::Growth {
            check: g.check.clone(),
            order: g.order,
            t: g.t,
            radii: g.radii.clone(),
            sup_values: g.sup_values.clone(),
            slope: g.slope,
            exponent: g.exponent,
            sharp_exponent: g.sharp_exponent,
            slack: g.slack,
            inputs: inputs(&g.inputs),
            notes: g.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub name: String,
    pub criterion: u32,
    pub control: bool,
    pub pass: bool,
    #[serde(flatten)]
    pub body: Body,
}

impl From<&Record> for RecordJson {
    fn from(r: &Record) -> Self {
        RecordJson {
            name: r.name.clone(),
            criterion: r.criterion,
            control: r.control,
            pass: r.pass(),
            body: match &r.outcome {
                Outcome::Bound(b) => b.into(),
                Outcome::Growth(g) => g.into(),
                Outcome::Error(e) => Body::Error { message: e.clone() },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub schema_version: u32,
    pub seed: u64,
    pub passed: bool,
    pub records: Vec<RecordJson>,
}

impl From<&SuiteReport> for ReportJson {
    fn from(r: &SuiteReport) -> Self {
        ReportJson {
            schema_version: SCHEMA_VERSION,
            seed: r.seed,
            passed: r.passed(),
            records: r.records.iter().map(RecordJson::from).collect(),
        }
    }
}

impl ReportJson {
    pub fn parse(src: &str) -> Result<Self> {
        let r: ReportJson = serde_json::from_str(src)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::format(format!(
                "unsupported report schema version {}",
                r.schema_version
            )));
        }
        Ok(r)
    }
}

/// One line per record and a closing tally.
pub fn summary(report: &SuiteReport) -> String {
    let mut s = String::new();
    for r in &report.records {
        s.push_str(&r.summary());
        s.push('\n');
    }
    let failed = report.failures();
    s.push_str(&format!(
        "{} checks, {} failed",
        report.records.len(),
        failed.len()
    ));
    if !failed.is_empty() {
        let names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
        s.push_str(&format!(": {}", names.join(", ")));
    }
    s.push('\n');
    s
}

/// Exit status of a suite run.
pub fn exit_code(report: &SuiteReport) -> i32 {
    if report.passed() {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermJson {
    pub kind: String,
    pub order: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormJson {
    pub variant: String,
    pub q: u32,
    pub p: usize,
    pub beta: Option<f64>,
    pub value: f64,
    pub terms: Vec<TermJson>,
    pub cloud: String,
}

impl From<&WeightedNormResult> for NormJson {
    fn from(n: &WeightedNormResult) -> Self {
        NormJson {
            variant: n.variant.name().into(),
            q: n.q,
            p: n.p,
            beta: n.beta,
            value: n.value,
            terms: n
                .terms
                .iter()
                .map(|t| TermJson {
                    kind: match t.kind {
                        TermKind::Sup => "sup",
                        TermKind::Seminorm => "seminorm",
                    }
                    .into(),
                    order: t.order,
                    value: t.value,
                })
                .collect(),
            cloud: n.cloud.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateJson {
    pub problem: String,
    pub kind: String,
    pub t: f64,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl EstimateJson {
    pub fn new(problem: &str, t: f64, x: &[f64], e: &Estimate, antithetic: bool) -> Self {
        EstimateJson {
            problem: problem.into(),
            kind: match e.kind {
                EstimateKind::Value => "value",
                EstimateKind::Gradient => "gradient",
            }
            .into(),
            t,
            x: x.to_vec(),
            mean: e.mean.clone(),
            stderr: e.stderr.clone(),
            n_paths: e.n_paths,
            n_steps: e.n_steps,
            seed: e.seed,
            antithetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceJson {
    pub problem: String,
    pub n_steps: Vec<usize>,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub reference_steps: usize,
    pub slope: Option<f64>,
    pub slope_interval: Option<[f64; 2]>,
    pub n_paths: usize,
    pub seed: u64,
}

impl ConvergenceJson {
    pub fn new(problem: &str, r: &ConvergenceReport) -> Self {
        ConvergenceJson {
            problem: problem.into(),
            n_steps: r.n_steps.clone(),
            step_sizes: r.step_sizes.clone(),
            errors: r.errors.clone(),
            half_widths: r.half_widths.clone(),
            reference_steps: r.reference_steps,
            slope: r.slope,
            slope_interval: r.slope_interval.map(|(a, b)| [a, b]),
            n_paths: r.n_paths,
            seed: r.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use kolmo_core::harness::suite::DEFAULT_SEED;

    fn sample_report() -> SuiteReport {
        let bound = BoundCheck::new("c", "max-principle", 1.0, 2.0, 1e-10)
            .input("seed", 7)
            .with_series(vec![[0.0, 1.0, f64::INFINITY]]);
        let growth = GrowthReport {
            check: "g".into(),
            order: 0,
            t: 0.75,
            radii: vec![1.0, 2.0],
            sup_values: vec![1.0, 4.0],
            slope: 2.0,
            exponent: 2.0,
            sharp_exponent: None,
            slack: 0.3,
            pass: true,
            inputs: vec![],
            notes: vec!["span".into()],
        };
        SuiteReport {
            seed: DEFAULT_SEED,
            records: vec![
                Record {
                    name: "a".into(),
                    criterion: 3,
                    control: false,
                    outcome: Outcome::Bound(bound),
                },
                Record {
                    name: "b".into(),
                    criterion: 4,
                    control: false,
                    outcome: Outcome::Growth(growth),
                },
                Record {
                    name: "e".into(),
                    criterion: 0,
                    control: true,
                    outcome: Outcome::Error("boom".into()),
                },
            ],
        }
    }

    #[test]
    fn report_json_round_trips() {
        let r = sample_report();
        let j = ReportJson::from(&r);
        let text = serde_json::to_string_pretty(&j).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["records"][0]["kind"], "bound");
        assert_eq!(v["records"][0]["series"][0][2], serde_json::Value::Null);
        assert_eq!(v["records"][1]["kind"], "growth");
        assert_eq!(v["records"][2]["message"], "boom");
        assert_eq!(ReportJson::parse(&text).unwrap(), j);
        assert!(!j.passed);
        assert!(
            ReportJson::parse(&text.replace("\"schema_version\": 1", "\"schema_version\": 9"))
                .is_err()
        );
    }

    #[test]
    fn summary_and_exit_code() {
        let r = sample_report();
        let s = summary(&r);
        assert!(s.lines().next().unwrap().starts_with("PASS a:"));
        assert!(s.ends_with("3 checks, 1 failed: e\n"));
        assert_eq!(exit_code(&r), 1);
        let empty = SuiteReport {
            seed: 1,
            records: vec![],
        };
        assert_eq!(exit_code(&empty), 0);
        assert_eq!(summary(&empty), "0 checks, 0 failed\n");
    }

    #[test]
    fn suite_file_defaults_and_errors() {
        let f = SuiteFile::parse("").unwrap();
        assert_eq!(f.config(), SuiteConfig::default());
        let f =
            SuiteFile::parse("seed = 5\nchecks = []\nnegative_controls = true\npath_scale = 0.5")
                .unwrap();
        let c = f.config();
        assert_eq!(
            (c.seed, c.checks, c.negative_controls, c.path_scale),
            (5, Some(vec![]), true, 0.5)
        );
        assert!(SuiteFile::parse("sede = 5").is_err());
        assert!(SuiteFile::parse("path_scale = -1.0").is_err());
    }
}
