//! Reports: ordered check records serialized as TOML.

use std::collections::BTreeMap;
use std::fmt::Display;

use fedosov_core::series::{NuSeries, SeriesCoeff};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

/// One coefficient list `c_lo, c_lo+1, ...` of a series in `nu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRecord {
    pub label: String,
    pub lowest_order: i32,
    pub coefficients: Vec<String>,
}

impl SeriesRecord {
    pub fn new<T: SeriesCoeff + Display>(label: impl Into<String>, s: &NuSeries<T>) -> Self {
        SeriesRecord {
            label: label.into(),
            lowest_order: s.lo(),
            coefficients: (s.lo()..=s.order()).map(|k| s.coeff(k).to_string()).collect(),
        }
    }

    /// Coefficients through `nu^hi` only.
    pub fn through<T: SeriesCoeff + Display>(label: impl Into<String>, s: &NuSeries<T>, hi: i32) -> Self {
        Self::new(label, &s.truncate(hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesRecord>,
}

impl CheckRecord {
    pub fn new(suite: &str, name: impl Into<String>) -> Self {
        CheckRecord {
            suite: suite.into(),
            name: name.into(),
            status: Status::Pass,
            inputs: BTreeMap::new(),
            residual: None,
            message: None,
            wall_ms: None,
            series: Vec::new(),
        }
    }

    pub fn input(mut self, key: &str, value: impl Display) -> Self {
        self.inputs.insert(key.into(), value.to_string());
        self
    }

    pub fn series(mut self, s: SeriesRecord) -> Self {
        self.series.push(s);
        self
    }

    /// Pass iff the residual is zero; the residual text is recorded either way.
    pub fn residual(mut self, zero: bool, residual: impl Display) -> Self {
        self.residual = Some(residual.to_string());
        if !zero {
            self.status = Status::Fail;
        }
        self
    }

    pub fn require(mut self, ok: bool, message: impl Into<String>) -> Self {
        if !ok {
            self.status = Status::Fail;
            self.message = Some(message.into());
        }
        self
    }

    pub fn error(mut self, message: impl Into<String>) -> Self {
        self.status = Status::Error;
        self.message = Some(message.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub nu_order: i32,
    pub weyl_degree: i32,
    pub suites: Vec<String>,
    pub status: Status,
    pub passed: usize,
    pub failed: usize,
    #[serde(rename = "check")]
    pub checks: Vec<CheckRecord>,
}

impl Report {
    pub fn new(scenario: &str, seed: u64, nu_order: i32, weyl_degree: i32, suites: Vec<String>, checks: Vec<CheckRecord>) -> Self {
        let failed = checks.iter().filter(|c| !c.passed()).count();
        Report {
            scenario: scenario.into(),
            seed,
            nu_order,
            weyl_degree,
            suites,
            status: if failed == 0 { Status::Pass } else { Status::Fail },
            passed: checks.len() - failed,
            failed,
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("report fields are all TOML-representable")
    }
}
