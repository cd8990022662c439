//! Scenario files: raw TOML layout and the validated, parsed form.

use std::fmt;

use fedosov_core::geometry::DiffeoError;
use fedosov_core::{
    Chart, ChartFunction as F, Connection, DiffeoFamily, DifferentialForm, Mode, SymTensor3, VectorField,
};
use serde::Deserialize;

use crate::expr::{parse_form, parse_function, parse_vector_field, ParseContext, ParseError};
use crate::suites::Suite;

/// The scenario used when no file is given.
pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.toml");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_m")]
    pub m: u8,
    pub nu_order: i32,
    pub weyl_degree: Option<i32>,
    #[serde(default = "default_eps")]
    pub eps_order: u8,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checks: Vec<String>,
    pub chi: String,
    #[serde(default)]
    pub connection: RawConnection,
    #[serde(default)]
    pub diffeo: RawDiffeo,
    #[serde(default)]
    pub inputs: RawInputs,
}

fn default_mode() -> String {
    "torus".into()
}

fn default_m() -> u8 {
    1
}

fn default_eps() -> u8 {
    1
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConnection {
    /// Only `"flat"` (the coordinate connection) is available as a base.
    #[serde(default)]
    pub base: Option<String>,
    #[serde(default)]
    pub s: Vec<RawSEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSEntry {
    /// 1-based indices of the totally symmetric 3-tensor entry.
    pub index: [usize; 3],
    pub value: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDiffeo {
    /// Displacement `f(x) - x`, one entry per coordinate; empty means the identity.
    #[serde(default)]
    pub displacement: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInputs {
    #[serde(default)]
    pub hamiltonians: Vec<String>,
    #[serde(default)]
    pub fields: Vec<String>,
    #[serde(default)]
    pub functions: Vec<String>,
}

/// A validation failure, located by key path and, for expressions, by caret.
#[derive(Debug, Clone)]
pub struct ScenarioError {
    pub path: String,
    pub message: String,
    pub parse: Option<ParseError>,
}

impl ScenarioError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError { path: path.into(), message: message.into(), parse: None }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.parse {
            Some(p) => write!(f, "in `{}`: {p}", self.path),
            None if self.path.is_empty() => write!(f, "{}", self.message),
            None => write!(f, "in `{}`: {}", self.path, self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone)]
pub struct Named<T> {
    pub source: String,
    pub value: T,
}

/// A fully parsed scenario; everything has been checked before any suite runs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub chart: Chart,
    pub nu_order: i32,
    pub weyl_degree: i32,
    pub eps_order: u8,
    pub seed: u64,
    pub checks: Vec<Suite>,
    pub chi: Named<DifferentialForm>,
    pub connection: Connection,
    pub connection_source: Vec<(String, String)>,
    pub diffeo: DiffeoFamily,
    pub diffeo_source: Vec<String>,
    pub hamiltonians: Vec<Named<F>>,
    pub fields: Vec<Named<VectorField>>,
    pub functions: Vec<Named<F>>,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub nu_order: Option<i32>,
    pub weyl_degree: Option<i32>,
    pub seed: Option<u64>,
}

pub fn parse_toml(src: &str) -> Result<RawScenario, ScenarioError> {
    toml::from_str(src).map_err(|e| ScenarioError::at("", e.to_string()))
}

fn parse_err(path: String, e: ParseError) -> ScenarioError {
    ScenarioError { path, message: e.message.clone(), parse: Some(e) }
}

impl Scenario {
    pub fn from_toml(src: &str, ov: Overrides) -> Result<Self, ScenarioError> {
        Self::validate(parse_toml(src)?, ov)
    }

    pub fn validate(raw: RawScenario, ov: Overrides) -> Result<Self, ScenarioError> {
        let mode = match raw.mode.as_str() {
            "torus" => Mode::Torus,
            "affine" => Mode::Affine,
            other => return Err(ScenarioError::at("mode", format!("expected \"torus\" or \"affine\", found \"{other}\""))),
        };
        let chart = Chart::new(mode, raw.m).map_err(|e| ScenarioError::at("m", e.to_string()))?;
        let nu_order = ov.nu_order.unwrap_or(raw.nu_order);
        if !(0..=6).contains(&nu_order) {
            return Err(ScenarioError::at("nu_order", format!("must lie in 0..=6, found {nu_order}")));
        }
        let weyl_degree = ov.weyl_degree.or(raw.weyl_degree).unwrap_or(2 * nu_order + 3);
        if weyl_degree < 2 * nu_order + 3 {
            return Err(ScenarioError::at(
                "weyl_degree",
                format!("{weyl_degree} is too small for nu order {nu_order}; need at least {}", 2 * nu_order + 3),
            ));
        }
        if raw.eps_order == 0 || raw.eps_order > 4 {
            return Err(ScenarioError::at("eps_order", format!("must lie in 1..=4, found {}", raw.eps_order)));
        }
        for (i, name) in raw.checks.iter().enumerate() {
            Suite::resolve(&[name]).map_err(|e| ScenarioError::at(format!("checks[{i}]"), e))?;
        }
        let checks = Suite::resolve(&raw.checks).expect("names checked above");
        let ctx = ParseContext::new(chart, raw.eps_order);

        let chi = parse_form(&raw.chi, ctx, 2).map_err(|e| parse_err("chi".into(), e))?;
        let chi = Named { source: raw.chi.clone(), value: chi };

        match raw.connection.base.as_deref() {
            None | Some("flat") => {}
            Some(other) => {
                return Err(ScenarioError::at("connection.base", format!("unknown base connection \"{other}\"; only \"flat\" is available")))
            }
        }
        let mut s = SymTensor3::zero(chart);
        let mut connection_source = Vec::new();
        for (i, e) in raw.connection.s.iter().enumerate() {
            let path = format!("connection.s[{i}]");
            if e.index.iter().any(|&k| k == 0 || k > chart.dim()) {
                return Err(ScenarioError::at(format!("{path}.index"), format!("indices must lie in 1..={}", chart.dim())));
            }
            let v = parse_function(&e.value, ctx).map_err(|err| parse_err(format!("{path}.value"), err))?;
            let [a, b, c] = e.index;
            s.set(a - 1, b - 1, c - 1, s.get(a - 1, b - 1, c - 1).add(&v));
            connection_source.push((format!("S{a}{b}{c}"), e.value.clone()));
        }
        let connection = Connection::symplectic(&s);

        let diffeo = if raw.diffeo.displacement.is_empty() {
            DiffeoFamily::identity(chart)
        } else {
            if raw.diffeo.displacement.len() != chart.dim() {
                return Err(ScenarioError::at(
                    "diffeo.displacement",
                    format!("expected {} components, found {}", chart.dim(), raw.diffeo.displacement.len()),
                ));
            }
            let mut u = Vec::new();
            for (i, src) in raw.diffeo.displacement.iter().enumerate() {
                u.push(parse_function(src, ctx).map_err(|e| parse_err(format!("diffeo.displacement[{i}]"), e))?);
            }
            DiffeoFamily::new(u).map_err(|e: DiffeoError| ScenarioError::at("diffeo.displacement", e.to_string()))?
        };

        let mut hamiltonians = Vec::new();
        for (i, src) in raw.inputs.hamiltonians.iter().enumerate() {
            let v = parse_function(src, ctx).map_err(|e| parse_err(format!("inputs.hamiltonians[{i}]"), e))?;
            hamiltonians.push(Named { source: src.clone(), value: v });
        }
        let mut fields = Vec::new();
        for (i, src) in raw.inputs.fields.iter().enumerate() {
            let v = parse_vector_field(src, ctx).map_err(|e| parse_err(format!("inputs.fields[{i}]"), e))?;
            fields.push(Named { source: src.clone(), value: v });
        }
        let mut functions = Vec::new();
        for (i, src) in raw.inputs.functions.iter().enumerate() {
            let v = parse_function(src, ctx).map_err(|e| parse_err(format!("inputs.functions[{i}]"), e))?;
            functions.push(Named { source: src.clone(), value: v });
        }

        Ok(Scenario {
            name: raw.name,
            chart,
            nu_order,
            weyl_degree,
            eps_order: raw.eps_order,
            seed: ov.seed.unwrap_or(raw.seed),
            checks,
            chi,
            connection,
            connection_source,
            diffeo,
            diffeo_source: raw.diffeo.displacement,
            hamiltonians,
            fields,
            functions,
        })
    }

    pub fn parse_context(&self) -> ParseContext {
        ParseContext::new(self.chart, self.eps_order)
    }
}
