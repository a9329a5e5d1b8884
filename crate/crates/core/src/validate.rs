//! Language and visualization validity of generated specifications.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::corpus::{FieldKind, FieldSchema};

/// The Vega-Lite constructs the corpus uses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarSubset {
    pub marks: Vec<String>,
    pub channels: Vec<String>,
    pub types: Vec<String>,
    pub view_transforms: Vec<String>,
    pub field_transforms: Vec<String>,
    /// Aggregates that need a quantitative, non-string field.
    pub numeric_aggregates: Vec<String>,
    /// Aggregates that accept any field.
    pub counting_aggregates: Vec<String>,
    pub time_units: Vec<String>,
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for GrammarSubset {
    fn default() -> Self {
        Self {
            marks: strings(&["area", "bar", "circle", "line", "point", "tick"]),
            channels: strings(&["x", "y", "color", "shape", "size", "row", "column"]),
            types: strings(&["quantitative", "nominal", "ordinal", "temporal"]),
            view_transforms: strings(&["aggregate", "bin", "calculate", "filter", "timeUnit"]),
            field_transforms: strings(&["aggregate", "bin", "sort", "timeUnit"]),
            numeric_aggregates: strings(&[
                "sum", "mean", "average", "median", "min", "max", "stdev", "stdevp", "variance", "variancep", "q1",
                "q3",
            ]),
            counting_aggregates: strings(&["count", "distinct", "valid", "missing"]),
            time_units: strings(&[
                "year", "quarter", "month", "date", "day", "hours", "minutes", "seconds", "yearmonth", "yearmonthdate",
                "monthdate", "hoursminutes",
            ]),
        }
    }
}

impl GrammarSubset {
    fn has(list: &[String], s: &str) -> bool {
        list.iter().any(|x| x == s)
    }

    /// Field kinds a declared type may be applied to.
    pub fn kind_allows(kind: FieldKind, ty: &str) -> bool {
        match kind {
            FieldKind::Numeric => matches!(ty, "quantitative" | "ordinal"),
            FieldKind::String => matches!(ty, "nominal" | "ordinal" | "temporal"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Json,
    NotObject,
    Mark,
    Encoding,
    Channel,
    FieldType,
    Aggregate,
    Bin,
    TimeUnit,
    Sort,
    Transform,
    Phantom,
    KindMismatch,
    UnknownKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// JSON-pointer style location.
    pub path: String,
    pub message: String,
    pub rule: Rule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityResult {
    pub language_valid: bool,
    pub visualization_valid: bool,
    pub phantom_fields: Vec<String>,
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

/// Parses `text` as a JSON object.
pub fn check_language(text: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(other) => Err(format!("expected an object, found {}", kind_name(&other))),
        Err(e) => Err(e.to_string()),
    }
}

fn kind_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

const TOP_LEVEL: &[&str] = &[
    "$schema", "mark", "encoding", "data", "transform", "description", "title", "width", "height", "config", "name",
    "background", "padding", "autosize",
];
const CHANNEL_KEYS: &[&str] = &[
    "field", "type", "aggregate", "bin", "timeUnit", "sort", "scale", "axis", "legend", "title", "stack", "format",
];

struct Checker<'a> {
    grammar: &'a GrammarSubset,
    schema: Option<&'a [FieldSchema]>,
    derived: BTreeSet<String>,
    errors: Vec<Diagnostic>,
    warnings: Vec<Diagnostic>,
    phantoms: Vec<String>,
}

impl Checker<'_> {
    fn error(&mut self, path: impl Into<String>, rule: Rule, message: impl Into<String>) {
        self.errors.push(Diagnostic { path: path.into(), message: message.into(), rule });
    }

    fn warn(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.warnings.push(Diagnostic { path: path.into(), message: message.into(), rule: Rule::UnknownKey });
    }

    /// Kind of a referenced field; `None` for derived fields, unknown fields
    /// (recorded as phantoms) and schema-less checks.
    fn lookup(&mut self, path: &str, field: &str) -> Option<FieldKind> {
        let schema = self.schema?;
        if let Some(f) = schema.iter().find(|f| f.name == field) {
            return Some(f.kind);
        }
        if !self.derived.contains(field) {
            if !self.phantoms.iter().any(|p| p == field) {
                self.phantoms.push(field.to_string());
            }
            self.error(path, Rule::Phantom, format!("field \"{field}\" does not exist in the dataset"));
        }
        None
    }

    fn mark(&mut self, spec: &Map<String, Value>) {
        let mark = match spec.get("mark") {
            None => return self.error("/mark", Rule::Mark, "missing mark"),
            Some(Value::String(s)) => s.as_str(),
            Some(Value::Object(o)) => match o.get("type") {
                Some(Value::String(s)) => s.as_str(),
                _ => return self.error("/mark/type", Rule::Mark, "mark object needs a string type"),
            },
            Some(other) => return self.error("/mark", Rule::Mark, format!("mark must be a string, found {}", kind_name(other))),
        };
        if !GrammarSubset::has(&self.grammar.marks, mark) {
            self.error("/mark", Rule::Mark, format!("unsupported mark \"{mark}\""));
        }
    }

    fn transforms(&mut self, spec: &Map<String, Value>) {
        let Some(t) = spec.get("transform") else { return };
        let Value::Array(items) = t else {
            return self.error("/transform", Rule::Transform, "transform must be an array");
        };
        for (i, item) in items.iter().enumerate() {
            let path = format!("/transform/{i}");
            let Value::Object(obj) = item else {
                self.error(&path, Rule::Transform, "transform entries must be objects");
                continue;
            };
            let ops: Vec<&String> = obj.keys().filter(|k| GrammarSubset::has(&self.grammar.view_transforms, k)).collect();
            if ops.len() != 1 {
                self.error(&path, Rule::Transform, "expected exactly one of aggregate, bin, calculate, filter, timeUnit");
                continue;
            }
            let op = ops[0].clone();
            let mut outputs: Vec<String> = Vec::new();
            if let Some(Value::String(a)) = obj.get("as") {
                outputs.push(a.clone());
            }
            match op.as_str() {
                "aggregate" => {
                    let Some(Value::Array(aggs)) = obj.get("aggregate") else {
                        self.error(format!("{path}/aggregate"), Rule::Transform, "aggregate must be an array");
                        continue;
                    };
                    for (j, a) in aggs.iter().enumerate() {
                        let p = format!("{path}/aggregate/{j}");
                        let (Some(Value::String(agg)), Some(Value::String(out))) = (a.get("op"), a.get("as")) else {
                            self.error(&p, Rule::Transform, "aggregate entries need string op and as");
                            continue;
                        };
                        if !self.is_aggregate(agg) {
                            self.error(&p, Rule::Aggregate, format!("unknown aggregate \"{agg}\""));
                        }
                        if let Some(Value::String(f)) = a.get("field") {
                            self.lookup(&format!("{p}/field"), f);
                        }
                        outputs.push(out.clone());
                    }
                    if let Some(Value::Array(g)) = obj.get("groupby") {
                        for (j, f) in g.iter().enumerate() {
                            if let Value::String(f) = f {
                                self.lookup(&format!("{path}/groupby/{j}"), f);
                            }
                        }
                    }
                }
                "bin" | "timeUnit" => match obj.get("field") {
                    Some(Value::String(f)) => {
                        self.lookup(&format!("{path}/field"), f);
                    }
                    _ => self.error(format!("{path}/field"), Rule::Transform, format!("{op} transform needs a field")),
                },
                "calculate" | "filter" if !obj.get(&op).is_some_and(|v| v.is_string() || v.is_object()) => {
                    self.error(format!("{path}/{op}"), Rule::Transform, format!("{op} needs an expression"));
                }
                _ => {}
            }
            if op != "filter" && outputs.is_empty() {
                self.error(format!("{path}/as"), Rule::Transform, format!("{op} transform needs an output name"));
            }
            self.derived.extend(outputs);
        }
    }

    fn is_aggregate(&self, a: &str) -> bool {
        GrammarSubset::has(&self.grammar.numeric_aggregates, a) || GrammarSubset::has(&self.grammar.counting_aggregates, a)
    }

    fn encoding(&mut self, spec: &Map<String, Value>) {
        let enc = match spec.get("encoding") {
            None => return self.error("/encoding", Rule::Encoding, "missing encoding"),
            Some(Value::Object(o)) => o,
            Some(other) => {
                return self.error("/encoding", Rule::Encoding, format!("encoding must be an object, found {}", kind_name(other)))
            }
        };
        let mut channels = 0;
        for (name, def) in enc {
            let path = format!("/encoding/{name}");
            if !GrammarSubset::has(&self.grammar.channels, name) {
                self.error(&path, Rule::Channel, format!("unsupported channel \"{name}\""));
                continue;
            }
            channels += 1;
            let Value::Object(def) = def else {
                self.error(&path, Rule::Channel, "channel definition must be an object");
                continue;
            };
            self.channel(&path, def);
        }
        if channels == 0 {
            self.error("/encoding", Rule::Encoding, "encoding needs at least one channel");
        }
    }

    fn channel(&mut self, path: &str, def: &Map<String, Value>) {
        for key in def.keys() {
            if !CHANNEL_KEYS.contains(&key.as_str()) {
                self.warn(format!("{path}/{key}"), format!("unknown channel property \"{key}\""));
            }
        }
        let aggregate = match def.get("aggregate") {
            None => None,
            Some(Value::String(a)) if self.is_aggregate(a) => Some(a.as_str()),
            Some(other) => {
                self.error(format!("{path}/aggregate"), Rule::Aggregate, format!("unsupported aggregate {other}"));
                None
            }
        };
        let field = match def.get("field") {
            None => None,
            Some(Value::String(f)) if f == "*" => None,
            Some(Value::String(f)) if !f.is_empty() => Some(f.as_str()),
            Some(_) => {
                self.error(format!("{path}/field"), Rule::Channel, "field must be a non-empty string");
                None
            }
        };
        if field.is_none() && aggregate != Some("count") {
            self.error(path, Rule::Channel, "channel needs a field unless it counts records");
        }
        let ty = match def.get("type") {
            None => {
                self.error(format!("{path}/type"), Rule::FieldType, "missing type");
                None
            }
            Some(Value::String(t)) if GrammarSubset::has(&self.grammar.types, t) => Some(t.as_str()),
            Some(other) => {
                self.error(format!("{path}/type"), Rule::FieldType, format!("unsupported type {other}"));
                None
            }
        };
        let kind = field.and_then(|f| self.lookup(&format!("{path}/field"), f));
        if let (Some(kind), Some(ty)) = (kind, ty) {
            if !GrammarSubset::kind_allows(kind, ty) {
                let what = match kind {
                    FieldKind::Numeric => "numeric",
                    FieldKind::String => "string",
                };
                self.error(format!("{path}/type"), Rule::KindMismatch, format!("type {ty} does not fit a {what} field"));
            }
        }
        if let Some(a) = aggregate {
            if GrammarSubset::has(&self.grammar.numeric_aggregates, a) {
                if ty.is_some_and(|t| t != "quantitative") {
                    self.error(format!("{path}/aggregate"), Rule::Aggregate, format!("{a} needs a quantitative field"));
                }
                if kind == Some(FieldKind::String) {
                    self.error(format!("{path}/aggregate"), Rule::Aggregate, format!("{a} does not apply to string fields"));
                }
            }
        }
        match def.get("bin") {
            None | Some(Value::Bool(false)) | Some(Value::Null) => {}
            Some(Value::Bool(true)) | Some(Value::Object(_)) => {
                if ty.is_some_and(|t| t != "quantitative") {
                    self.error(format!("{path}/bin"), Rule::Bin, "bin needs a quantitative field");
                }
                if kind == Some(FieldKind::String) {
                    self.error(format!("{path}/bin"), Rule::Bin, "bin does not apply to string fields");
                }
            }
            Some(other) => self.error(format!("{path}/bin"), Rule::Bin, format!("bin must be a boolean or object, found {other}")),
        }
        match def.get("timeUnit") {
            None => {}
            Some(Value::String(u)) if GrammarSubset::has(&self.grammar.time_units, u) => {
                if ty.is_some_and(|t| t != "temporal") {
                    self.error(format!("{path}/timeUnit"), Rule::TimeUnit, "timeUnit needs a temporal field");
                }
            }
            Some(other) => self.error(format!("{path}/timeUnit"), Rule::TimeUnit, format!("unsupported timeUnit {other}")),
        }
        match def.get("sort") {
            None | Some(Value::Null) | Some(Value::Object(_)) | Some(Value::Array(_)) => {}
            Some(Value::String(s)) if s == "ascending" || s == "descending" => {}
            Some(other) => self.error(format!("{path}/sort"), Rule::Sort, format!("unsupported sort {other}")),
        }
    }
}

/// Checks a parsed specification against the grammar and, when given, the
/// dataset schema. Phantom fields are reported as errors but leave
/// `visualization_valid` untouched; the phantom rate is tracked separately.
pub fn validate_spec(spec: &Map<String, Value>, grammar: &GrammarSubset, schema: Option<&[FieldSchema]>) -> ValidityResult {
    let mut c = Checker {
        grammar,
        schema,
        derived: BTreeSet::new(),
        errors: Vec::new(),
        warnings: Vec::new(),
        phantoms: Vec::new(),
    };
    for key in spec.keys() {
        if !TOP_LEVEL.contains(&key.as_str()) {
            c.warn(format!("/{key}"), format!("unknown top-level key \"{key}\""));
        }
    }
    c.mark(spec);
    c.transforms(spec);
    c.encoding(spec);
    let visualization_valid = c.errors.iter().all(|d| d.rule == Rule::Phantom);
    ValidityResult {
        language_valid: true,
        visualization_valid,
        phantom_fields: c.phantoms,
        errors: c.errors,
        warnings: c.warnings,
    }
}

/// Language check followed by `validate_spec` when the text parses.
pub fn validate_text(text: &str, grammar: &GrammarSubset, schema: Option<&[FieldSchema]>) -> ValidityResult {
    match check_language(text) {
        Ok(spec) => validate_spec(&spec, grammar, schema),
        Err(message) => ValidityResult {
            language_valid: false,
            visualization_valid: false,
            phantom_fields: Vec::new(),
            errors: vec![Diagnostic {
                path: String::new(),
                message,
                rule: if serde_json::from_str::<Value>(text).is_ok() { Rule::NotObject } else { Rule::Json },
            }],
            warnings: Vec::new(),
        },
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("cannot score an empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchRates {
    pub language: f64,
    pub visualization: f64,
    pub phantom: f64,
    pub count: usize,
}

pub fn score_batch(results: &[ValidityResult]) -> Result<BatchRates, ScoreError> {
    if results.is_empty() {
        return Err(ScoreError::EmptyBatch);
    }
    let n = results.len() as f64;
    let rate = |f: &dyn Fn(&ValidityResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(BatchRates {
        language: rate(&|r| r.language_valid),
        visualization: rate(&|r| r.visualization_valid),
        phantom: rate(&|r| !r.phantom_fields.is_empty()),
        count: results.len(),
    })
}
