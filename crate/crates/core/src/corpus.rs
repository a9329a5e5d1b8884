//! Tabular datasets, field-kind inference and the placeholder renaming
//! that turns (dataset, chart) examples into training pairs.
//!
//! Field names never reach the model. Each record is rewritten with
//! placeholder keys (`str0`, `str1`, ... for string columns, `num0`, ... for
//! numeric ones) and the chart specification is rewritten with the same
//! mapping. Generated specifications are mapped back with
//! [`backward_transform`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub type Record = Map<String, Value>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("dataset has no records")]
    EmptyDataset,
    #[error("record {row} has no fields")]
    EmptyRecord { row: usize },
    #[error("record {row} does not share the field set of record 0: {detail}")]
    RaggedDataset { row: usize, detail: String },
    #[error("record field {field:?} is not part of the schema")]
    SchemaMismatch { field: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {name}: {source}")]
    Json {
        name: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{name}: {message}")]
    Format { name: String, message: String },
}

/// A rectangular table of flat records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<Record>,
}

impl Dataset {
    /// Builds a dataset, checking that it is non-empty and rectangular.
    pub fn new(name: impl Into<String>, records: Vec<Record>) -> Result<Self, CorpusError> {
        let ds = Self {
            name: name.into(),
            records,
        };
        ds.check_shape()?;
        Ok(ds)
    }

    fn check_shape(&self) -> Result<(), CorpusError> {
        let first = self.records.first().ok_or(CorpusError::EmptyDataset)?;
        for (row, rec) in self.records.iter().enumerate() {
            if rec.is_empty() {
                return Err(CorpusError::EmptyRecord { row });
            }
            if rec.len() != first.len() || rec.keys().any(|k| !first.contains_key(k)) {
                let missing: Vec<&str> = first
                    .keys()
                    .filter(|k| !rec.contains_key(*k))
                    .map(String::as_str)
                    .collect();
                let extra: Vec<&str> = rec
                    .keys()
                    .filter(|k| !first.contains_key(*k))
                    .map(String::as_str)
                    .collect();
                return Err(CorpusError::RaggedDataset {
                    row,
                    detail: format!("missing {missing:?}, extra {extra:?}"),
                });
            }
        }
        Ok(())
    }

    /// Parses a JSON array of objects.
    pub fn from_json_str(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let name = name.into();
        let value: Value = serde_json::from_str(text).map_err(|source| CorpusError::Json {
            name: name.clone(),
            source,
        })?;
        Self::from_value(name, value)
    }

    pub fn from_value(name: impl Into<String>, value: Value) -> Result<Self, CorpusError> {
        let name = name.into();
        let Value::Array(items) = value else {
            return Err(CorpusError::Format {
                name,
                message: "expected an array of records".into(),
            });
        };
        let mut records = Vec::with_capacity(items.len());
        for (i, item) in items.into_iter().enumerate() {
            match item {
                Value::Object(map) => records.push(map),
                _ => {
                    return Err(CorpusError::Format {
                        name,
                        message: format!("element {i} is not an object"),
                    })
                }
            }
        }
        Self::new(name, records)
    }

    /// Thin CSV converter: numeric-looking cells become numbers, empty cells null.
    pub fn from_csv_str(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            let mut rec = Record::new();
            for (h, cell) in headers.iter().zip(row.iter()) {
                let v = if cell.is_empty() {
                    Value::Null
                } else if let Some(n) = parse_number(cell).and_then(serde_json::Number::from_f64) {
                    Value::Number(n)
                } else {
                    Value::String(cell.to_string())
                };
                rec.insert(h.to_string(), v);
            }
            records.push(rec);
        }
        Self::new(name, records)
    }

    pub fn field_names(&self) -> Vec<&str> {
        self.records
            .first()
            .map(|r| r.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }
}

fn parse_number(s: &str) -> Option<f64> {
    let t = s.trim();
    // Rust accepts "inf"/"NaN"; decimal notation only.
    if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b)) {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Numeric,
    String,
}

impl FieldKind {
    pub fn prefix(self) -> &'static str {
        match self {
            FieldKind::Numeric => "num",
            FieldKind::String => "str",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    pub name: String,
    pub kind: FieldKind,
}

/// Infers one [`FieldSchema`] per column, in first-record key order.
///
/// A column is numeric iff every non-null value is a JSON number or a string
/// holding a decimal number.
pub fn infer_schema(dataset: &Dataset) -> Result<Vec<FieldSchema>, CorpusError> {
    dataset.check_shape()?;
    let first = &dataset.records[0];
    Ok(first
        .keys()
        .map(|name| {
            let numeric = dataset.records.iter().all(|rec| match &rec[name] {
                Value::Null | Value::Number(_) => true,
                Value::String(s) => parse_number(s).is_some(),
                _ => false,
            });
            FieldSchema {
                name: name.clone(),
                kind: if numeric {
                    FieldKind::Numeric
                } else {
                    FieldKind::String
                },
            }
        })
        .collect())
}

/// Original field name to placeholder, in source emission order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameMapping {
    pub pairs: Vec<(String, String)>,
}

impl NameMapping {
    /// String fields first, then numeric fields, each in schema order.
    pub fn from_schema(schema: &[FieldSchema]) -> Self {
        let mut pairs = Vec::with_capacity(schema.len());
        for kind in [FieldKind::String, FieldKind::Numeric] {
            for (i, f) in schema.iter().filter(|f| f.kind == kind).enumerate() {
                pairs.push((f.name.clone(), format!("{}{}", kind.prefix(), i)));
            }
        }
        Self { pairs }
    }

    pub fn placeholder_for(&self, original: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(o, _)| o == original)
            .map(|(_, p)| p.as_str())
    }

    pub fn original_for(&self, placeholder: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(_, p)| p == placeholder)
            .map(|(o, _)| o.as_str())
    }

    pub fn is_bijective(&self) -> bool {
        use std::collections::HashSet;
        let originals: HashSet<_> = self.pairs.iter().map(|(o, _)| o).collect();
        let placeholders: HashSet<_> = self.pairs.iter().map(|(_, p)| p).collect();
        originals.len() == self.pairs.len() && placeholders.len() == self.pairs.len()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Serializes `record` as compact JSON with placeholder keys.
///
/// Schema fields missing from the record are emitted as `null`.
pub fn forward_transform(record: &Record, schema: &[FieldSchema]) -> Result<(String, NameMapping), CorpusError> {
    if let Some(field) = record.keys().find(|k| !schema.iter().any(|f| &f.name == *k)) {
        return Err(CorpusError::SchemaMismatch {
            field: field.clone(),
        });
    }
    let mapping = NameMapping::from_schema(schema);
    let mut out = Map::new();
    for (original, placeholder) in &mapping.pairs {
        let v = record.get(original).cloned().unwrap_or(Value::Null);
        out.insert(placeholder.clone(), v);
    }
    let text = serde_json::to_string(&Value::Object(out)).expect("JSON values always serialize");
    Ok((text, mapping))
}

/// Rewrites `field` references in a chart from original names to
/// placeholders and drops the `data` member.
pub fn normalize_spec(spec: &Value, mapping: &NameMapping) -> Value {
    fn walk(v: &Value, mapping: &NameMapping) -> Value {
        match v {
            Value::Object(map) => {
                let mut out = Map::new();
                for (k, child) in map {
                    let renamed = match (k.as_str(), child) {
                        ("field", Value::String(name)) => mapping
                            .placeholder_for(name)
                            .map(|p| Value::String(p.to_string())),
                        _ => None,
                    };
                    out.insert(k.clone(), renamed.unwrap_or_else(|| walk(child, mapping)));
                }
                Value::Object(out)
            }
            Value::Array(items) => Value::Array(items.iter().map(|i| walk(i, mapping)).collect()),
            other => other.clone(),
        }
    }
    let mut out = walk(spec, mapping);
    if let Value::Object(map) = &mut out {
        map.shift_remove("data");
    }
    out
}

/// Restores original field names in generated text.
///
/// Every complete quoted token (key or string value) whose content equals a
/// placeholder is replaced by the JSON-escaped original name. Tokens are
/// matched whole, so `"num1"` never rewrites part of `"num10"`, and the scan
/// is a single pass, so an original name that happens to look like another
/// placeholder is never rewritten twice. Unknown placeholders are left alone
/// so they can be reported as phantom fields. The text need not be valid JSON.
pub fn backward_transform(text: &str, mapping: &NameMapping) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('"') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let Some(end) = closing_quote(after) else {
            out.push_str(&rest[start..]);
            return out;
        };
        let body = &after[..end];
        match mapping.original_for(body) {
            Some(original) => {
                out.push_str(&serde_json::to_string(original).expect("strings always serialize"))
            }
            None => {
                out.push('"');
                out.push_str(body);
                out.push('"');
            }
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    out
}

fn closing_quote(s: &str) -> Option<usize> {
    let mut escaped = false;
    for (i, b) in s.bytes().enumerate() {
        match b {
            _ if escaped => escaped = false,
            b'\\' => escaped = true,
            b'"' => return Some(i),
            _ => {}
        }
    }
    None
}

/// A normalized (source, target) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source: String,
    pub target: String,
}

/// One corpus example: a dataset and a chart drawn from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusExample {
    pub name: String,
    pub dataset: Dataset,
    pub spec: Value,
}

impl CorpusExample {
    /// Accepts `{"data": [...], "spec": {...}}` or a Vega-Lite object with
    /// inline `data.values`.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self, CorpusError> {
        let name = name.into();
        let value: Value = serde_json::from_str(text).map_err(|source| CorpusError::Json {
            name: name.clone(),
            source,
        })?;
        let Value::Object(mut obj) = value else {
            return Err(CorpusError::Format {
                name,
                message: "expected a JSON object".into(),
            });
        };
        let format_err = |message: &str| CorpusError::Format {
            name: name.clone(),
            message: message.into(),
        };
        if let (Some(data), Some(spec)) = (obj.get("data"), obj.get("spec")) {
            if data.is_array() {
                let dataset = Dataset::from_value(name.clone(), data.clone())?;
                if !spec.is_object() {
                    return Err(format_err("\"spec\" must be an object"));
                }
                return Ok(Self {
                    name,
                    dataset,
                    spec: spec.clone(),
                });
            }
        }
        let values = obj
            .get_mut("data")
            .and_then(|d| d.get_mut("values"))
            .map(Value::take)
            .ok_or_else(|| format_err("expected \"data\"+\"spec\" members or inline data.values"))?;
        let dataset = Dataset::from_value(name.clone(), values)?;
        obj.shift_remove("data");
        Ok(Self {
            name,
            dataset,
            spec: Value::Object(obj),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(name, &text)
    }
}

/// Loads every `*.json` example in `dir`, sorted by file name.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<CorpusExample>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| CorpusExample::load(p)).collect()
}

/// Loads every `*.json` record array in `dir`, sorted by file name.
pub fn load_dataset_dir(dir: &Path) -> Result<Vec<Dataset>, CorpusError> {
    let io = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|source| CorpusError::Io {
                path: p.clone(),
                source,
            })?;
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Dataset::from_json_str(name, &text)
        })
        .collect()
}

/// Per-example sampling stream, independent of the other examples.
fn example_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Row indices for one example: distinct rows when the table is large
/// enough, otherwise uniform draws with replacement.
pub fn sample_rows(rows: usize, samples: usize, rng: &mut impl Rng) -> Vec<usize> {
    if rows >= samples {
        index::sample(rng, rows, samples).into_vec()
    } else {
        (0..samples).map(|_| rng.gen_range(0..rows)).collect()
    }
}

/// Expands each example into `samples_per_example` training pairs.
///
/// With `max_len`, pairs whose source or target would not fit a token
/// sequence of that length (text plus end marker) are skipped with a warning.
pub fn generate_pairs(
    corpus: &[CorpusExample],
    samples_per_example: usize,
    max_len: Option<usize>,
    seed: u64,
) -> Result<Vec<TrainingPair>, CorpusError> {
    assert!(samples_per_example >= 1, "samples_per_example must be at least 1");
    let fits = |s: &str| max_len.is_none_or(|m| s.chars().count() < m);
    let mut pairs = Vec::with_capacity(corpus.len() * samples_per_example);
    for (i, example) in corpus.iter().enumerate() {
        let schema = infer_schema(&example.dataset)?;
        let mapping = NameMapping::from_schema(&schema);
        let target = serde_json::to_string(&normalize_spec(&example.spec, &mapping))
            .expect("JSON values always serialize");
        if !fits(&target) {
            log::warn!("{}: target longer than max_len, example skipped", example.name);
            continue;
        }
        let mut rng = example_rng(seed, i);
        for row in sample_rows(example.dataset.records.len(), samples_per_example, &mut rng) {
            let (source, _) = forward_transform(&example.dataset.records[row], &schema)?;
            if !fits(&source) {
                log::warn!("{}: row {row} longer than max_len, skipped", example.name);
                continue;
            }
            pairs.push(TrainingPair {
                source,
                target: target.clone(),
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn ds(v: Value) -> Dataset {
        Dataset::from_value("t", v).unwrap()
    }

    fn kinds(schema: &[FieldSchema]) -> Vec<(&str, FieldKind)> {
        schema.iter().map(|f| (f.name.as_str(), f.kind)).collect()
    }

    #[test]
    fn infers_unambiguous_columns() {
        let d = ds(json!([{"a": 1, "b": "x"}, {"a": 2, "b": "y"}]));
        let s = infer_schema(&d).unwrap();
        assert_eq!(kinds(&s), vec![("a", FieldKind::Numeric), ("b", FieldKind::String)]);
    }

    #[test]
    fn mixed_column_demotes_to_string() {
        let d = ds(json!([{"a": 1}, {"a": "oops"}]));
        assert_eq!(kinds(&infer_schema(&d).unwrap()), vec![("a", FieldKind::String)]);
    }

    #[test]
    fn placeholder_named_fields_keep_their_kinds() {
        let d = ds(json!([{"num0": 8, "str0": "A"}]));
        assert_eq!(
            kinds(&infer_schema(&d).unwrap()),
            vec![("num0", FieldKind::Numeric), ("str0", FieldKind::String)]
        );
    }

    #[test]
    fn nulls_and_numeric_strings() {
        let d = ds(json!([{"a": null, "b": "1.5", "c": true}, {"a": 3, "b": "2e3", "c": false}]));
        assert_eq!(
            kinds(&infer_schema(&d).unwrap()),
            vec![("a", FieldKind::Numeric), ("b", FieldKind::Numeric), ("c", FieldKind::String)]
        );
        let d = ds(json!([{"a": "inf"}, {"a": "NaN"}]));
        assert_eq!(kinds(&infer_schema(&d).unwrap()), vec![("a", FieldKind::String)]);
    }

    #[test]
    fn empty_and_ragged_datasets_are_rejected() {
        assert!(matches!(Dataset::from_value("e", json!([])), Err(CorpusError::EmptyDataset)));
        assert!(matches!(
            Dataset::from_value("r", json!([{"a": 1}, {"b": 1}])),
            Err(CorpusError::RaggedDataset { row: 1, .. })
        ));
        assert!(matches!(
            Dataset::from_value("r", json!([{"a": 1}, {}])),
            Err(CorpusError::EmptyRecord { row: 1 })
        ));
        let mut bad = Dataset {
            name: "x".into(),
            records: vec![],
        };
        assert!(matches!(infer_schema(&bad), Err(CorpusError::EmptyDataset)));
        bad.records = vec![json!({"a": 1}).as_object().unwrap().clone(), json!({"a": 1, "b": 2}).as_object().unwrap().clone()];
        assert!(matches!(infer_schema(&bad), Err(CorpusError::RaggedDataset { .. })));
    }

    #[test]
    fn forward_transform_orders_strings_before_numbers() {
        let rec = json!({"country": "US", "pop": 31}).as_object().unwrap().clone();
        let schema = vec![
            FieldSchema { name: "country".into(), kind: FieldKind::String },
            FieldSchema { name: "pop".into(), kind: FieldKind::Numeric },
        ];
        let (text, mapping) = forward_transform(&rec, &schema).unwrap();
        assert_eq!(text, r#"{"str0":"US","num0":31}"#);
        assert_eq!(mapping.placeholder_for("country"), Some("str0"));
        assert_eq!(mapping.placeholder_for("pop"), Some("num0"));

        let rec = json!({"pop": 31, "country": "US"}).as_object().unwrap().clone();
        let schema_rev = vec![schema[1].clone(), schema[0].clone()];
        assert_eq!(forward_transform(&rec, &schema_rev).unwrap().0, r#"{"str0":"US","num0":31}"#);
    }

    #[test]
    fn forward_transform_edge_cases() {
        let (text, mapping) = forward_transform(&Record::new(), &[]).unwrap();
        assert_eq!(text, "{}");
        assert!(mapping.is_empty());

        let rec = json!({"a": 1, "b": 2}).as_object().unwrap().clone();
        let schema = infer_schema(&ds(json!([{"a": 1, "b": 2}]))).unwrap();
        let (text, mapping) = forward_transform(&rec, &schema).unwrap();
        assert_eq!(text, r#"{"num0":1,"num1":2}"#);
        assert_eq!(mapping.pairs, vec![("a".into(), "num0".into()), ("b".into(), "num1".into())]);

        let err = forward_transform(&json!({"z": 1}).as_object().unwrap().clone(), &schema).unwrap_err();
        assert!(matches!(err, CorpusError::SchemaMismatch { field } if field == "z"));
    }

    #[test]
    fn backward_transform_cases() {
        let m = NameMapping { pairs: vec![("pop".into(), "num0".into())] };
        assert_eq!(backward_transform(r#""field":"num0""#, &m), r#""field":"pop""#);
        assert_eq!(backward_transform(r#"{"mark":"bar"}"#, &m), r#"{"mark":"bar"}"#);
        assert_eq!(backward_transform(r#""field":"num1""#, &m), r#""field":"num1""#);
        // unterminated string in broken output is copied verbatim
        assert_eq!(backward_transform(r#"{"field":"num0"#, &m), r#"{"field":"num0"#);
    }

    #[test]
    fn backward_transform_prefers_whole_tokens() {
        let m = NameMapping {
            pairs: (0..12).map(|i| (format!("f{i}"), format!("num{i}"))).collect(),
        };
        assert_eq!(
            backward_transform(r#"["num1","num10","num11"]"#, &m),
            r#"["f1","f10","f11"]"#
        );
    }

    #[test]
    fn backward_transform_escapes_original_names_and_avoids_chains() {
        let m = NameMapping {
            pairs: vec![
                ("num0".into(), "str0".into()),
                ("say \"hi\"".into(), "num0".into()),
            ],
        };
        let out = backward_transform(r#"{"a":"str0","b":"num0"}"#, &m);
        assert_eq!(out, r#"{"a":"num0","b":"say \"hi\""}"#);
    }

    #[test]
    fn normalize_spec_renames_fields_and_drops_data() {
        let spec = json!({
            "data": {"url": "x.json"},
            "mark": "bar",
            "encoding": {"x": {"field": "pop", "type": "quantitative", "sort": {"field": "pop"}},
                          "y": {"field": "nominal", "type": "nominal"}}
        });
        let m = NameMapping {
            pairs: vec![("nominal".into(), "str0".into()), ("pop".into(), "num0".into())],
        };
        let n = normalize_spec(&spec, &m);
        assert_eq!(
            serde_json::to_string(&n).unwrap(),
            r#"{"mark":"bar","encoding":{"x":{"field":"num0","type":"quantitative","sort":{"field":"num0"}},"y":{"field":"str0","type":"nominal"}}}"#
        );
    }

    #[test]
    fn parses_both_example_layouts() {
        let a = CorpusExample::parse("a", r#"{"data":[{"x":1}],"spec":{"mark":"tick"}}"#).unwrap();
        assert_eq!(a.dataset.records.len(), 1);
        assert_eq!(a.spec, json!({"mark": "tick"}));
        let b = CorpusExample::parse("b", r#"{"data":{"values":[{"x":1},{"x":2}]},"mark":"tick"}"#).unwrap();
        assert_eq!(b.dataset.records.len(), 2);
        assert_eq!(b.spec, json!({"mark": "tick"}));
        assert!(CorpusExample::parse("c", r#"{"mark":"tick"}"#).is_err());
    }

    #[test]
    fn csv_converter() {
        let d = Dataset::from_csv_str("c", "a,b\n1,x\n,y\n").unwrap();
        assert_eq!(d.records[0]["a"], json!(1.0));
        assert_eq!(d.records[1]["a"], Value::Null);
        assert_eq!(kinds(&infer_schema(&d).unwrap()), vec![("a", FieldKind::Numeric), ("b", FieldKind::String)]);
    }

    fn example(rows: usize) -> CorpusExample {
        let data: Vec<Value> = (0..rows).map(|i| json!({"name": format!("r{i}"), "v": i})).collect();
        CorpusExample {
            name: "ex".into(),
            dataset: Dataset::from_value("ex", Value::Array(data)).unwrap(),
            spec: json!({"mark": "bar", "encoding": {"x": {"field": "v", "type": "quantitative"}}}),
        }
    }

    #[test]
    fn generate_pairs_counts() {
        let corpus = vec![example(60), example(3), example(1)];
        let pairs = generate_pairs(&corpus, 50, None, 1).unwrap();
        assert_eq!(pairs.len(), 150);
        let one = generate_pairs(&corpus[2..], 1, None, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].target, r#"{"mark":"bar","encoding":{"x":{"field":"num0","type":"quantitative"}}}"#);
        assert_eq!(one[0].source, r#"{"str0":"r0","num0":0}"#);
    }

    #[test]
    fn generate_pairs_distinct_rows_when_possible_and_deterministic() {
        let corpus = vec![example(60)];
        let a = generate_pairs(&corpus, 50, None, 9).unwrap();
        let b = generate_pairs(&corpus, 50, None, 9).unwrap();
        assert_eq!(a, b);
        let distinct: std::collections::HashSet<_> = a.iter().map(|p| &p.source).collect();
        assert_eq!(distinct.len(), 50);
    }

    #[test]
    fn generate_pairs_skips_overlong_rows() {
        let mut ex = example(2);
        ex.dataset.records[1].insert("name".into(), json!("x".repeat(600)));
        let pairs = generate_pairs(&[ex], 2, Some(500), 3).unwrap();
        assert!(pairs.iter().all(|p| p.source.len() < 500));
    }
}
