//! Reading experimental data: per-trial CSV exports, published tables as
//! JSON, and free-association norms.
//!
//! Trials CSV header: `combination,a_index,b_index,a_outcome,b_outcome[,subject_id]`.
//! Outcomes are `+1`, `1` or `-1`.
//!
//! Table JSON: an object with blocks `a1b1`, `a1b2`, `a2b1`, `a2b2`. Each
//! block is either a 4-array of probabilities in canonical cell order, an
//! object `{"p": [...], "n": 16}`, or an object `{"counts": [...]}`.
//! Optional keys: `name`, and `primes` (four words, order A1, A2, B1, B2).

use std::collections::HashSet;
use std::io::Read;

use indexmap::IndexMap;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::model::{
    normalize, Cell, CombinationTable, Condition, ConditionBlock, CountBlock, JointDistribution, ModelError, Sign,
};
use crate::synth::GroundTruth;

/// Block sums in table files may be off by this much (printed rounding).
pub const TABLE_SUM_TOLERANCE: f64 = 1e-6;

pub const TRIAL_COLUMNS: [&str; 6] = ["combination", "a_index", "b_index", "a_outcome", "b_outcome", "subject_id"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}, column '{column}': {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },
    #[error("combination '{combination}' has no trials for {}", format_conditions(.missing))]
    IncompleteTable {
        combination: String,
        missing: Vec<Condition>,
    },
    #[error("block {block}{}: {message}", .cell.map(|c| format!(" cell {c}")).unwrap_or_default())]
    Validation {
        block: String,
        cell: Option<Cell>,
        message: String,
    },
    #[error("{0}")]
    Format(String),
}

fn format_conditions(cs: &[Condition]) -> String {
    cs.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")
}

/// One interpretation of a combination under one priming condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub combination: String,
    pub condition: Condition,
    pub a_outcome: Sign,
    pub b_outcome: Sign,
    pub subject_id: Option<String>,
}

fn parse_error(line: u64, column: &str, message: impl Into<String>) -> IngestError {
    IngestError::Parse {
        line,
        column: column.to_owned(),
        message: message.into(),
    }
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map_or(0, |p| p.line());
    parse_error(line, "-", e.to_string())
}

pub fn parse_trials<R: Read>(source: R) -> Result<Vec<TrialRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_subject = match names.as_slice() {
        h if h == &TRIAL_COLUMNS[..5] => false,
        h if h == &TRIAL_COLUMNS[..] => true,
        _ => {
            return Err(parse_error(
                1,
                "header",
                format!("expected '{}[,subject_id]', found '{}'", TRIAL_COLUMNS[..5].join(","), names.join(",")),
            ))
        }
    };
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let int = |i: usize| -> Result<i64, IngestError> {
            field(i)
                .parse::<i64>()
                .map_err(|_| parse_error(line, TRIAL_COLUMNS[i], format!("'{}' is not an integer", field(i))))
        };
        let combination = field(0).to_owned();
        if combination.is_empty() {
            return Err(parse_error(line, "combination", "empty combination name"));
        }
        let a_index = int(1)?;
        let b_index = int(2)?;
        if !(1..=2).contains(&a_index) {
            return Err(parse_error(line, "a_index", "a_index out of range"));
        }
        if !(1..=2).contains(&b_index) {
            return Err(parse_error(line, "b_index", "b_index out of range"));
        }
        let condition = Condition::new(a_index, b_index).expect("range checked");
        let a_outcome = Sign::from_value(int(3)?).map_err(|e| parse_error(line, "a_outcome", e.to_string()))?;
        let b_outcome = Sign::from_value(int(4)?).map_err(|e| parse_error(line, "b_outcome", e.to_string()))?;
        let subject_id = with_subject.then(|| field(5).to_owned()).filter(|s| !s.is_empty());
        out.push(TrialRecord {
            combination,
            condition,
            a_outcome,
            b_outcome,
            subject_id,
        });
    }
    Ok(out)
}

/// Writes records in the format `parse_trials` reads. The `subject_id`
/// column is emitted only when some record carries one.
pub fn write_trials(records: &[TrialRecord]) -> String {
    let with_subject = records.iter().any(|r| r.subject_id.is_some());
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let cols = if with_subject { &TRIAL_COLUMNS[..] } else { &TRIAL_COLUMNS[..5] };
    writer.write_record(cols).expect("in-memory write");
    for r in records {
        let mut row = vec![
            r.combination.clone(),
            r.condition.a_index().to_string(),
            r.condition.b_index().to_string(),
            r.a_outcome.to_string(),
            r.b_outcome.to_string(),
        ];
        if with_subject {
            row.push(r.subject_id.clone().unwrap_or_default());
        }
        writer.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

/// Raw counts per combination, in order of first appearance.
pub fn count(records: &[TrialRecord]) -> IndexMap<String, [CountBlock; 4]> {
    let mut out: IndexMap<String, [CountBlock; 4]> = IndexMap::new();
    for r in records {
        let blocks = out
            .entry(r.combination.clone())
            .or_insert_with(|| Condition::ALL.map(|c| CountBlock::new(c, [0; 4])));
        blocks[r.condition.index()].record(r.a_outcome, r.b_outcome);
    }
    out
}

/// Normalizes trial counts into one table per combination.
pub fn aggregate(records: &[TrialRecord]) -> Result<IndexMap<String, CombinationTable>, IngestError> {
    let mut out = IndexMap::new();
    for (name, counts) in count(records) {
        let missing: Vec<Condition> = counts.iter().filter(|c| c.total() == 0).map(|c| c.condition).collect();
        if !missing.is_empty() {
            return Err(IngestError::IncompleteTable {
                combination: name,
                missing,
            });
        }
        let blocks = counts.map(|c| normalize(&c).expect("non-empty"));
        let table = CombinationTable::new(name.clone(), blocks).expect("one block per condition");
        out.insert(name, table);
    }
    Ok(out)
}

fn validation(block: &str, cell: Option<Cell>, message: impl Into<String>) -> IngestError {
    IngestError::Validation {
        block: block.to_owned(),
        cell,
        message: message.into(),
    }
}

fn four_numbers(key: &str, v: &Value) -> Result<[f64; 4], IngestError> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| validation(key, None, "expected an array of 4 numbers"))?;
    let mut out = [0.0; 4];
    for (i, (slot, x)) in out.iter_mut().zip(arr).enumerate() {
        *slot = x
            .as_f64()
            .ok_or_else(|| validation(key, Some(Cell::ALL[i]), format!("'{x}' is not a number")))?;
    }
    Ok(out)
}

fn parse_block(condition: Condition, v: &Value) -> Result<ConditionBlock, IngestError> {
    let key = condition.key();
    let (cells, n) = match v {
        Value::Array(_) => (four_numbers(key, v)?, None),
        Value::Object(obj) => {
            if let Some(counts) = obj.get("counts") {
                let arr = counts
                    .as_array()
                    .filter(|a| a.len() == 4)
                    .ok_or_else(|| validation(key, None, "'counts' must be an array of 4 integers"))?;
                let mut c = [0u64; 4];
                for (i, (slot, x)) in c.iter_mut().zip(arr).enumerate() {
                    *slot = x.as_u64().ok_or_else(|| {
                        validation(key, Some(Cell::ALL[i]), format!("'{x}' is not a non-negative integer"))
                    })?;
                }
                return normalize(&CountBlock::new(condition, c)).map_err(|e| validation(key, None, e.to_string()));
            }
            let p = obj.get("p").ok_or_else(|| validation(key, None, "block object needs 'p' or 'counts'"))?;
            let n = match obj.get("n") {
                None | Some(Value::Null) => None,
                Some(x) => Some(
                    x.as_u64()
                        .filter(|n| *n > 0)
                        .ok_or_else(|| validation(key, None, format!("'n' must be a positive integer, got {x}")))?,
                ),
            };
            (four_numbers(key, p)?, n)
        }
        _ => return Err(validation(key, None, "expected an array or an object")),
    };
    for (cell, value) in Cell::ALL.iter().zip(cells) {
        if !value.is_finite() || value < 0.0 {
            return Err(validation(key, Some(*cell), format!("negative probability {value}")));
        }
    }
    let sum: f64 = cells.iter().sum();
    if (sum - 1.0).abs() > TABLE_SUM_TOLERANCE {
        return Err(validation(key, None, format!("cells sum to {sum}, expected 1")));
    }
    ConditionBlock::new(condition, cells.map(|c| c / sum), n).map_err(|e: ModelError| validation(key, None, e.to_string()))
}

/// Parses a table from a JSON value. `default_name` is used when the object
/// has no `name`.
pub fn table_from_value(v: &Value, default_name: &str) -> Result<CombinationTable, IngestError> {
    let obj = v
        .as_object()
        .ok_or_else(|| IngestError::Format("table must be a JSON object".into()))?;
    let name = match obj.get("name") {
        None => default_name.to_owned(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(IngestError::Format(format!("'name' must be a string, got {other}"))),
    };
    let mut blocks = Vec::with_capacity(4);
    for c in Condition::ALL {
        let raw = obj
            .get(c.key())
            .ok_or_else(|| validation(c.key(), None, "block missing"))?;
        blocks.push(parse_block(c, raw)?);
    }
    let primes = match obj.get("primes") {
        None | Some(Value::Null) => None,
        Some(Value::Array(words)) if words.len() == 4 && words.iter().all(Value::is_string) => {
            Some(std::array::from_fn(|i| words[i].as_str().expect("checked").to_owned()))
        }
        Some(other) => return Err(IngestError::Format(format!("'primes' must be 4 strings, got {other}"))),
    };
    let blocks: [ConditionBlock; 4] = blocks.try_into().expect("four conditions");
    Ok(CombinationTable::new(name, blocks)
        .expect("one block per condition")
        .with_primes(primes))
}

pub fn parse_table<R: Read>(source: R) -> Result<CombinationTable, IngestError> {
    let v: Value = serde_json::from_reader(source).map_err(|e| IngestError::Format(format!("invalid JSON: {e}")))?;
    table_from_value(&v, "unnamed")
}

/// Canonical JSON form of a table, readable by [`parse_table`].
pub fn table_to_json(table: &CombinationTable) -> Value {
    let mut obj = Map::new();
    obj.insert("name".into(), json!(table.name()));
    if let Some(p) = table.primes() {
        obj.insert("primes".into(), json!(p));
    }
    for block in table.blocks() {
        let cells = json!(block.cells());
        let v = match block.n() {
            Some(n) => json!({ "p": cells, "n": n }),
            None => cells,
        };
        obj.insert(block.condition().key().into(), v);
    }
    Value::Object(obj)
}

/// Ground truth for synthesis: a 16-array or `{"joint": [...]}` gives a
/// joint model, a table object gives a per-condition model.
pub fn parse_truth<R: Read>(source: R) -> Result<GroundTruth, IngestError> {
    let v: Value = serde_json::from_reader(source).map_err(|e| IngestError::Format(format!("invalid JSON: {e}")))?;
    let joint_array = |arr: &Value, name: &str| -> Result<GroundTruth, IngestError> {
        let a = arr
            .as_array()
            .filter(|a| a.len() == 16)
            .ok_or_else(|| IngestError::Format("joint truth must have 16 cells".into()))?;
        let mut q = [0.0; 16];
        for (slot, x) in q.iter_mut().zip(a) {
            *slot = x
                .as_f64()
                .ok_or_else(|| IngestError::Format(format!("joint cell '{x}' is not a number")))?;
        }
        let q = JointDistribution::new(q).map_err(|e| IngestError::Format(e.to_string()))?;
        Ok(GroundTruth::joint(q, name))
    };
    match &v {
        Value::Array(_) => joint_array(&v, "synthetic"),
        Value::Object(obj) if obj.contains_key("joint") => {
            let name = obj.get("name").and_then(Value::as_str).unwrap_or("synthetic");
            joint_array(&obj["joint"], name)
        }
        Value::Object(_) => Ok(GroundTruth::per_condition(table_from_value(&v, "synthetic")?)),
        _ => Err(IngestError::Format("truth must be a JSON array or object".into())),
    }
}

/// Free-association norms for one cue word.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationNorm {
    pub cue: String,
    pub associates: Vec<(String, f64)>,
}

/// Reads `cue,word,probability` rows, grouping by cue in order of appearance.
pub fn parse_norms<R: Read>(source: R) -> Result<Vec<AssociationNorm>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["cue", "word", "probability"] {
        return Err(parse_error(1, "header", "expected 'cue,word,probability'"));
    }
    let mut norms: IndexMap<String, Vec<(String, f64)>> = IndexMap::new();
    for row in reader.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let p: f64 = row[2]
            .parse()
            .map_err(|_| parse_error(line, "probability", format!("'{}' is not a number", &row[2])))?;
        if !p.is_finite() || p < 0.0 {
            return Err(parse_error(line, "probability", "negative probability"));
        }
        norms.entry(row[0].to_owned()).or_default().push((row[1].to_owned(), p));
    }
    norms
        .into_iter()
        .map(|(cue, associates)| {
            let total: f64 = associates.iter().map(|(_, p)| p).sum();
            if total > 1.0 + 1e-9 {
                return Err(IngestError::Format(format!("associates of '{cue}' sum to {total} > 1")));
            }
            Ok(AssociationNorm { cue, associates })
        })
        .collect()
}

/// Total recall probability of the associates that signal one sense.
/// Words match case-insensitively; unknown words contribute nothing.
pub fn sense_probability<S: AsRef<str>>(norm: &AssociationNorm, sense_words: &[S]) -> f64 {
    let wanted: HashSet<String> = sense_words.iter().map(|w| w.as_ref().trim().to_lowercase()).collect();
    norm.associates
        .iter()
        .filter(|(w, _)| wanted.contains(&w.to_lowercase()))
        .map(|(_, p)| p)
        .sum()
}
