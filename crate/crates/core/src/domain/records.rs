//! Line-delimited prediction records.
//!
//! One JSON object per line:
//!
//! ```text
//! {"model_id":"m1","sample_id":"q17","draw_index":0,"prediction":"42"}
//! ```
//!
//! `prediction` is a string (discrete), a number (continuous) or an array of
//! strings (answer set). True labels use the model id [`LABELS_MODEL_ID`];
//! human annotators use `__human_<k>__`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::types::{DomainKind, Draw, PredictionSet};

pub const LABELS_MODEL_ID: &str = "__labels__";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub model_id: String,
    pub sample_id: String,
    pub draw_index: usize,
    pub prediction: PredictionValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PredictionValue {
    Text(String),
    Number(f64),
    Options(Vec<String>),
}

impl PredictionValue {
    pub fn kind(&self) -> DomainKind {
        match self {
            PredictionValue::Text(_) => DomainKind::Discrete,
            PredictionValue::Number(_) => DomainKind::Continuous,
            PredictionValue::Options(_) => DomainKind::AnswerSet,
        }
    }
}

impl From<&Draw> for PredictionValue {
    fn from(d: &Draw) -> Self {
        match d {
            Draw::Token(t) => PredictionValue::Text(t.to_string()),
            Draw::Score(v) => PredictionValue::Number(*v),
            Draw::Options(s) => PredictionValue::Options(s.iter().cloned().collect()),
        }
    }
}

pub fn human_model_id(k: usize) -> String {
    format!("__human_{k}__")
}

/// Annotator index of a `__human_<k>__` model id.
pub fn human_index(model_id: &str) -> Option<usize> {
    model_id.strip_prefix("__human_")?.strip_suffix("__")?.parse().ok()
}

pub fn is_reserved(model_id: &str) -> bool {
    model_id == LABELS_MODEL_ID || human_index(model_id).is_some()
}

/// Records of one set in sample order, draws in index order.
pub fn records_of(set: &PredictionSet) -> impl Iterator<Item = PredictionRecord> + '_ {
    set.sample_ids().iter().enumerate().flat_map(move |(j, sample)| {
        set.draws(j).iter().enumerate().map(move |(k, d)| PredictionRecord {
            model_id: set.model_id().to_owned(),
            sample_id: sample.clone(),
            draw_index: k,
            prediction: d.into(),
        })
    })
}

pub fn write_jsonl<'a, W, I>(mut out: W, sets: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a PredictionSet>,
{
    for set in sets {
        for rec in records_of(set) {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_values_parse_by_shape() {
        let r: PredictionRecord =
            serde_json::from_str(r#"{"model_id":"m","sample_id":"s","draw_index":1,"prediction":["a","b"]}"#).unwrap();
        assert_eq!(r.prediction.kind(), DomainKind::AnswerSet);
        let r: PredictionRecord =
            serde_json::from_str(r#"{"model_id":"m","sample_id":"s","draw_index":0,"prediction":3.5}"#).unwrap();
        assert_eq!(r.prediction, PredictionValue::Number(3.5));
        let r: PredictionRecord =
            serde_json::from_str(r#"{"model_id":"m","sample_id":"s","draw_index":0,"prediction":"7"}"#).unwrap();
        assert_eq!(r.prediction.kind(), DomainKind::Discrete);
    }

    #[test]
    fn reserved_ids() {
        assert_eq!(human_index("__human_3__"), Some(3));
        assert_eq!(human_index(&human_model_id(12)), Some(12));
        assert_eq!(human_index("__human_x__"), None);
        assert!(is_reserved(LABELS_MODEL_ID));
        assert!(!is_reserved("gpt"));
    }

    #[test]
    fn writes_one_line_per_draw() {
        let set = PredictionSet::discrete_tokens("m", &["a", "b"]).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, [&set]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"model_id":"m","sample_id":"s0","draw_index":0,"prediction":"a"}"#));
    }
}
