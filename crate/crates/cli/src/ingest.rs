//! Reads JSONL prediction records into a dataset and a model roster.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::sync::Arc;

use mutcon::domain::records::{human_index, PredictionRecord, PredictionValue, LABELS_MODEL_ID};
use mutcon::{Dataset, DomainKind, Draw, LabelDomain, Normalization, PredictionSet};

use crate::error::{CliError, ParseErrorKind, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset,
    /// Models under evaluation in order of first appearance, followed by
    /// human tracks when they were requested as models.
    pub predictions: Vec<PredictionSet>,
    /// Ids of human tracks included in `predictions`.
    pub humans_in_roster: Vec<String>,
}

impl Ingested {
    pub fn domain(&self) -> DomainKind {
        self.predictions.first().map_or(DomainKind::Discrete, |p| p.domain().kind)
    }
}

struct Place {
    file: usize,
    line: usize,
}

struct Track {
    id: String,
    kind: DomainKind,
    first: Place,
    /// Per sample: draws by index with the place each came from.
    samples: HashMap<usize, Vec<Option<(Draw, Place)>>>,
}

struct Reader {
    files: Vec<String>,
    norm: Normalization,
    sample_ids: Vec<String>,
    sample_index: HashMap<String, usize>,
    tracks: Vec<Track>,
    track_index: HashMap<String, usize>,
}

impl Reader {
    fn parse_error(&self, kind: ParseErrorKind, at: &Place, message: String) -> CliError {
        CliError::Parse { kind, file: self.files[at.file].clone(), line: at.line, message }
    }

    fn draw(&self, value: PredictionValue) -> Draw {
        match value {
            PredictionValue::Text(t) => Draw::token(&self.norm.apply(&t)),
            PredictionValue::Number(v) => Draw::Score(v),
            PredictionValue::Options(o) => Draw::options(o.iter().map(|s| self.norm.apply(s))),
        }
    }

    fn add(&mut self, rec: PredictionRecord, at: Place) -> Result<()> {
        let kind = rec.prediction.kind();
        let t = match self.track_index.get(&rec.model_id) {
            Some(&t) => t,
            None => {
                if let Some(first) = self.tracks.first() {
                    if first.kind != kind {
                        let msg = format!(
                            "model `{}` has {kind} predictions but `{}` has {} predictions",
                            rec.model_id, first.id, first.kind
                        );
                        return Err(self.parse_error(ParseErrorKind::DomainMixing, &at, msg));
                    }
                }
                self.track_index.insert(rec.model_id.clone(), self.tracks.len());
                self.tracks.push(Track {
                    id: rec.model_id.clone(),
                    kind,
                    first: Place { file: at.file, line: at.line },
                    samples: HashMap::new(),
                });
                self.tracks.len() - 1
            }
        };
        if self.tracks[t].kind != kind {
            let track = &self.tracks[t];
            let msg = format!(
                "model `{}` mixes {} and {kind} predictions (first record at {}:{})",
                track.id, track.kind, self.files[track.first.file], track.first.line
            );
            return Err(self.parse_error(ParseErrorKind::DomainMixing, &at, msg));
        }
        let s = match self.sample_index.get(&rec.sample_id) {
            Some(&s) => s,
            None => {
                self.sample_index.insert(rec.sample_id.clone(), self.sample_ids.len());
                self.sample_ids.push(rec.sample_id.clone());
                self.sample_ids.len() - 1
            }
        };
        let draw = self.draw(rec.prediction);
        let slots = self.tracks[t].samples.entry(s).or_default();
        if slots.len() <= rec.draw_index {
            slots.resize_with(rec.draw_index + 1, || None);
        }
        if let Some((_, prev)) = &slots[rec.draw_index] {
            let msg = format!(
                "duplicate record for model `{}`, sample `{}`, draw {} (first at {}:{})",
                rec.model_id, rec.sample_id, rec.draw_index, self.files[prev.file], prev.line
            );
            return Err(self.parse_error(ParseErrorKind::DuplicateKey, &at, msg));
        }
        slots[rec.draw_index] = Some((draw, at));
        Ok(())
    }

    fn build(&self, ids: &Arc<[String]>, track: &mut Track) -> Result<PredictionSet> {
        let draw_count = track.samples.values().map(Vec::len).max().unwrap_or(1);
        let mut draws = Vec::with_capacity(ids.len() * draw_count);
        for (s, sample) in ids.iter().enumerate() {
            let Some(mut slots) = track.samples.remove(&s) else {
                return Err(CliError::Coverage {
                    model: track.id.clone(),
                    sample: sample.clone(),
                    file: self.files[track.first.file].clone(),
                });
            };
            slots.resize_with(draw_count, || None);
            let first = slots.iter().flatten().map(|(_, p)| p).min_by_key(|p| (p.file, p.line));
            let first = first.map(|p| Place { file: p.file, line: p.line }).expect("sample has a record");
            for (k, slot) in slots.into_iter().enumerate() {
                match slot {
                    Some((d, _)) => draws.push(d),
                    None => {
                        let msg = format!(
                            "model `{}`, sample `{sample}` is missing draw {k} (the model has {draw_count} draws per sample)",
                            track.id
                        );
                        return Err(self.parse_error(ParseErrorKind::MissingDraw, &first, msg));
                    }
                }
            }
        }
        let domain = match track.kind {
            DomainKind::Discrete => LabelDomain::DISCRETE,
            DomainKind::Continuous => LabelDomain::CONTINUOUS,
            DomainKind::AnswerSet => LabelDomain::ANSWER_SET,
        };
        Ok(PredictionSet::new(track.id.clone(), domain, ids.clone(), draw_count, draws)?)
    }
}

/// Parses prediction records from in-memory sources `(name, reader)`.
pub fn ingest_readers<R: BufRead>(
    sources: Vec<(String, R)>,
    norm: Normalization,
    include_humans: bool,
) -> Result<Ingested> {
    let mut reader = Reader {
        files: sources.iter().map(|(name, _)| name.clone()).collect(),
        norm,
        sample_ids: Vec::new(),
        sample_index: HashMap::new(),
        tracks: Vec::new(),
        track_index: HashMap::new(),
    };
    for (file, (name, src)) in sources.into_iter().enumerate() {
        for (k, line) in src.lines().enumerate() {
            let line_no = k + 1;
            let text = line.map_err(|e| CliError::Io { path: name.clone(), message: e.to_string() })?;
            if text.trim().is_empty() {
                continue;
            }
            let rec: PredictionRecord = serde_json::from_str(&text).map_err(|e| CliError::Parse {
                kind: ParseErrorKind::Json,
                file: name.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
            reader.add(rec, Place { file, line: line_no })?;
        }
    }
    if reader.tracks.is_empty() {
        return Err(CliError::Config("no prediction records found".into()));
    }

    let ids: Arc<[String]> = std::mem::take(&mut reader.sample_ids).into();
    let mut tracks = std::mem::take(&mut reader.tracks);
    let mut labels = None;
    let mut humans: Vec<(usize, PredictionSet)> = Vec::new();
    let mut models = Vec::new();
    for track in &mut tracks {
        let set = reader.build(&ids, track)?;
        if track.id == LABELS_MODEL_ID {
            labels = Some(set);
        } else if let Some(k) = human_index(&track.id) {
            humans.push((k, set));
        } else {
            models.push(set);
        }
    }
    humans.sort_by_key(|(k, _)| *k);
    let humans: Vec<PredictionSet> = humans.into_iter().map(|(_, s)| s).collect();
    let mut humans_in_roster = Vec::new();
    if include_humans {
        for h in &humans {
            humans_in_roster.push(h.model_id().to_owned());
            models.push(h.clone());
        }
    }
    Ok(Ingested { dataset: Dataset::new(ids, labels, humans)?, predictions: models, humans_in_roster })
}

pub fn ingest(paths: &[PathBuf], norm: Normalization, include_humans: bool) -> Result<Ingested> {
    let sources = paths
        .iter()
        .map(|p| {
            let f = File::open(p).map_err(CliError::io(p))?;
            Ok((p.display().to_string(), BufReader::new(f)))
        })
        .collect::<Result<Vec<_>>>()?;
    ingest_readers(sources, norm, include_humans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str, humans: bool) -> Result<Ingested> {
        ingest_readers(vec![("preds.jsonl".to_string(), text.as_bytes())], Normalization::default(), humans)
    }

    fn rec(model: &str, sample: &str, draw: usize, pred: &str) -> String {
        format!(r#"{{"model_id":"{model}","sample_id":"{sample}","draw_index":{draw},"prediction":{pred}}}"#)
    }

    #[test]
    fn two_model_file() {
        let text = [rec("a", "q1", 0, "\"x\""), rec("b", "q1", 0, "\"x \""), rec("a", "q2", 0, "\"y\""), rec("b", "q2", 0, "\"z\"")]
            .join("\n");
        let got = run(&text, false).unwrap();
        assert_eq!(got.predictions.len(), 2);
        assert_eq!(got.predictions[1].model_id(), "b");
        assert_eq!(got.dataset.sample_ids.len(), 2);
        assert!(got.dataset.labels.is_none());
        // Trimming makes "x " match "x".
        assert_eq!(mutcon::cons_discrete::<f64>(&got.predictions[0], &got.predictions[1]).unwrap(), 0.5);
    }

    #[test]
    fn missing_sample_names_the_sample() {
        let text = [rec("a", "q1", 0, "\"x\""), rec("a", "q2", 0, "\"y\""), rec("b", "q1", 0, "\"x\"")].join("\n");
        match run(&text, false) {
            Err(CliError::Coverage { model, sample, .. }) => assert_eq!((model.as_str(), sample.as_str()), ("b", "q2")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_keys_report_both_lines() {
        let text = [rec("a", "q1", 0, "\"x\""), rec("a", "q1", 0, "\"y\"")].join("\n");
        let err = run(&text, false).unwrap_err();
        assert_eq!(err.kind(), "duplicate_key");
        assert!(err.to_string().starts_with("preds.jsonl:2:"), "{err}");
        assert!(err.to_string().contains("preds.jsonl:1"), "{err}");
    }

    #[test]
    fn domain_mixing_is_rejected() {
        let within = [rec("a", "q1", 0, "\"x\""), rec("a", "q2", 0, "0.5")].join("\n");
        assert_eq!(run(&within, false).unwrap_err().kind(), "domain_mixing");
        let across = [rec("a", "q1", 0, "\"x\""), rec("b", "q1", 0, "[\"x\"]")].join("\n");
        assert_eq!(run(&across, false).unwrap_err().kind(), "domain_mixing");
    }

    #[test]
    fn missing_draws_are_rejected() {
        let text = [rec("a", "q1", 0, "\"x\""), rec("a", "q1", 1, "\"x\""), rec("a", "q2", 0, "\"y\"")].join("\n");
        let err = run(&text, false).unwrap_err();
        assert_eq!(err.kind(), "missing_draw");
        assert!(err.to_string().contains("q2"), "{err}");
        let gap = [rec("a", "q1", 0, "\"x\""), rec("a", "q1", 2, "\"x\"")].join("\n");
        assert_eq!(run(&gap, false).unwrap_err().kind(), "missing_draw");
    }

    #[test]
    fn malformed_json_has_line_context() {
        let text = format!("{}\n{{not json", rec("a", "q1", 0, "\"x\""));
        let err = run(&text, false).unwrap_err();
        assert_eq!(err.kind(), "json");
        assert_eq!(err.to_json()["error"]["line"], 2);
    }

    #[test]
    fn labels_and_humans_are_routed() {
        let mut lines = Vec::new();
        for s in ["q1", "q2"] {
            lines.push(rec("__labels__", s, 0, "\"t\""));
            lines.push(rec("m1", s, 0, "\"t\""));
            lines.push(rec("m2", s, 0, "\"f\""));
            lines.push(rec("__human_0__", s, 0, "\"t\""));
        }
        let text = lines.join("\n");
        let without = run(&text, false).unwrap();
        assert_eq!(without.predictions.len(), 2);
        assert_eq!(without.dataset.human_annotations.len(), 1);
        assert!(without.dataset.labels.is_some());
        let with = run(&text, true).unwrap();
        let roster: Vec<&str> = with.predictions.iter().map(|p| p.model_id()).collect();
        assert_eq!(roster, ["m1", "m2", "__human_0__"]);
        assert_eq!(with.humans_in_roster, ["__human_0__"]);
    }
}
