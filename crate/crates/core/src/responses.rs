//! Response records and the export CSV shared by the service, the simulator
//! and the analysis.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::design::{Design, QuestionKind, TripletQuestion};
use crate::error::{Error, Result};
use crate::stimulus::Protocol;

/// Column order of the export CSV.
pub const EXPORT_COLUMNS: [&str; 14] = [
    "question_id",
    "worker_id",
    "batch_id",
    "protocol",
    "kind",
    "source_id",
    "left_codec",
    "left_level",
    "right_codec",
    "right_level",
    "answer",
    "response_time_ms",
    "toggled_count",
    "submitted_at",
];

/// Which side the observer judged more impaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Left,
    Right,
    NotSure,
}

impl Answer {
    pub const ALL: [Answer; 3] = [Answer::Left, Answer::Right, Answer::NotSure];

    pub fn as_str(self) -> &'static str {
        match self {
            Answer::Left => "left",
            Answer::Right => "right",
            Answer::NotSure => "not_sure",
        }
    }

    /// Same answer with the sides swapped.
    pub fn mirrored(self) -> Answer {
        match self {
            Answer::Left => Answer::Right,
            Answer::Right => Answer::Left,
            Answer::NotSure => Answer::NotSure,
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One worker's answer to one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question_id: String,
    pub worker_id: String,
    pub batch_id: String,
    pub answer: Answer,
    pub response_time_ms: u64,
    pub toggled_count: u32,
    pub submitted_at: DateTime<Utc>,
}

impl ResponseRecord {
    /// Join with the design question to produce an export row.
    pub fn to_row(&self, q: &TripletQuestion) -> ResponseRow {
        ResponseRow {
            question_id: self.question_id.clone(),
            worker_id: self.worker_id.clone(),
            batch_id: self.batch_id.clone(),
            protocol: q.protocol,
            kind: q.kind,
            source_id: q.source_id.clone(),
            left_codec: q.left.codec_id.clone(),
            left_level: q.left.level,
            right_codec: q.right.codec_id.clone(),
            right_level: q.right.level,
            answer: self.answer,
            response_time_ms: self.response_time_ms,
            toggled_count: self.toggled_count,
            submitted_at: self.submitted_at.to_rfc3339_opts(SecondsFormat::Millis, true),
        }
    }
}

/// One row of the export CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub question_id: String,
    pub worker_id: String,
    pub batch_id: String,
    pub protocol: Protocol,
    pub kind: QuestionKind,
    pub source_id: String,
    pub left_codec: String,
    pub left_level: u8,
    pub right_codec: String,
    pub right_level: u8,
    pub answer: Answer,
    pub response_time_ms: u64,
    pub toggled_count: u32,
    pub submitted_at: String,
}

/// Write rows sorted by (worker_id, submitted_at, question_id).
pub fn write_csv<W: Write>(w: W, rows: &[ResponseRow]) -> Result<()> {
    let mut sorted: Vec<&ResponseRow> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.worker_id, &a.submitted_at, &a.question_id).cmp(&(&b.worker_id, &b.submitted_at, &b.question_id))
    });
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(EXPORT_COLUMNS)?;
    for row in sorted {
        wr.serialize(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResponseRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if headers.iter().ne(EXPORT_COLUMNS.iter().copied()) {
        return Err(Error::invalid(format!("unexpected response columns: {headers:?}")));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Lookup from question id to its design question and batch.
#[derive(Debug, Default)]
pub struct QuestionIndex<'a> {
    map: HashMap<&'a str, (&'a TripletQuestion, &'a str)>,
}

impl<'a> QuestionIndex<'a> {
    pub fn new(designs: impl IntoIterator<Item = &'a Design>) -> Self {
        let mut map = HashMap::new();
        for d in designs {
            for b in &d.batches {
                for q in &b.questions {
                    map.insert(q.question_id.as_str(), (q, b.batch_id.as_str()));
                }
            }
        }
        QuestionIndex { map }
    }

    pub fn get(&self, question_id: &str) -> Option<(&'a TripletQuestion, &'a str)> {
        self.map.get(question_id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Resolve every row against the design, checking that the row's copy of
    /// the design fields agrees.
    pub fn join(&self, rows: &'a [ResponseRow]) -> Result<Vec<Response<'a>>> {
        rows.iter()
            .map(|row| {
                let (q, batch) = self
                    .get(&row.question_id)
                    .ok_or_else(|| Error::invalid(format!("response to unknown question {}", row.question_id)))?;
                let agrees = q.protocol == row.protocol
                    && q.kind == row.kind
                    && q.source_id == row.source_id
                    && q.left.codec_id == row.left_codec
                    && q.left.level == row.left_level
                    && q.right.codec_id == row.right_codec
                    && q.right.level == row.right_level
                    && batch == row.batch_id;
                if !agrees {
                    return Err(Error::invalid(format!(
                        "response row for {} disagrees with the design",
                        row.question_id
                    )));
                }
                Ok(Response {
                    question: q,
                    worker_id: row.worker_id.as_str(),
                    batch_id: batch,
                    answer: row.answer,
                })
            })
            .collect()
    }
}

/// A response resolved against its design question.
#[derive(Debug, Clone, Copy)]
pub struct Response<'a> {
    pub question: &'a TripletQuestion,
    pub worker_id: &'a str,
    pub batch_id: &'a str,
    pub answer: Answer,
}
