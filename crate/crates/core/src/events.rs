//! Marked event sequences, context/horizon windows and the JSONL dataset
//! format.
//!
//! A dataset file starts with a header line declaring the mark vocabulary,
//! followed by one sequence per line:
//!
//! ```text
//! {"meta":{"vocab_size":3}}
//! {"dts":[0.5,1.2],"marks":[0,2]}
//! {"ts":[0.5,1.7],"marks":[0,2]}
//! ```
//!
//! `dts` holds inter-event times; `ts` holds absolute timestamps, converted on
//! load with the convention that the sequence starts at time 0.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("timestamps must be strictly increasing from 0: index {index} has {value} after {previous}")]
    NonIncreasing {
        index: usize,
        previous: f64,
        value: f64,
    },
    #[error("inter-event time at index {index} must be positive and finite, got {value}")]
    NonPositiveTime { index: usize, value: f64 },
    #[error("mark {mark} at index {index} is outside the vocabulary [0, {vocab_size})")]
    MarkOutOfRange {
        index: usize,
        mark: i64,
        vocab_size: usize,
    },
    #[error("{times} inter-event times but {marks} marks")]
    LengthMismatch { times: usize, marks: usize },
    #[error("vocabulary size must be at least 1")]
    EmptyVocabulary,
    #[error("window context must hold at least one event")]
    EmptyContext,
    #[error("window target has {actual} events, horizon is {horizon}")]
    HorizonMismatch { actual: usize, horizon: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("dataset declares vocab_size {declared} but {expected} was expected")]
    VocabMismatch { declared: usize, expected: usize },
    #[error("dataset has no meta header and no vocabulary size was supplied")]
    MissingVocabulary,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered `(inter-event time, mark)` pairs over a vocabulary of
/// `vocab_size` marks.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSequence {
    inter_times: Vec<f64>,
    marks: Vec<usize>,
    vocab_size: usize,
}

impl EventSequence {
    pub fn new(
        inter_times: Vec<f64>,
        marks: Vec<usize>,
        vocab_size: usize,
    ) -> Result<Self, EventError> {
        if vocab_size == 0 {
            return Err(EventError::EmptyVocabulary);
        }
        if inter_times.len() != marks.len() {
            return Err(EventError::LengthMismatch {
                times: inter_times.len(),
                marks: marks.len(),
            });
        }
        for (index, &value) in inter_times.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(EventError::NonPositiveTime { index, value });
            }
        }
        for (index, &mark) in marks.iter().enumerate() {
            if mark >= vocab_size {
                return Err(EventError::MarkOutOfRange {
                    index,
                    mark: mark as i64,
                    vocab_size,
                });
            }
        }
        Ok(Self {
            inter_times,
            marks,
            vocab_size,
        })
    }

    /// Builds a sequence from absolute timestamps (first event measured from 0).
    pub fn from_timestamps(
        timestamps: &[f64],
        marks: Vec<usize>,
        vocab_size: usize,
    ) -> Result<Self, EventError> {
        Self::new(to_inter_event(timestamps)?, marks, vocab_size)
    }

    pub fn empty(vocab_size: usize) -> Result<Self, EventError> {
        Self::new(Vec::new(), Vec::new(), vocab_size)
    }

    pub fn inter_times(&self) -> &[f64] {
        &self.inter_times
    }

    pub fn marks(&self) -> &[usize] {
        &self.marks
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Absolute arrival times, accumulated from 0.
    pub fn arrival_times(&self) -> Vec<f64> {
        self.inter_times
            .iter()
            .scan(0.0, |acc, &dt| {
                *acc += dt;
                Some(*acc)
            })
            .collect()
    }

    /// Events `[start, end)` as a new sequence.
    pub fn slice(&self, start: usize, end: usize) -> EventSequence {
        EventSequence {
            inter_times: self.inter_times[start..end].to_vec(),
            marks: self.marks[start..end].to_vec(),
            vocab_size: self.vocab_size,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.inter_times
            .iter()
            .copied()
            .zip(self.marks.iter().copied())
    }
}

/// Differences of ascending timestamps with `t_0 = 0`.
pub fn to_inter_event(timestamps: &[f64]) -> Result<Vec<f64>, EventError> {
    let mut previous = 0.0;
    let mut out = Vec::with_capacity(timestamps.len());
    for (index, &value) in timestamps.iter().enumerate() {
        if !(value.is_finite() && value > previous) {
            return Err(EventError::NonIncreasing {
                index,
                previous,
                value,
            });
        }
        out.push(value - previous);
        previous = value;
    }
    Ok(out)
}

/// Observed prefix and the fixed-length suffix to forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    context: EventSequence,
    target: EventSequence,
}

impl ForecastWindow {
    pub fn new(
        context: EventSequence,
        target: EventSequence,
        horizon: usize,
    ) -> Result<Self, EventError> {
        if context.is_empty() {
            return Err(EventError::EmptyContext);
        }
        if target.len() != horizon {
            return Err(EventError::HorizonMismatch {
                actual: target.len(),
                horizon,
            });
        }
        if context.vocab_size() != target.vocab_size() {
            return Err(EventError::VocabMismatch {
                declared: target.vocab_size(),
                expected: context.vocab_size(),
            });
        }
        Ok(Self { context, target })
    }

    pub fn context(&self) -> &EventSequence {
        &self.context
    }

    pub fn target(&self) -> &EventSequence {
        &self.target
    }

    pub fn horizon(&self) -> usize {
        self.target.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.context.vocab_size()
    }
}

/// Splits off the last `horizon` events as the target. Returns `None` (with a
/// warning) when no context would remain.
pub fn split_window(seq: &EventSequence, horizon: usize) -> Option<ForecastWindow> {
    if seq.len() <= horizon {
        warn!(
            "skipping sequence of length {} (horizon {} leaves no context)",
            seq.len(),
            horizon
        );
        return None;
    }
    let cut = seq.len() - horizon;
    Some(ForecastWindow {
        context: seq.slice(0, cut),
        target: seq.slice(cut, seq.len()),
    })
}

/// Windows for every sequence long enough, in input order.
pub fn make_windows(seqs: &[EventSequence], horizon: usize) -> Vec<ForecastWindow> {
    seqs.iter()
        .filter_map(|s| split_window(s, horizon))
        .collect()
}

/// Header line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub vocab_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    /// Any further provenance fields, kept verbatim.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl DatasetMeta {
    pub fn new(vocab_size: usize, seed: Option<u64>) -> Self {
        Self {
            vocab_size,
            seed,
            version: Some(crate::FORMAT_VERSION),
            extra: serde_json::Map::new(),
        }
    }
}

/// A line that parsed as JSON but failed validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub sequences: Vec<EventSequence>,
    pub rejected: Vec<Rejection>,
}

impl Dataset {
    pub fn vocab_size(&self) -> usize {
        self.meta.vocab_size
    }
}

#[derive(Deserialize)]
struct HeaderLine {
    meta: DatasetMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    #[serde(default)]
    dts: Option<Vec<f64>>,
    #[serde(default)]
    ts: Option<Vec<f64>>,
    marks: Vec<i64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    dts: &'a [f64],
    marks: &'a [usize],
}

fn record_to_sequence(rec: RecordLine, vocab_size: usize) -> Result<EventSequence, EventError> {
    let dts = match (rec.dts, rec.ts) {
        (Some(dts), None) => dts,
        (None, Some(ts)) => to_inter_event(&ts)?,
        _ => {
            return Err(EventError::Malformed {
                line: 0,
                message: "record needs exactly one of `dts` or `ts`".into(),
            })
        }
    };
    let mut marks = Vec::with_capacity(rec.marks.len());
    for (index, &mark) in rec.marks.iter().enumerate() {
        if mark < 0 || mark as u64 >= vocab_size as u64 {
            return Err(EventError::MarkOutOfRange {
                index,
                mark,
                vocab_size,
            });
        }
        marks.push(mark as usize);
    }
    EventSequence::new(dts, marks, vocab_size)
}

/// Parses a dataset from any buffered reader. See [`load_jsonl`].
pub fn read_jsonl<R: BufRead>(
    reader: R,
    expected_vocab: Option<usize>,
) -> Result<Dataset, EventError> {
    let mut meta: Option<DatasetMeta> = None;
    let mut sequences = Vec::new();
    let mut rejected = Vec::new();
    let mut seen_record = false;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(trimmed).map_err(|e| EventError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        if value.get("meta").is_some() {
            if seen_record || meta.is_some() {
                return Err(EventError::Malformed {
                    line: line_no,
                    message: "meta header must be the first line".into(),
                });
            }
            let header: HeaderLine =
                serde_json::from_value(value).map_err(|e| EventError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if header.meta.vocab_size == 0 {
                return Err(EventError::EmptyVocabulary);
            }
            if let Some(expected) = expected_vocab {
                if expected != header.meta.vocab_size {
                    return Err(EventError::VocabMismatch {
                        declared: header.meta.vocab_size,
                        expected,
                    });
                }
            }
            meta = Some(header.meta);
            continue;
        }

        seen_record = true;
        let vocab_size = match (&meta, expected_vocab) {
            (Some(m), _) => m.vocab_size,
            (None, Some(v)) => {
                meta = Some(DatasetMeta::new(v, None));
                v
            }
            (None, None) => return Err(EventError::MissingVocabulary),
        };
        let record: RecordLine =
            serde_json::from_value(value).map_err(|e| EventError::Malformed {
                line: line_no,
                message: e.to_string(),
            })?;
        match record_to_sequence(record, vocab_size) {
            Ok(seq) => sequences.push(seq),
            Err(EventError::Malformed { message, .. }) => {
                return Err(EventError::Malformed {
                    line: line_no,
                    message,
                })
            }
            Err(e) => {
                warn!("line {line_no}: rejected: {e}");
                rejected.push(Rejection {
                    line: line_no,
                    reason: e.to_string(),
                });
            }
        }
    }

    let meta = match (meta, expected_vocab) {
        (Some(m), _) => m,
        (None, Some(v)) => DatasetMeta::new(v, None),
        (None, None) => return Err(EventError::MissingVocabulary),
    };
    Ok(Dataset {
        meta,
        sequences,
        rejected,
    })
}

/// Loads and validates a JSONL dataset.
///
/// Lines whose marks or times fail validation are skipped and listed in
/// [`Dataset::rejected`]; lines that are not valid JSON records abort with the
/// line number. An empty file yields an empty dataset when `expected_vocab` is
/// given.
pub fn load_jsonl(path: impl AsRef<Path>, expected_vocab: Option<usize>) -> Result<Dataset, EventError> {
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file), expected_vocab)
}

pub fn write_jsonl_to<W: Write>(
    mut w: W,
    meta: &DatasetMeta,
    sequences: &[EventSequence],
) -> std::io::Result<()> {
    let header = serde_json::json!({ "meta": meta });
    writeln!(w, "{}", header)?;
    for seq in sequences {
        let line = serde_json::to_string(&RecordOut {
            dts: seq.inter_times(),
            marks: seq.marks(),
        })?;
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_jsonl(
    path: impl AsRef<Path>,
    meta: &DatasetMeta,
    sequences: &[EventSequence],
) -> std::io::Result<()> {
    let file = File::create(path)?;
    write_jsonl_to(BufWriter::new(file), meta, sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(dts: &[f64], marks: &[usize], m: usize) -> EventSequence {
        EventSequence::new(dts.to_vec(), marks.to_vec(), m).unwrap()
    }

    #[test]
    fn inter_event_differences() {
        assert_eq!(to_inter_event(&[1.0, 3.0, 3.5]).unwrap(), vec![1.0, 2.0, 0.5]);
        assert_eq!(to_inter_event(&[5.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn tied_timestamps_name_the_index() {
        match to_inter_event(&[1.0, 1.0]) {
            Err(EventError::NonIncreasing { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected NonIncreasing, got {other:?}"),
        }
        assert!(to_inter_event(&[0.0]).is_err());
    }

    #[test]
    fn zero_inter_time_rejected() {
        assert!(matches!(
            EventSequence::new(vec![1.0, 0.0], vec![0, 0], 1),
            Err(EventError::NonPositiveTime { index: 1, .. })
        ));
    }

    #[test]
    fn split_shapes() {
        let s = seq(&[1.0; 30], &[0; 30], 1);
        let w = split_window(&s, 20).unwrap();
        assert_eq!(w.context().len(), 10);
        assert_eq!(w.target().len(), 20);

        let s = seq(&[1.0; 21], &[0; 21], 1);
        let w = split_window(&s, 20).unwrap();
        assert_eq!(w.context().len(), 1);
        assert_eq!(w.target().len(), 20);

        let s = seq(&[1.0; 20], &[0; 20], 1);
        assert!(split_window(&s, 20).is_none());
    }

    #[test]
    fn parse_direct_line() {
        let text = "{\"meta\":{\"vocab_size\":3}}\n{\"dts\":[0.5,1.2],\"marks\":[0,2]}\n";
        let ds = read_jsonl(text.as_bytes(), Some(3)).unwrap();
        assert_eq!(ds.sequences, vec![seq(&[0.5, 1.2], &[0, 2], 3)]);
        assert!(ds.rejected.is_empty());
    }

    #[test]
    fn out_of_range_mark_is_rejected_per_line() {
        let text = "{\"meta\":{\"vocab_size\":3}}\n{\"dts\":[0.5],\"marks\":[5]}\n{\"dts\":[0.5],\"marks\":[1]}\n";
        let ds = read_jsonl(text.as_bytes(), None).unwrap();
        assert_eq!(ds.sequences.len(), 1);
        assert_eq!(ds.rejected.len(), 1);
        assert_eq!(ds.rejected[0].line, 2);
    }

    #[test]
    fn two_valid_lines() {
        let text = "{\"meta\":{\"vocab_size\":2}}\n{\"dts\":[0.5],\"marks\":[0]}\n\n{\"ts\":[0.5,2.0],\"marks\":[1,1]}\n";
        let ds = read_jsonl(text.as_bytes(), None).unwrap();
        assert_eq!(ds.sequences.len(), 2);
        assert_eq!(ds.sequences[1].inter_times(), &[0.5, 1.5]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"meta\":{\"vocab_size\":2}}\n{\"dts\":[0.5],\"marks\":[0]}\n{not json\n";
        match read_jsonl(text.as_bytes(), None) {
            Err(EventError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected Malformed, got {other:?}"),
        }
        let text = "{\"meta\":{\"vocab_size\":2}}\n{\"dts\":[0.5],\"ts\":[0.5],\"marks\":[0]}\n";
        assert!(matches!(
            read_jsonl(text.as_bytes(), None),
            Err(EventError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let ds = read_jsonl("".as_bytes(), Some(4)).unwrap();
        assert!(ds.sequences.is_empty());
        assert_eq!(ds.vocab_size(), 4);
    }

    #[test]
    fn vocab_must_be_declared_and_consistent() {
        let text = "{\"dts\":[0.5],\"marks\":[0]}\n";
        assert!(matches!(
            read_jsonl(text.as_bytes(), None),
            Err(EventError::MissingVocabulary)
        ));
        let text = "{\"meta\":{\"vocab_size\":2}}\n";
        assert!(matches!(
            read_jsonl(text.as_bytes(), Some(3)),
            Err(EventError::VocabMismatch { .. })
        ));
    }

    #[test]
    fn write_then_read() {
        let seqs = vec![seq(&[0.25, 1.0 / 3.0], &[1, 0], 2), seq(&[7.5], &[1], 2)];
        let mut buf = Vec::new();
        write_jsonl_to(&mut buf, &DatasetMeta::new(2, Some(9)), &seqs).unwrap();
        let ds = read_jsonl(buf.as_slice(), Some(2)).unwrap();
        assert_eq!(ds.sequences, seqs);
        assert_eq!(ds.meta.seed, Some(9));
        assert_eq!(ds.meta.version, Some(crate::FORMAT_VERSION));
    }

    proptest! {
        #[test]
        fn cumsum_inverts_differencing(gaps in prop::collection::vec(1e-3f64..1e3, 1..50)) {
            let ts: Vec<f64> = gaps.iter().scan(0.0, |a, g| { *a += g; Some(*a) }).collect();
            let dts = to_inter_event(&ts).unwrap();
            let s = EventSequence::new(dts, vec![0; ts.len()], 1).unwrap();
            for (a, b) in s.arrival_times().iter().zip(&ts) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs());
            }
        }

        #[test]
        fn window_concat_is_identity(
            events in prop::collection::vec((1e-3f64..10.0, 0usize..4), 2..40),
            horizon in 1usize..30,
        ) {
            let (dts, marks): (Vec<f64>, Vec<usize>) = events.into_iter().unzip();
            let s = EventSequence::new(dts, marks, 4).unwrap();
            match split_window(&s, horizon) {
                None => prop_assert!(s.len() <= horizon),
                Some(w) => {
                    let mut dts = w.context().inter_times().to_vec();
                    dts.extend_from_slice(w.target().inter_times());
                    let mut marks = w.context().marks().to_vec();
                    marks.extend_from_slice(w.target().marks());
                    prop_assert_eq!(dts.as_slice(), s.inter_times());
                    prop_assert_eq!(marks.as_slice(), s.marks());
                }
            }
        }
    }
}
