//! File formats: RTTM speaker segments, change-point lists and frame-score
//! files, plus the conversion of a diarization into change points.
//!
//! Readers reject malformed input with the offending line number instead of
//! repairing it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{ChangePointTimes, FrameScoreSequence};

/// Speaker segments are compared at nanosecond resolution when checking for
/// overlap.
const TIME_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerSegment {
    pub start: f64,
    pub end: f64,
    pub speaker: String,
}

impl SpeakerSegment {
    pub fn new(start: f64, end: f64, speaker: impl Into<String>) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && 0.0 <= start && start < end) {
            return Err(Error::InvalidInput(format!(
                "segment [{start}, {end}) must satisfy 0 <= start < end"
            )));
        }
        Ok(Self {
            start,
            end,
            speaker: speaker.into(),
        })
    }
}

// ---------------------------------------------------------------------------
// RTTM
// ---------------------------------------------------------------------------

/// Parses the SPEAKER records of an RTTM document, grouped by file id in the
/// order they appear. Other record types are ignored.
pub fn parse_rttm(text: &str) -> Result<BTreeMap<String, Vec<SpeakerSegment>>> {
    let mut out: BTreeMap<String, Vec<SpeakerSegment>> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&"SPEAKER") {
            continue;
        }
        if fields.len() < 8 {
            return Err(Error::parse(
                lineno,
                format!("SPEAKER record has {} fields, expected at least 8", fields.len()),
            ));
        }
        let onset = parse_f64(fields[3], lineno, "onset")?;
        let duration = parse_f64(fields[4], lineno, "duration")?;
        if onset < 0.0 {
            return Err(Error::parse(lineno, format!("negative onset {onset}")));
        }
        if duration <= 0.0 {
            return Err(Error::parse(
                lineno,
                format!("duration must be positive, got {duration}"),
            ));
        }
        let segment = SpeakerSegment::new(onset, onset + duration, fields[7])
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
        out.entry(fields[1].to_string()).or_default().push(segment);
    }
    Ok(out)
}

pub fn read_rttm(path: &Path) -> Result<BTreeMap<String, Vec<SpeakerSegment>>> {
    parse_rttm(&fs::read_to_string(path)?)
}

/// Change points implied by a linear diarization: for consecutive segments
/// with different speakers separated by less than `max_gap` seconds, a
/// change is placed at the start of the second segment.
pub fn diarization_to_changepoints(
    segments: &[SpeakerSegment],
    max_gap: f64,
) -> Result<ChangePointTimes> {
    let mut out = Vec::new();
    for (k, pair) in segments.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if b.start < a.start {
            return Err(Error::InvalidInput(format!(
                "segments {k} and {} are not sorted by start time",
                k + 1
            )));
        }
        if b.start < a.end - TIME_EPSILON {
            return Err(Error::InvalidInput(format!(
                "segments {k} [{}, {}) and {} [{}, {}) overlap",
                a.start,
                a.end,
                k + 1,
                b.start,
                b.end
            )));
        }
        if a.speaker != b.speaker && b.start - a.end < max_gap {
            out.push(b.start);
        }
    }
    ChangePointTimes::new(out)
}

// ---------------------------------------------------------------------------
// Change-point lists
// ---------------------------------------------------------------------------

/// One timestamp in seconds per line, strictly increasing.
pub fn parse_changepoints(text: &str) -> Result<ChangePointTimes> {
    let mut times: Vec<f64> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let t = parse_f64(line.trim(), lineno, "timestamp")?;
        if t < 0.0 {
            return Err(Error::parse(lineno, format!("negative timestamp {t}")));
        }
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(Error::parse(
                    lineno,
                    format!("timestamp {t} does not increase over {prev}"),
                ));
            }
        }
        times.push(t);
    }
    ChangePointTimes::new(times)
}

pub fn read_changepoints(path: &Path) -> Result<ChangePointTimes> {
    parse_changepoints(&fs::read_to_string(path)?)
}

/// Writes timestamps with three decimals. Fails if two of them become equal
/// at that precision.
pub fn write_changepoints<W: Write>(mut out: W, times: &ChangePointTimes) -> Result<()> {
    let mut prev: Option<String> = None;
    for &t in times.as_slice() {
        let s = format!("{t:.3}");
        if prev.as_deref() == Some(s.as_str()) {
            return Err(Error::InvalidInput(format!(
                "change points collapse to {s} at millisecond precision"
            )));
        }
        writeln!(out, "{s}")?;
        prev = Some(s);
    }
    Ok(())
}

pub fn save_changepoints(path: &Path, times: &ChangePointTimes) -> Result<()> {
    let mut buf = Vec::new();
    write_changepoints(&mut buf, times)?;
    fs::write(path, buf)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Frame scores
// ---------------------------------------------------------------------------

/// Parses a `frame_shift=<seconds>` header line.
pub fn parse_frame_shift_header(line: &str, lineno: usize) -> Result<f64> {
    let value = line
        .trim()
        .strip_prefix("frame_shift=")
        .ok_or_else(|| Error::parse(lineno, "missing `frame_shift=<seconds>` header"))?;
    let shift = parse_f64(value, lineno, "frame shift")?;
    if shift <= 0.0 {
        return Err(Error::parse(lineno, format!("frame shift {shift} must be positive")));
    }
    Ok(shift)
}

/// Parses one boundary probability line.
pub fn parse_probability(line: &str, lineno: usize) -> Result<f64> {
    let p = parse_f64(line.trim(), lineno, "probability")?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::parse(lineno, format!("probability {p} outside [0, 1]")));
    }
    Ok(p)
}

/// A header line followed by one boundary probability per line.
pub fn parse_frame_scores(text: &str) -> Result<FrameScoreSequence> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing `frame_shift=<seconds>` header"))?;
    let shift = parse_frame_shift_header(header, 1)?;
    let probs = lines
        .enumerate()
        .map(|(idx, line)| parse_probability(line, idx + 2))
        .collect::<Result<Vec<_>>>()?;
    if probs.is_empty() {
        return Err(Error::parse(2, "no frames after the header"));
    }
    FrameScoreSequence::from_probabilities(&probs, shift)
}

pub fn read_frame_scores(path: &Path) -> Result<FrameScoreSequence> {
    parse_frame_scores(&fs::read_to_string(path)?)
}

/// Writes the boundary probability of every frame in shortest round-trip
/// form.
pub fn write_frame_scores<W: Write>(mut out: W, scores: &FrameScoreSequence) -> Result<()> {
    writeln!(out, "frame_shift={}", scores.frame_shift())?;
    for p in scores.boundary_probs() {
        writeln!(out, "{p}")?;
    }
    Ok(())
}

pub fn save_frame_scores(path: &Path, scores: &FrameScoreSequence) -> Result<()> {
    let mut buf = Vec::new();
    write_frame_scores(&mut buf, scores)?;
    fs::write(path, buf)?;
    Ok(())
}

fn parse_f64(field: &str, lineno: usize, what: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::parse(lineno, format!("invalid {what} `{field}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: f64, end: f64, spk: &str) -> SpeakerSegment {
        SpeakerSegment::new(start, end, spk).unwrap()
    }

    #[test]
    fn rttm_speaker_line() {
        let parsed = parse_rttm("SPEAKER rec1 1 0.00 5.00 <NA> <NA> A <NA> <NA>\n").unwrap();
        assert_eq!(parsed["rec1"], vec![seg(0.0, 5.0, "A")]);
    }

    #[test]
    fn rttm_empty_and_other_records() {
        assert!(parse_rttm("").unwrap().is_empty());
        let text = "SPKR-INFO rec1 1 <NA> <NA> <NA> unknown A <NA> <NA>\n\
                    SPEAKER rec1 1 1.5 2.0 <NA> <NA> B <NA> <NA>\n\
                    SPEAKER rec2 1 0.0 1.0 <NA> <NA> A <NA> <NA>\n";
        let parsed = parse_rttm(text).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed["rec1"], vec![seg(1.5, 3.5, "B")]);
    }

    #[test]
    fn rttm_errors_carry_line_numbers() {
        let err = parse_rttm("\nSPEAKER rec1 1 0.00 -1.00 <NA> <NA> A <NA> <NA>\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_rttm("SPEAKER rec1 1 zero 1.0 <NA> <NA> A\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_rttm("SPEAKER rec1 1 0.0 1.0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn conversion_rule() {
        let close = [seg(0.0, 5.0, "A"), seg(5.5, 9.0, "B")];
        assert_eq!(diarization_to_changepoints(&close, 2.0).unwrap().as_slice(), &[5.5]);
        let far = [seg(0.0, 5.0, "A"), seg(8.0, 9.0, "B")];
        assert!(diarization_to_changepoints(&far, 2.0).unwrap().is_empty());
        let same = [seg(0.0, 5.0, "A"), seg(5.5, 9.0, "A")];
        assert!(diarization_to_changepoints(&same, 2.0).unwrap().is_empty());
    }

    #[test]
    fn conversion_edge_cases() {
        let exact = [seg(0.0, 5.0, "A"), seg(7.0, 9.0, "B")];
        assert!(diarization_to_changepoints(&exact, 2.0).unwrap().is_empty());
        let touching = [seg(0.0, 5.0, "A"), seg(5.0, 6.0, "B"), seg(6.0, 7.0, "A")];
        assert_eq!(
            diarization_to_changepoints(&touching, 2.0).unwrap().as_slice(),
            &[5.0, 6.0]
        );
        let overlap = [seg(0.0, 5.0, "A"), seg(4.0, 6.0, "B")];
        assert!(diarization_to_changepoints(&overlap, 2.0).is_err());
        let unsorted = [seg(4.0, 5.0, "A"), seg(0.0, 1.0, "B")];
        assert!(diarization_to_changepoints(&unsorted, 2.0).is_err());
        assert!(diarization_to_changepoints(&[], 2.0).unwrap().is_empty());
    }

    #[test]
    fn changepoint_files() {
        let times = ChangePointTimes::new(vec![0.5, 1.25, 10.0]).unwrap();
        let mut buf = Vec::new();
        write_changepoints(&mut buf, &times).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "0.500\n1.250\n10.000\n");
        assert_eq!(parse_changepoints(&text).unwrap(), times);
        assert!(parse_changepoints("").unwrap().is_empty());
        assert!(matches!(
            parse_changepoints("1.000\n0.500"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_changepoints("1.0\nabc\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn changepoints_collapsing_at_write_precision() {
        let times = ChangePointTimes::new(vec![1.0001, 1.0002]).unwrap();
        assert!(write_changepoints(Vec::new(), &times).is_err());
    }

    #[test]
    fn frame_score_files() {
        let s = parse_frame_scores("frame_shift=0.08\n0.1\n0.9\n").unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.frame_shift(), 0.08);
        assert!(matches!(
            parse_frame_scores("frame_shift=0.08\n0.1\n1.5\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(matches!(
            parse_frame_scores("0.1\n0.2\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_frame_scores("frame_shift=0.08\n").is_err());
    }

    #[test]
    fn frame_score_half_roundtrips_exactly() {
        let s = parse_frame_scores("frame_shift=0.01\n0.5\n").unwrap();
        let mut buf = Vec::new();
        write_frame_scores(&mut buf, &s).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "frame_shift=0.01\n0.5\n");
    }
}
