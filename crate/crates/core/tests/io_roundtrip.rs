use proptest::prelude::*;
use scd_core::io::{
    diarization_to_changepoints, parse_changepoints, parse_frame_scores, parse_rttm,
    read_changepoints, read_frame_scores, save_changepoints, save_frame_scores, write_changepoints,
    write_frame_scores, SpeakerSegment,
};
use scd_core::{ChangePointTimes, Error, FrameScoreSequence};

fn millis(v: Vec<u32>) -> ChangePointTimes {
    let mut v: Vec<u32> = v;
    v.sort_unstable();
    v.dedup();
    ChangePointTimes::new(v.into_iter().map(|m| m as f64 / 1000.0).collect()).unwrap()
}

proptest! {
    #[test]
    fn changepoints_roundtrip(raw in prop::collection::vec(0u32..10_000_000, 0..50)) {
        let times = millis(raw);
        let mut buf = Vec::new();
        write_changepoints(&mut buf, &times).unwrap();
        let back = parse_changepoints(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, times);
    }

    #[test]
    fn frame_scores_roundtrip(
        probs in prop::collection::vec(0.0f64..=1.0, 1..200),
        shift in prop::sample::select(vec![0.01, 0.02, 0.08, 0.1]),
    ) {
        let scores = FrameScoreSequence::from_probabilities(&probs, shift).unwrap();
        let mut buf = Vec::new();
        write_frame_scores(&mut buf, &scores).unwrap();
        let back = parse_frame_scores(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back.frame_shift(), shift);
        prop_assert_eq!(back.len(), probs.len());
        for (a, b) in back.boundary_probs().iter().zip(scores.boundary_probs()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn rttm_conversion_emits_subset_of_starts(
        durs in prop::collection::vec((1u32..5000, 0u32..3000, 0u8..3), 1..30),
        max_gap in 0.0f64..4.0,
    ) {
        let mut t = 0u32;
        let mut segments = Vec::new();
        let mut text = String::new();
        for (dur, gap, spk) in durs {
            t += gap;
            let start = t as f64 / 1000.0;
            let d = dur as f64 / 1000.0;
            text.push_str(&format!("SPEAKER rec 1 {start} {d} <NA> <NA> spk{spk} <NA> <NA>\n"));
            segments.push(SpeakerSegment::new(start, start + d, format!("spk{spk}")).unwrap());
            t += dur;
        }
        let parsed = parse_rttm(&text).unwrap();
        let segs = &parsed["rec"];
        prop_assert_eq!(segs.len(), segments.len());
        let cps = diarization_to_changepoints(segs, max_gap).unwrap();
        for (k, pair) in segs.windows(2).enumerate() {
            let expected = pair[0].speaker != pair[1].speaker && pair[1].start - pair[0].end < max_gap;
            prop_assert_eq!(cps.as_slice().contains(&segs[k + 1].start), expected);
        }
    }
}

#[test]
fn file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let times = ChangePointTimes::new(vec![0.5, 1.25, 7.0]).unwrap();
    let path = dir.path().join("cps.txt");
    save_changepoints(&path, &times).unwrap();
    assert_eq!(read_changepoints(&path).unwrap(), times);

    let scores = FrameScoreSequence::from_probabilities(&[0.1, 0.9, 0.25], 0.08).unwrap();
    let path = dir.path().join("scores.txt");
    save_frame_scores(&path, &scores).unwrap();
    let back = read_frame_scores(&path).unwrap();
    assert_eq!(back.len(), 3);
    assert!(matches!(
        read_changepoints(&dir.path().join("missing.txt")),
        Err(Error::Io(_))
    ));
}

#[test]
fn malformed_inputs_report_line_numbers() {
    assert!(matches!(parse_changepoints("1.0\nabc\n"), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_changepoints("2.0\n1.0\n"), Err(Error::Parse { line: 2, .. })));
    assert!(matches!(parse_frame_scores("0.5\n"), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(
        parse_frame_scores("frame_shift=0.01\n0.2\n1.5\n"),
        Err(Error::Parse { line: 3, .. })
    ));
    assert!(matches!(
        parse_rttm("SPEAKER f 1 0.0 -1 <NA> <NA> a <NA> <NA>\n"),
        Err(Error::Parse { line: 1, .. })
    ));
}
