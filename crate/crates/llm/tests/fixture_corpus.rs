//! Every reply in the fixture corpus either parses or lands on the retry
//! path, as labelled, and none of them panics a parser.

use closedloop_llm::parse::{parse_chain, parse_confidences, parse_sample_answer, parse_verdict};

const CORPUS: &str = include_str!("fixtures/replies.txt");

fn cases() -> Vec<(String, bool, String)> {
    let mut out = vec![];
    for block in CORPUS.split("=== ").skip(1) {
        let (header, body) = block.split_once('\n').unwrap_or((block, ""));
        let (kind, outcome) = header.trim().split_once(' ').unwrap();
        out.push((kind.to_string(), outcome == "ok", body.to_string()));
    }
    out
}

#[test]
fn corpus_outcomes_match_labels() {
    let cases = cases();
    assert!(cases.len() >= 30);
    for (kind, ok, body) in cases {
        let parsed = match kind.as_str() {
            "chain" => parse_chain(&body, "f").map(|_| ()),
            "confidence3" => parse_confidences(&body, 3).map(|_| ()),
            "verdict" => parse_verdict(&body).map(|_| ()),
            "sample" => parse_sample_answer(&body).map(|_| ()),
            other => panic!("unknown fixture kind {other}"),
        };
        assert_eq!(parsed.is_ok(), ok, "{kind} fixture:\n{body}\n{parsed:?}");
    }
}

#[test]
fn parsers_survive_arbitrary_slices_of_the_corpus() {
    let chars: Vec<char> = CORPUS.chars().collect();
    for start in (0..chars.len()).step_by(37) {
        for len in [1, 7, 40, 200] {
            let s: String = chars[start..(start + len).min(chars.len())].iter().collect();
            let _ = parse_chain(&s, "f");
            let _ = parse_confidences(&s, 3);
            let _ = parse_verdict(&s);
            let _ = parse_sample_answer(&s);
        }
    }
}

#[test]
fn discount_fixture_values() {
    let c = parse_chain(&cases()[1].2, "f").unwrap();
    assert_eq!(c.final_answer, "32%");
    assert!(c.steps[1].text.contains("0.80 × 0.85 = 0.68"));
    let conf = parse_confidences(&cases().iter().find(|c| c.0 == "confidence3").unwrap().2, 3).unwrap();
    assert_eq!(conf[1], 35.0);
}
