use rttqe_demo::{compare, pr_curve, topn, DemoError};

#[test]
fn identical_sentences_score_100() {
    let c = compare("We know it.", "We know it.", "en").unwrap();
    assert_eq!((c.sentbleu, c.chrf), (100.0, 100.0));
    assert!(c.matched.iter().all(|&m| m));
}

#[test]
fn round_trip_tokens_are_marked() {
    let c = compare(
        "'We know it won't change students' behaviour instantly.",
        "\"We know that it will not change student behavior immediately.",
        "en",
    )
    .unwrap();
    assert_eq!(c.sentbleu, 14.9615);
    assert_eq!(c.round_trip_tokens[0], "\"");
    assert!(!c.matched[0]);
    assert!(c.matched[1], "{:?}", c.round_trip_tokens);
}

#[test]
fn empty_round_trip_scores_zero() {
    let c = compare("hello", "", "en").unwrap();
    assert_eq!((c.sentbleu, c.chrf), (0.0, 0.0));
}

#[test]
fn pr_curve_from_text() {
    let r = pr_curve("# score,label\n0.9,1\n0.8,0\n0.7\t1\n0.6,0\n").unwrap();
    assert_eq!((r.pairs, r.positives), (4, 2));
    assert!((r.auc - 0.7916666666666666).abs() < 1e-12, "{}", r.auc);
}

#[test]
fn pr_curve_errors_name_the_line() {
    match pr_curve("0.9,1\n0.5,yes\n") {
        Err(DemoError::Parse { line: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert!(matches!(pr_curve("0.1,0\n"), Err(DemoError::MetaEval(_))));
}

#[test]
fn topn_from_text() {
    let r = topn("a,10,0.5\nb,8,0.2\nc,9,0.1\nd,1,-0.4\n", 2).unwrap();
    assert_eq!(r.ranking, ["a", "b", "c", "d"]);
    assert_eq!(r.points.iter().map(|p| p.n).collect::<Vec<_>>(), [4, 3, 2]);
    assert!((r.points[2].r.unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn topn_rejects_duplicates() {
    assert!(matches!(topn("a,1,1\na,2,2\n", 2), Err(DemoError::Parse { line: 2, .. })));
}
