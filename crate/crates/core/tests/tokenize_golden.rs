//! Tokenizer output pinned against sacreBLEU 1.3.6 (see tests/oracles).

use rttqe_core::textnorm::{tokenize, Scheme};

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('t') => out.push('\t'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

#[test]
fn matches_sacrebleu_goldens() {
    let golden = include_str!("fixtures/tokenize_golden.tsv");
    let mut checked = 0;
    for (lineno, line) in golden.lines().enumerate() {
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let scheme: Scheme = fields.next().unwrap().parse().unwrap();
        let lowercase = fields.next().unwrap() == "1";
        let input = unescape(fields.next().unwrap_or(""));
        let expected: Vec<String> = fields.map(unescape).collect();
        let got = tokenize(&input, scheme, lowercase);
        assert_eq!(
            got.tokens,
            expected,
            "line {}: {scheme} lc={lowercase} input {input:?}",
            lineno + 1
        );
        checked += 1;
    }
    assert_eq!(checked, 140);
}
