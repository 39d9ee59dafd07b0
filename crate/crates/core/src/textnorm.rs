//! Text normalization and tokenization shared by the lexical metrics.
//!
//! The two word tokenizers reproduce the mteval-derived tokenizers shipped
//! with sacreBLEU 1.3.6 (`13a` and `intl`), so corpus scores computed here
//! line up with the published scoring signatures. All input is NFC-normalized
//! first.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// One sentence of an evaluation set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSegment {
    pub id: String,
    pub text: String,
    pub lang: String,
}

impl RawSegment {
    pub fn new(id: impl Into<String>, text: impl Into<String>, lang: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// mteval-v13a: ASCII punctuation split, period/comma kept inside numbers.
    Tok13a,
    /// mteval-v14 international: splits on Unicode punctuation and symbols.
    TokIntl,
    /// Whitespace split only, for text that is already tokenized.
    Whitespace,
    /// One token per non-whitespace character (chrF input).
    CharStream,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Tok13a => "13a",
            Scheme::TokIntl => "intl",
            Scheme::Whitespace => "none",
            Scheme::CharStream => "char",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown tokenization scheme {0:?} (expected one of 13a, intl, none, char)")]
pub struct UnknownScheme(pub String);

impl FromStr for Scheme {
    type Err = UnknownScheme;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "13a" | "tok13a" => Ok(Scheme::Tok13a),
            "intl" | "tokintl" => Ok(Scheme::TokIntl),
            "none" | "whitespace" => Ok(Scheme::Whitespace),
            "char" | "char_stream" => Ok(Scheme::CharStream),
            other => Err(UnknownScheme(other.to_string())),
        }
    }
}

/// A tokenized view of a sentence. Tokens are never empty and never contain
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub scheme: Scheme,
    pub cased: bool,
}

impl TokenSequence {
    /// Wraps tokens that are already split. Empty strings are dropped and
    /// tokens containing whitespace are split further so the invariant holds.
    pub fn from_tokens<I, S>(tokens: I, scheme: Scheme, cased: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let tokens = tokens
            .into_iter()
            .flat_map(|t| {
                t.as_ref()
                    .split_whitespace()
                    .map(str::to_string)
                    .collect::<Vec<_>>()
            })
            .collect();
        Self {
            tokens,
            scheme,
            cased,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn as_slice(&self) -> &[String] {
        &self.tokens
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

static T13A_SYMBOLS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").unwrap());
static T13A_NONDIGIT_PERIOD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([^0-9])([\.,])").unwrap());
static T13A_PERIOD_NONDIGIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\.,])([^0-9])").unwrap());
static T13A_DIGIT_DASH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9])(-)").unwrap());

// sacreBLEU builds its punctuation class by pasting every P* codepoint into a
// character class, which turns `\]` into an escape: the backslash itself is
// never treated as punctuation.
static INTL_NONDIGIT_PUNCT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([^\d])([\p{P}--\\])").unwrap());
static INTL_PUNCT_NONDIGIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\p{P}--\\])([^\d])").unwrap());
static INTL_SYMBOL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(\p{S})").unwrap());

fn nfc(text: &str) -> String {
    text.nfc().collect()
}

fn tokenize_13a(line: &str) -> String {
    let norm = line
        .replace("<skipped>", "")
        .replace("-\n", "")
        .replace('\n', " ")
        .replace("&quot;", "\"")
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">");
    let norm = format!(" {norm} ");
    let norm = T13A_SYMBOLS.replace_all(&norm, " ${1} ");
    let norm = T13A_NONDIGIT_PERIOD.replace_all(&norm, "${1} ${2} ");
    let norm = T13A_PERIOD_NONDIGIT.replace_all(&norm, " ${1} ${2}");
    let norm = T13A_DIGIT_DASH.replace_all(&norm, "${1} ${2} ");
    norm.into_owned()
}

fn tokenize_intl(line: &str) -> String {
    let s = INTL_NONDIGIT_PUNCT.replace_all(line, "${1} ${2} ");
    let s = INTL_PUNCT_NONDIGIT.replace_all(&s, " ${1} ${2}");
    let s = INTL_SYMBOL.replace_all(&s, " ${1} ");
    s.into_owned()
}

/// Tokenizes `text` under `scheme`, optionally lowercasing first.
///
/// Lowercasing before splitting gives the same tokens as lowercasing each
/// token afterwards, except for context-dependent case mappings (Greek final
/// sigma followed by punctuation).
pub fn tokenize(text: &str, scheme: Scheme, lowercase: bool) -> TokenSequence {
    let mut text = nfc(text);
    if lowercase {
        text = text.to_lowercase();
    }
    let line = text.trim_end();
    let spaced = match scheme {
        Scheme::Tok13a => tokenize_13a(line),
        Scheme::TokIntl => tokenize_intl(line),
        Scheme::Whitespace => line.to_string(),
        Scheme::CharStream => {
            let mut seq = char_stream(line);
            seq.cased = !lowercase;
            return seq;
        }
    };
    TokenSequence {
        tokens: spaced.split_whitespace().map(str::to_string).collect(),
        scheme,
        cased: !lowercase,
    }
}

/// The non-whitespace characters of the NFC form of `text`, one per token.
pub fn char_stream(text: &str) -> TokenSequence {
    TokenSequence {
        tokens: text
            .nfc()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
        scheme: Scheme::CharStream,
        cased: true,
    }
}

pub fn is_cjk_ideograph(c: char) -> bool {
    matches!(c, '\u{4E00}'..='\u{9FFF}' | '\u{3400}'..='\u{4DBF}' | '\u{F900}'..='\u{FAFF}')
}

/// Surrounds every CJK ideograph with single spaces so that word tokenizers
/// treat each character as a word. Whitespace next to an ideograph collapses
/// to one space; other spans are left as they are.
pub fn split_cjk_chars(text: &str) -> String {
    let mut out = String::with_capacity(text.len() * 2);
    let mut after_cjk = false;
    for c in text.chars() {
        if is_cjk_ideograph(c) {
            let kept = out.trim_end().len();
            out.truncate(kept);
            if !out.is_empty() {
                out.push(' ');
            }
            out.push(c);
            after_cjk = true;
        } else if after_cjk {
            if c.is_whitespace() {
                continue;
            }
            out.push(' ');
            out.push(c);
            after_cjk = false;
        } else {
            out.push(c);
        }
    }
    out
}

/// Language-aware preprocessing: Chinese text gets its ideographs split
/// before word tokenization.
pub fn tokenize_for_lang(text: &str, lang: &str, scheme: Scheme, lowercase: bool) -> TokenSequence {
    if lang_is_chinese(lang) && scheme != Scheme::CharStream {
        tokenize(&split_cjk_chars(text), scheme, lowercase)
    } else {
        tokenize(text, scheme, lowercase)
    }
}

pub fn lang_is_chinese(lang: &str) -> bool {
    let primary = lang.split(['-', '_']).next().unwrap_or("");
    primary.eq_ignore_ascii_case("zh")
}
