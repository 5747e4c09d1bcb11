//! Query skeletons: queries with entity, time and number spans masked by
//! typed placeholders.
//!
//! Normalization case-folds, drops possessive `'s`, strips punctuation and
//! collapses whitespace. Masking then runs left to right over the token
//! stream, taking the longest lexicon or pattern match at each position.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::Query;
use crate::error::{Error, Result};
use crate::generator::Generator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PlaceholderKind {
    Ent,
    Time,
    Num,
    Val,
}

impl PlaceholderKind {
    pub fn token(self) -> &'static str {
        match self {
            PlaceholderKind::Ent => "<ENT>",
            PlaceholderKind::Time => "<TIME>",
            PlaceholderKind::Num => "<NUM>",
            PlaceholderKind::Val => "<VAL>",
        }
    }

    fn from_token(tok: &str) -> Option<Self> {
        match tok {
            "<ENT>" => Some(PlaceholderKind::Ent),
            "<TIME>" => Some(PlaceholderKind::Time),
            "<NUM>" => Some(PlaceholderKind::Num),
            "<VAL>" => Some(PlaceholderKind::Val),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ENT" => Some(PlaceholderKind::Ent),
            "TIME" => Some(PlaceholderKind::Time),
            "NUM" => Some(PlaceholderKind::Num),
            "VAL" => Some(PlaceholderKind::Val),
            _ => None,
        }
    }
}

impl fmt::Display for PlaceholderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.token()[1..self.token().len() - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placeholder {
    pub kind: PlaceholderKind,
    /// Normalized surface text that was masked.
    pub span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skeleton {
    pub text: String,
    #[serde(default)]
    pub placeholders: Vec<Placeholder>,
}

impl Skeleton {
    pub fn values(&self) -> Vec<(PlaceholderKind, String)> {
        self.placeholders.iter().map(|p| (p.kind, p.span.clone())).collect()
    }
}

static TOKEN_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?x)
        (?P<ph><(?i:ent|time|num|val)>)
        | (?P<date>\d{4}-\d{1,2}(?:-\d{1,2})?)
        | (?P<num>\d+(?:\.\d+)?)
        | (?P<word>[\p{L}\p{N}_]+(?:['’][\p{L}]+)*)
        ",
    )
    .unwrap()
});

static YEAR_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?:\d{2}|(?:19|20)\d{2}|\d{4}-\d{1,2}(?:-\d{1,2})?)$").unwrap());
static NUM_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d+(?:\.\d+)?$").unwrap());

const RELATIVE_LEAD: &[&str] = &["last", "past", "previous", "next"];
const RELATIVE_UNIT: &[&str] = &[
    "day", "days", "week", "weeks", "month", "months", "quarter", "quarters", "year", "years",
];
const RELATIVE_SINGLE: &[&str] = &["today", "yesterday"];

/// Splits text into normalized tokens. Existing placeholders survive as
/// upper-case tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    TOKEN_RE
        .captures_iter(text)
        .map(|c| {
            if let Some(m) = c.name("ph") {
                m.as_str().to_ascii_uppercase()
            } else if let Some(m) = c.name("word") {
                let w = m.as_str().to_lowercase();
                let w = w
                    .strip_suffix("'s")
                    .or_else(|| w.strip_suffix("’s"))
                    .unwrap_or(&w)
                    .to_string();
                w.replace(['\'', '’'], "")
            } else {
                c.get(0).unwrap().as_str().to_string()
            }
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// The normalized surface form of a query.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

fn is_placeholder(tok: &str) -> bool {
    PlaceholderKind::from_token(tok).is_some()
}

/// Surface forms that should be masked, matched case-insensitively and
/// longest first.
#[derive(Debug, Clone, Default)]
pub struct EntityLexicon {
    entries: HashMap<Vec<String>, PlaceholderKind>,
    max_len: usize,
}

impl EntityLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, kind: PlaceholderKind) -> Result<()> {
        if !matches!(kind, PlaceholderKind::Ent | PlaceholderKind::Val) {
            return Err(Error::InvalidInput(format!(
                "lexicon kind must be ENT or VAL, got {kind}"
            )));
        }
        let toks = tokenize(surface);
        if toks.is_empty() || toks.iter().any(|t| is_placeholder(t)) {
            return Err(Error::InvalidInput(format!("unusable lexicon surface `{surface}`")));
        }
        self.max_len = self.max_len.max(toks.len());
        self.entries.insert(toks, kind);
        Ok(())
    }

    pub fn from_entries<'a>(entries: impl IntoIterator<Item = (&'a str, PlaceholderKind)>) -> Result<Self> {
        let mut lex = Self::new();
        for (surface, kind) in entries {
            lex.insert(surface, kind)?;
        }
        Ok(lex)
    }

    /// Parses `surface<TAB>kind` lines; blank lines and `#` comments are skipped.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (surface, kind) = line.split_once('\t').ok_or_else(|| Error::Lexicon {
                line: line_no,
                message: "expected `surface<TAB>kind`".into(),
            })?;
            let kind = PlaceholderKind::parse(kind).ok_or_else(|| Error::Lexicon {
                line: line_no,
                message: format!("unknown kind `{}`", kind.trim()),
            })?;
            lex.insert(surface, kind).map_err(|e| Error::Lexicon {
                line: line_no,
                message: e.to_string(),
            })?;
        }
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn longest_match(&self, toks: &[String]) -> Option<(usize, PlaceholderKind)> {
        let upper = self.max_len.min(toks.len());
        (1..=upper).rev().find_map(|len| {
            let window = &toks[..len];
            if window.iter().any(|t| is_placeholder(t)) {
                return None;
            }
            self.entries.get(window).map(|&k| (len, k))
        })
    }
}

fn time_match(toks: &[String]) -> Option<usize> {
    let t0 = toks[0].as_str();
    if RELATIVE_SINGLE.contains(&t0) {
        return Some(1);
    }
    if RELATIVE_LEAD.contains(&t0) {
        if toks.len() >= 3 && NUM_RE.is_match(&toks[1]) && RELATIVE_UNIT.contains(&toks[2].as_str()) {
            return Some(3);
        }
        if toks.len() >= 2 && RELATIVE_UNIT.contains(&toks[1].as_str()) {
            return Some(2);
        }
    }
    if t0 == "this" && toks.len() >= 2 && RELATIVE_UNIT.contains(&toks[1].as_str()) {
        return Some(2);
    }
    YEAR_RE.is_match(t0).then_some(1)
}

fn mask_tokens(toks: &[String], lex: &EntityLexicon) -> Skeleton {
    let mut out = Vec::with_capacity(toks.len());
    let mut placeholders = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if let Some(kind) = PlaceholderKind::from_token(&toks[i]) {
            out.push(kind.token().to_string());
            placeholders.push(Placeholder {
                kind,
                span: toks[i].clone(),
            });
            i += 1;
            continue;
        }
        let rest = &toks[i..];
        // priority on equal length: lexicon, then TIME, then NUM
        let mut best: Option<(usize, PlaceholderKind)> = lex.longest_match(rest);
        if let Some(len) = time_match(rest) {
            if best.is_none_or(|(l, _)| len > l) {
                best = Some((len, PlaceholderKind::Time));
            }
        }
        if best.is_none() && NUM_RE.is_match(&rest[0]) {
            best = Some((1, PlaceholderKind::Num));
        }
        match best {
            Some((len, kind)) => {
                out.push(kind.token().to_string());
                placeholders.push(Placeholder {
                    kind,
                    span: rest[..len].join(" "),
                });
                i += len;
            }
            None => {
                out.push(toks[i].clone());
                i += 1;
            }
        }
    }
    Skeleton {
        text: out.join(" "),
        placeholders,
    }
}

pub fn skeletonize_text(text: &str, lex: &EntityLexicon) -> Skeleton {
    mask_tokens(&tokenize(text), lex)
}

pub fn extract_skeleton(q: &Query, lex: &EntityLexicon) -> Skeleton {
    skeletonize_text(&q.text, lex)
}

/// Re-inserts placeholder spans into the skeleton text.
pub fn substitute(skeleton_text: &str, values: &[(PlaceholderKind, String)]) -> Result<String> {
    let toks = tokenize(skeleton_text);
    let slots = toks.iter().filter(|t| is_placeholder(t)).count();
    if slots != values.len() {
        return Err(Error::Alignment(format!(
            "skeleton has {slots} placeholders but {} values were given",
            values.len()
        )));
    }
    let mut vals = values.iter();
    let mut out = Vec::with_capacity(toks.len());
    for t in toks {
        match PlaceholderKind::from_token(&t) {
            Some(kind) => {
                let (vk, v) = vals.next().unwrap();
                if *vk != kind {
                    return Err(Error::Alignment(format!("expected a {kind} value, got {vk}")));
                }
                out.push(v.clone());
            }
            None => out.push(t),
        }
    }
    Ok(out.join(" "))
}

/// The spans the skeleton masked out of `q`, left to right.
pub fn extract_values(q: &Query, s: &Skeleton) -> Result<Vec<(PlaceholderKind, String)>> {
    let values = s.values();
    let rebuilt = substitute(&s.text, &values)?;
    let expected = normalize(&q.text);
    if rebuilt != expected {
        return Err(Error::Alignment(format!(
            "skeleton `{}` does not reproduce `{expected}`",
            s.text
        )));
    }
    Ok(values)
}

/// Recovers placeholder spans by aligning skeleton tokens against the
/// query's tokens. Each placeholder absorbs one or more tokens.
pub fn align(skeleton_text: &str, query_text: &str) -> Option<Skeleton> {
    const MAX_SPAN: usize = 6;
    let sk = tokenize(skeleton_text);
    let qt = tokenize(query_text);
    let mut dead: HashSet<(usize, usize)> = HashSet::new();
    let mut spans: Vec<(usize, usize)> = Vec::new();

    fn go(
        sk: &[String],
        qt: &[String],
        i: usize,
        j: usize,
        spans: &mut Vec<(usize, usize)>,
        dead: &mut HashSet<(usize, usize)>,
    ) -> bool {
        if i == sk.len() {
            return j == qt.len();
        }
        if dead.contains(&(i, j)) {
            return false;
        }
        let ok = if is_placeholder(&sk[i]) {
            let remaining = qt.len().saturating_sub(j);
            (1..=MAX_SPAN.min(remaining)).any(|len| {
                spans.push((j, j + len));
                if go(sk, qt, i + 1, j + len, spans, dead) {
                    true
                } else {
                    spans.pop();
                    false
                }
            })
        } else {
            j < qt.len() && qt[j] == sk[i] && go(sk, qt, i + 1, j + 1, spans, dead)
        };
        if !ok {
            dead.insert((i, j));
        }
        ok
    }

    if !go(&sk, &qt, 0, 0, &mut spans, &mut dead) {
        return None;
    }
    let placeholders = sk
        .iter()
        .filter_map(|t| PlaceholderKind::from_token(t))
        .zip(spans)
        .map(|(kind, (a, b))| Placeholder {
            kind,
            span: qt[a..b].join(" "),
        })
        .collect();
    Some(Skeleton {
        text: sk.join(" "),
        placeholders,
    })
}

/// Few-shot prompt asking a generator to write a query's skeleton.
pub fn skeleton_prompt(q: &Query, shots: &[(String, String)]) -> String {
    let mut p = String::from(
        "Rewrite the query as its skeleton: replace entity names with <ENT>, \
         times with <TIME>, numbers with <NUM> and enumerated values with <VAL>. \
         Answer with the skeleton only.\n\n",
    );
    for (query, skeleton) in shots {
        p.push_str(&format!("Query: {query}\nSkeleton: {skeleton}\n\n"));
    }
    p.push_str(&format!("Query: {}\nSkeleton:", q.text));
    p
}

/// Asks the generator for a skeleton, then runs the same recognition and
/// normalization as [`extract_skeleton`] over its answer. Any failure,
/// including an answer that cannot be aligned with the query, falls back to
/// [`extract_skeleton`].
pub fn generator_assisted_extract(
    q: &Query,
    lex: &EntityLexicon,
    gen: &dyn Generator,
    shots: &[(String, String)],
) -> Skeleton {
    let completion = match gen.generate(&skeleton_prompt(q, shots)) {
        Ok(c) => c,
        Err(e) => {
            log::warn!("skeleton generator failed, using rule-based extraction: {e}");
            return extract_skeleton(q, lex);
        }
    };
    let line = completion
        .lines()
        .map(|l| l.trim().trim_start_matches("Skeleton:").trim())
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let refined = skeletonize_text(line, lex);
    match align(&refined.text, &q.text) {
        Some(sk) if !sk.text.is_empty() => sk,
        _ => {
            log::warn!("generator skeleton `{line}` does not align with the query; using rule-based extraction");
            extract_skeleton(q, lex)
        }
    }
}
