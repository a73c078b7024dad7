//! Typo corpora: parsing into `(wrong, correct)` pairs and classifying each
//! pair into one of the five one-character edit classes.

use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditType {
    Deletion,
    Insertion,
    Replication,
    Substitution,
    Transposition,
}

impl EditType {
    pub const ALL: [EditType; 5] = [
        EditType::Deletion,
        EditType::Insertion,
        EditType::Replication,
        EditType::Substitution,
        EditType::Transposition,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EditType::Deletion => "deletion",
            EditType::Insertion => "insertion",
            EditType::Replication => "replication",
            EditType::Substitution => "substitution",
            EditType::Transposition => "transposition",
        }
    }

    /// Deletion and insertion keep a single marginal over keys; the other
    /// classes keep one distribution per source key.
    pub fn has_marginal_keys(self) -> bool {
        matches!(self, EditType::Deletion | EditType::Insertion)
    }
}

impl fmt::Display for EditType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EditType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EditType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::DatasetFormat(format!("unknown edit type {s:?}")))
    }
}

/// An observed misspelling and its ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypoPair {
    pub wrong: String,
    pub correct: String,
    pub weight: u32,
}

impl TypoPair {
    pub fn new(wrong: impl Into<String>, correct: impl Into<String>) -> Self {
        Self {
            wrong: wrong.into(),
            correct: correct.into(),
            weight: 1,
        }
    }
}

/// A single classified one-character edit.
///
/// `key` is the ground-truth character acted on. For insertions it is the
/// character the new one follows (the first character when inserting at the
/// front). `other_key` is the inserted, substituted-in or swapped character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditEvent {
    pub edit_type: EditType,
    pub key: char,
    pub other_key: Option<char>,
    pub position_index: usize,
    pub position_rel: f64,
    pub source: String,
    pub weight: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// `wrong<TAB>correct[<TAB>weight]`, `#` comments.
    Tsv,
    /// GitHub Typo Corpus JSON lines.
    GithubJsonl,
    /// `wrong<TAB>correct[<TAB>context...]`.
    TwitterTsv,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "github-jsonl" => Ok(Self::GithubJsonl),
            "twitter-tsv" => Ok(Self::TwitterTsv),
            other => Err(Error::DatasetFormat(format!(
                "unknown corpus format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCorpus {
    pub pairs: Vec<TypoPair>,
    pub skipped: usize,
}

pub fn parse_corpus<R: Read>(
    source: R,
    format: CorpusFormat,
    alphabet: &Alphabet,
) -> Result<ParsedCorpus> {
    let reader = BufReader::new(source);
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') && format != CorpusFormat::GithubJsonl {
            continue;
        }
        match format {
            CorpusFormat::Tsv => match parse_tsv_line(line, alphabet, true) {
                Some(p) => pairs.push(p),
                None => skipped += 1,
            },
            CorpusFormat::TwitterTsv => match parse_tsv_line(line, alphabet, false) {
                Some(p) => pairs.push(p),
                None => skipped += 1,
            },
            CorpusFormat::GithubJsonl => {
                let (found, bad) = parse_github_line(line, alphabet);
                skipped += bad;
                pairs.extend(found);
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus { skipped });
    }
    Ok(ParsedCorpus { pairs, skipped })
}

fn canonical_pair(
    wrong: &str,
    correct: &str,
    weight: u32,
    alphabet: &Alphabet,
) -> Option<TypoPair> {
    let wrong = alphabet.canonicalize(wrong);
    let correct = alphabet.canonicalize(correct);
    if wrong.is_empty() || correct.is_empty() || weight == 0 {
        return None;
    }
    Some(TypoPair {
        wrong,
        correct,
        weight,
    })
}

fn parse_tsv_line(line: &str, alphabet: &Alphabet, weighted: bool) -> Option<TypoPair> {
    let fields: Vec<&str> = line.split('\t').collect();
    let weight = match (weighted, fields.len()) {
        (_, 0 | 1) => return None,
        (_, 2) | (false, _) => 1,
        (true, 3) => fields[2].trim().parse().ok()?,
        (true, _) => return None,
    };
    canonical_pair(fields[0], fields[1], weight, alphabet)
}

#[derive(Deserialize)]
struct GithubRecord {
    edits: Vec<GithubEdit>,
}

#[derive(Deserialize)]
struct GithubEdit {
    src: GithubSide,
    tgt: GithubSide,
    #[serde(default)]
    is_typo: Option<bool>,
}

#[derive(Deserialize)]
struct GithubSide {
    text: String,
    #[serde(default)]
    lang: Option<String>,
}

/// Returns the single-token edits of one commit record and the number of
/// edits (or the whole line, if it fails to parse) that were skipped.
fn parse_github_line(line: &str, alphabet: &Alphabet) -> (Vec<TypoPair>, usize) {
    let record: GithubRecord = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(_) => return (Vec::new(), 1),
    };
    let mut out = Vec::new();
    let mut skipped = 0;
    for edit in record.edits {
        if edit.is_typo == Some(false) || edit.src.lang.as_deref().is_some_and(|l| l != "eng") {
            continue;
        }
        match single_token_edit(&edit.src.text, &edit.tgt.text)
            .and_then(|(w, c)| canonical_pair(w, c, 1, alphabet))
        {
            Some(p) => out.push(p),
            None => skipped += 1,
        }
    }
    (out, skipped)
}

fn single_token_edit<'a>(src: &'a str, tgt: &'a str) -> Option<(&'a str, &'a str)> {
    let a: Vec<&str> = src.split_whitespace().collect();
    let b: Vec<&str> = tgt.split_whitespace().collect();
    if a.len() != b.len() {
        return None;
    }
    let mut diff = a.iter().zip(&b).filter(|(x, y)| x != y);
    let first = diff.next()?;
    if diff.next().is_some() {
        return None;
    }
    Some((first.0, first.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Equal,
    Insert,
    Delete,
    Replace,
}

/// One alignment step; `a` indexes the ground truth, `b` the typo (chars).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opcode {
    pub tag: OpTag,
    pub a: Range<usize>,
    pub b: Range<usize>,
}

/// LCS alignment turning `correct` into `wrong`. Adjacent delete/insert
/// blocks are merged into a single replace.
pub fn align(correct: &str, wrong: &str) -> Vec<Opcode> {
    let a: Vec<char> = correct.chars().collect();
    let b: Vec<char> = wrong.chars().collect();
    let (n, m) = (a.len(), b.len());
    // suffix LCS lengths
    let width = m + 1;
    let mut lcs = vec![0u32; (n + 1) * width];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            lcs[i * width + j] = if a[i] == b[j] {
                lcs[(i + 1) * width + j + 1] + 1
            } else {
                lcs[(i + 1) * width + j].max(lcs[i * width + j + 1])
            };
        }
    }

    let mut steps = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] && lcs[i * width + j] == lcs[(i + 1) * width + j + 1] + 1
        {
            steps.push(OpTag::Equal);
            i += 1;
            j += 1;
        } else if i < n && (j == m || lcs[(i + 1) * width + j] >= lcs[i * width + j + 1]) {
            steps.push(OpTag::Delete);
            i += 1;
        } else {
            steps.push(OpTag::Insert);
            j += 1;
        }
    }

    let mut ops: Vec<Opcode> = Vec::new();
    let (mut i, mut j) = (0, 0);
    for step in steps {
        let (di, dj) = match step {
            OpTag::Equal => (1, 1),
            OpTag::Delete => (1, 0),
            _ => (0, 1),
        };
        let tag = step;
        match ops.last_mut() {
            Some(last) if last.tag == tag => {
                last.a.end += di;
                last.b.end += dj;
            }
            Some(last)
                if tag != OpTag::Equal
                    && matches!(last.tag, OpTag::Delete | OpTag::Insert | OpTag::Replace) =>
            {
                last.tag = OpTag::Replace;
                last.a.end += di;
                last.b.end += dj;
            }
            _ => ops.push(Opcode {
                tag,
                a: i..i + di,
                b: j..j + dj,
            }),
        }
        i += di;
        j += dj;
    }
    ops
}

/// Rebuilds the typo from the ground truth and an opcode list.
pub fn replay_opcodes(correct: &str, wrong: &str, ops: &[Opcode]) -> String {
    let a: Vec<char> = correct.chars().collect();
    let b: Vec<char> = wrong.chars().collect();
    let mut out = String::new();
    for op in ops {
        match op.tag {
            OpTag::Equal => out.extend(&a[op.a.clone()]),
            OpTag::Delete => {}
            OpTag::Insert | OpTag::Replace => out.extend(&b[op.b.clone()]),
        }
    }
    out
}

/// Position of an edit relative to its reference string: 0 for the first
/// character, 1 for the last.
pub fn normalize_position(index: usize, reference_length: usize) -> f64 {
    assert!(
        index < reference_length,
        "position {index} outside a string of length {reference_length}"
    );
    if reference_length == 1 {
        0.0
    } else {
        index as f64 / (reference_length - 1) as f64
    }
}

/// Classifies a canonical pair as a single edit of the ground truth, or
/// `None` for identical strings and anything further than one edit.
///
/// Checks run in the order transposition, replication, insertion, deletion,
/// substitution. Deletion and replication inside a run of equal characters
/// are attributed to the run's leftmost index, and an inserted character
/// equal to either neighbour is reported as a replication.
pub fn classify_single_edit(pair: &TypoPair, source: &str) -> Option<EditEvent> {
    let c: Vec<char> = pair.correct.chars().collect();
    let w: Vec<char> = pair.wrong.chars().collect();
    if c == w || c.is_empty() || w.is_empty() {
        return None;
    }
    let event = |edit_type, key, other_key, position_index: usize, reference_length| EditEvent {
        edit_type,
        key,
        other_key,
        position_index,
        position_rel: normalize_position(position_index, reference_length),
        source: source.to_string(),
        weight: pair.weight,
    };

    if c.len() == w.len() {
        let diffs: Vec<usize> = (0..c.len()).filter(|&i| c[i] != w[i]).collect();
        return match diffs[..] {
            [i, j] if j == i + 1 && c[i] == w[j] && c[j] == w[i] => {
                Some(event(EditType::Transposition, c[i], Some(c[j]), i, w.len()))
            }
            [i] => Some(event(EditType::Substitution, c[i], Some(w[i]), i, w.len())),
            _ => None,
        };
    }

    let ops = align(&pair.correct, &pair.wrong);
    let mut edits = ops.iter().filter(|op| op.tag != OpTag::Equal);
    let op = edits.next()?;
    if edits.next().is_some() {
        return None;
    }
    match op.tag {
        OpTag::Insert if op.b.len() == 1 => {
            let j = op.b.start;
            let ch = w[j];
            let start = run_start(&w, j);
            let repeated = start < j || w.get(j + 1) == Some(&ch);
            if repeated {
                Some(event(EditType::Replication, ch, Some(ch), start, w.len()))
            } else {
                let key = if j == 0 { c[0] } else { c[j - 1] };
                Some(event(EditType::Insertion, key, Some(ch), j, w.len()))
            }
        }
        OpTag::Delete if op.a.len() == 1 => {
            let i = run_start(&c, op.a.start);
            Some(event(EditType::Deletion, c[i], None, i, c.len()))
        }
        _ => None,
    }
}

fn run_start(s: &[char], mut i: usize) -> usize {
    while i > 0 && s[i - 1] == s[i] {
        i -= 1;
    }
    i
}

/// Classifies every pair, returning the events and the number of pairs
/// dropped as identical or multi-edit.
pub fn classify_corpus(pairs: &[TypoPair], source: &str) -> (Vec<EditEvent>, usize) {
    let mut events = Vec::with_capacity(pairs.len());
    let mut dropped = 0;
    for pair in pairs {
        match classify_single_edit(pair, source) {
            Some(e) => events.push(e),
            None => dropped += 1,
        }
    }
    (events, dropped)
}
