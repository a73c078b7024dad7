//! Canonical character set shared by the corpus parser, the statistics and
//! the one-hot encoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_CHARS: &str = "abcdefghijklmnopqrstuvwxyz0123456789 ";

/// Ordered set of canonical characters.
///
/// Canonicalization lower-cases the input, maps every character outside the
/// set to a space, collapses runs of spaces and trims both ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Alphabet {
    chars: Vec<char>,
    lookup: [u8; 128],
}

const NONE: u8 = u8::MAX;

impl Alphabet {
    /// Builds an alphabet from distinct ASCII characters. The set must contain
    /// a space, which is the replacement for unknown characters.
    pub fn new(chars: &str) -> Result<Self> {
        let mut lookup = [NONE; 128];
        let mut list = Vec::new();
        for c in chars.chars() {
            if !c.is_ascii() || c.is_ascii_uppercase() || list.len() >= NONE as usize {
                return Err(Error::OutsideAlphabet(c));
            }
            if lookup[c as usize] != NONE {
                return Err(Error::OutsideAlphabet(c));
            }
            lookup[c as usize] = list.len() as u8;
            list.push(c);
        }
        if lookup[b' ' as usize] == NONE {
            return Err(Error::OutsideAlphabet(' '));
        }
        Ok(Self {
            chars: list,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        if c.is_ascii() {
            match self.lookup[c as usize] {
                NONE => None,
                i => Some(i as usize),
            }
        } else {
            None
        }
    }

    pub fn try_index_of(&self, c: char) -> Result<usize> {
        self.index_of(c).ok_or(Error::OutsideAlphabet(c))
    }

    pub fn char_at(&self, index: usize) -> char {
        self.chars[index]
    }

    pub fn contains(&self, c: char) -> bool {
        self.index_of(c).is_some()
    }

    pub fn canonicalize(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut pending_space = false;
        for c in text.chars().flat_map(char::to_lowercase) {
            let c = if self.contains(c) { c } else { ' ' };
            if c == ' ' {
                pending_space = !out.is_empty();
                continue;
            }
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
        out
    }

    pub fn is_canonical(&self, text: &str) -> bool {
        self.canonicalize(text) == text
    }
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::new(DEFAULT_CHARS).expect("default alphabet is valid")
    }
}

impl TryFrom<String> for Alphabet {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(&value)
    }
}

impl From<Alphabet> for String {
    fn from(value: Alphabet) -> Self {
        value.chars.into_iter().collect()
    }
}
