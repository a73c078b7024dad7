use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};

use sha2::{Digest, Sha256};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

/// Ordered product names; a name's position is its class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Catalog {
    /// Canonicalizes every entry and rejects empty entries and collisions.
    pub fn new<S: AsRef<str>>(entries: &[S], alphabet: &Alphabet) -> Result<Self> {
        let mut names = Vec::with_capacity(entries.len());
        let mut lookup: HashMap<String, usize> = HashMap::with_capacity(entries.len());
        let mut collisions = Vec::new();
        for (i, raw) in entries.iter().enumerate() {
            let raw = raw.as_ref();
            let name = alphabet.canonicalize(raw);
            if name.is_empty() {
                return Err(Error::EmptyCatalogEntry(raw.to_string()));
            }
            if let Some(&prev) = lookup.get(&name) {
                collisions.push((entries[prev].as_ref().to_string(), raw.to_string()));
                continue;
            }
            lookup.insert(name.clone(), i);
            names.push(name);
        }
        if !collisions.is_empty() {
            return Err(Error::CatalogCollision(collisions));
        }
        Ok(Self { names, lookup })
    }

    /// One name per line; blank lines and `#` comments are ignored.
    pub fn read<R: Read>(source: R, alphabet: &Alphabet) -> Result<Self> {
        let mut entries = Vec::new();
        for line in BufReader::new(source).lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            entries.push(t.to_string());
        }
        Self::new(&entries, alphabet)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn class_of(&self, canonical: &str) -> Option<usize> {
        self.lookup.get(canonical).copied()
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// The first `n` entries.
    pub fn truncate(&self, n: usize) -> Self {
        let names: Vec<String> = self.names.iter().take(n).cloned().collect();
        let lookup = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { names, lookup }
    }
}
