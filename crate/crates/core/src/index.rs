//! Exhaustive cosine nearest-neighbour search over catalog embeddings.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alphabet::Alphabet;
use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::model::{embed_batch, ModelParams};

const MAGIC: &[u8; 8] = b"TFXINDX\n";
pub const INDEX_VERSION: u32 = 1;

/// Similarity at or above which a match counts as exact.
pub const EXACT_THRESHOLD: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    pub name: String,
    pub class_index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    names: Vec<String>,
    /// unit-norm rows, catalog order
    matrix: Array2<f64>,
    catalog_digest: String,
    checkpoint_digest: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    catalog_digest: String,
    checkpoint_digest: String,
    rows: usize,
    dims: usize,
    names: Vec<String>,
}

fn unit(v: ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.mapv(|x| x / norm))
}

/// Sorts by descending similarity, ties by ascending class index.
fn rank(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` best `(class, score)` pairs in ranking order.
pub fn top_k(scores: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, rank);
        all.truncate(k);
    }
    all.sort_by(rank);
    all
}

/// Embeds and normalizes every catalog entry. `checkpoint_digest` ties the
/// index to the parameters that produced it.
pub fn build_index(
    params: &ModelParams,
    checkpoint_digest: &str,
    catalog: &Catalog,
    alphabet: &Alphabet,
) -> Result<EmbeddingIndex> {
    let raw = embed_batch(params, alphabet, catalog.names())?;
    let mut matrix = Array2::zeros(raw.dim());
    for (i, row) in raw.rows().into_iter().enumerate() {
        let u = unit(row).ok_or_else(|| Error::ZeroEmbedding(catalog.name(i).to_string()))?;
        matrix.row_mut(i).assign(&u);
    }
    Ok(EmbeddingIndex {
        names: catalog.names().to_vec(),
        matrix,
        catalog_digest: catalog.digest(),
        checkpoint_digest: checkpoint_digest.to_string(),
    })
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn checkpoint_digest(&self) -> &str {
        &self.checkpoint_digest
    }

    pub fn catalog_digest(&self) -> &str {
        &self.catalog_digest
    }

    /// Cosine similarity of an unnormalized embedding to every row.
    pub fn scores(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.dims() {
            return Err(Error::Shape(format!(
                "embedding of length {} for index width {}",
                embedding.len(),
                self.dims()
            )));
        }
        let Some(u) = unit(ArrayView1::from(embedding)) else {
            // a zero query vector is equally (dis)similar to everything
            return Ok(vec![0.0; self.len()]);
        };
        Ok(self.matrix.dot(&u).to_vec())
    }

    pub fn search_embedding(&self, embedding: &[f64], k: usize) -> Result<Vec<Match>> {
        let scores = self.scores(embedding)?;
        Ok(top_k(&scores, k)
            .into_iter()
            .map(|(class_index, similarity)| Match {
                name: self.names[class_index].clone(),
                class_index,
                similarity,
            })
            .collect())
    }

    /// Top-`k` catalog entries for a raw query.
    pub fn query(
        &self,
        params: &ModelParams,
        alphabet: &Alphabet,
        q: &str,
        k: usize,
    ) -> Result<Vec<Match>> {
        let canonical = alphabet.canonicalize(q);
        if canonical.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let emb = embed_batch(params, alphabet, &[canonical])?;
        self.search_embedding(emb.row(0).as_slice().expect("contiguous"), k.max(1))
    }

    /// Top-1 class for each canonical query, computed in batches.
    pub fn nearest_batch<S: AsRef<str>>(
        &self,
        params: &ModelParams,
        alphabet: &Alphabet,
        queries: &[S],
    ) -> Result<Vec<usize>> {
        let emb = embed_batch(params, alphabet, queries)?;
        let mut out = Vec::with_capacity(queries.len());
        let norms = emb.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        let scores = emb.dot(&self.matrix.t());
        for (i, row) in scores.rows().into_iter().enumerate() {
            if norms[i] == 0.0 {
                out.push(0);
                continue;
            }
            let best = row
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (j, &s)| {
                    if s > best.1 {
                        (j, s)
                    } else {
                        best
                    }
                });
            out.push(best.0);
        }
        Ok(out)
    }

    pub fn save(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: INDEX_VERSION,
            catalog_digest: self.catalog_digest.clone(),
            checkpoint_digest: self.checkpoint_digest.clone(),
            rows: self.len(),
            dims: self.dims(),
            names: self.names.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + self.matrix.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in self.matrix.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses an index file and checks it was built from `checkpoint_digest`.
    pub fn load(bytes: &[u8], checkpoint_digest: &str) -> Result<Self> {
        let index = Self::load_unchecked(bytes)?;
        if index.checkpoint_digest != checkpoint_digest {
            return Err(Error::StaleIndex {
                index_digest: index.checkpoint_digest,
                checkpoint_digest: checkpoint_digest.to_string(),
            });
        }
        Ok(index)
    }

    pub fn load_unchecked(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::IndexFormat(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not an index file"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json_end = 16usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..json_end])
            .map_err(|e| Error::IndexFormat(format!("header: {e}")))?;
        if header.version != INDEX_VERSION {
            return Err(Error::Version {
                kind: "index",
                found: header.version,
                expected: INDEX_VERSION,
            });
        }
        if header.names.len() != header.rows {
            return Err(bad("name count differs from row count"));
        }
        let need = header
            .rows
            .checked_mul(header.dims)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| bad("dimensions overflow"))?;
        let body = &bytes[json_end..];
        if body.len() < need {
            return Err(bad("truncated matrix"));
        }
        if body.len() > need {
            return Err(Error::IndexFormat(format!(
                "{} trailing bytes",
                body.len() - need
            )));
        }
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let matrix = Array2::from_shape_vec((header.rows, header.dims), values)
            .map_err(|e| Error::IndexFormat(e.to_string()))?;
        Ok(Self {
            names: header.names,
            matrix,
            catalog_digest: header.catalog_digest,
            checkpoint_digest: header.checkpoint_digest,
        })
    }

    /// SHA-256 of the serialized index.
    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.save()?)))
    }
}
