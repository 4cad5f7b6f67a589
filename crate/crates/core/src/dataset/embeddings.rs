//! Precomputed caption embeddings, one JSONL row per image.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::ImageId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    captions: BTreeMap<ImageId, Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
struct Row {
    image_id: u64,
    captions: Vec<Vec<f64>>,
}

impl EmbeddingStore {
    /// Builds a store from per-image caption vectors. Every image needs at
    /// least one vector, all vectors share one positive dimension and every
    /// entry is finite.
    pub fn from_rows(rows: impl IntoIterator<Item = (ImageId, Vec<Vec<f64>>)>) -> Result<Self> {
        let mut dim = None;
        let mut captions = BTreeMap::new();
        for (i, (id, vectors)) in rows.into_iter().enumerate() {
            let line = i + 1;
            check_row(line, &vectors, &mut dim)?;
            if captions.insert(id, vectors).is_some() {
                return Err(Error::Format {
                    line,
                    message: format!("duplicate image_id {id}"),
                });
            }
        }
        Ok(EmbeddingStore {
            dim: dim.unwrap_or(0),
            captions,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.captions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.captions.is_empty()
    }

    pub fn captions(&self, id: ImageId) -> Option<&[Vec<f64>]> {
        self.captions.get(&id).map(Vec::as_slice)
    }

    pub fn contains(&self, id: ImageId) -> bool {
        self.captions.contains_key(&id)
    }
}

fn check_row(line: usize, vectors: &[Vec<f64>], dim: &mut Option<usize>) -> Result<()> {
    if vectors.is_empty() {
        return Err(Error::Format {
            line,
            message: "image has no caption vectors".into(),
        });
    }
    for v in vectors {
        if v.is_empty() {
            return Err(Error::Format {
                line,
                message: "empty caption vector".into(),
            });
        }
        match *dim {
            None => *dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::Format {
                    line,
                    message: format!("vector of length {} in a store of dimension {d}", v.len()),
                })
            }
            Some(_) => {}
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format {
                line,
                message: "non-finite entry".into(),
            });
        }
    }
    Ok(())
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingStore> {
    let mut dim = None;
    let mut captions = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(raw).map_err(|e| Error::Format {
            line,
            message: e.to_string(),
        })?;
        check_row(line, &row.captions, &mut dim)?;
        if captions.insert(ImageId(row.image_id), row.captions).is_some() {
            return Err(Error::Format {
                line,
                message: format!("duplicate image_id {}", row.image_id),
            });
        }
    }
    Ok(EmbeddingStore {
        dim: dim.unwrap_or(0),
        captions,
    })
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}
