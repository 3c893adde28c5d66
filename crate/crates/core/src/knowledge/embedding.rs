use std::collections::HashMap;
use std::io::BufRead;

use super::KnowledgeError;
use crate::text::TextPipeline;

/// Dense vector. Dimension is fixed per [`EmbeddingTable`].
pub type Vector = Vec<f64>;

/// word2vec text-format embeddings, keyed by normalized token.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: HashMap::new() }
    }

    /// Inserts a vector under an already-normalized key. The first insert of a
    /// key wins.
    pub fn insert(&mut self, token: impl Into<String>, vector: Vector) -> Result<(), KnowledgeError> {
        if vector.len() != self.dim {
            return Err(KnowledgeError::Dimension { expected: self.dim, found: vector.len() });
        }
        self.vectors.entry(token.into()).or_insert(vector);
        Ok(())
    }

    /// Parses `count D` followed by `word v1 .. vD` lines. Words are passed
    /// through the text pipeline so lookups match corpus tokens.
    pub fn parse(reader: impl BufRead, source: &str, pipeline: &TextPipeline) -> Result<Self, KnowledgeError> {
        let mut lines = reader.lines().enumerate();
        let header = loop {
            match lines.next() {
                Some((i, line)) => {
                    let line = line.map_err(|e| KnowledgeError::io(source, e))?;
                    if !line.trim().is_empty() {
                        break (i, line);
                    }
                }
                None => return Err(KnowledgeError::format(source, 1, "missing `count D` header")),
            }
        };
        let mut head = header.1.split_whitespace();
        let dim: usize = match (head.next(), head.next().and_then(|d| d.parse().ok())) {
            (Some(_), Some(d)) if d > 0 => d,
            _ => return Err(KnowledgeError::format(source, header.0 + 1, "header must be `count D`")),
        };
        let mut table = Self::new(dim);
        for (i, line) in lines {
            let line = line.map_err(|e| KnowledgeError::io(source, e))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values: Result<Vec<f64>, _> = parts.map(str::parse::<f64>).collect();
            let values = values.map_err(|_| KnowledgeError::format(source, i + 1, "non-numeric component"))?;
            if values.len() != dim {
                return Err(KnowledgeError::format(
                    source,
                    i + 1,
                    &format!("expected {dim} components, found {}", values.len()),
                ));
            }
            let lower = word.to_lowercase();
            let key = if pipeline.is_stopword(&lower) { lower } else { pipeline.normalize_word(&lower) };
            table.vectors.entry(key).or_insert(values);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Vector for a normalized token; absent tokens have no vector.
    pub fn get(&self, token: &str) -> Option<&Vector> {
        self.vectors.get(token)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.vectors.keys()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

pub fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_word2vec_text() {
        let src = "3 2\nhealth 1 0\nminister 0 1\nHealth 5 5\n";
        let t = EmbeddingTable::parse(src.as_bytes(), "emb", &TextPipeline::default()).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("health"), Some(&vec![1.0, 0.0]));
        assert_eq!(t.get("minist"), Some(&vec![0.0, 1.0]));
        assert!(t.get("budget").is_none());
    }

    #[test]
    fn rejects_ragged_rows() {
        let src = "1 3\nhealth 1 0\n";
        let err = EmbeddingTable::parse(src.as_bytes(), "emb", &TextPipeline::default()).unwrap_err();
        assert!(err.to_string().contains("expected 3"), "{err}");
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[0.0, 1.0]), 0.0);
    }
}
