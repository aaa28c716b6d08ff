use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Records with an id, a fixed-width embedding and an optional binary label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCorpus {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    labels: Option<Vec<u8>>,
}

impl EmbeddingCorpus {
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>, labels: Option<Vec<u8>>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if ids.len() != vectors.len() {
            return Err(Error::Dimension {
                expected: vectors.len(),
                got: ids.len(),
            });
        }
        let d = vectors[0].len();
        if d == 0 {
            return Err(Error::Shape(
                "embeddings must have at least one dimension".into(),
            ));
        }
        for v in &vectors {
            if v.len() != d {
                return Err(Error::Shape(format!(
                    "expected dimension {d}, got {}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("embedding"));
            }
        }
        if let Some(l) = &labels {
            if l.len() != vectors.len() {
                return Err(Error::Dimension {
                    expected: vectors.len(),
                    got: l.len(),
                });
            }
            if l.iter().any(|&v| v > 1) {
                return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            ids,
            vectors,
            labels,
        })
    }

    /// Ids `"0"`, `"1"`, ... for in-memory data.
    pub fn from_vectors(vectors: Vec<Vec<f64>>, labels: Option<Vec<u8>>) -> Result<Self> {
        let ids = (0..vectors.len()).map(|i| i.to_string()).collect();
        Self::new(ids, vectors, labels)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    /// Labels, or an error naming `purpose` when the corpus has none.
    pub fn require_labels(&self, purpose: &str) -> Result<&[u8]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::MissingLabels(format!("{purpose} needs labeled records")))
    }

    /// The records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&i) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.len(),
            });
        }
        Self::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            self.labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        )
    }

    /// A copy with every label flipped.
    pub fn with_flipped_labels(&self) -> Self {
        let mut c = self.clone();
        if let Some(l) = &mut c.labels {
            l.iter_mut().for_each(|v| *v = 1 - *v);
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let c = EmbeddingCorpus::from_vectors(vec![vec![1.0, 2.0, 3.0]; 2], None).unwrap();
        assert_eq!((c.len(), c.dim()), (2, 3));
        assert!(matches!(
            EmbeddingCorpus::from_vectors(vec![vec![1.0; 3], vec![1.0; 4]], None),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            EmbeddingCorpus::from_vectors(vec![vec![f64::NAN]], None),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            c.require_labels("bcos"),
            Err(Error::MissingLabels(_))
        ));
        assert!(EmbeddingCorpus::from_vectors(vec![], None).is_err());
    }

    #[test]
    fn subset_keeps_order() {
        let c = EmbeddingCorpus::from_vectors(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            Some(vec![0, 1, 1]),
        )
        .unwrap();
        let s = c.subset(&[2, 0]).unwrap();
        assert_eq!(s.ids(), ["2", "0"]);
        assert_eq!(s.labels().unwrap(), [1, 0]);
        assert!(c.subset(&[3]).is_err());
    }
}
