use serde::{Deserialize, Serialize};

use super::StyleError;
use crate::corpus::{ContinuationKey, Dataset};
use crate::formats::EmbeddingStore;
use crate::numeric::mean_vector;

/// Mean style vector of one continuation. Not re-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleCentroid {
    pub key: ContinuationKey,
    pub vector: Vec<f64>,
}

/// Arithmetic mean of a continuation's sentence vectors.
pub fn centroid_of<V: AsRef<[f64]>>(vectors: &[V]) -> Vec<f64> {
    mean_vector(vectors)
}

/// One centroid per non-empty continuation, in dataset key order.
pub fn style_centroids(dataset: &Dataset, store: &EmbeddingStore) -> Result<Vec<StyleCentroid>, StyleError> {
    dataset
        .continuations()
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| {
            let vectors = store
                .sentences(&c.key, c.len())
                .map_err(|e| StyleError::MissingEmbedding(e.to_string()))?;
            Ok(StyleCentroid {
                key: c.key.clone(),
                vector: centroid_of(&vectors),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ContinuationRecord, CutSpec, Domain, Source, StoryRecord};
    use crate::theme::Facet;

    #[test]
    fn centroid_is_not_renormalized() {
        let c = centroid_of(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        assert_eq!(c, vec![0.5, 0.5, 0.0]);
        assert!(crate::numeric::norm(&c) < 1.0);
        let v = vec![0.3, -0.2, 0.9];
        assert_eq!(centroid_of(std::slice::from_ref(&v)), v);
        let c = centroid_of(&[v.clone(), v.clone(), v.clone()]);
        assert!(c.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn missing_sentence_is_named() {
        let story = StoryRecord::new("s1", Domain::new("tmas"), "One. Two. Three. Four.");
        let key = ContinuationKey {
            story_id: "s1".into(),
            domain: Domain::new("tmas"),
            source: Source::human(),
            cut: CutSpec::from_percent(40).unwrap(),
            sample_id: 0,
        };
        let cont = ContinuationRecord {
            key: key.clone(),
            sentences: vec!["Three.".into(), "Four.".into()],
        };
        let ds = Dataset::from_records(vec![story], vec![cont]).unwrap();
        let mut store = EmbeddingStore::new(Facet::Style, 2);
        store.insert(key.clone(), 0, vec![1.0, 0.0]);
        let err = style_centroids(&ds, &store).unwrap_err();
        assert!(matches!(&err, StyleError::MissingEmbedding(m) if m.contains("sentence 1")));
        store.insert(key, 1, vec![0.0, 1.0]);
        let c = style_centroids(&ds, &store).unwrap();
        assert_eq!(c[0].vector, vec![0.5, 0.5]);
    }
}
