use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBuffer {
    pub samples: Vec<Sample>,
    pub seed: u64,
    pub source_name: String,
    /// True when the source was smaller than the requested size.
    pub with_replacement: bool,
}

/// Seeded draw of `n` samples; without replacement whenever the source allows.
pub fn sample_context_buffer(source: &[Sample], n: usize, seed: u64, source_name: &str) -> Result<ContextBuffer> {
    if source.is_empty() {
        return Err(Error::EmptySource);
    }
    if n == 0 {
        return Err(Error::Precondition("buffer size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_replacement = source.len() < n;
    let samples = if with_replacement {
        log::warn!(
            "{source_name}: only {} samples for a buffer of {n}; drawing with replacement",
            source.len()
        );
        (0..n).map(|_| source[rng.gen_range(0..source.len())].clone()).collect()
    } else {
        source.choose_multiple(&mut rng, n).cloned().collect()
    };
    Ok(ContextBuffer { samples, seed, source_name: source_name.into(), with_replacement })
}

impl ContextBuffer {
    /// Numbered question/answer blocks.
    pub fn render(&self) -> String {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| format!("Sample {}:\nQuestion: {}\nAnswer: {}\n", i + 1, s.question, s.answer))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn source(n: usize) -> Vec<Sample> {
        (0..n).map(|i| Sample::new(format!("s{i}"), format!("q{i}"), format!("a{i}"))).collect()
    }

    #[test]
    fn distinct_and_reproducible() {
        let src = source(45);
        let a = sample_context_buffer(&src, 10, 7, "d").unwrap();
        let b = sample_context_buffer(&src, 10, 7, "d").unwrap();
        assert_eq!(a, b);
        let ids: BTreeSet<_> = a.samples.iter().map(|s| &s.id).collect();
        assert_eq!(ids.len(), 10);
        assert!(!a.with_replacement);
        assert_ne!(a, sample_context_buffer(&src, 10, 8, "d").unwrap());
    }

    #[test]
    fn whole_source_is_a_permutation() {
        let src = source(10);
        let buf = sample_context_buffer(&src, 10, 3, "d").unwrap();
        let mut ids: Vec<_> = buf.samples.iter().map(|s| s.id.clone()).collect();
        ids.sort();
        let mut want: Vec<_> = src.iter().map(|s| s.id.clone()).collect();
        want.sort();
        assert_eq!(ids, want);
    }

    #[test]
    fn small_source_draws_with_replacement() {
        let src = source(3);
        let buf = sample_context_buffer(&src, 10, 1, "d").unwrap();
        assert_eq!(buf.samples.len(), 10);
        assert!(buf.with_replacement);
        assert!(buf.samples.iter().all(|s| src.contains(s)));
    }

    #[test]
    fn empty_source_rejected() {
        assert!(matches!(sample_context_buffer(&[], 10, 1, "d"), Err(Error::EmptySource)));
    }
}
