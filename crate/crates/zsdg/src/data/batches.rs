//! Seeded minibatch iteration.
//!
//! Each epoch reshuffles with a seeded Fisher–Yates permutation; the final
//! short batch is kept. Images are flattened row-major to `[batch, H*W*C]`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::data::LabeledImageSet;
use crate::error::{Error, Result};

/// One minibatch: flattened pixels, vocabulary label ids, and the source
/// indices into the originating set (used for cross-domain pairing).
pub struct Batch {
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

pub struct Batches<'a> {
    set: &'a LabeledImageSet,
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
}

/// Shuffled batches over `set` for one epoch, deterministic in `seed`.
pub fn epoch_batches(
    set: &LabeledImageSet,
    batch_size: usize,
    seed: u64,
) -> Result<Batches<'_>> {
    if batch_size == 0 {
        return Err(Error::usage("batch size must be >= 1"));
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    Ok(Batches {
        set,
        order,
        batch_size,
        cursor: 0,
    })
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let indices = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        let x = self.set.gather(&indices);
        let labels = indices.iter().map(|&i| self.set.label_id(i)).collect();
        Some(Batch { x, labels, indices })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tiny_set;

    #[test]
    fn same_seed_gives_identical_sequence() {
        let set = tiny_set(&[0, 1, 0, 1, 0, 1, 0, 1, 0, 1], &["a", "b"]);
        let a: Vec<Vec<usize>> = epoch_batches(&set, 4, 9).unwrap().map(|b| b.indices).collect();
        let b: Vec<Vec<usize>> = epoch_batches(&set, 4, 9).unwrap().map(|b| b.indices).collect();
        assert_eq!(a, b);
        let c: Vec<Vec<usize>> = epoch_batches(&set, 4, 10).unwrap().map(|b| b.indices).collect();
        assert_ne!(a, c);
    }

    #[test]
    fn short_final_batch_kept() {
        let set = tiny_set(&[0; 10], &["a"]);
        let sizes: Vec<usize> = epoch_batches(&set, 4, 0).unwrap().map(|b| b.labels.len()).collect();
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn batches_form_a_permutation() {
        let labels: Vec<usize> = (0..23).map(|i| i % 3).collect();
        let set = tiny_set(&labels, &["a", "b", "c"]);
        let mut seen: Vec<usize> = epoch_batches(&set, 5, 3)
            .unwrap()
            .flat_map(|b| b.indices)
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        // label multiset is preserved
        let mut batch_labels: Vec<usize> = epoch_batches(&set, 5, 3)
            .unwrap()
            .flat_map(|b| b.labels)
            .collect();
        batch_labels.sort_unstable();
        let mut want = labels.clone();
        want.sort_unstable();
        assert_eq!(batch_labels, want);
    }

    #[test]
    fn batch_rows_match_source_images() {
        let set = tiny_set(&[0, 1, 2], &["a", "b", "c"]);
        for batch in epoch_batches(&set, 2, 1).unwrap() {
            for (row, &src) in batch.indices.iter().enumerate() {
                assert_eq!(batch.x.row(row), set.image(src));
            }
        }
    }

    #[test]
    fn zero_batch_size_rejected() {
        let set = tiny_set(&[0], &["a"]);
        assert!(epoch_batches(&set, 0, 0).is_err());
    }
}
