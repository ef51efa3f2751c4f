use super::{numericalize, TokenSequence, Vocabulary, PAD_ID};
use crate::rng;

/// A padded group of numericalized sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    /// Positions of the member sequences in the input slice.
    pub indices: Vec<usize>,
    pub sequences: Vec<Vec<u32>>,
    pub mask: Vec<Vec<bool>>,
    pub max_len: usize,
}

/// Groups `0..n` into consecutive batches, after an optional seeded
/// Fisher–Yates shuffle.
pub fn batch_order(n: usize, batch_size: usize, shuffle_seed: Option<u64>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(seed) = shuffle_seed {
        rng::shuffle(&mut rng::seeded(seed), &mut order);
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

pub fn make_batches(
    data: &[TokenSequence],
    vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Vec<Batch> {
    batch_order(data.len(), batch_size, shuffle_seed)
        .into_iter()
        .map(|indices| {
            let ids: Vec<Vec<u32>> = indices.iter().map(|&i| numericalize(&data[i], vocab)).collect();
            let max_len = ids.iter().map(Vec::len).max().unwrap_or(0);
            let mask = ids
                .iter()
                .map(|s| (0..max_len).map(|p| p < s.len()).collect())
                .collect();
            let sequences = ids
                .into_iter()
                .map(|mut s| {
                    s.resize(max_len, PAD_ID);
                    s
                })
                .collect();
            Batch {
                indices,
                sequences,
                mask,
                max_len,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fit_vocabulary;
    use proptest::prelude::*;

    fn seqs(lens: &[usize]) -> Vec<TokenSequence> {
        lens.iter()
            .map(|&n| TokenSequence::from_words(&vec!["w"; n]))
            .collect()
    }

    #[test]
    fn sizes_without_shuffle() {
        let data = seqs(&[1, 1, 1, 1, 1]);
        let v = fit_vocabulary(&data, 1, false);
        let sizes: Vec<_> = make_batches(&data, &v, 2, None).iter().map(|b| b.indices.len()).collect();
        assert_eq!(sizes, [2, 2, 1]);
    }

    #[test]
    fn padding_and_mask() {
        let data = seqs(&[3, 1]);
        let v = fit_vocabulary(&data, 1, false);
        let b = &make_batches(&data, &v, 2, None)[0];
        assert_eq!(b.max_len, 3);
        assert_eq!(b.mask[1], [true, false, false]);
        assert_eq!(b.sequences[1], [2, 0, 0]);
    }

    #[test]
    fn same_seed_same_order() {
        assert_eq!(batch_order(40, 3, Some(9)), batch_order(40, 3, Some(9)));
        assert_ne!(batch_order(40, 40, Some(9)), batch_order(40, 40, None));
    }

    proptest! {
        #[test]
        fn batches_partition_input(n in 0usize..60, bs in 1usize..9, seed in proptest::option::of(any::<u64>())) {
            let mut all: Vec<usize> = batch_order(n, bs, seed).into_iter().flatten().collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn mask_matches_pad(lens in prop::collection::vec(0usize..7, 1..10), bs in 1usize..5) {
            let data = seqs(&lens);
            let v = fit_vocabulary(&data, 1, false);
            for b in make_batches(&data, &v, bs, Some(1)) {
                for (ids, mask) in b.sequences.iter().zip(&b.mask) {
                    prop_assert_eq!(ids.len(), b.max_len);
                    for (id, m) in ids.iter().zip(mask) {
                        prop_assert_eq!(*m, *id != PAD_ID);
                    }
                }
            }
        }
    }
}
