//! Context occurrence counts and the distributions derived from them.

use std::collections::BTreeMap;

use crate::corpus::{Corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::sum;
use crate::vocab::{TokenId, BOS};

/// Normalization tolerance for [`Distribution`].
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Occurrence counts of one context `x`: `n_total` is N_x and
/// `n_per_token[i]` is N_{x;v_i}. Counts are real-valued so the recurrence
/// engine can carry non-integer states through the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextStats {
    pub context: TokenSequence,
    n_total: f64,
    n_per_token: Vec<f64>,
}

impl ContextStats {
    pub fn new(context: TokenSequence, n_per_token: Vec<f64>) -> Result<Self> {
        if n_per_token.is_empty() {
            return Err(Error::InvalidArgument("counts vector is empty".into()));
        }
        if let Some(bad) = n_per_token.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "count {bad} is negative or not finite"
            )));
        }
        let n_total = sum::sum(&n_per_token);
        Ok(Self {
            context,
            n_total,
            n_per_token,
        })
    }

    /// Counts for an anonymous context, as used by the recurrence engine.
    pub fn from_counts(n_per_token: Vec<f64>) -> Result<Self> {
        Self::new(TokenSequence::default(), n_per_token)
    }

    fn zeros(context: TokenSequence, dim: usize) -> Self {
        Self {
            context,
            n_total: 0.0,
            n_per_token: vec![0.0; dim],
        }
    }

    pub fn n_total(&self) -> f64 {
        self.n_total
    }

    pub fn n_per_token(&self) -> &[f64] {
        &self.n_per_token
    }

    pub fn count(&self, token: TokenId) -> f64 {
        self.n_per_token.get(token as usize).copied().unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.n_per_token.len()
    }

    /// Drops the BOS component, which is never a prediction target.
    pub fn without_bos(&self) -> ContextStats {
        ContextStats {
            context: self.context.clone(),
            n_total: self.n_total - self.n_per_token[BOS as usize],
            n_per_token: self.n_per_token[1..].to_vec(),
        }
    }
}

/// A probability vector over a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("distribution is empty".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "probability {bad} is negative or not finite"
            )));
        }
        let total = sum::sum(&probs);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total = sum::sum(weights);
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidArgument("weights do not have a positive sum".into()));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| *p >= 0.0));
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

/// The ground-truth next-token distribution `N_{x;v_i} / N_x`.
pub fn ground_truth(stats: &ContextStats) -> Result<Distribution> {
    if stats.n_total <= 0.0 {
        return Err(Error::UnseenContext);
    }
    Ok(Distribution::from_raw(
        stats.n_per_token.iter().map(|c| c / stats.n_total).collect(),
    ))
}

/// All order-`m` context counts of a corpus, keyed by BOS-padded window.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextCounts {
    order: usize,
    vocab_size: usize,
    map: BTreeMap<TokenSequence, ContextStats>,
}

impl ContextCounts {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn get(&self, context: &TokenSequence) -> Option<&ContextStats> {
        self.map.get(context)
    }

    /// Contexts in lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (&TokenSequence, &ContextStats)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Σ over contexts of N_x.
    pub fn total_positions(&self) -> f64 {
        self.map.values().map(ContextStats::n_total).sum()
    }

    pub(crate) fn from_parts(
        order: usize,
        vocab_size: usize,
        map: BTreeMap<TokenSequence, ContextStats>,
    ) -> Self {
        Self {
            order,
            vocab_size,
            map,
        }
    }
}

/// The length-`order` context preceding position `t`, left-padded with BOS.
pub fn context_window(tokens: &[TokenId], t: usize, order: usize) -> TokenSequence {
    let take = order.min(t);
    let mut ctx = vec![BOS; order - take];
    ctx.extend_from_slice(&tokens[t - take..t]);
    TokenSequence(ctx)
}

/// Counts every (context, successor) pair within each sequence.
pub fn count_contexts(corpus: &Corpus, order: usize, vocab_size: usize) -> Result<ContextCounts> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.check(vocab_size)?;
    let mut map: BTreeMap<TokenSequence, ContextStats> = BTreeMap::new();
    for seq in corpus.sequences() {
        let tokens = seq.tokens();
        for t in 0..tokens.len() {
            let ctx = context_window(tokens, t, order);
            let entry = map
                .entry(ctx)
                .or_insert_with_key(|k| ContextStats::zeros(k.clone(), vocab_size));
            entry.n_per_token[tokens[t] as usize] += 1.0;
            entry.n_total += 1.0;
        }
    }
    Ok(ContextCounts::from_parts(order, vocab_size, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // BOS=0, a=1, b=2
    fn abab() -> Corpus {
        Corpus::new(vec![TokenSequence(vec![1, 2, 1, 2])])
    }

    #[test]
    fn hand_counted_abab() {
        let counts = count_contexts(&abab(), 1, 3).unwrap();
        let a = counts.get(&TokenSequence(vec![1])).unwrap();
        assert_eq!(a.n_total(), 2.0);
        assert_eq!(a.n_per_token(), &[0.0, 0.0, 2.0]);
        let b = counts.get(&TokenSequence(vec![2])).unwrap();
        assert_eq!(b.n_total(), 1.0);
        assert_eq!(b.n_per_token(), &[0.0, 1.0, 0.0]);
        let bos = counts.get(&TokenSequence(vec![0])).unwrap();
        assert_eq!(bos.n_total(), 1.0);
        assert_eq!(bos.n_per_token(), &[0.0, 1.0, 0.0]);
        assert_eq!(counts.len(), 3);
    }

    #[test]
    fn single_token_sequence() {
        let c = Corpus::new(vec![TokenSequence(vec![1])]);
        let counts = count_contexts(&c, 1, 2).unwrap();
        assert_eq!(counts.len(), 1);
        assert_eq!(counts.get(&TokenSequence(vec![0])).unwrap().n_per_token(), &[0.0, 1.0]);
    }

    #[test]
    fn order_two_pads_with_bos() {
        let counts = count_contexts(&abab(), 2, 3).unwrap();
        assert!(counts.get(&TokenSequence(vec![0, 0])).is_some());
        assert!(counts.get(&TokenSequence(vec![0, 1])).is_some());
        assert_eq!(counts.get(&TokenSequence(vec![1, 2])).unwrap().n_total(), 1.0);
        assert_eq!(counts.get(&TokenSequence(vec![2, 1])).unwrap().n_total(), 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(count_contexts(&Corpus::default(), 1, 3), Err(Error::EmptyCorpus)));
        assert!(count_contexts(&abab(), 0, 3).is_err());
        assert!(count_contexts(&abab(), 1, 2).is_err());
        let empty = ContextStats::from_counts(vec![0.0, 0.0]).unwrap();
        assert!(matches!(ground_truth(&empty), Err(Error::UnseenContext)));
    }

    #[test]
    fn ground_truth_ratios() {
        let s = ContextStats::from_counts(vec![7.0, 3.0]).unwrap();
        assert_eq!(s.n_total(), 10.0);
        assert_eq!(ground_truth(&s).unwrap().probs(), &[0.7, 0.3]);
        let single = ContextStats::from_counts(vec![5.0]).unwrap();
        assert_eq!(ground_truth(&single).unwrap().probs(), &[1.0]);
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.5, 0.5]).is_ok());
        assert!(Distribution::new(vec![0.5, 0.6]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert!(!Distribution::new(vec![0.0, 1.0]).unwrap().is_strictly_positive());
    }

    fn corpus_strategy() -> impl Strategy<Value = Corpus> {
        prop::collection::vec(prop::collection::vec(1u32..6, 0..20), 1..12)
            .prop_map(|seqs| Corpus::new(seqs.into_iter().map(TokenSequence).collect()))
            .prop_filter("nonempty", |c| !c.is_empty())
    }

    proptest! {
        #[test]
        fn counting_conserves_positions(corpus in corpus_strategy(), order in 1usize..4) {
            let counts = count_contexts(&corpus, order, 6).unwrap();
            prop_assert_eq!(counts.total_positions(), corpus.total_tokens() as f64);
            for (_, stats) in counts.iter() {
                prop_assert_eq!(stats.n_total(), stats.n_per_token().iter().sum::<f64>());
                let p = ground_truth(stats).unwrap();
                prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert_eq!(p.prob(BOS), 0.0);
            }
        }
    }
}
