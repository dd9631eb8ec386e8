//! Faithful (temperature-1) sampling from count models and from the
//! synthetic ground-truth Markov chain.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::lab::model::CountLM;
use crate::vocab::{TokenId, Vocabulary, BOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationConfig {
    pub num_sequences: usize,
    pub seq_length: usize,
    pub seed: u64,
    /// Maximum number of preceding tokens consulted.
    pub window: usize,
}

impl GenerationConfig {
    pub fn validate(&self, order: usize) -> Result<()> {
        if self.num_sequences == 0 || self.seq_length == 0 || self.window == 0 {
            return Err(Error::InvalidArgument(
                "num_sequences, seq_length and window must be positive".into(),
            ));
        }
        if self.window < order {
            return Err(Error::InvalidArgument(format!(
                "window {} is smaller than model order {order}",
                self.window
            )));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer used to derive independent seeds.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed
        ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for sequence `index` of a corpus drawn with `seed`.
fn sequence_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn sample_cdf(cdf: &[f64], u: f64) -> TokenId {
    let total = *cdf.last().expect("nonempty cdf");
    let target = u * total;
    match cdf.iter().position(|&c| target < c) {
        Some(i) => i as TokenId,
        // u·total rounded onto the last boundary: take the last token with mass
        None => (1..cdf.len())
            .rev()
            .find(|&i| cdf[i] > cdf[i - 1])
            .unwrap_or(cdf.len() - 1) as TokenId,
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

/// Samples `num_sequences` sequences of `seq_length` tokens, each from an
/// empty prompt and its own substream of `config.seed`. Sequences are drawn
/// in parallel; the result does not depend on scheduling.
pub fn generate_corpus(model: &CountLM, config: &GenerationConfig) -> Result<Corpus> {
    config.validate(model.order())?;
    let order = model.order();
    let vocab_size = model.vocab().size();
    let mut cdfs: HashMap<Vec<TokenId>, Vec<f64>> = HashMap::new();
    let mut buf = vec![0.0; vocab_size];
    for (ctx, _) in model.counts().iter() {
        model.predict_into(ctx.tokens(), &mut buf);
        cdfs.insert(ctx.tokens().to_vec(), cumulative(&buf));
    }
    let mut uniform = vec![1.0 / (vocab_size - 1) as f64; vocab_size];
    uniform[BOS as usize] = 0.0;
    let uniform = cumulative(&uniform);

    let sequences = (0..config.num_sequences)
        .into_par_iter()
        .map(|index| {
            let mut rng = sequence_rng(config.seed, index);
            let mut tokens: Vec<TokenId> = Vec::with_capacity(config.seq_length);
            let mut key = vec![BOS; order];
            for _ in 0..config.seq_length {
                let cdf = cdfs.get(key.as_slice()).unwrap_or(&uniform);
                let next = sample_cdf(cdf, rng.gen::<f64>());
                tokens.push(next);
                key.rotate_left(1);
                key[order - 1] = next;
            }
            TokenSequence(tokens)
        })
        .collect();
    Ok(Corpus::new(sequences))
}

/// Order-1 ground-truth chain over `t0..t{n-1}` with a start distribution
/// in the BOS row. Rows are normalized independent U(0,1) draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticChain {
    vocab: Vocabulary,
    /// `rows[from][to]` over the full vocabulary; column BOS is zero.
    rows: Vec<Vec<f64>>,
}

impl SyntheticChain {
    pub fn random(num_tokens: usize, seed: u64) -> Result<Self> {
        if num_tokens == 0 {
            return Err(Error::InvalidArgument("chain needs at least one token".into()));
        }
        let vocab = Vocabulary::synthetic(num_tokens);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..vocab.size())
            .map(|_| {
                let mut row: Vec<f64> = (0..vocab.size()).map(|_| rng.gen::<f64>()).collect();
                row[BOS as usize] = 0.0;
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|p| *p /= total);
                row
            })
            .collect();
        Ok(Self { vocab, rows })
    }

    pub fn from_rows(vocab: Vocabulary, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != vocab.size() || rows.iter().any(|r| r.len() != vocab.size()) {
            return Err(Error::DimensionMismatch {
                expected: vocab.size(),
                actual: rows.len(),
            });
        }
        for row in &rows {
            crate::stats::Distribution::new(row.clone())?;
            if row[BOS as usize] != 0.0 {
                return Err(Error::InvalidArgument("BOS must have zero probability".into()));
            }
        }
        Ok(Self { vocab, rows })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// True `p(token | context)`; only the last context token matters.
    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        let from = context.last().copied().unwrap_or(BOS);
        self.rows[from as usize][token as usize]
    }

    pub fn sample_corpus(&self, num_sequences: usize, seq_length: usize, seed: u64) -> Corpus {
        let cdfs: Vec<Vec<f64>> = self.rows.iter().map(|r| cumulative(r)).collect();
        let sequences = (0..num_sequences)
            .into_par_iter()
            .map(|index| {
                let mut rng = sequence_rng(seed, index);
                let mut prev = BOS;
                let tokens = (0..seq_length)
                    .map(|_| {
                        prev = sample_cdf(&cdfs[prev as usize], rng.gen::<f64>());
                        prev
                    })
                    .collect();
                TokenSequence(tokens)
            })
            .collect();
        Corpus::new(sequences)
    }

    /// Stationary distribution of the token-to-token chain by power
    /// iteration, starting from the BOS row.
    pub fn stationary(&self, iterations: usize) -> Vec<f64> {
        let n = self.rows.len();
        let mut pi = self.rows[BOS as usize].clone();
        let mut next = vec![0.0; n];
        for _ in 0..iterations {
            next.fill(0.0);
            for (from, &mass) in pi.iter().enumerate().skip(1) {
                for (to, &p) in self.rows[from].iter().enumerate() {
                    next[to] += mass * p;
                }
            }
            std::mem::swap(&mut pi, &mut next);
        }
        pi
    }
}
