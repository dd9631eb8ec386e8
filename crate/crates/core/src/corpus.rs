//! Token sequences, corpora, sequence-granular subsampling and the
//! whitespace corpus text format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TokenSequence(pub Vec<TokenId>);

impl TokenSequence {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        Self(tokens)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self, vocab_size: usize) -> Result<()> {
        match self.0.iter().find(|&&t| t as usize >= vocab_size) {
            Some(&t) => Err(Error::InvalidArgument(format!(
                "token index {t} out of range for vocabulary of size {vocab_size}"
            ))),
            None => Ok(()),
        }
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(v: Vec<TokenId>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    sequences: Vec<TokenSequence>,
    total_tokens: usize,
}

impl Corpus {
    pub fn new(sequences: Vec<TokenSequence>) -> Self {
        let total_tokens = sequences.iter().map(TokenSequence::len).sum();
        Self {
            sequences,
            total_tokens,
        }
    }

    pub fn sequences(&self) -> &[TokenSequence] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total_tokens == 0
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn extend(&mut self, other: Corpus) {
        self.total_tokens += other.total_tokens;
        self.sequences.extend(other.sequences);
    }

    /// Splits off the last `count` sequences, returning `(head, tail)`.
    pub fn split_tail(mut self, count: usize) -> (Corpus, Corpus) {
        let at = self.sequences.len().saturating_sub(count);
        let tail = self.sequences.split_off(at);
        (Corpus::new(self.sequences), Corpus::new(tail))
    }

    pub fn check(&self, vocab_size: usize) -> Result<()> {
        self.sequences.iter().try_for_each(|s| s.check(vocab_size))
    }

    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::with_capacity(self.total_tokens * 4);
        for seq in &self.sequences {
            let _ = writeln!(out, "{}", vocab.render(seq.tokens()));
        }
        out
    }

    pub fn write_text(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        fs::write(path, self.to_text(vocab)).map_err(|e| Error::io(path, e))
    }
}

/// Parses corpus text, building a vocabulary from labels in first-appearance
/// order with BOS prepended. Blank lines are skipped.
pub fn parse_corpus_text(text: &str) -> Result<(Vocabulary, Corpus)> {
    let mut vocab = Vocabulary::new(std::iter::empty::<String>())?;
    let mut sequences = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut seq = Vec::new();
        for label in line.split(' ').filter(|l| !l.is_empty()) {
            if label == crate::vocab::BOS_LABEL {
                return Err(Error::InvalidVocabulary(format!(
                    "reserved label `{label}` appears in corpus text"
                )));
            }
            seq.push(vocab.intern(label));
        }
        sequences.push(TokenSequence(seq));
    }
    let corpus = Corpus::new(sequences);
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((vocab, corpus))
}

pub fn read_corpus(path: &Path) -> Result<(Vocabulary, Corpus)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_text(&text)
}

/// Parses corpus text against a fixed vocabulary; unknown labels are errors.
pub fn parse_corpus_with(text: &str, vocab: &Vocabulary) -> Result<Corpus> {
    let mut sequences = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let seq = line
            .split(' ')
            .filter(|l| !l.is_empty())
            .map(|l| vocab.require_id(l))
            .collect::<Result<Vec<_>>>()?;
        sequences.push(TokenSequence(seq));
    }
    Ok(Corpus::new(sequences))
}

/// Uniform sample of whole sequences without replacement, in sampled order.
pub fn subsample(pool: &Corpus, target_sequences: usize, seed: u64) -> Result<Corpus> {
    if target_sequences > pool.len() {
        return Err(Error::InsufficientPool {
            requested: target_sequences,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, pool.len(), target_sequences);
    Ok(Corpus::new(
        picked
            .into_iter()
            .map(|i| pool.sequences[i].clone())
            .collect(),
    ))
}
