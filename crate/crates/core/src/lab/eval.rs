//! Held-out cross-entropy and perplexity.

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lab::model::CountLM;
use crate::sum::NeumaierSum;

/// Mean natural-log token loss over every position of `eval`, each token
/// conditioned on at most `window` preceding tokens of its own sequence.
pub fn validation_loss(model: &CountLM, eval: &Corpus, window: usize) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut total = NeumaierSum::new();
    let mut positions = 0usize;
    for seq in eval.sequences() {
        let tokens = seq.tokens();
        for (t, &target) in tokens.iter().enumerate() {
            let start = t.saturating_sub(window);
            total += -model.prob(&tokens[start..t], target).ln();
            positions += 1;
        }
    }
    Ok(total.value() / positions as f64)
}

pub fn perplexity(loss: f64) -> f64 {
    loss.exp()
}
