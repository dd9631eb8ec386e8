//! Order-m additive-smoothing count model and its text artifact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{Corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::numfmt;
use crate::stats::{count_contexts, ContextCounts, ContextStats, Distribution};
use crate::vocab::{TokenId, Vocabulary, BOS};

pub const ARTIFACT_MAGIC: &str = "lmcollapse-count-lm";
pub const ARTIFACT_VERSION: u32 = 1;

/// A count model: `p(v|x) = (N_{x;v} + ε) / (N_x + ε(|V|−1))` for every
/// non-BOS token `v`, with `p(BOS|x) = 0`. Always strictly positive on
/// the non-BOS tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct CountLM {
    order: usize,
    smoothing: f64,
    vocab: Vocabulary,
    counts: ContextCounts,
}

pub fn train_count_lm(
    corpus: &Corpus,
    vocab: &Vocabulary,
    order: usize,
    smoothing: f64,
) -> Result<CountLM> {
    if !(smoothing.is_finite() && smoothing > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be positive, got {smoothing}"
        )));
    }
    if vocab.size() < 2 {
        return Err(Error::InvalidVocabulary("no tokens besides BOS".into()));
    }
    let counts = count_contexts(corpus, order, vocab.size())?;
    Ok(CountLM {
        order,
        smoothing,
        vocab: vocab.clone(),
        counts,
    })
}

impl CountLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn counts(&self) -> &ContextCounts {
        &self.counts
    }

    /// The model's own key for a context: last `order` tokens, BOS-padded.
    pub fn context_key(&self, context: &[TokenId]) -> TokenSequence {
        let take = self.order.min(context.len());
        let mut key = vec![BOS; self.order - take];
        key.extend_from_slice(&context[context.len() - take..]);
        TokenSequence(key)
    }

    pub fn stats(&self, context: &[TokenId]) -> Option<&ContextStats> {
        self.counts.get(&self.context_key(context))
    }

    /// Fills `out` (length |V|) with the next-token distribution.
    pub fn predict_into(&self, context: &[TokenId], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.vocab.size());
        let denom_extra = self.smoothing * (self.vocab.size() - 1) as f64;
        match self.stats(context) {
            Some(stats) => {
                let denom = stats.n_total() + denom_extra;
                for (o, &c) in out.iter_mut().zip(stats.n_per_token()) {
                    *o = (c + self.smoothing) / denom;
                }
            }
            None => out.fill(1.0 / (self.vocab.size() - 1) as f64),
        }
        out[BOS as usize] = 0.0;
    }

    pub fn next_token_dist(&self, context: &[TokenId]) -> Distribution {
        let mut out = vec![0.0; self.vocab.size()];
        self.predict_into(context, &mut out);
        Distribution::from_raw(out)
    }

    pub fn prob(&self, context: &[TokenId], token: TokenId) -> f64 {
        if token == BOS || token as usize >= self.vocab.size() {
            return 0.0;
        }
        let v1 = (self.vocab.size() - 1) as f64;
        match self.stats(context) {
            Some(s) => (s.count(token) + self.smoothing) / (s.n_total() + self.smoothing * v1),
            None => 1.0 / v1,
        }
    }

    /// Versioned text artifact: header, then one line per nonzero
    /// (context, token) count, sorted by context then token.
    pub fn to_artifact(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{ARTIFACT_MAGIC} {ARTIFACT_VERSION}");
        let _ = writeln!(out, "order {}", self.order);
        let _ = writeln!(out, "smoothing {}", numfmt::num(self.smoothing));
        let _ = writeln!(out, "vocab {}", self.vocab.labels().join(" "));
        let mut lines = Vec::new();
        for (ctx, stats) in self.counts.iter() {
            for (tok, &c) in stats.n_per_token().iter().enumerate() {
                if c != 0.0 {
                    lines.push(format!(
                        "{}\t{}\t{}",
                        self.vocab.render(ctx.tokens()),
                        self.vocab.labels()[tok],
                        numfmt::count(c)
                    ));
                }
            }
        }
        let _ = writeln!(out, "counts {}", lines.len());
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_artifact()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_artifact(&text, &path.display().to_string())
    }

    pub fn from_artifact(text: &str, origin: &str) -> Result<Self> {
        let bad = |m: String| Error::parse(origin, m);
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key}`, found `{line}`")))
        };
        let version = header(ARTIFACT_MAGIC)?;
        if version != ARTIFACT_VERSION.to_string() {
            return Err(bad(format!("unsupported artifact version {version}")));
        }
        let order: usize = header("order")?
            .parse()
            .map_err(|_| bad("bad order".into()))?;
        let smoothing = numfmt::parse_opt(&header("smoothing")?)
            .ok()
            .flatten()
            .ok_or_else(|| bad("bad smoothing".into()))?;
        let vocab = Vocabulary::with_bos(
            header("vocab")?.split(' ').map(str::to_string).collect(),
        )?;
        let n_lines: usize = header("counts")?
            .parse()
            .map_err(|_| bad("bad counts header".into()))?;
        let mut per_ctx: BTreeMap<TokenSequence, Vec<f64>> = BTreeMap::new();
        let mut seen = 0usize;
        for line in lines {
            let mut fields = line.split('\t');
            let (Some(ctx), Some(tok), Some(count), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad(format!("malformed count line `{line}`")));
            };
            let ctx = ctx
                .split(' ')
                .map(|l| vocab.require_id(l))
                .collect::<Result<Vec<_>>>()?;
            if ctx.len() != order {
                return Err(bad(format!("context length {} != order {order}", ctx.len())));
            }
            let tok = vocab.require_id(tok)?;
            let count = numfmt::parse_opt(count)
                .ok()
                .flatten()
                .filter(|c| *c >= 0.0)
                .ok_or_else(|| bad(format!("bad count `{count}`")))?;
            per_ctx
                .entry(TokenSequence(ctx))
                .or_insert_with(|| vec![0.0; vocab.size()])[tok as usize] += count;
            seen += 1;
        }
        if seen != n_lines {
            return Err(bad(format!("expected {n_lines} count lines, found {seen}")));
        }
        let map = per_ctx
            .into_iter()
            .map(|(ctx, counts)| {
                let stats = ContextStats::new(ctx.clone(), counts)?;
                Ok((ctx, stats))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let counts = ContextCounts::from_parts(order, vocab.size(), map);
        if order == 0 || !(smoothing > 0.0) {
            return Err(bad("order and smoothing must be positive".into()));
        }
        Ok(CountLM {
            order,
            smoothing,
            vocab,
            counts,
        })
    }
}
