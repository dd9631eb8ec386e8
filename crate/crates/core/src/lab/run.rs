//! The recursive training loop and empirical error extraction.

use crate::corpus::{subsample, Corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::lab::eval::{perplexity, validation_loss};
use crate::lab::generate::{derive_seed, generate_corpus, GenerationConfig, SyntheticChain};
use crate::lab::model::{train_count_lm, CountLM};
use crate::recurrence::{decompose_error, min_slack, Paradigm, Recurrence};
use crate::stats::{count_contexts, ContextStats, Distribution};
use crate::vocab::{TokenId, Vocabulary, BOS};

const TAG_GENERATE: u64 = 1;
const TAG_SUBSAMPLE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Probe {
    pub context: TokenSequence,
    pub token: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paradigm: Paradigm,
    pub generations: usize,
    pub order: usize,
    pub smoothing: f64,
    /// `num_sequences` is ignored: every generation trains on as many
    /// sequences as the initial training set.
    pub generation: GenerationConfig,
    /// Empty means "pick the default pair".
    pub probes: Vec<Probe>,
    pub eval_holdout_fraction: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.paradigm.validate()?;
        if self.generations == 0 {
            return Err(Error::InvalidArgument("generations must be at least 1".into()));
        }
        if self.order == 0 {
            return Err(Error::InvalidArgument("order must be at least 1".into()));
        }
        if !(self.eval_holdout_fraction > 0.0 && self.eval_holdout_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eval_holdout_fraction must lie in (0,1), got {}",
                self.eval_holdout_fraction
            )));
        }
        GenerationConfig {
            num_sequences: 1,
            ..self.generation
        }
        .validate(self.order)
    }
}

/// The initial data and, when it was drawn from a known chain, the chain.
#[derive(Debug, Clone)]
pub struct LabInput {
    pub vocab: Vocabulary,
    pub corpus: Corpus,
    pub chain: Option<SyntheticChain>,
}

impl LabInput {
    pub fn from_chain(chain: SyntheticChain, num_sequences: usize, seq_length: usize, seed: u64) -> Self {
        let corpus = chain.sample_corpus(num_sequences, seq_length, seed);
        Self {
            vocab: chain.vocab().clone(),
            corpus,
            chain: Some(chain),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationMetrics {
    pub generation: usize,
    pub val_loss: f64,
    pub perplexity: f64,
    /// `p̂_n(token | context)` for each probe, in probe order.
    pub probe_p_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub probe: Probe,
    /// Analytic chain probability, or the initial training frequency.
    pub p_true: f64,
    /// Initial training counts at the probe context, BOS dropped.
    pub initial: ContextStats,
    /// Model distribution at the context per generation, BOS dropped.
    pub p_hat: Vec<Vec<f64>>,
    /// Extracted error vector per generation, BOS dropped.
    pub alphas: Vec<Vec<f64>>,
}

impl ProbeReport {
    /// Index of the probe token in the BOS-free vectors.
    pub fn component(&self) -> usize {
        self.probe.token as usize - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub generations: Vec<GenerationMetrics>,
    pub probes: Vec<ProbeReport>,
}

/// Handed to the observer once per generation, after training.
pub struct GenerationView<'a> {
    pub generation: usize,
    pub model: &'a CountLM,
    pub training: &'a Corpus,
}

/// Holdout split: the last `round(fraction × len)` sequences (at least one)
/// are held out for validation.
pub fn split_holdout(corpus: Corpus, fraction: f64) -> Result<(Corpus, Corpus)> {
    let len = corpus.len();
    let held = ((fraction * len as f64).round() as usize).max(1);
    if held >= len {
        return Err(Error::InvalidArgument(format!(
            "corpus of {len} sequences is too small for a {fraction} holdout"
        )));
    }
    Ok(corpus.split_tail(held))
}

/// Highest-count (context, token) pair outside the start context, plus the
/// rarest observed sibling under the same context.
pub fn default_probes(training: &Corpus, vocab: &Vocabulary, order: usize) -> Result<Vec<Probe>> {
    let counts = count_contexts(training, order, vocab.size())?;
    let mut best: Option<(&TokenSequence, TokenId, f64)> = None;
    for (ctx, stats) in counts.iter() {
        if ctx.tokens().iter().all(|&t| t == BOS) {
            continue;
        }
        for (tok, &c) in stats.n_per_token().iter().enumerate().skip(1) {
            if best.map_or(true, |(_, _, b)| c > b) {
                best = Some((ctx, tok as TokenId, c));
            }
        }
    }
    let (ctx, top, _) = best.ok_or(Error::EmptyCorpus)?;
    let stats = counts.get(ctx).expect("context came from the map");
    let sibling = (1..vocab.size() as TokenId)
        .filter(|&t| t != top)
        .map(|t| (t, stats.count(t)))
        .min_by(|a, b| {
            // rarest seen token first, unseen tokens last
            let key = |c: f64| if c > 0.0 { c } else { f64::INFINITY };
            key(a.1).total_cmp(&key(b.1))
        });
    let mut probes = vec![Probe {
        context: ctx.clone(),
        token: top,
    }];
    if let Some((t, _)) = sibling {
        probes.push(Probe {
            context: ctx.clone(),
            token: t,
        });
    }
    Ok(probes)
}

/// Training corpus of generation `generation + 1` under Replace: a sample
/// from generation `generation`'s model only.
pub fn replace_next_corpus(
    model: &CountLM,
    config: &RunConfig,
    train_size: usize,
    seed: u64,
    generation: usize,
) -> Result<Corpus> {
    generate_corpus(
        model,
        &GenerationConfig {
            num_sequences: train_size,
            seed: derive_seed(seed, TAG_GENERATE, generation as u64),
            ..config.generation
        },
    )
}

/// Tracks one probe context through the recurrence, turning observed
/// model distributions into error vectors.
struct Extractor {
    recurrence: Recurrence,
}

impl Extractor {
    fn new(initial: &ContextStats, paradigm: Paradigm) -> Result<Self> {
        Ok(Self {
            recurrence: Recurrence::new(initial, paradigm)?,
        })
    }

    fn observe(&mut self, p_hat: &[f64]) -> Result<Vec<f64>> {
        let target = Distribution::from_weights(p_hat)?;
        let reference = self.recurrence.reference();
        let slack = min_slack(&target, &reference)?;
        let d = decompose_error(&target, &reference, slack)?;
        self.recurrence.advance_with(&d.alpha_i)?;
        Ok(d.alpha_i)
    }
}

/// Runs `config.generations` rounds of train → evaluate → generate.
///
/// The observer sees every trained model together with its training
/// corpus, for persistence.
pub fn run_recursive<F>(input: &LabInput, config: &RunConfig, seed: u64, mut observer: F) -> Result<RunReport>
where
    F: FnMut(&GenerationView<'_>) -> Result<()>,
{
    config.validate()?;
    let vocab = &input.vocab;
    input.corpus.check(vocab.size())?;
    let (training, eval) = split_holdout(input.corpus.clone(), config.eval_holdout_fraction)?;
    let train_size = training.len();
    let initial_counts = count_contexts(&training, config.order, vocab.size())?;

    let probes = if config.probes.is_empty() {
        default_probes(&training, vocab, config.order)?
    } else {
        config.probes.clone()
    };
    let mut probe_reports = Vec::with_capacity(probes.len());
    let mut extractors = Vec::with_capacity(probes.len());
    for probe in probes {
        if probe.token == BOS || probe.token as usize >= vocab.size() {
            return Err(Error::InvalidArgument(format!(
                "probe token id {} is not a predictable token",
                probe.token
            )));
        }
        let key = padded_key(probe.context.tokens(), config.order);
        let stats = initial_counts
            .get(&key)
            .ok_or_else(|| Error::ProbeUnseen(vocab.render(probe.context.tokens())))?
            .without_bos();
        let p_true = match &input.chain {
            Some(chain) => chain.prob(key.tokens(), probe.token),
            None => stats.count(probe.token - 1) / stats.n_total(),
        };
        extractors.push(Extractor::new(&stats, config.paradigm)?);
        probe_reports.push(ProbeReport {
            probe,
            p_true,
            initial: stats,
            p_hat: Vec::with_capacity(config.generations),
            alphas: Vec::with_capacity(config.generations),
        });
    }

    let mut pool = match config.paradigm {
        Paradigm::Accumulate { .. } => Some(training.clone()),
        Paradigm::Replace => None,
    };
    let mut current = training;
    let mut generations = Vec::with_capacity(config.generations);
    for n in 1..=config.generations {
        let model = train_count_lm(&current, vocab, config.order, config.smoothing)?;
        observer(&GenerationView {
            generation: n,
            model: &model,
            training: &current,
        })?;
        let val_loss = validation_loss(&model, &eval, config.generation.window)?;
        let mut probe_p_hat = Vec::with_capacity(probe_reports.len());
        for (report, extractor) in probe_reports.iter_mut().zip(&mut extractors) {
            let dist = model.next_token_dist(report.probe.context.tokens());
            let p = dist.probs()[1..].to_vec();
            probe_p_hat.push(model.prob(report.probe.context.tokens(), report.probe.token));
            report.alphas.push(extractor.observe(&p)?);
            report.p_hat.push(p);
        }
        generations.push(GenerationMetrics {
            generation: n,
            val_loss,
            perplexity: perplexity(val_loss),
            probe_p_hat,
        });
        if n == config.generations {
            break;
        }
        current = match (&config.paradigm, pool.as_mut()) {
            (Paradigm::Replace, _) => replace_next_corpus(&model, config, train_size, seed, n)?,
            (Paradigm::Accumulate { k }, Some(pool)) => {
                let added = ((k * train_size as f64).round() as usize).max(1);
                pool.extend(generate_corpus(
                    &model,
                    &GenerationConfig {
                        num_sequences: added,
                        seed: derive_seed(seed, TAG_GENERATE, n as u64),
                        ..config.generation
                    },
                )?);
                subsample(pool, train_size, derive_seed(seed, TAG_SUBSAMPLE, n as u64))?
            }
            (Paradigm::Accumulate { .. }, None) => unreachable!("pool exists for accumulate"),
        };
    }
    Ok(RunReport {
        generations,
        probes: probe_reports,
    })
}

fn padded_key(context: &[TokenId], order: usize) -> TokenSequence {
    let take = order.min(context.len());
    let mut key = vec![BOS; order - take];
    key.extend_from_slice(&context[context.len() - take..]);
    TokenSequence(key)
}
