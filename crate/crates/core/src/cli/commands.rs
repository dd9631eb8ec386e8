//! Bodies of the subcommands.

use std::path::PathBuf;

use crate::cli::config::{
    ConfigFile, LabConfig, ScheduleConfig, SimulateConfig, VerifyConfig, TOML_INT_MAX,
};
use crate::cli::manifest::OutDir;
use crate::cli::{Outcome, ProbeArgs};
use crate::corpus::{read_corpus, TokenSequence};
use crate::error::{Error, Result};
use crate::lab::{
    derive_seed, run_recursive, CountLM, GenerationConfig, LabInput, Probe, RunConfig, RunReport,
    SyntheticChain,
};
use crate::numfmt;
use crate::recurrence::{convergence_scan, iterate, Paradigm};
use crate::schedule::ErrorSchedule;
use crate::stats::ContextStats;
use crate::verify::{run_verify, VerifyOptions};
use crate::vocab::Vocabulary;

pub fn simulate(cfg: &SimulateConfig, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let paradigm = cfg.paradigm()?;
    let stats = ContextStats::from_counts(cfg.counts.clone())?;
    let schedule = cfg.schedule.build(seed)?;
    let traj = iterate(&stats, &schedule, paradigm, cfg.n_max)?;
    out.write("trajectory.csv", traj.to_csv())?;
    out.write("limit_ratio.csv", traj.ratio_csv())?;

    let mut warnings = Vec::new();
    if !cfg.epsilons.is_empty() {
        if schedule.is_theorem_eligible() {
            let mut csv = String::from("epsilon,n0\n");
            for &eps in &cfg.epsilons {
                let n0 = convergence_scan(&traj, eps)?;
                csv.push_str(&format!(
                    "{},{}\n",
                    numfmt::num(eps),
                    n0.map_or(String::new(), |n| n.to_string())
                ));
                match n0 {
                    Some(n) => println!("epsilon {eps}: n0 = {n}"),
                    None => println!("epsilon {eps}: no n0 within {} generations", cfg.n_max),
                }
            }
            out.write("scan.csv", csv)?;
        } else {
            warnings.push(
                "schedule is not theorem-eligible (no component is bounded away from zero); \
                 convergence scan skipped"
                    .to_string(),
            );
        }
    }
    Ok(Outcome {
        passed: true,
        warnings,
        inputs: cfg.schedule.input_path().map(PathBuf::from).into_iter().collect(),
    })
}

pub fn verify(cfg: &VerifyConfig, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let defaults = VerifyOptions::default();
    let opts = VerifyOptions {
        trials: cfg.trials.unwrap_or(defaults.trials),
        n_max: cfg.n_max.unwrap_or(defaults.n_max),
        ks: cfg.ks.clone().unwrap_or(defaults.ks),
        seed,
        inject_fault: cfg.inject_fault,
    };
    if opts.trials == 0 || opts.n_max == 0 {
        return Err(Error::Config("trials and n_max must be at least 1".into()));
    }
    let report = run_verify(&opts)?;
    print!("{}", report.to_text());
    out.write("verify.csv", report.to_csv())?;
    Ok(Outcome {
        passed: report.passed(),
        ..Outcome::default()
    })
}

fn parse_labels(vocab: &Vocabulary, labels: &str) -> Result<Vec<u32>> {
    labels.split_whitespace().map(|l| vocab.require_id(l)).collect()
}

pub fn lab(cfg: &LabConfig, seed: u64, out: &mut OutDir) -> Result<Outcome> {
    let paradigm = cfg.paradigm()?;
    let mut inputs = Vec::new();
    let input = match &cfg.initial.corpus {
        Some(path) => {
            let (vocab, corpus) = read_corpus(path)?;
            inputs.push(path.clone());
            LabInput {
                vocab,
                corpus,
                chain: None,
            }
        }
        None => {
            let chain_seed = cfg
                .initial
                .chain_seed
                .unwrap_or_else(|| derive_seed(seed, 10, 0) & TOML_INT_MAX);
            let chain = SyntheticChain::random(cfg.initial.tokens, chain_seed)?;
            LabInput::from_chain(
                chain,
                cfg.initial.num_sequences,
                cfg.initial.seq_length,
                derive_seed(seed, 11, 0),
            )
        }
    };
    let probes = cfg
        .probes
        .iter()
        .map(|p| {
            let token = input.vocab.require_id(&p.token)?;
            Ok(Probe {
                context: TokenSequence(parse_labels(&input.vocab, &p.context)?),
                token,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let run_cfg = RunConfig {
        paradigm,
        generations: cfg.generations,
        order: cfg.order,
        smoothing: cfg.smoothing,
        generation: GenerationConfig {
            num_sequences: 1,
            seq_length: cfg.seq_length,
            seed,
            window: cfg.window,
        },
        probes,
        eval_holdout_fraction: cfg.eval_holdout_fraction,
    };
    out.write("corpora/initial.txt", input.corpus.to_text(&input.vocab))?;
    let report = run_recursive(&input, &run_cfg, seed, |view| {
        out.write(&format!("models/gen_{:03}.lm", view.generation), view.model.to_artifact())?;
        if cfg.persist_corpora {
            out.write(
                &format!("corpora/gen_{:03}.txt", view.generation),
                view.training.to_text(&input.vocab),
            )?;
        }
        Ok(())
    })?;
    out.write("metrics.csv", metrics_csv(&report, &input.vocab)?)?;
    for (i, probe) in report.probes.iter().enumerate() {
        let idx = i + 1;
        let schedule = ErrorSchedule::empirical(probe.alphas.clone())?;
        out.write(&format!("alpha_{idx}.csv"), schedule.to_csv(cfg.generations as u64)?)?;
        out.write(
            &format!("replay_{idx}.toml"),
            replay_config(cfg, paradigm, &probe.initial, idx)?,
        )?;
    }
    if let (Some(first), Some(last)) = (report.generations.first(), report.generations.last()) {
        println!(
            "generations {}..{}: perplexity {:.4} -> {:.4}",
            first.generation, last.generation, first.perplexity, last.perplexity
        );
    }
    Ok(Outcome {
        passed: true,
        warnings: Vec::new(),
        inputs,
    })
}

/// Simulate config that replays probe `idx`'s extracted schedule.
fn replay_config(
    cfg: &LabConfig,
    paradigm: Paradigm,
    initial: &ContextStats,
    idx: usize,
) -> Result<String> {
    let k = match paradigm {
        Paradigm::Replace => None,
        Paradigm::Accumulate { k } => Some(k),
    };
    let file = ConfigFile {
        simulate: Some(SimulateConfig {
            paradigm: cfg.paradigm,
            k,
            counts: initial.n_per_token().to_vec(),
            n_max: cfg.generations as u64,
            epsilons: Vec::new(),
            schedule: ScheduleConfig::Empirical {
                rows: None,
                path: Some(PathBuf::from(format!("alpha_{idx}.csv"))),
            },
        }),
        ..ConfigFile::default()
    };
    file.to_toml()
}

pub const METRICS_HEADER: [&str; 8] = [
    "generation",
    "probe_context",
    "probe_token",
    "p_hat",
    "p_true",
    "abs_dev",
    "val_loss",
    "perplexity",
];

pub fn metrics_csv(report: &RunReport, vocab: &Vocabulary) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for g in &report.generations {
        for (probe, &p_hat) in report.probes.iter().zip(&g.probe_p_hat) {
            w.write_record([
                g.generation.to_string(),
                vocab.render(probe.probe.context.tokens()),
                vocab.render(&[probe.probe.token]),
                numfmt::num(p_hat),
                numfmt::num(probe.p_true),
                numfmt::num((p_hat - probe.p_true).abs()),
                numfmt::num(g.val_loss),
                numfmt::num(g.perplexity),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn probe(args: &ProbeArgs) -> Result<String> {
    let model = CountLM::load(&args.model)?;
    let vocab = model.vocab();
    let context = args
        .context
        .iter()
        .map(|l| vocab.require_id(l))
        .collect::<Result<Vec<_>>>()?;
    let target = vocab.require_id(&args.target)?;
    Ok(numfmt::num12(model.prob(&context, target)))
}
