//! Randomized oracle-equivalence suites for the recurrence engine.
//!
//! * Oracle A: iterated recurrences against the closed-form states.
//! * Oracle B: Accumulate states against the telescoped one-step identity
//!   `y_i[n] = y_i[n−1] + α_i[n] − ((1+(n−2)k)/(1+(n−1)k)) α_i[n−1]`.
//! * Zero-error invariance and normalization.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::numfmt;
use crate::recurrence::{closed_states, iterate, rel_err, Paradigm};
use crate::schedule::ErrorSchedule;
use crate::stats::{ground_truth, ContextStats};

pub const ORACLE_TOL: f64 = 1e-9;
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    Constant,
    PowerDecay,
    RandomUniform,
    Explicit,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 4] = [
        InstanceKind::Constant,
        InstanceKind::PowerDecay,
        InstanceKind::RandomUniform,
        InstanceKind::Explicit,
    ];
}

/// One tracked context with an error schedule.
#[derive(Debug, Clone)]
pub struct Instance {
    pub stats: ContextStats,
    pub schedule: ErrorSchedule,
}

/// Error magnitudes are drawn on the same scale as the counts:
/// `u · 10^s` with `u ~ U(0,1)`, `s ~ U(0,4)`.
fn magnitude(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen::<f64>() * 10f64.powf(rng.gen_range(0.0..4.0))
}

/// |V| in [2, 20], integer counts in [1, 10^4].
pub fn random_stats(rng: &mut ChaCha8Rng) -> ContextStats {
    let dim = rng.gen_range(2..=20usize);
    let counts = (0..dim).map(|_| rng.gen_range(1..=10_000u32) as f64).collect();
    ContextStats::from_counts(counts).expect("positive counts")
}

/// Constant schedule with at least one strictly positive component.
pub fn random_constant(rng: &mut ChaCha8Rng, dim: usize) -> ErrorSchedule {
    let mut c: Vec<f64> = (0..dim)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { magnitude(rng) })
        .collect();
    if c.iter().all(|&x| x == 0.0) {
        c[rng.gen_range(0..dim)] = 1.0 + magnitude(rng);
    }
    ErrorSchedule::constant(c).expect("valid constant schedule")
}

pub fn random_schedule(
    rng: &mut ChaCha8Rng,
    kind: InstanceKind,
    dim: usize,
    n_max: u64,
) -> ErrorSchedule {
    let schedule = match kind {
        InstanceKind::Constant => return random_constant(rng, dim),
        InstanceKind::PowerDecay => {
            let c = (0..dim).map(|_| magnitude(rng)).collect();
            ErrorSchedule::power_decay(c, rng.gen_range(0.0..2.0))
        }
        InstanceKind::RandomUniform => {
            let (mut lo, mut hi) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
            for _ in 0..dim {
                let a = magnitude(rng);
                let b = magnitude(rng);
                lo.push(a.min(b));
                hi.push(a.max(b));
            }
            ErrorSchedule::random_uniform(lo, hi, rng.gen())
        }
        InstanceKind::Explicit => {
            let rows = (0..n_max.max(1))
                .map(|_| {
                    (0..dim)
                        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { magnitude(rng) })
                        .collect()
                })
                .collect();
            ErrorSchedule::explicit(rows)
        }
    };
    schedule.expect("generated schedule is valid")
}

/// Deterministic instance `trial` of the suite seeded by `seed`.
pub fn random_instance(seed: u64, trial: u64, kind: InstanceKind, n_max: u64) -> Instance {
    let mut rng = instance_rng(seed, trial);
    let stats = random_stats(&mut rng);
    let schedule = random_schedule(&mut rng, kind, stats.dim(), n_max);
    Instance { stats, schedule }
}

pub fn instance_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub trials: u64,
    pub n_max: u64,
    pub ks: Vec<f64>,
    pub seed: u64,
    /// Perturbs one closed-form term so that the suites must fail.
    pub inject_fault: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            n_max: 500,
            ks: vec![0.25, 1.0, 4.0],
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: String,
    pub checks: u64,
    pub worst_error: f64,
    pub tolerance: f64,
}

impl SuiteReport {
    fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            checks: 0,
            worst_error: 0.0,
            tolerance,
        }
    }

    fn record(&mut self, err: f64) {
        self.checks += 1;
        // NaN must register as a failure.
        if !(err <= self.worst_error) {
            self.worst_error = if err.is_nan() { f64::INFINITY } else { err };
        }
    }

    fn merge(&mut self, other: &SuiteReport) {
        self.checks += other.checks;
        self.worst_error = self.worst_error.max(other.worst_error);
    }

    pub fn passed(&self) -> bool {
        self.worst_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("suite,checks,worst_error,tolerance,passed\n");
        for s in &self.suites {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.name,
                s.checks,
                numfmt::num(s.worst_error),
                numfmt::num(s.tolerance),
                s.passed()
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.suites {
            let _ = writeln!(
                out,
                "{:<5} {:<34} checks={:<10} worst={:.3e} tol={:.0e}",
                if s.passed() { "PASS" } else { "FAIL" },
                s.name,
                s.checks,
                s.worst_error,
                s.tolerance
            );
        }
        out
    }
}

fn paradigms(ks: &[f64]) -> Vec<Paradigm> {
    std::iter::once(Paradigm::Replace)
        .chain(ks.iter().map(|&k| Paradigm::Accumulate { k }))
        .collect()
}

fn label(p: Paradigm) -> String {
    match p {
        Paradigm::Replace => "replace".into(),
        Paradigm::Accumulate { k } => format!("accumulate k={k}"),
    }
}

fn suite_names(ks: &[f64]) -> Vec<(String, f64)> {
    let mut names = Vec::new();
    for p in paradigms(ks) {
        names.push((format!("oracle-A {}", label(p)), ORACLE_TOL));
    }
    for &k in ks {
        names.push((format!("oracle-B accumulate k={k}"), ORACLE_TOL));
    }
    names.push(("zero-error invariance".into(), EXACT_TOL));
    names.push(("normalization".into(), EXACT_TOL));
    names
}

fn run_trial(opts: &VerifyOptions, trial: u64) -> Result<Vec<SuiteReport>> {
    let kind = InstanceKind::ALL[(trial % 4) as usize];
    let inst = random_instance(opts.seed, trial, kind, opts.n_max);
    let mut reports: Vec<SuiteReport> = suite_names(&opts.ks)
        .into_iter()
        .map(|(n, t)| SuiteReport::new(n, t))
        .collect();
    let ps = paradigms(&opts.ks);
    let n_par = ps.len();
    let zero_idx = n_par + opts.ks.len();
    let norm_idx = zero_idx + 1;

    for (pi, &paradigm) in ps.iter().enumerate() {
        let traj = iterate(&inst.stats, &inst.schedule, paradigm, opts.n_max)?;
        let closed = closed_states(
            &inst.stats,
            &inst.schedule,
            paradigm,
            opts.n_max,
            opts.inject_fault,
        )?;
        for (it, cf) in traj.states.iter().zip(&closed) {
            let r = &mut reports[pi];
            for (a, b) in it.y_per_token().iter().zip(cf.y_per_token()) {
                r.record(rel_err(*a, *b));
            }
            r.record(rel_err(it.y_total(), cf.y_total()));
            for (a, b) in it.p_hat().iter().zip(cf.p_hat()) {
                r.record(rel_err(*a, b));
            }
        }
        for row in &traj.rows {
            let total: f64 = crate::sum::sum(&row.p_hat);
            reports[norm_idx].record((total - 1.0).abs());
        }
        if let Paradigm::Accumulate { k } = paradigm {
            let r = &mut reports[n_par + pi - 1];
            for n in 3..=opts.n_max {
                let prev = &traj.states[(n - 2) as usize];
                let cur = &traj.states[(n - 1) as usize];
                let a_n = inst.schedule.alpha(n)?;
                let a_p = inst.schedule.alpha(n - 1)?;
                let c = (1.0 + (n - 2) as f64 * k) / (1.0 + (n - 1) as f64 * k);
                for i in 0..a_n.len() {
                    let rhs = prev.y_per_token()[i] + a_n[i] - c * a_p[i];
                    r.record(rel_err(cur.y_per_token()[i], rhs));
                }
                let rhs = prev.y_total() + crate::sum::sum(&a_n) - c * crate::sum::sum(&a_p);
                r.record(rel_err(cur.y_total(), rhs));
            }
        }
        let zero = ErrorSchedule::zero(inst.stats.dim());
        let truth = ground_truth(&inst.stats)?;
        let flat = iterate(&inst.stats, &zero, paradigm, opts.n_max)?;
        for row in &flat.rows {
            for (p, q) in row.p_hat.iter().zip(truth.probs()) {
                reports[zero_idx].record((p - q).abs());
            }
        }
    }
    Ok(reports)
}

/// Runs every suite over `opts.trials` randomized instances.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    for &k in &opts.ks {
        Paradigm::accumulate(k)?;
    }
    let per_trial: Vec<Vec<SuiteReport>> = (0..opts.trials)
        .into_par_iter()
        .map(|t| run_trial(opts, t))
        .collect::<Result<_>>()?;
    let mut suites: Vec<SuiteReport> = suite_names(&opts.ks)
        .into_iter()
        .map(|(n, t)| SuiteReport::new(n, t))
        .collect();
    for trial in &per_trial {
        for (acc, r) in suites.iter_mut().zip(trial) {
            acc.merge(r);
        }
    }
    Ok(VerifyReport { suites })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic_and_in_range() {
        for trial in 0..40 {
            let kind = InstanceKind::ALL[trial % 4];
            let a = random_instance(5, trial as u64, kind, 20);
            let b = random_instance(5, trial as u64, kind, 20);
            assert_eq!(a.stats, b.stats);
            assert_eq!(a.schedule, b.schedule);
            assert!((2..=20).contains(&a.stats.dim()));
            assert!(a.stats.n_per_token().iter().all(|&c| (1.0..=1e4).contains(&c)));
        }
    }

    #[test]
    fn constant_instances_are_eligible() {
        for t in 0..100 {
            let mut rng = instance_rng(1, t);
            assert!(random_constant(&mut rng, 3).is_theorem_eligible());
        }
    }

    #[test]
    fn small_verify_passes() {
        let opts = VerifyOptions {
            trials: 12,
            n_max: 60,
            ..Default::default()
        };
        let report = run_verify(&opts).unwrap();
        assert!(report.passed(), "{}", report.to_text());
        assert_eq!(report.suites.len(), 4 + 3 + 2);
    }

    #[test]
    fn base_case_only() {
        let opts = VerifyOptions {
            trials: 8,
            n_max: 1,
            ..Default::default()
        };
        let report = run_verify(&opts).unwrap();
        assert!(report.passed());
        // the identity needs n >= 3
        assert_eq!(report.suite("oracle-B accumulate k=1").unwrap().checks, 0);
    }

    #[test]
    fn injected_fault_is_detected() {
        let opts = VerifyOptions {
            trials: 8,
            n_max: 20,
            inject_fault: true,
            ..Default::default()
        };
        let report = run_verify(&opts).unwrap();
        assert!(!report.passed());
        assert!(!report.suite("oracle-A replace").unwrap().passed());
        assert!(!report.suite("oracle-A accumulate k=1").unwrap().passed());
    }
}
