//! Per-generation output-distribution recurrences for one tracked context.
//!
//! A generation's output is carried as a state `(y_i[n], y[n])` with
//! `p̂_n(v_i) = y_i[n] / y[n]`. Under Replace the state grows by the
//! generation's error vector; under Accumulate-Subsample the error is added
//! to a weighted average of the initial counts and all earlier states. Both
//! recurrences have closed-form solutions, evaluated here through an
//! independent summation route so that the two can check each other.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt;
use crate::schedule::ErrorSchedule;
use crate::stats::{ContextStats, Distribution};
use crate::sum::{self, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Paradigm {
    Replace,
    /// Accumulate-Subsample with rate `k` (k = 1 is the balanced cycle).
    Accumulate { k: f64 },
}

impl Paradigm {
    pub fn accumulate(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidRate(k));
        }
        Ok(Paradigm::Accumulate { k })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Paradigm::Replace => Ok(()),
            Paradigm::Accumulate { k } => Self::accumulate(k).map(|_| ()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Paradigm::Replace => "replace",
            Paradigm::Accumulate { .. } => "accumulate",
        }
    }
}

/// A positive representative `(y_i, y)` of a next-token distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    y_per_token: Vec<f64>,
    y_total: f64,
}

impl StateVector {
    pub fn new(y_per_token: Vec<f64>, y_total: f64) -> Result<Self> {
        if y_per_token.iter().any(|y| !(y.is_finite() && *y >= 0.0)) {
            return Err(Error::InvalidArgument("state entries must be finite and >= 0".into()));
        }
        if !(y_total.is_finite() && y_total > 0.0) {
            return Err(Error::InvalidArgument("state total must be positive".into()));
        }
        let s = sum::sum(&y_per_token);
        if (s - y_total).abs() > 1e-9 * y_total {
            return Err(Error::InvalidArgument(format!(
                "state total {y_total} differs from component sum {s}"
            )));
        }
        Ok(Self {
            y_per_token,
            y_total,
        })
    }

    pub fn from_stats(stats: &ContextStats) -> Result<Self> {
        if stats.n_total() <= 0.0 {
            return Err(Error::UnseenContext);
        }
        Ok(Self {
            y_per_token: stats.n_per_token().to_vec(),
            y_total: stats.n_total(),
        })
    }

    pub fn y_per_token(&self) -> &[f64] {
        &self.y_per_token
    }

    pub fn y_total(&self) -> f64 {
        self.y_total
    }

    pub fn dim(&self) -> usize {
        self.y_per_token.len()
    }

    pub fn p_hat(&self) -> Vec<f64> {
        self.y_per_token.iter().map(|y| y / self.y_total).collect()
    }
}

/// Smallest total error `α*` for which every component of the
/// decomposition of `target` against `reference` is non-negative.
pub fn min_slack(target: &Distribution, reference: &StateVector) -> Result<f64> {
    check_dims(target.dim(), reference.dim())?;
    let mut best = f64::NEG_INFINITY;
    for (i, (&p, &y)) in target.probs().iter().zip(reference.y_per_token()).enumerate() {
        if p <= 0.0 {
            return Err(Error::ZeroProbability { index: i });
        }
        best = best.max((y - p * reference.y_total()) / p);
    }
    // The p-weighted mean of the candidates is zero, so the maximum is
    // non-negative up to rounding.
    Ok(best.max(0.0))
}

/// Error vector that turns `reference` into `target` under one
/// generation's update: `α_i = p_i·S + p_i·y − y_i`, with Σ α_i = S.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub alpha_i: Vec<f64>,
    pub alpha: f64,
}

pub fn decompose_error(
    target: &Distribution,
    reference: &StateVector,
    slack: f64,
) -> Result<Decomposition> {
    let floor = min_slack(target, reference)?;
    let scale = (reference.y_total() + slack.abs()).max(1.0);
    let tol = 1e-12 * scale;
    if !slack.is_finite() || slack < floor - tol {
        return Err(Error::NegativeAlpha {
            slack,
            min_slack: floor,
        });
    }
    let y = reference.y_total();
    let mut alpha_i = Vec::with_capacity(target.dim());
    for (&p, &yi) in target.probs().iter().zip(reference.y_per_token()) {
        let a = p * slack + p * y - yi;
        if a < -tol {
            return Err(Error::NegativeAlpha {
                slack,
                min_slack: floor,
            });
        }
        alpha_i.push(a.max(0.0));
    }
    let alpha = sum::sum(&alpha_i);
    Ok(Decomposition { alpha_i, alpha })
}

fn check_dims(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Sequential evaluator of the recurrence for one context.
///
/// After `n` calls to [`Recurrence::step`] the current state is generation
/// `n`'s representative. [`Recurrence::reference`] is the state the next
/// generation's error is added to.
#[derive(Debug, Clone)]
pub struct Recurrence {
    paradigm: Paradigm,
    n0: Vec<f64>,
    n0_total: f64,
    generation: u64,
    y: Vec<f64>,
    y_total: f64,
    /// Replace: running state. Accumulate: Σ_{j≤n} y_i[j].
    acc: Vec<NeumaierSum>,
    acc_total: NeumaierSum,
    /// Limit-ratio numerators/denominator (k factor omitted, it cancels).
    ratio_num: Vec<NeumaierSum>,
    ratio_den: NeumaierSum,
    /// Ratio reported for the current generation.
    ratio: Option<Vec<f64>>,
    alpha_buf: Vec<f64>,
}

impl Recurrence {
    pub fn new(stats: &ContextStats, paradigm: Paradigm) -> Result<Self> {
        paradigm.validate()?;
        if stats.n_total() <= 0.0 {
            return Err(Error::UnseenContext);
        }
        let dim = stats.dim();
        let n0 = stats.n_per_token().to_vec();
        let (acc, acc_total) = match paradigm {
            Paradigm::Replace => (
                n0.iter().map(|&c| NeumaierSum::from(c)).collect(),
                NeumaierSum::from(stats.n_total()),
            ),
            Paradigm::Accumulate { .. } => (vec![NeumaierSum::new(); dim], NeumaierSum::new()),
        };
        Ok(Self {
            paradigm,
            n0_total: stats.n_total(),
            n0,
            generation: 0,
            y: vec![0.0; dim],
            y_total: 0.0,
            acc,
            acc_total,
            ratio_num: vec![NeumaierSum::new(); dim],
            ratio_den: NeumaierSum::new(),
            ratio: None,
            alpha_buf: vec![0.0; dim],
        })
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn dim(&self) -> usize {
        self.n0.len()
    }

    /// State the next generation's error vector is added to.
    pub fn reference(&self) -> StateVector {
        let (y, y_total) = match self.paradigm {
            Paradigm::Replace => (
                self.acc.iter().map(NeumaierSum::value).collect(),
                self.acc_total.value(),
            ),
            Paradigm::Accumulate { k } => {
                let n = self.generation as f64;
                let w = 1.0 + n * k;
                (
                    self.n0
                        .iter()
                        .zip(&self.acc)
                        .map(|(c, h)| (c + k * h.value()) / w)
                        .collect(),
                    (self.n0_total + k * self.acc_total.value()) / w,
                )
            }
        };
        StateVector {
            y_per_token: y,
            y_total,
        }
    }

    /// Advances one generation with an explicit error vector.
    pub fn advance_with(&mut self, alpha: &[f64]) -> Result<()> {
        check_dims(self.dim(), alpha.len())?;
        if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidArgument("error terms must be non-negative".into()));
        }
        let n = self.generation + 1;
        let alpha_total = sum::sum(alpha);
        match self.paradigm {
            Paradigm::Replace => {
                for ((acc, y), &a) in self.acc.iter_mut().zip(&mut self.y).zip(alpha) {
                    *acc += a;
                    *y = acc.value();
                }
                self.acc_total += alpha_total;
                self.y_total = self.acc_total.value();
                for (num, &a) in self.ratio_num.iter_mut().zip(alpha) {
                    *num += a;
                }
                self.ratio_den += alpha_total;
                self.ratio = self.current_ratio();
            }
            Paradigm::Accumulate { k } => {
                let w = 1.0 + (n - 1) as f64 * k;
                for (i, &a) in alpha.iter().enumerate() {
                    let yi = (self.n0[i] + k * self.acc[i].value()) / w + a;
                    self.y[i] = yi;
                    self.acc[i] += yi;
                }
                self.y_total = (self.n0_total + k * self.acc_total.value()) / w + alpha_total;
                self.acc_total += self.y_total;
                // The ratio at generation n weighs errors 1..n-1 only.
                self.ratio = self.current_ratio();
                let weight = 1.0 / (1.0 + n as f64 * k);
                for (num, &a) in self.ratio_num.iter_mut().zip(alpha) {
                    *num += a * weight;
                }
                self.ratio_den += alpha_total * weight;
            }
        }
        self.generation = n;
        Ok(())
    }

    /// Advances one generation using the schedule's α[n+1].
    pub fn step(&mut self, schedule: &ErrorSchedule) -> Result<()> {
        check_dims(self.dim(), schedule.dim())?;
        let mut buf = std::mem::take(&mut self.alpha_buf);
        let result = schedule
            .alpha_into(self.generation + 1, &mut buf)
            .and_then(|_| self.advance_with(&buf));
        self.alpha_buf = buf;
        result
    }

    fn current_ratio(&self) -> Option<Vec<f64>> {
        let den = self.ratio_den.value();
        (den > 0.0).then(|| self.ratio_num.iter().map(|s| s.value() / den).collect())
    }

    pub fn state(&self) -> StateVector {
        StateVector {
            y_per_token: self.y.clone(),
            y_total: self.y_total,
        }
    }

    pub fn y_per_token(&self) -> &[f64] {
        &self.y
    }

    pub fn y_total(&self) -> f64 {
        self.y_total
    }

    pub fn p_hat(&self) -> Vec<f64> {
        self.y.iter().map(|y| y / self.y_total).collect()
    }

    pub fn ratio(&self) -> Option<&[f64]> {
        self.ratio.as_deref()
    }

    /// max_i |p̂_n(v_i) − ratio_i|, when the ratio is defined.
    pub fn deviation(&self) -> Option<f64> {
        let ratio = self.ratio.as_ref()?;
        Some(
            self.y
                .iter()
                .zip(ratio)
                .map(|(y, r)| (y / self.y_total - r).abs())
                .fold(0.0, f64::max),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub n: u64,
    pub p_hat: Vec<f64>,
    pub ratio: Option<Vec<f64>>,
    pub deviation: Option<f64>,
}

/// Generation-indexed output distributions with limit-ratio diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub paradigm: Paradigm,
    pub dim: usize,
    /// The schedule's error series provably converges.
    pub summable: bool,
    pub states: Vec<StateVector>,
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row for generation `n` (1-based).
    pub fn row(&self, n: u64) -> Option<&TrajectoryRow> {
        n.checked_sub(1).and_then(|i| self.rows.get(i as usize))
    }

    pub fn to_csv(&self) -> String {
        trajectory_csv(self.dim, &self.rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// `n,ratio_1..ratio_V` rows.
    pub fn ratio_csv(&self) -> String {
        let mut out = String::from("n");
        for i in 1..=self.dim {
            let _ = write!(out, ",ratio_{i}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{}", row.n);
            for i in 0..self.dim {
                let v = row.ratio.as_ref().map_or(f64::NAN, |r| r[i]);
                let _ = write!(out, ",{}", numfmt::num(v));
            }
            out.push('\n');
        }
        out
    }
}

fn trajectory_csv(dim: usize, rows: &[TrajectoryRow]) -> String {
    let mut out = String::from("n");
    for i in 1..=dim {
        let _ = write!(out, ",p_hat_{i}");
    }
    for i in 1..=dim {
        let _ = write!(out, ",ratio_{i}");
    }
    out.push_str(",deviation\n");
    for row in rows {
        let _ = write!(out, "{}", row.n);
        for p in &row.p_hat {
            let _ = write!(out, ",{}", numfmt::num(*p));
        }
        for i in 0..dim {
            let v = row.ratio.as_ref().map_or(f64::NAN, |r| r[i]);
            let _ = write!(out, ",{}", numfmt::num(v));
        }
        let _ = writeln!(out, ",{}", numfmt::num(row.deviation.unwrap_or(f64::NAN)));
    }
    out
}

/// Parses a trajectory CSV written by [`Trajectory::to_csv`].
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let bad = |m: String| Error::parse("trajectory csv", m);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.len() < 4 || (headers.len() - 2) % 2 != 0 {
        return Err(bad("unexpected column count".into()));
    }
    let dim = (headers.len() - 2) / 2;
    let expected = trajectory_csv(dim, &[]);
    if headers.iter().collect::<Vec<_>>().join(",") != expected.trim_end() {
        return Err(bad("unexpected header".into()));
    }
    let field = |s: &str| numfmt::parse_opt(s).map_err(|e| bad(format!("`{s}`: {e}")));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let n = record[0].parse().map_err(|_| bad(format!("bad n `{}`", &record[0])))?;
        let p_hat = (1..=dim)
            .map(|i| field(&record[i])?.ok_or_else(|| bad("missing p_hat".into())))
            .collect::<Result<Vec<_>>>()?;
        let ratio = (dim + 1..=2 * dim)
            .map(|i| field(&record[i]))
            .collect::<Result<Option<Vec<_>>>>()?;
        let deviation = field(&record[2 * dim + 1])?;
        rows.push(TrajectoryRow {
            n,
            p_hat,
            ratio,
            deviation,
        });
    }
    Ok(rows)
}

/// Runs the recurrence for generations `1..=n_max`.
pub fn iterate(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    paradigm: Paradigm,
    n_max: u64,
) -> Result<Trajectory> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    check_dims(stats.dim(), schedule.dim())?;
    let mut rec = Recurrence::new(stats, paradigm)?;
    let mut states = Vec::with_capacity(n_max as usize);
    let mut rows = Vec::with_capacity(n_max as usize);
    for _ in 0..n_max {
        rec.step(schedule)?;
        states.push(rec.state());
        rows.push(TrajectoryRow {
            n: rec.generation(),
            p_hat: rec.p_hat(),
            ratio: rec.ratio().map(<[f64]>::to_vec),
            deviation: rec.deviation(),
        });
    }
    Ok(Trajectory {
        paradigm,
        dim: stats.dim(),
        summable: schedule.is_summable(),
        states,
        rows,
    })
}

pub fn iterate_replace(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    n_max: u64,
) -> Result<Trajectory> {
    iterate(stats, schedule, Paradigm::Replace, n_max)
}

pub fn iterate_accumulate(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    k: f64,
    n_max: u64,
) -> Result<Trajectory> {
    iterate(stats, schedule, Paradigm::accumulate(k)?, n_max)
}

fn closed_pre(stats: &ContextStats, schedule: &ErrorSchedule, n: u64) -> Result<()> {
    if stats.n_total() <= 0.0 {
        return Err(Error::UnseenContext);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("generations are numbered from 1".into()));
    }
    check_dims(stats.dim(), schedule.dim())
}

/// Closed-form Replace state: `y_i[n] = N_{x;v_i} + Σ_{j≤n} α_i[j]`.
pub fn closed_replace_state(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    n: u64,
) -> Result<StateVector> {
    closed_pre(stats, schedule, n)?;
    let dim = stats.dim();
    let mut num: Vec<NeumaierSum> = stats.n_per_token().iter().map(|&c| c.into()).collect();
    let mut den = NeumaierSum::from(stats.n_total());
    let mut a = vec![0.0; dim];
    for j in 1..=n {
        schedule.alpha_into(j, &mut a)?;
        for (s, &x) in num.iter_mut().zip(&a) {
            *s += x;
        }
        den += sum::sum(&a);
    }
    Ok(StateVector {
        y_per_token: num.iter().map(NeumaierSum::value).collect(),
        y_total: den.value(),
    })
}

pub fn closed_replace(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    n: u64,
) -> Result<Distribution> {
    Ok(Distribution::from_raw(closed_replace_state(stats, schedule, n)?.p_hat()))
}

/// Closed-form Accumulate state:
/// `y_i[n] = N_{x;v_i} + α_i[n] + k Σ_{j<n} α_i[j]/(1+jk)`.
pub fn closed_accumulate_state(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    k: f64,
    n: u64,
) -> Result<StateVector> {
    Paradigm::accumulate(k)?;
    closed_pre(stats, schedule, n)?;
    let dim = stats.dim();
    let mut weighted = vec![NeumaierSum::new(); dim];
    let mut weighted_total = NeumaierSum::new();
    let mut a = vec![0.0; dim];
    for j in 1..n {
        schedule.alpha_into(j, &mut a)?;
        let w = 1.0 / (1.0 + j as f64 * k);
        for (s, &x) in weighted.iter_mut().zip(&a) {
            *s += x * w;
        }
        weighted_total += sum::sum(&a) * w;
    }
    schedule.alpha_into(n, &mut a)?;
    Ok(StateVector {
        y_per_token: (0..dim)
            .map(|i| stats.n_per_token()[i] + a[i] + k * weighted[i].value())
            .collect(),
        y_total: stats.n_total() + sum::sum(&a) + k * weighted_total.value(),
    })
}

pub fn closed_accumulate(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    k: f64,
    n: u64,
) -> Result<Distribution> {
    Ok(Distribution::from_raw(
        closed_accumulate_state(stats, schedule, k, n)?.p_hat(),
    ))
}

/// Closed-form states for every generation `1..=n_max`, evaluated with
/// running sums of the closed-form terms (never the recurrence's state
/// history). `perturb` shifts one weight index and exists only to prove
/// that the verifier can detect a wrong closed form.
pub fn closed_states(
    stats: &ContextStats,
    schedule: &ErrorSchedule,
    paradigm: Paradigm,
    n_max: u64,
    perturb: bool,
) -> Result<Vec<StateVector>> {
    paradigm.validate()?;
    closed_pre(stats, schedule, n_max.max(1))?;
    let dim = stats.dim();
    let mut out = Vec::with_capacity(n_max as usize);
    let mut sums = vec![NeumaierSum::new(); dim];
    let mut sum_total = NeumaierSum::new();
    let mut a = vec![0.0; dim];
    for n in 1..=n_max {
        schedule.alpha_into(n, &mut a)?;
        let a_total = sum::sum(&a);
        match paradigm {
            Paradigm::Replace => {
                let w = if perturb && n == 1 { 1.5 } else { 1.0 };
                for (s, &x) in sums.iter_mut().zip(&a) {
                    *s += x * w;
                }
                sum_total += a_total * w;
                out.push(StateVector {
                    y_per_token: (0..dim)
                        .map(|i| stats.n_per_token()[i] + sums[i].value())
                        .collect(),
                    y_total: stats.n_total() + sum_total.value(),
                });
            }
            Paradigm::Accumulate { k } => {
                out.push(StateVector {
                    y_per_token: (0..dim)
                        .map(|i| stats.n_per_token()[i] + a[i] + k * sums[i].value())
                        .collect(),
                    y_total: stats.n_total() + a_total + k * sum_total.value(),
                });
                let j = if perturb && n == 1 { 2.0 } else { n as f64 };
                let w = 1.0 / (1.0 + j * k);
                for (s, &x) in sums.iter_mut().zip(&a) {
                    *s += x * w;
                }
                sum_total += a_total * w;
            }
        }
    }
    Ok(out)
}

/// The error-only term p̂_n approaches for large n.
pub fn limit_ratio(schedule: &ErrorSchedule, paradigm: Paradigm, n: u64) -> Result<Distribution> {
    paradigm.validate()?;
    let dim = schedule.dim();
    let mut num = vec![NeumaierSum::new(); dim];
    let mut den = NeumaierSum::new();
    let mut a = vec![0.0; dim];
    let (last, k) = match paradigm {
        Paradigm::Replace => (n, None),
        Paradigm::Accumulate { k } => (n.saturating_sub(1), Some(k)),
    };
    for j in 1..=last {
        schedule.alpha_into(j, &mut a)?;
        let w = k.map_or(1.0, |k| k / (1.0 + j as f64 * k));
        for (s, &x) in num.iter_mut().zip(&a) {
            *s += x * w;
        }
        den += sum::sum(&a) * w;
    }
    let den = den.value();
    if den <= 0.0 {
        return Err(Error::UndefinedRatio(n));
    }
    Ok(Distribution::from_raw(
        num.iter().map(|s| s.value() / den).collect(),
    ))
}

/// Streaming form of [`convergence_scan`] for several thresholds at once.
#[derive(Debug, Clone)]
pub struct ConvergenceTracker {
    epsilons: Vec<f64>,
    last_violation: Vec<u64>,
    last_n: u64,
}

impl ConvergenceTracker {
    pub fn new(epsilons: &[f64]) -> Result<Self> {
        if epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(Self {
            epsilons: epsilons.to_vec(),
            last_violation: vec![0; epsilons.len()],
            last_n: 0,
        })
    }

    /// Records generation `n`; an undefined deviation counts as a violation.
    pub fn observe(&mut self, n: u64, deviation: Option<f64>) {
        for (eps, last) in self.epsilons.iter().zip(&mut self.last_violation) {
            if !matches!(deviation, Some(d) if d < *eps) {
                *last = n;
            }
        }
        self.last_n = n;
    }

    /// `n_0` per epsilon: deviation < ε for every observed n > n_0.
    pub fn finish(&self) -> Vec<Option<u64>> {
        self.last_violation
            .iter()
            .map(|&v| (self.last_n > 0 && v < self.last_n).then_some(v))
            .collect()
    }
}

/// Smallest `n_0` such that the deviation stays below `epsilon` for every
/// later generation of the trajectory; `None` if the last generation still
/// violates it.
pub fn convergence_scan(trajectory: &Trajectory, epsilon: f64) -> Result<Option<u64>> {
    if trajectory.summable {
        return Err(Error::SummableSchedule);
    }
    let mut tracker = ConvergenceTracker::new(&[epsilon])?;
    for row in &trajectory.rows {
        tracker.observe(row.n, row.deviation);
    }
    Ok(tracker.finish()[0])
}

/// Relative difference used by every oracle comparison.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(c: &[f64]) -> ContextStats {
        ContextStats::from_counts(c.to_vec()).unwrap()
    }

    fn state(y: &[f64]) -> StateVector {
        StateVector::new(y.to_vec(), y.iter().sum()).unwrap()
    }

    fn dist(p: &[f64]) -> Distribution {
        Distribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn min_slack_examples() {
        let r = state(&[7.0, 3.0]);
        assert_eq!(min_slack(&dist(&[0.7, 0.3]), &r).unwrap(), 0.0);
        assert_eq!(min_slack(&dist(&[0.5, 0.5]), &r).unwrap(), 4.0);
        assert!(matches!(
            min_slack(&Distribution::new(vec![1.0, 0.0]).unwrap(), &r),
            Err(Error::ZeroProbability { index: 1 })
        ));
        // homogeneity in the reference
        let scaled = state(&[70.0, 30.0]);
        assert_eq!(min_slack(&dist(&[0.5, 0.5]), &scaled).unwrap(), 40.0);
    }

    #[test]
    fn decompose_examples() {
        let r = state(&[7.0, 3.0]);
        let d = decompose_error(&dist(&[0.7, 0.3]), &r, 0.0).unwrap();
        assert_eq!(d.alpha_i, vec![0.0, 0.0]);
        assert_eq!(d.alpha, 0.0);

        let d = decompose_error(&dist(&[0.5, 0.5]), &r, 4.0).unwrap();
        assert_eq!(d.alpha_i, vec![0.0, 4.0]);
        assert_eq!(d.alpha, 4.0);
        assert_eq!((7.0 + d.alpha_i[0]) / (10.0 + d.alpha), 0.5);
        assert_eq!((3.0 + d.alpha_i[1]) / (10.0 + d.alpha), 0.5);

        assert!(matches!(
            decompose_error(&dist(&[0.5, 0.5]), &r, 3.0),
            Err(Error::NegativeAlpha { .. })
        ));
        // any slack above the floor also works
        let d = decompose_error(&dist(&[0.5, 0.5]), &r, 10.0).unwrap();
        assert_eq!(d.alpha_i, vec![3.0, 7.0]);
    }

    #[test]
    fn replace_worked_example() {
        // (7+n)/(10+n) at n=90 is 97/100.
        let s = stats(&[7.0, 3.0]);
        let sch = ErrorSchedule::constant(vec![1.0, 0.0]).unwrap();
        let t = iterate_replace(&s, &sch, 90).unwrap();
        let last = t.row(90).unwrap();
        assert!((last.p_hat[0] - 0.97).abs() < 1e-15);
        assert!((last.p_hat[1] - 0.03).abs() < 1e-15);
        let closed = closed_replace(&s, &sch, 90).unwrap();
        assert!((closed.probs()[0] - 0.97).abs() < 1e-15);
        for n in 1..=90u64 {
            let expected = (7.0 + n as f64) / (10.0 + n as f64);
            assert!(rel_err(t.row(n).unwrap().p_hat[0], expected) < 1e-15);
        }
    }

    #[test]
    fn worked_example_n0_is_290() {
        let s = stats(&[7.0, 3.0]);
        let sch = ErrorSchedule::constant(vec![1.0, 0.0]).unwrap();
        let t = iterate_replace(&s, &sch, 2000).unwrap();
        assert_eq!(convergence_scan(&t, 0.01).unwrap(), Some(290));
        // deviation(n) = 3/(10+n)
        for row in &t.rows {
            let d = 3.0 / (10.0 + row.n as f64);
            assert!(rel_err(row.deviation.unwrap(), d) < 1e-12);
        }
    }

    #[test]
    fn base_cases_match_initial_value() {
        let s = stats(&[4.0, 1.0, 5.0]);
        let sch = ErrorSchedule::constant(vec![0.5, 2.0, 0.0]).unwrap();
        let expected: Vec<f64> = [4.5, 3.0, 5.0].iter().map(|v| v / 12.5).collect();
        for p in [
            closed_replace(&s, &sch, 1).unwrap(),
            closed_accumulate(&s, &sch, 0.3, 1).unwrap(),
        ] {
            for (a, b) in p.probs().iter().zip(&expected) {
                assert!(rel_err(*a, *b) < 1e-15);
            }
        }
        let ta = iterate_accumulate(&s, &sch, 0.3, 1).unwrap();
        assert_eq!(ta.rows[0].ratio, None);
        assert_eq!(ta.rows[0].deviation, None);
    }

    #[test]
    fn zero_schedule_is_invariant() {
        let s = stats(&[5.0, 9.0, 1.0]);
        let truth = crate::stats::ground_truth(&s).unwrap();
        for paradigm in [Paradigm::Replace, Paradigm::Accumulate { k: 2.5 }] {
            let t = iterate(&s, &ErrorSchedule::zero(3), paradigm, 100).unwrap();
            for row in &t.rows {
                for (p, q) in row.p_hat.iter().zip(truth.probs()) {
                    assert!((p - q).abs() <= 1e-12);
                }
                assert_eq!(row.ratio, None);
            }
            assert!(matches!(convergence_scan(&t, 0.01), Err(Error::SummableSchedule)));
        }
    }

    #[test]
    fn accumulate_matches_closed_form_and_identity() {
        let s = stats(&[12.0, 3.0, 40.0]);
        let sch = ErrorSchedule::random_uniform(vec![0.0, 0.5, 0.0], vec![4.0, 1.0, 9.0], 3).unwrap();
        for k in [0.25, 1.0, 4.0] {
            let t = iterate_accumulate(&s, &sch, k, 60).unwrap();
            for n in [1u64, 2, 3, 17, 60] {
                let closed = closed_accumulate_state(&s, &sch, k, n).unwrap();
                let it = &t.states[(n - 1) as usize];
                for (a, b) in it.y_per_token().iter().zip(closed.y_per_token()) {
                    assert!(rel_err(*a, *b) < 1e-12, "k={k} n={n}");
                }
                assert!(rel_err(it.y_total(), closed.y_total()) < 1e-12);
            }
            // one-step telescoped identity
            for n in 3..=60u64 {
                let (prev, cur) = (&t.states[(n - 2) as usize], &t.states[(n - 1) as usize]);
                let a_n = sch.alpha(n).unwrap();
                let a_prev = sch.alpha(n - 1).unwrap();
                let c = (1.0 + (n - 2) as f64 * k) / (1.0 + (n - 1) as f64 * k);
                for i in 0..3 {
                    let rhs = prev.y_per_token()[i] + a_n[i] - c * a_prev[i];
                    assert!(rel_err(cur.y_per_token()[i], rhs) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn limit_ratio_examples() {
        let c = ErrorSchedule::constant(vec![3.0, 1.0]).unwrap();
        for paradigm in [Paradigm::Replace, Paradigm::Accumulate { k: 0.7 }] {
            for n in [2u64, 5, 100] {
                let r = limit_ratio(&c, paradigm, n).unwrap();
                assert!((r.probs()[0] - 0.75).abs() < 1e-15);
            }
        }
        let e = ErrorSchedule::explicit(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(limit_ratio(&e, Paradigm::Replace, 2).unwrap().probs(), &[0.5, 0.5]);
        assert!(matches!(
            limit_ratio(&ErrorSchedule::zero(2), Paradigm::Replace, 10),
            Err(Error::UndefinedRatio(10))
        ));
        assert!(matches!(
            limit_ratio(&c, Paradigm::Accumulate { k: 1.0 }, 1),
            Err(Error::UndefinedRatio(1))
        ));
    }

    #[test]
    fn engine_ratio_matches_limit_ratio() {
        let s = stats(&[2.0, 2.0, 1.0]);
        let sch = ErrorSchedule::power_decay(vec![1.0, 3.0, 0.5], 0.5).unwrap();
        for paradigm in [Paradigm::Replace, Paradigm::Accumulate { k: 1.5 }] {
            let t = iterate(&s, &sch, paradigm, 40).unwrap();
            for n in 2..=40u64 {
                let direct = limit_ratio(&sch, paradigm, n).unwrap();
                let row = t.row(n).unwrap();
                for (a, b) in row.ratio.as_ref().unwrap().iter().zip(direct.probs()) {
                    assert!(rel_err(*a, *b) < 1e-13);
                }
            }
        }
    }

    #[test]
    fn invalid_rate_and_unseen_context() {
        let s = stats(&[1.0, 1.0]);
        let z = ErrorSchedule::zero(2);
        assert!(matches!(iterate_accumulate(&s, &z, 0.0, 5), Err(Error::InvalidRate(_))));
        assert!(matches!(iterate_accumulate(&s, &z, -1.0, 5), Err(Error::InvalidRate(_))));
        let unseen = stats(&[0.0, 0.0]);
        assert!(matches!(iterate_replace(&unseen, &z, 5), Err(Error::UnseenContext)));
        assert!(matches!(closed_replace(&unseen, &z, 5), Err(Error::UnseenContext)));
        assert!(matches!(
            iterate_replace(&s, &ErrorSchedule::zero(3), 5),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn tracker_semantics() {
        let mut t = ConvergenceTracker::new(&[0.5]).unwrap();
        for (n, d) in [(1, Some(0.9)), (2, Some(0.1)), (3, Some(0.7)), (4, Some(0.2)), (5, Some(0.1))] {
            t.observe(n, d);
        }
        assert_eq!(t.finish(), vec![Some(3)]);
        t.observe(6, None);
        assert_eq!(t.finish(), vec![None]);
        let mut all_good = ConvergenceTracker::new(&[1.0]).unwrap();
        all_good.observe(1, Some(0.1));
        assert_eq!(all_good.finish(), vec![Some(0)]);
        assert_eq!(ConvergenceTracker::new(&[1.0]).unwrap().finish(), vec![None]);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let s = stats(&[7.0, 3.0]);
        let sch = ErrorSchedule::constant(vec![1.0, 0.5]).unwrap();
        let t = iterate_accumulate(&s, &sch, 1.0, 5).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("n,p_hat_1,p_hat_2,ratio_1,ratio_2,deviation\n"));
        assert_eq!(parse_trajectory_csv(&csv).unwrap(), t.rows);
    }
}
