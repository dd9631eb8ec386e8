//! Per-generation non-negative error vectors α_i[n] that drive the
//! recurrences. α[n] is always computed as Σ_i α_i[n].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numfmt;
use crate::sum;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    /// α_i[n] = c_i.
    Constant { c: Vec<f64> },
    /// α_i[n] = c_i · n^(−exponent).
    PowerDecay { c: Vec<f64>, exponent: f64 },
    /// α_i[n] ~ U[lo_i, hi_i], drawn from a per-generation stream of `seed`.
    RandomUniform { lo: Vec<f64>, hi: Vec<f64>, seed: u64 },
    /// Row `n − 1` holds α[n].
    Explicit { rows: Vec<Vec<f64>> },
    /// An explicit table extracted from a lab run.
    Empirical { rows: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSchedule {
    kind: ScheduleKind,
    dim: usize,
}

fn check_nonneg(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        Some(v) => Err(Error::InvalidArgument(format!(
            "{name} contains {v}; error terms must be finite and non-negative"
        ))),
        None => Ok(()),
    }
}

impl ErrorSchedule {
    pub fn new(kind: ScheduleKind) -> Result<Self> {
        let dim = match &kind {
            ScheduleKind::Constant { c } => {
                check_nonneg("c", c)?;
                c.len()
            }
            ScheduleKind::PowerDecay { c, exponent } => {
                check_nonneg("c", c)?;
                if !(exponent.is_finite() && *exponent >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "exponent must be finite and >= 0, got {exponent}"
                    )));
                }
                c.len()
            }
            ScheduleKind::RandomUniform { lo, hi, .. } => {
                check_nonneg("lo", lo)?;
                check_nonneg("hi", hi)?;
                if lo.len() != hi.len() {
                    return Err(Error::DimensionMismatch {
                        expected: lo.len(),
                        actual: hi.len(),
                    });
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h) {
                    return Err(Error::InvalidArgument("lo exceeds hi".into()));
                }
                lo.len()
            }
            ScheduleKind::Explicit { rows } | ScheduleKind::Empirical { rows } => {
                let dim = rows.first().map(Vec::len).ok_or_else(|| {
                    Error::InvalidArgument("explicit schedule has no rows".into())
                })?;
                for row in rows {
                    if row.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: row.len(),
                        });
                    }
                    check_nonneg("alpha row", row)?;
                }
                dim
            }
        };
        if dim == 0 {
            return Err(Error::InvalidArgument("schedule dimension is zero".into()));
        }
        Ok(Self { kind, dim })
    }

    pub fn constant(c: Vec<f64>) -> Result<Self> {
        Self::new(ScheduleKind::Constant { c })
    }

    pub fn power_decay(c: Vec<f64>, exponent: f64) -> Result<Self> {
        Self::new(ScheduleKind::PowerDecay { c, exponent })
    }

    pub fn random_uniform(lo: Vec<f64>, hi: Vec<f64>, seed: u64) -> Result<Self> {
        Self::new(ScheduleKind::RandomUniform { lo, hi, seed })
    }

    pub fn explicit(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(ScheduleKind::Explicit { rows })
    }

    pub fn empirical(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(ScheduleKind::Empirical { rows })
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(vec![0.0; dim]).expect("zero schedule is valid")
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of generations defined, if finite.
    pub fn horizon(&self) -> Option<u64> {
        match &self.kind {
            ScheduleKind::Explicit { rows } | ScheduleKind::Empirical { rows } => {
                Some(rows.len() as u64)
            }
            _ => None,
        }
    }

    /// Writes α_i[n] into `out`. Generations are 1-based.
    pub fn alpha_into(&self, n: u64, out: &mut [f64]) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("generations are numbered from 1".into()));
        }
        if out.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: out.len(),
            });
        }
        match &self.kind {
            ScheduleKind::Constant { c } => out.copy_from_slice(c),
            ScheduleKind::PowerDecay { c, exponent } => {
                let w = (n as f64).powf(-exponent);
                for (o, ci) in out.iter_mut().zip(c) {
                    *o = ci * w;
                }
            }
            ScheduleKind::RandomUniform { lo, hi, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(n);
                for ((o, l), h) in out.iter_mut().zip(lo).zip(hi) {
                    let u: f64 = rng.gen();
                    *o = l + (h - l) * u;
                }
            }
            ScheduleKind::Explicit { rows } | ScheduleKind::Empirical { rows } => {
                let row = rows.get((n - 1) as usize).ok_or(Error::ScheduleExhausted {
                    defined: rows.len() as u64,
                    requested: n,
                })?;
                out.copy_from_slice(row);
            }
        }
        Ok(())
    }

    pub fn alpha(&self, n: u64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.alpha_into(n, &mut out)?;
        Ok(out)
    }

    /// α[n] = Σ_i α_i[n].
    pub fn alpha_total(&self, n: u64) -> Result<f64> {
        Ok(sum::sum(&self.alpha(n)?))
    }

    /// Some component provably does not tend to zero.
    pub fn is_theorem_eligible(&self) -> bool {
        match &self.kind {
            ScheduleKind::Constant { c } => c.iter().any(|&x| x > 0.0),
            ScheduleKind::PowerDecay { c, exponent } => {
                *exponent == 0.0 && c.iter().any(|&x| x > 0.0)
            }
            ScheduleKind::RandomUniform { lo, .. } => lo.iter().any(|&x| x > 0.0),
            ScheduleKind::Explicit { .. } | ScheduleKind::Empirical { .. } => false,
        }
    }

    /// Σ_n α[n] provably converges, so the error terms never swamp the
    /// initial counts and the limit-ratio comparison is meaningless.
    pub fn is_summable(&self) -> bool {
        match &self.kind {
            ScheduleKind::Constant { c } => c.iter().all(|&x| x == 0.0),
            ScheduleKind::PowerDecay { c, exponent } => {
                *exponent > 1.0 || c.iter().all(|&x| x == 0.0)
            }
            ScheduleKind::RandomUniform { hi, .. } => hi.iter().all(|&x| x == 0.0),
            ScheduleKind::Explicit { .. } | ScheduleKind::Empirical { .. } => false,
        }
    }

    /// Materializes generations `1..=n_max` as rows.
    pub fn table(&self, n_max: u64) -> Result<Vec<Vec<f64>>> {
        (1..=n_max).map(|n| self.alpha(n)).collect()
    }

    pub fn to_csv(&self, n_max: u64) -> Result<String> {
        let mut out = String::from("n");
        for i in 1..=self.dim {
            let _ = write!(out, ",alpha_{i}");
        }
        out.push('\n');
        for (idx, row) in self.table(n_max)?.iter().enumerate() {
            let _ = write!(out, "{}", idx + 1);
            for v in row {
                let _ = write!(out, ",{}", numfmt::num(*v));
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_csv(&self, n_max: u64, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv(n_max)?).map_err(|e| Error::io(path, e))
    }
}

/// Reads `n,alpha_1,...,alpha_V` rows (n increasing from 1, no gaps).
pub fn parse_schedule_csv(text: &str, origin: &str, empirical: bool) -> Result<ErrorSchedule> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(origin, e.to_string()))?
        .clone();
    let dim = headers.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("n".to_string())
        .chain((1..=dim).map(|i| format!("alpha_{i}")))
        .collect();
    if dim == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::parse(origin, "header must be `n,alpha_1,...,alpha_V`"));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(origin, e.to_string()))?;
        let n: u64 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, format!("bad generation index `{}`", &record[0])))?;
        if n != idx as u64 + 1 {
            return Err(Error::parse(
                origin,
                format!("generation {n} out of sequence, expected {}", idx + 1),
            ));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|f| {
                numfmt::parse_opt(f)
                    .ok()
                    .flatten()
                    .ok_or_else(|| Error::parse(origin, format!("bad alpha value `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if empirical {
        ErrorSchedule::empirical(rows)
    } else {
        ErrorSchedule::explicit(rows)
    }
}

pub fn read_schedule_csv(path: &Path, empirical: bool) -> Result<ErrorSchedule> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schedule_csv(&text, &path.display().to_string(), empirical)
}
