//! Chi-square goodness-of-fit and contingency-table independence tests.
//!
//! P-values come from the regularized upper incomplete gamma function,
//! evaluated with the usual series / continued-fraction split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("incomplete gamma needs a > 0 and x >= 0, both finite (got a={a}, x={x})")]
    GammaDomain { a: f64, x: f64 },
    #[error("expected probabilities sum to {0}, not 1")]
    NotADistribution(f64),
    #[error("expected distribution has a negative or non-finite entry")]
    BadProbability,
    #[error("goodness-of-fit needs at least two cells with nonzero expectation")]
    TooFewCells,
    #[error("observed histogram is empty")]
    Empty,
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    #[allow(clippy::excessive_precision)]
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64, StatsError> {
    if !(a.is_finite() && x.is_finite()) || a <= 0.0 || x < 0.0 {
        return Err(StatsError::GammaDomain { a, x });
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    let q = if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        upper_continued_fraction(a, x)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// `P(a, x)` by its power series; converges quickly for `x < a + 1`.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

/// `Q(a, x)` by its continued fraction (modified Lentz).
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Upper-tail probability of a chi-square variate with `dof` degrees of freedom.
pub fn chi2_sf(statistic: f64, dof: u32) -> Result<f64, StatsError> {
    gamma_q(f64::from(dof) / 2.0, statistic / 2.0)
}

/// Counts per integer outcome. Serializes as ascending `[outcome, count]`
/// pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(u64, u64)>", into = "Vec<(u64, u64)>")]
pub struct Histogram {
    counts: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, outcome: u64, count: u64) {
        if count > 0 {
            *self.counts.entry(outcome).or_insert(0) += count;
        }
    }

    pub fn count(&self, outcome: u64) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Outcomes with nonzero count, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support(&self) -> Vec<u64> {
        self.counts.keys().copied().collect()
    }

    pub fn frequency(&self, outcome: u64) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count(outcome) as f64 / total as f64
        }
    }
}

impl From<Vec<(u64, u64)>> for Histogram {
    fn from(pairs: Vec<(u64, u64)>) -> Self {
        pairs.into_iter().collect()
    }
}

impl From<Histogram> for Vec<(u64, u64)> {
    fn from(h: Histogram) -> Self {
        h.iter().collect()
    }
}

impl FromIterator<u64> for Histogram {
    fn from_iter<I: IntoIterator<Item = u64>>(iter: I) -> Self {
        let mut h = Histogram::new();
        for v in iter {
            h.add(v, 1);
        }
        h
    }
}

impl FromIterator<(u64, u64)> for Histogram {
    fn from_iter<I: IntoIterator<Item = (u64, u64)>>(iter: I) -> Self {
        let mut h = Histogram::new();
        for (v, n) in iter {
            h.add(v, n);
        }
        h
    }
}

/// Joint counts of two registers' readings. Row and column labels are the
/// observed integer values of each register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub rows: Vec<u64>,
    pub cols: Vec<u64>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(rows: Vec<u64>, cols: Vec<u64>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(counts.len(), rows.len());
        assert!(counts.iter().all(|r| r.len() == cols.len()));
        Self { rows, cols, counts }
    }

    /// Unlabeled table; rows and columns are numbered from zero.
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let r = counts.len();
        let c = counts.first().map_or(0, Vec::len);
        Self::new((0..r as u64).collect(), (0..c as u64).collect(), counts)
    }

    /// Builds the table from paired readings. Only observed values get a
    /// row or column, so no marginal is zero.
    pub fn from_pairs<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Self {
        let mut joint: BTreeMap<(u64, u64), u64> = BTreeMap::new();
        for p in pairs {
            *joint.entry(p).or_insert(0) += 1;
        }
        let mut rows: Vec<u64> = joint.keys().map(|k| k.0).collect();
        rows.dedup();
        let mut cols: Vec<u64> = joint.keys().map(|k| k.1).collect();
        cols.sort_unstable();
        cols.dedup();
        let counts = rows
            .iter()
            .map(|r| {
                cols.iter()
                    .map(|c| joint.get(&(*r, *c)).copied().unwrap_or(0))
                    .collect()
            })
            .collect();
        Self::new(rows, cols, counts)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.cols.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.cols.len())
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        Self::new(self.cols.clone(), self.rows.clone(), counts)
    }

    /// Drops rows and columns whose marginal is zero.
    pub fn pruned(&self) -> Self {
        let rt = self.row_totals();
        let ct = self.col_totals();
        let keep_r: Vec<usize> = (0..rt.len()).filter(|&i| rt[i] > 0).collect();
        let keep_c: Vec<usize> = (0..ct.len()).filter(|&j| ct[j] > 0).collect();
        Self::new(
            keep_r.iter().map(|&i| self.rows[i]).collect(),
            keep_c.iter().map(|&j| self.cols[j]).collect(),
            keep_r
                .iter()
                .map(|&i| keep_c.iter().map(|&j| self.counts[i][j]).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: u32,
    pub p_value: f64,
    /// Smallest expected cell count; below 5 the chi-square approximation is
    /// unreliable and callers should flag the result as low power.
    pub min_expected: f64,
}

impl ChiSquareResult {
    fn new(statistic: f64, dof: u32, min_expected: f64) -> Result<Self, StatsError> {
        Ok(Self {
            statistic,
            dof,
            p_value: chi2_sf(statistic, dof)?,
            min_expected,
        })
    }

    pub fn low_expected_counts(&self) -> bool {
        self.min_expected < 5.0
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChiSquareOutcome {
    Computed(ChiSquareResult),
    /// Observations landed on a cell the hypothesis gives probability zero.
    Impossible {
        outcome: u64,
        count: u64,
    },
    /// Fewer than two rows or columns survive pruning; independence is
    /// untestable.
    Indeterminate {
        rows: usize,
        cols: usize,
    },
}

impl ChiSquareOutcome {
    /// The test's p-value; `0` for impossible observations, `None` when
    /// indeterminate.
    pub fn p_value(&self) -> Option<f64> {
        match self {
            ChiSquareOutcome::Computed(r) => Some(r.p_value),
            ChiSquareOutcome::Impossible { .. } => Some(0.0),
            ChiSquareOutcome::Indeterminate { .. } => None,
        }
    }

    pub fn computed(&self) -> Option<&ChiSquareResult> {
        match self {
            ChiSquareOutcome::Computed(r) => Some(r),
            _ => None,
        }
    }
}

/// Goodness of fit of `observed` against `expected`, where `expected[v]` is
/// the hypothesized probability of outcome `v`.
pub fn chi2_gof(observed: &Histogram, expected: &[f64]) -> Result<ChiSquareOutcome, StatsError> {
    if expected.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(StatsError::BadProbability);
    }
    let mass: f64 = expected.iter().sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(StatsError::NotADistribution(mass));
    }
    let n = observed.total();
    if n == 0 {
        return Err(StatsError::Empty);
    }
    for (outcome, count) in observed.iter() {
        let p = expected.get(outcome as usize).copied().unwrap_or(0.0);
        if p == 0.0 {
            return Ok(ChiSquareOutcome::Impossible { outcome, count });
        }
    }
    let cells = expected.iter().filter(|&&p| p > 0.0).count();
    if cells < 2 {
        return Err(StatsError::TooFewCells);
    }
    let n = n as f64;
    let mut statistic = 0.0;
    let mut min_expected = f64::INFINITY;
    for (v, &p) in expected.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let e = n * p;
        let o = observed.count(v as u64) as f64;
        statistic += (o - e) * (o - e) / e;
        min_expected = min_expected.min(e);
    }
    Ok(ChiSquareOutcome::Computed(ChiSquareResult::new(
        statistic,
        (cells - 1) as u32,
        min_expected,
    )?))
}

/// Pearson chi-square test of independence (no continuity correction).
pub fn chi2_contingency(table: &ContingencyTable) -> Result<ChiSquareOutcome, StatsError> {
    let t = table.pruned();
    let (r, c) = (t.rows.len(), t.cols.len());
    if r < 2 || c < 2 {
        return Ok(ChiSquareOutcome::Indeterminate { rows: r, cols: c });
    }
    let rt = t.row_totals();
    let ct = t.col_totals();
    let n = t.total() as f64;
    let mut statistic = 0.0;
    let mut min_expected = f64::INFINITY;
    for (row, &ri) in t.counts.iter().zip(&rt) {
        for (&count, &cj) in row.iter().zip(&ct) {
            let e = ri as f64 * cj as f64 / n;
            let o = count as f64;
            statistic += (o - e) * (o - e) / e;
            min_expected = min_expected.min(e);
        }
    }
    Ok(ChiSquareOutcome::Computed(ChiSquareResult::new(
        statistic,
        ((r - 1) * (c - 1)) as u32,
        min_expected,
    )?))
}
