//! Offspring distributions on the nonnegative integers.
//!
//! The scalar functionals everything else is built from live here: mean
//! m(q), log-mean X = log m(q), the standardized second factorial moment
//! eta = sum y(y-1) q(y) / m(q)^2, the truncated second moment zeta(a),
//! the probability generating function f(s) = sum s^y q(y), its
//! cancellation-safe survival complement 1 - f(1-t), and size-biasing
//! q~(y) = y q(y) / m(q).
//!
//! Sampling algorithms are pinned so fixed seeds reproduce exactly:
//! inverse-CDF scan for tables, closed-form inversion for the geometric,
//! mode-centered inversion (see `sampler`) for the Poisson.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler;
use crate::util::{neumaier_sum, one_minus_pow_one_minus, NeumaierSum};

const NORMALIZATION_TOL: f64 = 1e-12;
/// Truncation threshold for tail mass when an infinite-support law is
/// materialized as a table; indistinguishable from exact at double precision.
const TABLE_TAIL_EPS: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    FiniteTable { weights: Vec<f64> },
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    Binary { p: f64 },
}

/// A probability law on {0, 1, 2, ...} with positive finite mean and
/// mass strictly below 1 at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OffspringSpec", into = "OffspringSpec")]
pub struct OffspringDistribution {
    kind: Kind,
}

impl OffspringDistribution {
    /// Table of masses for y = 0..weights.len()-1. Weights must be
    /// nonnegative and sum to 1 within 1e-12; they are renormalized exactly
    /// and trailing zeros are trimmed.
    pub fn finite_table(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDistribution("empty weight table".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "table weights must be finite and nonnegative".into(),
            ));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "table weights sum to {total}, outside 1 +/- 1e-12"
            )));
        }
        let mut weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        while weights.len() > 1 && *weights.last().unwrap() == 0.0 {
            weights.pop();
        }
        let dist = Self {
            kind: Kind::FiniteTable { weights },
        };
        dist.check_not_degenerate()?;
        Ok(dist)
    }

    /// Geometric on {0,1,...} with success probability p: mass p(1-p)^y.
    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "geometric needs p in (0,1), got {p}"
            )));
        }
        Ok(Self {
            kind: Kind::Geometric { p },
        })
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "poisson needs lambda in (0,inf), got {lambda}"
            )));
        }
        Ok(Self {
            kind: Kind::Poisson { lambda },
        })
    }

    /// Mass p at y = 2 and 1-p at y = 0. p = 0 is the point mass at zero,
    /// which the standing assumptions exclude.
    pub fn binary(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "binary needs p in (0,1], got {p}"
            )));
        }
        Ok(Self {
            kind: Kind::Binary { p },
        })
    }

    fn check_not_degenerate(&self) -> Result<()> {
        let m = self.mean();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "mean must be positive and finite, got {m}"
            )));
        }
        Ok(())
    }

    pub(crate) fn kind(&self) -> &Kind {
        &self.kind
    }

    pub fn as_geometric(&self) -> Option<f64> {
        match self.kind {
            Kind::Geometric { p } => Some(p),
            _ => None,
        }
    }

    /// Largest support point for finite-support kinds, None otherwise.
    pub fn finite_support_max(&self) -> Option<u64> {
        match &self.kind {
            Kind::FiniteTable { weights } => Some(weights.len() as u64 - 1),
            Kind::Binary { .. } => Some(2),
            _ => None,
        }
    }

    /// Smallest Y such that the mass above Y is at most eps.
    pub fn support_cutoff(&self, eps: f64) -> u64 {
        match &self.kind {
            Kind::FiniteTable { weights } => weights.len() as u64 - 1,
            Kind::Binary { .. } => 2,
            Kind::Geometric { p } => {
                // tail above Y is (1-p)^(Y+1)
                let q = 1.0 - p;
                (eps.ln() / q.ln()).ceil().max(1.0) as u64
            }
            Kind::Poisson { lambda } => {
                let mut y = lambda.ceil() as u64;
                let mut term = self.pmf(y);
                let mut tail_bound = f64::INFINITY;
                while tail_bound > eps {
                    y += 1;
                    term *= lambda / y as f64;
                    let r = lambda / (y + 1) as f64;
                    tail_bound = if r < 1.0 { term / (1.0 - r) } else { f64::INFINITY };
                }
                y
            }
        }
    }

    pub fn pmf(&self, y: u64) -> f64 {
        match &self.kind {
            Kind::FiniteTable { weights } => weights.get(y as usize).copied().unwrap_or(0.0),
            Kind::Geometric { p } => p * (1.0 - p).powi(y as i32),
            Kind::Poisson { lambda } => {
                (-lambda + y as f64 * lambda.ln()
                    - statrs::function::gamma::ln_gamma(y as f64 + 1.0))
                .exp()
            }
            Kind::Binary { p } => match y {
                0 => 1.0 - p,
                2 => *p,
                _ => 0.0,
            },
        }
    }

    /// m(q) = sum y q(y).
    pub fn mean(&self) -> f64 {
        match &self.kind {
            Kind::FiniteTable { weights } => {
                neumaier_sum(weights.iter().enumerate().map(|(y, w)| y as f64 * w))
            }
            Kind::Geometric { p } => (1.0 - p) / p,
            Kind::Poisson { lambda } => *lambda,
            Kind::Binary { p } => 2.0 * p,
        }
    }

    /// X = log m(q), the walk increment this offspring law contributes.
    pub fn log_mean(&self) -> f64 {
        self.mean().ln()
    }

    /// sum y(y-1) q(y), the second factorial moment.
    pub fn second_factorial_moment(&self) -> f64 {
        match &self.kind {
            Kind::FiniteTable { weights } => neumaier_sum(
                weights
                    .iter()
                    .enumerate()
                    .map(|(y, w)| (y * y.saturating_sub(1)) as f64 * w),
            ),
            Kind::Geometric { p } => {
                let q = 1.0 - p;
                2.0 * q * q / (p * p)
            }
            Kind::Poisson { lambda } => lambda * lambda,
            Kind::Binary { p } => 2.0 * p,
        }
    }

    /// eta = sum y(y-1) q(y) / m(q)^2.
    pub fn eta(&self) -> f64 {
        let m = self.mean();
        self.second_factorial_moment() / (m * m)
    }

    /// zeta(a) = sum_{y >= a} y^2 q(y) / m(q)^2, the standardized truncated
    /// second moment. Infinite-support kinds are summed upward until the
    /// remainder bound drops below 1e-12 relative.
    pub fn zeta(&self, a: u64) -> Result<f64> {
        if a < 1 {
            return Err(Error::Domain("zeta requires a >= 1".into()));
        }
        let m = self.mean();
        let raw = match &self.kind {
            Kind::FiniteTable { weights } => neumaier_sum(
                weights
                    .iter()
                    .enumerate()
                    .skip(a as usize)
                    .map(|(y, w)| (y * y) as f64 * w),
            ),
            Kind::Binary { p } => {
                if a <= 2 {
                    4.0 * p
                } else {
                    0.0
                }
            }
            Kind::Geometric { p } => {
                let q = 1.0 - p;
                let mut acc = NeumaierSum::new();
                let mut y = a;
                let mut geo = p * q.powi(a as i32);
                loop {
                    let term = (y * y) as f64 * geo;
                    acc.add(term);
                    // remainder <= sum_{j>=1} (y+j)^2 q^j * geo
                    let yf = y as f64;
                    let rem = geo
                        * (yf * yf * q / p
                            + 2.0 * yf * q / (p * p)
                            + q * (1.0 + q) / (p * p * p));
                    if rem < 1e-16 * acc.value().max(1e-30) || rem < 1e-300 {
                        break;
                    }
                    y += 1;
                    geo *= q;
                }
                acc.value()
            }
            Kind::Poisson { lambda } => {
                let mut acc = NeumaierSum::new();
                let mut y = a;
                let mut pmf = self.pmf(a);
                loop {
                    acc.add((y * y) as f64 * pmf);
                    let next = pmf * lambda / (y + 1) as f64;
                    let ratio = lambda / (y + 2) as f64;
                    let done = y as f64 > *lambda
                        && ratio < 0.5
                        && ((y + 1) * (y + 1)) as f64 * next / (1.0 - 2.0 * ratio).max(0.25)
                            < 1e-16 * acc.value().max(1e-30);
                    if done || next < 1e-300 {
                        break;
                    }
                    y += 1;
                    pmf = next;
                }
                acc.value()
            }
        };
        Ok(raw / (m * m))
    }

    /// f(s) = sum s^y q(y) for s in [0,1].
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("pgf needs s in [0,1], got {s}")));
        }
        Ok(match &self.kind {
            Kind::FiniteTable { weights } => {
                // Horner from the highest power
                weights.iter().rev().fold(0.0, |acc, &w| acc * s + w)
            }
            Kind::Geometric { p } => p / (1.0 - (1.0 - p) * s),
            Kind::Poisson { lambda } => (lambda * (s - 1.0)).exp(),
            Kind::Binary { p } => (1.0 - p) + p * s * s,
        })
    }

    /// 1 - f(1-t) for t in [0,1], evaluated without cancellation. Satisfies
    /// 1 - f(1-t) <= m(q) t.
    pub fn pgf_survival_complement(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!(
                "survival complement needs t in [0,1], got {t}"
            )));
        }
        Ok(match &self.kind {
            Kind::FiniteTable { weights } => {
                let mut acc = NeumaierSum::new();
                for (y, &w) in weights.iter().enumerate().skip(1) {
                    if w > 0.0 {
                        acc.add(w * one_minus_pow_one_minus(t, y as u64));
                    }
                }
                acc.value()
            }
            Kind::Geometric { p } => {
                let q = 1.0 - p;
                q * t / (p + q * t)
            }
            Kind::Poisson { lambda } => -f64::exp_m1(-lambda * t),
            Kind::Binary { p } => p * t * (2.0 - t),
        })
    }

    /// The size-biased law q~(y) = y q(y) / m(q). Parametric shortcuts:
    /// Binary becomes the point mass at 2; Poisson and geometric are
    /// materialized as tables truncated at tail mass 1e-15.
    pub fn size_bias(&self) -> OffspringDistribution {
        match &self.kind {
            Kind::Binary { .. } => OffspringDistribution::finite_table(vec![0.0, 0.0, 1.0])
                .expect("point mass at 2 is valid"),
            Kind::FiniteTable { weights } => {
                let m = self.mean();
                let table: Vec<f64> = weights
                    .iter()
                    .enumerate()
                    .map(|(y, &w)| y as f64 * w / m)
                    .collect();
                OffspringDistribution::finite_table(table)
                    .expect("size-biased table is a valid law")
            }
            Kind::Geometric { .. } | Kind::Poisson { .. } => {
                let m = self.mean();
                let hi = self.support_cutoff(TABLE_TAIL_EPS * m);
                let table: Vec<f64> = (0..=hi).map(|y| y as f64 * self.pmf(y) / m).collect();
                let total = neumaier_sum(table.iter().copied());
                let table = table.into_iter().map(|w| w / total).collect();
                OffspringDistribution::finite_table(table)
                    .expect("size-biased table is a valid law")
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.kind {
            Kind::FiniteTable { weights } => {
                let u: f64 = rng.random();
                let mut cum = 0.0;
                for (y, &w) in weights.iter().enumerate() {
                    cum += w;
                    if u < cum {
                        return y as u64;
                    }
                }
                weights.len() as u64 - 1
            }
            Kind::Geometric { p } => {
                let u: f64 = rng.random();
                let q = 1.0 - p;
                let y = ((1.0 - u).ln() / q.ln()).floor();
                if y.is_finite() && y >= 0.0 {
                    y as u64
                } else {
                    0
                }
            }
            Kind::Poisson { lambda } => sampler::poisson(*lambda, rng.random()),
            Kind::Binary { p } => {
                let u: f64 = rng.random();
                if u < *p {
                    2
                } else {
                    0
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum OffspringSpec {
    Table { weights: Vec<f64> },
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    Binary { p: f64 },
}

impl TryFrom<OffspringSpec> for OffspringDistribution {
    type Error = Error;

    fn try_from(spec: OffspringSpec) -> Result<Self> {
        match spec {
            OffspringSpec::Table { weights } => OffspringDistribution::finite_table(weights),
            OffspringSpec::Geometric { p } => OffspringDistribution::geometric(p),
            OffspringSpec::Poisson { lambda } => OffspringDistribution::poisson(lambda),
            OffspringSpec::Binary { p } => OffspringDistribution::binary(p),
        }
    }
}

impl From<OffspringDistribution> for OffspringSpec {
    fn from(d: OffspringDistribution) -> Self {
        match d.kind {
            Kind::FiniteTable { weights } => OffspringSpec::Table { weights },
            Kind::Geometric { p } => OffspringSpec::Geometric { p },
            Kind::Poisson { lambda } => OffspringSpec::Poisson { lambda },
            Kind::Binary { p } => OffspringSpec::Binary { p },
        }
    }
}
