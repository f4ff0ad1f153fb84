//! Monte Carlo result types and the statistics used to compare them:
//! mean/stderr accumulators, self-normalized importance-sampling
//! accumulators with effective sample size, empirical distributions with
//! total variation distance, two-sample Kolmogorov-Smirnov distance,
//! weighted quantiles and correlation.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::util::NeumaierSum;

/// A Monte Carlo result. Reproducible: the same (config, seed) yields the
/// same value bit for bit, independent of the shard count.
#[derive(Clone, Debug, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub estimator_id: String,
    pub metadata: BTreeMap<String, String>,
}

impl Estimate {
    pub fn exact(value: f64, estimator_id: &str, seed: u64) -> Self {
        Estimate {
            value,
            stderr: 0.0,
            n_samples: 0,
            seed,
            estimator_id: estimator_id.to_string(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    /// |a - b| <= 3 * sqrt(se_a^2 + se_b^2), the consistency gate used when
    /// two estimators target the same quantity.
    pub fn consistent_with(&self, other: &Estimate) -> bool {
        let combined = (self.stderr * self.stderr + other.stderr * other.stderr).sqrt();
        (self.value - other.value).abs() <= 3.0 * combined
    }
}

/// Plain mean accumulator with compensated sums; merges are associative so
/// block results can be folded in a fixed order.
#[derive(Clone, Debug, Default)]
pub struct MeanAcc {
    sum: NeumaierSum,
    sumsq: NeumaierSum,
    count: u64,
}

impl MeanAcc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.sum.add(x);
        self.sumsq.add(x * x);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &MeanAcc) {
        self.sum.add(other.sum.value());
        self.sumsq.add(other.sumsq.value());
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.count as f64
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let m = self.mean();
        ((self.sumsq.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Self-normalized importance-sampling accumulator for one scalar target.
/// Tracks sum w, sum w^2, sum w phi, sum w^2 phi, sum w^2 phi^2 so the
/// ratio estimate, its delta-method stderr and the ESS come out of one pass.
#[derive(Clone, Debug, Default)]
pub struct WeightedAcc {
    w: NeumaierSum,
    w2: NeumaierSum,
    wv: NeumaierSum,
    w2v: NeumaierSum,
    w2v2: NeumaierSum,
    count: u64,
}

impl WeightedAcc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, weight: f64, value: f64) {
        self.w.add(weight);
        self.w2.add(weight * weight);
        self.wv.add(weight * value);
        self.w2v.add(weight * weight * value);
        self.w2v2.add(weight * weight * value * value);
        self.count += 1;
    }

    pub fn merge(&mut self, other: &WeightedAcc) {
        self.w.add(other.w.value());
        self.w2.add(other.w2.value());
        self.wv.add(other.wv.value());
        self.w2v.add(other.w2v.value());
        self.w2v2.add(other.w2v2.value());
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn weight_sum(&self) -> f64 {
        self.w.value()
    }

    /// Self-normalized mean sum(w v) / sum(w); invariant under rescaling all
    /// weights by a constant.
    pub fn mean(&self) -> f64 {
        self.wv.value() / self.w.value()
    }

    /// Delta-method standard error sqrt(sum w^2 (v - mean)^2) / sum w.
    pub fn stderr(&self) -> f64 {
        let m = self.mean();
        let num = self.w2v2.value() - 2.0 * m * self.w2v.value() + m * m * self.w2.value();
        num.max(0.0).sqrt() / self.w.value()
    }

    /// Effective sample size (sum w)^2 / sum w^2.
    pub fn ess(&self) -> f64 {
        let w = self.w.value();
        let w2 = self.w2.value();
        if w2 <= 0.0 {
            0.0
        } else {
            w * w / w2
        }
    }
}

/// An empirical probability distribution on the nonnegative integers.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalDistribution {
    probs: BTreeMap<u64, f64>,
    pub total_count: u64,
}

impl EmpiricalDistribution {
    /// Builds from (value, weight) mass pairs; normalizes to total mass 1.
    pub fn from_weighted(pairs: impl IntoIterator<Item = (u64, f64)>, total_count: u64) -> Self {
        let mut probs: BTreeMap<u64, f64> = BTreeMap::new();
        for (v, w) in pairs {
            *probs.entry(v).or_insert(0.0) += w;
        }
        let total: f64 = probs.values().sum();
        if total > 0.0 {
            for w in probs.values_mut() {
                *w /= total;
            }
        }
        EmpiricalDistribution { probs, total_count }
    }

    pub fn mass(&self, v: u64) -> f64 {
        self.probs.get(&v).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.probs.iter().map(|(v, w)| (*v, *w))
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.values().sum()
    }

    pub fn mass_at_most(&self, v: u64) -> f64 {
        self.probs.range(..=v).map(|(_, w)| w).sum()
    }

    /// 1/2 sum over the union of supports of |p - q|.
    pub fn tv_distance(&self, other: &EmpiricalDistribution) -> f64 {
        let mut keys: Vec<u64> = self.probs.keys().copied().collect();
        keys.extend(other.probs.keys().copied());
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys
            .iter()
            .map(|k| (self.mass(*k) - other.mass(*k)).abs())
            .sum::<f64>()
    }
}

/// Two-sample KS distance between weighted samples: sup over the pooled
/// values of |F_a - F_b| with weighted ECDFs.
pub fn ks_two_sample_weighted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a: Vec<(f64, f64)> = a.to_vec();
    let mut b: Vec<(f64, f64)> = b.to_vec();
    a.sort_by(|x, y| x.0.total_cmp(&y.0));
    b.sort_by(|x, y| x.0.total_cmp(&y.0));
    let wa: f64 = a.iter().map(|p| p.1).sum();
    let wb: f64 = b.iter().map(|p| p.1).sum();
    let mut ia = 0;
    let mut ib = 0;
    let mut ca = 0.0;
    let mut cb = 0.0;
    let mut d: f64 = 0.0;
    while ia < a.len() || ib < b.len() {
        let next = match (a.get(ia), b.get(ib)) {
            (Some(x), Some(y)) => x.0.min(y.0),
            (Some(x), None) => x.0,
            (None, Some(y)) => y.0,
            (None, None) => break,
        };
        while ia < a.len() && a[ia].0 <= next {
            ca += a[ia].1;
            ia += 1;
        }
        while ib < b.len() && b[ib].0 <= next {
            cb += b[ib].1;
            ib += 1;
        }
        d = d.max((ca / wa - cb / wb).abs());
    }
    d
}

/// Weighted quantile by cumulative-weight scan (lower interpolation).
pub fn weighted_quantile(samples: &[(f64, f64)], q: f64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut s: Vec<(f64, f64)> = samples.to_vec();
    s.sort_by(|x, y| x.0.total_cmp(&y.0));
    let total: f64 = s.iter().map(|p| p.1).sum();
    let target = q * total;
    let mut cum = 0.0;
    for (v, w) in &s {
        cum += w;
        if cum >= target {
            return *v;
        }
    }
    s.last().unwrap().0
}

/// Weighted Pearson correlation.
pub fn weighted_correlation(samples: &[(f64, f64, f64)]) -> f64 {
    let w: f64 = samples.iter().map(|s| s.2).sum();
    if w <= 0.0 {
        return f64::NAN;
    }
    let mx: f64 = samples.iter().map(|s| s.0 * s.2).sum::<f64>() / w;
    let my: f64 = samples.iter().map(|s| s.1 * s.2).sum::<f64>() / w;
    let mut cxy = 0.0;
    let mut cxx = 0.0;
    let mut cyy = 0.0;
    for (x, y, wi) in samples {
        cxy += wi * (x - mx) * (y - my);
        cxx += wi * (x - mx) * (x - mx);
        cyy += wi * (y - my) * (y - my);
    }
    if cxx <= 0.0 || cyy <= 0.0 {
        return 0.0;
    }
    cxy / (cxx * cyy).sqrt()
}
