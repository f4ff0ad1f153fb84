//! The estimator layer: survival probability by three routes (naive,
//! importance-sampled, Rao-Blackwellized), the theta ratio curve, the
//! conditioned population and tau-gap laws, the normalized path-shape
//! comparison against the min-at-end reference construction, and the
//! bottleneck statistics. Everything runs through the block-deterministic
//! Monte Carlo driver, so results are bit-identical across shard counts.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::environment::{EnvironmentLaw, Measure, ScalingEstimate};
use crate::error::{Error, Result};
use crate::estimate::{
    ks_two_sample_weighted, weighted_correlation, weighted_quantile, EmpiricalDistribution,
    Estimate, MeanAcc, WeightedAcc,
};
use crate::mc;
use crate::sampler;
use crate::trees::simulate_lpp_totals;
use crate::walk::{RenewalKind, WalkPath, BOUNDARY_TOL, ENUM_BUDGET};

/// Earliest index of the minimum of values[lo..=hi], with the walk module's
/// boundary tolerance so lattice ties resolve to the earlier index.
pub fn argmin_earliest(values: &[f64], lo: usize, hi: usize) -> usize {
    let mut best = lo;
    let mut best_val = values[lo];
    for (k, &v) in values.iter().enumerate().take(hi + 1).skip(lo + 1) {
        if v < best_val - BOUNDARY_TOL {
            best_val = v;
            best = k;
        }
    }
    best
}

/// Quenched survival to horizon n computed directly from atom indices.
fn survival_from_indices(law: &EnvironmentLaw, indices: &[u16]) -> f64 {
    let mut t = 1.0;
    for idx in indices.iter().rev() {
        t = law.atoms()[*idx as usize]
            .pgf_survival_complement(t)
            .expect("t stays in [0,1]");
    }
    t
}

/// Population trajectory along an index sequence; error if the cap trips.
fn trajectory_from_indices<R: Rng + ?Sized>(
    law: &EnvironmentLaw,
    indices: &[u16],
    rng: &mut R,
) -> std::result::Result<Vec<u64>, usize> {
    let mut counts = Vec::with_capacity(indices.len() + 1);
    let mut z = 1u64;
    counts.push(z);
    for (k, idx) in indices.iter().enumerate() {
        if z > 0 {
            z = sampler::offspring_sum(&law.atoms()[*idx as usize], z, rng);
            if z > crate::bpre::POPULATION_CAP {
                return Err(k + 1);
            }
        }
        counts.push(z);
    }
    Ok(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurvivalMethod {
    /// Frequency of Z_n > 0 under the annealed measure.
    Naive,
    /// gamma^n e^{-S_n} 1{Z_n > 0} on tilted environments.
    Importance,
    /// gamma^n e^{-S_n} P(Z_n > 0 | env) on tilted environments; no
    /// population simulation, lowest variance.
    RaoBlackwell,
}

impl SurvivalMethod {
    pub fn id(self) -> &'static str {
        match self {
            SurvivalMethod::Naive => "survival_naive",
            SurvivalMethod::Importance => "survival_importance",
            SurvivalMethod::RaoBlackwell => "survival_rao_blackwell",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(SurvivalMethod::Naive),
            "importance" => Ok(SurvivalMethod::Importance),
            "rao-blackwell" => Ok(SurvivalMethod::RaoBlackwell),
            other => Err(Error::Config(format!("unknown survival method {other}"))),
        }
    }
}

/// P(Z_n > 0) by the requested estimator.
pub fn estimate_survival(
    law: &EnvironmentLaw,
    n: usize,
    n_samples: u64,
    method: SurvivalMethod,
    seed: u64,
    shards: usize,
) -> Result<Estimate> {
    if n == 0 {
        return Ok(Estimate::exact(1.0, method.id(), seed));
    }
    let gamma_n = law.gamma().powi(n as i32);
    let blocks = mc::run_blocks(seed, n_samples, shards, |rng, _s, count| {
        let mut acc = MeanAcc::new();
        let mut capped = 0u64;
        let mut capped_weight = 0.0f64;
        for _ in 0..count {
            match method {
                SurvivalMethod::Naive => {
                    let (indices, _) = law.sample_indices(n, Measure::Annealed, rng);
                    match trajectory_from_indices(law, &indices, rng) {
                        Ok(counts) => acc.push(if counts[n] > 0 { 1.0 } else { 0.0 }),
                        Err(_) => {
                            capped += 1;
                            capped_weight += 1.0;
                        }
                    }
                }
                SurvivalMethod::Importance => {
                    let (indices, walk) = law.sample_indices(n, Measure::Tilted, rng);
                    let w = gamma_n * (-walk.last()).exp();
                    match trajectory_from_indices(law, &indices, rng) {
                        Ok(counts) => acc.push(if counts[n] > 0 { w } else { 0.0 }),
                        Err(_) => {
                            capped += 1;
                            capped_weight += w;
                        }
                    }
                }
                SurvivalMethod::RaoBlackwell => {
                    let (indices, walk) = law.sample_indices(n, Measure::Tilted, rng);
                    let w = gamma_n * (-walk.last()).exp();
                    acc.push(w * survival_from_indices(law, &indices));
                }
            }
        }
        (acc, capped, capped_weight)
    });
    let mut acc = MeanAcc::new();
    let mut capped = 0u64;
    let mut capped_weight = 0.0;
    for (a, c, cw) in &blocks {
        acc.merge(a);
        capped += c;
        capped_weight += cw;
    }
    // Bernoulli counts at 0 hits would report zero spread; floor the naive
    // stderr at the rule-of-three scale so consistency gates stay honest.
    let stderr = match method {
        SurvivalMethod::Naive => acc.stderr().max(1.0 / n_samples as f64),
        _ => acc.stderr(),
    };
    let mut est = Estimate {
        value: acc.mean(),
        stderr,
        n_samples: acc.count(),
        seed,
        estimator_id: method.id().into(),
        metadata: Default::default(),
    };
    if capped > 0 {
        // capped replicates are excluded; their total weight bounds the bias
        est = est
            .with_meta("capped_runs", capped)
            .with_meta("capped_weight_bound", capped_weight / n_samples as f64);
    }
    Ok(est)
}

/// P(tau_n = n) = P(M_n < 0) under the tilted measure: exact by enumeration
/// when the sequence count fits the budget, Monte Carlo on the dual form
/// otherwise.
pub fn estimate_tau_end(
    law: &EnvironmentLaw,
    n: usize,
    n_samples: u64,
    seed: u64,
    shards: usize,
) -> Estimate {
    if n == 0 {
        return Estimate::exact(1.0, "tau_end_enum", seed);
    }
    let tilted = law.tilt();
    let exact_feasible = (law.n_atoms() as u64)
        .checked_pow(n as u32)
        .is_some_and(|c| c <= ENUM_BUDGET);
    if exact_feasible {
        let terms = crate::walk::renewal_terms(&tilted, RenewalKind::U, f64::INFINITY, n, 0, seed);
        return Estimate::exact(terms.terms[n - 1], "tau_end_enum", seed)
            .with_meta("form", "P(M_n<0) by enumeration");
    }
    let blocks = mc::run_blocks(seed, n_samples, shards, |rng, _s, count| {
        let mut hits = 0u64;
        for _ in 0..count {
            let (_, walk) = tilted.sample_indices(n, Measure::Annealed, rng);
            if walk.stats().m_n < -BOUNDARY_TOL {
                hits += 1;
            }
        }
        hits
    });
    let hits: u64 = blocks.iter().sum();
    let p = hits as f64 / n_samples as f64;
    Estimate {
        value: p,
        stderr: (p * (1.0 - p) / n_samples as f64).sqrt(),
        n_samples,
        seed,
        estimator_id: "tau_end_mc".into(),
        metadata: Default::default(),
    }
}

#[derive(Clone, Debug)]
pub struct ThetaPoint {
    pub n: usize,
    pub ratio: f64,
    pub stderr: f64,
    pub survival: Estimate,
    pub tau_end: Estimate,
}

/// r_n = P(Z_n > 0) / (gamma^n P(tau_n = n)), the finite-n stand-in for the
/// survival constant theta.
pub fn theta_ratio_curve(
    law: &EnvironmentLaw,
    n_list: &[usize],
    n_samples: u64,
    seed: u64,
    shards: usize,
) -> Result<Vec<ThetaPoint>> {
    let mut out = Vec::with_capacity(n_list.len());
    for (k, &n) in n_list.iter().enumerate() {
        let s = estimate_survival(
            law,
            n,
            n_samples,
            SurvivalMethod::RaoBlackwell,
            seed.wrapping_add(2 * k as u64 + 1),
            shards,
        )?;
        let t = estimate_tau_end(law, n, n_samples, seed.wrapping_add(2 * k as u64 + 2), shards);
        let gamma_n = law.gamma().powi(n as i32);
        let ratio = s.value / (gamma_n * t.value);
        let rel = ((s.stderr / s.value).powi(2) + (t.stderr / t.value).powi(2)).sqrt();
        out.push(ThetaPoint {
            n,
            ratio,
            stderr: ratio * rel,
            survival: s,
            tau_end: t,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConditioningProposal {
    /// Plain tilted environments, weights e^{-S_n} (survivors only).
    Tilted,
    /// Defensive 50/50 mixture of tilted environments and tilted
    /// environments conditioned on tau_n = n (rejection), with
    /// balance-heuristic weights. Guards against ESS collapse at large n.
    DefensiveMixture,
    /// Rao-Blackwellized weights e^{-S_n} P(Z_n > 0 | env) (bounded by 1)
    /// with the population drawn exactly from its conditional law via the
    /// Geiger construction. The workhorse at large horizons.
    GeigerConditional,
}

impl ConditioningProposal {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(ConditioningProposal::Tilted),
            "defensive" => Ok(ConditioningProposal::DefensiveMixture),
            "geiger" => Ok(ConditioningProposal::GeigerConditional),
            other => Err(Error::Config(format!("unknown proposal {other}"))),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            ConditioningProposal::Tilted => "standard",
            ConditioningProposal::DefensiveMixture => "defensive",
            ConditioningProposal::GeigerConditional => "geiger",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionalLawResult {
    pub n: usize,
    pub dist: EmpiricalDistribution,
    /// self-normalized E[Z_n | Z_n > 0] with delta-method stderr
    pub mean: (f64, f64),
    /// (beta, moment, stderr) for each requested beta
    pub beta_moments: Vec<(f64, f64, f64)>,
    pub ess: f64,
    pub low_ess: bool,
    pub n_survivors: u64,
    pub capped_runs: u64,
    pub seed: u64,
}

/// The law of Z_n conditioned on Z_n > 0, by self-normalized importance
/// sampling on tilted environments.
pub fn conditional_population_law(
    law: &EnvironmentLaw,
    n: usize,
    n_samples: u64,
    betas: &[f64],
    proposal: ConditioningProposal,
    seed: u64,
    shards: usize,
) -> Result<ConditionalLawResult> {
    let tau_prob = match proposal {
        ConditioningProposal::DefensiveMixture => {
            estimate_tau_end(law, n, n_samples.max(100_000), seed.wrapping_add(40_009), shards)
                .value
        }
        _ => 1.0,
    };
    type Block = (Vec<(u64, f64)>, u64);
    let blocks: Vec<Block> = mc::run_blocks(seed, n_samples, shards, |rng, _s, count| {
        let tilted_pairs = |rng: &mut ChaCha8Rng| law.sample_indices(n, Measure::Tilted, rng);
        let mut pairs: Vec<(u64, f64)> = Vec::new();
        let mut capped = 0u64;
        for _ in 0..count {
            if proposal == ConditioningProposal::GeigerConditional {
                let (indices, walk) = tilted_pairs(rng);
                let dists: Vec<&crate::offspring::OffspringDistribution> = indices
                    .iter()
                    .map(|j| &law.atoms()[*j as usize])
                    .collect();
                let sampler = crate::trees::GeigerSampler::new(dists)
                    .expect("valid environments always survive with positive probability");
                let w = (-walk.last()).exp() * sampler.survival();
                match sampler.conditional_z_n(rng) {
                    Ok(z) => pairs.push((z, w)),
                    Err(_) => capped += 1,
                }
                continue;
            }
            let (indices, walk, proposal_factor) = match proposal {
                ConditioningProposal::Tilted | ConditioningProposal::GeigerConditional => {
                    let (i, w) = tilted_pairs(rng);
                    (i, w, 1.0)
                }
                ConditioningProposal::DefensiveMixture => {
                    let late = rng.random::<f64>() < 0.5;
                    if late {
                        // rejection until the walk attains its minimum at n
                        loop {
                            let (i, w) = tilted_pairs(rng);
                            if w.stats().tau == n {
                                let g = 0.5 + 0.5 / tau_prob;
                                break (i, w, g);
                            }
                        }
                    } else {
                        let (i, w) = tilted_pairs(rng);
                        let g = if w.stats().tau == n {
                            0.5 + 0.5 / tau_prob
                        } else {
                            0.5
                        };
                        (i, w, g)
                    }
                }
            };
            match trajectory_from_indices(law, &indices, rng) {
                Ok(counts) => {
                    if counts[n] > 0 {
                        let w = (-walk.last()).exp() / proposal_factor;
                        pairs.push((counts[n], w));
                    }
                }
                Err(_) => capped += 1,
            }
        }
        (pairs, capped)
    });
    let mut all: Vec<(u64, f64)> = Vec::new();
    let mut capped = 0u64;
    for (pairs, c) in blocks {
        all.extend(pairs);
        capped += c;
    }
    let mut mean_acc = WeightedAcc::new();
    let mut beta_accs: Vec<WeightedAcc> = betas.iter().map(|_| WeightedAcc::new()).collect();
    for (z, w) in &all {
        mean_acc.push(*w, *z as f64);
        for (b, acc) in betas.iter().zip(beta_accs.iter_mut()) {
            acc.push(*w, (*z as f64).powf(*b));
        }
    }
    let ess = mean_acc.ess();
    Ok(ConditionalLawResult {
        n,
        dist: EmpiricalDistribution::from_weighted(all.iter().copied(), all.len() as u64),
        mean: (mean_acc.mean(), mean_acc.stderr()),
        beta_moments: betas
            .iter()
            .zip(beta_accs.iter())
            .map(|(b, a)| (*b, a.mean(), a.stderr()))
            .collect(),
        ess,
        low_ess: ess < 100.0,
        n_survivors: all.len() as u64,
        capped_runs: capped,
        seed,
    })
}

#[derive(Clone, Debug)]
pub struct GapLawResult {
    pub n: usize,
    pub dist: EmpiricalDistribution,
    pub ess: f64,
    pub low_ess: bool,
    pub seed: u64,
}

/// The law of n - tau_n conditioned on Z_n > 0. The survival indicator is
/// Rao-Blackwellized to the quenched survival probability, so no population
/// is simulated.
pub fn tau_gap_law(
    law: &EnvironmentLaw,
    n: usize,
    n_samples: u64,
    seed: u64,
    shards: usize,
) -> Result<GapLawResult> {
    let blocks = mc::run_blocks(seed, n_samples, shards, |rng, _s, count| {
        let mut pairs: Vec<(u64, f64)> = Vec::new();
        let mut acc = WeightedAcc::new();
        for _ in 0..count {
            let (indices, walk) = law.sample_indices(n, Measure::Tilted, rng);
            let w = (-walk.last()).exp() * survival_from_indices(law, &indices);
            if w > 0.0 {
                let gap = (n - walk.stats().tau) as u64;
                pairs.push((gap, w));
                acc.push(w, gap as f64);
            }
        }
        (pairs, acc)
    });
    let mut all: Vec<(u64, f64)> = Vec::new();
    let mut acc = WeightedAcc::new();
    for (pairs, a) in blocks {
        all.extend(pairs);
        acc.merge(&a);
    }
    let ess = acc.ess();
    Ok(GapLawResult {
        n,
        dist: EmpiricalDistribution::from_weighted(all.iter().copied(), all.len() as u64),
        ess,
        low_ess: ess < 100.0,
        seed,
    })
}

#[derive(Clone, Debug)]
pub struct PathShapeResult {
    pub n: usize,
    pub grid: Vec<f64>,
    /// per grid time: KS distance between the conditioned-on-survival
    /// normalized marginal and the min-at-end reference marginal
    pub ks_per_t: Vec<f64>,
    /// P(argmin/n > 0.9 | Z_n > 0)
    pub argmin_tail_prob: f64,
    /// weighted correlation between the t = 0.5 marginal and the indicator
    /// of a small tau gap (asymptotic independence diagnostic)
    pub correlation: f64,
    pub a_n: f64,
    pub ess: f64,
    pub low_ess: bool,
    pub n_ref: u64,
    pub seed: u64,
}

/// Theorem-1.3-style comparison: normalized conditioned paths against the
/// Lambda-mapped M_n < 0 construction of the min-at-end reference law.
pub fn path_shape_experiment(
    law: &EnvironmentLaw,
    n: usize,
    n_samples: u64,
    n_ref: u64,
    grid: &[f64],
    seed: u64,
    shards: usize,
) -> Result<PathShapeResult> {
    if grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::Config("path-shape grid times must lie in [0,1]".into()));
    }
    let sigma = law.tilted_var_x().sqrt();
    let a_n = sigma * (n as f64).sqrt();
    let gi: Vec<usize> = grid.iter().map(|t| ((n as f64) * t).floor() as usize).collect();
    let mid = grid.iter().position(|t| (*t - 0.5).abs() < 1e-9);

    // conditioned-on-survival marginals, survival Rao-Blackwellized
    struct Sample {
        weight: f64,
        marginals: Vec<f64>,
        argmin_frac: f64,
        gap_small: f64,
    }
    let blocks = mc::run_blocks(seed, n_samples, shards, |rng, _s, count| {
        let mut out: Vec<Sample> = Vec::new();
        for _ in 0..count {
            let (indices, walk) = law.sample_indices(n, Measure::Tilted, rng);
            let w = (-walk.last()).exp() * survival_from_indices(law, &indices);
            if w > 0.0 {
                let stats = walk.stats();
                out.push(Sample {
                    weight: w,
                    marginals: gi.iter().map(|k| walk.s(*k) / a_n).collect(),
                    argmin_frac: stats.tau as f64 / n as f64,
                    gap_small: if n - stats.tau <= 2 { 1.0 } else { 0.0 },
                });
            }
        }
        out
    });
    let samples: Vec<Sample> = blocks.into_iter().flatten().collect();

    // reference: dual rejection sampling of min-at-end paths
    let tilted = law.tilt();
    let ref_blocks = mc::run_blocks(seed.wrapping_add(777), n_ref, shards, |rng, _s, count| {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for _ in 0..count {
            let path = crate::walk::sample_min_at_end(&tilted, n, 10_000_000, rng)
                .expect("rejection budget");
            out.push(gi.iter().map(|k| path.s(*k) / a_n).collect());
        }
        out
    });
    let refs: Vec<Vec<f64>> = ref_blocks.into_iter().flatten().collect();

    let mut ks_per_t = Vec::with_capacity(grid.len());
    for (ti, _) in grid.iter().enumerate() {
        let a: Vec<(f64, f64)> = samples
            .iter()
            .map(|s| (s.marginals[ti], s.weight))
            .collect();
        let b: Vec<(f64, f64)> = refs.iter().map(|r| (r[ti], 1.0)).collect();
        ks_per_t.push(ks_two_sample_weighted(&a, &b));
    }
    let mut w_acc = WeightedAcc::new();
    let mut tail = WeightedAcc::new();
    for s in &samples {
        w_acc.push(s.weight, 1.0);
        tail.push(s.weight, if s.argmin_frac > 0.9 { 1.0 } else { 0.0 });
    }
    let correlation = match mid {
        Some(ti) => weighted_correlation(
            &samples
                .iter()
                .map(|s| (s.marginals[ti], s.gap_small, s.weight))
                .collect::<Vec<_>>(),
        ),
        None => f64::NAN,
    };
    let ess = w_acc.ess();
    Ok(PathShapeResult {
        n,
        grid: grid.to_vec(),
        ks_per_t,
        argmin_tail_prob: tail.mean(),
        correlation,
        a_n,
        ess,
        low_ess: ess < 100.0,
        n_ref,
        seed,
    })
}

/// Per-survivor bottleneck record at the requested grid of times.
#[derive(Clone, Debug)]
pub struct BottleneckRecord {
    pub weight: f64,
    pub per_t: Vec<BottleneckAt>,
}

#[derive(Clone, Copy, Debug)]
pub struct BottleneckAt {
    /// sigma_{i,n}: earliest argmin of S on [n t_{i-1}, n t_i]
    pub sigma: usize,
    /// tau_{n t_i}: earliest argmin of S on [0, n t_i]
    pub tau_nt: usize,
    /// mu_n(i) = min{j <= i : tau_{n t_i} = sigma_{j,n}}
    pub mu: usize,
    /// population at the bottleneck time tau_{n t_i}
    pub z_at_tau: u64,
    /// Z_{nt} / e^{S_{nt} - S_{tau_{nt}}}
    pub w_proxy: f64,
    /// population at nt
    pub z_at_nt: u64,
}

#[derive(Clone, Debug)]
pub struct BottleneckResult {
    pub n: usize,
    pub t_list: Vec<f64>,
    pub records: Vec<BottleneckRecord>,
    pub ess: f64,
    pub low_ess: bool,
    pub capped_runs: u64,
    pub seed: u64,
    pub a_n: f64,
}

impl BottleneckResult {
    /// Weighted samples of Z_{tau_{nt_i}} for grid slot i.
    pub fn z_at_tau_samples(&self, i: usize) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.per_t[i].z_at_tau as f64, r.weight))
            .collect()
    }

    pub fn w_proxy_samples(&self, i: usize) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| (r.per_t[i].w_proxy, r.weight))
            .collect()
    }

    /// Weighted probability that Z_{nt_i} exceeds e^{delta a_n}.
    pub fn largeness_prob(&self, i: usize, delta: f64) -> f64 {
        let threshold = (delta * self.a_n).exp();
        let mut acc = WeightedAcc::new();
        for r in &self.records {
            acc.push(
                r.weight,
                if r.per_t[i].z_at_nt as f64 > threshold {
                    1.0
                } else {
                    0.0
                },
            );
        }
        acc.mean()
    }

    /// For r = 2: correlation of the two W-proxies given mu(2) = 2, and the
    /// fraction of mu(2) = 1 records with equal bottleneck populations
    /// (weighted); the latter must be 1 by construction.
    pub fn two_slot_summary(&self) -> Option<TwoSlotSummary> {
        if self.t_list.len() < 2 {
            return None;
        }
        let mut corr_samples = Vec::new();
        let mut eq = WeightedAcc::new();
        let mut mu2_frac = WeightedAcc::new();
        for r in &self.records {
            let a = r.per_t[0];
            let b = r.per_t[1];
            if b.mu == 2 {
                corr_samples.push((a.w_proxy, b.w_proxy, r.weight));
                mu2_frac.push(r.weight, 1.0);
            } else {
                eq.push(r.weight, if a.z_at_tau == b.z_at_tau { 1.0 } else { 0.0 });
                mu2_frac.push(r.weight, 0.0);
            }
        }
        Some(TwoSlotSummary {
            mu2_eq2_correlation: weighted_correlation(&corr_samples),
            mu2_eq1_equal_fraction: eq.mean(),
            mu2_eq2_fraction: mu2_frac.mean(),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TwoSlotSummary {
    pub mu2_eq2_correlation: f64,
    pub mu2_eq1_equal_fraction: f64,
    pub mu2_eq2_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BottleneckMethod {
    /// Survivor-restricted importance sampling with weights e^{-S_n}.
    Standard,
    /// Bounded weights e^{-S_n} P(Z_n > 0 | env) with the trajectory drawn
    /// from its conditional law via the Geiger construction.
    GeigerConditional,
}

impl BottleneckMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(BottleneckMethod::Standard),
            "geiger" => Ok(BottleneckMethod::GeigerConditional),
            other => Err(Error::Config(format!("unknown bottleneck method {other}"))),
        }
    }
}

/// Theorem-1.4-style bottleneck experiment: for each survivor replicate and
/// each t_i, the first minimum sigma_{i,n} on the window, the running
/// minimum time tau_{n t_i}, the matching window index mu_n(i), the
/// population at the bottleneck and the W-proxy ratio.
pub fn bottleneck_experiment(
    law: &EnvironmentLaw,
    n: usize,
    t_list: &[f64],
    n_samples: u64,
    method: BottleneckMethod,
    seed: u64,
    shards: usize,
) -> Result<BottleneckResult> {
    if t_list.is_empty()
        || t_list.windows(2).any(|w| w[0] >= w[1])
        || t_list.iter().any(|t| !(*t > 0.0 && *t < 1.0))
    {
        return Err(Error::Config(
            "t_list must be strictly increasing inside (0,1)".into(),
        ));
    }
    let windows: Vec<(usize, usize)> = {
        let mut lo = 0usize;
        t_list
            .iter()
            .map(|t| {
                let hi = ((n as f64) * t).floor() as usize;
                let w = (lo, hi);
                lo = ((n as f64) * t).ceil() as usize;
                w
            })
            .collect()
    };
    let blocks = mc::run_blocks(seed, n_samples, shards, |rng, _s, count| {
        let mut records: Vec<BottleneckRecord> = Vec::new();
        let mut capped = 0u64;
        for _ in 0..count {
            let (indices, walk) = law.sample_indices(n, Measure::Tilted, rng);
            let (counts, weight) = match method {
                BottleneckMethod::Standard => {
                    let counts = match trajectory_from_indices(law, &indices, rng) {
                        Ok(c) => c,
                        Err(_) => {
                            capped += 1;
                            continue;
                        }
                    };
                    if counts[n] == 0 {
                        continue;
                    }
                    (counts, (-walk.last()).exp())
                }
                BottleneckMethod::GeigerConditional => {
                    let dists: Vec<&crate::offspring::OffspringDistribution> = indices
                        .iter()
                        .map(|j| &law.atoms()[*j as usize])
                        .collect();
                    let sampler = crate::trees::GeigerSampler::new(dists)
                        .expect("valid environments always survive with positive probability");
                    let weight = (-walk.last()).exp() * sampler.survival();
                    match sampler.conditional_trajectory(rng) {
                        Ok(c) => (c, weight),
                        Err(_) => {
                            capped += 1;
                            continue;
                        }
                    }
                }
            };
            let values = walk.values();
            let mut sigmas = Vec::with_capacity(t_list.len());
            let mut per_t = Vec::with_capacity(t_list.len());
            for (i, &(lo, hi)) in windows.iter().enumerate() {
                let sigma = argmin_earliest(values, lo, hi);
                sigmas.push(sigma);
                let nt = hi;
                let tau_nt = argmin_earliest(values, 0, nt);
                let mu = (0..=i)
                    .find(|j| sigmas[*j] == tau_nt)
                    .map(|j| j + 1)
                    .expect("tau_nt equals some window argmin");
                let w_proxy = counts[nt] as f64 / (values[nt] - values[tau_nt]).exp();
                per_t.push(BottleneckAt {
                    sigma,
                    tau_nt,
                    mu,
                    z_at_tau: counts[tau_nt],
                    w_proxy,
                    z_at_nt: counts[nt],
                });
            }
            records.push(BottleneckRecord { weight, per_t });
        }
        (records, capped)
    });
    let mut records = Vec::new();
    let mut capped = 0u64;
    for (r, c) in blocks {
        records.extend(r);
        capped += c;
    }
    let mut acc = WeightedAcc::new();
    for r in &records {
        acc.push(r.weight, 1.0);
    }
    let sigma = law.tilted_var_x().sqrt();
    let ess = acc.ess();
    Ok(BottleneckResult {
        n,
        t_list: t_list.to_vec(),
        records,
        ess,
        low_ess: ess < 100.0,
        capped_runs: capped,
        seed,
        a_n: sigma * (n as f64).sqrt(),
    })
}

/// a_n and b_n estimates per horizon: a_n = sigma sqrt(n) exactly from the
/// tilted variance, b_n = 1 / P(M_n < 0) up to the constant v(0).
pub fn estimate_scaling(
    law: &EnvironmentLaw,
    n_list: &[usize],
    n_samples: u64,
    seed: u64,
    shards: usize,
) -> Vec<ScalingEstimate> {
    let sigma = law.tilted_var_x().sqrt();
    n_list
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let tau = estimate_tau_end(law, n, n_samples, seed.wrapping_add(k as u64), shards);
            ScalingEstimate {
                n,
                alpha: 2.0,
                a_n: sigma * (n as f64).sqrt(),
                b_n: 1.0 / tau.value,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct LppLimitPoint {
    pub n: usize,
    pub median: f64,
    pub q01: f64,
    pub samples: Vec<f64>,
}

/// Distribution of e^{-S_n} Z~_n along environments conditioned to stay
/// nonnegative (rejection on L_n >= 0), for each horizon in n_list.
pub fn lpp_limit_diagnostic(
    law: &EnvironmentLaw,
    n_list: &[usize],
    n_samples: u64,
    seed: u64,
    shards: usize,
) -> Result<Vec<LppLimitPoint>> {
    let biased: Vec<crate::offspring::OffspringDistribution> =
        law.atoms().iter().map(|a| a.size_bias()).collect();
    let mut out = Vec::with_capacity(n_list.len());
    for (k, &n) in n_list.iter().enumerate() {
        let blocks = mc::run_blocks(
            seed.wrapping_add(1000 * k as u64),
            n_samples,
            shards,
            |rng, _s, count| {
                let mut vals = Vec::with_capacity(count as usize);
                for _ in 0..count {
                    // rejection: tilted environment with L_n >= 0
                    let indices = loop {
                        let (indices, walk) = law.sample_indices(n, Measure::Tilted, rng);
                        if walk.stats().l_n >= -BOUNDARY_TOL {
                            break indices;
                        }
                    };
                    let dists: Vec<&crate::offspring::OffspringDistribution> = indices
                        .iter()
                        .map(|j| &law.atoms()[*j as usize])
                        .collect();
                    let biased_refs: Vec<&crate::offspring::OffspringDistribution> =
                        indices.iter().map(|j| &biased[*j as usize]).collect();
                    let z = simulate_lpp_totals(&dists, &biased_refs, rng);
                    let s_n: f64 = indices
                        .iter()
                        .map(|j| law.log_means()[*j as usize])
                        .sum();
                    vals.push(z[n] as f64 * (-s_n).exp());
                }
                vals
            },
        );
        let samples: Vec<f64> = blocks.into_iter().flatten().collect();
        let pairs: Vec<(f64, f64)> = samples.iter().map(|v| (*v, 1.0)).collect();
        out.push(LppLimitPoint {
            n,
            median: weighted_quantile(&pairs, 0.5),
            q01: weighted_quantile(&pairs, 0.01),
            samples,
        });
    }
    Ok(out)
}
