//! The quenched branching process: convolution dynamics along a fixed
//! environment, generating-function compositions f_{j,k}, exact quenched
//! survival probabilities (complement recursion plus a Moebius oracle for
//! all-geometric environments), the Agresti lower bound, and the quenched
//! variance formula checked against exact factorial-moment recursions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::sampler;
use crate::util::NeumaierSum;
use crate::walk::WalkPath;

/// Hard population cap; exceeding it turns silent blow-up into a typed error.
pub const POPULATION_CAP: u64 = 1_000_000_000;

/// A fixed environment: offspring laws q_1..q_n with the cached walk
/// S_0..S_n and the per-generation eta_k.
#[derive(Clone, Debug)]
pub struct QuenchedEnvironment {
    dists: Vec<OffspringDistribution>,
    walk: WalkPath,
    etas: Vec<f64>,
}

impl QuenchedEnvironment {
    pub fn new(dists: Vec<OffspringDistribution>) -> Self {
        Self::with_start(dists, 0.0)
    }

    pub fn with_start(dists: Vec<OffspringDistribution>, start: f64) -> Self {
        let incs: Vec<f64> = dists.iter().map(|d| d.log_mean()).collect();
        let etas: Vec<f64> = dists.iter().map(|d| d.eta()).collect();
        QuenchedEnvironment {
            walk: WalkPath::from_increments(start, incs),
            dists,
            etas,
        }
    }

    /// Horizon n.
    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    /// q_k for k = 1..=n.
    pub fn q(&self, k: usize) -> &OffspringDistribution {
        &self.dists[k - 1]
    }

    pub fn dists(&self) -> &[OffspringDistribution] {
        &self.dists
    }

    /// eta_k for k = 1..=n.
    pub fn eta(&self, k: usize) -> f64 {
        self.etas[k - 1]
    }

    pub fn walk(&self) -> &WalkPath {
        &self.walk
    }

    /// The environment (q_{i+1}, ..., q_n) seen from generation i.
    pub fn suffix(&self, i: usize) -> QuenchedEnvironment {
        QuenchedEnvironment::new(self.dists[i..].to_vec())
    }
}

/// Realized generation sizes Z_0..Z_n.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    counts: Vec<u64>,
}

impl Trajectory {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn z(&self, k: usize) -> u64 {
        self.counts[k]
    }

    /// Number of simulated generations n.
    pub fn len(&self) -> usize {
        self.counts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.counts.len() <= 1
    }

    pub fn survived(&self) -> bool {
        *self.counts.last().unwrap() > 0
    }
}

/// Runs the convolution dynamics: Z_k is the sum of Z_{k-1} i.i.d. draws
/// from q_k. Small generations are advanced per individual, large ones by
/// exact distributional shortcuts; no approximation either way.
pub fn simulate_quenched<R: Rng + ?Sized>(
    env: &QuenchedEnvironment,
    z0: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    let n = env.len();
    let mut counts = Vec::with_capacity(n + 1);
    counts.push(z0);
    let mut z = z0;
    for k in 1..=n {
        if z == 0 {
            counts.push(0);
            continue;
        }
        z = sampler::offspring_sum(env.q(k), z, rng);
        if z > POPULATION_CAP {
            return Err(Error::PopulationCap {
                cap: POPULATION_CAP,
                generation: k,
                partial: counts,
            });
        }
        counts.push(z);
    }
    Ok(Trajectory { counts })
}

/// Iterated generating function f_{j,k}: the forward composition
/// f_{j+1} o ... o f_k for j <= k (f_{k,k} = id), and the reversed
/// composition f_j o f_{j-1} o ... o f_{k+1} for j > k.
pub fn compose_pgf(env: &QuenchedEnvironment, j: usize, k: usize, s: f64) -> Result<f64> {
    let n = env.len();
    if j > n || k > n {
        return Err(Error::IndexOutOfRange(format!(
            "compose_pgf({j},{k}) on horizon {n}"
        )));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Domain(format!("pgf composition needs s in [0,1], got {s}")));
    }
    let mut value = s;
    if j <= k {
        for i in (j + 1..=k).rev() {
            value = env.q(i).pgf(value)?;
        }
    } else {
        for i in k + 1..=j {
            value = env.q(i).pgf(value)?;
        }
    }
    Ok(value)
}

/// Quenched survival 1 - f_{0,n}(0) through the cancellation-safe
/// complement recursion t_k = 1 - f_{k+1}(1 - t_{k+1}), t_n = 1.
pub fn survival_quenched(env: &QuenchedEnvironment, n: usize) -> Result<f64> {
    if n > env.len() {
        return Err(Error::IndexOutOfRange(format!(
            "survival horizon {n} on environment of length {}",
            env.len()
        )));
    }
    let mut t = 1.0;
    for k in (1..=n).rev() {
        t = env.q(k).pgf_survival_complement(t)?;
    }
    Ok(t)
}

/// All suffix survivals s_i = P(Z_n > 0 | Z_i = 1) for i = 0..=n in one
/// backward pass; s_n = 1.
pub fn survival_profile(env: &QuenchedEnvironment) -> Result<Vec<f64>> {
    let n = env.len();
    let mut s = vec![0.0; n + 1];
    s[n] = 1.0;
    for i in (0..n).rev() {
        s[i] = env.q(i + 1).pgf_survival_complement(s[i + 1])?;
    }
    Ok(s)
}

/// Exact survival for all-geometric environments by composing the 2x2
/// Moebius representations of the pgfs, with power-of-two renormalization
/// so dyadic cases stay bit-exact. The module's exactness oracle.
pub fn survival_lf_exact(env: &QuenchedEnvironment, n: usize) -> Result<f64> {
    if n > env.len() {
        return Err(Error::IndexOutOfRange(format!(
            "survival horizon {n} on environment of length {}",
            env.len()
        )));
    }
    // f(s) = p / (1 - q s) is (a s + b) / (c s + d) with a=0, b=p, c=-q, d=1
    let mut m = [1.0f64, 0.0, 0.0, 1.0]; // identity [a b; c d] row-major
    for k in 1..=n {
        let p = env.q(k).as_geometric().ok_or_else(|| {
            Error::KindMismatch(format!("survival_lf_exact needs geometric atoms, q_{k} is not"))
        })?;
        let q = 1.0 - p;
        let f = [0.0, p, -q, 1.0];
        m = [
            m[0] * f[0] + m[1] * f[2],
            m[0] * f[1] + m[1] * f[3],
            m[2] * f[0] + m[3] * f[2],
            m[2] * f[1] + m[3] * f[3],
        ];
        let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if scale > 1e100 || (scale > 0.0 && scale < 1e-100) {
            let factor = 2.0f64.powi(-(scale.log2().round() as i32));
            for v in &mut m {
                *v *= factor;
            }
        }
    }
    // f_{0,n}(0) = b / d
    Ok((m[3] - m[1]) / m[3])
}

#[derive(Clone, Copy, Debug)]
pub struct AgrestiBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// The Agresti estimate on the reversed composition:
/// (1 - f_{k,0}(s)) e^{-S_k} >= (1/(1-s) + sum_{i<=k} eta_i e^{S_i})^{-1}.
pub fn agresti_bound_check(env: &QuenchedEnvironment, s: f64, k: usize) -> Result<AgrestiBound> {
    if k > env.len() {
        return Err(Error::IndexOutOfRange(format!(
            "agresti k={k} on horizon {}",
            env.len()
        )));
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Domain(format!("agresti needs s in [0,1), got {s}")));
    }
    // 1 - f_{k,0}(s) by the complement recursion, innermost f_1 first
    let mut t = 1.0 - s;
    for i in 1..=k {
        t = env.q(i).pgf_survival_complement(t)?;
    }
    let lhs = t * (-env.walk.s(k)).exp();
    let mut denom = NeumaierSum::new();
    denom.add(1.0 / (1.0 - s));
    for i in 1..=k {
        denom.add(env.eta(i) * env.walk.s(i).exp());
    }
    let rhs = 1.0 / denom.value();
    Ok(AgrestiBound {
        lhs,
        rhs,
        holds: lhs >= rhs * (1.0 - 1e-12) - 1e-300,
    })
}

/// For all-geometric environments the chain identity is sharp with half the
/// eta coefficient: (1 - f_{k,0}(s)) e^{-S_k} equals
/// (1/(1-s) + sum (eta_i / 2) e^{S_i})^{-1} exactly. Returns |lhs - rhs|.
pub fn agresti_lf_equality_gap(env: &QuenchedEnvironment, s: f64, k: usize) -> Result<f64> {
    for i in 1..=k {
        if env.q(i).as_geometric().is_none() {
            return Err(Error::KindMismatch(format!(
                "linear-fractional identity needs geometric atoms, q_{i} is not"
            )));
        }
    }
    let bound = agresti_bound_check(env, s, k)?;
    let mut denom = NeumaierSum::new();
    denom.add(1.0 / (1.0 - s));
    for i in 1..=k {
        denom.add(0.5 * env.eta(i) * env.walk.s(i).exp());
    }
    Ok((bound.lhs - 1.0 / denom.value()).abs())
}

#[derive(Clone, Copy, Debug)]
pub struct VarianceCheck {
    /// z (e^{-S_n} + sum_{i<n} eta_{i+1} e^{-S_i} - 1) scaled by e^{2 S_n}.
    pub formula_value: f64,
    /// Var(Z_n | Z_0 = z) from exact factorial-moment recursions.
    pub pgf_value: f64,
}

/// Checks the quenched variance formula against the per-generation
/// factorial-moment recursion (no numeric differentiation anywhere).
pub fn variance_formula_check(env: &QuenchedEnvironment, z: u64, n: usize) -> Result<VarianceCheck> {
    if n > env.len() {
        return Err(Error::IndexOutOfRange(format!(
            "variance horizon {n} on environment of length {}",
            env.len()
        )));
    }
    let zf = z as f64;
    let s_n = env.walk.s(n);
    let mut series = NeumaierSum::new();
    series.add((-s_n).exp());
    for i in 0..n {
        series.add(env.eta(i + 1) * (-env.walk.s(i)).exp());
    }
    series.add(-1.0);
    let formula_value = zf * series.value() * (2.0 * s_n).exp();

    // factorial moments: m1_k = E[Z_k], phi_k = E[Z_k (Z_k - 1)]
    let mut m1 = zf;
    let mut phi = zf * (zf - 1.0);
    for k in 1..=n {
        let m = env.q(k).mean();
        let fm2 = env.q(k).second_factorial_moment();
        phi = phi * m * m + m1 * fm2;
        m1 *= m;
    }
    let pgf_value = phi + m1 - m1 * m1;
    Ok(VarianceCheck {
        formula_value,
        pgf_value,
    })
}

/// Partial sums of the eta series along the environment:
/// forward[k] = sum_{i<k} eta_{i+1} e^{-S_i} and
/// reversed[k] = sum_{i<=k} eta_i e^{S_i}. Convergence diagnostics for the
/// conditioned measures.
#[derive(Clone, Debug)]
pub struct EtaSeries {
    pub forward: Vec<f64>,
    pub reversed: Vec<f64>,
}

pub fn eta_series(env: &QuenchedEnvironment) -> EtaSeries {
    let n = env.len();
    let mut forward = Vec::with_capacity(n + 1);
    let mut reversed = Vec::with_capacity(n + 1);
    let mut f = NeumaierSum::new();
    let mut r = NeumaierSum::new();
    forward.push(0.0);
    reversed.push(0.0);
    for k in 0..n {
        f.add(env.eta(k + 1) * (-env.walk.s(k)).exp());
        forward.push(f.value());
        r.add(env.eta(k + 1) * env.walk.s(k + 1).exp());
        reversed.push(r.value());
    }
    EtaSeries { forward, reversed }
}
