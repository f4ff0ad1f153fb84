//! Exact integer samplers used for population convolution steps.
//!
//! Every sampler here is a deterministic inversion: a single uniform draw is
//! mapped to an integer by accumulating exact pmf values in a fixed scan
//! order (mode first, then alternating below/above). No normal or Poisson
//! approximations are used anywhere; the scan order makes the expected work
//! O(standard deviation) instead of O(mean).

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::offspring::OffspringDistribution;

/// Generation-size threshold below which populations are advanced by
/// per-individual draws rather than convolution samplers.
pub const PER_INDIVIDUAL_THRESHOLD: u64 = 1_000;

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Scans outward from `mode`, alternating down/up, until the cumulative pmf
/// exceeds `u`. `ratio_up(y)` is pmf(y+1)/pmf(y); `ratio_down(y)` is
/// pmf(y-1)/pmf(y). `hi` bounds the support from above (u64::MAX if none).
fn mode_scan(
    mode: u64,
    pmf_mode: f64,
    hi: u64,
    u: f64,
    ratio_up: impl Fn(u64) -> f64,
    ratio_down: impl Fn(u64) -> f64,
) -> u64 {
    let mut cum = pmf_mode;
    if u < cum {
        return mode;
    }
    let mut lo_val = mode;
    let mut lo_pmf = pmf_mode;
    let mut hi_val = mode;
    let mut hi_pmf = pmf_mode;
    let mut last = mode;
    loop {
        let mut advanced = false;
        if lo_val > 0 {
            lo_pmf *= ratio_down(lo_val);
            lo_val -= 1;
            cum += lo_pmf;
            last = lo_val;
            advanced = true;
            if u < cum {
                return lo_val;
            }
        }
        if hi_val < hi {
            hi_pmf *= ratio_up(hi_val);
            hi_val += 1;
            cum += hi_pmf;
            last = hi_val;
            advanced = true;
            if u < cum {
                return hi_val;
            }
        }
        if !advanced || (lo_pmf < 1e-300 && hi_pmf < 1e-300 && cum > 1.0 - 1e-12) {
            // u fell into the rounding sliver past the accumulated mass.
            return last;
        }
    }
}

/// Binomial(n, p) by mode-centered inversion.
pub fn binomial(n: u64, p: f64, u: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let q = 1.0 - p;
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as u64;
    let ln_pmf = ln_choose(n, mode) + mode as f64 * p.ln() + (n - mode) as f64 * q.ln();
    let pr = p / q;
    mode_scan(
        mode,
        ln_pmf.exp(),
        n,
        u,
        |y| (n - y) as f64 / (y + 1) as f64 * pr,
        |y| y as f64 / (n - y + 1) as f64 / pr,
    )
}

/// Poisson(lambda) by mode-centered inversion.
pub fn poisson(lambda: f64, u: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mode = lambda.floor() as u64;
    let ln_pmf = -lambda + mode as f64 * lambda.ln() - ln_gamma(mode as f64 + 1.0);
    mode_scan(
        mode,
        ln_pmf.exp(),
        u64::MAX,
        u,
        |y| lambda / (y + 1) as f64,
        |y| y as f64 / lambda,
    )
}

/// Negative binomial: number of failures before the `r`-th success, success
/// probability `p`. Equals the sum of `r` i.i.d. Geometric(p) variables on
/// {0,1,...}.
pub fn neg_binomial(r: u64, p: f64, u: f64) -> u64 {
    if r == 0 || p >= 1.0 {
        return 0;
    }
    let q = 1.0 - p;
    let rf = r as f64;
    let mode = if r > 1 {
        (q * (rf - 1.0) / p).floor() as u64
    } else {
        0
    };
    let ln_pmf = ln_gamma(mode as f64 + rf) - ln_gamma(mode as f64 + 1.0) - ln_gamma(rf)
        + rf * p.ln()
        + mode as f64 * q.ln();
    mode_scan(
        mode,
        ln_pmf.exp(),
        u64::MAX,
        u,
        |k| (k as f64 + rf) / (k + 1) as f64 * q,
        |k| k as f64 / (k as f64 - 1.0 + rf) / q,
    )
}

/// Sum of `count` i.i.d. draws from `dist`: the one-generation convolution
/// step. Small groups are summed per individual; larger ones go through the
/// exact distributional shortcuts (binomial / negative binomial / Poisson /
/// sequential multinomial thinning).
pub fn offspring_sum<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    count: u64,
    rng: &mut R,
) -> u64 {
    if count == 0 {
        return 0;
    }
    if count < PER_INDIVIDUAL_THRESHOLD {
        let mut total = 0u64;
        for _ in 0..count {
            total += dist.sample(rng);
        }
        return total;
    }
    match *dist.kind() {
        crate::offspring::Kind::Binary { p } => 2 * binomial(count, p, rng.random()),
        crate::offspring::Kind::Geometric { p } => neg_binomial(count, p, rng.random()),
        crate::offspring::Kind::Poisson { lambda } => poisson(count as f64 * lambda, rng.random()),
        crate::offspring::Kind::FiniteTable { ref weights, .. } => {
            let mut total = 0u64;
            let mut remaining = count;
            let mut mass_left = 1.0f64;
            for (y, &w) in weights.iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                if y + 1 == weights.len() {
                    total += y as u64 * remaining;
                    remaining = 0;
                } else {
                    let frac = (w / mass_left).clamp(0.0, 1.0);
                    let c = binomial(remaining, frac, rng.random());
                    total += y as u64 * c;
                    remaining -= c;
                    mass_left = (mass_left - w).max(0.0);
                }
            }
            total
        }
    }
}
