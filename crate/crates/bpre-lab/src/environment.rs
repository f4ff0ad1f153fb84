//! The i.i.d. random environment and the exponential change of measure.
//!
//! An `EnvironmentLaw` is a finite mixture of offspring distributions: atom
//! j is drawn with probability p_j under the annealed measure. With
//! X_j = log m(q_j) and gamma = sum p_j e^{X_j}, the tilted measure draws
//! atom j with probability p_j e^{X_j} / gamma. Calibration to
//! E[X e^X] = 0 makes the tilted walk mean-zero (the intermediately
//! subcritical regime); finite mixtures keep every identity exactly
//! computable by enumeration.

use rand::Rng;
use serde::Serialize;

use crate::bpre::QuenchedEnvironment;
use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::util::{neumaier_sum, NeumaierSum};
use crate::walk::WalkPath;

const NORMALIZATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// The annealed environment measure.
    Annealed,
    /// The exponentially tilted measure with density e^{S_n} / gamma^n.
    Tilted,
}

#[derive(Clone, Debug)]
pub struct EnvironmentLaw {
    atoms: Vec<OffspringDistribution>,
    weights: Vec<f64>,
    log_means: Vec<f64>,
    gamma: f64,
    tilted_weights: Vec<f64>,
    cum_own: Vec<f64>,
    cum_tilted: Vec<f64>,
}

impl EnvironmentLaw {
    pub fn new(atoms: Vec<OffspringDistribution>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidDistribution(
                "environment needs matching nonempty atoms and weights".into(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidDistribution(
                "environment weights must be finite and nonnegative".into(),
            ));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution(format!(
                "environment weights sum to {total}, outside 1 +/- 1e-12"
            )));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_means: Vec<f64> = atoms.iter().map(|a| a.log_mean()).collect();
        let gamma = neumaier_sum(
            weights
                .iter()
                .zip(log_means.iter())
                .map(|(w, x)| w * x.exp()),
        );
        let tilted_weights: Vec<f64> = weights
            .iter()
            .zip(log_means.iter())
            .map(|(w, x)| w * x.exp() / gamma)
            .collect();
        let cum = |ws: &[f64]| -> Vec<f64> {
            let mut acc = 0.0;
            ws.iter()
                .map(|w| {
                    acc += w;
                    acc
                })
                .collect()
        };
        Ok(EnvironmentLaw {
            cum_own: cum(&weights),
            cum_tilted: cum(&tilted_weights),
            atoms,
            weights,
            log_means,
            gamma,
            tilted_weights,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[OffspringDistribution] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tilted_weights(&self) -> &[f64] {
        &self.tilted_weights
    }

    pub fn log_means(&self) -> &[f64] {
        &self.log_means
    }

    /// gamma = E[e^X] = E[m(Q)].
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// E[X] under the annealed weights.
    pub fn mean_x(&self) -> f64 {
        neumaier_sum(
            self.weights
                .iter()
                .zip(self.log_means.iter())
                .map(|(w, x)| w * x),
        )
    }

    /// E[X e^X], exactly over atoms; zero is the calibration target.
    pub fn moment_x_exp_x(&self) -> f64 {
        neumaier_sum(
            self.weights
                .iter()
                .zip(self.log_means.iter())
                .map(|(w, x)| w * x * x.exp()),
        )
    }

    /// E[X] under the tilted weights; vanishes when A1 is calibrated.
    pub fn tilted_mean_x(&self) -> f64 {
        neumaier_sum(
            self.tilted_weights
                .iter()
                .zip(self.log_means.iter())
                .map(|(w, x)| w * x),
        )
    }

    /// Var(X) under the tilted weights; exact for finite mixtures.
    pub fn tilted_var_x(&self) -> f64 {
        let m = self.tilted_mean_x();
        neumaier_sum(
            self.tilted_weights
                .iter()
                .zip(self.log_means.iter())
                .map(|(w, x)| w * (x - m) * (x - m)),
        )
    }

    /// The law of Q under the tilted measure, as an environment law of its
    /// own (its weights are the tilted weights).
    pub fn tilt(&self) -> EnvironmentLaw {
        self.tilt_with_exponent(1.0)
    }

    /// Reweights atom j proportionally to e^{c X_j}. c = 1 is the tilt;
    /// c = -1 applied to a tilted law recovers the original weights.
    pub fn tilt_with_exponent(&self, c: f64) -> EnvironmentLaw {
        let raw: Vec<f64> = self
            .weights
            .iter()
            .zip(self.log_means.iter())
            .map(|(w, x)| w * (c * x).exp())
            .collect();
        let total = neumaier_sum(raw.iter().copied());
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        EnvironmentLaw::new(self.atoms.clone(), weights).expect("reweighted law stays valid")
    }

    /// E_tilted[(log+ zeta(a))^{alpha + eps}], exact over atoms. Always
    /// finite for finite mixtures; reported to document A3 compliance.
    pub fn check_a3(&self, a: u64, eps: f64, alpha: f64) -> Result<f64> {
        let mut acc = NeumaierSum::new();
        for (j, atom) in self.atoms.iter().enumerate() {
            let z = atom.zeta(a)?;
            let log_plus = z.max(1.0).ln();
            acc.add(self.tilted_weights[j] * log_plus.powf(alpha + eps));
        }
        Ok(acc.value())
    }

    fn cum_for(&self, measure: Measure) -> &[f64] {
        match measure {
            Measure::Annealed => &self.cum_own,
            Measure::Tilted => &self.cum_tilted,
        }
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, measure: Measure, rng: &mut R) -> usize {
        let cum = self.cum_for(measure);
        let u: f64 = rng.random();
        cum.partition_point(|c| *c <= u).min(self.atoms.len() - 1)
    }

    /// Draws an atom under the law's own weights (for laws already tilted).
    pub fn sample_own_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sample_index(Measure::Annealed, rng)
    }

    /// Draws atom indices for n generations plus the realized walk.
    pub fn sample_indices<R: Rng + ?Sized>(
        &self,
        n: usize,
        measure: Measure,
        rng: &mut R,
    ) -> (Vec<u16>, WalkPath) {
        let mut indices = Vec::with_capacity(n);
        let mut incs = Vec::with_capacity(n);
        for _ in 0..n {
            let j = self.sample_index(measure, rng);
            indices.push(j as u16);
            incs.push(self.log_means[j]);
        }
        (indices, WalkPath::from_increments(0.0, incs))
    }

    /// Draws an i.i.d. environment of horizon n under the requested measure.
    pub fn sample_environment<R: Rng + ?Sized>(
        &self,
        n: usize,
        measure: Measure,
        rng: &mut R,
    ) -> QuenchedEnvironment {
        let (indices, _) = self.sample_indices(n, measure, rng);
        self.env_from_indices(&indices, 0.0)
    }

    /// Environment under the law's own weights with walk start x.
    pub fn sample_environment_own<R: Rng + ?Sized>(
        &self,
        n: usize,
        start: f64,
        rng: &mut R,
    ) -> QuenchedEnvironment {
        let (indices, _) = self.sample_indices(n, Measure::Annealed, rng);
        self.env_from_indices(&indices, start)
    }

    pub fn env_from_indices(&self, indices: &[u16], start: f64) -> QuenchedEnvironment {
        let dists: Vec<OffspringDistribution> = indices
            .iter()
            .map(|j| self.atoms[*j as usize].clone())
            .collect();
        QuenchedEnvironment::with_start(dists, start)
    }

    /// The Radon-Nikodym factor gamma^n e^{-(S_n - S_0)} turning tilted
    /// expectations into annealed ones: E[phi] = gamma^n E_tilted[phi e^{-S_n}].
    pub fn importance_weight(&self, path: &WalkPath) -> f64 {
        let n = path.len() as i32;
        self.gamma.powi(n) * (-(path.last() - path.start())).exp()
    }

    /// Visits every length-n atom sequence with its probability mass under
    /// the requested measure. Exhaustive-enumeration oracle machinery.
    pub fn for_each_sequence(
        &self,
        n: usize,
        measure: Measure,
        f: &mut impl FnMut(&[u16], f64),
    ) {
        let weights = match measure {
            Measure::Annealed => &self.weights,
            Measure::Tilted => &self.tilted_weights,
        };
        let mut indices = vec![0u16; n];
        visit_sequences(weights, &mut indices, 0, 1.0, f);
    }

    /// Walk increments for an index sequence.
    pub fn walk_for_indices(&self, indices: &[u16]) -> WalkPath {
        WalkPath::from_increments(
            0.0,
            indices
                .iter()
                .map(|j| self.log_means[*j as usize])
                .collect(),
        )
    }
}

fn visit_sequences(
    weights: &[f64],
    indices: &mut Vec<u16>,
    depth: usize,
    mass: f64,
    f: &mut impl FnMut(&[u16], f64),
) {
    if depth == indices.len() {
        f(indices, mass);
        return;
    }
    for (j, &w) in weights.iter().enumerate() {
        indices[depth] = j as u16;
        visit_sequences(weights, indices, depth + 1, mass * w, f);
    }
}

/// Empirical scaling sequences under A2 with alpha fixed to 2:
/// a_n = sigma sqrt(n) from the exact tilted variance, b_n estimated via
/// 1 / P(M_n < 0) up to the constant v(0).
#[derive(Clone, Debug, Serialize)]
pub struct ScalingEstimate {
    pub n: usize,
    pub alpha: f64,
    pub a_n: f64,
    pub b_n: f64,
}

/// Result of calibrating a free atom weight to E[X e^X] = 0.
#[derive(Clone, Debug)]
pub struct CalibrationReport {
    pub law: EnvironmentLaw,
    pub free_index: usize,
    pub free_weight: f64,
    pub gamma: f64,
    pub mean_x: f64,
    pub moment_x_exp_x: f64,
    /// E[X] < 0 and gamma < 1; false flags a non-subcritical calibration.
    pub subcritical: bool,
}

/// Calibrates the weight of atom `free` (remaining mass split equally among
/// the other atoms) so that E[X e^X] = 0, by bisection on [1e-9, 1-1e-9].
/// The objective is linear in the free weight, so a sign change at the
/// endpoints is equivalent to solvability.
pub fn calibrate_a1(atoms: Vec<OffspringDistribution>, free: usize) -> Result<CalibrationReport> {
    if atoms.len() < 2 {
        return Err(Error::InvalidDistribution(
            "calibration needs at least two atoms".into(),
        ));
    }
    if free >= atoms.len() {
        return Err(Error::IndexOutOfRange(format!(
            "free index {free} with {} atoms",
            atoms.len()
        )));
    }
    let c: Vec<f64> = atoms.iter().map(|a| {
        let x = a.log_mean();
        x * x.exp()
    }).collect();
    let k = atoms.len();
    let weights_for = |w: f64| -> Vec<f64> {
        (0..k)
            .map(|j| if j == free { w } else { (1.0 - w) / (k - 1) as f64 })
            .collect()
    };
    let objective = |w: f64| -> f64 {
        weights_for(w)
            .iter()
            .zip(c.iter())
            .map(|(wj, cj)| wj * cj)
            .sum()
    };
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    let (f_lo, f_hi) = (objective(lo), objective(hi));
    if f_lo == 0.0 && f_hi == 0.0 {
        return Err(Error::NoRoot(format!(
            "degenerate objective: X e^X products are {c:?}; every weight satisfies A1 \
             but the law is critical, not subcritical"
        )));
    }
    if f_lo * f_hi > 0.0 {
        return Err(Error::NoRoot(format!(
            "X e^X products {c:?} do not bracket zero on the weight interval"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = objective(mid);
        if f_mid == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if f_mid * f_lo < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let w = 0.5 * (lo + hi);
    let law = EnvironmentLaw::new(atoms, weights_for(w))?;
    let moment = law.moment_x_exp_x();
    if moment.abs() > 1e-12 {
        return Err(Error::NoRoot(format!(
            "bisection left |E[X e^X]| = {moment:e} above 1e-12"
        )));
    }
    let mean_x = law.mean_x();
    let gamma = law.gamma();
    Ok(CalibrationReport {
        free_index: free,
        free_weight: w,
        gamma,
        mean_x,
        moment_x_exp_x: moment,
        subcritical: mean_x < 0.0 && gamma < 1.0,
        law,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Equal weights on geometric atoms with X = +log 2 and -log 2.
    pub fn law_pm_log2() -> EnvironmentLaw {
        EnvironmentLaw::new(
            vec![
                OffspringDistribution::geometric(1.0 / 3.0).unwrap(), // m = 2
                OffspringDistribution::geometric(2.0 / 3.0).unwrap(), // m = 1/2
            ],
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    /// The calibrated two-atom law: Binary(0.25) and Geometric(1/3), weight
    /// 0.8 on the binary atom. Lattice (X = -/+ log 2) but exactly
    /// intermediately subcritical.
    pub fn law_calibrated_binary_geo() -> EnvironmentLaw {
        calibrate_a1(
            vec![
                OffspringDistribution::binary(0.25).unwrap(),
                OffspringDistribution::geometric(1.0 / 3.0).unwrap(),
            ],
            0,
        )
        .unwrap()
        .law
    }

    /// A calibrated three-atom law (adds a critical Binary(0.5) atom).
    pub fn law_three_calibrated() -> EnvironmentLaw {
        calibrate_a1(
            vec![
                OffspringDistribution::binary(0.25).unwrap(),
                OffspringDistribution::geometric(1.0 / 3.0).unwrap(),
                OffspringDistribution::binary(0.5).unwrap(),
            ],
            0,
        )
        .unwrap()
        .law
    }

    /// Calibrated law with irrational log-mean ratio, used by the
    /// asymptotic experiments.
    pub fn law_asym() -> EnvironmentLaw {
        calibrate_a1(
            vec![
                OffspringDistribution::binary(0.3).unwrap(),
                OffspringDistribution::geometric(0.35).unwrap(),
            ],
            0,
        )
        .unwrap()
        .law
    }

    /// Mildly subcritical calibrated law (gamma close to 1): annealed
    /// survival stays visible to the naive estimator at n = 64.
    pub fn law_mild() -> EnvironmentLaw {
        calibrate_a1(
            vec![
                OffspringDistribution::binary(0.35).unwrap(),
                OffspringDistribution::geometric(0.4).unwrap(),
            ],
            0,
        )
        .unwrap()
        .law
    }

    /// Steep calibrated law (large walk increments): the conditioned tau
    /// gap concentrates hard near zero.
    pub fn law_steep() -> EnvironmentLaw {
        calibrate_a1(
            vec![
                OffspringDistribution::poisson(0.15).unwrap(),
                OffspringDistribution::geometric(0.2).unwrap(),
            ],
            0,
        )
        .unwrap()
        .law
    }

    #[test]
    fn moment_x_exp_x_examples() {
        let single = EnvironmentLaw::new(
            vec![OffspringDistribution::geometric(0.5).unwrap()],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(single.moment_x_exp_x(), 0.0); // X = 0: critical degenerate

        // analytic root of w X1 e^{X1} + (1-w) X2 e^{X2} = 0
        let b = OffspringDistribution::binary(0.25).unwrap();
        let g = OffspringDistribution::geometric(1.0 / 3.0).unwrap();
        let x1 = b.log_mean();
        let x2 = g.log_mean();
        let w_star = x2 * x2.exp() / (x2 * x2.exp() - x1 * x1.exp());
        assert!((w_star - 0.8).abs() < 1e-12);
        let law = EnvironmentLaw::new(vec![b, g], vec![w_star, 1.0 - w_star]).unwrap();
        assert!(law.moment_x_exp_x().abs() <= 1e-12);

        // all X_j > 0: strictly positive
        let pos = EnvironmentLaw::new(
            vec![
                OffspringDistribution::geometric(0.25).unwrap(),
                OffspringDistribution::poisson(2.0).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        assert!(pos.moment_x_exp_x() > 0.0);
    }

    #[test]
    fn calibration_finds_the_analytic_root() {
        let report = calibrate_a1(
            vec![
                OffspringDistribution::binary(0.25).unwrap(),
                OffspringDistribution::geometric(1.0 / 3.0).unwrap(),
            ],
            0,
        )
        .unwrap();
        assert!((report.free_weight - 0.8).abs() < 1e-9);
        assert!(report.moment_x_exp_x.abs() <= 1e-12);
        assert!((report.gamma - 0.8).abs() < 1e-9);
        assert!(report.mean_x < 0.0);
        assert!(report.subcritical);
        // A1 makes the tilted walk mean-zero
        assert!(report.law.tilted_mean_x().abs() <= 1e-10);
    }

    #[test]
    fn calibration_rejects_degenerate_families() {
        let err = calibrate_a1(
            vec![
                OffspringDistribution::binary(0.5).unwrap(),
                OffspringDistribution::binary(0.5).unwrap(),
            ],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoRoot(_)), "{err}");

        // same-sign products
        let err = calibrate_a1(
            vec![
                OffspringDistribution::geometric(0.25).unwrap(),
                OffspringDistribution::poisson(2.0).unwrap(),
            ],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoRoot(_)));
    }

    #[test]
    fn tilt_examples() {
        let law = law_pm_log2();
        let tilted = law.tilt();
        assert!((tilted.weights()[0] - 0.8).abs() < 1e-12);
        assert!((tilted.weights()[1] - 0.2).abs() < 1e-12);

        let single = EnvironmentLaw::new(
            vec![OffspringDistribution::poisson(1.5).unwrap()],
            vec![1.0],
        )
        .unwrap();
        assert_eq!(single.tilt().weights(), &[1.0]);

        // involution: reweighting the tilted law by e^{-X} recovers the law
        let back = tilted.tilt_with_exponent(-1.0);
        for (a, b) in back.weights().iter().zip(law.weights().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((back.gamma() - law.gamma()).abs() < 1e-12);
    }

    #[test]
    fn a3_moment_examples() {
        let binaries = EnvironmentLaw::new(
            vec![
                OffspringDistribution::binary(0.3).unwrap(),
                OffspringDistribution::binary(0.9).unwrap(),
            ],
            vec![0.4, 0.6],
        )
        .unwrap();
        // zeta(3) = 0 for binary atoms, so log+ = 0
        assert_eq!(binaries.check_a3(3, 0.5, 2.0).unwrap(), 0.0);

        // one Geometric(0.5) atom with zeta(1) = 3, one Binary(1.0) atom
        // with zeta(1) = 1 (log+ = 0): value is w_tilde (log 3)^{2.5}
        let law = EnvironmentLaw::new(
            vec![
                OffspringDistribution::geometric(0.5).unwrap(),
                OffspringDistribution::binary(1.0).unwrap(),
            ],
            vec![0.3, 0.7],
        )
        .unwrap();
        let w_tilde = law.tilted_weights()[0];
        let expect = w_tilde * 3.0f64.ln().powf(2.5);
        assert!((law.check_a3(1, 0.5, 2.0).unwrap() - expect).abs() < 1e-12);

        let v = law_calibrated_binary_geo().check_a3(1, 0.5, 2.0).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn sampling_respects_measures() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let single = EnvironmentLaw::new(
            vec![OffspringDistribution::geometric(0.25).unwrap()],
            vec![1.0],
        )
        .unwrap();
        let env = single.sample_environment(1, Measure::Annealed, &mut rng);
        assert_eq!(env.len(), 1);
        assert!((env.walk().s(1) - single.log_means()[0]).abs() < 1e-15);

        // under the tilted measure of a calibrated law, S_n / n centers on 0
        let law = law_calibrated_binary_geo();
        let n = 1_000;
        let reps = 10_000;
        let mut acc = crate::estimate::MeanAcc::new();
        for _ in 0..reps {
            let (_, walk) = law.sample_indices(n, Measure::Tilted, &mut rng);
            acc.push(walk.last() / n as f64);
        }
        assert!(acc.mean().abs() < 3.0 * acc.stderr(), "mean={}", acc.mean());

        // under the annealed measure the drift is negative
        let mut ann = crate::estimate::MeanAcc::new();
        for _ in 0..reps {
            let (_, walk) = law.sample_indices(32, Measure::Annealed, &mut rng);
            ann.push(walk.last() / 32.0);
        }
        assert!(ann.mean() < 0.0);
    }

    #[test]
    fn measure_change_identity_exact_per_sequence() {
        // P-mass = gamma^n e^{-S_n} * tilted-mass, sequence by sequence
        let law = law_calibrated_binary_geo();
        for n in 0..=6usize {
            let mut annealed: Vec<(Vec<u16>, f64)> = Vec::new();
            law.for_each_sequence(n, Measure::Annealed, &mut |idx, m| {
                annealed.push((idx.to_vec(), m));
            });
            let mut i = 0;
            law.for_each_sequence(n, Measure::Tilted, &mut |idx, m| {
                let (ref idx2, ann_mass) = annealed[i];
                assert_eq!(idx, &idx2[..]);
                let walk = law.walk_for_indices(idx);
                let converted = law.importance_weight(&walk) * m;
                assert!(
                    (converted - ann_mass).abs() < 1e-12,
                    "n={n} idx={idx:?}: {converted} vs {ann_mass}"
                );
                i += 1;
            });
        }
        // n = 0 importance weight is 1
        let empty = WalkPath::from_increments(0.0, vec![]);
        assert_eq!(law.importance_weight(&empty), 1.0);
    }

    #[test]
    fn tilt_consistency_for_bounded_functionals() {
        // E[phi] = gamma^n E_tilted[phi e^{-S_n}] for a bounded test phi
        let law = law_calibrated_binary_geo();
        let n = 5;
        let phi = |idx: &[u16], walk: &WalkPath| -> f64 {
            // depends on both the draw sequence and the path
            (idx.iter().filter(|j| **j == 0).count() as f64 / n as f64)
                * (1.0 + walk.stats().m_n.tanh())
        };
        let mut direct = 0.0;
        law.for_each_sequence(n, Measure::Annealed, &mut |idx, m| {
            direct += m * phi(idx, &law.walk_for_indices(idx));
        });
        let mut tilted = 0.0;
        law.for_each_sequence(n, Measure::Tilted, &mut |idx, m| {
            let walk = law.walk_for_indices(idx);
            tilted += m * phi(idx, &walk) * law.importance_weight(&walk);
        });
        assert!((direct - tilted).abs() < 1e-12);
    }

    #[test]
    fn gamma_matches_simulated_offspring_mean() {
        // gamma = E[m(Q)] = E[Z_1]
        let law = law_calibrated_binary_geo();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut acc = crate::estimate::MeanAcc::new();
        for _ in 0..200_000 {
            let j = law.sample_index(Measure::Annealed, &mut rng);
            acc.push(law.atoms()[j].sample(&mut rng) as f64);
        }
        assert!(
            (acc.mean() - law.gamma()).abs() < 3.0 * acc.stderr(),
            "mean={} gamma={}",
            acc.mean(),
            law.gamma()
        );
    }
}
