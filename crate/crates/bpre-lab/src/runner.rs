//! Experiment dispatch: turns a configuration into a report of result rows
//! and soft-gate verdicts. Every subcommand of the CLI lands here, so
//! integration tests can drive the exact same code paths.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bpre::{
    agresti_bound_check, agresti_lf_equality_gap, eta_series, simulate_quenched,
    survival_lf_exact, survival_quenched, variance_formula_check, QuenchedEnvironment,
};
use crate::config::Config;
use crate::environment::{EnvironmentLaw, Measure};
use crate::error::{Error, Result};
use crate::estimate::{weighted_quantile, EmpiricalDistribution, MeanAcc};
use crate::experiments::{
    bottleneck_experiment, conditional_population_law, estimate_scaling, estimate_survival,
    estimate_tau_end, lpp_limit_diagnostic, path_shape_experiment, tau_gap_law,
    theta_ratio_curve, BottleneckMethod, ConditioningProposal, SurvivalMethod,
};
use crate::offspring::OffspringDistribution;
use crate::report::{Report, Row, Status};
use crate::trees::{
    enumerate_conditioned_trest_law, leftmost_stem, simulate_geiger_trest, simulate_lpp_trest,
    tv_coupling_bound_check, GeigerSampler, TrestKey,
};
use crate::walk::{
    arcsine_diagnostic, harmonicity_residual, neg_exp_min_nonneg, renewal_u, renewal_v,
    RenewalKind, BOUNDARY_TOL,
};

pub const EXPERIMENTS: [&str; 10] = [
    "calibrate",
    "survival",
    "theta",
    "cond-dist",
    "tau-gap",
    "path-shape",
    "bottleneck",
    "walk-check",
    "bpre-check",
    "tree-check",
];

pub fn run(experiment: &str, cfg: &Config) -> Result<Report> {
    match experiment {
        "calibrate" => run_calibrate(cfg),
        "survival" => run_survival(cfg),
        "theta" => run_theta(cfg),
        "cond-dist" => run_cond_dist(cfg),
        "tau-gap" => run_tau_gap(cfg),
        "path-shape" => run_path_shape(cfg),
        "bottleneck" => run_bottleneck(cfg),
        "walk-check" => run_walk_check(cfg),
        "bpre-check" => run_bpre_check(cfg),
        "tree-check" => run_tree_check(cfg),
        other => Err(Error::Config(format!("unknown experiment {other}"))),
    }
}

/// Loads a config file (the law spec is required there), applies it and
/// writes <out>/<experiment>.<format>. Returns the written path.
pub fn run_config(config_path: &Path, out_dir: &Path) -> Result<PathBuf> {
    let cfg = Config::from_path(config_path)?;
    if cfg.law.is_none() {
        return Err(Error::Config(format!(
            "{config_path:?}: config files must name a law spec"
        )));
    }
    let experiment = cfg
        .experiment
        .clone()
        .ok_or_else(|| Error::Config(format!("{config_path:?}: missing experiment name")))?;
    let report = run(&experiment, &cfg)?;
    let format = cfg.format.clone().unwrap_or_else(|| "csv".into());
    report.save(out_dir, &experiment, &format)
}

fn run_calibrate(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "calibrate";
    let (law, cal) = match &cfg.law {
        Some(spec) => spec.build_with_report()?,
        None => (crate::config::default_law(), None),
    };
    if let Some(cal) = &cal {
        report.push(Row::info(ex, "free_weight", cal.free_weight).with_n(cal.free_index));
        report.push(Row::gate(
            ex,
            "subcritical",
            if cal.subcritical { 1.0 } else { 0.0 },
            1.0,
            cal.subcritical,
        ));
    }
    for (j, w) in law.weights().iter().enumerate() {
        report.push(Row::info(ex, "weight", *w).with_n(j));
        report.push(Row::info(ex, "log_mean", law.log_means()[j]).with_n(j));
    }
    report.push(Row::info(ex, "gamma", law.gamma()));
    report.push(Row::info(ex, "mean_x", law.mean_x()));
    report.push(Row::gate(
        ex,
        "moment_x_exp_x",
        law.moment_x_exp_x().abs(),
        1e-12,
        law.moment_x_exp_x().abs() <= 1e-12,
    ));
    report.push(Row::gate(
        ex,
        "tilted_mean_x",
        law.tilted_mean_x().abs(),
        1e-10,
        law.tilted_mean_x().abs() <= 1e-10,
    ));
    report.push(Row::info(ex, "tilted_sigma", law.tilted_var_x().sqrt()));
    let a = cfg.threshold("a3_a", 2.0) as u64;
    let eps = cfg.threshold("a3_eps", 0.5);
    report.push(Row::info(ex, "a3_moment", law.check_a3(a.max(1), eps, 2.0)?).with_n(a as usize));
    let n_list = cfg.n_list(&[16, 32, 64]);
    let scales = estimate_scaling(&law, &n_list, cfg.samples(), cfg.seed(), cfg.shards());
    for s in &scales {
        report.push(Row::info(ex, "a_n", s.a_n).with_n(s.n));
        report.push(Row::info(ex, "b_n", s.b_n).with_n(s.n));
    }
    let a_incr = scales.windows(2).all(|w| w[1].a_n > w[0].a_n);
    let b_incr = scales.windows(2).all(|w| w[1].b_n > w[0].b_n);
    report.push(Row::gate(ex, "a_n_increasing", a_incr as u8 as f64, 1.0, a_incr));
    report.push(Row::gate(ex, "b_n_increasing", b_incr as u8 as f64, 1.0, b_incr));
    Ok(report)
}

fn run_survival(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "survival";
    let law = cfg.law()?;
    let methods: Vec<SurvivalMethod> = match &cfg.method {
        Some(m) => vec![SurvivalMethod::parse(m)?],
        None => vec![
            SurvivalMethod::Naive,
            SurvivalMethod::Importance,
            SurvivalMethod::RaoBlackwell,
        ],
    };
    for &n in &cfg.n_list(&[16, 32]) {
        let mut estimates = Vec::new();
        for (k, &m) in methods.iter().enumerate() {
            let e = estimate_survival(
                &law,
                n,
                cfg.samples(),
                m,
                cfg.seed().wrapping_add(k as u64),
                cfg.shards(),
            )?;
            report.push(
                Row::from_estimate(ex, m.id(), &e)
                    .with_n(n)
                    .with_seed(e.seed),
            );
            estimates.push(e);
        }
        for i in 0..estimates.len() {
            for j in i + 1..estimates.len() {
                let a = &estimates[i];
                let b = &estimates[j];
                let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
                report.push(
                    Row::gate(
                        ex,
                        &format!("consistency_{}_{}", a.estimator_id, b.estimator_id),
                        (a.value - b.value).abs(),
                        3.0 * combined,
                        a.consistent_with(b),
                    )
                    .with_n(n),
                );
            }
        }
    }
    Ok(report)
}

fn run_theta(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "theta";
    let law = cfg.law()?;
    let n_list = cfg.n_list(&[16, 32, 64]);
    let curve = theta_ratio_curve(&law, &n_list, cfg.samples(), cfg.seed(), cfg.shards())?;
    for p in &curve {
        report.push(
            Row::info(ex, "ratio", p.ratio)
                .with_n(p.n)
                .with_stderr(p.stderr)
                .with_seed(cfg.seed()),
        );
        report.push(Row::from_estimate(ex, "survival", &p.survival).with_n(p.n));
        report.push(Row::from_estimate(ex, "tau_end", &p.tau_end).with_n(p.n));
    }
    for w in curve.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let gap = (a.ratio - b.ratio).abs();
        let allowed = 1.96 * (a.stderr + b.stderr);
        report.push(
            Row::gate(ex, "ci_overlap", gap, allowed, gap <= allowed).with_n(b.n),
        );
    }
    if curve.len() >= 3 {
        let steps: Vec<f64> = curve
            .windows(2)
            .map(|w| (w[1].ratio / w[0].ratio - 1.0).abs())
            .collect();
        let shrinking = steps.windows(2).all(|s| s[1] <= s[0]);
        report.push(Row::gate(
            ex,
            "relative_step_shrinks",
            steps[steps.len() - 1],
            steps[0],
            shrinking,
        ));
    }
    Ok(report)
}

fn run_cond_dist(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "cond-dist";
    let law = cfg.law()?;
    let proposal = ConditioningProposal::parse(cfg.method.as_deref().unwrap_or("geiger"))?;
    let n_list = cfg.n_list(&[32, 64]);
    let betas = cfg.betas();
    let mut results = Vec::new();
    for (k, &n) in n_list.iter().enumerate() {
        let r = conditional_population_law(
            &law,
            n,
            cfg.samples(),
            &betas,
            proposal,
            cfg.seed().wrapping_add(17 * k as u64),
            cfg.shards(),
        )?;
        report.push(
            Row::info(ex, "mean", r.mean.0)
                .with_n(n)
                .with_stderr(r.mean.1)
                .with_ess(r.ess)
                .with_params(format!("method={}", proposal.id()))
                .skip_if(r.low_ess),
        );
        for (b, v, se) in &r.beta_moments {
            report.push(
                Row::info(ex, "beta_moment", *v)
                    .with_n(n)
                    .with_stderr(*se)
                    .with_params(format!("beta={b}"))
                    .skip_if(r.low_ess),
            );
        }
        report.push(Row::info(ex, "ess", r.ess).with_n(n));
        if r.capped_runs > 0 {
            report.push(Row::info(ex, "capped_runs", r.capped_runs as f64).with_n(n));
        }
        results.push(r);
    }
    let tv_tol = cfg.threshold("tv_stabilization", 0.05);
    for w in results.windows(2) {
        let tv = w[0].dist.tv_distance(&w[1].dist);
        let low = w[0].low_ess || w[1].low_ess;
        report.push(
            Row::gate(ex, "tv_stabilization", tv, tv_tol, tv <= tv_tol)
                .with_n(w[1].n)
                .skip_if(low),
        );
    }
    // beta-moment boundedness and mean growth across horizons
    for (bi, b) in betas.iter().enumerate() {
        let vals: Vec<f64> = results.iter().map(|r| r.beta_moments[bi].1).collect();
        let ratio = vals.iter().copied().fold(0.0f64, f64::max)
            / vals.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = cfg.threshold("beta_moment_ratio", 1.5);
        report.push(
            Row::gate(ex, "beta_moment_bounded", ratio, tol, ratio <= tol)
                .with_params(format!("beta={b}")),
        );
    }
    let increasing = results.windows(2).all(|w| w[1].mean.0 > w[0].mean.0);
    report.push(Row::gate(
        ex,
        "mean_increasing",
        increasing as u8 as f64,
        1.0,
        increasing,
    ));
    Ok(report)
}

fn run_tau_gap(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "tau-gap";
    let law = cfg.law()?;
    let n_list = cfg.n_list(&[32, 64]);
    let mut results = Vec::new();
    for (k, &n) in n_list.iter().enumerate() {
        let r = tau_gap_law(
            &law,
            n,
            cfg.samples(),
            cfg.seed().wrapping_add(29 * k as u64),
            cfg.shards(),
        )?;
        report.push(
            Row::info(ex, "gap_mass_le_10", r.dist.mass_at_most(10))
                .with_n(n)
                .with_ess(r.ess)
                .skip_if(r.low_ess),
        );
        results.push(r);
    }
    let tv_tol = cfg.threshold("tv_stabilization", 0.05);
    for w in results.windows(2) {
        let tv = w[0].dist.tv_distance(&w[1].dist);
        report.push(
            Row::gate(ex, "tv_stabilization", tv, tv_tol, tv <= tv_tol)
                .with_n(w[1].n)
                .skip_if(w[0].low_ess || w[1].low_ess),
        );
    }
    if let Some(last) = results.last() {
        let tol = cfg.threshold("gap_mass", 0.9);
        let mass = last.dist.mass_at_most(10);
        report.push(
            Row::gate(ex, "gap_concentration", mass, tol, mass >= tol)
                .with_n(last.n)
                .skip_if(last.low_ess),
        );
    }
    Ok(report)
}

fn run_path_shape(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "path-shape";
    let law = cfg.law()?;
    let n = cfg.n.unwrap_or(128);
    let r = path_shape_experiment(
        &law,
        n,
        cfg.samples(),
        cfg.ref_samples(),
        &cfg.grid(),
        cfg.seed(),
        cfg.shards(),
    )?;
    let ks_tol = cfg.threshold("ks", 0.1);
    for (t, ks) in r.grid.iter().zip(r.ks_per_t.iter()) {
        report.push(
            Row::gate(ex, "ks_marginal", *ks, ks_tol, *ks <= ks_tol)
                .with_n(n)
                .with_params(format!("t={t}"))
                .skip_if(r.low_ess),
        );
    }
    let argmin_tol = cfg.threshold("argmin_tail", 0.8);
    report.push(
        Row::gate(
            ex,
            "argmin_tail",
            r.argmin_tail_prob,
            argmin_tol,
            r.argmin_tail_prob >= argmin_tol,
        )
        .with_n(n)
        .skip_if(r.low_ess),
    );
    let rho_tol = cfg.threshold("independence_rho", 0.1);
    report.push(
        Row::gate(
            ex,
            "independence_correlation",
            r.correlation.abs(),
            rho_tol,
            r.correlation.abs() <= rho_tol,
        )
        .with_n(n)
        .skip_if(r.low_ess),
    );
    report.push(Row::info(ex, "ess", r.ess).with_n(n));
    report.push(Row::info(ex, "a_n", r.a_n).with_n(n));
    Ok(report)
}

fn run_bottleneck(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "bottleneck";
    let law = cfg.law()?;
    let method = BottleneckMethod::parse(cfg.method.as_deref().unwrap_or("geiger"))?;
    let n_list = cfg.n_list(&[64, 128]);
    let t_list = cfg.t_list();
    let delta = cfg.threshold("largeness_delta", 0.1);
    let mut runs = Vec::new();
    for (k, &n) in n_list.iter().enumerate() {
        let r = bottleneck_experiment(
            &law,
            n,
            &t_list,
            cfg.samples(),
            method,
            cfg.seed().wrapping_add(37 * k as u64),
            cfg.shards(),
        )?;
        for (i, t) in t_list.iter().enumerate() {
            let z_tau = r.z_at_tau_samples(i);
            let w = r.w_proxy_samples(i);
            report.push(
                Row::info(ex, "z_tau_median", weighted_quantile(&z_tau, 0.5))
                    .with_n(n)
                    .with_params(format!("t={t}"))
                    .skip_if(r.low_ess),
            );
            report.push(
                Row::info(ex, "z_tau_p90", weighted_quantile(&z_tau, 0.9))
                    .with_n(n)
                    .with_params(format!("t={t}"))
                    .skip_if(r.low_ess),
            );
            report.push(
                Row::info(ex, "w_proxy_q01", weighted_quantile(&w, 0.01))
                    .with_n(n)
                    .with_params(format!("t={t}")),
            );
            report.push(
                Row::info(ex, "largeness_prob", r.largeness_prob(i, delta))
                    .with_n(n)
                    .with_params(format!("t={t};delta={delta}")),
            );
        }
        if let Some(two) = r.two_slot_summary() {
            let rho_tol = cfg.threshold("bottleneck_rho", 0.15);
            report.push(
                Row::gate(
                    ex,
                    "two_bottleneck_correlation",
                    two.mu2_eq2_correlation.abs(),
                    rho_tol,
                    two.mu2_eq2_correlation.abs() <= rho_tol,
                )
                .with_n(n)
                .skip_if(r.low_ess),
            );
            report.push(
                Row::gate(
                    ex,
                    "shared_bottleneck_equality",
                    two.mu2_eq1_equal_fraction,
                    1.0,
                    two.mu2_eq1_equal_fraction == 1.0,
                )
                .with_n(n),
            );
            report.push(Row::info(ex, "mu2_eq2_fraction", two.mu2_eq2_fraction).with_n(n));
        }
        report.push(Row::info(ex, "ess", r.ess).with_n(n));
        runs.push(r);
    }
    let stab = cfg.threshold("stability_ratio", 1.5);
    for w in runs.windows(2) {
        for (i, t) in t_list.iter().enumerate() {
            let m0 = weighted_quantile(&w[0].z_at_tau_samples(i), 0.5);
            let m1 = weighted_quantile(&w[1].z_at_tau_samples(i), 0.5);
            let ratio = (m1 / m0).max(m0 / m1);
            report.push(
                Row::gate(ex, "z_tau_median_stable", ratio, stab, ratio <= stab)
                    .with_n(w[1].n)
                    .with_params(format!("t={t}"))
                    .skip_if(w[0].low_ess || w[1].low_ess),
            );
            let p0 = weighted_quantile(&w[0].z_at_tau_samples(i), 0.9);
            let p1 = weighted_quantile(&w[1].z_at_tau_samples(i), 0.9);
            let ratio = (p1 / p0).max(p0 / p1);
            report.push(
                Row::gate(ex, "z_tau_p90_stable", ratio, stab, ratio <= stab)
                    .with_n(w[1].n)
                    .with_params(format!("t={t}"))
                    .skip_if(w[0].low_ess || w[1].low_ess),
            );
            // W-proxy positivity: mass below the largest-n first percentile
            let delta1 = weighted_quantile(&w[1].w_proxy_samples(i), 0.01);
            let below = |samples: &[(f64, f64)]| {
                let total: f64 = samples.iter().map(|s| s.1).sum();
                let hit: f64 = samples
                    .iter()
                    .filter(|s| s.0 < delta1)
                    .map(|s| s.1)
                    .sum::<f64>();
                hit / total
            };
            let frac = below(&w[0].w_proxy_samples(i));
            let tol = cfg.threshold("positivity_mass", 0.05);
            report.push(
                Row::gate(ex, "w_proxy_positivity", frac, tol, frac <= tol)
                    .with_n(w[0].n)
                    .with_params(format!("t={t}"))
                    .skip_if(w[0].low_ess || w[1].low_ess),
            );
        }
    }
    Ok(report)
}

fn run_walk_check(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "walk-check";
    let law = cfg.law()?;
    let tilted = law.tilt();

    // duality by exhaustive enumeration
    let max_enum = (1..=12usize)
        .take_while(|n| (tilted.n_atoms() as u64).checked_pow(*n as u32).is_some_and(|c| c <= 1 << 20))
        .last()
        .unwrap_or(1);
    for n in 1..=max_enum {
        let mut p_tau = 0.0;
        let mut p_max = 0.0;
        tilted.for_each_sequence(n, Measure::Annealed, &mut |idx, mass| {
            let walk = tilted.walk_for_indices(idx);
            let st = walk.stats();
            if st.tau == n {
                p_tau += mass;
            }
            if st.m_n < -BOUNDARY_TOL {
                p_max += mass;
            }
        });
        let diff = (p_tau - p_max).abs();
        report.push(Row::gate(ex, "duality_enum", diff, 1e-12, diff <= 1e-12).with_n(n));
    }

    // harmonicity residuals against the reported truncation tails
    for (kind, name, x) in [
        (RenewalKind::U, "harmonicity_u", 0.7),
        (RenewalKind::V, "harmonicity_v", -0.7),
    ] {
        let r4 = harmonicity_residual(&tilted, kind, x, 4, cfg.samples(), cfg.seed())?;
        let r16 = harmonicity_residual(&tilted, kind, x, 16, cfg.samples(), cfg.seed())?;
        report.push(
            Row::gate(ex, name, r16.residual, r16.tail_bound, r16.residual <= r16.tail_bound)
                .with_n(16)
                .with_params(format!("x={x}")),
        );
        report.push(
            Row::gate(
                ex,
                &format!("{name}_shrinks"),
                r16.residual,
                r4.residual,
                r16.residual <= r4.residual,
            )
            .with_n(16),
        );
    }
    let u0 = renewal_u(&tilted, 0.0, 16, cfg.samples(), cfg.seed())?;
    report.push(Row::gate(ex, "u_at_zero", u0.value, 1.0, u0.value == 1.0));
    let v0 = renewal_v(&tilted, 0.0, 16, cfg.samples(), cfg.seed())?;
    report.push(Row::gate(
        ex,
        "v_at_zero_in_unit_interval",
        v0.value,
        1.0,
        v0.value > 0.0 && v0.value <= 1.0,
    ));

    // at most linear growth of u
    let ratios: Vec<f64> = [5.0f64, 10.0, 20.0, 40.0]
        .iter()
        .map(|&x| Ok(renewal_u(&tilted, x, 16, cfg.samples(), cfg.seed())?.value / x))
        .collect::<Result<_>>()?;
    let spread = ratios.iter().copied().fold(0.0f64, f64::max)
        / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    report.push(Row::gate(ex, "u_linear_growth_ratio", spread, 10.0, spread <= 10.0));

    // tau-at-end monotone in n
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for n in [4usize, 8, 12, 16] {
        let e = estimate_tau_end(&law, n, cfg.samples(), cfg.seed(), cfg.shards());
        monotone &= e.value <= prev + 3.0 * e.stderr.max(1e-12);
        prev = e.value;
        report.push(Row::from_estimate(ex, "tau_end", &e).with_n(n));
    }
    report.push(Row::gate(ex, "tau_end_nonincreasing", monotone as u8 as f64, 1.0, monotone));

    // arcsine diagnostic
    let d = arcsine_diagnostic(&tilted, 64, cfg.samples(), cfg.seed(), cfg.shards());
    report.push(Row::info(ex, "arcsine_chi_square", d.chi_square).with_n(64));
    let u_shaped = d.bins[0] + d.bins[9] > d.bins[4] + d.bins[5];
    report.push(Row::gate(ex, "arcsine_u_shape", u_shaped as u8 as f64, 1.0, u_shaped).with_n(64));

    // regular-variation diagnostic: ratio trends toward 2^{-3/2}
    let mut prev_est: Option<f64> = None;
    for n in [16usize, 32, 64] {
        let e = neg_exp_min_nonneg(&tilted, n, 1.0, cfg.samples(), cfg.seed(), cfg.shards());
        if let Some(p) = prev_est {
            report.push(
                Row::info(ex, "kappa_ratio", e.value / p)
                    .with_n(n)
                    .with_params("target=0.3536".to_string()),
            );
        }
        prev_est = Some(e.value);
    }
    Ok(report)
}

fn random_mixed_env(n: usize, rng: &mut ChaCha8Rng) -> QuenchedEnvironment {
    let dists = (0..n)
        .map(|_| match rng.random_range(0..4) {
            0 => OffspringDistribution::binary(rng.random_range(0.3..0.9)).unwrap(),
            1 => OffspringDistribution::geometric(rng.random_range(0.35..0.7)).unwrap(),
            2 => OffspringDistribution::poisson(rng.random_range(0.5..1.4)).unwrap(),
            _ => OffspringDistribution::finite_table(vec![0.3, 0.4, 0.2, 0.1]).unwrap(),
        })
        .collect();
    QuenchedEnvironment::new(dists)
}

fn random_geometric_env(n: usize, rng: &mut ChaCha8Rng) -> QuenchedEnvironment {
    let dists = (0..n)
        .map(|_| OffspringDistribution::geometric(rng.random_range(0.3..0.7)).unwrap())
        .collect();
    QuenchedEnvironment::new(dists)
}

fn run_bpre_check(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "bpre-check";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());

    // Moebius oracle vs complement recursion on geometric environments
    let mut max_diff = 0.0f64;
    for _ in 0..10 {
        let env = random_geometric_env(50, &mut rng);
        for n in [0usize, 1, 10, 25, 50] {
            let a = survival_quenched(&env, n)?;
            let b = survival_lf_exact(&env, n)?;
            max_diff = max_diff.max((a - b).abs());
        }
    }
    report.push(Row::gate(ex, "moebius_vs_recursion", max_diff, 1e-11, max_diff <= 1e-11));

    // critical geometric closed form 1/(n+1)
    let crit = QuenchedEnvironment::new(vec![OffspringDistribution::geometric(0.5).unwrap(); 50]);
    let mut max_crit = 0.0f64;
    for n in 0..=50usize {
        let s = survival_quenched(&crit, n)?;
        max_crit = max_crit.max((s - 1.0 / (n as f64 + 1.0)).abs());
    }
    report.push(Row::gate(ex, "critical_survival_closed_form", max_crit, 1e-12, max_crit <= 1e-12));

    // variance formula vs factorial-moment recursion
    let mut max_var = 0.0f64;
    for _ in 0..20 {
        let env = random_mixed_env(20, &mut rng);
        for z in [1u64, 3] {
            let c = variance_formula_check(&env, z, 20)?;
            let scale = c.formula_value.abs().max(c.pgf_value.abs()).max(1.0);
            max_var = max_var.max((c.formula_value - c.pgf_value).abs() / scale);
        }
    }
    report.push(Row::gate(ex, "variance_formula", max_var, 1e-10, max_var <= 1e-10));

    // Agresti bound on random (s, k); sharp identity on geometric chains
    let mut min_margin = f64::INFINITY;
    let mut all_hold = true;
    for _ in 0..100 {
        let env = random_mixed_env(12, &mut rng);
        let s: f64 = rng.random_range(0.0..0.99);
        let k = rng.random_range(0..=12usize);
        let b = agresti_bound_check(&env, s, k)?;
        all_hold &= b.holds;
        min_margin = min_margin.min(b.lhs - b.rhs);
    }
    report.push(Row::gate(ex, "agresti_bound_holds", min_margin, 0.0, all_hold));
    let mut max_gap = 0.0f64;
    for _ in 0..5 {
        let env = random_geometric_env(10, &mut rng);
        for &(s, k) in &[(0.0, 10usize), (0.5, 7), (0.9, 10)] {
            max_gap = max_gap.max(agresti_lf_equality_gap(&env, s, k)?);
        }
    }
    report.push(Row::gate(ex, "agresti_lf_identity", max_gap, 1e-10, max_gap <= 1e-10));

    // first-moment bound on random environments
    let mut violations = 0u64;
    for _ in 0..10_000 {
        let env = random_mixed_env(12, &mut rng);
        let s = survival_quenched(&env, 12)?;
        let min_walk = (0..=12).map(|k| env.walk().s(k)).fold(f64::INFINITY, f64::min);
        if s > min_walk.exp() + 1e-15 {
            violations += 1;
        }
    }
    report.push(Row::gate(ex, "first_moment_bound", violations as f64, 0.0, violations == 0));

    // quenched mean and survival frequency against simulation
    let env = random_mixed_env(10, &mut rng);
    let mut mean = MeanAcc::new();
    let mut hits = 0u64;
    let reps = cfg.samples().clamp(10_000, 200_000);
    for _ in 0..reps {
        let t = simulate_quenched(&env, 1, &mut rng)?;
        mean.push(t.z(10) as f64);
        hits += t.survived() as u64;
    }
    let expect = env.walk().s(10).exp();
    let z_mean = (mean.mean() - expect).abs() / mean.stderr();
    report.push(Row::gate(ex, "quenched_mean_z_score", z_mean, 3.0, z_mean <= 3.0).with_n(10));
    let s_exact = survival_quenched(&env, 10)?;
    let freq = hits as f64 / reps as f64;
    let se = (s_exact * (1.0 - s_exact) / reps as f64).sqrt();
    let z_surv = (freq - s_exact).abs() / se;
    report.push(Row::gate(ex, "survival_frequency_z_score", z_surv, 3.0, z_surv <= 3.0).with_n(10));

    // eta-series diagnostic along an increasing environment
    let env = QuenchedEnvironment::new(vec![
        OffspringDistribution::geometric(1.0 / 3.0).unwrap();
        40
    ]);
    let series = eta_series(&env);
    let last_inc = series.forward[40] - series.forward[39];
    report.push(Row::gate(ex, "eta_series_cauchy", last_inc, 1e-10, last_inc <= 1e-10));
    Ok(report)
}

fn run_tree_check(cfg: &Config) -> Result<Report> {
    let mut report = Report::new();
    let ex = "tree-check";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed());

    // Geiger sampler law vs exact enumeration at n = 1, 2
    let envs: Vec<(usize, QuenchedEnvironment)> = vec![
        (
            1,
            QuenchedEnvironment::new(vec![OffspringDistribution::finite_table(vec![
                0.3, 0.4, 0.3,
            ])
            .unwrap()]),
        ),
        (
            2,
            QuenchedEnvironment::new(vec![
                OffspringDistribution::finite_table(vec![0.3, 0.4, 0.3]).unwrap(),
                OffspringDistribution::binary(0.6).unwrap(),
            ]),
        ),
        (
            2,
            QuenchedEnvironment::new(vec![
                OffspringDistribution::binary(0.7).unwrap(),
                OffspringDistribution::finite_table(vec![0.25, 0.3, 0.25, 0.2]).unwrap(),
            ]),
        ),
    ];
    let tv_tol = cfg.threshold("geiger_tv", 0.02);
    for (idx, (n, env)) in envs.iter().enumerate() {
        let exact = enumerate_conditioned_trest_law(env, *n)?;
        let mut counts: std::collections::BTreeMap<TrestKey, u64> = Default::default();
        let samples = cfg.samples().max(10_000);
        for _ in 0..samples {
            let t = simulate_geiger_trest(env, &mut rng)?;
            *counts.entry(leftmost_stem(&t.tree, *n)?.key()).or_insert(0) += 1;
        }
        let mut keys: Vec<TrestKey> = exact.masses.keys().cloned().collect();
        keys.extend(counts.keys().cloned());
        keys.sort();
        keys.dedup();
        let tv: f64 = 0.5
            * keys
                .iter()
                .map(|k| {
                    let e = exact.masses.get(k).copied().unwrap_or(0.0);
                    let o = counts.get(k).copied().unwrap_or(0) as f64 / samples as f64;
                    (e - o).abs()
                })
                .sum::<f64>();
        report.push(
            Row::gate(ex, "geiger_vs_enumeration_tv", tv, tv_tol, tv <= tv_tol)
                .with_n(*n)
                .with_params(format!("env={idx}")),
        );
    }

    // LPP identity and conditional branch means
    let env = QuenchedEnvironment::new(vec![
        OffspringDistribution::geometric(0.55).unwrap(),
        OffspringDistribution::binary(0.7).unwrap(),
        OffspringDistribution::geometric(0.45).unwrap(),
        OffspringDistribution::poisson(0.9).unwrap(),
    ]);
    let n = env.len();
    let reps = cfg.samples().clamp(10_000, 200_000);
    let mut accs: Vec<MeanAcc> = (0..n).map(|_| MeanAcc::new()).collect();
    let mut identity_ok = true;
    for _ in 0..reps {
        let (_, counts) = simulate_lpp_trest(&env, &mut rng)?;
        identity_ok &= counts.identity_holds();
        for i in 0..n {
            accs[i].push(counts.decomp[n][i] as f64);
        }
    }
    report.push(Row::gate(
        ex,
        "lpp_representation_identity",
        identity_ok as u8 as f64,
        1.0,
        identity_ok,
    ));
    let mut max_z = 0.0f64;
    for i in 0..n {
        let expect = env.eta(i + 1) * (env.walk().s(n) - env.walk().s(i)).exp();
        max_z = max_z.max((accs[i].mean() - expect).abs() / accs[i].stderr());
    }
    report.push(Row::gate(ex, "lpp_branch_mean_z_score", max_z, 3.0, max_z <= 3.0).with_n(n));

    // TV coupling bound across i for several environments
    let mut all_hold = true;
    let mut worst_ratio = 0.0f64;
    for seed in 0..5u64 {
        let mut env_rng = ChaCha8Rng::seed_from_u64(cfg.seed() ^ (seed + 10));
        let env = random_mixed_env(8, &mut env_rng);
        for i in 1..=8usize {
            let c = tv_coupling_bound_check(&env, 8, i)?;
            all_hold &= c.holds;
            if c.bound > 0.0 {
                worst_ratio = worst_ratio.max(c.tv / c.bound);
            }
        }
    }
    report.push(Row::gate(ex, "tv_coupling_bound", worst_ratio, 1.0, all_hold));

    // Geiger conditional counts against rejection conditioning
    let env = random_mixed_env(6, &mut rng);
    let dists: Vec<&OffspringDistribution> = env.dists().iter().collect();
    let sampler = GeigerSampler::new(dists)?;
    let mut rejected = Vec::new();
    while rejected.len() < 20_000 {
        let t = simulate_quenched(&env, 1, &mut rng)?;
        if t.survived() {
            rejected.push(t.z(6));
        }
    }
    let geiger: Vec<u64> = (0..20_000)
        .map(|_| sampler.conditional_z_n(&mut rng))
        .collect::<Result<_>>()?;
    let da = EmpiricalDistribution::from_weighted(rejected.iter().map(|z| (*z, 1.0)), 20_000);
    let db = EmpiricalDistribution::from_weighted(geiger.iter().map(|z| (*z, 1.0)), 20_000);
    let tv = da.tv_distance(&db);
    report.push(Row::gate(ex, "geiger_conditional_z_tv", tv, 0.03, tv <= 0.03).with_n(6));

    // LPP normalized limit diagnostic
    let law = cfg.law()?;
    let n_list = cfg.n_list(&[64, 128, 256]);
    let pts = lpp_limit_diagnostic(
        &law,
        &n_list,
        (cfg.samples() / 20).max(500),
        cfg.seed(),
        cfg.shards(),
    )?;
    for p in &pts {
        report.push(Row::info(ex, "lpp_norm_median", p.median).with_n(p.n));
    }
    if pts.len() >= 2 {
        let a = &pts[pts.len() - 2];
        let b = &pts[pts.len() - 1];
        let rel = (b.median / a.median - 1.0).abs();
        let tol = cfg.threshold("lpp_median_stability", 0.1);
        report.push(Row::gate(ex, "lpp_median_stabilizes", rel, tol, rel <= tol).with_n(b.n));
        let delta = b.q01;
        let frac = pts
            .iter()
            .map(|p| {
                p.samples.iter().filter(|v| **v <= delta).count() as f64 / p.samples.len() as f64
            })
            .fold(0.0f64, f64::max);
        let tol = cfg.threshold("lpp_positivity_mass", 0.05);
        report.push(Row::gate(ex, "lpp_positivity", frac, tol, frac <= tol));
    }
    let positive = pts
        .iter()
        .all(|p| p.samples.iter().all(|v| *v > 0.0));
    report.push(Row::gate(ex, "lpp_values_positive", positive as u8 as f64, 1.0, positive));
    Ok(report)
}
