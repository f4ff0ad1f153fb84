use bpre_lab::environment::calibrate_a1;
use bpre_lab::environment::EnvironmentLaw;
use bpre_lab::experiments::*;
use bpre_lab::offspring::OffspringDistribution;

fn law(name: &str) -> EnvironmentLaw {
    let atoms = match name {
        "canon" => vec![
            OffspringDistribution::binary(0.25).unwrap(),
            OffspringDistribution::geometric(1.0 / 3.0).unwrap(),
        ],
        "mild" => vec![
            OffspringDistribution::binary(0.35).unwrap(),
            OffspringDistribution::geometric(0.4).unwrap(),
        ],
        "asym" => vec![
            OffspringDistribution::binary(0.3).unwrap(),
            OffspringDistribution::geometric(0.35).unwrap(),
        ],
        "medium" => vec![
            OffspringDistribution::binary(0.2).unwrap(),
            OffspringDistribution::geometric(0.3).unwrap(),
        ],
        "steep" => vec![
            OffspringDistribution::poisson(0.15).unwrap(),
            OffspringDistribution::geometric(0.2).unwrap(),
        ],
        "steeper" => vec![
            OffspringDistribution::binary(0.05).unwrap(),
            OffspringDistribution::geometric(0.18).unwrap(),
        ],
        _ => unreachable!(),
    };
    calibrate_a1(atoms, 0).unwrap().law
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "theta".into());
    for name in ["canon", "mild", "asym", "medium", "steep", "steeper"] {
        let l = law(name);
        match which.as_str() {
            "theta" => {
                let curve = theta_ratio_curve(&l, &[16, 32, 64, 128], 300_000, 5, 8).unwrap();
                print!("{name}: ");
                for p in &curve {
                    print!("r{}={:.4}+-{:.4} ", p.n, p.ratio, p.stderr);
                }
                let steps: Vec<f64> = curve.windows(2).map(|w| (w[1].ratio / w[0].ratio - 1.0).abs()).collect();
                println!("steps={steps:.4?}");
            }
            "gap" => {
                let g32 = tau_gap_law(&l, 32, 300_000, 7, 8).unwrap();
                let g64 = tau_gap_law(&l, 64, 300_000, 8, 8).unwrap();
                println!(
                    "{name}: tv(32,64)={:.4} mass64={:.4} ess={:.0}",
                    g32.dist.tv_distance(&g64.dist),
                    g64.dist.mass_at_most(10),
                    g64.ess
                );
            }
            "cond" => {
                let c32 = conditional_population_law(&l, 32, 150_000, &[0.5], ConditioningProposal::GeigerConditional, 7, 8).unwrap();
                let c64 = conditional_population_law(&l, 64, 150_000, &[0.5], ConditioningProposal::GeigerConditional, 8, 8).unwrap();
                let c16 = conditional_population_law(&l, 16, 150_000, &[0.5], ConditioningProposal::GeigerConditional, 9, 8).unwrap();
                println!(
                    "{name}: tv(32,64)={:.4} means=({:.2},{:.2},{:.2}) b={:.3}/{:.3}/{:.3} ess64={:.0} capped={}",
                    c32.dist.tv_distance(&c64.dist),
                    c16.mean.0, c32.mean.0, c64.mean.0,
                    c16.beta_moments[0].1, c32.beta_moments[0].1, c64.beta_moments[0].1,
                    c64.ess, c64.capped_runs,
                );
            }
            _ => unreachable!(),
        }
    }
}
