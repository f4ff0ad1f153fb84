use bpre_lab::environment::calibrate_a1;
use bpre_lab::experiments::*;
use bpre_lab::offspring::OffspringDistribution;

fn main() {
    let steep = calibrate_a1(
        vec![
            OffspringDistribution::poisson(0.15).unwrap(),
            OffspringDistribution::geometric(0.2).unwrap(),
        ],
        0,
    ).unwrap().law;
    let curve = theta_ratio_curve(&steep, &[16, 32, 64], 3_000_000, 5, 8).unwrap();
    for p in &curve {
        println!("steep r{}={:.5}+-{:.5}", p.n, p.ratio, p.stderr);
    }
    let medium = calibrate_a1(
        vec![
            OffspringDistribution::binary(0.2).unwrap(),
            OffspringDistribution::geometric(0.3).unwrap(),
        ],
        0,
    ).unwrap().law;
    let curve = theta_ratio_curve(&medium, &[16, 32, 64], 3_000_000, 5, 8).unwrap();
    for p in &curve {
        println!("medium r{}={:.5}+-{:.5}", p.n, p.ratio, p.stderr);
    }
}
