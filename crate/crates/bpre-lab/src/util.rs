/// Neumaier compensated summation.
///
/// Order-sensitive code paths (estimator reductions, pgf complements) sum
/// through this accumulator so results stay reproducible and rounding stays
/// at the ulp level even for mixed-magnitude terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// `1 - (1-t)^y` evaluated without cancellation for t in [0,1], y >= 1.
pub fn one_minus_pow_one_minus(t: f64, y: u64) -> f64 {
    debug_assert!(y >= 1);
    if t >= 1.0 {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    -f64::exp_m1(y as f64 * f64::ln_1p(-t))
}
