//! Running means with standard errors.

use serde::{Deserialize, Serialize};

/// Welford accumulator over i.i.d. samples.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MeanAcc {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MeanAcc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan's pairwise combination; merge order is fixed by the caller.
    pub fn merge(&mut self, other: &MeanAcc) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        self.m2 / (self.count - 1) as f64
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for MeanAcc {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanAcc::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Standard error of a ratio estimate `sum(y)/sum(x)` over paired samples
/// (delta method).
pub fn ratio_std_error(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return f64::NAN;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    if mx == 0.0 {
        return f64::NAN;
    }
    let r = my / mx;
    let var = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - r * x).powi(2))
        .sum::<f64>()
        / (n - 1.0).max(1.0);
    (var / n).sqrt() / mx.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_sequential() {
        let data: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        let whole: MeanAcc = data.iter().copied().collect();
        let mut left: MeanAcc = data[..40].iter().copied().collect();
        let right: MeanAcc = data[40..].iter().copied().collect();
        left.merge(&right);
        assert_eq!(left.count(), whole.count());
        assert!((left.mean() - whole.mean()).abs() < 1e-12);
        assert!((left.variance() - whole.variance()).abs() < 1e-9);
    }
}
