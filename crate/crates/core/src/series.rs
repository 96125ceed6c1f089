//! Power sums, ζ and ζ′ via Euler–Maclaurin summation, with error bounds.
//!
//! Every evaluator returns a [`Bounded`] value: the estimate together with
//! an upper bound on the truncation error of the asymptotic expansion.

/// B_2, B_4, …, B_20.
const BERNOULLI_EVEN: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Explicit terms summed before switching to the expansion.
const SPLIT: u64 = 64;

/// Number of Bernoulli correction terms used.
const ORDER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub error: f64,
}

impl Bounded {
    fn new(value: f64, error: f64) -> Self {
        Bounded { value, error }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Derivatives of `x^-s`: `d^m/dx^m x^-s = (-s)(-s-1)…(-s-m+1) x^{-s-m}`.
fn power_derivative(s: f64, m: usize, x: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..m {
        c *= -s - i as f64;
    }
    c * x.powf(-s - m as f64)
}

/// Derivatives of `x^-s ln x`, written as `x^{-s-m}(a_m ln x + b_m)`.
fn log_power_derivative(s: f64, m: usize, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, 0.0);
    for i in 0..m {
        let k = -(s + i as f64);
        let a_next = k * a;
        b = k * b + a;
        a = a_next;
    }
    x.powf(-s - m as f64) * (a * x.ln() + b)
}

/// Euler–Maclaurin corrections `Σ B_2i/(2i)! (g^{(2i-1)}(hi) - g^{(2i-1)}(lo))`
/// plus the size of the first omitted term as an error bound.
fn corrections(deriv: impl Fn(usize, f64) -> f64, lo: f64, hi: Option<f64>) -> (f64, f64) {
    let mut total = 0.0;
    let term = |i: usize| {
        let k = 2 * i + 1;
        let at_hi = hi.map_or(0.0, |h| deriv(k, h));
        BERNOULLI_EVEN[i] / factorial(2 * i + 2) * (at_hi - deriv(k, lo))
    };
    for i in 0..ORDER {
        total += term(i);
    }
    (total, 2.0 * term(ORDER).abs() + 4.0 * f64::EPSILON * total.abs())
}

fn explicit_sum(s: f64, from: u64, to: u64) -> f64 {
    // smallest terms first
    (from..=to).rev().map(|k| (k as f64).powf(-s)).sum()
}

/// `Σ_{k=1}^{K} k^-s` for any real `s`.
pub fn power_partial_sum(s: f64, k_max: u64) -> Bounded {
    if k_max <= 4 * SPLIT {
        return Bounded::new(explicit_sum(s, 1, k_max), 4.0 * f64::EPSILON * k_max as f64);
    }
    let head = explicit_sum(s, 1, SPLIT - 1);
    let (lo, hi) = (SPLIT as f64, k_max as f64);
    let integral = if (s - 1.0).abs() < 1e-15 {
        hi.ln() - lo.ln()
    } else {
        (hi.powf(1.0 - s) - lo.powf(1.0 - s)) / (1.0 - s)
    };
    let ends = 0.5 * (lo.powf(-s) + hi.powf(-s));
    let (corr, err) = corrections(|m, x| power_derivative(s, m, x), lo, Some(hi));
    let value = head + integral + ends + corr;
    Bounded::new(value, err + 8.0 * f64::EPSILON * value.abs())
}

/// `Σ_{k>K} k^-s` for `s > 1`.
pub fn power_tail(s: f64, k: u64) -> Bounded {
    assert!(s > 1.0, "power tail diverges for s <= 1");
    let lo = (k + 1).max(SPLIT);
    let head = if k + 1 < lo { explicit_sum(s, k + 1, lo - 1) } else { 0.0 };
    let x = lo as f64;
    let integral = x.powf(1.0 - s) / (s - 1.0);
    let (corr, err) = corrections(|m, y| power_derivative(s, m, y), x, None);
    let value = head + integral + 0.5 * x.powf(-s) + corr;
    Bounded::new(value, err + 8.0 * f64::EPSILON * value.abs())
}

/// Riemann ζ(s) for `s > 1`.
pub fn zeta(s: f64) -> Bounded {
    let head = explicit_sum(s, 1, SPLIT - 1);
    let tail = power_tail(s, SPLIT - 1);
    Bounded::new(head + tail.value, tail.error + 4.0 * f64::EPSILON * head)
}

/// `Σ_{k>K} ln(k) k^-s` for `s > 1`.
pub fn log_power_tail(s: f64, k: u64) -> Bounded {
    assert!(s > 1.0, "log power tail diverges for s <= 1");
    let lo = (k + 1).max(SPLIT);
    let head: f64 = if k + 1 < lo {
        (k + 1..lo).rev().map(|j| (j as f64).ln() * (j as f64).powf(-s)).sum()
    } else {
        0.0
    };
    let x = lo as f64;
    let t = s - 1.0;
    let integral = x.powf(-t) * (x.ln() / t + 1.0 / (t * t));
    let (corr, err) = corrections(|m, y| log_power_derivative(s, m, y), x, None);
    let value = head + integral + 0.5 * x.ln() * x.powf(-s) + corr;
    Bounded::new(value, err + 8.0 * f64::EPSILON * value.abs())
}

/// `-ζ′(s) = Σ ln(k) k^-s` for `s > 1`.
pub fn neg_zeta_prime(s: f64) -> Bounded {
    log_power_tail(s, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0).value - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(4.0).value - PI.powi(4) / 90.0).abs() < 1e-14);
        // ζ(3/2) and ζ(5/2) to 15 digits
        assert!((zeta(1.5).value - 2.612_375_348_685_488).abs() < 1e-13);
        assert!((zeta(2.5).value - 1.341_487_257_250_917).abs() < 1e-13);
        assert!(zeta(1.5).error < 1e-13);
    }

    #[test]
    fn zeta_prime_known_value() {
        // ζ′(2) = -0.93754825431584375...
        assert!((neg_zeta_prime(2.0).value - 0.937_548_254_315_843_8).abs() < 1e-13);
    }

    #[test]
    fn partial_sums_match_direct_summation() {
        for &s in &[0.5, 1.0, 1.5, 2.5] {
            let k = 20_000;
            let direct = explicit_sum(s, 1, k);
            let em = power_partial_sum(s, k);
            assert!((em.value - direct).abs() < 1e-9 * direct.max(1.0), "s={s}");
        }
    }

    #[test]
    fn partial_sum_plus_tail_is_zeta() {
        let s = 2.5;
        let k = 1000;
        let total = power_partial_sum(s, k).value + power_tail(s, k).value;
        assert!((total - zeta(s).value).abs() < 1e-13);
    }

    #[test]
    fn continuation_at_one_half() {
        // Σ_{k≤K} k^{-1/2} = 2√K + ζ(1/2) + K^{-1/2}/2 + O(K^{-3/2})
        let k = 1u64 << 40;
        let v = power_partial_sum(0.5, k).value;
        let zeta_half = -1.460_354_508_809_586_8;
        let expect = 2.0 * (k as f64).sqrt() + zeta_half + 0.5 / (k as f64).sqrt();
        assert!((v - expect).abs() < 1e-6 * expect);
    }
}
