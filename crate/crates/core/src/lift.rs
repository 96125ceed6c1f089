//! Orbitwise evidence for liftability: return statistics of an induced map,
//! mean-return curves, tail sums and residues of return times, the level-set
//! integral of an observable, and dyadic window growth of a cocycle.

use serde::{Deserialize, Serialize};

use crate::cocycle::CocycleTable;
use crate::error::{Error, Result};
use crate::induced::{InducedTime, ReturnTime};
use crate::schedule::{log_checkpoints, Builder};
use crate::systems::{DynamicalSystem, Observable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub horizon: u64,
    /// `i_x(n) = max{i : r_i < n}`.
    pub visits: u64,
    /// `i_x(n) / n`.
    pub theta: f64,
    /// `r_i / i` over the first `i_x(n)` returns.
    pub mean_return: f64,
    pub product: f64,
    /// `r_i < n ≤ r_{i+1}` held.
    pub bracketed: bool,
    /// The return straddling `n` was not found.
    pub escaped: bool,
}

/// Follows `F` from `x` until `f`-time `n` is passed. The straddling return
/// is searched up to `lookahead` steps past `n`.
pub fn return_stats<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    x: &S::Point,
    n: u64,
    lookahead: u64,
) -> Result<ReturnStats> {
    if n == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let mut r = 0u64;
    let mut i = 0u64;
    let mut y = x.clone();
    let mut escaped = false;
    let mut next = None;
    while r < n {
        let (rt, z) = time.induced_step(system, &y, n - r + lookahead)?;
        match (rt, z) {
            (ReturnTime::Finite(step), Some(z)) => {
                if r + step >= n {
                    next = Some(r + step);
                    break;
                }
                r += step;
                i += 1;
                y = z;
            }
            _ => {
                escaped = true;
                break;
            }
        }
    }
    let bracketed = next.is_some_and(|nx| r < n && n <= nx);
    let mean_return = if i > 0 { r as f64 / i as f64 } else { f64::NAN };
    Ok(ReturnStats {
        horizon: n,
        visits: i,
        theta: i as f64 / n as f64,
        mean_return,
        product: i as f64 / n as f64 * mean_return,
        bracketed,
        escaped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftVerdict {
    Liftable,
    NotLiftable,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftabilityReport {
    pub checkpoints: Vec<u64>,
    /// Mean over samples of `θ̂` at each checkpoint.
    pub theta_curve: Vec<f64>,
    /// Mean over samples of the mean return at each checkpoint.
    pub mean_return_curve: Vec<f64>,
    /// Relative growth of the mean-return curve over the last decade.
    pub last_decade_growth: f64,
    pub escaped_samples: usize,
    pub verdict: LiftVerdict,
}

/// Mean-return curves over sampled points. The verdict is "not liftable"
/// when the curve grew by more than `growth_threshold` (relative) over the
/// last decade of `n`, "liftable" otherwise, and "inconclusive" when more
/// than half the samples escaped.
pub fn liftability_report<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    points: &[S::Point],
    n: u64,
    growth_threshold: f64,
) -> Result<LiftabilityReport> {
    let checkpoints: Vec<u64> = log_checkpoints(n).into_iter().filter(|&c| c >= 10).collect();
    let mut theta = vec![0.0; checkpoints.len()];
    let mut mean = vec![0.0; checkpoints.len()];
    let mut used = 0usize;
    let mut escaped = 0usize;
    for x in points {
        // one pass per point; cumulative sums are read off at each checkpoint
        let mut cum = Vec::new();
        let mut r = 0u64;
        let mut y = x.clone();
        let mut ok = true;
        while r < n {
            match time.induced_step(system, &y, n - r)? {
                (ReturnTime::Finite(step), Some(z)) => {
                    r += step;
                    cum.push(r);
                    y = z;
                }
                // the return straddling n is not needed
                (ReturnTime::Unresolved { .. }, _) => break,
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok && cum.is_empty() {
            escaped += 1;
            continue;
        }
        if !ok {
            escaped += 1;
        }
        used += 1;
        for (k, &c) in checkpoints.iter().enumerate() {
            let i = cum.partition_point(|&v| v < c);
            if i > 0 {
                theta[k] += i as f64 / c as f64;
                mean[k] += cum[i - 1] as f64 / i as f64;
            } else {
                mean[k] += c as f64;
            }
        }
    }
    let denom = used.max(1) as f64;
    for v in theta.iter_mut().chain(mean.iter_mut()) {
        *v /= denom;
    }
    let last = *mean.last().unwrap_or(&f64::NAN);
    let decade_ago = checkpoints
        .iter()
        .rposition(|&c| c * 10 <= n)
        .map(|k| mean[k])
        .unwrap_or(f64::NAN);
    let growth = last / decade_ago - 1.0;
    let verdict = if escaped * 2 > points.len() || !growth.is_finite() {
        LiftVerdict::Inconclusive
    } else if growth > growth_threshold {
        LiftVerdict::NotLiftable
    } else {
        LiftVerdict::Liftable
    };
    Ok(LiftabilityReport {
        checkpoints,
        theta_curve: theta,
        mean_return_curve: mean,
        last_decade_growth: growth,
        escaped_samples: escaped,
        verdict,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub horizon: u64,
    pub thresholds: Vec<u64>,
    /// `#{0 ≤ j < H : R(f^j x) ≥ n} / H`.
    pub density: Vec<f64>,
    /// Upper-density estimate of the same sets.
    pub upper_density: Vec<f64>,
    /// `Σ_{n ≥ 1} density(n)` over every level reached: the staircase sum.
    pub tail_sum: f64,
    /// Density at the largest threshold.
    pub residue: f64,
    /// Orbit positions where `R` was not found within the lookahead; they
    /// count as `≥` every threshold.
    pub unresolved: u64,
}

/// Tail densities of `R ∘ f^j` along `H` iterates of `x`.
pub fn tail_and_residue<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    x: &S::Point,
    thresholds: &[u64],
    horizon: u64,
    lookahead: u64,
) -> Result<TailReport> {
    let mut values = Vec::with_capacity(horizon as usize);
    let mut y = x.clone();
    let mut unresolved = 0;
    for j in 0..horizon {
        if j > 0 {
            system.advance(&mut y)?;
        }
        match time.return_time(system, &y, lookahead)? {
            ReturnTime::Finite(r) => values.push(r),
            _ => {
                unresolved += 1;
                values.push(u64::MAX);
            }
        }
    }
    let mut density = Vec::with_capacity(thresholds.len());
    let mut upper = Vec::with_capacity(thresholds.len());
    for &n in thresholds {
        let mut b = Builder::new(horizon);
        for (j, &v) in values.iter().enumerate() {
            if v >= n {
                b.push_unchecked(j as u64 + 1);
            }
        }
        let d = b.finish().densities();
        density.push(d.natural_f64());
        upper.push(d.upper_f64());
    }
    // staircase: Σ_n #{R ≥ n} = Σ_j R_j
    let finite_sum: f64 = values.iter().filter(|&&v| v != u64::MAX).map(|&v| v as f64).sum();
    let tail_sum = (finite_sum + unresolved as f64 * lookahead as f64) / horizon as f64;
    Ok(TailReport {
        horizon,
        thresholds: thresholds.to_vec(),
        residue: *density.last().unwrap_or(&0.0),
        density,
        upper_density: upper,
        tail_sum,
        unresolved,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailIntegralReport {
    pub horizon: u64,
    /// Birkhoff average of `|φ|`.
    pub birkhoff: f64,
    /// `∫_0^∞ d⁺({j : |φ(f^j x)| ≥ r}) dr` over the exact staircase.
    pub level_integral: f64,
    pub levels: usize,
}

impl TailIntegralReport {
    pub fn discrepancy(&self) -> f64 {
        (self.birkhoff - self.level_integral).abs()
    }
}

/// Compares the Birkhoff average of `|φ|` with the integral of level-set
/// upper densities. The integrand is a step function with jumps at the
/// distinct values of `|φ|`, so the integral is a finite sum. Upper
/// densities are taken over prefixes past `burn_in * H`.
pub fn tail_integral_identity<S: DynamicalSystem>(
    system: &S,
    phi: &Observable,
    x: &S::Point,
    horizon: u64,
    burn_in: f64,
) -> Result<TailIntegralReport> {
    let mut v = Vec::with_capacity(horizon as usize);
    system.observe_run(phi, x, 0, horizon as usize, &mut v)?;
    for a in &mut v {
        *a = a.abs();
    }
    let birkhoff = v.iter().sum::<f64>() / horizon as f64;
    let mut levels: Vec<f64> = v.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() > 4096 {
        return Err(Error::Unsupported("observable takes too many distinct values for the staircase".into()));
    }
    let mut integral = 0.0;
    let mut prev = 0.0;
    for &level in &levels {
        if level <= 0.0 {
            continue;
        }
        let mut b = Builder::new(horizon);
        for (j, &a) in v.iter().enumerate() {
            if a >= level {
                b.push_unchecked(j as u64 + 1);
            }
        }
        integral += (level - prev) * b.finish().densities_with_burn_in(burn_in).upper_f64();
        prev = level;
    }
    Ok(TailIntegralReport {
        horizon,
        birkhoff,
        level_integral: integral,
        levels: levels.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowLevel {
    pub level: u32,
    pub average: f64,
    pub bound: f64,
    pub clears: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowGrowthReport {
    pub lambda: f64,
    pub n: usize,
    pub levels: Vec<WindowLevel>,
    /// Smallest level from which every level in range clears `(λ/5) 2^ℓ`.
    pub l0: Option<u32>,
}

impl WindowGrowthReport {
    pub fn bound_met(&self) -> bool {
        self.l0.is_some()
    }
}

/// `(1/n) Σ_{j<n} φ(2^ℓ, f^j x)` against `(λ/5) 2^ℓ` for each level.
pub fn window_growth_check(
    table: &CocycleTable,
    lambda: f64,
    levels: std::ops::RangeInclusive<u32>,
    n: usize,
) -> Result<WindowGrowthReport> {
    let mut out = Vec::new();
    for l in levels {
        let average = table.dyadic_window_average(l, n)?;
        let bound = lambda / 5.0 * (1u64 << l) as f64;
        out.push(WindowLevel {
            level: l,
            average,
            bound,
            clears: average >= bound,
        });
    }
    let l0 = match out.iter().rposition(|w| !w.clears) {
        None => out.first().map(|w| w.level),
        Some(k) if k + 1 < out.len() => Some(out[k + 1].level),
        Some(_) => None,
    };
    Ok(WindowGrowthReport {
        lambda,
        n,
        levels: out,
        l0,
    })
}
