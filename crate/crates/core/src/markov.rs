//! Mass distributions on the cells of a full Markov map, their entropy and
//! return-time integrals, the zeta family of heavy-tailed distributions, and
//! the moment sandwich for exact return times.
//!
//! Cell `j ≥ 1` is the cylinder of `j - 1` zeros followed by a one, so the
//! first-one return time equals `j` on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::uniform;
use crate::series::{neg_zeta_prime, power_partial_sum, power_tail, zeta};
use crate::systems::StreamKey;

const LN2: f64 = std::f64::consts::LN_2;

/// Cells tabulated for sampling.
pub const SAMPLING_CELLS: usize = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MassSpec {
    /// `m_j = p (1-p)^{j-1}`.
    Geometric { p: f64 },
    /// `2^-j` for `j ≤ ℓ`, then `2^-ℓ / ζ(2+α) / (j-ℓ)^{2+α}`.
    Zeta { alpha: f64, ell: u32 },
    /// Listed weights; any remaining mass continues geometrically with
    /// ratio `tail_ratio` after the last listed cell.
    Explicit {
        weights: Vec<f64>,
        #[serde(default)]
        tail_ratio: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationCertificate {
    /// Cells summed term by term.
    pub explicit_cells: u64,
    pub explicit_sum: f64,
    pub tail: f64,
    /// Bound on the error of `tail`.
    pub tail_error: f64,
    pub deviation: f64,
}

impl NormalizationCertificate {
    pub fn holds(&self, tol: f64) -> bool {
        self.deviation + self.tail_error <= tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassDistribution {
    pub spec: MassSpec,
    pub certificate: NormalizationCertificate,
    zeta_s: f64,
}

impl MassDistribution {
    pub fn new(spec: MassSpec) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        let mut zeta_s = f64::NAN;
        let certificate = match &spec {
            MassSpec::Geometric { p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return bad("geometric p must lie in (0, 1]");
                }
                let k = 64u64;
                let q = 1.0 - p;
                let explicit: f64 = (0..k).map(|i| p * q.powi(i as i32)).sum();
                let tail = q.powi(k as i32);
                cert(k, explicit, tail, 1e-16)
            }
            MassSpec::Zeta { alpha, ell } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return bad("zeta alpha must lie in (0, 1)");
                }
                if *ell < 1 || *ell > 60 {
                    return bad("zeta ell must lie in 1..=60");
                }
                let s = 2.0 + alpha;
                let z = zeta(s);
                zeta_s = z.value;
                let c = 0.5f64.powi(*ell as i32) / z.value;
                let k = 1000u64;
                let head: f64 = (1..=*ell).map(|j| 0.5f64.powi(j as i32)).sum();
                let body: f64 = (1..=k).map(|i| c * (i as f64).powf(-s)).sum();
                let t = power_tail(s, k);
                let tail = c * t.value;
                let err = c * t.error + c * z.error / z.value;
                cert(*ell as u64 + k, head + body, tail, err)
            }
            MassSpec::Explicit { weights, tail_ratio } => {
                if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
                    return bad("explicit weights must be finite and non-negative");
                }
                let sum: f64 = weights.iter().sum();
                let rest = 1.0 - sum;
                match tail_ratio {
                    None => cert(weights.len() as u64, sum, 0.0, 0.0),
                    Some(q) if (0.0..1.0).contains(q) && rest >= -1e-12 => {
                        cert(weights.len() as u64, sum, rest.max(0.0), 0.0)
                    }
                    Some(_) => return bad("tail ratio must lie in [0, 1) with listed mass at most one"),
                }
            }
        };
        if certificate.deviation > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {} rather than 1",
                certificate.explicit_sum + certificate.tail
            )));
        }
        Ok(MassDistribution { spec, certificate, zeta_s })
    }

    pub fn geometric(p: f64) -> Result<Self> {
        Self::new(MassSpec::Geometric { p })
    }

    pub fn zeta_mass(alpha: f64, ell: u32) -> Result<Self> {
        Self::new(MassSpec::Zeta { alpha, ell })
    }

    /// `m(P_j)`, zero for `j = 0`.
    pub fn weight(&self, j: u64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        match &self.spec {
            MassSpec::Geometric { p } => p * (1.0 - p).powf((j - 1) as f64),
            MassSpec::Zeta { alpha, ell } => {
                let l = *ell as u64;
                if j <= l {
                    0.5f64.powi(j as i32)
                } else {
                    0.5f64.powi(*ell as i32) / self.zeta_s / ((j - l) as f64).powf(2.0 + alpha)
                }
            }
            MassSpec::Explicit { weights, tail_ratio } => {
                let k = weights.len() as u64;
                if j <= k {
                    weights[(j - 1) as usize]
                } else if let Some(q) = tail_ratio {
                    self.certificate.tail * (1.0 - q) * q.powf((j - k - 1) as f64)
                } else {
                    0.0
                }
            }
        }
    }

    /// `Σ_{j ≤ n} j^2 m_j`.
    pub fn second_moment_partial(&self, n: u64) -> f64 {
        match &self.spec {
            MassSpec::Zeta { alpha, ell } if n > *ell as u64 => {
                let l = *ell as f64;
                let s = 2.0 + alpha;
                let head: f64 = (1..=*ell).map(|j| (j as f64).powi(2) * 0.5f64.powi(j as i32)).sum();
                let m = n - *ell as u64;
                let c = 0.5f64.powi(*ell as i32) / self.zeta_s;
                let tail = power_partial_sum(s - 2.0, m).value
                    + 2.0 * l * power_partial_sum(s - 1.0, m).value
                    + l * l * power_partial_sum(s, m).value;
                head + c * tail
            }
            _ => (1..=n).map(|j| (j as f64).powi(2) * self.weight(j)).sum(),
        }
    }
}

fn cert(cells: u64, explicit: f64, tail: f64, err: f64) -> NormalizationCertificate {
    NormalizationCertificate {
        explicit_cells: cells,
        explicit_sum: explicit,
        tail,
        tail_error: err,
        deviation: (explicit + tail - 1.0).abs(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantStats {
    /// `Σ m log(1/m)`: entropy of the induced Bernoulli scheme.
    pub entropy: f64,
    /// `Σ j m_j`.
    pub mean_return: f64,
    pub abramov_ratio: f64,
    /// `Σ j^2 m_j`, `None` when the series diverges.
    pub second_moment: Option<f64>,
}

fn xlogx_inv(w: f64) -> f64 {
    if w > 0.0 {
        -w * w.ln()
    } else {
        0.0
    }
}

pub fn invariant_stats(m: &MassDistribution) -> InvariantStats {
    let (entropy, mean, second) = match &m.spec {
        MassSpec::Geometric { p } => {
            let q = 1.0 - p;
            let h = (xlogx_inv(*p) + xlogx_inv(q)) / p;
            (h, 1.0 / p, Some((2.0 - p) / (p * p)))
        }
        MassSpec::Zeta { alpha, ell } => {
            let s = 2.0 + alpha;
            let l = *ell as f64;
            let c = 0.5f64.powi(*ell as i32) / m.zeta_s;
            let head_h: f64 = (1..=*ell).map(|j| j as f64 * LN2 * 0.5f64.powi(j as i32)).sum();
            let head_r: f64 = (1..=*ell).map(|j| j as f64 * 0.5f64.powi(j as i32)).sum();
            let z1 = zeta(1.0 + alpha).value;
            let tail_h = c * (m.zeta_s * -c.ln() + s * neg_zeta_prime(s).value);
            let tail_r = c * (z1 + l * m.zeta_s);
            (head_h + tail_h, head_r + tail_r, None)
        }
        MassSpec::Explicit { weights, tail_ratio } => {
            let k = weights.len() as f64;
            let mut h: f64 = weights.iter().map(|&w| xlogx_inv(w)).sum();
            let mut r: f64 = weights.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w).sum();
            let mut r2: f64 = weights.iter().enumerate().map(|(i, w)| ((i + 1) as f64).powi(2) * w).sum();
            let t = m.certificate.tail;
            if let (Some(q), true) = (tail_ratio, t > 0.0) {
                let a = 1.0 - q;
                h += -t * (t * a).ln() - if *q > 0.0 { t * q.ln() * q / a } else { 0.0 };
                r += t * (k + 1.0 / a);
                r2 += t * (k * k + 2.0 * k / a + (1.0 + q) / (a * a));
            }
            (h, r, Some(r2))
        }
    };
    InvariantStats {
        entropy,
        mean_return: mean,
        abramov_ratio: entropy / mean,
        second_moment: second,
    }
}

/// The constant in `Σ_{j>ℓ} j m_j, Σ_{j>ℓ} m_j log(1/m_j) ≤ C ℓ 2^-ℓ`:
/// the larger of the constants read off the two tail bounds.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter("alpha must lie in (0, 1)".into()));
    }
    let z1 = zeta(1.0 + alpha).value;
    let z2 = zeta(2.0 + alpha).value;
    let mean_bound = 2.0 * z1 / z2;
    let entropy_bound = LN2 + z2.ln() + (2.0 + alpha) * z1 / z2;
    Ok(mean_bound.max(entropy_bound))
}

/// Smallest `ℓ` with `log2 (2 - Cℓ2^-ℓ)/(2 + Cℓ2^-ℓ) - Cℓ/2^{ℓ+1} > log 2 - ε`.
pub fn derived_ell(alpha: f64, eps: f64) -> Result<u32> {
    let c = c_alpha(alpha)?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    (1..=60u32)
        .find(|&l| {
            let t = c * l as f64 * 0.5f64.powi(l as i32);
            LN2 * (2.0 - t) / (2.0 + t) - t / 2.0 > LN2 - eps
        })
        .ok_or_else(|| Error::Unsupported("no ell up to 60 meets the bound".into()))
}

/// Tail mean and tail entropy beyond `ℓ` with the bound `C ℓ 2^-ℓ`.
pub fn zeta_tail_bounds(alpha: f64, ell: u32) -> Result<(f64, f64, f64)> {
    let m = MassDistribution::zeta_mass(alpha, ell)?;
    let st = invariant_stats(&m);
    let head_h: f64 = (1..=ell).map(|j| j as f64 * LN2 * 0.5f64.powi(j as i32)).sum();
    let head_r: f64 = (1..=ell).map(|j| j as f64 * 0.5f64.powi(j as i32)).sum();
    let bound = c_alpha(alpha)? * ell as f64 * 0.5f64.powi(ell as i32);
    Ok((st.mean_return - head_r, st.entropy - head_h, bound))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentGrowth {
    pub grid: Vec<u64>,
    pub partial_sums: Vec<f64>,
    /// `S(2N)/S(N)` for each grid point but the last.
    pub ratios: Vec<f64>,
    /// Smallest grid point from which every ratio is at least `factor`.
    pub n0: Option<u64>,
}

/// Partial sums `S(N) = Σ_{j≤N} j^2 m_j` on the doubling grid `start·2^k`.
pub fn second_moment_ratios(m: &MassDistribution, start: u64, doublings: u32, factor: f64) -> MomentGrowth {
    let grid: Vec<u64> = (0..=doublings).map(|k| start << k).collect();
    let sums: Vec<f64> = grid.iter().map(|&n| m.second_moment_partial(n)).collect();
    let ratios: Vec<f64> = sums.windows(2).map(|w| w[1] / w[0]).collect();
    let n0 = match ratios.iter().rposition(|&r| r < factor) {
        None if !ratios.is_empty() => Some(grid[0]),
        Some(k) if k + 1 < ratios.len() => Some(grid[k + 1]),
        _ => None,
    };
    MomentGrowth {
        grid,
        partial_sums: sums,
        ratios,
        n0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSandwich {
    pub r_nu: f64,
    pub r2_nu: f64,
    pub r_mu: f64,
    pub lower: f64,
    pub upper: f64,
    /// Monte Carlo estimate of `∫R dμ` from a sampled orbit, with its
    /// standard error.
    pub r_mu_sampled: Option<(f64, f64)>,
}

impl MomentSandwich {
    pub fn holds(&self) -> bool {
        self.lower <= self.r2_nu && self.r2_nu <= self.upper
    }
}

/// `½∫Rdν∫Rdμ ≤ ∫R²dν ≤ 2∫Rdν∫Rdμ` with `∫Rdμ = ∫R(R+1)/2 dν / ∫R dν`
/// from the tower over the exact first-one time.
pub fn exact_time_moment_check(m: &MassDistribution, sampled: Option<(StreamKey, usize)>) -> Result<MomentSandwich> {
    let st = invariant_stats(m);
    let r2 = st
        .second_moment
        .ok_or_else(|| Error::Unsupported("second moment diverges".into()))?;
    let r = st.mean_return;
    let r_mu = (r2 + r) / (2.0 * r);
    let r_mu_sampled = match sampled {
        Some((key, cells)) => {
            let orbit = sample_markov_orbit(m, cells, key)?;
            Some(orbit.mean_return_along_shift())
        }
        None => None,
    };
    Ok(MomentSandwich {
        r_nu: r,
        r2_nu: r2,
        r_mu,
        lower: 0.5 * r * r_mu,
        upper: 2.0 * r * r_mu,
        r_mu_sampled,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovOrbit {
    /// Cells visited by the induced map.
    pub cells: Vec<u64>,
    /// Draws beyond the sampling table that were redrawn.
    pub redraws: u64,
    /// Mass beyond the sampling table.
    pub truncation_mass: f64,
}

impl MarkovOrbit {
    /// Shift orbit: each cell `j` contributes `j - 1` zeros and a one.
    pub fn shift_word(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.cells.iter().sum::<u64>() as usize);
        for &j in &self.cells {
            out.extend(std::iter::repeat_n(0u8, j as usize - 1));
            out.push(1);
        }
        out
    }

    /// First-one time along the shift orbit: `j - t` at offset `t` of a
    /// return word of length `j`.
    pub fn shift_return_times(&self) -> Vec<u64> {
        let mut out = Vec::new();
        for &j in &self.cells {
            out.extend((0..j).map(|t| j - t));
        }
        out
    }

    /// Birkhoff average of the first-one time along the shift orbit and a
    /// standard error from per-cell blocks.
    pub fn mean_return_along_shift(&self) -> (f64, f64) {
        let num: Vec<f64> = self.cells.iter().map(|&j| (j * (j + 1) / 2) as f64).collect();
        let den: Vec<f64> = self.cells.iter().map(|&j| j as f64).collect();
        let mean = num.iter().sum::<f64>() / den.iter().sum::<f64>();
        (mean, crate::stats::ratio_std_error(&num, &den))
    }
}

/// Whether `R(f y) = R(y) - 1` whenever `R(y) > 1` along a sequence of
/// return times.
pub fn returns_are_exact(times: &[u64]) -> bool {
    times.windows(2).all(|w| w[0] <= 1 || w[1] == w[0] - 1)
}

/// i.i.d. cells of `m`. Draws beyond [`SAMPLING_CELLS`] are redrawn and
/// counted.
pub fn sample_markov_orbit(m: &MassDistribution, cells: usize, key: StreamKey) -> Result<MarkovOrbit> {
    let mut cum = Vec::with_capacity(1024);
    let mut acc = 0.0;
    for j in 1..=SAMPLING_CELLS as u64 {
        acc += m.weight(j);
        cum.push(acc);
        if 1.0 - acc < 1e-17 {
            break;
        }
    }
    let last = *cum.last().unwrap_or(&0.0);
    if last <= 0.0 {
        return Err(Error::InvalidParameter("mass distribution has no mass in the sampling table".into()));
    }
    let truncation_mass = (1.0 - last).max(0.0);
    let mut rng = key.rng();
    let mut out = Vec::with_capacity(cells);
    let mut redraws = 0;
    while out.len() < cells {
        let u = uniform(&mut rng);
        if u >= last {
            redraws += 1;
            if redraws > 1000 + cells as u64 {
                return Err(Error::Unsupported("sampling table misses too much mass".into()));
            }
            continue;
        }
        let j = cum.partition_point(|&c| c <= u) as u64 + 1;
        out.push(j);
    }
    Ok(MarkovOrbit {
        cells: out,
        redraws,
        truncation_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_half_closed_forms() {
        let m = MassDistribution::geometric(0.5).unwrap();
        assert!(m.certificate.holds(1e-12));
        let st = invariant_stats(&m);
        assert!((st.entropy - 2.0 * LN2).abs() < 1e-12);
        assert!((st.mean_return - 2.0).abs() < 1e-12);
        assert!((st.abramov_ratio - LN2).abs() < 1e-12);
        // numeric oracle
        let h: f64 = (1..200).map(|j| xlogx_inv(m.weight(j))).sum();
        assert!((h - st.entropy).abs() < 1e-12);
    }

    #[test]
    fn zeta_normalizes_and_matches_direct_sums() {
        for (alpha, ell) in [(0.5, 11), (0.25, 3), (0.9, 20)] {
            let m = MassDistribution::zeta_mass(alpha, ell).unwrap();
            assert!(m.certificate.holds(1e-12), "{:?}", m.certificate);
            let z = zeta(2.0 + alpha).value;
            let want = 0.5f64.powi(ell as i32) / z;
            assert!((m.weight(ell as u64 + 1) - want).abs() < 1e-15);
            let st = invariant_stats(&m);
            // brute partial sums with an integral remainder
            let n = 2_000_000u64;
            let s = 2.0 + alpha;
            let mut r = 0.0;
            let mut h = 0.0;
            for j in 1..=n {
                let w = m.weight(j);
                r += j as f64 * w;
                h += xlogx_inv(w);
            }
            let c = 0.5f64.powi(ell as i32) / z;
            let k = (n - ell as u64) as f64;
            r += c * k.powf(2.0 - s) / (s - 2.0).abs() * 1.0;
            assert!((r - st.mean_return).abs() < 2e-3, "{alpha} {ell}: {r} vs {}", st.mean_return);
            assert!((h - st.entropy).abs() < 1e-5, "{h} vs {}", st.entropy);
        }
    }

    #[test]
    fn zeta_constants_and_ell() {
        let c = c_alpha(0.5).unwrap();
        assert!((c - 5.855).abs() < 0.01, "{c}");
        let l = derived_ell(0.5, 0.05).unwrap();
        assert_eq!(l, 11);
        let m = MassDistribution::zeta_mass(0.5, l).unwrap();
        let st = invariant_stats(&m);
        assert!(st.abramov_ratio > LN2 - 0.05);
        assert!(st.mean_return <= 2.0 + c);
        for ell in [1, 3, 7, 11, 20] {
            let (r, h, b) = zeta_tail_bounds(0.5, ell).unwrap();
            assert!(r <= b && h <= b, "{ell}: {r} {h} {b}");
        }
    }

    #[test]
    fn zeta_second_moment_grows() {
        let m = MassDistribution::zeta_mass(0.5, 11).unwrap();
        let g = second_moment_ratios(&m, 64, 40, 1.3);
        assert!(g.n0.is_some_and(|n| n > 1 << 20), "{g:?}");
        assert!((g.ratios.last().unwrap() - 2f64.sqrt()).abs() < 0.02);
        let direct: f64 = (1..=5000u64).map(|j| (j as f64).powi(2) * m.weight(j)).sum();
        assert!((direct - m.second_moment_partial(5000)).abs() < 1e-9 * direct);
        let geo = second_moment_ratios(&MassDistribution::geometric(0.5).unwrap(), 64, 4, 1.3);
        assert_eq!(geo.n0, None);
    }

    #[test]
    fn moment_sandwich_cases() {
        let s = exact_time_moment_check(&MassDistribution::geometric(0.5).unwrap(), None).unwrap();
        assert!((s.r_nu - 2.0).abs() < 1e-12 && (s.r2_nu - 6.0).abs() < 1e-12 && (s.r_mu - 2.0).abs() < 1e-12);
        assert!(s.holds());
        for k in 2..=8 {
            let p = k as f64 / 10.0;
            let s = exact_time_moment_check(&MassDistribution::geometric(p).unwrap(), None).unwrap();
            assert!((s.r_mu - 1.0 / p).abs() < 1e-9);
            assert!(s.holds());
        }
        let one = MassDistribution::new(MassSpec::Explicit { weights: vec![1.0], tail_ratio: None }).unwrap();
        let s = exact_time_moment_check(&one, None).unwrap();
        assert_eq!((s.lower, s.r2_nu, s.upper), (0.5, 1.0, 2.0));
        assert!(exact_time_moment_check(&MassDistribution::zeta_mass(0.5, 3).unwrap(), None).is_err());
    }

    #[test]
    fn explicit_geometric_tail_matches_geometric() {
        let g = MassDistribution::geometric(0.4).unwrap();
        let w: Vec<f64> = (1..=5).map(|j| g.weight(j)).collect();
        let e = MassDistribution::new(MassSpec::Explicit { weights: w, tail_ratio: Some(0.6) }).unwrap();
        let (a, b) = (invariant_stats(&g), invariant_stats(&e));
        assert!((a.entropy - b.entropy).abs() < 1e-12);
        assert!((a.mean_return - b.mean_return).abs() < 1e-12);
        assert!((a.second_moment.unwrap() - b.second_moment.unwrap()).abs() < 1e-10);
    }

    #[test]
    fn sampled_orbit_frequencies_and_exactness() {
        let m = MassDistribution::geometric(0.5).unwrap();
        let o = sample_markov_orbit(&m, 1_000_000, StreamKey::new(5, 1)).unwrap();
        for j in 1..=6u64 {
            let f = o.cells.iter().filter(|&&c| c == j).count() as f64 / 1e6;
            let w = m.weight(j);
            assert!((f - w).abs() < 3.0 * (w * (1.0 - w) / 1e6).sqrt() + 1e-4, "{j}");
        }
        let mean = o.cells.iter().sum::<u64>() as f64 / 1e6;
        assert!((mean - 2.0).abs() < 0.01);
        assert!(returns_are_exact(&o.shift_return_times()[..10_000]));
        let (r_mu, se) = o.mean_return_along_shift();
        assert!((r_mu - 2.0).abs() < 4.0 * se + 1e-3);
        assert!(!returns_are_exact(&[3, 1]));
        let z = sample_markov_orbit(&MassDistribution::zeta_mass(0.5, 4).unwrap(), 10_000, StreamKey::new(5, 2)).unwrap();
        assert!(z.truncation_mass < 1e-9);
    }
}
