//! Induced times `R`, induced maps `F = f^R`, their coherence properties on
//! finite systems, spreading, and the tower projection of `F`-invariant
//! measures.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{Builder, EventSet};
use crate::schedules::{Coherence, Rule, ScheduleAssignment};
use crate::systems::{DynamicalSystem, FiniteMap, IntervalPoint};

/// Value of an induced time at one point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnTime {
    Finite(u64),
    /// Undefined or `+∞`, decided exactly.
    Never,
    /// No return found within the horizon; nothing is claimed beyond it.
    Unresolved { horizon: u64 },
}

impl ReturnTime {
    pub fn finite(self) -> Option<u64> {
        match self {
            ReturnTime::Finite(r) => Some(r),
            _ => None,
        }
    }
}

pub trait InducedTime<S: DynamicalSystem>: Send + Sync {
    /// `R(x)`, searching at most `horizon` iterates.
    fn return_time(&self, system: &S, x: &S::Point, horizon: u64) -> Result<ReturnTime>;

    /// `Some(true)` when coherence is known from the construction.
    fn known_coherent(&self) -> Option<bool> {
        None
    }

    /// `F(x) = f^{R(x)}(x)`.
    fn induced_step(&self, system: &S, x: &S::Point, horizon: u64) -> Result<(ReturnTime, Option<S::Point>)> {
        let r = self.return_time(system, x, horizon)?;
        match r {
            ReturnTime::Finite(n) => {
                let mut y = x.clone();
                for _ in 0..n {
                    system.advance(&mut y)?;
                }
                Ok((r, Some(y)))
            }
            _ => Ok((r, None)),
        }
    }
}

/// `R` on a finite map, `r[label - 1]`, `None` outside the domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableTime(pub Vec<Option<u64>>);

impl TableTime {
    pub fn get(&self, x: usize) -> Option<u64> {
        self.0.get(x - 1).copied().flatten()
    }
}

impl InducedTime<FiniteMap> for TableTime {
    fn return_time(&self, _: &FiniteMap, x: &usize, _: u64) -> Result<ReturnTime> {
        Ok(match self.get(*x) {
            Some(0) => return Err(Error::InvalidParameter(format!("R({x}) = 0"))),
            Some(r) => ReturnTime::Finite(r),
            None => ReturnTime::Never,
        })
    }

    fn induced_step(&self, map: &FiniteMap, x: &usize, h: u64) -> Result<(ReturnTime, Option<usize>)> {
        let r = self.return_time(map, x, h)?;
        Ok((r, r.finite().map(|n| map.iterate(*x, n))))
    }
}

/// The first `𝒰`-time `R_𝒰(x) = min 𝒰(x)`.
#[derive(Clone, Debug)]
pub struct FirstTime<S: DynamicalSystem>(pub ScheduleAssignment<S>);

impl<S: DynamicalSystem> InducedTime<S> for FirstTime<S> {
    fn return_time(&self, system: &S, x: &S::Point, horizon: u64) -> Result<ReturnTime> {
        if let Rule::Hitting(target) = &self.0.rule {
            let mut y = x.clone();
            for j in 1..=horizon {
                system.advance(&mut y)?;
                if system.contains(target, &y)? {
                    return Ok(ReturnTime::Finite(j));
                }
            }
            return Ok(ReturnTime::Unresolved { horizon });
        }
        // schedules here are prefix-consistent, so a minimum found at a
        // short horizon is final
        let mut h = horizon.min(64);
        loop {
            if let Some(m) = self.0.evaluate(system, x, h)?.min() {
                return Ok(ReturnTime::Finite(m));
            }
            if h == horizon {
                return Ok(ReturnTime::Unresolved { horizon });
            }
            h = (2 * h).min(horizon);
        }
    }

    fn known_coherent(&self) -> Option<bool> {
        (self.0.coherence == Coherence::CoherentByTheorem).then_some(true)
    }

    fn induced_step(&self, system: &S, x: &S::Point, horizon: u64) -> Result<(ReturnTime, Option<S::Point>)> {
        if let Rule::Hitting(target) = &self.0.rule {
            let mut y = x.clone();
            for j in 1..=horizon {
                system.advance(&mut y)?;
                if system.contains(target, &y)? {
                    return Ok((ReturnTime::Finite(j), Some(y)));
                }
            }
            return Ok((ReturnTime::Unresolved { horizon }, None));
        }
        let r = self.return_time(system, x, horizon)?;
        match r {
            ReturnTime::Finite(n) => {
                let mut y = x.clone();
                for _ in 0..n {
                    system.advance(&mut y)?;
                }
                Ok((r, Some(y)))
            }
            _ => Ok((r, None)),
        }
    }
}

/// On the doubling map: `R = 2^n` on `C_n = [2^-(n+1), 2^-n)` for `n ≥ 1`
/// and `R = 1` on `C_0 = [1/2, 1]`; `n` is the number of leading zero
/// digits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DyadicLevelTime;

impl DyadicLevelTime {
    pub fn level(x: &IntervalPoint) -> u64 {
        x.leading_zeros(4096)
    }
}

impl<S: DynamicalSystem<Point = IntervalPoint>> InducedTime<S> for DyadicLevelTime {
    fn return_time(&self, _: &S, x: &IntervalPoint, horizon: u64) -> Result<ReturnTime> {
        let n = Self::level(x);
        if n >= 63 || (1u64 << n) > horizon {
            return Ok(ReturnTime::Unresolved { horizon });
        }
        Ok(ReturnTime::Finite(1 << n))
    }

    fn induced_step(&self, s: &S, x: &IntervalPoint, horizon: u64) -> Result<(ReturnTime, Option<IntervalPoint>)> {
        let r = self.return_time(s, x, horizon)?;
        match r {
            ReturnTime::Finite(n) => {
                let mut y = x.clone();
                y.shift_digits(n)?;
                Ok((r, Some(y)))
            }
            _ => Ok((r, None)),
        }
    }
}

/// Induced time given by a closure.
pub struct FnTime<S: DynamicalSystem>(pub Arc<dyn Fn(&S, &S::Point, u64) -> Result<ReturnTime> + Send + Sync>);

impl<S: DynamicalSystem> InducedTime<S> for FnTime<S> {
    fn return_time(&self, system: &S, x: &S::Point, horizon: u64) -> Result<ReturnTime> {
        (self.0)(system, x, horizon)
    }
}

/// `x, F(x), F²(x), …` with the return times between them.
#[derive(Clone, Debug)]
pub struct InducedTrajectory<P> {
    /// `F^j(x)` for `j = 0..=returns.len()`, when kept.
    pub bases: Vec<P>,
    /// `R(F^j x)`.
    pub returns: Vec<u64>,
    /// `r_0 = 0`, `r_{j+1} = r_j + R(F^j x)`.
    pub cumulative: Vec<u64>,
    /// Why the trajectory stopped early, if it did.
    pub escape: Option<ReturnTime>,
}

/// Follows `F` from `x` until `m` returns or until `f`-time `budget` is used.
pub fn induced_trajectory<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    x: &S::Point,
    m: usize,
    budget: u64,
    keep_bases: bool,
) -> Result<InducedTrajectory<S::Point>> {
    let mut out = InducedTrajectory {
        bases: Vec::new(),
        returns: Vec::with_capacity(m.min(1 << 16)),
        cumulative: vec![0],
        escape: None,
    };
    let mut y = x.clone();
    if keep_bases {
        out.bases.push(y.clone());
    }
    let mut used = 0u64;
    while out.returns.len() < m {
        let left = budget - used;
        if left == 0 {
            break;
        }
        let (r, next) = time.induced_step(system, &y, left)?;
        match (r, next) {
            (ReturnTime::Finite(n), _) if n > left => {
                out.escape = Some(ReturnTime::Unresolved { horizon: left });
                break;
            }
            (ReturnTime::Finite(n), Some(z)) => {
                used += n;
                out.returns.push(n);
                out.cumulative.push(used);
                y = z;
                if keep_bases {
                    out.bases.push(y.clone());
                }
            }
            (other, _) => {
                out.escape = Some(other);
                break;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Finite systems

/// `F(x) = f^{R(x)}(x)` on a finite map.
pub fn induced_map(map: &FiniteMap, r: &TableTime) -> Vec<Option<usize>> {
    map.states().map(|x| r.get(x).map(|n| map.iterate(x, n))).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InducedTimeChecks {
    pub coherent: bool,
    pub exact: bool,
    /// `(x, j)` with `R(x) < R(f^j x) + j`.
    pub incoherent_at: Option<(usize, u64)>,
    /// `(x, j)` with `R(x) ≠ R(f^j x) + j`.
    pub inexact_at: Option<(usize, u64)>,
}

/// Exhaustive: for `x` in the domain and `0 < j < R(x)` with `f^j x` in the
/// domain, compares `R(x)` against `R(f^j x) + j`.
pub fn induced_time_checks(map: &FiniteMap, r: &TableTime) -> InducedTimeChecks {
    let mut out = InducedTimeChecks {
        coherent: true,
        exact: true,
        incoherent_at: None,
        inexact_at: None,
    };
    for x in map.states() {
        let Some(rx) = r.get(x) else { continue };
        let mut y = x;
        for j in 1..rx {
            y = map.apply(y);
            let Some(ry) = r.get(y) else { continue };
            if rx < ry + j && out.coherent {
                out.coherent = false;
                out.incoherent_at = Some((x, j));
            }
            if rx != ry + j && out.exact {
                out.exact = false;
                out.inexact_at = Some((x, j));
            }
        }
    }
    out
}

/// The same comparison along sampled orbits of an arbitrary system, with
/// `R` searched to `horizon`. Unresolved values are skipped.
pub fn induced_time_checks_sampled<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    points: &[S::Point],
    horizon: u64,
) -> Result<InducedTimeChecks> {
    let mut out = InducedTimeChecks {
        coherent: true,
        exact: true,
        incoherent_at: None,
        inexact_at: None,
    };
    for (id, x) in points.iter().enumerate() {
        let Some(rx) = time.return_time(system, x, horizon)?.finite() else {
            continue;
        };
        let mut y = x.clone();
        for j in 1..rx {
            system.advance(&mut y)?;
            let Some(ry) = time.return_time(system, &y, horizon)?.finite() else {
                continue;
            };
            if rx < ry + j && out.coherent {
                out.coherent = false;
                out.incoherent_at = Some((id, j));
            }
            if rx != ry + j && out.exact {
                out.exact = false;
                out.inexact_at = Some((id, j));
            }
        }
    }
    Ok(out)
}

/// `A_0 = ∩_j F^-j(X)`: points whose `F`-orbit is defined forever.
pub fn full_domain_core(map: &FiniteMap, r: &TableTime) -> Vec<bool> {
    let f = induced_map(map, r);
    let mut inside: Vec<bool> = f.iter().map(|v| v.is_some()).collect();
    loop {
        let mut changed = false;
        for x in 0..inside.len() {
            if inside[x] {
                let y = f[x].expect("inside implies defined");
                if !inside[y - 1] {
                    inside[x] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            return inside;
        }
    }
}

/// `𝒜_F = ∩_n F^n(A_0)`, the union of the `F`-cycles inside `A_0`.
pub fn absorbing_set(map: &FiniteMap, r: &TableTime) -> Vec<usize> {
    let f = induced_map(map, r);
    let core = full_domain_core(map, r);
    let mut current: BTreeSet<usize> = (1..=map.len()).filter(|&x| core[x - 1]).collect();
    loop {
        let next: BTreeSet<usize> = current.iter().map(|&x| f[x - 1].expect("core")).collect();
        if next == current {
            return current.into_iter().collect();
        }
        current = next;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitCoherence {
    pub passed: bool,
    /// `(x, y)` whose `f`-orbits meet while their `F`-orbits do not.
    pub witness: Option<(usize, usize)>,
}

/// For all `x, y ∈ A_0`: forward `f`-orbits meet iff forward `F`-orbits meet.
pub fn orbit_coherence_check(map: &FiniteMap, r: &TableTime) -> OrbitCoherence {
    let f = induced_map(map, r);
    let core = full_domain_core(map, r);
    let states: Vec<usize> = map.states().filter(|&x| core[x - 1]).collect();
    let f_orbit: Vec<Vec<bool>> = map.states().map(|x| map.forward_orbit_set(x)).collect();
    let big_orbit: Vec<Vec<bool>> = map
        .states()
        .map(|x| {
            let mut seen = vec![false; map.len()];
            if core[x - 1] {
                let mut y = x;
                while !seen[y - 1] {
                    seen[y - 1] = true;
                    y = f[y - 1].expect("core");
                }
            }
            seen
        })
        .collect();
    let meet = |a: &[bool], b: &[bool]| a.iter().zip(b).any(|(p, q)| *p && *q);
    for &x in &states {
        for &y in &states {
            if y <= x {
                continue;
            }
            let small = meet(&f_orbit[x - 1], &f_orbit[y - 1]);
            let big = meet(&big_orbit[x - 1], &big_orbit[y - 1]);
            if small != big {
                return OrbitCoherence {
                    passed: false,
                    witness: Some((x, y)),
                };
            }
        }
    }
    OrbitCoherence {
        passed: true,
        witness: None,
    }
}

/// `Ũ = ∪_{x∈U} {x, f x, …, f^{R(x)-1} x}`, sorted.
pub fn spreading(map: &FiniteMap, u: &[usize], r: &TableTime) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for &x in u {
        let rx = r
            .get(x)
            .ok_or_else(|| Error::InvalidParameter(format!("{x} is outside the domain of R")))?;
        let mut y = x;
        for _ in 0..rx {
            out.insert(y);
            y = map.apply(y);
        }
    }
    Ok(out.into_iter().collect())
}

/// `f^-1(V)`, sorted.
pub fn preimage_set(map: &FiniteMap, v: &[usize]) -> Vec<usize> {
    map.states().filter(|&x| v.contains(&map.apply(x))).collect()
}

/// Checks `R(x) = a + Σ_{j=0}^{b} R(F^j(f^a x))` for some `b`, whenever
/// `x ∈ A_0`, `0 ≤ a < R(x)` and `f^a x ∈ A_0`. Returns the first `(x, a)`
/// where no `b` works.
pub fn decomposition_failure(map: &FiniteMap, r: &TableTime) -> Option<(usize, u64)> {
    let f = induced_map(map, r);
    let core = full_domain_core(map, r);
    for x in map.states().filter(|&x| core[x - 1]) {
        let rx = r.get(x).expect("core");
        let mut y = x;
        for a in 0..rx {
            if core[y - 1] {
                let mut acc = a;
                let mut z = y;
                while acc < rx {
                    acc += r.get(z).expect("core");
                    z = f[z - 1].expect("core");
                }
                if acc != rx {
                    return Some((x, a));
                }
            }
            y = map.apply(y);
        }
    }
    None
}

/// `U_R(x) = {r_1, r_2, …}` as a schedule on a finite map. Incoherent `R`
/// is rejected.
pub fn schedule_of_table(map: &FiniteMap, r: &TableTime) -> Result<ScheduleAssignment<FiniteMap>> {
    let checks = induced_time_checks(map, r);
    if !checks.coherent {
        return Err(Error::Hypothesis(format!(
            "induced time is not coherent at {:?}",
            checks.incoherent_at
        )));
    }
    let mut s = schedule_of_induced_time(Arc::new(r.clone()));
    s.coherence = Coherence::CoherentByTheorem;
    Ok(s)
}

/// `U_R(x) = {r_1, r_2, …}` for an arbitrary induced time. Tagged coherent
/// only when `R` is known to be.
pub fn schedule_of_induced_time<S: DynamicalSystem + 'static>(
    time: Arc<dyn InducedTime<S>>,
) -> ScheduleAssignment<S> {
    let coherent = time.known_coherent() == Some(true);
    let rule = move |system: &S, x: &S::Point, h: u64| {
        let tr = induced_trajectory(system, time.as_ref(), x, usize::MAX, h, false)?;
        let mut b = Builder::new(h);
        for &c in &tr.cumulative[1..] {
            b.push_unchecked(c);
        }
        Ok(b.finish())
    };
    let mut s = ScheduleAssignment::custom(Arc::new(rule));
    if coherent {
        s.coherence = Coherence::CoherentByTheorem;
    }
    s
}

/// One `F`-ergodic component of a finite system: an `F`-cycle and the core
/// points feeding into it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub cycle: Vec<usize>,
    pub members: Vec<usize>,
}

pub fn f_components(map: &FiniteMap, r: &TableTime) -> Vec<Component> {
    let f = induced_map(map, r);
    let core = full_domain_core(map, r);
    let mut cycle_of = vec![usize::MAX; map.len()];
    let mut comps: Vec<Component> = Vec::new();
    for x in map.states().filter(|&x| core[x - 1]) {
        // walk until a repeated state; that state lies on the cycle
        let mut seen = BTreeSet::new();
        let mut y = x;
        while seen.insert(y) {
            y = f[y - 1].expect("core");
        }
        let mut cycle = vec![y];
        let mut z = f[y - 1].expect("core");
        while z != y {
            cycle.push(z);
            z = f[z - 1].expect("core");
        }
        cycle.sort_unstable();
        let idx = match comps.iter().position(|c| c.cycle == cycle) {
            Some(i) => i,
            None => {
                comps.push(Component {
                    cycle,
                    members: Vec::new(),
                });
                comps.len() - 1
            }
        };
        comps[idx].members.push(x);
        cycle_of[x - 1] = idx;
    }
    comps
}

// ---------------------------------------------------------------------------
// Tower projection

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteProjection {
    /// `∫ R dν`.
    pub total_mass: f64,
    /// `Σ_j ν(R > j)`, computed separately.
    pub tail_series: f64,
    /// Normalized projected weights by label - 1.
    pub weights: Vec<f64>,
}

/// `μ = (1/∫R dν) Σ_j f^j_*(ν|{R > j})` for a finite map with `ν` given on
/// labels.
pub fn tower_project_finite(map: &FiniteMap, r: &TableTime, nu: &[f64]) -> Result<FiniteProjection> {
    if nu.len() != map.len() {
        return Err(Error::InvalidParameter("ν must give one weight per state".into()));
    }
    let mut weights = vec![0.0; map.len()];
    let mut total = 0.0;
    let mut top = 0;
    for x in map.states() {
        let w = nu[x - 1];
        if w == 0.0 {
            continue;
        }
        let rx = r
            .get(x)
            .ok_or_else(|| Error::InvalidParameter(format!("ν charges {x}, outside the domain")))?;
        top = top.max(rx);
        total += w * rx as f64;
        let mut y = x;
        for _ in 0..rx {
            weights[y - 1] += w;
            y = map.apply(y);
        }
    }
    let tail_series = (0..top)
        .map(|j| {
            map.states()
                .filter(|&x| r.get(x).is_some_and(|rx| rx > j))
                .map(|x| nu[x - 1])
                .sum::<f64>()
        })
        .sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(FiniteProjection {
        total_mass: total,
        tail_series,
        weights,
    })
}

/// Outcome of summing `∫ R dν = Σ R_k ν_k` term by term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TowerMass {
    Finite { total: f64, terms: usize },
    /// Partial sums passed `cap`; nothing is normalized.
    Divergent { partial_sums: Vec<f64>, cap: f64 },
}

/// Sums `(R, mass)` terms until they are exhausted, until they fall below
/// `1e-16` of the running total, or until the partial sum passes `cap`.
pub fn tower_mass_series(terms: impl IntoIterator<Item = (f64, f64)>, cap: f64, max_terms: usize) -> TowerMass {
    let mut acc = 0.0;
    let mut partial = Vec::new();
    for (i, (r, m)) in terms.into_iter().enumerate() {
        let t = r * m;
        acc += t;
        partial.push(acc);
        if acc > cap {
            return TowerMass::Divergent { partial_sums: partial, cap };
        }
        if (t <= 1e-16 * acc && i > 0) || i + 1 >= max_terms {
            return TowerMass::Finite {
                total: acc,
                terms: i + 1,
            };
        }
    }
    TowerMass::Finite {
        total: acc,
        terms: partial.len(),
    }
}

/// `ν`-mass of `C_n` under Lebesgue on the doubling example: `2^-(n+1)`.
pub fn dyadic_cell_mass(n: u64) -> f64 {
    0.5f64.powi(n as i32 + 1)
}

/// Monte Carlo projection: walks each sampled `ν`-point up its column and
/// histograms `key(f^j x)`. Returns mean `R` and normalized frequencies.
pub fn tower_project_sampled<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    points: &[S::Point],
    horizon: u64,
    bins: usize,
    key: impl Fn(&S::Point) -> Result<usize>,
) -> Result<(f64, Vec<f64>, usize)> {
    let mut hist = vec![0u64; bins];
    let mut mass = 0u64;
    let mut escaped = 0;
    let mut used = 0u64;
    for x in points {
        let Some(rx) = time.return_time(system, x, horizon)?.finite() else {
            escaped += 1;
            continue;
        };
        used += 1;
        mass += rx;
        let mut y = x.clone();
        for j in 0..rx {
            if j > 0 {
                system.advance(&mut y)?;
            }
            let k = key(&y)?;
            hist[k.min(bins - 1)] += 1;
        }
    }
    let total = mass.max(1) as f64;
    Ok((
        mass as f64 / used.max(1) as f64,
        hist.into_iter().map(|c| c as f64 / total).collect(),
        escaped,
    ))
}

/// Orbitwise `EventSet` of the `f`-times at which the orbit visits the
/// `F`-orbit of its start: `{r_1, r_2, …}`.
pub fn return_schedule<S: DynamicalSystem, T: InducedTime<S> + ?Sized>(
    system: &S,
    time: &T,
    x: &S::Point,
    horizon: u64,
) -> Result<EventSet> {
    let tr = induced_trajectory(system, time, x, usize::MAX, horizon, false)?;
    EventSet::from_indices(horizon, tr.cumulative[1..].iter().copied())
}
