//! Schedule assignments `x ↦ 𝒰(x)` evaluated at a finite horizon: hitting
//! times, Pliss times, Birkhoff thresholds and closures, with an exhaustive
//! checker for the two coherence properties.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cocycle::{CocycleKind, CocycleTable};
use crate::error::{Error, Result};
use crate::schedule::{Builder, EventSet, SetOp};
use crate::systems::{DynamicalSystem, Ladder, LadderPoint, Observable, TargetSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coherence {
    CoherentByTheorem,
    Unverified,
}

pub type CustomRule<S> =
    Arc<dyn Fn(&S, &<S as DynamicalSystem>::Point, u64) -> Result<EventSet> + Send + Sync>;
pub type CocycleBuilder<S> =
    Arc<dyn Fn(&S, &<S as DynamicalSystem>::Point, usize) -> Result<CocycleTable> + Send + Sync>;

pub enum Rule<S: DynamicalSystem> {
    /// `{j : f^j(x) ∈ B}`.
    Hitting(TargetSet),
    /// Pliss times of the Birkhoff sums of `generator`.
    Pliss { generator: Observable, gamma: f64 },
    /// Pliss times of a tabulated cocycle.
    CocyclePliss {
        kind: CocycleKind,
        build: CocycleBuilder<S>,
        gamma: f64,
    },
    /// `{n : (1/n) Σ_{j<n} g(f^j x) ≥ γ}`.
    Threshold { generator: Observable, gamma: f64 },
    Custom(CustomRule<S>),
    /// `σ^{ℓ_1}𝒰 ∪ … ∪ σ^{ℓ_m}𝒰`.
    ShiftUnion {
        base: Box<ScheduleAssignment<S>>,
        shifts: Vec<u64>,
    },
    Combine {
        left: Box<ScheduleAssignment<S>>,
        right: Box<ScheduleAssignment<S>>,
        op: SetOp,
    },
}

impl<S: DynamicalSystem> Clone for Rule<S> {
    fn clone(&self) -> Self {
        match self {
            Rule::Hitting(b) => Rule::Hitting(b.clone()),
            Rule::Pliss { generator, gamma } => Rule::Pliss {
                generator: generator.clone(),
                gamma: *gamma,
            },
            Rule::CocyclePliss { kind, build, gamma } => Rule::CocyclePliss {
                kind: *kind,
                build: build.clone(),
                gamma: *gamma,
            },
            Rule::Threshold { generator, gamma } => Rule::Threshold {
                generator: generator.clone(),
                gamma: *gamma,
            },
            Rule::Custom(f) => Rule::Custom(f.clone()),
            Rule::ShiftUnion { base, shifts } => Rule::ShiftUnion {
                base: base.clone(),
                shifts: shifts.clone(),
            },
            Rule::Combine { left, right, op } => Rule::Combine {
                left: left.clone(),
                right: right.clone(),
                op: *op,
            },
        }
    }
}

impl<S: DynamicalSystem> fmt::Debug for Rule<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Hitting(b) => write!(f, "Hitting({b:?})"),
            Rule::Pliss { generator, gamma } => write!(f, "Pliss({generator:?}, γ={gamma})"),
            Rule::CocyclePliss { kind, gamma, .. } => write!(f, "CocyclePliss({kind:?}, γ={gamma})"),
            Rule::Threshold { generator, gamma } => write!(f, "Threshold({generator:?}, γ={gamma})"),
            Rule::Custom(_) => write!(f, "Custom"),
            Rule::ShiftUnion { base, shifts } => write!(f, "ShiftUnion({:?}, {shifts:?})", base.rule),
            Rule::Combine { left, right, op } => write!(f, "Combine({:?} {op:?} {:?})", left.rule, right.rule),
        }
    }
}

/// A deterministic rule `x ↦ 𝒰(x) ∩ [1, H]` with its coherence tag.
#[derive(Debug)]
pub struct ScheduleAssignment<S: DynamicalSystem> {
    pub rule: Rule<S>,
    pub coherence: Coherence,
}

impl<S: DynamicalSystem> Clone for ScheduleAssignment<S> {
    fn clone(&self) -> Self {
        ScheduleAssignment {
            rule: self.rule.clone(),
            coherence: self.coherence,
        }
    }
}

impl<S: DynamicalSystem> ScheduleAssignment<S> {
    pub fn hitting(target: TargetSet) -> Self {
        ScheduleAssignment {
            rule: Rule::Hitting(target),
            coherence: Coherence::CoherentByTheorem,
        }
    }

    /// Pliss times of an additive (Birkhoff) cocycle.
    pub fn pliss(generator: Observable, gamma: f64) -> Self {
        ScheduleAssignment {
            rule: Rule::Pliss { generator, gamma },
            coherence: Coherence::CoherentByTheorem,
        }
    }

    /// Pliss times of a tabulated cocycle; subadditive-only kinds are
    /// rejected since their Pliss times need not concatenate.
    pub fn cocycle_pliss(kind: CocycleKind, build: CocycleBuilder<S>, gamma: f64) -> Result<Self> {
        if kind == CocycleKind::Subadditive {
            return Err(Error::Unsupported(
                "Pliss schedule of a subadditive cocycle is not coherent in general".into(),
            ));
        }
        Ok(ScheduleAssignment {
            rule: Rule::CocyclePliss { kind, build, gamma },
            coherence: Coherence::CoherentByTheorem,
        })
    }

    pub fn threshold(generator: Observable, gamma: f64) -> Self {
        ScheduleAssignment {
            rule: Rule::Threshold { generator, gamma },
            coherence: Coherence::Unverified,
        }
    }

    pub fn custom(f: CustomRule<S>) -> Self {
        ScheduleAssignment {
            rule: Rule::Custom(f),
            coherence: Coherence::Unverified,
        }
    }

    /// Pointwise union of left shifts. Coherent whenever the base is.
    pub fn shift_union(&self, shifts: &[u64]) -> Self {
        ScheduleAssignment {
            rule: Rule::ShiftUnion {
                base: Box::new(self.clone()),
                shifts: shifts.to_vec(),
            },
            coherence: self.coherence,
        }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let both = self.coherence == Coherence::CoherentByTheorem && other.coherence == Coherence::CoherentByTheorem;
        ScheduleAssignment {
            rule: Rule::Combine {
                left: Box::new(self.clone()),
                right: Box::new(other.clone()),
                op: SetOp::Intersect,
            },
            coherence: if both {
                Coherence::CoherentByTheorem
            } else {
                Coherence::Unverified
            },
        }
    }

    pub fn is_coherent_by_theorem(&self) -> bool {
        self.coherence == Coherence::CoherentByTheorem
    }

    /// `𝒰(x) ∩ [1, H]`.
    pub fn evaluate(&self, system: &S, x: &S::Point, horizon: u64) -> Result<EventSet> {
        let h = horizon as usize;
        match &self.rule {
            Rule::Hitting(target) => {
                let mut b = Builder::new(horizon);
                let mut y = x.clone();
                for j in 1..=horizon {
                    system.advance(&mut y)?;
                    if system.contains(target, &y)? {
                        b.push_unchecked(j);
                    }
                }
                Ok(b.finish())
            }
            Rule::Pliss { generator, gamma } => {
                if h == 0 {
                    return Ok(EventSet::empty(0));
                }
                CocycleTable::birkhoff(system, generator, x, h)?.pliss_times(*gamma, h)
            }
            Rule::CocyclePliss { build, gamma, .. } => {
                if h == 0 {
                    return Ok(EventSet::empty(0));
                }
                build(system, x, h)?.pliss_times(*gamma, h)
            }
            Rule::Threshold { generator, gamma } => {
                let mut g = Vec::with_capacity(h);
                system.observe_run(generator, x, 0, h, &mut g)?;
                let mut b = Builder::new(horizon);
                let mut acc = 0.0;
                for (i, v) in g.iter().enumerate() {
                    acc += v;
                    let n = (i + 1) as f64;
                    if acc >= n * gamma - 1e-12 * n {
                        b.push_unchecked(i as u64 + 1);
                    }
                }
                Ok(b.finish())
            }
            Rule::Custom(f) => {
                let u = f(system, x, horizon)?;
                if u.horizon() != horizon {
                    return Err(Error::HorizonMismatch {
                        left: u.horizon(),
                        right: horizon,
                    });
                }
                Ok(u)
            }
            Rule::ShiftUnion { base, shifts } => {
                let top = shifts.iter().copied().max().unwrap_or(0);
                let wide = base.evaluate(system, x, horizon + top)?;
                let mut acc = EventSet::empty(horizon);
                for &l in shifts {
                    let s = wide.shift_left(l).restrict(horizon);
                    acc = acc.combine(&s, SetOp::Union)?;
                }
                Ok(acc)
            }
            Rule::Combine { left, right, op } => {
                left.evaluate(system, x, horizon)?
                    .combine(&right.evaluate(system, x, horizon)?, *op)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoherenceProperty {
    /// `n ∈ 𝒰(x) ⟹ n-j ∈ 𝒰(f^j x)` for `0 < j < n`.
    P1,
    /// `n ∈ 𝒰(x), m ∈ 𝒰(f^n x) ⟹ n+m ∈ 𝒰(x)`.
    P2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceCounterexample {
    pub point: usize,
    pub property: CoherenceProperty,
    pub n: u64,
    pub m: u64,
    pub j: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceVerdict {
    pub points_checked: usize,
    pub horizon: u64,
    pub counterexample: Option<CoherenceCounterexample>,
}

impl CoherenceVerdict {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Checks both coherence properties for every `n, m, j` inside the horizon
/// along each point's orbit. `𝒰(f^j x)` is evaluated at horizon `H - j`.
/// The reported counterexample is the first failing point and, within it,
/// the lexicographically least `(n, m, j)` (P1 failures carry `m = 0`, P2
/// failures `j = 0`).
pub fn coherence_check<S: DynamicalSystem>(
    assignment: &ScheduleAssignment<S>,
    system: &S,
    points: &[S::Point],
    horizon: u64,
) -> Result<CoherenceVerdict> {
    let mut verdict = CoherenceVerdict {
        points_checked: 0,
        horizon,
        counterexample: None,
    };
    for (id, x) in points.iter().enumerate() {
        verdict.points_checked += 1;
        if let Some((property, n, m, j)) = first_violation(assignment, system, x, horizon)? {
            verdict.counterexample = Some(CoherenceCounterexample {
                point: id,
                property,
                n,
                m,
                j,
            });
            break;
        }
    }
    Ok(verdict)
}

fn first_violation<S: DynamicalSystem>(
    assignment: &ScheduleAssignment<S>,
    system: &S,
    x: &S::Point,
    horizon: u64,
) -> Result<Option<(CoherenceProperty, u64, u64, u64)>> {
    let u = assignment.evaluate(system, x, horizon)?;
    // later[j] = 𝒰(f^j x) at horizon H - j
    let mut later = Vec::with_capacity(horizon as usize + 1);
    let mut y = x.clone();
    later.push(u.clone());
    for j in 1..=horizon {
        system.advance(&mut y)?;
        later.push(assignment.evaluate(system, &y, horizon - j)?);
    }
    for n in u.iter() {
        for j in 1..n {
            if !later[j as usize].contains(n - j) {
                return Ok(Some((CoherenceProperty::P1, n, 0, j)));
            }
        }
        for m in later[n as usize].iter() {
            if !u.contains(n + m) {
                return Ok(Some((CoherenceProperty::P2, n, m, 0)));
            }
        }
    }
    Ok(None)
}

/// For coherent `𝒰` with `a = min 𝒰(x)`: `σ^a 𝒰(x) = σ^{a-1} 𝒰(f x)` on the
/// common horizon. `None` when `𝒰(x)` is empty within the horizon.
pub fn stationarity_holds<S: DynamicalSystem>(
    assignment: &ScheduleAssignment<S>,
    system: &S,
    x: &S::Point,
    horizon: u64,
) -> Result<Option<bool>> {
    let u = assignment.evaluate(system, x, horizon)?;
    let Some(a) = u.min() else {
        return Ok(None);
    };
    let v = assignment.evaluate(system, &system.step(x)?, horizon - 1)?;
    let left = u.shift_left(a);
    let right = v.shift_left(a - 1);
    Ok(Some(left.to_vec() == right.to_vec() && left.horizon() == right.horizon()))
}

// ---------------------------------------------------------------------------
// The non-synchronizable pair on the ladder

/// `x_0`: `1, 0`, then `k` ones and `k` zeros for `k = 2, 3, …`. Entry `i`
/// is coordinate `i + 1`.
pub fn ladder_word(len: usize, complement: bool) -> Vec<bool> {
    let mut out = Vec::with_capacity(len + 64);
    out.push(true);
    out.push(false);
    let mut k = 2;
    while out.len() < len {
        out.extend(std::iter::repeat_n(true, k));
        out.extend(std::iter::repeat_n(false, k));
        k += 1;
    }
    out.truncate(len);
    if complement {
        for b in &mut out {
            *b = !*b;
        }
    }
    out
}

/// `(𝒰_0, 𝒰_1)` on the ladder: `𝒰_i(2^-ℓ) = ℓ + 𝒰_i(1)`, `𝒰_i(0) = ∅`, with
/// `𝒰_0(1)` the ones of `x_0` and `𝒰_1(1)` the ones of its complement.
pub fn example5_1() -> (ScheduleAssignment<Ladder>, ScheduleAssignment<Ladder>) {
    let make = |complement: bool| {
        ScheduleAssignment::custom(Arc::new(move |_: &Ladder, p: &LadderPoint, h: u64| match p {
            LadderPoint::Zero => Ok(EventSet::empty(h)),
            LadderPoint::Level(l) => {
                let word = ladder_word(h as usize, complement);
                let base = EventSet::from_indicator(&word);
                Ok(base.translate_right(*l))
            }
        }))
    };
    (make(false), make(true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{FiniteMap, Sample, ShiftSystem, Sidedness, StreamKey, Window};

    #[test]
    fn hitting_on_three_cycle() {
        let map = FiniteMap::new(vec![2, 3, 1]).unwrap();
        let u = ScheduleAssignment::hitting(TargetSet::States(vec![1]));
        let got = u.evaluate(&map, &1, 20).unwrap().to_vec();
        assert_eq!(got, vec![3, 6, 9, 12, 15, 18]);
        let whole = ScheduleAssignment::<FiniteMap>::hitting(TargetSet::Whole);
        assert_eq!(whole.evaluate(&map, &2, 10).unwrap().count(), 10);
    }

    #[test]
    fn hitting_density_on_bernoulli() {
        let s = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        let x = s.sample_point(StreamKey::new(7, 0), Window::two_sided(200_001, 0));
        let u = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
        let d = u.evaluate(&s, &x, 200_000).unwrap().densities().natural_f64();
        assert!((d - 0.5).abs() < 3.0 * (0.25f64 / 200_000.0).sqrt());
    }

    #[test]
    fn hitting_and_pliss_are_coherent() {
        let s = ShiftSystem::coin(0.7, Sidedness::OneSided).unwrap();
        let pts: Vec<_> = (0..20)
            .map(|i| s.sample_point(StreamKey::new(11, i), Window::forward(400)))
            .collect();
        let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1, 0]));
        assert!(coherence_check(&hit, &s, &pts, 200).unwrap().passed());
        let pliss = ScheduleAssignment::pliss(Observable::SymbolValues(vec![-1.0, 1.0]), 0.2);
        assert!(coherence_check(&pliss, &s, &pts, 200).unwrap().passed());
        let union = pliss.shift_union(&[0, 1, 2]);
        assert!(coherence_check(&union, &s, &pts, 200).unwrap().passed());
        let both = pliss.intersection(&hit);
        assert!(coherence_check(&both, &s, &pts, 200).unwrap().passed());
        for p in &pts {
            assert_ne!(stationarity_holds(&pliss, &s, p, 200).unwrap(), Some(false));
            assert_ne!(stationarity_holds(&hit, &s, p, 200).unwrap(), Some(false));
        }
    }

    #[test]
    fn threshold_schedule_breaks_p1() {
        // g = +1, -1 around a 2-cycle; average over [0, 2) is 0 but the
        // shifted window starts on -1
        let map = FiniteMap::new(vec![2, 1]).unwrap();
        let th = ScheduleAssignment::threshold(Observable::StateValues(vec![1.0, -1.0]), 0.0);
        let v = coherence_check(&th, &map, &[1], 6).unwrap();
        let c = v.counterexample.unwrap();
        assert_eq!((c.property, c.n, c.m, c.j), (CoherenceProperty::P1, 2, 0, 1));
    }

    #[test]
    fn subadditive_pliss_rejected() {
        let build: CocycleBuilder<FiniteMap> = Arc::new(|_, _, len| Ok(CocycleTable::additive(&vec![1.0; len])));
        assert!(ScheduleAssignment::cocycle_pliss(CocycleKind::Subadditive, build.clone(), 0.5).is_err());
        assert!(ScheduleAssignment::cocycle_pliss(CocycleKind::Supadditive, build, 0.5).is_ok());
    }

    #[test]
    fn pliss_below_min_is_everything() {
        let s = ShiftSystem::coin(0.5, Sidedness::OneSided).unwrap();
        let x = s.sample_point(StreamKey::new(1, 0), Window::forward(100));
        let u = ScheduleAssignment::pliss(Observable::SymbolValues(vec![-1.0, 1.0]), -1.5);
        assert_eq!(u.evaluate(&s, &x, 100).unwrap().count(), 100);
    }

    #[test]
    fn ladder_word_prefix() {
        let w: Vec<u8> = ladder_word(12, false).into_iter().map(u8::from).collect();
        assert_eq!(w, vec![1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0]);
        let (u0, u1) = example5_1();
        let a = u0.evaluate(&Ladder, &LadderPoint::Level(0), 12).unwrap().to_vec();
        assert_eq!(a, vec![1, 3, 4, 7, 8, 9]);
        let b = u1.evaluate(&Ladder, &LadderPoint::Level(2), 8).unwrap().to_vec();
        assert_eq!(b, vec![4, 7, 8]);
        assert!(u0.evaluate(&Ladder, &LadderPoint::Zero, 8).unwrap().is_empty());
    }

    #[test]
    fn ladder_marginals_are_half() {
        let (u0, u1) = example5_1();
        for u in [u0, u1] {
            let d = u.evaluate(&Ladder, &LadderPoint::Level(0), 1_000_000).unwrap().densities();
            assert!((d.natural_f64() - 0.5).abs() < 0.01);
        }
    }
}
