//! Coherent blocks `B_𝒰 = {x : j ∈ 𝒰(f^-j x) for all j ≥ 1}` certified to a
//! finite depth, and the Monte Carlo comparisons built on them: block
//! measure against orbit density, the Kac-type integral of the first
//! `𝒰`-time, and the first-return property.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::induced::{FirstTime, InducedTime, ReturnTime};
use crate::schedule::log_checkpoints;
use crate::schedules::{Rule, ScheduleAssignment};
use crate::stats::MeanAcc;
use crate::systems::{DynamicalSystem, Sample, StreamKey, Window};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockVerdict {
    InBlock,
    /// `j ∉ 𝒰(f^-j x)` for this `j`, and no smaller one failed.
    Excluded { j: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCertificate {
    pub depth: u64,
    pub verdict: BlockVerdict,
}

impl BlockCertificate {
    pub fn in_block(&self) -> bool {
        self.verdict == BlockVerdict::InBlock
    }

    /// The verdict this certificate implies at a smaller depth.
    pub fn at_depth(&self, d: u64) -> bool {
        match self.verdict {
            BlockVerdict::InBlock => d <= self.depth,
            BlockVerdict::Excluded { j } => d < j,
        }
    }
}

/// Checks `j ∈ 𝒰(f^-j x)` for `1 ≤ j ≤ depth`.
///
/// Hitting schedules reduce to `x ∈ B`. Pliss schedules of Birkhoff sums
/// reduce to the backward partial sums `Σ_{c=-t}^{-1} (g(f^c x) - γ)` staying
/// non-negative for `t ≤ depth`. Anything else walks the backward orbit.
pub fn block_membership<S: DynamicalSystem>(
    system: &S,
    assignment: &ScheduleAssignment<S>,
    x: &S::Point,
    depth: u64,
) -> Result<BlockCertificate> {
    if !system.is_invertible() {
        return Err(Error::Unsupported("coherent blocks need an invertible system".into()));
    }
    let verdict = if depth == 0 {
        BlockVerdict::InBlock
    } else {
        match &assignment.rule {
            Rule::Hitting(target) => {
                if system.contains(target, x)? {
                    BlockVerdict::InBlock
                } else {
                    BlockVerdict::Excluded { j: 1 }
                }
            }
            Rule::Pliss { generator, gamma } => {
                // read the backward orbit in growing chunks, nearest first
                let mut g = Vec::new();
                let mut acc = 0.0;
                let mut done = 0u64;
                let mut chunk = 64u64;
                let mut verdict = BlockVerdict::InBlock;
                'scan: while done < depth {
                    let end = (done + chunk).min(depth);
                    system.observe_run(generator, x, -(end as i64), (end - done) as usize, &mut g)?;
                    let mut t = done;
                    for part in g.rchunks(64) {
                        // whole part is safe if even its smallest values cannot pull
                        // the sum below zero
                        let low = part.iter().fold(f64::INFINITY, |a, &b| a.min(b)) - gamma;
                        let sum: f64 = part.iter().map(|v| v - gamma).sum();
                        if acc + part.len() as f64 * low.min(0.0) >= 1e-9 * (t + 64) as f64 {
                            acc += sum;
                            t += part.len() as u64;
                            continue;
                        }
                        for v in part.iter().rev() {
                            acc += v - gamma;
                            t += 1;
                            if acc < -1e-12 * t as f64 {
                                verdict = BlockVerdict::Excluded { j: t };
                                break 'scan;
                            }
                        }
                    }
                    done = end;
                    chunk *= 2;
                }
                verdict
            }
            _ => {
                let mut y = x.clone();
                let mut verdict = BlockVerdict::InBlock;
                for j in 1..=depth {
                    system.retreat(&mut y)?;
                    if !assignment.evaluate(system, &y, j)?.contains(j) {
                        verdict = BlockVerdict::Excluded { j };
                        break;
                    }
                }
                verdict
            }
        }
    };
    Ok(BlockCertificate { depth, verdict })
}

/// Runs `f` on a sampled point, regenerating the point with a doubled
/// window on the side that ran out, up to the given caps.
pub fn with_lazy_window<S: Sample, T>(
    system: &S,
    key: StreamKey,
    start: Window,
    cap: Window,
    mut f: impl FnMut(&S::Point) -> Result<T>,
) -> Result<T> {
    let mut w = Window {
        forward: start.forward.min(cap.forward),
        backward: start.backward.min(cap.backward),
    };
    loop {
        let x = system.sample_point(key, w);
        match f(&x) {
            Err(Error::WindowExhausted { coordinate }) => {
                if coordinate < 0 && w.backward < cap.backward {
                    w.backward = (2 * w.backward).clamp(64, cap.backward);
                } else if coordinate >= 0 && w.forward < cap.forward {
                    w.forward = (2 * w.forward).clamp(64, cap.forward);
                } else {
                    return Err(Error::WindowExhausted { coordinate });
                }
            }
            other => return other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDensityReport {
    pub samples: usize,
    pub depth: u64,
    pub block_estimate: f64,
    pub block_std_error: f64,
    pub density_orbits: usize,
    pub horizon: u64,
    pub density_estimate: f64,
    pub density_std_error: f64,
    /// `(d, fraction of samples certified to depth d)`.
    pub depth_sweep: Vec<(u64, f64)>,
}

impl BlockDensityReport {
    pub fn discrepancy(&self) -> f64 {
        (self.block_estimate - self.density_estimate).abs()
    }
}

/// Monte Carlo block measure at `depth` over `samples` stationary points
/// against the mean natural density of `𝒰(x)` at `horizon` over
/// `density_orbits` independent points. Streams `0..samples` of `seed` feed
/// the block side, the density side uses a separate family.
pub fn block_measure_vs_density<S: Sample>(
    system: &S,
    assignment: &ScheduleAssignment<S>,
    seed: u64,
    samples: usize,
    depth: u64,
    density_orbits: usize,
    horizon: u64,
) -> Result<BlockDensityReport> {
    let certs = block_certificates(system, assignment, seed, samples, depth)?;
    let mut acc = MeanAcc::new();
    for c in &certs {
        acc.push(if c.in_block() { 1.0 } else { 0.0 });
    }
    let depth_sweep = log_checkpoints(depth.max(1))
        .into_iter()
        .map(|d| {
            let k = certs.iter().filter(|c| c.at_depth(d)).count();
            (d, k as f64 / samples.max(1) as f64)
        })
        .collect();
    let dens: Vec<Result<f64>> = (0..density_orbits as u64)
        .into_par_iter()
        .map(|i| {
            let key = StreamKey::new(seed, crate::rng::substream(i, 0xD5));
            let x = system.sample_point(key, Window::two_sided(horizon as usize + 1, 0));
            Ok(assignment.evaluate(system, &x, horizon)?.densities().natural_f64())
        })
        .collect();
    let mut dacc = MeanAcc::new();
    for d in dens {
        dacc.push(d?);
    }
    Ok(BlockDensityReport {
        samples,
        depth,
        block_estimate: acc.mean(),
        block_std_error: acc.std_error(),
        density_orbits,
        horizon,
        density_estimate: dacc.mean(),
        density_std_error: dacc.std_error(),
        depth_sweep,
    })
}

/// Block certificates for stream ids `0..samples`, in order.
pub fn block_certificates<S: Sample>(
    system: &S,
    assignment: &ScheduleAssignment<S>,
    seed: u64,
    samples: usize,
    depth: u64,
) -> Result<Vec<BlockCertificate>> {
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            with_lazy_window(
                system,
                StreamKey::new(seed, i),
                Window::two_sided(1, 256),
                Window::two_sided(1, depth as usize),
                |x| block_membership(system, assignment, x, depth),
            )
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KacReport {
    pub samples: usize,
    /// Fraction of samples certified in the set.
    pub set_fraction: f64,
    /// Mean of `R_𝒰` over certified points.
    pub mean_return: f64,
    /// `E[1_A R_𝒰]`, the estimate of `∫_A R_𝒰 dμ`.
    pub integral: f64,
    pub integral_std_error: f64,
    /// Certified points whose return was not found within the horizon.
    pub unresolved: usize,
    pub inconclusive: bool,
}

/// How a sampled point is certified to lie in the set `A` of the Kac
/// integral.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    /// Coherent block to the given depth (invertible systems).
    Block { depth: u64 },
    /// `x ∈ B` for a hitting schedule (the absorbing set is `B` up to a null
    /// set).
    Target,
}

/// Estimates `∫_A R_𝒰 dμ` by averaging `1_A · R_𝒰` over stationary samples.
pub fn extended_kac<S: Sample>(
    system: &S,
    assignment: &ScheduleAssignment<S>,
    membership: Membership,
    seed: u64,
    samples: usize,
    horizon: u64,
) -> Result<KacReport> {
    let first = FirstTime(assignment.clone());
    let per: Vec<Result<(bool, Option<u64>)>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (back, back_cap) = match membership {
                Membership::Block { depth } => (256, depth as usize),
                Membership::Target => (0, 0),
            };
            with_lazy_window(
                system,
                StreamKey::new(seed, i),
                Window::two_sided(256, back),
                Window::two_sided(horizon as usize + 1, back_cap),
                |x| {
                    let inside = match membership {
                        Membership::Block { depth } => block_membership(system, assignment, x, depth)?.in_block(),
                        Membership::Target => match &assignment.rule {
                            Rule::Hitting(t) => system.contains(t, x)?,
                            _ => return Err(Error::Unsupported("target membership needs a hitting schedule".into())),
                        },
                    };
                    if !inside {
                        return Ok((false, None));
                    }
                    Ok((true, first.return_time(system, x, horizon)?.finite()))
                },
            )
        })
        .collect();
    let mut acc = MeanAcc::new();
    let mut r_acc = MeanAcc::new();
    let mut inside = 0usize;
    let mut unresolved = 0usize;
    for p in per {
        match p? {
            (false, _) => acc.push(0.0),
            (true, Some(r)) => {
                inside += 1;
                acc.push(r as f64);
                r_acc.push(r as f64);
            }
            (true, None) => {
                inside += 1;
                unresolved += 1;
                acc.push(0.0);
            }
        }
    }
    Ok(KacReport {
        samples,
        set_fraction: inside as f64 / samples.max(1) as f64,
        mean_return: r_acc.mean(),
        integral: acc.mean(),
        integral_std_error: acc.std_error(),
        unresolved,
        inconclusive: inside == 0,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstReturnVerdict {
    pub block_points: usize,
    /// `(sample, j)`: `f^j x` in the block for `0 < j < R`, or `j = R` with
    /// `F(x)` outside it.
    pub violation: Option<(usize, u64)>,
    pub unresolved: usize,
}

impl FirstReturnVerdict {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// For each sampled block point: no `f^j x` with `0 < j < R_𝒰(x)` is in the
/// block and `F(x)` is, all to depth `depth`.
pub fn first_return_verify<S: Sample>(
    system: &S,
    assignment: &ScheduleAssignment<S>,
    seed: u64,
    samples: usize,
    depth: u64,
    horizon: u64,
) -> Result<FirstReturnVerdict> {
    let first = FirstTime(assignment.clone());
    let per: Vec<Result<Option<std::result::Result<(), u64>>>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            with_lazy_window(
                system,
                StreamKey::new(seed, i),
                Window::two_sided(256, 256),
                Window::two_sided(horizon as usize + 1, depth as usize),
                |x| {
                    if !block_membership(system, assignment, x, depth)?.in_block() {
                        return Ok(None);
                    }
                    let r = match first.return_time(system, x, horizon)? {
                        ReturnTime::Finite(r) => r,
                        _ => return Ok(Some(Ok(()))),
                    };
                    let mut y = x.clone();
                    for j in 1..=r {
                        system.advance(&mut y)?;
                        let inside = block_membership(system, assignment, &y, depth)?.in_block();
                        if (j < r && inside) || (j == r && !inside) {
                            return Ok(Some(Err(j)));
                        }
                    }
                    Ok(Some(Ok(())))
                },
            )
        })
        .collect();
    let mut out = FirstReturnVerdict {
        block_points: 0,
        violation: None,
        unresolved: 0,
    };
    for (i, p) in per.into_iter().enumerate() {
        match p? {
            None => {}
            Some(Ok(())) => out.block_points += 1,
            Some(Err(j)) => {
                out.block_points += 1;
                if out.violation.is_none() {
                    out.violation = Some((i, j));
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{EventSet, SetOp};
    use crate::systems::{FiniteMap, Observable, ShiftSystem, Sidedness, TargetSet};
    use std::sync::Arc;

    fn drifted() -> (ShiftSystem, ScheduleAssignment<ShiftSystem>) {
        (
            ShiftSystem::coin(0.7, Sidedness::TwoSided).unwrap(),
            ScheduleAssignment::pliss(Observable::SymbolValues(vec![-1.0, 1.0]), 0.2),
        )
    }

    #[test]
    fn hitting_block_is_target_at_every_depth() {
        let s = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
        // generic walk agrees with the shortcut
        let generic = ScheduleAssignment::custom(Arc::new({
            let hit = hit.clone();
            move |s: &ShiftSystem, x: &crate::systems::ShiftPoint, h: u64| hit.evaluate(s, x, h)
        }));
        for i in 0..40 {
            let x = s.sample_point(StreamKey::new(5, i), Window::two_sided(40, 40));
            let inside = x.symbol(0).unwrap() == 1;
            for d in [1, 5, 20] {
                assert_eq!(block_membership(&s, &hit, &x, d).unwrap().in_block(), inside);
                assert_eq!(block_membership(&s, &generic, &x, d).unwrap().in_block(), inside);
            }
            assert!(block_membership(&s, &hit, &x, 0).unwrap().in_block());
        }
    }

    #[test]
    fn pliss_shortcut_matches_backward_walk() {
        let (s, pliss) = drifted();
        let generic = ScheduleAssignment::custom(Arc::new({
            let p = pliss.clone();
            move |s: &ShiftSystem, x: &crate::systems::ShiftPoint, h: u64| p.evaluate(s, x, h)
        }));
        for i in 0..100 {
            let x = s.sample_point(StreamKey::new(6, i), Window::two_sided(80, 80));
            let a = block_membership(&s, &pliss, &x, 60).unwrap();
            let b = block_membership(&s, &generic, &x, 60).unwrap();
            assert_eq!(a, b);
            // nested in depth
            let mut last = true;
            for d in 0..=60 {
                let c = block_membership(&s, &pliss, &x, d).unwrap().in_block();
                assert!(last || !c);
                assert_eq!(c, a.at_depth(d));
                last = c;
            }
        }
    }

    #[test]
    fn non_invertible_rejected() {
        let s = ShiftSystem::coin(0.5, Sidedness::OneSided).unwrap();
        let x = s.sample_point(StreamKey::new(1, 1), Window::forward(10));
        let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
        assert!(block_membership(&s, &hit, &x, 3).is_err());
    }

    #[test]
    fn hitting_block_and_density_agree() {
        let s = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
        let r = block_measure_vs_density(&s, &hit, 3, 20_000, 10, 20, 10_000).unwrap();
        assert!((r.block_estimate - 0.5).abs() < 3.0 * r.block_std_error + 1e-3);
        assert!((r.density_estimate - 0.5).abs() < 0.01);
    }

    #[test]
    fn high_gamma_gives_zero() {
        let s = ShiftSystem::coin(0.7, Sidedness::TwoSided).unwrap();
        let p = ScheduleAssignment::pliss(Observable::SymbolValues(vec![-1.0, 1.0]), 0.5);
        let r = block_measure_vs_density(&s, &p, 4, 2000, 4000, 20, 4000).unwrap();
        assert!(r.block_estimate < 0.01, "{r:?}");
        assert!(r.density_estimate < 0.02, "{r:?}");
        let k = extended_kac(&s, &p, Membership::Block { depth: 4000 }, 4, 500, 4000).unwrap();
        assert!(k.inconclusive || k.set_fraction < 0.01);
    }

    #[test]
    fn classical_kac_small() {
        let s = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
        let k = extended_kac(&s, &hit, Membership::Target, 8, 50_000, 1000).unwrap();
        assert!((k.integral - 1.0).abs() < 4.0 * k.integral_std_error, "{k:?}");
        let kb = extended_kac(&s, &hit, Membership::Block { depth: 5 }, 8, 50_000, 1000).unwrap();
        assert_eq!(k, kb);
    }

    #[test]
    fn first_return_holds_and_negative_control_fails() {
        let (s, pliss) = drifted();
        let v = first_return_verify(&s, &pliss, 12, 300, 2000, 2000).unwrap();
        assert!(v.passed(), "{v:?}");
        assert!(v.block_points > 30);
        let coin = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
        assert!(first_return_verify(&coin, &hit, 1, 200, 8, 200).unwrap().passed());
        // 𝒰'(x) = 𝒰(x) ∪ {1}: concatenation fails, and so does the return
        let broken = ScheduleAssignment::custom(Arc::new({
            let hit = hit.clone();
            move |s: &ShiftSystem, x: &crate::systems::ShiftPoint, h: u64| {
                let u = hit.evaluate(s, x, h)?;
                u.combine(&EventSet::from_indices(h, (h >= 1).then_some(1))?, SetOp::Union)
            }
        }));
        let v = first_return_verify(&coin, &broken, 1, 200, 8, 200).unwrap();
        assert!(!v.passed());
    }

    #[test]
    fn absorbing_set_inside_block_on_permutation() {
        use crate::induced::{absorbing_set, TableTime};
        let map = FiniteMap::new(vec![2, 3, 4, 5, 1, 7, 6]).unwrap();
        let b = vec![2usize, 5, 7];
        let hit = ScheduleAssignment::<FiniteMap>::hitting(TargetSet::States(b.clone()));
        let first = FirstTime(hit.clone());
        let r = TableTime(
            map.states()
                .map(|x| first.return_time(&map, &x, 50).unwrap().finite())
                .collect(),
        );
        let a = absorbing_set(&map, &r);
        for x in map.states() {
            let c = block_membership(&map, &hit, &x, 14).unwrap();
            assert_eq!(c.in_block(), b.contains(&x));
            if a.contains(&x) {
                assert!(c.in_block());
            }
        }
    }
}
