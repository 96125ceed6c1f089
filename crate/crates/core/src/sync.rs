//! Joint densities of shifted schedules and the greedy minimal-shift search.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{EventSet, SetOp};
use crate::schedules::ScheduleAssignment;
use crate::stats::MeanAcc;
use crate::systems::DynamicalSystem;

/// Density of `∩_k σ^{ℓ_k} U_k` at the common horizon `min_k (H_k - ℓ_k)`.
pub fn joint_density(sets: &[EventSet], shifts: &[u64]) -> Result<Ratio<u64>> {
    if sets.is_empty() || sets.len() != shifts.len() {
        return Err(Error::InvalidParameter("need one shift per set".into()));
    }
    let h = sets
        .iter()
        .zip(shifts)
        .map(|(u, &l)| u.horizon().saturating_sub(l))
        .min()
        .unwrap_or(0);
    if h == 0 {
        return Ok(Ratio::new_raw(0, 1));
    }
    let mut acc = sets[0].shift_left(shifts[0]).restrict(h);
    for (u, &l) in sets.iter().zip(shifts).skip(1) {
        acc = acc.combine(&u.shift_left(l).restrict(h), SetOp::Intersect)?;
    }
    Ok(Ratio::new(acc.count(), h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncStep {
    pub k: usize,
    pub shift: u64,
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    pub samples: usize,
    pub horizon: u64,
    pub max_shift: u64,
    pub theta_min: f64,
    /// Mean density of each schedule at the horizon.
    pub marginals: Vec<f64>,
    /// `ℓ_0 = 0` followed by the accepted shifts.
    pub shifts: Vec<u64>,
    pub theta: f64,
    pub theta_std_error: f64,
    pub trace: Vec<SyncStep>,
    /// Index of the schedule for which no shift was found.
    pub failed_at: Option<usize>,
}

impl SyncResult {
    pub fn found(&self) -> bool {
        self.failed_at.is_none()
    }
}

/// Fixes `ℓ_0 = 0`; for each later schedule takes the smallest `ℓ ≤ max_shift`
/// whose joint density, averaged over `points`, exceeds `theta_min`. The
/// default threshold is half the product of the marginals.
pub fn sync_search<S: DynamicalSystem>(
    system: &S,
    assignments: &[ScheduleAssignment<S>],
    points: &[S::Point],
    horizon: u64,
    max_shift: u64,
    theta_min: Option<f64>,
) -> Result<SyncResult> {
    if assignments.is_empty() || points.is_empty() || horizon == 0 {
        return Err(Error::InvalidParameter("sync search needs schedules, points and a horizon".into()));
    }
    let span = horizon + max_shift;
    let sets: Vec<Vec<EventSet>> = points
        .par_iter()
        .map(|x| assignments.iter().map(|a| a.evaluate(system, x, span)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let marginals: Vec<f64> = (0..assignments.len())
        .map(|k| {
            let sum: f64 = sets.iter().map(|s| s[k].restrict(horizon).count() as f64 / horizon as f64).sum();
            sum / points.len() as f64
        })
        .collect();
    let theta_min = theta_min.unwrap_or_else(|| 0.5 * marginals.iter().product::<f64>());
    let measure = |shifts: &[u64]| -> Result<MeanAcc> {
        let per: Vec<f64> = sets
            .par_iter()
            .map(|s| {
                let mut chosen: Vec<EventSet> = s[..shifts.len()].to_vec();
                // every shifted set keeps at least the target horizon
                for (u, &l) in chosen.iter_mut().zip(shifts) {
                    *u = u.restrict(horizon + l);
                }
                joint_density(&chosen, shifts).map(|r| *r.numer() as f64 / *r.denom() as f64)
            })
            .collect::<Result<_>>()?;
        let mut acc = MeanAcc::new();
        per.into_iter().for_each(|v| acc.push(v));
        Ok(acc)
    };
    let mut shifts = vec![0u64];
    let mut trace = Vec::new();
    let mut failed_at = None;
    let mut last = measure(&shifts)?;
    if marginals.iter().any(|&m| m <= 0.0) {
        failed_at = marginals.iter().position(|&m| m <= 0.0);
    } else {
        for k in 1..assignments.len() {
            let mut accepted = None;
            for l in 0..=max_shift {
                let mut cand = shifts.clone();
                cand.push(l);
                let acc = measure(&cand)?;
                trace.push(SyncStep { k, shift: l, theta: acc.mean() });
                if acc.mean() > theta_min {
                    accepted = Some((l, acc));
                    break;
                }
            }
            match accepted {
                Some((l, acc)) => {
                    shifts.push(l);
                    last = acc;
                }
                None => {
                    failed_at = Some(k);
                    break;
                }
            }
        }
    }
    Ok(SyncResult {
        samples: points.len(),
        horizon,
        max_shift,
        theta_min,
        marginals,
        theta: last.mean(),
        theta_std_error: last.std_error(),
        shifts,
        trace,
        failed_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::example5_1;
    use crate::systems::{Ladder, LadderPoint, Sample, ShiftSystem, Sidedness, StreamKey, TargetSet, Window};

    #[test]
    fn full_sets_have_density_one() {
        let full = EventSet::full(100);
        assert_eq!(joint_density(&[full.clone(), full], &[0, 7]).unwrap(), Ratio::new(1, 1));
    }

    #[test]
    fn translate_is_found_at_its_offset() {
        let s = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        let u0 = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1, 0, 1]));
        let u1 = ScheduleAssignment::hitting(TargetSet::cylinder(-3, &[1, 0, 1]));
        let pts: Vec<_> = (0..4).map(|i| s.sample_point(StreamKey::new(8, i), Window::two_sided(20_100, 8))).collect();
        let r = sync_search(&s, &[u0, u1], &pts, 20_000, 8, Some(0.1)).unwrap();
        assert_eq!(r.shifts, vec![0, 3]);
        assert!((r.theta - r.marginals[0]).abs() < 1e-3);
        assert!(r.theta <= r.marginals.iter().cloned().fold(f64::INFINITY, f64::min) + 1e-3);
    }

    #[test]
    fn independent_cylinders_meet_at_product() {
        let s = ShiftSystem::coin(0.5, Sidedness::OneSided).unwrap();
        let u0 = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1, 1]));
        let u1 = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[0]));
        let pts: Vec<_> = (0..4).map(|i| s.sample_point(StreamKey::new(9, i), Window::forward(50_100))).collect();
        let r = sync_search(&s, &[u0, u1], &pts, 50_000, 8, None).unwrap();
        assert_eq!(r.shifts, vec![0, 2]);
        assert!((r.theta - 0.125).abs() < 0.01);
    }

    #[test]
    fn ladder_pair_does_not_synchronize() {
        let (u0, u1) = example5_1();
        let r = sync_search(&Ladder, &[u0, u1], &[LadderPoint::Level(0)], 100_000, 32, None).unwrap();
        assert_eq!(r.failed_at, Some(1));
        assert_eq!(r.trace.len(), 33);
        assert_eq!(r.trace[0].theta, 0.0);
    }
}
