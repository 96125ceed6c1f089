//! Named experiments. Each one reads its parameters from a config, runs
//! against the library, and returns report rows checked against declared
//! tolerances.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, LN_2};

use rayon::prelude::*;

use crate::blocks::{block_measure_vs_density, extended_kac, first_return_verify, Membership};
use crate::cocycle::{pliss_extract, CocycleTable, Mat2, MatrixCocycle, MatrixFunctional, PlissHypothesis};
use crate::config::{ExperimentConfig, Params};
use crate::error::{Error, Result};
use crate::induced::{
    induced_map, induced_time_checks, induced_time_checks_sampled, orbit_coherence_check, preimage_set, spreading,
    tower_mass_series, DyadicLevelTime, FirstTime, TableTime, TowerMass,
};
use crate::lift::{liftability_report, return_stats, tail_and_residue, tail_integral_identity, window_growth_check, LiftVerdict};
use crate::markov::{
    c_alpha, derived_ell, exact_time_moment_check, invariant_stats, second_moment_ratios, MassDistribution, MassSpec,
};
use crate::report::{fmt_f64, Report, ReportRow, Verdict};
use crate::rng::{stream, substream};
use crate::schedules::{coherence_check, example5_1, ScheduleAssignment};
use crate::stats::MeanAcc;
use crate::sync::{joint_density, sync_search};
use crate::systems::{
    worked_example, ExampleId, FiniteMap, IntervalMap, Ladder, LadderPoint, Observable, WorkedExample, Precision, Sample,
    ShiftSystem, Sidedness, StreamKey, TargetSet, Window,
};

pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    defaults: fn() -> Params,
    run: fn(&mut Ctx) -> Result<()>,
}

impl CatalogEntry {
    /// Parameters the experiment reads, with their default values.
    pub fn defaults(&self) -> Params {
        (self.defaults)()
    }
}

macro_rules! params {
    ($($k:ident : $v:expr),* $(,)?) => {
        || Params { $($k: Some($v),)* ..Params::default() }
    };
}

pub static CATALOG: &[CatalogEntry] = &[
    CatalogEntry {
        id: "block-kac",
        summary: "Kac integral over the coherent block of a Pliss schedule, and first return to the block",
        defaults: params!(samples: 20_000, depth: 2_000, horizon: 2_000, p: 0.7, gamma: 0.2),
        run: block_kac,
    },
    CatalogEntry {
        id: "coherence-pliss",
        summary: "Pliss schedules satisfy both coherence properties; a threshold schedule does not",
        defaults: params!(samples: 20, horizon: 200, p: 0.7, gamma: 0.2),
        run: coherence_pliss,
    },
    CatalogEntry {
        id: "example-2-1",
        summary: "Spreading of an induced-time set is not invariant on a four-point map",
        defaults: params!(),
        run: example_2_1,
    },
    CatalogEntry {
        id: "example-2-2",
        summary: "An orbit-coherent induced map whose induced time is not coherent",
        defaults: params!(),
        run: example_2_2,
    },
    CatalogEntry {
        id: "example-3-2",
        summary: "A coherent induced time whose induced map is not transitive on the orbit",
        defaults: params!(),
        run: example_3_2,
    },
    CatalogEntry {
        id: "example-4-1",
        summary: "Doubling map with return time 2^n on dyadic cells: divergent tower, no lift",
        defaults: params!(samples: 20, horizon: 1_000_000),
        run: example_4_1,
    },
    CatalogEntry {
        id: "example-5-1",
        summary: "Two schedules on a ladder with density one half each that never synchronize",
        defaults: params!(horizon: 1_000_000, max_shift: 32),
        run: example_5_1,
    },
    CatalogEntry {
        id: "kac-bernoulli",
        summary: "Kac's formula for the cylinder [1] of the fair coin shift",
        defaults: params!(samples: 1_000_000, horizon: 128, p: 0.5),
        run: kac_bernoulli,
    },
    CatalogEntry {
        id: "kac-doubling",
        summary: "Kac's formula for [1/2, 1] under the doubling map",
        defaults: params!(samples: 1_000_000, horizon: 128),
        run: kac_doubling,
    },
    CatalogEntry {
        id: "moment-sandwich",
        summary: "Second moment of an exact return time between the product bounds",
        defaults: params!(samples: 200_000),
        run: moment_sandwich,
    },
    CatalogEntry {
        id: "pliss-extraction",
        summary: "Constructive Pliss extraction on random sequences against a brute-force oracle",
        defaults: params!(samples: 100, horizon: 2_000),
        run: pliss_extraction,
    },
    CatalogEntry {
        id: "prop7-zeta-entropy",
        summary: "Zeta mass distributions: normalization, entropy ratio near log 2, divergent second moment",
        defaults: params!(alpha: 0.5, epsilon: 0.05),
        run: prop7_zeta_entropy,
    },
    CatalogEntry {
        id: "return-reciprocal",
        summary: "Visit frequency times mean return equals one for first-hitting returns",
        defaults: params!(samples: 4, horizon: 1_000_000),
        run: return_reciprocal,
    },
    CatalogEntry {
        id: "sec7-shift-liftable",
        summary: "First-one return time on the coin shift: exact, bounded mean return, liftable",
        defaults: params!(samples: 20, horizon: 100_000, p: 0.5),
        run: sec7_shift_liftable,
    },
    CatalogEntry {
        id: "sync-cylinders",
        summary: "Minimal-shift synchronization of two cylinder-hitting schedules",
        defaults: params!(samples: 4, horizon: 250_000, max_shift: 8),
        run: sync_cylinders,
    },
    CatalogEntry {
        id: "tail-residue",
        summary: "Tail densities, tail sum and residue of a first-hitting time, and the level-set integral",
        defaults: params!(horizon: 1_000_000, threshold: 20),
        run: tail_residue,
    },
    CatalogEntry {
        id: "theoremC-pliss-block",
        summary: "Measure of the coherent block of a Pliss schedule against its orbit density",
        defaults: params!(samples: 10_000, depth: 10_000, orbits: 200, horizon: 10_000, p: 0.7, gamma: 0.2),
        run: theorem_c_pliss_block,
    },
    CatalogEntry {
        id: "window-growth-matrix",
        summary: "Dyadic window averages of a matrix cocycle clear (λ/5)·2^ℓ; a driftless negative control does not",
        defaults: params!(horizon: 4_000, threshold: 10),
        run: window_growth_matrix,
    },
];

pub fn lookup(id: &str) -> Option<&'static CatalogEntry> {
    CATALOG.iter().find(|e| e.id == id)
}

/// A runnable config for `id` with every default written out.
pub fn example_config(id: &str, seed: u64) -> Result<ExperimentConfig> {
    let entry = lookup(id).ok_or_else(|| Error::Unknown(id.to_string()))?;
    let mut cfg = ExperimentConfig::new(id, seed);
    cfg.params = entry.defaults();
    cfg.validate()?;
    Ok(cfg)
}

/// Rejects configs naming an unknown experiment or setting parameters the
/// experiment does not read.
pub fn check_config(cfg: &ExperimentConfig) -> Result<&'static CatalogEntry> {
    cfg.validate()?;
    let entry = lookup(&cfg.experiment)
        .ok_or_else(|| Error::Config(format!("unknown experiment '{}'", cfg.experiment)))?;
    let accepted = entry.defaults().set_keys();
    for k in cfg.params.set_keys() {
        if !accepted.contains(&k) {
            return Err(Error::Config(format!("experiment '{}' does not read params.{k}", entry.id)));
        }
    }
    Ok(entry)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let entry = check_config(cfg)?;
    let mut ctx = Ctx {
        id: entry.id,
        seed: cfg.seed,
        params: merge(&cfg.params, &entry.defaults()),
        overrides: cfg.tolerances.clone(),
        used: Vec::new(),
        rows: Vec::new(),
    };
    (entry.run)(&mut ctx)?;
    if let Some(k) = ctx.overrides.keys().find(|k| !ctx.used.contains(k)) {
        return Err(Error::Config(format!("tolerance '{k}' does not match a checked quantity")));
    }
    Ok(Report::new(entry.id, cfg.seed, ctx.rows))
}

fn merge(over: &Params, base: &Params) -> Params {
    Params {
        samples: over.samples.or(base.samples),
        horizon: over.horizon.or(base.horizon),
        depth: over.depth.or(base.depth),
        orbits: over.orbits.or(base.orbits),
        max_shift: over.max_shift.or(base.max_shift),
        threshold: over.threshold.or(base.threshold),
        p: over.p.or(base.p),
        alpha: over.alpha.or(base.alpha),
        epsilon: over.epsilon.or(base.epsilon),
        gamma: over.gamma.or(base.gamma),
        lambda: over.lambda.or(base.lambda),
        mass: over.mass.clone().or_else(|| base.mass.clone()),
    }
}

struct Ctx {
    id: &'static str,
    seed: u64,
    params: Params,
    overrides: BTreeMap<String, f64>,
    used: Vec<String>,
    rows: Vec<ReportRow>,
}

impl Ctx {
    fn n(&self, v: Option<u64>) -> u64 {
        v.expect("defaults cover every parameter an experiment reads")
    }
    fn samples(&self) -> u64 {
        self.n(self.params.samples)
    }
    fn horizon(&self) -> u64 {
        self.n(self.params.horizon)
    }
    fn f(&self, v: Option<f64>) -> f64 {
        v.expect("defaults cover every parameter an experiment reads")
    }

    fn tol(&mut self, q: &str, default: f64) -> f64 {
        self.used.push(q.to_string());
        self.overrides.get(q).copied().unwrap_or(default)
    }

    fn push(&mut self, q: &str, value: String, se: Option<f64>, meta: &str, verdict: Verdict) {
        let error = se.map(fmt_f64).unwrap_or_default();
        let mut m = format!("seed={}", self.seed);
        if !meta.is_empty() {
            m.push(';');
            m.push_str(meta);
        }
        self.rows.push(ReportRow {
            experiment: self.id.to_string(),
            quantity: q.to_string(),
            value,
            error,
            meta: m,
            verdict,
        });
    }

    /// `|value - target| ≤ tol`.
    fn near(&mut self, q: &str, value: f64, se: Option<f64>, target: f64, tol: f64, meta: &str) {
        let tol = self.tol(q, tol);
        let ok = (value - target).abs() <= tol;
        let meta = format!("{meta};target={};tol={}", fmt_f64(target), fmt_f64(tol));
        self.push(q, fmt_f64(value), se, meta.trim_start_matches(';'), Verdict::from_check(ok));
    }

    /// `value ≤ bound`.
    fn at_most(&mut self, q: &str, value: f64, se: Option<f64>, bound: f64, meta: &str) {
        let bound = self.tol(q, bound);
        let meta = format!("{meta};max={}", fmt_f64(bound));
        self.push(q, fmt_f64(value), se, meta.trim_start_matches(';'), Verdict::from_check(value <= bound));
    }

    /// `value > bound`; the bound is not overridable.
    fn above(&mut self, q: &str, value: f64, se: Option<f64>, bound: f64, meta: &str) {
        let meta = format!("{meta};min={}", fmt_f64(bound));
        self.push(q, fmt_f64(value), se, meta.trim_start_matches(';'), Verdict::from_check(value > bound));
    }

    fn flag(&mut self, q: &str, ok: bool, meta: &str) {
        self.push(q, ok.to_string(), None, meta, Verdict::from_check(ok));
    }

    fn info(&mut self, q: &str, value: String, se: Option<f64>, meta: &str) {
        self.push(q, value, se, meta, Verdict::Info);
    }
}

fn list<T: std::fmt::Display>(xs: &[T]) -> String {
    let v: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("{{{}}}", v.join(" "))
}

fn drifted_pliss(p: f64, gamma: f64) -> Result<(ShiftSystem, ScheduleAssignment<ShiftSystem>)> {
    Ok((
        ShiftSystem::coin(p, Sidedness::TwoSided)?,
        ScheduleAssignment::pliss(Observable::SymbolValues(vec![-1.0, 1.0]), gamma),
    ))
}

// ---------------------------------------------------------------------------

fn block_kac(c: &mut Ctx) -> Result<()> {
    let (s, pliss) = drifted_pliss(c.f(c.params.p), c.f(c.params.gamma))?;
    let (n, d, h) = (c.samples() as usize, c.n(c.params.depth), c.horizon());
    let k = extended_kac(&s, &pliss, Membership::Block { depth: d }, c.seed, n, h)?;
    let meta = format!("samples={n};depth={d};horizon={h}");
    c.near("kac_block_integral", k.integral, Some(k.integral_std_error), 1.0, 0.03, &meta);
    c.info("block_fraction", fmt_f64(k.set_fraction), None, &meta);
    c.info("block_mean_return", fmt_f64(k.mean_return), None, &meta);
    c.at_most("kac_unresolved", k.unresolved as f64, None, 0.0, &meta);
    let fr_samples = (n / 10).max(1);
    let v = first_return_verify(&s, &pliss, c.seed ^ 0x5A, fr_samples, d, h)?;
    let meta = format!("samples={fr_samples};depth={d};horizon={h};block_points={}", v.block_points);
    c.flag("first_return_to_block", v.passed() && v.block_points > 0, &meta);
    Ok(())
}

fn coherence_pliss(c: &mut Ctx) -> Result<()> {
    let (s, pliss) = drifted_pliss(c.f(c.params.p), c.f(c.params.gamma))?;
    let (n, h) = (c.samples(), c.horizon());
    let pts: Vec<_> = (0..n)
        .map(|i| s.sample_point(StreamKey::new(c.seed, i), Window::two_sided(2 * h as usize + 2, 0)))
        .collect();
    let v = coherence_check(&pliss, &s, &pts, h)?;
    let meta = format!("samples={n};horizon={h}");
    c.flag("pliss_coherent", v.passed(), &meta);
    let cycle = FiniteMap::new(vec![2, 1])?;
    let thr = ScheduleAssignment::threshold(Observable::StateValues(vec![1.0, -1.0]), 0.0);
    let v = coherence_check(&thr, &cycle, &[1, 2], 20)?;
    let detail = v
        .counterexample
        .map(|e| format!("{:?}:n={},m={},j={}", e.property, e.n, e.m, e.j))
        .unwrap_or_default();
    c.flag("threshold_counterexample_found", !v.passed(), &format!("horizon=20;{detail}"));
    Ok(())
}

fn finite(id: ExampleId) -> (FiniteMap, TableTime) {
    match worked_example(id) {
        WorkedExample::Finite { map, r } => (map, TableTime(r)),
        _ => unreachable!("finite example"),
    }
}

fn example_2_1(c: &mut Ctx) -> Result<()> {
    let (map, r) = finite(ExampleId::Ex2_1);
    let u = spreading(&map, &[1, 3], &r)?;
    let pre = preimage_set(&map, &u);
    c.flag("spreading_is_123", u == vec![1, 2, 3], &format!("U={{1 3}};spreading={}", list(&u)));
    c.flag("preimage_is_1234", pre == vec![1, 2, 3, 4], &format!("preimage={}", list(&pre)));
    c.flag("spreading_not_invariant", pre != u, "");
    let f: Vec<String> = induced_map(&map, &r)
        .into_iter()
        .map(|y| y.map_or("-".into(), |v| v.to_string()))
        .collect();
    c.info("induced_map", list(&f), None, "");
    Ok(())
}

fn example_2_2(c: &mut Ctx) -> Result<()> {
    let (map, r) = finite(ExampleId::Ex2_2);
    let ch = induced_time_checks(&map, &r);
    let oc = orbit_coherence_check(&map, &r);
    let at = ch.incoherent_at.map(|(x, j)| format!("x={x};j={j}")).unwrap_or_default();
    c.flag("not_coherent", !ch.coherent, &at);
    c.flag("orbit_coherent", oc.passed, "");
    Ok(())
}

fn example_3_2(c: &mut Ctx) -> Result<()> {
    let (map, r) = finite(ExampleId::Ex3_2);
    let ch = induced_time_checks(&map, &r);
    c.flag("coherent", ch.coherent, "");
    let f = induced_map(&map, &r);
    let mut reach = std::collections::BTreeSet::from([1usize]);
    let mut y = 1;
    for _ in 0..map.len() {
        y = f[y - 1].ok_or_else(|| Error::Hypothesis("induced map leaves the domain".into()))?;
        reach.insert(y);
    }
    let reach: Vec<usize> = reach.into_iter().collect();
    c.flag("forward_induced_orbit_of_1_is_13", reach == vec![1, 3], &format!("orbit={}", list(&reach)));
    c.flag("orbit_misses_2", !reach.contains(&2), "");
    Ok(())
}

fn example_4_1(c: &mut Ctx) -> Result<()> {
    let d = IntervalMap::doubling().with_precision(Precision::Unbounded);
    let (n, h) = (c.samples(), c.horizon());
    let pts: Vec<_> = (0..n)
        .map(|i| d.sample_point(StreamKey::new(c.seed, i), Window::forward(0)))
        .collect();
    let rep = liftability_report(&d, &DyadicLevelTime, &pts, h, 0.05)?;
    let meta = format!("samples={n};horizon={h}");
    c.info("last_decade_growth", fmt_f64(rep.last_decade_growth), None, &meta);
    c.info("mean_return_at_horizon", fmt_f64(*rep.mean_return_curve.last().unwrap_or(&f64::NAN)), None, &meta);
    c.flag("not_liftable", rep.verdict == LiftVerdict::NotLiftable, &format!("{meta};verdict={:?}", rep.verdict));
    // R = 2^k on a cell of mass 2^-(k+1): every term is 1/2
    let tower = tower_mass_series((0..200).map(|k| (2f64.powi(k), 0.5f64.powi(k + 1))), 50.0, 200);
    let (div, terms) = match &tower {
        TowerMass::Divergent { partial_sums, .. } => (true, partial_sums.len()),
        TowerMass::Finite { terms, .. } => (false, *terms),
    };
    c.flag("tower_mass_diverges", div, &format!("cap=50;terms={terms}"));
    Ok(())
}

fn example_5_1(c: &mut Ctx) -> Result<()> {
    let h = c.horizon();
    let l_max = c.n(c.params.max_shift);
    let (u0, u1) = example5_1();
    let p = LadderPoint::Level(0);
    let a = u0.evaluate(&Ladder, &p, h + l_max)?;
    let b = u1.evaluate(&Ladder, &p, h + l_max)?;
    let meta = format!("horizon={h}");
    for (q, u) in [("marginal_0", &a), ("marginal_1", &b)] {
        let d = u.restrict(h).densities().natural_f64();
        c.near(q, d, None, 0.5, 0.01, &meta);
    }
    let mut worst = (0u64, 0.0f64);
    for l in 0..=l_max {
        let j = joint_density(&[a.restrict(h), b.restrict(h + l)], &[0, l])?;
        let v = *j.numer() as f64 / *j.denom() as f64;
        if v > worst.1 {
            worst = (l, v);
        }
    }
    c.at_most("joint_density_max", worst.1, None, 0.01, &format!("{meta};max_shift={l_max};argmax={}", worst.0));
    let r = sync_search(&Ladder, &[u0, u1], &[p], h, l_max, None)?;
    c.flag(
        "sync_search_fails",
        !r.found(),
        &format!("{meta};max_shift={l_max};theta_min={}", fmt_f64(r.theta_min)),
    );
    Ok(())
}

fn kac_bernoulli(c: &mut Ctx) -> Result<()> {
    let s = ShiftSystem::coin(c.f(c.params.p), Sidedness::TwoSided)?;
    let hit = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1]));
    let (n, h) = (c.samples() as usize, c.horizon());
    let k = extended_kac(&s, &hit, Membership::Target, c.seed, n, h)?;
    let meta = format!("samples={n};horizon={h}");
    c.near("kac_integral", k.integral, Some(k.integral_std_error), 1.0, 0.01, &meta);
    c.info("set_fraction", fmt_f64(k.set_fraction), None, &meta);
    c.info("unresolved", k.unresolved.to_string(), None, &meta);
    Ok(())
}

fn kac_doubling(c: &mut Ctx) -> Result<()> {
    let d = IntervalMap::doubling();
    let hit = ScheduleAssignment::hitting(TargetSet::Interval { lo: 0.5, hi: 1.0 });
    let (n, h) = (c.samples() as usize, c.horizon());
    let k = extended_kac(&d, &hit, Membership::Target, c.seed, n, h)?;
    let meta = format!("samples={n};horizon={h}");
    c.near("kac_integral", k.integral, Some(k.integral_std_error), 1.0, 0.01, &meta);
    c.info("set_fraction", fmt_f64(k.set_fraction), None, &meta);
    c.info("unresolved", k.unresolved.to_string(), None, &meta);
    Ok(())
}

fn moment_sandwich(c: &mut Ctx) -> Result<()> {
    let n = c.samples() as usize;
    let s = exact_time_moment_check(&MassDistribution::geometric(0.5)?, Some((StreamKey::new(c.seed, 0), n)))?;
    c.near("fair_r_nu", s.r_nu, None, 2.0, 1e-12, "");
    c.near("fair_r2_nu", s.r2_nu, None, 6.0, 1e-12, "");
    c.near("fair_r_mu", s.r_mu, None, 2.0, 1e-12, "");
    if let Some((m, se)) = s.r_mu_sampled {
        c.near("fair_r_mu_sampled", m, Some(se), 2.0, 0.05, &format!("cells={n}"));
    }
    for k in 2..=8u64 {
        let p = k as f64 / 10.0;
        let s = exact_time_moment_check(&MassDistribution::geometric(p)?, Some((StreamKey::new(c.seed, k), n)))?;
        let meta = format!(
            "lower={};r2_nu={};upper={}",
            fmt_f64(s.lower),
            fmt_f64(s.r2_nu),
            fmt_f64(s.upper)
        );
        c.flag(&format!("sandwich_p{k}"), s.holds(), &meta);
        if let Some((m, se)) = s.r_mu_sampled {
            c.near(&format!("r_mu_sampled_p{k}"), m, Some(se), 1.0 / p, 0.05 / p, &format!("cells={n}"));
        }
    }
    let one = MassDistribution::new(MassSpec::Explicit { weights: vec![1.0], tail_ratio: None })?;
    c.flag("sandwich_unit_time", exact_time_moment_check(&one, None)?.holds(), "");
    Ok(())
}

/// `±1` increments with `P(+1) = 0.8`, redrawn until `a_n ≥ n/2`.
pub fn pliss_test_sequence(seed: u64, id: u64, n: usize) -> Vec<f64> {
    let mut attempt = 0;
    loop {
        let mut rng = stream(seed, substream(id, attempt));
        let mut a = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut left = 0;
        let mut word = 0u64;
        for _ in 0..n {
            if left == 0 {
                word = crate::rng::bernoulli_mask(&mut rng, 0.8);
                left = 64;
            }
            acc += if word & 1 == 1 { 1.0 } else { -1.0 };
            word >>= 1;
            left -= 1;
            a.push(acc);
        }
        if acc >= 0.5 * n as f64 {
            return a;
        }
        attempt += 1;
    }
}

fn pliss_extraction(c: &mut Ctx) -> Result<()> {
    let (m, n) = (c.samples(), c.horizon() as usize);
    let seed = c.seed;
    let per: Vec<Result<(f64, usize)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let a = pliss_test_sequence(seed, i, n);
            let ex = pliss_extract(&a, 0.25, 0.5, 1.0, PlissHypothesis::Subadditive)?;
            // brute force: a_k - a_j ≥ c0 (k - j) for every j < k
            let bad = ex
                .indices
                .iter()
                .filter(|&&k| {
                    let ak = a[k - 1];
                    !(0..k).all(|j| {
                        let aj = if j == 0 { 0.0 } else { a[j - 1] };
                        ak - aj >= 0.25 * (k - j) as f64 - 1e-9
                    })
                })
                .count();
            Ok((ex.indices.len() as f64 / n as f64, bad))
        })
        .collect();
    let mut min_frac = f64::INFINITY;
    let mut bad = 0;
    for r in per {
        let (f, b) = r?;
        min_frac = min_frac.min(f);
        bad += b;
    }
    let meta = format!("sequences={m};n={n};C=1;c1=0.5;c0=0.25");
    c.above("min_fraction_minus_theta", min_frac - 1.0 / 3.0, None, -1e-12, &meta);
    c.info("min_fraction", fmt_f64(min_frac), None, &meta);
    c.at_most("oracle_failures", bad as f64, None, 0.0, &meta);
    Ok(())
}

fn prop7_zeta_entropy(c: &mut Ctx) -> Result<()> {
    let alpha = c.f(c.params.alpha);
    let eps = c.f(c.params.epsilon);
    let cc = c_alpha(alpha)?;
    let ell = derived_ell(alpha, eps)?;
    let meta = format!("alpha={};epsilon={};ell={ell}", fmt_f64(alpha), fmt_f64(eps));
    c.info("c_alpha", fmt_f64(cc), None, &meta);
    c.info("derived_ell", ell.to_string(), None, &meta);
    let m = MassDistribution::zeta_mass(alpha, ell)?;
    let cert = &m.certificate;
    c.at_most(
        "normalization_deviation",
        cert.deviation + cert.tail_error,
        None,
        1e-12,
        &format!("{meta};explicit_cells={}", cert.explicit_cells),
    );
    let st = invariant_stats(&m);
    c.above("abramov_ratio", st.abramov_ratio, None, LN_2 - eps, &meta);
    c.info("entropy", fmt_f64(st.entropy), None, &meta);
    c.at_most("mean_return", st.mean_return, None, 2.0 + cc, &meta);
    let g = second_moment_ratios(&m, 64, 40, 1.3);
    let last = *g.ratios.last().unwrap_or(&f64::NAN);
    c.flag(
        "second_moment_doubling_growth",
        g.n0.is_some(),
        &format!("{meta};factor=1.3;n0={};last_ratio={}", g.n0.map_or("none".into(), |v| v.to_string()), fmt_f64(last)),
    );
    Ok(())
}

fn return_reciprocal(c: &mut Ctx) -> Result<()> {
    let h = c.horizon();
    let n = c.samples();
    for p in [0.3, 0.5, 0.7] {
        let s = ShiftSystem::coin(p, Sidedness::OneSided)?;
        let time = FirstTime(ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1])));
        let seed = c.seed;
        let stats: Vec<Result<_>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = s.sample_point(StreamKey::new(seed, i), Window::forward(h as usize + 2000));
                return_stats(&s, &time, &x, h, 1500)
            })
            .collect();
        let mut prod = MeanAcc::new();
        let mut theta = MeanAcc::new();
        let mut bracketed = true;
        for st in stats {
            let st = st?;
            bracketed &= st.bracketed && !st.escaped;
            prod.push(st.product);
            theta.push(st.theta);
        }
        let tag = format!("p{:02}", (p * 10.0).round() as u32);
        let meta = format!("p={};samples={n};horizon={h}", fmt_f64(p));
        c.near(&format!("product_minus_one_{tag}"), prod.mean() - 1.0, Some(prod.std_error()), 0.0, 0.02, &meta);
        c.near(&format!("theta_{tag}"), theta.mean(), Some(theta.std_error()), p, 0.01, &meta);
        c.flag(&format!("bracketing_{tag}"), bracketed, &meta);
    }
    Ok(())
}

fn sec7_shift_liftable(c: &mut Ctx) -> Result<()> {
    let p = c.f(c.params.p);
    let s = ShiftSystem::coin(p, Sidedness::OneSided)?;
    let time = FirstTime(ScheduleAssignment::hitting(TargetSet::cylinder(-1, &[1])));
    let (n, h) = (c.samples(), c.horizon());
    let pts: Vec<_> = (0..n)
        .map(|i| s.sample_point(StreamKey::new(c.seed, i), Window::forward(h as usize + 2000)))
        .collect();
    let meta = format!("p={};samples={n};horizon={h}", fmt_f64(p));
    let rep = liftability_report(&s, &time, &pts, h, 0.05)?;
    c.flag("liftable", rep.verdict == LiftVerdict::Liftable, &format!("{meta};verdict={:?}", rep.verdict));
    c.near("theta", *rep.theta_curve.last().unwrap_or(&f64::NAN), None, p, 0.01, &meta);
    c.near("mean_return", *rep.mean_return_curve.last().unwrap_or(&f64::NAN), None, 1.0 / p, 0.05 / p, &meta);
    let ch = induced_time_checks_sampled(&s, &time, &pts[..pts.len().min(5)], 1000)?;
    c.flag("exact", ch.exact, &meta);
    Ok(())
}

fn sync_cylinders(c: &mut Ctx) -> Result<()> {
    let s = ShiftSystem::coin(0.5, Sidedness::OneSided)?;
    let u0 = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[1, 1]));
    let u1 = ScheduleAssignment::hitting(TargetSet::cylinder(0, &[0]));
    let (n, h, l) = (c.samples(), c.horizon(), c.n(c.params.max_shift));
    let pts: Vec<_> = (0..n)
        .map(|i| s.sample_point(StreamKey::new(c.seed, i), Window::forward((h + l) as usize + 8)))
        .collect();
    let r = sync_search(&s, &[u0, u1], &pts, h, l, None)?;
    let meta = format!("samples={n};horizon={h};max_shift={l}");
    c.flag("found", r.found(), &meta);
    c.flag("shifts_minimal", r.shifts == vec![0, 2], &format!("{meta};shifts={}", list(&r.shifts)));
    c.near("theta", r.theta, Some(r.theta_std_error), 0.125, 0.02, &meta);
    Ok(())
}

fn tail_residue(c: &mut Ctx) -> Result<()> {
    let s = ShiftSystem::coin(0.5, Sidedness::OneSided)?;
    let time = FirstTime(ScheduleAssignment::hitting(TargetSet::cylinder(-1, &[1])));
    let h = c.horizon();
    let t = c.n(c.params.threshold);
    let x = s.sample_point(StreamKey::new(c.seed, 0), Window::forward(h as usize + 256));
    let thresholds: Vec<u64> = (1..=t).collect();
    let rep = tail_and_residue(&s, &time, &x, &thresholds, h, 200)?;
    let meta = format!("horizon={h};threshold={t}");
    c.at_most("residue", rep.residue, None, 0.01, &meta);
    c.near("tail_sum", rep.tail_sum, None, 2.0, 0.02, &meta);
    c.flag("tail_non_increasing", rep.density.windows(2).all(|w| w[0] >= w[1]), &meta);
    for (k, &n) in thresholds.iter().enumerate().take(4) {
        c.info(&format!("tail_density_n{n:02}"), fmt_f64(rep.density[k]), None, &meta);
    }
    let ind = Observable::Indicator(TargetSet::cylinder(0, &[1]));
    let ti = tail_integral_identity(&s, &ind, &x, h, 0.5)?;
    c.at_most("tail_integral_discrepancy", ti.discrepancy(), None, 0.01, &meta);
    c.near("tail_integral_birkhoff", ti.birkhoff, None, 0.5, 0.01, &meta);
    Ok(())
}

fn theorem_c_pliss_block(c: &mut Ctx) -> Result<()> {
    let (s, pliss) = drifted_pliss(c.f(c.params.p), c.f(c.params.gamma))?;
    let (n, d, o, h) = (c.samples() as usize, c.n(c.params.depth), c.n(c.params.orbits) as usize, c.horizon());
    let rep = block_measure_vs_density(&s, &pliss, c.seed, n, d, o, h)?;
    let meta = format!("samples={n};depth={d};orbits={o};horizon={h}");
    let se = (rep.block_std_error.powi(2) + rep.density_std_error.powi(2)).sqrt();
    c.at_most("block_minus_density", rep.discrepancy(), Some(se), 0.02, &meta);
    c.info("block_measure", fmt_f64(rep.block_estimate), Some(rep.block_std_error), &meta);
    c.info("orbit_density", fmt_f64(rep.density_estimate), Some(rep.density_std_error), &meta);
    Ok(())
}

fn window_growth_matrix(c: &mut Ctx) -> Result<()> {
    let n = c.horizon() as usize;
    let top = c.n(c.params.threshold) as u32;
    let s = ShiftSystem::coin(0.5, Sidedness::OneSided)?;
    let mats = vec![Mat2::diag(3.0, 1.5), Mat2::rotation(FRAC_PI_4).scale(1.5)];
    let cocycle = MatrixCocycle::new(mats)?;
    let len = 2 * n + (1usize << top) + 1;
    let x = s.sample_point(StreamKey::new(c.seed, 0), Window::forward(len));
    let (hi, lo) = cocycle.lyapunov(&x, len)?;
    let meta = format!("n={n};levels=0..={top}");
    c.info("lyapunov_top", fmt_f64(hi), None, &meta);
    c.above("lyapunov_bottom", lo, None, 0.0, &meta);
    let table = cocycle.table(&x, len, MatrixFunctional::LogConorm)?;
    let a = window_growth_check(&table, lo, 0..=top, n)?;
    let b = window_growth_check(&table, lo, 0..=top, 2 * n)?;
    let show = |v: Option<u32>| v.map_or("none".to_string(), |l| l.to_string());
    c.flag("l0_found", a.bound_met(), &format!("{meta};l0={}", show(a.l0)));
    c.flag(
        "l0_stable_under_doubling",
        a.l0.is_some() && a.l0 == b.l0,
        &format!("{meta};l0_n={};l0_2n={}", show(a.l0), show(b.l0)),
    );
    let mut rng = stream(c.seed, 1);
    let fair: Vec<f64> = (0..len)
        .map(|_| if crate::rng::uniform(&mut rng) < 0.5 { 1.0 } else { -1.0 })
        .collect();
    let neg = window_growth_check(&CocycleTable::additive(&fair), 0.5, 0..=top, n)?;
    c.flag("driftless_control_not_met", !neg.bound_met(), &format!("{meta};claimed_lambda=0.5"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_shape() {
        assert!(CATALOG.len() >= 12);
        for id in ["theoremC-pliss-block", "prop7-zeta-entropy", "kac-doubling", "example-2-1"] {
            assert!(lookup(id).is_some(), "{id}");
        }
        let mut ids: Vec<_> = CATALOG.iter().map(|e| e.id).collect();
        ids.dedup();
        assert_eq!(ids.len(), CATALOG.len());
        for e in CATALOG {
            let cfg = example_config(e.id, 0).unwrap();
            let text = cfg.to_toml();
            let back = ExperimentConfig::parse(&text).unwrap();
            assert!(check_config(&back).is_ok(), "{}", e.id);
        }
    }

    #[test]
    fn finite_examples_pass() {
        for id in ["example-2-1", "example-2-2", "example-3-2", "prop7-zeta-entropy", "coherence-pliss"] {
            let r = run(&ExperimentConfig::new(id, 5)).unwrap();
            assert!(r.all_pass(), "{id}: {:?}", r.rows);
        }
    }

    #[test]
    fn unread_params_and_tolerances_are_config_errors() {
        let mut cfg = ExperimentConfig::new("example-2-1", 1);
        cfg.params.samples = Some(3);
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::new("example-2-1", 1);
        cfg.tolerances.insert("nonsense".into(), 0.1);
        assert!(matches!(run(&cfg), Err(Error::Config(_))));
        assert!(matches!(run(&ExperimentConfig::new("no-such", 1)), Err(Error::Config(_))));
    }

    #[test]
    fn tolerance_override_flips_verdict() {
        let mut cfg = ExperimentConfig::new("kac-bernoulli", 2);
        cfg.params.samples = Some(2000);
        cfg.tolerances.insert("kac_integral".into(), 0.2);
        let loose = run(&cfg).unwrap();
        assert!(loose.all_pass());
        cfg.tolerances.insert("kac_integral".into(), 0.0);
        assert!(!run(&cfg).unwrap().all_pass());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let mut cfg = ExperimentConfig::new("theoremC-pliss-block", 9);
        cfg.params.samples = Some(500);
        cfg.params.depth = Some(500);
        cfg.params.orbits = Some(20);
        cfg.params.horizon = Some(500);
        let a = run(&cfg).unwrap().to_csv().unwrap();
        let b = run(&cfg).unwrap().to_csv().unwrap();
        assert_eq!(a, b);
    }
}
