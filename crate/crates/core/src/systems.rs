//! Concrete dynamical systems: finite maps, shifts with Bernoulli or Markov
//! measures, interval maps carried on binary expansions, and the ladder
//! `x ↦ x/2` on `{2^-n} ∪ {0, 1}`.

use std::fmt;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

/// A measurable set a point can be tested against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSet {
    Whole,
    /// Finite state labels.
    States(Vec<usize>),
    /// Points whose coordinates `start, start+1, …` read `symbols`.
    Cylinder { start: i64, symbols: Vec<u8> },
    /// Closed interval `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
}

impl TargetSet {
    pub fn cylinder(start: i64, symbols: &[u8]) -> Self {
        TargetSet::Cylinder {
            start,
            symbols: symbols.to_vec(),
        }
    }
}

/// A real function on points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Constant(f64),
    Indicator(TargetSet),
    /// `values[x_0]` on a shift.
    SymbolValues(Vec<f64>),
    /// `values[label - 1]` on a finite map.
    StateValues(Vec<f64>),
    /// The point itself, on an interval map.
    Identity,
    /// `ln |f'(x)|`, on an interval map.
    LogSlope,
}

/// How many symbols to materialize around coordinate 0 of a sampled point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Window {
    pub forward: usize,
    pub backward: usize,
}

impl Window {
    pub fn forward(n: usize) -> Self {
        Window {
            forward: n,
            backward: 0,
        }
    }

    pub fn two_sided(forward: usize, backward: usize) -> Self {
        Window { forward, backward }
    }
}

/// Identifies one reproducible random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub id: u64,
}

impl StreamKey {
    pub fn new(seed: u64, id: u64) -> Self {
        StreamKey { seed, id }
    }

    pub fn child(&self, label: u64) -> Self {
        StreamKey {
            seed: self.seed,
            id: rng::substream(self.id, label),
        }
    }

    pub fn rng(&self) -> StreamRng {
        rng::stream(self.seed, self.id)
    }
}

pub trait DynamicalSystem: Send + Sync {
    type Point: Clone + Send + Sync + 'static;

    fn step(&self, x: &Self::Point) -> Result<Self::Point>;

    fn advance(&self, x: &mut Self::Point) -> Result<()> {
        *x = self.step(x)?;
        Ok(())
    }

    /// `f^-1(x)`, for systems that are invertible.
    fn backward_step(&self, _x: &Self::Point) -> Result<Self::Point> {
        Err(Error::Unsupported("backward step on a non-invertible system".into()))
    }

    fn retreat(&self, x: &mut Self::Point) -> Result<()> {
        *x = self.backward_step(x)?;
        Ok(())
    }

    fn is_invertible(&self) -> bool {
        false
    }

    /// `[x, f(x), …, f^{len-1}(x)]`.
    fn orbit(&self, x: &Self::Point, len: usize) -> Result<Vec<Self::Point>> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return Ok(out);
        }
        let mut y = x.clone();
        out.push(y.clone());
        for _ in 1..len {
            self.advance(&mut y)?;
            out.push(y.clone());
        }
        Ok(out)
    }

    fn contains(&self, target: &TargetSet, _x: &Self::Point) -> Result<bool> {
        match target {
            TargetSet::Whole => Ok(true),
            other => Err(Error::Unsupported(format!("target {other:?} on this system"))),
        }
    }

    fn observe(&self, obs: &Observable, x: &Self::Point) -> Result<f64> {
        match obs {
            Observable::Constant(c) => Ok(*c),
            Observable::Indicator(t) => Ok(if self.contains(t, x)? { 1.0 } else { 0.0 }),
            other => Err(Error::Unsupported(format!("observable {other:?} on this system"))),
        }
    }

    /// Writes `obs(f^c x)` for `c = start, …, start+len-1` into `out`.
    /// Negative `c` walks the backward orbit.
    fn observe_run(
        &self,
        obs: &Observable,
        x: &Self::Point,
        start: i64,
        len: usize,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        out.clear();
        let mut y = x.clone();
        if start >= 0 {
            for _ in 0..start {
                self.advance(&mut y)?;
            }
            for i in 0..len {
                if i > 0 {
                    self.advance(&mut y)?;
                }
                out.push(self.observe(obs, &y)?);
            }
        } else {
            // walk back to the start, then forward
            for _ in 0..(-start) {
                self.retreat(&mut y)?;
            }
            for i in 0..len {
                if i > 0 {
                    self.advance(&mut y)?;
                }
                out.push(self.observe(obs, &y)?);
            }
        }
        Ok(())
    }

    /// Number of states, for finite systems.
    fn state_count(&self) -> Option<usize> {
        None
    }
}

/// Systems with a reference measure that can be sampled.
pub trait Sample: DynamicalSystem {
    fn sample_point(&self, key: StreamKey, window: Window) -> Self::Point;
}

// ---------------------------------------------------------------------------
// Finite maps

/// `f: {1..n} → {1..n}` given by its successor table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteMap {
    succ: Vec<usize>,
    preimages: Vec<Vec<usize>>,
}

impl FiniteMap {
    /// `succ[i-1] = f(i)`, labels 1-based.
    pub fn new(succ: Vec<usize>) -> Result<Self> {
        let n = succ.len();
        if n == 0 {
            return Err(Error::InvalidParameter("finite map needs at least one state".into()));
        }
        let mut preimages = vec![Vec::new(); n];
        for (i, &s) in succ.iter().enumerate() {
            if s == 0 || s > n {
                return Err(Error::InvalidParameter(format!("f({}) = {s} outside 1..={n}", i + 1)));
            }
            preimages[s - 1].push(i + 1);
        }
        Ok(FiniteMap { succ, preimages })
    }

    pub fn len(&self) -> usize {
        self.succ.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succ.is_empty()
    }

    pub fn apply(&self, x: usize) -> usize {
        self.succ[x - 1]
    }

    pub fn iterate(&self, x: usize, n: u64) -> usize {
        let mut y = x;
        for _ in 0..n {
            y = self.apply(y);
        }
        y
    }

    pub fn preimages(&self, x: usize) -> &[usize] {
        &self.preimages[x - 1]
    }

    pub fn states(&self) -> impl Iterator<Item = usize> {
        1..=self.succ.len()
    }

    pub fn is_bijective(&self) -> bool {
        self.preimages.iter().all(|p| p.len() == 1)
    }

    /// Forward orbit as a set (indicator indexed by label - 1).
    pub fn forward_orbit_set(&self, x: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut y = x;
        while !seen[y - 1] {
            seen[y - 1] = true;
            y = self.apply(y);
        }
        seen
    }

    fn check(&self, x: usize) -> Result<()> {
        if x == 0 || x > self.len() {
            return Err(Error::InvalidParameter(format!("state {x} outside 1..={}", self.len())));
        }
        Ok(())
    }
}

impl DynamicalSystem for FiniteMap {
    type Point = usize;

    fn step(&self, x: &usize) -> Result<usize> {
        self.check(*x)?;
        Ok(self.apply(*x))
    }

    fn backward_step(&self, x: &usize) -> Result<usize> {
        self.check(*x)?;
        match self.preimages(*x) {
            [p] => Ok(*p),
            [] => Err(Error::Unsupported(format!("state {x} has no preimage"))),
            _ => Err(Error::Unsupported(format!("state {x} has several preimages"))),
        }
    }

    fn is_invertible(&self) -> bool {
        self.is_bijective()
    }

    fn contains(&self, target: &TargetSet, x: &usize) -> Result<bool> {
        match target {
            TargetSet::Whole => Ok(true),
            TargetSet::States(s) => Ok(s.contains(x)),
            other => Err(Error::Unsupported(format!("target {other:?} on a finite map"))),
        }
    }

    fn observe(&self, obs: &Observable, x: &usize) -> Result<f64> {
        match obs {
            Observable::StateValues(v) => v
                .get(x - 1)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("no value for state {x}"))),
            Observable::Constant(c) => Ok(*c),
            Observable::Indicator(t) => Ok(if self.contains(t, x)? { 1.0 } else { 0.0 }),
            other => Err(Error::Unsupported(format!("observable {other:?} on a finite map"))),
        }
    }

    fn state_count(&self) -> Option<usize> {
        Some(self.len())
    }
}

// ---------------------------------------------------------------------------
// Shifts

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    OneSided,
    TwoSided,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ShiftMeasure {
    Bernoulli(Vec<f64>),
    Markov {
        matrix: Vec<Vec<f64>>,
        stationary: Vec<f64>,
    },
}

/// Full shift on `alphabet` symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSystem {
    alphabet: usize,
    sidedness: Sidedness,
    measure: ShiftMeasure,
    // cumulative rows used by the samplers
    cumulative: Vec<Vec<f64>>,
    reversed: Vec<Vec<f64>>,
}

/// Symbols of one point: `forward[i]` is coordinate `i`, `backward[i]` is
/// coordinate `-(i+1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolWindow {
    pub forward: Vec<u8>,
    pub backward: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftPoint {
    window: Arc<SymbolWindow>,
    offset: i64,
}

impl ShiftPoint {
    pub fn new(forward: Vec<u8>, backward: Vec<u8>) -> Self {
        ShiftPoint {
            window: Arc::new(SymbolWindow { forward, backward }),
            offset: 0,
        }
    }

    pub fn window(&self) -> &SymbolWindow {
        &self.window
    }

    /// Position of coordinate 0 inside the window.
    pub fn offset(&self) -> i64 {
        self.offset
    }

    /// Symbol at coordinate `c` of this point.
    pub fn symbol(&self, c: i64) -> Result<u8> {
        let abs = self.offset + c;
        let s = if abs >= 0 {
            self.window.forward.get(abs as usize)
        } else {
            self.window.backward.get((-abs - 1) as usize)
        };
        s.copied().ok_or(Error::WindowExhausted { coordinate: c })
    }

    /// Coordinates `c..c+len` of this point as a slice, if materialized and
    /// on one side of the window.
    pub fn forward_slice(&self, c: i64, len: usize) -> Result<&[u8]> {
        let abs = self.offset + c;
        if abs < 0 {
            return Err(Error::WindowExhausted { coordinate: c });
        }
        let a = abs as usize;
        self.window
            .forward
            .get(a..a + len)
            .ok_or(Error::WindowExhausted {
                coordinate: c + (self.window.forward.len() as i64 - abs).max(0),
            })
    }

    /// Coordinates `-1, -2, …, -len` of this point, nearest first.
    pub fn backward_symbols(&self, len: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(len);
        let fwd = self.offset.clamp(0, i64::MAX) as usize;
        // coordinates -1..-fwd sit in the forward part of the window
        let from_forward = fwd.min(len);
        out.extend(self.window.forward[fwd - from_forward..fwd].iter().rev());
        let rest = len - from_forward;
        let back_start = (-self.offset).max(0) as usize;
        let slice = self
            .window
            .backward
            .get(back_start..back_start + rest)
            .ok_or(Error::WindowExhausted {
                coordinate: -((self.window.backward.len() - back_start.min(self.window.backward.len())
                    + from_forward) as i64)
                    - 1,
            })?;
        out.extend_from_slice(slice);
        Ok(out)
    }
}

impl ShiftSystem {
    pub fn bernoulli(weights: Vec<f64>, sidedness: Sidedness) -> Result<Self> {
        validate_distribution(&weights, "Bernoulli weights")?;
        let cumulative = vec![cumulative(&weights)];
        Ok(ShiftSystem {
            alphabet: weights.len(),
            sidedness,
            measure: ShiftMeasure::Bernoulli(weights),
            reversed: cumulative.clone(),
            cumulative,
        })
    }

    /// Bernoulli with `P(symbol 1) = p` on two symbols.
    pub fn coin(p: f64, sidedness: Sidedness) -> Result<Self> {
        Self::bernoulli(vec![1.0 - p, p], sidedness)
    }

    /// Markov measure; the stationary vector is computed when not given.
    pub fn markov(matrix: Vec<Vec<f64>>, stationary: Option<Vec<f64>>, sidedness: Sidedness) -> Result<Self> {
        let a = matrix.len();
        if a == 0 {
            return Err(Error::InvalidParameter("empty transition matrix".into()));
        }
        for row in &matrix {
            if row.len() != a {
                return Err(Error::InvalidParameter("transition matrix is not square".into()));
            }
            validate_distribution(row, "transition row")?;
        }
        let pi = match stationary {
            Some(pi) => pi,
            None => stationary_vector(&matrix),
        };
        validate_distribution(&pi, "stationary vector")?;
        for j in 0..a {
            let v: f64 = (0..a).map(|i| pi[i] * matrix[i][j]).sum();
            if (v - pi[j]).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "stationary vector fails πP = π at state {j} by {:e}",
                    v - pi[j]
                )));
            }
        }
        let cumulative_rows = matrix.iter().map(|r| cumulative(r)).collect();
        // reversed chain: P̂(i, j) = π_j P(j, i) / π_i
        let reversed = (0..a)
            .map(|i| {
                let row: Vec<f64> = (0..a)
                    .map(|j| if pi[i] > 0.0 { pi[j] * matrix[j][i] / pi[i] } else { 0.0 })
                    .collect();
                cumulative(&row)
            })
            .collect();
        Ok(ShiftSystem {
            alphabet: a,
            sidedness,
            measure: ShiftMeasure::Markov {
                matrix,
                stationary: pi,
            },
            cumulative: cumulative_rows,
            reversed,
        })
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn sidedness(&self) -> Sidedness {
        self.sidedness
    }

    pub fn measure(&self) -> &ShiftMeasure {
        &self.measure
    }

    /// Symbol marginal of the reference measure.
    pub fn marginal(&self) -> &[f64] {
        match &self.measure {
            ShiftMeasure::Bernoulli(w) => w,
            ShiftMeasure::Markov { stationary, .. } => stationary,
        }
    }

    /// Exact measure of a cylinder.
    pub fn cylinder_measure(&self, symbols: &[u8]) -> f64 {
        let Some((&first, rest)) = symbols.split_first() else {
            return 1.0;
        };
        match &self.measure {
            ShiftMeasure::Bernoulli(w) => symbols.iter().map(|&s| w[s as usize]).product(),
            ShiftMeasure::Markov { matrix, stationary } => {
                let mut p = stationary[first as usize];
                let mut prev = first as usize;
                for &s in rest {
                    p *= matrix[prev][s as usize];
                    prev = s as usize;
                }
                p
            }
        }
    }

    /// First `len` symbols of the forward sampler for `key`. Prefixes agree
    /// across lengths.
    fn forward_symbols(&self, key: StreamKey, len: usize, start: Option<u8>) -> Vec<u8> {
        let mut rng = key.rng();
        match &self.measure {
            ShiftMeasure::Bernoulli(w) if w.len() == 2 => coin_symbols(&mut rng, w[1], len),
            ShiftMeasure::Bernoulli(_) => (0..len).map(|_| draw(&mut rng, &self.cumulative[0])).collect(),
            ShiftMeasure::Markov { .. } => {
                let mut out = Vec::with_capacity(len);
                let mut prev = start;
                for _ in 0..len {
                    let s = match prev {
                        None => draw(&mut rng, &cumulative(self.marginal())),
                        Some(p) => draw(&mut rng, &self.cumulative[p as usize]),
                    };
                    out.push(s);
                    prev = Some(s);
                }
                out
            }
        }
    }

    fn backward_symbols(&self, key: StreamKey, len: usize, anchor: Option<u8>) -> Vec<u8> {
        let mut rng = key.rng();
        match &self.measure {
            ShiftMeasure::Bernoulli(w) if w.len() == 2 => coin_symbols(&mut rng, w[1], len),
            ShiftMeasure::Bernoulli(_) => (0..len).map(|_| draw(&mut rng, &self.cumulative[0])).collect(),
            ShiftMeasure::Markov { .. } => {
                let mut out = Vec::with_capacity(len);
                let mut next = anchor.expect("Markov backward sampling needs coordinate 0");
                for _ in 0..len {
                    let s = draw(&mut rng, &self.reversed[next as usize]);
                    out.push(s);
                    next = s;
                }
                out
            }
        }
    }
}

fn validate_distribution(w: &[f64], what: &str) -> Result<()> {
    if w.is_empty() || w.iter().any(|&p| !(0.0..=1.0).contains(&p) || p.is_nan()) {
        return Err(Error::InvalidParameter(format!("{what} must lie in [0, 1]")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("{what} sum to {s}, not 1")));
    }
    Ok(())
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(rng: &mut impl RngCore, cum: &[f64]) -> u8 {
    let u = rng::uniform(rng);
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1) as u8
}

fn coin_symbols(rng: &mut impl RngCore, p: f64, len: usize) -> Vec<u8> {
    let mut out = vec![0u8; len.next_multiple_of(64)];
    for chunk in out.chunks_exact_mut(64) {
        let m = rng::bernoulli_mask(rng, p);
        for (b, o) in chunk.iter_mut().enumerate() {
            *o = (m >> b & 1) as u8;
        }
    }
    out.truncate(len);
    out
}

fn stationary_vector(matrix: &[Vec<f64>]) -> Vec<f64> {
    let a = matrix.len();
    let mut pi = vec![1.0 / a as f64; a];
    for _ in 0..100_000 {
        let mut next = vec![0.0; a];
        for i in 0..a {
            for j in 0..a {
                next[j] += pi[i] * matrix[i][j];
            }
        }
        // lazy step handles periodic chains
        let next: Vec<f64> = next.iter().zip(&pi).map(|(n, p)| 0.5 * (n + p)).collect();
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    let s: f64 = pi.iter().sum();
    pi.iter().map(|p| p / s).collect()
}

impl DynamicalSystem for ShiftSystem {
    type Point = ShiftPoint;

    fn step(&self, x: &ShiftPoint) -> Result<ShiftPoint> {
        let mut y = x.clone();
        self.advance(&mut y)?;
        Ok(y)
    }

    fn advance(&self, x: &mut ShiftPoint) -> Result<()> {
        x.offset += 1;
        Ok(())
    }

    fn backward_step(&self, x: &ShiftPoint) -> Result<ShiftPoint> {
        let mut y = x.clone();
        self.retreat(&mut y)?;
        Ok(y)
    }

    fn retreat(&self, x: &mut ShiftPoint) -> Result<()> {
        if self.sidedness == Sidedness::OneSided {
            return Err(Error::Unsupported("backward step on a one-sided shift".into()));
        }
        if x.offset - 1 < -(x.window.backward.len() as i64) {
            return Err(Error::WindowExhausted { coordinate: -1 });
        }
        x.offset -= 1;
        Ok(())
    }

    fn is_invertible(&self) -> bool {
        self.sidedness == Sidedness::TwoSided
    }

    fn contains(&self, target: &TargetSet, x: &ShiftPoint) -> Result<bool> {
        match target {
            TargetSet::Whole => Ok(true),
            TargetSet::Cylinder { start, symbols } => {
                for (i, &s) in symbols.iter().enumerate() {
                    if x.symbol(start + i as i64)? != s {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            other => Err(Error::Unsupported(format!("target {other:?} on a shift"))),
        }
    }

    fn observe(&self, obs: &Observable, x: &ShiftPoint) -> Result<f64> {
        match obs {
            Observable::SymbolValues(v) => {
                let s = x.symbol(0)?;
                v.get(s as usize)
                    .copied()
                    .ok_or_else(|| Error::InvalidParameter(format!("no value for symbol {s}")))
            }
            Observable::Constant(c) => Ok(*c),
            Observable::Indicator(t) => Ok(if self.contains(t, x)? { 1.0 } else { 0.0 }),
            other => Err(Error::Unsupported(format!("observable {other:?} on a shift"))),
        }
    }

    fn observe_run(
        &self,
        obs: &Observable,
        x: &ShiftPoint,
        start: i64,
        len: usize,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let Observable::SymbolValues(v) = obs else {
            // generic path
            out.clear();
            let mut y = x.clone();
            y.offset += start;
            if self.sidedness == Sidedness::OneSided && y.offset < 0 {
                return Err(Error::Unsupported("negative coordinate on a one-sided shift".into()));
            }
            for i in 0..len {
                if i > 0 {
                    y.offset += 1;
                }
                out.push(self.observe(obs, &y)?);
            }
            return Ok(());
        };
        if v.len() < self.alphabet {
            return Err(Error::InvalidParameter("symbol values shorter than the alphabet".into()));
        }
        out.clear();
        out.reserve(len);
        let mut c = start;
        let end = start + len as i64;
        while c < end {
            let abs = x.offset + c;
            if abs < 0 {
                if self.sidedness == Sidedness::OneSided {
                    return Err(Error::Unsupported("negative coordinate on a one-sided shift".into()));
                }
                // coordinates c..stop sit in the backward half, stored nearest first
                let stop = end.min(-x.offset);
                let hi = (-abs - 1) as usize;
                let lo = (-(x.offset + stop - 1) - 1) as usize;
                if hi >= x.window.backward.len() {
                    let missing = c + (hi - x.window.backward.len()) as i64;
                    return Err(Error::WindowExhausted { coordinate: missing });
                }
                out.extend(x.window.backward[lo..=hi].iter().rev().map(|&s| v[s as usize]));
                c = stop;
            } else {
                let a = abs as usize;
                let take = (end - c) as usize;
                let avail = x.window.forward.len().saturating_sub(a);
                if avail == 0 {
                    return Err(Error::WindowExhausted { coordinate: c });
                }
                let n = take.min(avail);
                out.extend(x.window.forward[a..a + n].iter().map(|&s| v[s as usize]));
                c += n as i64;
            }
        }
        Ok(())
    }
}

impl Sample for ShiftSystem {
    fn sample_point(&self, key: StreamKey, window: Window) -> ShiftPoint {
        let forward = self.forward_symbols(key.child(0), window.forward.max(1), None);
        let backward = match self.sidedness {
            Sidedness::OneSided => Vec::new(),
            Sidedness::TwoSided => self.backward_symbols(key.child(1), window.backward, forward.first().copied()),
        };
        ShiftPoint {
            window: Arc::new(SymbolWindow { forward, backward }),
            offset: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Interval maps

/// Default number of binary digits carried by a sampled interval point.
pub const DEFAULT_PRECISION: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalKind {
    Doubling,
    Tent,
    /// Branch `i` is affine on `[breakpoints[i], breakpoints[i+1]]` with the
    /// given slope, starting from 0 (positive slope) or 1 (negative slope).
    PiecewiseLinear { breakpoints: Vec<f64>, slopes: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Bits(usize),
    /// Digits are read on demand from a random stream.
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalMap {
    kind: IntervalKind,
    precision: Precision,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BitSource {
    Finite { words: Arc<Vec<u64>>, len: usize },
    Stream { seed: u64, id: u64 },
}

impl BitSource {
    fn bit(&self, k: u64) -> Option<bool> {
        match self {
            BitSource::Finite { words, len } => {
                if k >= *len as u64 {
                    return None;
                }
                Some(words[(k / 64) as usize] >> (k % 64) & 1 == 1)
            }
            BitSource::Stream { seed, id } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(*id);
                rng.set_word_pos((k / 32) as u128);
                Some(rng.next_u32() >> (k % 32) & 1 == 1)
            }
        }
    }

    fn len(&self) -> Option<usize> {
        match self {
            BitSource::Finite { len, .. } => Some(*len),
            BitSource::Stream { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum IntervalRepr {
    /// `x = Σ_i (b[offset+i] xor complement) 2^-(i+1)`.
    Bits {
        source: BitSource,
        offset: u64,
        complement: bool,
    },
    /// Floating-point carrier with a budget of significant bits left.
    Real { value: f64, budget: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalPoint {
    repr: IntervalRepr,
}

impl IntervalPoint {
    /// Point with the given binary digits after the point.
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        IntervalPoint {
            repr: IntervalRepr::Bits {
                source: BitSource::Finite {
                    words: Arc::new(words),
                    len: bits.len(),
                },
                offset: 0,
                complement: false,
            },
        }
    }

    /// Parses digits such as `"101"` for `0.101₂`.
    pub fn from_binary(digits: &str) -> Result<Self> {
        let bits = digits
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!("binary digit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_bits(&bits))
    }

    pub fn from_f64(value: f64) -> Self {
        IntervalPoint {
            repr: IntervalRepr::Real { value, budget: 53.0 },
        }
    }

    /// `i`-th binary digit after the point (0-based).
    pub fn digit(&self, i: u64) -> Option<bool> {
        match &self.repr {
            IntervalRepr::Bits {
                source,
                offset,
                complement,
            } => source.bit(offset + i).map(|b| b ^ complement),
            IntervalRepr::Real { value, .. } => {
                let scaled = value * 2f64.powi(i as i32 + 1);
                Some(scaled.floor() as u64 & 1 == 1)
            }
        }
    }

    /// Remaining known digits, `None` when unbounded.
    pub fn digits_left(&self) -> Option<usize> {
        match &self.repr {
            IntervalRepr::Bits { source, offset, .. } => {
                source.len().map(|l| l.saturating_sub(*offset as usize))
            }
            IntervalRepr::Real { budget, .. } => Some(budget.max(0.0) as usize),
        }
    }

    /// Number of leading zero digits, capped at `cap`.
    pub fn leading_zeros(&self, cap: u64) -> u64 {
        (0..cap).find(|&i| self.digit(i) != Some(false)).unwrap_or(cap)
    }

    /// Skips `k` digits at once (`x ↦ 2^k x mod 1`).
    pub fn shift_digits(&mut self, k: u64) -> Result<()> {
        match &mut self.repr {
            IntervalRepr::Bits { source, offset, .. } => {
                if let Some(len) = source.len() {
                    if *offset + k > len as u64 {
                        return Err(Error::PrecisionExhausted { bits: len });
                    }
                }
                *offset += k;
                Ok(())
            }
            IntervalRepr::Real { value, budget } => {
                *budget -= k as f64;
                if *budget < 0.0 {
                    return Err(Error::PrecisionExhausted { bits: 53 });
                }
                *value = (*value * 2f64.powi(k.min(1000) as i32)).fract();
                Ok(())
            }
        }
    }

    pub fn value(&self) -> f64 {
        match &self.repr {
            IntervalRepr::Real { value, .. } => *value,
            IntervalRepr::Bits { .. } => {
                let mut v = 0.0;
                let mut scale = 0.5;
                for i in 0..64 {
                    match self.digit(i) {
                        Some(true) => v += scale,
                        Some(false) => {}
                        None => break,
                    }
                    scale *= 0.5;
                }
                v
            }
        }
    }
}

impl fmt::Display for IntervalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.repr {
            IntervalRepr::Real { value, .. } => write!(f, "{value}"),
            IntervalRepr::Bits { .. } => {
                write!(f, "0.")?;
                let n = self.digits_left().unwrap_or(16).min(32);
                for i in 0..n as u64 {
                    write!(f, "{}", u8::from(self.digit(i).unwrap_or(false)))?;
                }
                if self.digits_left().is_none() || self.digits_left() > Some(32) {
                    write!(f, "…")?;
                }
                write!(f, "₂")
            }
        }
    }
}

impl IntervalMap {
    pub fn new(kind: IntervalKind) -> Result<Self> {
        if let IntervalKind::PiecewiseLinear { breakpoints, slopes } = &kind {
            if breakpoints.len() != slopes.len() + 1 || slopes.is_empty() {
                return Err(Error::InvalidParameter(
                    "piecewise-linear map needs one more breakpoint than slopes".into(),
                ));
            }
            if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
                return Err(Error::InvalidParameter("breakpoints must start at 0 and end at 1".into()));
            }
            for (i, s) in slopes.iter().enumerate() {
                let w = breakpoints[i + 1] - breakpoints[i];
                if w <= 0.0 {
                    return Err(Error::InvalidParameter("breakpoints must increase".into()));
                }
                if *s == 0.0 || !s.is_finite() || s.abs() * w > 1.0 + 1e-12 {
                    return Err(Error::InvalidParameter(format!("branch {i} does not map into [0, 1]")));
                }
            }
        }
        Ok(IntervalMap {
            kind,
            precision: Precision::Bits(DEFAULT_PRECISION),
        })
    }

    pub fn doubling() -> Self {
        IntervalMap {
            kind: IntervalKind::Doubling,
            precision: Precision::Bits(DEFAULT_PRECISION),
        }
    }

    pub fn tent() -> Self {
        IntervalMap {
            kind: IntervalKind::Tent,
            precision: Precision::Bits(DEFAULT_PRECISION),
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn kind(&self) -> &IntervalKind {
        &self.kind
    }

    fn branch(&self, x: f64) -> (f64, f64, f64) {
        let IntervalKind::PiecewiseLinear { breakpoints, slopes } = &self.kind else {
            unreachable!()
        };
        let i = breakpoints[1..]
            .iter()
            .position(|&b| x < b)
            .unwrap_or(slopes.len() - 1);
        (breakpoints[i], slopes[i], if slopes[i] > 0.0 { 0.0 } else { 1.0 })
    }
}

impl DynamicalSystem for IntervalMap {
    type Point = IntervalPoint;

    fn step(&self, x: &IntervalPoint) -> Result<IntervalPoint> {
        let mut y = x.clone();
        self.advance(&mut y)?;
        Ok(y)
    }

    fn advance(&self, x: &mut IntervalPoint) -> Result<()> {
        if let IntervalKind::PiecewiseLinear { .. } = self.kind {
            let (value, budget) = match &x.repr {
                IntervalRepr::Real { value, budget } => (*value, *budget),
                IntervalRepr::Bits { .. } => (x.value(), x.digits_left().unwrap_or(53).min(53) as f64),
            };
            let (b, s, base) = self.branch(value);
            let budget = budget - s.abs().log2().max(0.0);
            if budget < 0.0 {
                return Err(Error::PrecisionExhausted { bits: 53 });
            }
            x.repr = IntervalRepr::Real {
                value: (base + s * (value - b)).clamp(0.0, 1.0),
                budget,
            };
            return Ok(());
        }
        match &mut x.repr {
            IntervalRepr::Bits {
                source,
                offset,
                complement,
            } => {
                let lead = source
                    .bit(*offset)
                    .ok_or(Error::PrecisionExhausted {
                        bits: source.len().unwrap_or(0),
                    })?
                    ^ *complement;
                *offset += 1;
                if self.kind == IntervalKind::Tent && lead {
                    // 2 - 2x = 1 - (2x - 1): shift, then reflect
                    *complement = !*complement;
                }
                Ok(())
            }
            IntervalRepr::Real { value, budget } => {
                *budget -= 1.0;
                if *budget < 0.0 {
                    return Err(Error::PrecisionExhausted { bits: 53 });
                }
                *value = match self.kind {
                    IntervalKind::Doubling => (2.0 * *value).fract(),
                    _ if *value < 0.5 => 2.0 * *value,
                    _ => 2.0 - 2.0 * *value,
                };
                Ok(())
            }
        }
    }

    fn contains(&self, target: &TargetSet, x: &IntervalPoint) -> Result<bool> {
        match target {
            TargetSet::Whole => Ok(true),
            TargetSet::Interval { lo, hi } => {
                let v = x.value();
                Ok(*lo <= v && v <= *hi)
            }
            other => Err(Error::Unsupported(format!("target {other:?} on an interval map"))),
        }
    }

    fn observe(&self, obs: &Observable, x: &IntervalPoint) -> Result<f64> {
        match obs {
            Observable::Identity => Ok(x.value()),
            Observable::LogSlope => Ok(match &self.kind {
                IntervalKind::Doubling | IntervalKind::Tent => std::f64::consts::LN_2,
                IntervalKind::PiecewiseLinear { .. } => self.branch(x.value()).1.abs().ln(),
            }),
            Observable::Constant(c) => Ok(*c),
            Observable::Indicator(t) => Ok(if self.contains(t, x)? { 1.0 } else { 0.0 }),
            other => Err(Error::Unsupported(format!("observable {other:?} on an interval map"))),
        }
    }
}

impl Sample for IntervalMap {
    /// Lebesgue: uniform digits. The window is ignored; precision is the
    /// map's own.
    fn sample_point(&self, key: StreamKey, _window: Window) -> IntervalPoint {
        if let IntervalKind::PiecewiseLinear { .. } = self.kind {
            let mut rng = key.rng();
            return IntervalPoint::from_f64(rng::uniform(&mut rng));
        }
        let source = match self.precision {
            Precision::Bits(b) => {
                let mut rng = key.rng();
                let words = (0..b.div_ceil(64)).map(|_| rng.next_u64()).collect();
                BitSource::Finite {
                    words: Arc::new(words),
                    len: b,
                }
            }
            Precision::Unbounded => BitSource::Stream {
                seed: key.seed,
                id: key.id,
            },
        };
        IntervalPoint {
            repr: IntervalRepr::Bits {
                source,
                offset: 0,
                complement: false,
            },
        }
    }
}

// ---------------------------------------------------------------------------
// Ladder

/// `x ↦ x/2` on `{2^-n : n ≥ 1} ∪ {0, 1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ladder;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LadderPoint {
    Zero,
    /// `2^-level`; level 0 is the point 1.
    Level(u64),
}

impl DynamicalSystem for Ladder {
    type Point = LadderPoint;

    fn step(&self, x: &LadderPoint) -> Result<LadderPoint> {
        Ok(match x {
            LadderPoint::Zero => LadderPoint::Zero,
            LadderPoint::Level(l) => LadderPoint::Level(l + 1),
        })
    }

    fn backward_step(&self, x: &LadderPoint) -> Result<LadderPoint> {
        match x {
            LadderPoint::Zero => Ok(LadderPoint::Zero),
            LadderPoint::Level(0) => Err(Error::Unsupported("1 has no preimage under x/2".into())),
            LadderPoint::Level(l) => Ok(LadderPoint::Level(l - 1)),
        }
    }
}

// ---------------------------------------------------------------------------
// Worked examples

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Ex2_1,
    Ex2_2,
    Ex3_2,
    Ex4_1,
    Sec7Shift,
}

impl ExampleId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ex2_1" => ExampleId::Ex2_1,
            "ex2_2" => ExampleId::Ex2_2,
            "ex3_2" => ExampleId::Ex3_2,
            "ex4_1" => ExampleId::Ex4_1,
            "sec7_shift" => ExampleId::Sec7Shift,
            other => return Err(Error::Unknown(format!("example {other:?}"))),
        })
    }
}

/// A worked example with its induced time.
#[derive(Clone, Debug)]
pub enum WorkedExample {
    /// Finite map with `R(label) = r[label-1]` (`None` outside the domain).
    Finite { map: FiniteMap, r: Vec<Option<u64>> },
    /// Doubling map with `R = 2^n` on `C_n = [2^-(n+1), 2^-n)` and
    /// `R = 1` on `C_0 = [1/2, 1]`.
    DyadicLevels { map: IntervalMap },
    /// One-sided Bernoulli(1/2) shift, `R = n` on the cylinder `0^{n-1} 1`.
    FirstOne { shift: ShiftSystem },
}

pub fn worked_example(id: ExampleId) -> WorkedExample {
    let finite = |succ: Vec<usize>, r: Vec<u64>| WorkedExample::Finite {
        map: FiniteMap::new(succ).expect("example tables are valid"),
        r: r.into_iter().map(Some).collect(),
    };
    match id {
        ExampleId::Ex2_1 => finite(vec![2, 3, 1, 2], vec![2, 3, 1, 1]),
        ExampleId::Ex2_2 => finite(vec![2, 3, 1], vec![2, 2, 2]),
        ExampleId::Ex3_2 => finite(vec![2, 3, 1], vec![2, 1, 1]),
        ExampleId::Ex4_1 => WorkedExample::DyadicLevels {
            map: IntervalMap::doubling().with_precision(Precision::Unbounded),
        },
        ExampleId::Sec7Shift => WorkedExample::FirstOne {
            shift: ShiftSystem::coin(0.5, Sidedness::OneSided).expect("valid weights"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_2_1_map() {
        let WorkedExample::Finite { map, .. } = worked_example(ExampleId::Ex2_1) else {
            panic!()
        };
        let images: Vec<usize> = map.states().map(|x| map.apply(x)).collect();
        assert_eq!(images, vec![2, 3, 1, 2]);
    }

    #[test]
    fn finite_orbits_revisit() {
        let map = FiniteMap::new(vec![3, 1, 5, 2, 4, 6]).unwrap();
        for x in map.states() {
            let orbit = map.orbit(&x, map.len() + 1).unwrap();
            let mut seen = std::collections::HashSet::new();
            assert!(orbit.iter().any(|s| !seen.insert(*s)));
            for w in orbit.windows(2) {
                assert_eq!(w[1], map.apply(w[0]));
            }
        }
    }

    #[test]
    fn example_2_2_backward() {
        let WorkedExample::Finite { map, .. } = worked_example(ExampleId::Ex2_2) else {
            panic!()
        };
        assert_eq!(map.backward_step(&2).unwrap(), 1);
        let ex21 = FiniteMap::new(vec![2, 3, 1, 2]).unwrap();
        assert!(matches!(ex21.backward_step(&2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn doubling_shifts_digits() {
        let d = IntervalMap::doubling();
        let x = IntervalPoint::from_binary("101").unwrap();
        let y = d.step(&x).unwrap();
        assert_eq!(y.value(), 0.25);
        assert_eq!(y.digit(0), Some(false));
        assert_eq!(y.digit(1), Some(true));
    }

    #[test]
    fn tent_reflects() {
        let t = IntervalMap::tent();
        // 0.11000000 ↦ 0.0111111 (0.5 up to the carried digits)
        let x = IntervalPoint::from_binary("11000000").unwrap();
        let y = t.step(&x).unwrap();
        assert_eq!(y.value(), 0.5 - 2f64.powi(-7));
        let z = t.step(&y).unwrap();
        assert!((z.value() - (1.0 - 2f64.powi(-6))).abs() < 1e-15);
    }

    #[test]
    fn precision_exhausted_exactly_after_budget() {
        let b = 40;
        let d = IntervalMap::doubling().with_precision(Precision::Bits(b));
        let x = d.sample_point(StreamKey::new(1, 2), Window::forward(0));
        let mut y = x.clone();
        for _ in 0..b {
            d.advance(&mut y).unwrap();
        }
        assert_eq!(d.advance(&mut y), Err(Error::PrecisionExhausted { bits: b }));
        assert_eq!(d.orbit(&x, b + 1).unwrap().len(), b + 1);
        assert!(d.orbit(&x, b + 2).is_err());
    }

    #[test]
    fn unbounded_stream_digits_are_stable() {
        let d = IntervalMap::doubling().with_precision(Precision::Unbounded);
        let x = d.sample_point(StreamKey::new(5, 9), Window::forward(0));
        let mut y = x.clone();
        y.shift_digits(1000).unwrap();
        assert_eq!(y.digit(3), x.digit(1003));
    }

    #[test]
    fn coin_frequency_and_determinism() {
        let s = ShiftSystem::coin(0.5, Sidedness::OneSided).unwrap();
        let n = 1_000_000;
        let x = s.sample_point(StreamKey::new(3, 0), Window::forward(n));
        let ones = x.window().forward.iter().filter(|&&b| b == 1).count() as f64 / n as f64;
        assert!((ones - 0.5).abs() < 0.002);
        let again = s.sample_point(StreamKey::new(3, 0), Window::forward(n));
        assert_eq!(x, again);
        // prefix consistency
        let short = s.sample_point(StreamKey::new(3, 0), Window::forward(1000));
        assert_eq!(short.window().forward[..], x.window().forward[..1000]);
    }

    #[test]
    fn markov_frequencies_match_stationary() {
        let p = vec![vec![0.9, 0.1], vec![0.3, 0.7]];
        let s = ShiftSystem::markov(p, None, Sidedness::TwoSided).unwrap();
        let pi = s.marginal().to_vec();
        assert!((pi[0] - 0.75).abs() < 1e-12);
        let n = 200_000;
        let x = s.sample_point(StreamKey::new(8, 1), Window::two_sided(n, n));
        for side in [&x.window().forward, &x.window().backward] {
            let f0 = side.iter().filter(|&&b| b == 0).count() as f64 / n as f64;
            // integrated autocorrelation time of this chain is (1+0.6)/(1-0.6) = 4
            let sigma = (pi[0] * pi[1] * 4.0 / n as f64).sqrt();
            assert!((f0 - pi[0]).abs() < 3.0 * sigma, "f0={f0}");
        }
    }

    #[test]
    fn markov_rejects_bad_stationary() {
        let p = vec![vec![0.9, 0.1], vec![0.3, 0.7]];
        assert!(ShiftSystem::markov(p, Some(vec![0.5, 0.5]), Sidedness::OneSided).is_err());
    }

    #[test]
    fn two_sided_step_and_back_are_inverse() {
        let s = ShiftSystem::coin(0.5, Sidedness::TwoSided).unwrap();
        for id in 0..20 {
            let x = s.sample_point(StreamKey::new(4, id), Window::two_sided(64, 64));
            let y = s.backward_step(&s.step(&x).unwrap()).unwrap();
            assert_eq!(x, y);
            let z = s.step(&s.backward_step(&x).unwrap()).unwrap();
            assert_eq!(x, z);
            // depth-D backward orbit reads the stored left coordinates
            let mut w = x.clone();
            for d in 1..=64 {
                s.retreat(&mut w).unwrap();
                assert_eq!(w.symbol(0).unwrap(), x.window().backward[d - 1]);
            }
            assert_eq!(s.retreat(&mut w), Err(Error::WindowExhausted { coordinate: -1 }));
        }
    }

    #[test]
    fn observe_run_matches_stepping() {
        let s = ShiftSystem::coin(0.3, Sidedness::TwoSided).unwrap();
        let x = s.sample_point(StreamKey::new(2, 2), Window::two_sided(50, 50));
        let obs = Observable::SymbolValues(vec![-1.0, 1.0]);
        let mut fast = Vec::new();
        s.observe_run(&obs, &x, -20, 40, &mut fast).unwrap();
        let mut y = x.clone();
        for _ in 0..20 {
            s.retreat(&mut y).unwrap();
        }
        let slow: Vec<f64> = (0..40)
            .map(|i| {
                if i > 0 {
                    s.advance(&mut y).unwrap();
                }
                s.observe(&obs, &y).unwrap()
            })
            .collect();
        assert_eq!(fast, slow);
        let back = x.backward_symbols(10).unwrap();
        assert_eq!(back, x.window().backward[..10].to_vec());
    }

    #[test]
    fn piecewise_linear_validation() {
        assert!(IntervalMap::new(IntervalKind::PiecewiseLinear {
            breakpoints: vec![0.0, 0.25, 1.0],
            slopes: vec![4.0, -4.0 / 3.0],
        })
        .is_ok());
        assert!(IntervalMap::new(IntervalKind::PiecewiseLinear {
            breakpoints: vec![0.0, 0.5, 1.0],
            slopes: vec![3.0, -2.0],
        })
        .is_err());
    }
}
