//! Cocycles along a base orbit: Birkhoff sums, general tabulated cocycles and
//! 2×2 matrix products, with Pliss-time detection and the constructive
//! extraction of Pliss indices from a sequence.

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{Builder, EventSet};
use crate::systems::{DynamicalSystem, Observable, ShiftPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CocycleKind {
    Additive,
    Subadditive,
    Supadditive,
}

/// Real 2×2 matrix, row major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2([[a, 0.0], [0.0, d]])
    }

    pub fn rotation(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Mat2([[c, -s], [s, c]])
    }

    pub fn scale(self, k: f64) -> Self {
        let m = self.0;
        Mat2([[k * m[0][0], k * m[0][1]], [k * m[1][0], k * m[1][1]]])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn det(&self) -> f64 {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    /// `(σ_max, σ_min)`.
    pub fn singular_values(&self) -> (f64, f64) {
        let [[a, b], [c, d]] = self.0;
        let p = (a + d).hypot(c - b);
        let q = (a - d).hypot(b + c);
        let smax = (p + q) / 2.0;
        let smin = if smax > 0.0 { self.det().abs() / smax } else { 0.0 };
        (smax, smin)
    }
}

/// Which scalar a matrix product contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFunctional {
    /// `log ‖A⁽ⁿ⁾‖` (subadditive).
    LogNorm,
    /// `log ‖(A⁽ⁿ⁾)⁻¹‖⁻¹`, the log of the smallest singular value
    /// (supadditive).
    LogConorm,
}

/// A symbol-indexed matrix generator on a shift.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixCocycle {
    pub matrices: Vec<Mat2>,
}

impl MatrixCocycle {
    pub fn new(matrices: Vec<Mat2>) -> Result<Self> {
        for (i, m) in matrices.iter().enumerate() {
            let (smax, smin) = m.singular_values();
            if !(smin > 0.0) || !(smax / smin).is_finite() {
                return Err(Error::InvalidParameter(format!("matrix for symbol {i} is singular")));
            }
        }
        Ok(MatrixCocycle { matrices })
    }

    /// Table along the first `len` coordinates of `x`.
    pub fn table(&self, x: &ShiftPoint, len: usize, functional: MatrixFunctional) -> Result<CocycleTable> {
        let syms = x.forward_slice(0, len)?;
        let mats = syms
            .iter()
            .map(|&s| {
                self.matrices
                    .get(s as usize)
                    .copied()
                    .ok_or_else(|| Error::InvalidParameter(format!("no matrix for symbol {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let kind = match functional {
            MatrixFunctional::LogNorm => CocycleKind::Subadditive,
            MatrixFunctional::LogConorm => CocycleKind::Supadditive,
        };
        Ok(CocycleTable {
            kind,
            repr: Repr::Matrix { mats, functional },
        })
    }

    /// Top exponent by normalized vector iteration and the bottom one from
    /// the mean of `log|det|`, along `len` coordinates of `x`.
    pub fn lyapunov(&self, x: &ShiftPoint, len: usize) -> Result<(f64, f64)> {
        let syms = x.forward_slice(0, len)?;
        let mut v = [1.0, 0.3];
        let mut top = 0.0;
        let mut logdet = 0.0;
        for &s in syms {
            let m = &self.matrices[s as usize];
            v = m.apply(v);
            let n = v[0].hypot(v[1]);
            top += n.ln();
            v = [v[0] / n, v[1] / n];
            logdet += m.det().abs().ln();
        }
        let top = top / len as f64;
        Ok((top, logdet / len as f64 - top))
    }
}

#[derive(Clone, Debug)]
enum Repr {
    /// `prefix[i] = g_0 + … + g_{i-1}`.
    Additive { prefix: Vec<f64> },
    /// `grid[k][n-1] = φ(n, f^k x)` for `n + k ≤ len`.
    Grid { grid: Vec<Vec<f64>> },
    Matrix { mats: Vec<Mat2>, functional: MatrixFunctional },
}

/// Values `φ(n, f^k x)` for `n ≥ 1, k ≥ 0, n + k ≤ len` along one orbit.
#[derive(Clone, Debug)]
pub struct CocycleTable {
    kind: CocycleKind,
    repr: Repr,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KindCounterexample {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// `φ(n+m, f^k x)`
    pub whole: f64,
    /// `φ(n, f^k x) + φ(m, f^{k+n} x)`
    pub parts: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KindVerdict {
    pub kind: CocycleKind,
    pub checked: usize,
    pub counterexample: Option<KindCounterexample>,
}

impl KindVerdict {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

impl CocycleTable {
    /// Birkhoff sums of the generator `g`.
    pub fn additive(g: &[f64]) -> Self {
        let mut prefix = Vec::with_capacity(g.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for &v in g {
            acc += v;
            prefix.push(acc);
        }
        CocycleTable {
            kind: CocycleKind::Additive,
            repr: Repr::Additive { prefix },
        }
    }

    /// Birkhoff sums of `obs` along the first `len` iterates of `x`.
    pub fn birkhoff<S: DynamicalSystem>(system: &S, obs: &Observable, x: &S::Point, len: usize) -> Result<Self> {
        let mut g = Vec::with_capacity(len);
        system.observe_run(obs, x, 0, len, &mut g)?;
        Ok(Self::additive(&g))
    }

    /// Tabulates `phi(n, k)` for a declared kind.
    pub fn from_fn(kind: CocycleKind, len: usize, mut phi: impl FnMut(usize, usize) -> f64) -> Self {
        let grid = (0..len).map(|k| (1..=len - k).map(|n| phi(n, k)).collect()).collect();
        CocycleTable {
            kind,
            repr: Repr::Grid { grid },
        }
    }

    pub fn kind(&self) -> CocycleKind {
        self.kind
    }

    /// Orbit length covered.
    pub fn len(&self) -> usize {
        match &self.repr {
            Repr::Additive { prefix } => prefix.len() - 1,
            Repr::Grid { grid } => grid.len(),
            Repr::Matrix { mats, .. } => mats.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Birkhoff prefix sums, for additive tables.
    pub fn prefix_sums(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Additive { prefix } => Some(prefix),
            _ => None,
        }
    }

    /// `φ(n, f^k x)`.
    pub fn evaluate(&self, n: usize, k: usize) -> Result<f64> {
        let depth = self.len();
        if n == 0 || n + k > depth {
            if n == 0 && k <= depth {
                return Ok(0.0);
            }
            return Err(Error::OutOfRange { n, k, depth });
        }
        Ok(match &self.repr {
            Repr::Additive { prefix } => prefix[k + n] - prefix[k],
            Repr::Grid { grid } => grid[k][n - 1],
            Repr::Matrix { mats, functional } => {
                // renormalize every step; the conorm comes from log|det|,
                // which the nearly rank-one product cannot resolve
                let mut p = Mat2::IDENTITY;
                let mut log_scale = 0.0;
                let mut log_det = 0.0;
                for m in &mats[k..k + n] {
                    p = m.mul(&p);
                    let s = p.max_abs();
                    p = p.scale(1.0 / s);
                    log_scale += s.ln();
                    log_det += m.det().abs().ln();
                }
                let log_norm = log_scale + p.singular_values().0.ln();
                match functional {
                    MatrixFunctional::LogNorm => log_norm,
                    MatrixFunctional::LogConorm => log_det - log_norm,
                }
            }
        })
    }

    /// Tests the declared (in)equality `φ(n+m, f^k x) ⋚ φ(n, f^k x) +
    /// φ(m, f^{n+k} x)` on `budget` random triples.
    pub fn check_kind(&self, budget: usize, rng: &mut impl Rng) -> KindVerdict {
        let len = self.len();
        let mut verdict = KindVerdict {
            kind: self.kind,
            checked: 0,
            counterexample: None,
        };
        if len < 2 {
            return verdict;
        }
        for _ in 0..budget {
            let total = rng.gen_range(2..=len);
            let n = rng.gen_range(1..total);
            let m = total - n;
            let k = rng.gen_range(0..=len - total);
            let whole = self.evaluate(n + m, k).expect("in range");
            let parts = self.evaluate(n, k).expect("in range") + self.evaluate(m, k + n).expect("in range");
            let tol = 1e-9 * (1.0 + whole.abs() + parts.abs());
            let ok = match self.kind {
                CocycleKind::Additive => (whole - parts).abs() <= tol,
                CocycleKind::Subadditive => whole <= parts + tol,
                CocycleKind::Supadditive => whole >= parts - tol,
            };
            verdict.checked += 1;
            if !ok {
                verdict.counterexample = Some(KindCounterexample { n, m, k, whole, parts });
                break;
            }
        }
        verdict
    }

    /// All `(γ, φ)`-Pliss times `n ≤ horizon`: `φ(n-k, f^k x) ≥ (n-k)γ` for
    /// every `0 ≤ k < n`, with an absolute slack of `1e-12·n`.
    pub fn pliss_times(&self, gamma: f64, horizon: usize) -> Result<EventSet> {
        if horizon > self.len() {
            return Err(Error::OutOfRange {
                n: horizon,
                k: 0,
                depth: self.len(),
            });
        }
        let mut b = Builder::new(horizon as u64);
        match &self.repr {
            Repr::Additive { prefix } => {
                // W_n = S_n - nγ; n is Pliss iff W_n ≥ max_{k<n} W_k
                let mut best = 0.0f64;
                for n in 1..=horizon {
                    let w = prefix[n] - n as f64 * gamma;
                    if w >= best - 1e-12 * n as f64 {
                        b.push_unchecked(n as u64);
                    }
                    best = best.max(w);
                }
            }
            _ => {
                for n in 1..=horizon {
                    let ok = (0..n).all(|k| {
                        let v = self.evaluate(n - k, k).expect("in range");
                        v >= (n - k) as f64 * gamma - 1e-12 * n as f64
                    });
                    if ok {
                        b.push_unchecked(n as u64);
                    }
                }
            }
        }
        Ok(b.finish())
    }

    /// `(1/n) Σ_{j<n} φ(2^ℓ, f^j x)`.
    pub fn dyadic_window_average(&self, level: u32, n: usize) -> Result<f64> {
        let w = 1usize << level;
        if n == 0 || n + w > self.len() {
            return Err(Error::OutOfRange {
                n: w,
                k: n,
                depth: self.len(),
            });
        }
        let mut acc = 0.0;
        for j in 0..n {
            acc += self.evaluate(w, j)?;
        }
        Ok(acc / n as f64)
    }
}

/// Pliss times of a rational additive cocycle, decided exactly.
pub fn pliss_times_exact(g: &[Ratio<i64>], gamma: Ratio<i64>, horizon: usize) -> Result<EventSet> {
    if horizon > g.len() {
        return Err(Error::OutOfRange {
            n: horizon,
            k: 0,
            depth: g.len(),
        });
    }
    let mut b = Builder::new(horizon as u64);
    let zero = Ratio::from_integer(0);
    let (mut w, mut best) = (zero, zero);
    for (i, &v) in g[..horizon].iter().enumerate() {
        w += v - gamma;
        if w >= best {
            b.push_unchecked(i as u64 + 1);
            best = w;
        }
    }
    Ok(b.finish())
}

/// Hypothesis under which a sequence is handed to [`pliss_extract`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlissHypothesis {
    /// `a_j - a_{j-1} ≤ C` for all `j` (with `a_0 = 0`); this is what
    /// subadditivity with `a_1 ≤ C` provides to the record argument.
    Subadditive,
    /// `|a_j - a_{j-1}| ≤ C`; runs the translated sequence `a_j + 2Cj`.
    BoundedIncrements,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlissExtraction {
    /// Record indices `n_1 < … < n_ℓ`, 1-based.
    pub indices: Vec<usize>,
    pub theta: f64,
    /// `⌈θ n⌉`, the count the lemma guarantees.
    pub guaranteed: usize,
}

/// Record indices of `s(j) = a_j - j c0` (with `s(0) = 0`): every `n` with
/// `s(j) ≤ s(n)` for all `j < n`. `a[j-1]` holds `a_j`.
pub fn pliss_extract(a: &[f64], c0: f64, c1: f64, cap: f64, hypothesis: PlissHypothesis) -> Result<PlissExtraction> {
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    if !(c0 < c1 && c1 <= cap) {
        return Err(Error::InvalidParameter(format!("need c0 < c1 ≤ C, got {c0}, {c1}, {cap}")));
    }
    match hypothesis {
        PlissHypothesis::Subadditive if c0 <= 0.0 => {
            return Err(Error::InvalidParameter("need 0 < c0".into()));
        }
        PlissHypothesis::BoundedIncrements if c0 < -cap => {
            return Err(Error::InvalidParameter("need -C ≤ c0".into()));
        }
        _ => {}
    }
    if a[n - 1] < c1 * n as f64 {
        return Err(Error::Hypothesis(format!(
            "a_n / n = {} is below c1 = {c1}",
            a[n - 1] / n as f64
        )));
    }
    let mut prev = 0.0;
    for (j, &v) in a.iter().enumerate() {
        let inc = v - prev;
        let ok = match hypothesis {
            PlissHypothesis::Subadditive => inc <= cap,
            PlissHypothesis::BoundedIncrements => inc.abs() <= cap,
        };
        if !ok {
            return Err(Error::Hypothesis(format!("increment {inc} at index {} exceeds C = {cap}", j + 1)));
        }
        prev = v;
    }
    let theta = (c1 - c0) / (cap - c0);
    let indices = match hypothesis {
        PlissHypothesis::Subadditive => records(a.iter().copied(), c0),
        PlissHypothesis::BoundedIncrements => {
            let shift = 2.0 * cap;
            records(a.iter().enumerate().map(|(j, &v)| v + shift * (j + 1) as f64), c0 + shift)
        }
    };
    Ok(PlissExtraction {
        indices,
        theta,
        guaranteed: (theta * n as f64 - 1e-9).ceil().max(0.0) as usize,
    })
}

fn records(a: impl Iterator<Item = f64>, c0: f64) -> Vec<usize> {
    let mut best = 0.0f64;
    let mut out = Vec::new();
    for (i, v) in a.enumerate() {
        let s = v - (i + 1) as f64 * c0;
        if s >= best {
            out.push(i + 1);
            best = s;
        }
    }
    out
}
