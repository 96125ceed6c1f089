//! Finite-horizon subsets of ℕ = {1, 2, …}.
//!
//! An [`EventSet`] is the value of a schedule at one point, truncated to the
//! indices `1..=horizon`. Operations that would need indices beyond the
//! horizon record that fact in the `truncated` flag instead of guessing.

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizons up to this size are stored as a dense bitset.
pub const DENSE_LIMIT: u64 = 1 << 26;

/// Default fraction of the horizon discarded before taking the max/min of
/// prefix averages.
pub const DEFAULT_BURN_IN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Eq)]
enum Repr {
    Dense { words: Vec<u64>, count: u64 },
    Sparse(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventSet {
    horizon: u64,
    repr: Repr,
    truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOp {
    Intersect,
    Union,
    Difference,
}

/// A distance in the dyadic metric: zero or `2^-exponent`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic(Option<u64>);

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic(None);

    pub fn pow2_neg(exponent: u64) -> Self {
        Dyadic(Some(exponent))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_none()
    }

    /// `k` such that the value is `2^-k`, or `None` for zero.
    pub fn exponent(&self) -> Option<u64> {
        self.0
    }

    /// Exact for exponents up to 1074.
    pub fn to_f64(&self) -> f64 {
        match self.0 {
            None => 0.0,
            Some(k) => 2f64.powi(-(k.min(1100) as i32)),
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self.0, other.0) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            // larger exponent, smaller value
            (Some(a), Some(b)) => b.cmp(&a),
        }
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            None => write!(f, "0"),
            Some(k) => write!(f, "2^-{k}"),
        }
    }
}

/// Finite-horizon density estimates of an [`EventSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub horizon: u64,
    /// Max of prefix averages over `n >= burn_in_start`.
    pub upper: Ratio<u64>,
    /// Min of prefix averages over `n >= burn_in_start`.
    pub lower: Ratio<u64>,
    /// `count / horizon`.
    pub natural: Ratio<u64>,
    pub burn_in_start: u64,
    pub burn_in_fraction: f64,
    /// `(n, #(U ∩ 1..=n) / n)` at logarithmically spaced `n`.
    pub prefix_averages: Vec<(u64, f64)>,
}

impl DensityReport {
    pub fn upper_f64(&self) -> f64 {
        ratio_f64(&self.upper)
    }
    pub fn lower_f64(&self) -> f64 {
        ratio_f64(&self.lower)
    }
    pub fn natural_f64(&self) -> f64 {
        ratio_f64(&self.natural)
    }
}

pub fn ratio_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn words_for(horizon: u64) -> usize {
    // bit i-1 stores index i
    horizon.div_ceil(64) as usize
}

impl EventSet {
    pub fn empty(horizon: u64) -> Self {
        let repr = if horizon <= DENSE_LIMIT {
            Repr::Dense {
                words: vec![0; words_for(horizon)],
                count: 0,
            }
        } else {
            Repr::Sparse(Vec::new())
        };
        EventSet {
            horizon,
            repr,
            truncated: false,
        }
    }

    /// The whole of `1..=horizon`.
    pub fn full(horizon: u64) -> Self {
        Self::from_predicate(horizon, |_| true)
    }

    /// Builds from strictly increasing indices in `1..=horizon`.
    pub fn from_indices<I: IntoIterator<Item = u64>>(horizon: u64, indices: I) -> Result<Self> {
        let mut b = Builder::new(horizon);
        for i in indices {
            b.push(i)?;
        }
        Ok(b.finish())
    }

    pub fn from_predicate(horizon: u64, mut keep: impl FnMut(u64) -> bool) -> Self {
        let mut b = Builder::new(horizon);
        for i in 1..=horizon {
            if keep(i) {
                b.push_unchecked(i);
            }
        }
        b.finish()
    }

    /// Builds from a 0/1 indicator where `bits[i-1]` is membership of `i`.
    pub fn from_indicator(bits: &[bool]) -> Self {
        Self::from_predicate(bits.len() as u64, |i| bits[(i - 1) as usize])
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Whether an operation producing this set dropped or could not see
    /// events beyond the horizon.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn with_truncated(mut self, truncated: bool) -> Self {
        self.truncated = truncated;
        self
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.repr, Repr::Dense { .. })
    }

    pub fn count(&self) -> u64 {
        match &self.repr {
            Repr::Dense { count, .. } => *count,
            Repr::Sparse(v) => v.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn contains(&self, i: u64) -> bool {
        if i == 0 || i > self.horizon {
            return false;
        }
        match &self.repr {
            Repr::Dense { words, .. } => {
                let b = i - 1;
                words[(b / 64) as usize] >> (b % 64) & 1 == 1
            }
            Repr::Sparse(v) => v.binary_search(&i).is_ok(),
        }
    }

    pub fn min(&self) -> Option<u64> {
        self.iter().next()
    }

    pub fn max(&self) -> Option<u64> {
        match &self.repr {
            Repr::Dense { words, .. } => words
                .iter()
                .enumerate()
                .rev()
                .find(|(_, w)| **w != 0)
                .map(|(k, w)| k as u64 * 64 + (63 - w.leading_zeros() as u64) + 1),
            Repr::Sparse(v) => v.last().copied(),
        }
    }

    pub fn iter(&self) -> Iter<'_> {
        match &self.repr {
            Repr::Dense { words, .. } => Iter::Dense {
                words,
                word: 0,
                current: words.first().copied().unwrap_or(0),
            },
            Repr::Sparse(v) => Iter::Sparse(v.iter()),
        }
    }

    pub fn to_vec(&self) -> Vec<u64> {
        self.iter().collect()
    }

    /// `#(U ∩ 1..=n)` for every `n` in `1..=horizon`, as a running count
    /// visited in order.
    fn prefix_counts(&self, mut visit: impl FnMut(u64, u64)) {
        let mut it = self.iter().peekable();
        let mut c = 0u64;
        for n in 1..=self.horizon {
            while let Some(&i) = it.peek() {
                if i <= n {
                    c += 1;
                    it.next();
                } else {
                    break;
                }
            }
            visit(n, c);
        }
    }

    /// `#(U ∩ 1..=n)`.
    pub fn count_upto(&self, n: u64) -> u64 {
        let n = n.min(self.horizon);
        match &self.repr {
            Repr::Dense { words, .. } => {
                let full = (n / 64) as usize;
                let mut c: u64 = words[..full].iter().map(|w| w.count_ones() as u64).sum();
                let rem = n % 64;
                if rem > 0 {
                    c += (words[full] & ((1u64 << rem) - 1)).count_ones() as u64;
                }
                c
            }
            Repr::Sparse(v) => v.partition_point(|&i| i <= n) as u64,
        }
    }

    fn check_horizon(&self, other: &EventSet) -> Result<()> {
        if self.horizon != other.horizon {
            return Err(Error::HorizonMismatch {
                left: self.horizon,
                right: other.horizon,
            });
        }
        Ok(())
    }

    /// `0` if the sets agree on the horizon, else `2^-min(U △ V)`.
    pub fn dyadic_distance(&self, other: &EventSet) -> Result<Dyadic> {
        self.check_horizon(other)?;
        let first = match (&self.repr, &other.repr) {
            (Repr::Dense { words: a, .. }, Repr::Dense { words: b, .. }) => a
                .iter()
                .zip(b)
                .enumerate()
                .find(|(_, (x, y))| x != y)
                .map(|(k, (x, y))| k as u64 * 64 + (x ^ y).trailing_zeros() as u64 + 1),
            _ => {
                let mut a = self.iter();
                let mut b = other.iter();
                loop {
                    match (a.next(), b.next()) {
                        (None, None) => break None,
                        (Some(x), None) | (None, Some(x)) => break Some(x),
                        (Some(x), Some(y)) if x != y => break Some(x.min(y)),
                        _ => {}
                    }
                }
            }
        };
        Ok(first.map_or(Dyadic::ZERO, Dyadic::pow2_neg))
    }

    /// `σ^k U = {j - k : j ∈ U, j > k}` at horizon `H - k`.
    ///
    /// When `k >= H` the result is the empty set at horizon 0 and is flagged
    /// as truncated.
    pub fn shift_left(&self, k: u64) -> EventSet {
        if k >= self.horizon {
            return EventSet::empty(0).with_truncated(true);
        }
        if k == 0 {
            return self.clone();
        }
        let h = self.horizon - k;
        let mut b = Builder::new(h);
        for j in self.iter().filter(|&j| j > k) {
            b.push_unchecked(j - k);
        }
        b.finish().with_truncated(self.truncated)
    }

    /// `ℓ + U` intersected with `1..=H`; flags truncation if any event fell off.
    pub fn translate_right(&self, l: u64) -> EventSet {
        if l == 0 {
            return self.clone();
        }
        let mut b = Builder::new(self.horizon);
        let mut dropped = false;
        for u in self.iter() {
            match u.checked_add(l) {
                Some(v) if v <= self.horizon => b.push_unchecked(v),
                _ => {
                    dropped = true;
                    break;
                }
            }
        }
        b.finish().with_truncated(self.truncated || dropped)
    }

    /// Restricts to `1..=h` (`h <= horizon`).
    pub fn restrict(&self, h: u64) -> EventSet {
        let h = h.min(self.horizon);
        let mut b = Builder::new(h);
        for i in self.iter().take_while(|&i| i <= h) {
            b.push_unchecked(i);
        }
        b.finish().with_truncated(self.truncated)
    }

    pub fn combine(&self, other: &EventSet, op: SetOp) -> Result<EventSet> {
        self.check_horizon(other)?;
        let truncated = self.truncated || other.truncated;
        if let (Repr::Dense { words: a, .. }, Repr::Dense { words: b, .. }) = (&self.repr, &other.repr) {
            let words: Vec<u64> = a
                .iter()
                .zip(b)
                .map(|(x, y)| match op {
                    SetOp::Intersect => x & y,
                    SetOp::Union => x | y,
                    SetOp::Difference => x & !y,
                })
                .collect();
            let count = words.iter().map(|w| w.count_ones() as u64).sum();
            return Ok(EventSet {
                horizon: self.horizon,
                repr: Repr::Dense { words, count },
                truncated,
            });
        }
        let mut b = Builder::new(self.horizon);
        let mut x = self.iter().peekable();
        let mut y = other.iter().peekable();
        loop {
            let (nx, ny) = (x.peek().copied(), y.peek().copied());
            let (take, in_x, in_y) = match (nx, ny) {
                (None, None) => break,
                (Some(a), None) => {
                    x.next();
                    (a, true, false)
                }
                (None, Some(c)) => {
                    y.next();
                    (c, false, true)
                }
                (Some(a), Some(c)) if a < c => {
                    x.next();
                    (a, true, false)
                }
                (Some(a), Some(c)) if c < a => {
                    y.next();
                    (c, false, true)
                }
                (Some(a), Some(_)) => {
                    x.next();
                    y.next();
                    (a, true, true)
                }
            };
            let keep = match op {
                SetOp::Intersect => in_x && in_y,
                SetOp::Union => in_x || in_y,
                SetOp::Difference => in_x && !in_y,
            };
            if keep {
                b.push_unchecked(take);
            }
        }
        Ok(b.finish().with_truncated(truncated))
    }

    pub fn densities(&self) -> DensityReport {
        self.densities_with_burn_in(DEFAULT_BURN_IN)
    }

    /// Finite-horizon stand-ins for the upper and lower natural densities:
    /// extreme prefix averages over `n >= max(1, ceil(burn_in * H))`.
    pub fn densities_with_burn_in(&self, burn_in: f64) -> DensityReport {
        let h = self.horizon;
        if h == 0 {
            let zero = Ratio::new_raw(0, 1);
            return DensityReport {
                horizon: 0,
                upper: zero,
                lower: zero,
                natural: zero,
                burn_in_start: 0,
                burn_in_fraction: burn_in,
                prefix_averages: Vec::new(),
            };
        }
        let start = ((burn_in.clamp(0.0, 1.0) * h as f64).ceil() as u64).clamp(1, h);
        let checkpoints = log_checkpoints(h);
        let mut next_cp = checkpoints.iter().peekable();
        let mut prefix = Vec::with_capacity(checkpoints.len());
        let mut upper = (0u64, 1u64);
        let mut lower = (1u64, 1u64);
        let mut last = 0;
        self.prefix_counts(|n, c| {
            if n >= start {
                // c/n > u/d  <=>  c*d > u*n
                if (c as u128) * (upper.1 as u128) > (upper.0 as u128) * (n as u128) {
                    upper = (c, n);
                }
                if (c as u128) * (lower.1 as u128) < (lower.0 as u128) * (n as u128) {
                    lower = (c, n);
                }
            }
            if next_cp.peek().is_some_and(|&&cp| cp == n) {
                prefix.push((n, c as f64 / n as f64));
                next_cp.next();
            }
            last = c;
        });
        DensityReport {
            horizon: h,
            upper: Ratio::new(upper.0, upper.1),
            lower: Ratio::new(lower.0, lower.1),
            natural: Ratio::new(last, h),
            burn_in_start: start,
            burn_in_fraction: burn_in,
            prefix_averages: prefix,
        }
    }
}

/// Roughly ten checkpoints per decade, always including `h`.
pub fn log_checkpoints(h: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut x = 1.0f64;
    while (x as u64) < h {
        let v = x.round() as u64;
        if out.last() != Some(&v) {
            out.push(v);
        }
        x *= 10f64.powf(0.1);
    }
    if out.last() != Some(&h) && h > 0 {
        out.push(h);
    }
    out
}

impl fmt::Display for EventSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            if k == 32 {
                write!(f, "…")?;
                break;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}@{}", self.horizon)
    }
}

pub enum Iter<'a> {
    Dense {
        words: &'a [u64],
        word: usize,
        current: u64,
    },
    Sparse(std::slice::Iter<'a, u64>),
}

impl Iterator for Iter<'_> {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        match self {
            Iter::Dense {
                words,
                word,
                current,
            } => loop {
                if *current != 0 {
                    let t = current.trailing_zeros() as u64;
                    *current &= *current - 1;
                    return Some(*word as u64 * 64 + t + 1);
                }
                *word += 1;
                if *word >= words.len() {
                    return None;
                }
                *current = words[*word];
            },
            Iter::Sparse(it) => it.next().copied(),
        }
    }
}

/// Incremental constructor; indices must arrive strictly increasing.
pub struct Builder {
    set: EventSet,
    last: u64,
}

impl Builder {
    pub fn new(horizon: u64) -> Self {
        Builder {
            set: EventSet::empty(horizon),
            last: 0,
        }
    }

    pub fn push(&mut self, i: u64) -> Result<()> {
        if i == 0 || i > self.set.horizon {
            return Err(Error::IndexOutOfRange {
                index: i,
                horizon: self.set.horizon,
            });
        }
        if i <= self.last {
            return Err(Error::NotIncreasing {
                prev: self.last,
                next: i,
            });
        }
        self.push_unchecked(i);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, i: u64) {
        debug_assert!(i > self.last && i <= self.set.horizon);
        self.last = i;
        match &mut self.set.repr {
            Repr::Dense { words, count } => {
                let b = i - 1;
                words[(b / 64) as usize] |= 1 << (b % 64);
                *count += 1;
            }
            Repr::Sparse(v) => v.push(i),
        }
    }

    pub fn finish(self) -> EventSet {
        self.set
    }
}

/// Wire form: `{"horizon": H, "events": [..], "truncated": bool}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventSetWire {
    horizon: u64,
    events: Vec<u64>,
    #[serde(default)]
    truncated: bool,
}

impl Serialize for EventSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EventSetWire {
            horizon: self.horizon,
            events: self.to_vec(),
            truncated: self.truncated,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EventSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = EventSetWire::deserialize(d)?;
        EventSet::from_indices(w.horizon, w.events)
            .map(|s| s.with_truncated(w.truncated))
            .map_err(serde::de::Error::custom)
    }
}

impl EventSet {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("event set serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(h: u64, v: &[u64]) -> EventSet {
        EventSet::from_indices(h, v.iter().copied()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let h = 10;
        assert_eq!(set(h, &[]).dyadic_distance(&set(h, &[])).unwrap(), Dyadic::ZERO);
        assert_eq!(set(h, &[1]).dyadic_distance(&set(h, &[])).unwrap().to_f64(), 0.5);
        assert_eq!(set(h, &[1, 3]).dyadic_distance(&set(h, &[1, 2])).unwrap().to_f64(), 0.25);
    }

    #[test]
    fn distance_rejects_mismatched_horizons() {
        let err = set(5, &[1]).dyadic_distance(&set(6, &[1])).unwrap_err();
        assert_eq!(err, Error::HorizonMismatch { left: 5, right: 6 });
    }

    #[test]
    fn shift_examples() {
        assert!(set(10, &[1]).shift_left(1).is_empty());
        let s = set(10, &[2, 5]).shift_left(1);
        assert_eq!(s.to_vec(), vec![1, 4]);
        assert_eq!(s.horizon(), 9);
        assert!(set(10, &[3]).shift_left(3).is_empty());
        let gone = set(10, &[3]).shift_left(10);
        assert_eq!(gone.horizon(), 0);
        assert!(gone.truncated());
    }

    #[test]
    fn translate_examples() {
        let u = set(20, &[1, 4, 9]);
        assert_eq!(u.translate_right(0), u);
        assert_eq!(set(10, &[1, 2]).translate_right(2).to_vec(), vec![3, 4]);
        let back = u.translate_right(5).shift_left(5);
        assert_eq!(back.to_vec(), vec![1, 4, 9]);
        assert!(!u.translate_right(5).truncated());
        assert!(u.translate_right(12).truncated());
    }

    #[test]
    fn combine_examples() {
        let h = 5;
        let i = set(h, &[1, 2]).combine(&set(h, &[2, 3]), SetOp::Intersect).unwrap();
        assert_eq!(i.to_vec(), vec![2]);
        let u = set(h, &[1]).combine(&set(h, &[2]), SetOp::Union).unwrap();
        assert_eq!(u.to_vec(), vec![1, 2]);
        let e = set(h, &[1, 3, 5]).combine(&EventSet::empty(h), SetOp::Intersect).unwrap();
        assert!(e.is_empty());
        assert!(set(h, &[1]).combine(&set(h + 1, &[1]), SetOp::Union).is_err());
    }

    #[test]
    fn rejects_bad_indices() {
        assert!(EventSet::from_indices(5, [0]).is_err());
        assert!(EventSet::from_indices(5, [6]).is_err());
        assert!(EventSet::from_indices(5, [2, 2]).is_err());
        assert!(EventSet::from_indices(5, [3, 1]).is_err());
    }

    #[test]
    fn density_of_progression() {
        let h = 100_000;
        let u = EventSet::from_predicate(h, |i| i % 4 == 0);
        let d = u.densities();
        assert!((d.natural_f64() - 0.25).abs() < 1e-4);
        assert!((d.upper_f64() - 0.25).abs() < 1e-4);
        assert!((d.lower_f64() - 0.25).abs() < 1e-4);
    }

    #[test]
    fn density_of_full_set() {
        let d = EventSet::full(1000).densities();
        assert_eq!(d.upper, Ratio::new(1, 1));
        assert_eq!(d.lower, Ratio::new(1, 1));
    }

    #[test]
    fn sparse_and_dense_agree() {
        let idx = [3u64, 17, 64, 65, 128, 1000];
        let dense = set(1 << 12, &idx);
        assert!(dense.is_dense());
        let sparse = set(DENSE_LIMIT + 1, &idx);
        assert!(!sparse.is_dense());
        assert_eq!(dense.to_vec(), sparse.to_vec());
        assert_eq!(dense.count_upto(100), sparse.count_upto(100));
        assert_eq!(dense.max(), Some(1000));
        assert_eq!(sparse.max(), Some(1000));
        assert_eq!(sparse.shift_left(3).to_vec(), vec![14, 61, 62, 125, 997]);
        let other = set(DENSE_LIMIT + 1, &[17, 99]);
        assert_eq!(
            sparse.combine(&other, SetOp::Union).unwrap().to_vec(),
            vec![3, 17, 64, 65, 99, 128, 1000]
        );
        assert_eq!(sparse.dyadic_distance(&other).unwrap(), Dyadic::pow2_neg(3));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let u = set(12, &[1, 5, 12]);
        assert_eq!(EventSet::from_json(&u.to_json()).unwrap(), u);
        assert!(EventSet::from_json(r#"{"horizon":3,"events":[4]}"#).is_err());
        assert!(EventSet::from_json(r#"{"horizon":3,"events":[2,1]}"#).is_err());
        assert!(EventSet::from_json(r#"{"horizon":3,"events":[],"x":1}"#).is_err());
    }

    fn arb_set(h: u64) -> impl Strategy<Value = EventSet> {
        proptest::collection::vec(any::<bool>(), h as usize).prop_map(|b| EventSet::from_indicator(&b))
    }

    proptest! {
        #[test]
        fn metric_axioms(a in arb_set(40), b in arb_set(40), c in arb_set(40)) {
            // exponents are below 53, so f64 sums of these powers of two are exact
            let ab = a.dyadic_distance(&b).unwrap().to_f64();
            let ba = b.dyadic_distance(&a).unwrap().to_f64();
            let bc = b.dyadic_distance(&c).unwrap().to_f64();
            let ac = a.dyadic_distance(&c).unwrap().to_f64();
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc);
            prop_assert_eq!(a.dyadic_distance(&a).unwrap(), Dyadic::ZERO);
        }

        #[test]
        fn shift_distributes_over_union(a in arb_set(50), b in arb_set(50), k in 0u64..60) {
            let lhs = a.combine(&b, SetOp::Union).unwrap().shift_left(k);
            let rhs = a.shift_left(k).combine(&b.shift_left(k), SetOp::Union).unwrap();
            prop_assert_eq!(lhs.to_vec(), rhs.to_vec());
            prop_assert_eq!(lhs.horizon(), rhs.horizon());
        }

        #[test]
        fn lower_never_exceeds_upper(a in arb_set(300), burn in 0.0f64..1.0) {
            let d = a.densities_with_burn_in(burn);
            prop_assert!(d.lower <= d.upper);
            for (_, avg) in d.prefix_averages {
                prop_assert!((0.0..=1.0).contains(&avg));
            }
        }

        #[test]
        fn count_upto_matches_iteration(a in arb_set(200), n in 0u64..220) {
            let direct = a.iter().filter(|&i| i <= n).count() as u64;
            prop_assert_eq!(a.count_upto(n), direct);
        }
    }

    /// Union of arithmetic progressions: the estimate approaches the
    /// inclusion–exclusion density at rate O(1/n).
    #[test]
    fn progression_union_converges_at_rate_one_over_n() {
        use num_rational::Ratio;
        let moduli = [3u64, 5, 7];
        // inclusion–exclusion over subsets, exact
        let mut exact = Ratio::new(0i64, 1);
        for mask in 1u32..(1 << moduli.len()) {
            let mut l = 1i64;
            for (k, m) in moduli.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    l = num_lcm(l, *m as i64);
                }
            }
            let sign = if mask.count_ones() % 2 == 1 { 1 } else { -1 };
            exact += Ratio::new(sign, l);
        }
        let exact = *exact.numer() as f64 / *exact.denom() as f64;
        for &h in &[1_000u64, 10_000, 100_000] {
            let u = EventSet::from_predicate(h, |i| moduli.iter().any(|m| i % m == 0));
            let est = u.densities().natural_f64();
            // one partial period of the lcm is the only error source
            assert!((est - exact).abs() <= 105.0 / h as f64, "h={h}");
        }
    }

    fn num_lcm(a: i64, b: i64) -> i64 {
        fn gcd(a: i64, b: i64) -> i64 {
            if b == 0 { a } else { gcd(b, a % b) }
        }
        a / gcd(a, b) * b
    }
}
