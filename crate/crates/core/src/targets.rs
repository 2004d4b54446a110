//! Shrinking target sets: cylinders of generic and periodic points, and the
//! components of `T^{-(k+1)}[0, c_n]` around preimages of zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lsv::{point_from_word, pull_back, BoundaryTable, InducedState, SymbolWord, WordMode};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!("empty or invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && y <= self.hi
    }

    pub fn is_within(&self, outer: &Interval) -> bool {
        self.lo >= outer.lo && self.hi <= outer.hi
    }
}

/// The inducing set `Y = [1/2, 1]`.
pub const INDUCING_SET: Interval = Interval { lo: 0.5, hi: 1.0 };

/// What kind of point the target shrinks to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PointClass {
    Generic {
        x: f64,
    },
    Periodic {
        x: f64,
        q: usize,
        period: SymbolWord,
        derivative: f64,
    },
    PreimageZero {
        z: f64,
        zword: SymbolWord,
        k: usize,
    },
}

impl PointClass {
    pub fn anchor(&self) -> f64 {
        match self {
            PointClass::Generic { x } | PointClass::Periodic { x, .. } => *x,
            PointClass::PreimageZero { z, .. } => *z,
        }
    }

    /// Extremal index `1 - 1/(T^q)'(x)` (1 for non-periodic points).
    pub fn extremal_index(&self) -> f64 {
        match self {
            PointClass::Periodic { derivative, .. } => 1.0 - 1.0 / derivative,
            _ => 1.0,
        }
    }
}

/// A rare-event set `B_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTarget {
    pub interval: Interval,
    /// Cylinder word (for preimage targets: the prefix `z_0..z_{k-1} 0`).
    pub word: SymbolWord,
    pub depth: usize,
    pub point_class: PointClass,
}

impl IntervalTarget {
    pub fn lo(&self) -> f64 {
        self.interval.lo
    }

    pub fn hi(&self) -> f64 {
        self.interval.hi
    }

    pub fn within_inducing_set(&self) -> bool {
        self.interval.is_within(&INDUCING_SET)
    }
}

/// `B = U ⊔ Q` for a periodic target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSplit {
    /// Points returning to `B` after exactly `q` steps.
    pub u: Interval,
    /// Escape part, one or two intervals.
    pub q: Vec<Interval>,
}

/// Interval realised by a word: the last cell pulled back along the prefix.
pub fn cylinder_of_word(table: &BoundaryTable, word: &SymbolWord) -> Result<Interval> {
    let s = word.symbols();
    let (&last, prefix) = s.split_last().ok_or_else(|| invalid("empty word"))?;
    let hi = table.boundary(last);
    let lo = table.boundary(last + 1);
    let params = table.params();
    Interval::new(
        pull_back(params, prefix, lo)?,
        pull_back(params, prefix, hi)?,
    )
}

/// `ξ_n(x)`: the depth-`n` cylinder containing `x`.
///
/// ```
/// use frep::lsv::{build_boundary_table, MapParams};
/// use frep::targets::cylinder_of_point;
/// let table = build_boundary_table(&MapParams::new(2.0).unwrap(), 10).unwrap();
/// let b = cylinder_of_point(&table, 1.0, 3).unwrap();
/// assert_eq!((b.lo(), b.hi()), (0.875, 1.0));
/// assert_eq!(b.word.symbols(), &[0, 0, 0]);
/// ```
pub fn cylinder_of_point(table: &BoundaryTable, x: f64, n: usize) -> Result<IntervalTarget> {
    if n == 0 {
        return Err(invalid("depth must be >= 1"));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
        });
    }
    let params = table.params();
    let mut symbols = Vec::with_capacity(n);
    let mut y = x;
    let mut derivative = 1.0_f64;
    for step in 0..n {
        let tol = 1e-13 + 8.0 * f64::EPSILON * derivative;
        if y <= tol {
            return Err(Error::GrazingOrbit { step, value: y });
        }
        let a = if y >= 0.5 { 0 } else { table.locate_cell(y)? };
        let upper = table.boundary(a);
        let lower = table.boundary(a + 1);
        let near_lower = y - lower < tol;
        let near_upper = a > 0 && upper - y < tol;
        if near_lower || near_upper {
            return Err(Error::GrazingOrbit { step, value: y });
        }
        symbols.push(a);
        let (next, d) = crate::lsv::evaluate_map(params, y)?;
        y = next;
        derivative *= d;
    }
    let word = SymbolWord::new(symbols)?;
    let interval = cylinder_of_word(table, &word)?;
    let slack = 1e-12;
    if x < interval.lo - slack || x > interval.hi + slack {
        return Err(Error::GrazingOrbit { step: n, value: x });
    }
    Ok(IntervalTarget {
        interval,
        word,
        depth: n,
        point_class: PointClass::Generic { x },
    })
}

/// Depth-`n` cylinder of the periodic point coded by `period`.
pub fn periodic_target(
    table: &BoundaryTable,
    period: &SymbolWord,
    n: usize,
) -> Result<IntervalTarget> {
    if n == 0 {
        return Err(invalid("depth must be >= 1"));
    }
    let (x, derivative) = point_from_word(table.params(), period, WordMode::Periodic)?;
    let word = period.periodic_prefix(n)?;
    let interval = cylinder_of_word(table, &word)?;
    Ok(IntervalTarget {
        interval,
        word,
        depth: n,
        point_class: PointClass::Periodic {
            x,
            q: period.len(),
            period: period.clone(),
            derivative,
        },
    })
}

/// `[z_0..z_{k-1} 0 (≥ n)]`: `[0, c_n]` pulled back by `T_2^{-1}` and then along `zword`.
///
/// ```
/// use frep::lsv::{build_boundary_table, MapParams, SymbolWord};
/// use frep::targets::preimage_component;
/// let table = build_boundary_table(&MapParams::new(1.0).unwrap(), 10).unwrap();
/// let b = preimage_component(&table, &SymbolWord::new(vec![0]).unwrap(), 1).unwrap();
/// assert_eq!((b.lo(), b.hi()), (0.75, 0.875));
/// ```
pub fn preimage_component(
    table: &BoundaryTable,
    zword: &SymbolWord,
    n: usize,
) -> Result<IntervalTarget> {
    if n == 0 {
        return Err(invalid("depth must be >= 1"));
    }
    let word = zword.extended(&[0])?;
    let params = table.params();
    let delta = 0.5 * (1.0 + table.boundary(n as u64));
    let lo = pull_back(params, zword.symbols(), 0.5)?;
    let hi = pull_back(params, zword.symbols(), delta)?;
    Ok(IntervalTarget {
        interval: Interval::new(lo, hi)?,
        word,
        depth: n,
        point_class: PointClass::PreimageZero {
            z: lo,
            zword: zword.clone(),
            k: zword.len(),
        },
    })
}

/// Splits a periodic target into the immediate-return part `U` and the escape part `Q`.
pub fn split_annulus(
    table: &BoundaryTable,
    target: &IntervalTarget,
    q: usize,
) -> Result<AnnulusSplit> {
    let period = match &target.point_class {
        PointClass::Periodic { period, q: qq, .. } if *qq == q => period,
        _ => {
            return Err(invalid(
                "split_annulus needs a periodic target of the given period",
            ))
        }
    };
    let n = target.depth;
    let a = target.word.symbols();
    for j in 1..q {
        if j >= n || (0..n - j).all(|i| a[i + j] == a[i]) {
            return Err(Error::DepthTooSmall { depth: n, q });
        }
    }
    let u = cylinder_of_word(table, &period.periodic_prefix(n + q)?)?;
    let b = target.interval;
    let mut pieces = Vec::with_capacity(2);
    if u.lo > b.lo {
        pieces.push(Interval { lo: b.lo, hi: u.lo });
    }
    if u.hi < b.hi {
        pieces.push(Interval { lo: u.hi, hi: b.hi });
    }
    Ok(AnnulusSplit { u, q: pieces })
}

/// `τ_n(x) = min{ i ≥ n-1 : T^i x ∈ Y }`, via induced-step clocks.
pub fn tau_of_point(table: &BoundaryTable, x: f64, n: usize) -> Result<u64> {
    if n == 0 {
        return Err(invalid("depth must be >= 1"));
    }
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::Domain {
            what: "x",
            value: x,
        });
    }
    let target = (n - 1) as u64;
    let mut state = if x >= 0.5 {
        InducedState { y: x, clock: 0 }
    } else {
        let (k, exit) = table.excursion(x)?;
        InducedState { y: exit, clock: k }
    };
    while state.clock < target {
        state = table.induced_step(state)?.0;
    }
    Ok(state.clock)
}

/// Uniform point of `Y` whose depth-`depth` cylinder is numerically well defined.
pub fn generic_anchor<R: Rng + ?Sized>(
    table: &BoundaryTable,
    rng: &mut R,
    depth: usize,
) -> Result<f64> {
    for _ in 0..1000 {
        let x = rng.random_range(0.5..1.0);
        if cylinder_of_point(table, x, depth).is_ok() {
            return Ok(x);
        }
    }
    Err(invalid("no non-grazing generic anchor found"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsv::{build_boundary_table, evaluate_map, MapParams};
    use crate::rng::trial_rng;

    fn table(p: f64) -> BoundaryTable {
        build_boundary_table(&MapParams::new(p).unwrap(), 10_000).unwrap()
    }

    #[test]
    fn fixed_point_cylinders() {
        let t = table(2.0);
        let b1 = cylinder_of_point(&t, 1.0, 1).unwrap();
        assert_eq!((b1.lo(), b1.hi()), (0.5, 1.0));
        assert_eq!(b1.word.symbols(), &[0]);
    }

    #[test]
    fn preimage_of_zero_is_e_n() {
        let t = table(2.0);
        for n in [1usize, 5, 100, 50_000] {
            let e = preimage_component(&t, &SymbolWord::new(vec![]).unwrap(), n).unwrap();
            assert_eq!(e.lo(), 0.5);
            assert!((e.hi() - 0.5 * (1.0 + t.boundary(n as u64))).abs() < 1e-16);
            let e2 = preimage_component(&t, &SymbolWord::new(vec![]).unwrap(), n + 1).unwrap();
            assert!(e2.interval.is_within(&e.interval));
        }
        assert!(preimage_component(&t, &SymbolWord::new(vec![2]).unwrap(), 3).is_err());
    }

    #[test]
    fn annulus_of_fixed_point() {
        let t = table(2.0);
        let b = periodic_target(&t, &SymbolWord::new(vec![0]).unwrap(), 2).unwrap();
        assert_eq!((b.lo(), b.hi()), (0.75, 1.0));
        let s = split_annulus(&t, &b, 1).unwrap();
        assert_eq!((s.u.lo, s.u.hi), (0.875, 1.0));
        assert_eq!(
            s.q,
            vec![Interval {
                lo: 0.75,
                hi: 0.875
            }]
        );
        for n in [4usize, 10, 20] {
            let b = periodic_target(&t, &SymbolWord::new(vec![0]).unwrap(), n).unwrap();
            let s = split_annulus(&t, &b, 1).unwrap();
            assert!((s.u.length() / b.interval.length() - 0.5).abs() < 1e-12);
            let direct = periodic_target(&t, &SymbolWord::new(vec![0]).unwrap(), n + 1).unwrap();
            assert!((direct.lo() - s.u.lo).abs() < 1e-12 && (direct.hi() - s.u.hi).abs() < 1e-12);
        }
    }

    #[test]
    fn annulus_needs_separation() {
        let t = table(2.0);
        let period = SymbolWord::new(vec![0, 1]).unwrap();
        let b = periodic_target(&t, &period, 1).unwrap();
        assert!(matches!(
            split_annulus(&t, &b, 2),
            Err(Error::DepthTooSmall { .. })
        ));
        let b = periodic_target(&t, &period, 6).unwrap();
        let s = split_annulus(&t, &b, 2).unwrap();
        let total: f64 = s.u.length() + s.q.iter().map(|i| i.length()).sum::<f64>();
        assert!((total - b.interval.length()).abs() < 1e-15);
    }

    #[test]
    fn tau_examples() {
        let t = table(2.0);
        for n in [1usize, 2, 7, 30] {
            assert_eq!(tau_of_point(&t, 1.0, n).unwrap(), (n - 1) as u64);
        }
        let mp = *t.params();
        let mut rng = trial_rng(3, 0, 0);
        for _ in 0..200 {
            let x: f64 = rng.random_range(0.0..1.0);
            let n = rng.random_range(1..40usize);
            let tau = tau_of_point(&t, x, n).unwrap();
            // Brute force on the raw orbit (short horizons keep rounding harmless).
            let mut y = x;
            let mut i = 0u64;
            while !(i + 1 >= n as u64 && y >= 0.5) {
                y = evaluate_map(&mp, y).unwrap().0;
                i += 1;
                if i > 1_000_000 {
                    break;
                }
            }
            if i <= 1_000_000 {
                assert_eq!(tau, i, "x={x} n={n}");
            }
        }
    }
}
