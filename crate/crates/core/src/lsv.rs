//! The LSV map `T(x) = x + 2^p x^{p+1}` on `[0, 1/2)`, `2x - 1` on `[1/2, 1]`,
//! its symbolic coding, and the first-return map to `Y = [1/2, 1]`.
//!
//! Long neutral excursions are traversed in O(1) with an asymptotic Abel
//! function (Fatou coordinate) `Φ` of the lower branch, normalised so that
//! `Φ(c_k) = k` and `Φ(T_1 x) = Φ(x) - 1`. Near zero `Φ` is evaluated from its
//! asymptotic series in `u = x^{-p}`; on the fundamental domain `[1/2, 1]` its
//! inverse is tabulated by pushing a deep grid forward.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum PowKind {
    Int(i32),
    Half(i32),
    General,
}

impl PowKind {
    fn of(p: f64) -> Self {
        if p.fract() == 0.0 && p <= 16.0 {
            PowKind::Int(p as i32)
        } else if (2.0 * p).fract() == 0.0 && p <= 16.0 {
            PowKind::Half(p.floor() as i32)
        } else {
            PowKind::General
        }
    }
}

/// Map exponent `p >= 1` and the regular-variation index `alpha = 1/p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    p: f64,
    alpha: f64,
    #[serde(skip_serializing, default = "default_kind")]
    kind: PowKind,
}

fn default_kind() -> PowKind {
    PowKind::General
}

impl MapParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(invalid(format!(
                "map exponent p = {p} must be finite and >= 1"
            )));
        }
        Ok(MapParams {
            p,
            alpha: 1.0 / p,
            kind: PowKind::of(p),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `z^p` for `z >= 0`.
    #[inline]
    fn pow_p(&self, z: f64) -> f64 {
        match self.kind {
            PowKind::Int(1) => z,
            PowKind::Int(2) => z * z,
            PowKind::Int(n) => z.powi(n),
            PowKind::Half(n) => z.powi(n) * z.sqrt(),
            PowKind::General => z.powf(self.p),
        }
    }

    /// Lower branch `T_1(x) = x (1 + (2x)^p)`.
    #[inline]
    pub fn lower(&self, x: f64) -> f64 {
        x * (1.0 + self.pow_p(2.0 * x))
    }

    #[inline]
    fn lower_with_derivative(&self, x: f64) -> (f64, f64) {
        let z = self.pow_p(2.0 * x);
        (x * (1.0 + z), 1.0 + (self.p + 1.0) * z)
    }
}

/// Which of the two monotone branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `T_1` on `[0, 1/2]`.
    Lower,
    /// `T_2` on `[1/2, 1]`.
    Upper,
}

fn check_unit(what: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { what, value: x })
    }
}

/// `(T(x), T'(x))`.
///
/// ```
/// use frep::lsv::{evaluate_map, MapParams};
/// let p1 = MapParams::new(1.0).unwrap();
/// assert_eq!(evaluate_map(&p1, 0.25).unwrap(), (0.375, 2.0));
/// ```
pub fn evaluate_map(params: &MapParams, x: f64) -> Result<(f64, f64)> {
    check_unit("x", x)?;
    if x < 0.5 {
        Ok(params.lower_with_derivative(x))
    } else {
        Ok((2.0 * x - 1.0, 2.0))
    }
}

/// Inverse of one branch: the `x` in the branch domain with `T(x) = y`.
pub fn inverse_branch(params: &MapParams, branch: Branch, y: f64) -> Result<f64> {
    check_unit("y", y)?;
    match branch {
        Branch::Upper => Ok(0.5 * (y + 1.0)),
        Branch::Lower => inverse_lower(params, y),
    }
}

/// Newton on the convex increasing `f(x) = T_1(x) - y`, started to the right
/// of the root so iterates decrease monotonically; bisection if that fails.
fn inverse_lower(params: &MapParams, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0_f64;
    let mut x = y.min(0.5);
    for _ in 0..200 {
        let (fx, dfx) = params.lower_with_derivative(x);
        let r = fx - y;
        if r <= 0.0 {
            if r == 0.0 || lo == x {
                return Ok(x);
            }
            lo = x;
        }
        let step = r / dfx;
        let next = x - step;
        if !(next > lo && next < x) || step.abs() <= 1e-17 * x.max(1e-300) {
            if r > 0.0 && next <= lo {
                x = 0.5 * (lo + x);
                continue;
            }
            return Ok(next.clamp(lo, x));
        }
        x = next;
    }
    Err(Error::NoConvergence {
        what: "inverse lower branch",
        lo,
        hi: x,
    })
}

/// `x - T_1^{-1}(x)`, computed without cancellation near zero.
pub fn lower_gap(params: &MapParams, x: f64) -> Result<f64> {
    check_unit("x", x)?;
    // d solves d = y (2y)^p with y = x - d; concave increasing residual in d,
    // so Newton from d = 0 increases monotonically to the root.
    let mut d = 0.0_f64;
    for _ in 0..200 {
        let y = x - d;
        let z = params.pow_p(2.0 * y);
        let h = d - y * z;
        let dh = 1.0 + (params.p + 1.0) * z;
        let step = -h / dh;
        d += step;
        if step.abs() <= 1e-12 * d {
            return Ok(d.max(0.0));
        }
    }
    Err(Error::NoConvergence {
        what: "lower gap",
        lo: 0.0,
        hi: d,
    })
}

/// An admissible symbol sequence: `a_{i+1} = a_i - 1` or `a_i = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolWord {
    symbols: Vec<u64>,
}

fn admissible_pair(a: u64, b: u64) -> bool {
    a == 0 || b + 1 == a
}

impl SymbolWord {
    pub fn new(symbols: Vec<u64>) -> Result<Self> {
        for (i, w) in symbols.windows(2).enumerate() {
            if !admissible_pair(w[0], w[1]) {
                return Err(Error::InadmissibleWord { position: i + 1 });
            }
        }
        Ok(SymbolWord { symbols })
    }

    pub fn symbols(&self) -> &[u64] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Whether the infinite repetition of this word is admissible.
    pub fn is_cyclically_admissible(&self) -> bool {
        match (self.symbols.last(), self.symbols.first()) {
            (Some(&last), Some(&first)) => admissible_pair(last, first),
            _ => false,
        }
    }

    /// First `n` symbols of the periodic repetition.
    pub fn periodic_prefix(&self, n: usize) -> Result<SymbolWord> {
        if !self.is_cyclically_admissible() {
            return Err(Error::InadmissibleWord {
                position: self.len(),
            });
        }
        let q = self.len();
        SymbolWord::new((0..n).map(|i| self.symbols[i % q]).collect())
    }

    pub fn prefix(&self, n: usize) -> SymbolWord {
        SymbolWord {
            symbols: self.symbols[..n.min(self.len())].to_vec(),
        }
    }

    pub fn extended(&self, tail: &[u64]) -> Result<SymbolWord> {
        let mut s = self.symbols.clone();
        s.extend_from_slice(tail);
        SymbolWord::new(s)
    }
}

fn branch_of(symbol: u64) -> Branch {
    if symbol == 0 {
        Branch::Upper
    } else {
        Branch::Lower
    }
}

/// Pulls `y` back along `word`: `T^{-1}_{σ(a_0)} ∘ … ∘ T^{-1}_{σ(a_{k-1})}(y)`.
pub fn pull_back(params: &MapParams, word: &[u64], y: f64) -> Result<f64> {
    let mut x = y;
    for &a in word.iter().rev() {
        x = inverse_branch(params, branch_of(a), x)?;
    }
    Ok(x)
}

/// How `point_from_word` reads the word.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WordMode {
    /// Fixed point of the inverse-branch cycle of the word.
    Periodic,
    /// Pull-back of the given anchor along the word.
    Finite { anchor: f64 },
}

/// Point coded by a word and `(T^k)'(x)` along the word.
///
/// ```
/// use frep::lsv::{point_from_word, MapParams, SymbolWord, WordMode};
/// let params = MapParams::new(2.0).unwrap();
/// let fixed = SymbolWord::new(vec![0]).unwrap();
/// let (x, d) = point_from_word(&params, &fixed, WordMode::Periodic).unwrap();
/// assert_eq!((x, d), (1.0, 2.0));
/// let pre = SymbolWord::new(vec![0, 0]).unwrap();
/// let (z, _) = point_from_word(&params, &pre, WordMode::Finite { anchor: 0.0 }).unwrap();
/// assert_eq!(z, 0.75);
/// ```
pub fn point_from_word(
    params: &MapParams,
    word: &SymbolWord,
    mode: WordMode,
) -> Result<(f64, f64)> {
    if word.is_empty() {
        return Err(invalid("empty word"));
    }
    let x = match mode {
        WordMode::Finite { anchor } => {
            check_unit("anchor", anchor)?;
            pull_back(params, word.symbols(), anchor)?
        }
        WordMode::Periodic => {
            if !word.is_cyclically_admissible() {
                return Err(Error::InadmissibleWord {
                    position: word.len(),
                });
            }
            let mut x = 0.75;
            let mut converged = false;
            for _ in 0..10_000 {
                let next = pull_back(params, word.symbols(), x)?;
                let delta = (next - x).abs();
                x = next;
                if delta <= 1e-16 {
                    converged = true;
                    break;
                }
            }
            assert!(converged, "inverse-branch cycle failed to contract");
            x
        }
    };
    let mut derivative = 1.0;
    let mut y = x;
    for &a in word.symbols() {
        let (next, d) = if a == 0 {
            (2.0 * y - 1.0, 2.0)
        } else {
            params.lower_with_derivative(y)
        };
        derivative *= d;
        y = next.clamp(0.0, 1.0);
    }
    Ok((x, derivative))
}

/// Asymptotic Abel function of the lower branch in `u = x^{-p}`:
/// `Ψ(u) = u/D + β ln u + Σ_j γ_j u^{-j}` with `Ψ(g(u)) = Ψ(u) - 1`, where
/// `g(u) = u (1 + 2^p/u)^{-p}` is the lower branch in that coordinate.
#[derive(Debug, Clone)]
struct AbelSeries {
    d: f64,
    beta: f64,
    gamma: Vec<f64>,
}

fn binom(r: f64, i: usize) -> f64 {
    (0..i).fold(1.0, |acc, l| acc * (r - l as f64) / (l as f64 + 1.0))
}

impl AbelSeries {
    fn new(p: f64, terms: usize) -> Self {
        let a = 2f64.powf(p);
        let d = p * a;
        let beta = (p + 1.0) / (2.0 * p);
        // Order v^m of Ψ(g) - Ψ(u) + 1 = 0, v = 1/u:
        //   b_{m+1}/D + β L_m + Σ_{j<m} γ_j C(pj, m-j) a^{m-j} = 0,
        // with b_j = C(-p, j) a^j and L_m = -p (-1)^{m+1} a^m / m.
        let mut gamma = vec![0.0; terms];
        for m in 2..=terms + 1 {
            let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
            let l_m = -p * sign * a.powi(m as i32) / m as f64;
            let mut acc = binom(-p, m + 1) * a.powi(m as i32 + 1) / d + beta * l_m;
            for j in 1..m - 1 {
                acc += gamma[j - 1] * binom(p * j as f64, m - j) * a.powi((m - j) as i32);
            }
            gamma[m - 2] = -acc / (p * (m - 1) as f64 * a);
        }
        AbelSeries { d, beta, gamma }
    }

    fn psi(&self, u: f64) -> f64 {
        let v = 1.0 / u;
        let tail = self.gamma.iter().rev().fold(0.0, |acc, &g| (acc + g) * v);
        u / self.d + self.beta * u.ln() + tail
    }

    fn psi_prime(&self, u: f64) -> f64 {
        let v = 1.0 / u;
        let n = self.gamma.len();
        let mut acc = 0.0;
        for j in (1..=n).rev() {
            acc = acc * v + j as f64 * self.gamma[j - 1];
        }
        1.0 / self.d + self.beta * v - acc * v * v
    }

    /// Solves `Ψ(u) = target` for large `target`.
    fn psi_inverse(&self, target: f64) -> f64 {
        let mut u = (self.d * target).max(1.0);
        for _ in 0..100 {
            let step = (self.psi(u) - target) / self.psi_prime(u);
            u -= step;
            if step.abs() <= 1e-15 * u {
                break;
            }
        }
        u
    }
}

/// Tuning for the induced step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitOptions {
    /// Excursions with at most this many lower-branch steps are iterated exactly.
    pub k_iter: u64,
    /// Excursions longer than this are reported as overflow.
    pub k_cap: u64,
}

impl Default for TransitOptions {
    fn default() -> Self {
        TransitOptions {
            k_iter: 12,
            k_cap: 1_000_000_000_000_000,
        }
    }
}

/// Depth at which the exit-point table is seeded.
const EXIT_SEED_DEPTH: u64 = 600;
/// Resolution of the exit-point table on the fundamental domain.
const EXIT_GRID: usize = 4096;
/// Shallowest depth at which the Abel series is trusted (error < 1e-9 there).
const MIN_K_ITER: u64 = 8;
/// Boundaries are always computed at least this deep for exact cell search.
const MIN_SEARCH_DEPTH: usize = 4096;
/// Beyond this Abel value the fractional part carries fewer than 12 bits.
const DEEP_PHI: f64 = 1_099_511_627_776.0;

/// Diagnostics of the calibration of the asymptotic tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Additive offset of the Abel series, fitted on depths 256..4096.
    pub offset: f64,
    /// Largest `|Φ(c_k) - k|` over the last decade of the table.
    pub max_abs_residual: f64,
    /// Largest relative deviation of the tail estimate from `c_k` over the last decade.
    pub max_rel_deviation: f64,
}

/// The boundaries `c_0 = 1 > c_1 = 1/2 > … > c_K`, the asymptotic tail beyond
/// `K`, and everything the induced step needs.
#[derive(Debug, Clone)]
pub struct BoundaryTable {
    params: MapParams,
    c: Vec<f64>,
    k_exact: usize,
    series: AbelSeries,
    tail: TailFit,
    exit_values: Vec<f64>,
    exit_slopes: Vec<f64>,
    options: TransitOptions,
}

/// State of the induced chain on `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InducedState {
    pub y: f64,
    pub clock: u64,
}

/// Builds `c_0..c_K` by exact inversion and calibrates the asymptotic tail.
pub fn build_boundary_table(params: &MapParams, k_max: usize) -> Result<BoundaryTable> {
    BoundaryTable::new(params, k_max, TransitOptions::default())
}

impl BoundaryTable {
    pub fn new(params: &MapParams, k_max: usize, options: TransitOptions) -> Result<Self> {
        if k_max < 2 {
            return Err(invalid("boundary table needs K >= 2"));
        }
        let k_exact = k_max;
        let k_max = k_max.max(MIN_SEARCH_DEPTH);
        let mut c = Vec::with_capacity(k_max + 1);
        c.push(1.0);
        c.push(0.5);
        for k in 1..k_max {
            let ck = c[k];
            c.push(ck - lower_gap(params, ck)?);
        }
        let series = AbelSeries::new(params.p, 12);
        // The offset is fitted where both the series and the table are accurate
        // to ~1e-12; the last decade is then used as an out-of-sample check.
        let calib: Vec<f64> = (256..=MIN_SEARCH_DEPTH)
            .step_by(16)
            .map(|k| k as f64 - series.psi(c[k].powf(-params.p)))
            .collect();
        let offset = calib.iter().sum::<f64>() / calib.len() as f64;
        let lo = k_max / 10;
        let stride = ((k_max - lo) / 2000).max(1);
        let idx: Vec<usize> = (lo..=k_max).step_by(stride).collect();
        let max_abs_residual = idx
            .iter()
            .map(|&k| (k as f64 - series.psi(c[k].powf(-params.p)) - offset).abs())
            .fold(0.0, f64::max);
        let mut table = BoundaryTable {
            params: *params,
            c,
            k_exact,
            series,
            tail: TailFit {
                offset,
                max_abs_residual,
                max_rel_deviation: 0.0,
            },
            exit_values: Vec::new(),
            exit_slopes: Vec::new(),
            options,
        };
        table.tail.max_rel_deviation = idx
            .iter()
            .map(|&k| (table.tail_estimate(k as f64) / table.c[k] - 1.0).abs())
            .fold(0.0, f64::max);
        table.build_exit_table();
        table.options.k_iter = table.options.k_iter.max(MIN_K_ITER);
        Ok(table)
    }

    fn build_exit_table(&mut self) {
        let m = EXIT_SEED_DEPTH;
        let mut values = Vec::with_capacity(EXIT_GRID + 1);
        let mut slopes = Vec::with_capacity(EXIT_GRID + 1);
        for i in 0..=EXIT_GRID {
            let s = i as f64 / EXIT_GRID as f64;
            let u = self.series.psi_inverse(m as f64 + s - self.tail.offset);
            let x0 = u.powf(-self.params.alpha);
            let dphi_dx = -self.params.p * u / x0 * self.series.psi_prime(u);
            let mut x = x0;
            let mut deriv = 1.0;
            for _ in 0..m {
                let (nx, d) = self.params.lower_with_derivative(x);
                x = nx;
                deriv *= d;
            }
            values.push(x);
            slopes.push(deriv / dphi_dx);
        }
        // Pin the ends to the exact boundaries Φ(c_0) = 0, Φ(c_1) = 1.
        values[0] = 1.0;
        values[EXIT_GRID] = 0.5;
        self.exit_values = values;
        self.exit_slopes = slopes;
    }

    pub fn params(&self) -> &MapParams {
        &self.params
    }

    pub fn options(&self) -> TransitOptions {
        self.options
    }

    /// Requested table size `K`.
    pub fn k_max(&self) -> usize {
        self.k_exact
    }

    /// Exact boundaries `c_0..c_K`.
    pub fn exact(&self) -> &[f64] {
        &self.c[..=self.k_exact]
    }

    /// Depth down to which cells are located by exact search.
    pub fn search_depth(&self) -> usize {
        self.c.len() - 1
    }

    pub fn tail_fit(&self) -> TailFit {
        self.tail
    }

    /// `c_k`, from the table when stored and from the tail model otherwise.
    pub fn boundary(&self, k: u64) -> f64 {
        if (k as usize) < self.c.len() {
            self.c[k as usize]
        } else {
            self.tail_estimate(k as f64)
        }
    }

    /// Tail model of `c_k` for real `k`.
    pub fn tail_estimate(&self, k: f64) -> f64 {
        self.series
            .psi_inverse(k - self.tail.offset)
            .powf(-self.params.alpha)
    }

    /// Abel coordinate `Φ(x)` for `x` near zero (accurate below `c_{k_iter}`).
    pub fn abel(&self, x: f64) -> f64 {
        self.series.psi(x.powf(-self.params.p)) + self.tail.offset
    }

    /// Cell index `k` with `c_{k+1} <= x < c_k`.
    pub fn locate_cell(&self, x: f64) -> Result<u64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain {
                what: "x",
                value: x,
            });
        }
        if x >= 0.5 {
            return Ok(0);
        }
        let k_max = self.search_depth();
        if x >= self.c[k_max] {
            return Ok(self.search(x));
        }
        let phi = self.abel(x);
        if phi >= u64::MAX as f64 {
            return Err(Error::ExcursionOverflow { k_estimate: phi });
        }
        Ok(((phi.ceil() - 1.0) as u64).max(k_max as u64))
    }

    /// Galloping search for `x` in `[c_K, 1/2)`.
    fn search(&self, x: f64) -> u64 {
        let c = &self.c;
        let k_max = c.len() - 1;
        let mut hi = 2usize;
        while hi < k_max && c[hi] > x {
            hi = (hi * 2).min(k_max);
        }
        // c[hi] <= x < c[lo]
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if c[mid] > x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo as u64
    }

    fn exit_point(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        let n = EXIT_GRID as f64;
        let pos = s * n;
        let i = (pos.floor() as usize).min(EXIT_GRID - 1);
        let t = pos - i as f64;
        let h = 1.0 / n;
        let (y0, y1) = (self.exit_values[i], self.exit_values[i + 1]);
        let (m0, m1) = (self.exit_slopes[i] * h, self.exit_slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let y = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        y.clamp(0.5, 1.0)
    }

    /// For `w` in `(0, 1/2)`: the cell index `k` and the exit point
    /// `T_1^k(w) ∈ [1/2, 1]`.
    pub fn excursion(&self, w: f64) -> Result<(u64, f64)> {
        if !(w > 0.0 && w < 0.5) {
            if w == 0.0 {
                return Err(Error::ExcursionOverflow {
                    k_estimate: f64::INFINITY,
                });
            }
            return Err(Error::Domain {
                what: "w",
                value: w,
            });
        }
        let k_max = self.search_depth();
        let (k, phi) = if w >= self.c[k_max] {
            (self.search(w), None)
        } else {
            let phi = self.abel(w);
            if phi > self.options.k_cap as f64 + 1.0 {
                return Err(Error::ExcursionOverflow { k_estimate: phi });
            }
            (((phi.ceil() - 1.0) as u64).max(k_max as u64), Some(phi))
        };
        if k > self.options.k_cap {
            return Err(Error::ExcursionOverflow {
                k_estimate: k as f64,
            });
        }
        if k <= self.options.k_iter {
            let mut x = w;
            for _ in 0..k {
                x = self.params.lower(x);
            }
            return Ok((k, x.clamp(0.5, 1.0)));
        }
        let phi = phi.unwrap_or_else(|| self.abel(w));
        let s = if phi > DEEP_PHI {
            // The fractional part is lost to rounding; refresh it from the
            // bits of w (statistical shadowing).
            (mix64(w.to_bits()) >> 11) as f64 / (1u64 << 53) as f64
        } else {
            phi - k as f64
        };
        Ok((k, self.exit_point(s)))
    }

    /// One step of the first-return map to `Y`, returning the new state and `r_Y`.
    ///
    /// ```
    /// use frep::lsv::{build_boundary_table, InducedState, MapParams};
    /// let table = build_boundary_table(&MapParams::new(1.0).unwrap(), 2000).unwrap();
    /// let (next, r) = table.induced_step(InducedState { y: 0.65, clock: 0 }).unwrap();
    /// assert_eq!(r, 3);
    /// assert_eq!(next.clock, 3);
    /// assert!(next.y >= 0.5 && next.y <= 1.0);
    /// ```
    pub fn induced_step(&self, state: InducedState) -> Result<(InducedState, u64)> {
        let y = state.y;
        if !(0.5..=1.0).contains(&y) {
            return Err(Error::Domain {
                what: "y",
                value: y,
            });
        }
        let w = 2.0 * y - 1.0;
        if w >= 0.5 {
            return Ok((
                InducedState {
                    y: w,
                    clock: state.clock + 1,
                },
                1,
            ));
        }
        let (k, exit) = self.excursion(w)?;
        let r = k + 1;
        let clock = state.clock.checked_add(r).ok_or(Error::ExcursionOverflow {
            k_estimate: k as f64,
        })?;
        Ok((InducedState { y: exit, clock }, r))
    }
}

/// Raw forward iteration of the lower branch from `w < 1/2` until the orbit
/// reaches `[1/2, 1]`; `None` if that takes more than `limit` steps.
pub fn brute_force_excursion(params: &MapParams, w: f64, limit: u64) -> Option<(u64, f64)> {
    let mut x = w;
    let mut k = 0;
    while x < 0.5 {
        if k == limit {
            return None;
        }
        x = params.lower(x);
        k += 1;
    }
    Some((k, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(p: f64) -> BoundaryTable {
        build_boundary_table(&MapParams::new(p).unwrap(), 20_000).unwrap()
    }

    #[test]
    fn map_examples() {
        let p2 = MapParams::new(2.0).unwrap();
        assert_eq!(evaluate_map(&p2, 0.0).unwrap(), (0.0, 1.0));
        assert_eq!(evaluate_map(&p2, 0.75).unwrap(), (0.5, 2.0));
        assert!(evaluate_map(&p2, 1.5).is_err());
        assert!(evaluate_map(&p2, f64::NAN).is_err());
        assert!(MapParams::new(0.5).is_err());
    }

    #[test]
    fn inverse_examples() {
        for p in [1.0, 1.5, 2.0, 3.7] {
            let mp = MapParams::new(p).unwrap();
            assert_eq!(inverse_branch(&mp, Branch::Upper, 0.0).unwrap(), 0.5);
            assert_abs_diff_eq!(
                inverse_branch(&mp, Branch::Lower, 1.0).unwrap(),
                0.5,
                epsilon = 1e-15
            );
        }
        let p1 = MapParams::new(1.0).unwrap();
        let x = inverse_branch(&p1, Branch::Lower, 0.5).unwrap();
        assert_abs_diff_eq!(x, (5f64.sqrt() - 1.0) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn gap_matches_difference_where_well_conditioned() {
        let mp = MapParams::new(2.0).unwrap();
        for &x in &[0.9, 0.5, 0.2, 0.05] {
            let direct = x - inverse_branch(&mp, Branch::Lower, x).unwrap();
            assert_abs_diff_eq!(lower_gap(&mp, x).unwrap(), direct, epsilon = 1e-15);
        }
        // Near zero the gap is 2^p x^{p+1} to leading order.
        let x = 1e-6;
        let g = lower_gap(&mp, x).unwrap();
        assert!((g / (4.0 * x * x * x) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boundary_examples() {
        let t2 = table(2.0);
        assert_eq!(t2.exact()[0], 1.0);
        assert_eq!(t2.exact()[1], 0.5);
        assert_eq!(t2.locate_cell(0.6).unwrap(), 0);
        assert!(t2.locate_cell(0.0).is_err());
        let t1 = table(1.0);
        assert_abs_diff_eq!(t1.exact()[2], (5f64.sqrt() - 1.0) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn boundary_recursion() {
        for p in [1.0, 1.5, 2.0] {
            let t = table(p);
            let mp = t.params();
            for w in t.exact().windows(2) {
                assert!(w[1] < w[0]);
                assert!((mp.lower(w[1]) - w[0]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn abel_coordinate_matches_table() {
        for p in [1.0, 1.5, 2.0, 3.0] {
            let t = table(p);
            assert!(
                t.tail_fit().max_abs_residual < 1e-8,
                "p={p} {:?}",
                t.tail_fit()
            );
            for k in [8usize, 12, 100, 1000, 10_000] {
                let phi = t.abel(t.exact()[k]);
                assert!((phi - k as f64).abs() < 1e-8, "p={p} k={k} phi={phi}");
            }
        }
    }

    #[test]
    fn locate_cell_consistent_with_table_and_tail() {
        let t = table(2.0);
        for k in [1usize, 2, 7, 100, 19_999] {
            let mid = 0.5 * (t.exact()[k] + t.exact()[k + 1]);
            assert_eq!(t.locate_cell(mid).unwrap(), k as u64);
        }
        let deep = 0.5 * (t.tail_estimate(50_000.0) + t.tail_estimate(50_001.0));
        assert_eq!(t.locate_cell(deep).unwrap(), 50_000);
    }

    #[test]
    fn induced_step_examples() {
        let t1 = table(1.0);
        let (next, r) = t1.induced_step(InducedState { y: 0.8, clock: 5 }).unwrap();
        assert_abs_diff_eq!(next.y, 0.6, epsilon = 1e-15);
        assert_eq!((r, next.clock), (1, 6));
        let (s1, r1) = t1.induced_step(InducedState { y: 0.65, clock: 0 }).unwrap();
        assert_eq!(r1, 3);
        let (s2, r2) = t1
            .induced_step(InducedState {
                y: 0.9,
                clock: s1.clock,
            })
            .unwrap();
        assert_eq!((r2, s2.clock), (1, 4));
        assert!(t1.induced_step(InducedState { y: 0.5, clock: 0 }).is_err());
    }

    #[test]
    fn fast_transit_matches_brute_force() {
        for p in [1.0, 1.5, 2.0] {
            let t = table(p);
            let mp = *t.params();
            for k in [1u64, 7, 11, 13, 50, 200, 3000, 15_000, 40_000] {
                for frac in [0.1, 0.5, 0.93] {
                    let hi = t.boundary(k);
                    let lo = t.boundary(k + 1);
                    let w = lo + frac * (hi - lo);
                    let (kk, exit) = t.excursion(w).unwrap();
                    let (kb, exit_b) = brute_force_excursion(&mp, w, 1 << 30).unwrap();
                    assert_eq!(kk, kb, "p={p} k={k}");
                    assert!((exit - exit_b).abs() < 1e-8, "p={p} k={k} {exit} {exit_b}");
                }
            }
        }
    }

    #[test]
    fn periodic_points() {
        let mp = MapParams::new(2.0).unwrap();
        let w = SymbolWord::new(vec![0, 1]).unwrap();
        let (x, d) = point_from_word(&mp, &w, WordMode::Periodic).unwrap();
        let (y, d1) = evaluate_map(&mp, x).unwrap();
        let (z, d2) = evaluate_map(&mp, y).unwrap();
        assert!((z - x).abs() < 1e-12);
        assert!((d - d1 * d2).abs() < 1e-9 * d);
        assert!(y < 0.5 && x >= 0.5);
        let (h, d) = point_from_word(
            &mp,
            &SymbolWord::new(vec![0]).unwrap(),
            WordMode::Finite { anchor: 0.0 },
        )
        .unwrap();
        assert_eq!((h, d), (0.5, 2.0));
    }

    #[test]
    fn admissibility() {
        assert!(SymbolWord::new(vec![3, 2, 1, 0, 0, 5, 4]).is_ok());
        assert_eq!(
            SymbolWord::new(vec![3, 1]),
            Err(Error::InadmissibleWord { position: 1 })
        );
        assert!(SymbolWord::new(vec![0, 1])
            .unwrap()
            .is_cyclically_admissible());
        assert!(!SymbolWord::new(vec![0, 2])
            .unwrap()
            .is_cyclically_admissible());
    }
}
