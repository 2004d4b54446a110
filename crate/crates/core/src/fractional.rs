//! Riemann-Liouville integrals and Caputo derivatives by product
//! integration, the hitting-from-return transform, and residuals of the
//! compound fixed-point and Kolmogorov-Feller equations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Result};
use crate::laws::{
    sample_law, sample_renewal_process, EventSample, LawSpec, MittagLeffler, ReferenceCdf,
};
use crate::rng::trial_rng;

const STREAM_FIXED_POINT: u64 = 0x6669_7870;
const STREAM_COUNTS: u64 = 0x636e_7473;

/// Samples of a function on an increasing grid starting at 0, read as
/// piecewise linear in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.is_empty() {
            return Err(invalid("grid and values must have the same nonzero length"));
        }
        if !(grid[0] >= 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid must be nonnegative and strictly increasing"));
        }
        Ok(GridFunction { grid, values })
    }

    /// `f` sampled on `grid`.
    pub fn from_fn(grid: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        GridFunction::new(grid.to_vec(), grid.iter().map(|&t| f(t)).collect())
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation; constant extrapolation beyond the last point.
    pub fn eval(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= g[g.len() - 1] {
            return self.values[g.len() - 1];
        }
        let j = g.partition_point(|&x| x <= t);
        let (a, b) = (g[j - 1], g[j]);
        let w = (t - a) / (b - a);
        self.values[j - 1] * (1.0 - w) + self.values[j] * w
    }

    pub fn is_cdf_like(&self, tol: f64) -> bool {
        self.values.iter().all(|&v| v >= -tol && v <= 1.0 + tol)
            && self.values.windows(2).all(|w| w[1] >= w[0] - tol)
    }

    fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.grid != other.grid {
            return Err(invalid("grid functions live on different grids"));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }
}

/// `0, h, 2h, …, t_max` (the last step may be shorter).
pub fn uniform_grid(step: f64, t_max: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && t_max > 0.0) {
        return Err(invalid("grid step and length must be positive"));
    }
    let m = (t_max / step - 1e-9).ceil() as usize;
    Ok((0..=m).map(|j| (j as f64 * step).min(t_max)).collect())
}

fn check_origin(f: &GridFunction) -> Result<()> {
    if f.grid[0] == 0.0 {
        Ok(())
    } else {
        Err(invalid("the integrand grid must start at 0"))
    }
}

/// `t_max (j/m)^r` for `j = 0..=m`: steps shrink like `j^{r-1}` towards 0,
/// where fractional integrals of smooth data behave like `t^β`.
pub fn graded_grid(t_max: f64, m: usize, r: f64) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && m > 0 && r >= 1.0) {
        return Err(invalid("graded grid needs t_max > 0, m > 0 and r >= 1"));
    }
    Ok((0..=m)
        .map(|j| t_max * (j as f64 / m as f64).powf(r))
        .collect())
}

/// `∫_a^{min(b,t)} (t-x)^{β-1} dx` and `∫ (t-x)^β dx`, both undivided.
#[inline]
fn moments(t: f64, a: f64, b: f64, beta: f64) -> (f64, f64) {
    let big = t - a;
    let small = (t - b).max(0.0);
    let i0 = (big.powf(beta) - small.powf(beta)) / beta;
    let i1 = (big.powf(beta + 1.0) - small.powf(beta + 1.0)) / (beta + 1.0);
    (i0, i1)
}

/// `(I^β f)(t) = Γ(β)^{-1} ∫_0^t f(x) (t-x)^{β-1} dx` with `f` piecewise linear
/// and the kernel integrated exactly on each piece.
///
/// ```
/// use frep::fractional::{rl_integral, uniform_grid, GridFunction};
/// let grid = uniform_grid(0.1, 1.0).unwrap();
/// let one = GridFunction::from_fn(&grid, |_| 1.0).unwrap();
/// let i = rl_integral(&one, 0.5, &[0.5, 1.0]).unwrap();
/// let exact = |t: f64| t.sqrt() / statrs::function::gamma::gamma(1.5);
/// assert!((i.values()[0] - exact(0.5)).abs() < 1e-13);
/// assert!((i.values()[1] - exact(1.0)).abs() < 1e-13);
/// ```
pub fn rl_integral(f: &GridFunction, beta: f64, t_eval: &[f64]) -> Result<GridFunction> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid(format!("fractional order {beta} must be positive")));
    }
    check_origin(f)?;
    let norm = 1.0 / gamma(beta);
    let g = &f.grid;
    let values = t_eval
        .iter()
        .map(|&t| {
            let mut sum = 0.0;
            for j in 1..g.len() {
                let (a, b) = (g[j - 1], g[j]);
                if a >= t {
                    break;
                }
                let end = b.min(t);
                let fb = if b <= t { f.values[j] } else { f.eval(t) };
                let fa = f.values[j - 1];
                let (i0, i1) = moments(t, a, b, beta);
                let wb = ((t - a) * i0 - i1) / (end - a);
                sum += fa * (i0 - wb) + fb * wb;
            }
            sum * norm
        })
        .collect();
    GridFunction::new(t_eval.to_vec(), values)
}

/// Caputo derivative `I^{1-α} f'` with `f'` piecewise constant.
pub fn caputo_derivative(f: &GridFunction, alpha: f64, t_eval: &[f64]) -> Result<GridFunction> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("Caputo order {alpha} outside (0, 1)")));
    }
    let beta = 1.0 - alpha;
    check_origin(f)?;
    let norm = 1.0 / gamma(1.0 + beta);
    let g = &f.grid;
    let values = t_eval
        .iter()
        .map(|&t| {
            let mut sum = 0.0;
            for j in 1..g.len() {
                let (a, b) = (g[j - 1], g[j]);
                if a >= t {
                    break;
                }
                let slope = (f.values[j] - f.values[j - 1]) / (b - a);
                let small = (t - b).max(0.0);
                sum += slope * ((t - a).powf(beta) - small.powf(beta));
            }
            sum * norm
        })
        .collect();
    GridFunction::new(t_eval.to_vec(), values)
}

/// `F(t) = α ∫_0^t (g_{d-1}(x) - g_d(x)) (t-x)^{α-1} dx = Γ(1+α) I^α(g_{d-1} - g_d)(t)`
/// on a diagonal slice, where `g_{d-1}` is the level-`(d-1)` return CDF (the
/// constant 1 when `d = 1`) and `g_d` the level-`d` one.
///
/// ```
/// use frep::fractional::{hitting_from_return, uniform_grid, GridFunction};
/// let grid = uniform_grid(0.01, 1.0).unwrap();
/// let one = GridFunction::from_fn(&grid, |_| 1.0).unwrap();
/// let zero = GridFunction::from_fn(&grid, |_| 0.0).unwrap();
/// let f = hitting_from_return(&one, &zero, 0.5).unwrap();
/// assert!((f.eval(0.64) - 0.8).abs() < 1e-12);
/// ```
pub fn hitting_from_return(
    g_prev: &GridFunction,
    g_d: &GridFunction,
    alpha: f64,
) -> Result<GridFunction> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha = {alpha} outside (0, 1]")));
    }
    if !g_prev.is_cdf_like(1e-12) || !g_d.is_cdf_like(1e-12) {
        return Err(invalid(
            "hitting_from_return needs nondecreasing CDF slices in [0, 1]",
        ));
    }
    let diff = g_prev.zip_with(g_d, |a, b| a - b)?;
    let mut out = rl_integral(&diff, alpha, &diff.grid)?;
    let scale = gamma(1.0 + alpha);
    for v in &mut out.values {
        *v = (*v * scale).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Where the return-law slices of the fixed-point check come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FixedPointSource {
    /// `F̃(t) = 1 - θ E_α(-θΓ(1+α) t^α)` (`d = 1` only).
    Analytic,
    /// Closed-form CDF of the given law (`d = 1` only).
    Cdf(LawSpec),
    /// Empirical CDFs of i.i.d. waits drawn from the given law.
    MonteCarlo {
        law: LawSpec,
        trials: u64,
        seed: u64,
    },
}

/// The waiting law whose renewal process is the candidate fixed point.
pub fn fixed_point_law(alpha: f64, theta: f64) -> LawSpec {
    LawSpec::WMix {
        alpha,
        theta,
        lambda: theta * gamma(1.0 + alpha),
    }
}

fn empirical_cdf_on(grid: &[f64], mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    grid.iter()
        .map(|&t| values.partition_point(|&v| v <= t) as f64 / n)
        .collect()
}

/// Maximum over the grid of
/// `|F̃^{[d]} - (1-θ) F̃^{[d-1]}(t_2..t_d) - θ F^{[d]}|` on the diagonal slice
/// `(t, t + s2)` (`s2` unused when `d = 1`), with `F^{[d]}` the
/// hitting-from-return transform of the return slices.
pub fn fixed_point_residual(
    alpha: f64,
    theta: f64,
    d: usize,
    grid: &[f64],
    s2: f64,
    source: FixedPointSource,
) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid(format!("theta = {theta} outside (0, 1]")));
    }
    if !(d == 1 || d == 2) {
        return Err(invalid("fixed-point residual is implemented for d = 1, 2"));
    }
    let (g_prev, g_d) = match source {
        FixedPointSource::Analytic | FixedPointSource::Cdf(_) => {
            if d != 1 {
                return Err(invalid("closed-form slices exist for d = 1 only"));
            }
            let law = match source {
                FixedPointSource::Cdf(law) => law,
                _ => fixed_point_law(alpha, theta),
            };
            let cdf = ReferenceCdf::new(&law)?;
            let one = GridFunction::from_fn(grid, |_| 1.0)?;
            let f = match source {
                FixedPointSource::Analytic => {
                    let ml = MittagLeffler::new(alpha)?;
                    let lambda = theta * gamma(1.0 + alpha);
                    GridFunction::from_fn(grid, |t| 1.0 - theta * ml.survival(lambda, t))?
                }
                _ => GridFunction::from_fn(grid, |t| cdf.cdf(t))?,
            };
            (one, f)
        }
        FixedPointSource::MonteCarlo { law, trials, seed } => {
            const CHUNK: u64 = 10_000;
            let chunks = trials.div_ceil(CHUNK);
            let draws: Vec<(f64, f64)> = (0..chunks)
                .into_par_iter()
                .map(|c| -> Result<Vec<(f64, f64)>> {
                    let mut rng = trial_rng(seed, STREAM_FIXED_POINT, c);
                    let n = CHUNK.min(trials - c * CHUNK);
                    (0..n)
                        .map(|_| Ok((sample_law(&law, &mut rng)?, sample_law(&law, &mut rng)?)))
                        .collect()
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .flatten()
                .collect();
            if d == 1 {
                let first = empirical_cdf_on(grid, draws.iter().map(|p| p.0).collect());
                (
                    GridFunction::from_fn(grid, |_| 1.0)?,
                    GridFunction::new(grid.to_vec(), first)?,
                )
            } else {
                let shifted: Vec<f64> = grid.iter().map(|t| t + s2).collect();
                let first = empirical_cdf_on(&shifted, draws.iter().map(|p| p.0).collect());
                let pair = empirical_cdf_on(
                    grid,
                    draws.iter().map(|&(a, b)| a.max(a + b - s2)).collect(),
                );
                (
                    GridFunction::new(grid.to_vec(), first)?,
                    GridFunction::new(grid.to_vec(), pair)?,
                )
            }
        }
    };
    let hit = hitting_from_return(&g_prev, &g_d, alpha)?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let rhs = (1.0 - theta) * g_prev.values[j] + theta * hit.values[j];
            (g_d.values[j] - rhs).abs()
        })
        .fold(0.0, f64::max))
}

/// Batched histograms of `N[0, t_j]` over trials, for `0 <= d <= d_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTable {
    grid: Vec<f64>,
    d_max: usize,
    /// `[batch][d][j]` trial counts with `N[0, t_j] = d`.
    hist: Vec<Vec<Vec<u64>>>,
    trials: Vec<u64>,
}

impl CountTable {
    pub fn new(grid: Vec<f64>, d_max: usize, batches: usize) -> Result<Self> {
        if batches == 0 {
            return Err(invalid("need at least one batch"));
        }
        GridFunction::new(grid.clone(), vec![0.0; grid.len()])?;
        let hist = vec![vec![vec![0; grid.len()]; d_max + 1]; batches];
        Ok(CountTable {
            grid,
            d_max,
            hist,
            trials: vec![0; batches],
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn trials(&self) -> u64 {
        self.trials.iter().sum()
    }

    pub fn add(&mut self, batch: usize, sample: &EventSample) {
        let b = batch % self.hist.len();
        let mut count = 0u64;
        let mut e = 0;
        for (j, &t) in self.grid.iter().enumerate() {
            while e < sample.times.len() && sample.times[e] <= t {
                count += sample.marks[e] as u64;
                e += 1;
            }
            if count as usize <= self.d_max {
                self.hist[b][count as usize][j] += 1;
            }
        }
        self.trials[b] += 1;
    }

    pub fn merge(&mut self, other: &CountTable) -> Result<()> {
        if self.grid != other.grid
            || self.d_max != other.d_max
            || self.hist.len() != other.hist.len()
        {
            return Err(invalid("count tables differ in shape"));
        }
        for (a, b) in self.hist.iter_mut().zip(&other.hist) {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += y;
                }
            }
        }
        for (a, b) in self.trials.iter_mut().zip(&other.trials) {
            *a += b;
        }
        Ok(())
    }

    /// `P(N[0, t_j] = d)` pooled over the given batches.
    fn probabilities(&self, batches: &[usize], d: usize) -> Vec<f64> {
        let n: u64 = batches.iter().map(|&b| self.trials[b]).sum();
        (0..self.grid.len())
            .map(|j| batches.iter().map(|&b| self.hist[b][d][j]).sum::<u64>() as f64 / n as f64)
            .collect()
    }

    pub fn probability(&self, d: usize) -> Vec<f64> {
        let all: Vec<usize> = (0..self.hist.len()).collect();
        self.probabilities(&all, d)
    }
}

/// Count table of `trials` realisations of a renewal process on `grid`,
/// split over `batches` batches; trial `i` has its own stream.
pub fn simulate_count_table(
    spec: &LawSpec,
    grid: &[f64],
    d_max: usize,
    trials: u64,
    batches: usize,
    seed: u64,
) -> Result<CountTable> {
    let horizon = *grid.last().ok_or_else(|| invalid("empty grid"))?;
    let per = trials / batches.max(1) as u64;
    let parts: Vec<CountTable> = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<CountTable> {
            let mut t = CountTable::new(grid.to_vec(), d_max, batches)?;
            for i in b as u64 * per..(b as u64 + 1) * per {
                let sample =
                    sample_renewal_process(spec, horizon, &mut trial_rng(seed, STREAM_COUNTS, i))?;
                t.add(b, &sample);
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mut table = CountTable::new(grid.to_vec(), d_max, batches)?;
    for part in &parts {
        table.merge(part)?;
    }
    Ok(table)
}

/// Result of a Kolmogorov-Feller residual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KfReport {
    /// `max_{d, t} |R(d, t)|` on the pooled data.
    pub residual: f64,
    /// Largest batch-means standard error of `R(d, t)`.
    pub std_error: f64,
    /// `max_t |R(d, t)|` per level.
    pub per_level: Vec<f64>,
}

fn kf_core(lhs: &CountTable, rhs: &CountTable, alpha: f64, lambda: f64) -> Result<KfReport> {
    if lhs.grid != rhs.grid || lhs.d_max != rhs.d_max || lhs.hist.len() != rhs.hist.len() {
        return Err(invalid("count tables differ in shape"));
    }
    if !(alpha > 0.0 && alpha <= 1.0 && lambda > 0.0) {
        return Err(invalid("need alpha in (0, 1] and lambda > 0"));
    }
    let grid = &lhs.grid;
    let batches = lhs.hist.len();
    let residuals = |sel: &[usize]| -> Result<Vec<Vec<f64>>> {
        let mut prev = vec![0.0; grid.len()];
        let mut out = Vec::with_capacity(lhs.d_max + 1);
        for d in 0..=lhs.d_max {
            let pl = lhs.probabilities(sel, d);
            let pr = rhs.probabilities(sel, d);
            let diff = GridFunction::new(
                grid.clone(),
                prev.iter().zip(&pr).map(|(a, b)| a - b).collect(),
            )?;
            let integral = rl_integral(&diff, alpha, grid)?;
            out.push(
                (0..grid.len())
                    .map(|j| pl[j] - pl[0] - lambda * integral.values[j])
                    .collect(),
            );
            prev = pr;
        }
        Ok(out)
    };
    let all: Vec<usize> = (0..batches).collect();
    let pooled = residuals(&all)?;
    let per_level: Vec<f64> = pooled
        .iter()
        .map(|r| r.iter().fold(0.0f64, |m, x| m.max(x.abs())))
        .collect();
    let residual = per_level.iter().copied().fold(0.0, f64::max);
    let mut std_error = f64::NAN;
    if batches > 1 {
        let per_batch: Vec<Vec<Vec<f64>>> = (0..batches)
            .map(|b| residuals(&[b]))
            .collect::<Result<_>>()?;
        std_error = 0.0;
        let bf = batches as f64;
        for d in 0..=lhs.d_max {
            for j in 0..grid.len() {
                let m = per_batch.iter().map(|r| r[d][j]).sum::<f64>() / bf;
                let var = per_batch.iter().map(|r| (r[d][j] - m).powi(2)).sum::<f64>() / (bf - 1.0);
                std_error = f64::max(std_error, (var / bf).sqrt());
            }
        }
    }
    Ok(KfReport {
        residual,
        std_error,
        per_level,
    })
}

/// Integral form of the Kolmogorov-Feller equations of a fractional Poisson
/// process: `R(d,t) = P(d,t) - P(d,0) - λ I^α(P(d-1,·) - P(d,·))(t)`, `P(-1,·) = 0`.
pub fn kf_residual(counts: &CountTable, alpha: f64, lambda: f64) -> Result<KfReport> {
    kf_core(counts, counts, alpha, lambda)
}

/// Hitting/return form: hitting-process counts on the left, return-process
/// counts inside the integral, rate `Γ(1+α)`.
pub fn kf_residual_pair(
    hitting: &CountTable,
    returns: &CountTable,
    alpha: f64,
) -> Result<KfReport> {
    kf_core(hitting, returns, alpha, gamma(1.0 + alpha))
}
