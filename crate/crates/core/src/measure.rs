//! The infinite invariant measure on subsets of `Y`, the Darling-Kac
//! normalizing sequence `a_n`, the scaling function `γ`, and the
//! deterministic integrals used by the scaling identities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::lsv::{lower_gap, BoundaryTable, InducedState, MapParams};
use crate::quad::integrate;
use crate::rng::trial_rng;
use crate::targets::{Interval, INDUCING_SET};

/// Number of independent chains (and batches) behind every standard error.
pub const BATCHES: usize = 20;
/// Default burn-in of each chain, in induced steps.
pub const DEFAULT_BURN_IN: u64 = 10_000;

const STREAM_MEASURE: u64 = 0x6d65_6173;
const STREAM_SCALING: u64 = 0x7363_616c;
const STREAM_WANDER: u64 = 0x7761_6e64;

/// `μ(A)` for some `A ⊂ Y`, normalised so that `μ(Y) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Induced-chain steps behind the estimate (after burn-in).
    pub n_steps: u64,
}

/// Mean and batch-means standard error of per-chain means.
pub(crate) fn batch_mean(means: &[f64]) -> (f64, f64) {
    let b = means.len() as f64;
    let m = means.iter().sum::<f64>() / b;
    if means.len() < 2 {
        return (m, f64::NAN);
    }
    let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b - 1.0);
    (m, (var / b).sqrt())
}

/// Uniform point of `Y`.
pub(crate) fn uniform_on_y<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.5..=1.0)
}

/// One induced step; an excursion beyond the transit cap restarts the chain
/// from a fresh uniform point (returned `r` is then `None`).
pub(crate) fn step_or_restart(
    table: &BoundaryTable,
    rng: &mut ChaCha8Rng,
    y: f64,
) -> Result<(f64, Option<u64>)> {
    match table.induced_step(InducedState { y, clock: 0 }) {
        Ok((s, r)) => Ok((s.y, Some(r))),
        Err(Error::ExcursionOverflow { .. }) => Ok((uniform_on_y(rng), None)),
        Err(e) => Err(e),
    }
}

/// Occupation fractions of the stationary induced chain.
///
/// `chain_length` steps are split over [`BATCHES`] independent chains, each
/// started uniformly on `Y` and run through `burn_in` steps first.
pub fn estimate_induced_measure(
    table: &BoundaryTable,
    sets: &[Interval],
    chain_length: u64,
    burn_in: u64,
    seed: u64,
) -> Result<Vec<MeasureEstimate>> {
    if chain_length < 10 * burn_in {
        return Err(invalid(format!(
            "chain length {chain_length} must be at least ten times the burn-in {burn_in}"
        )));
    }
    if let Some(s) = sets.iter().find(|s| !s.is_within(&INDUCING_SET)) {
        return Err(Error::TargetOutsideInducingSet { lo: s.lo, hi: s.hi });
    }
    let per_chain = chain_length / BATCHES as u64;
    let counts: Vec<Vec<u64>> = (0..BATCHES as u64)
        .into_par_iter()
        .map(|chain| -> Result<Vec<u64>> {
            let mut rng = trial_rng(seed, STREAM_MEASURE, chain);
            let mut y = uniform_on_y(&mut rng);
            for _ in 0..burn_in {
                y = step_or_restart(table, &mut rng, y)?.0;
            }
            let mut hits = vec![0u64; sets.len()];
            for _ in 0..per_chain {
                for (h, s) in hits.iter_mut().zip(sets) {
                    *h += s.contains(y) as u64;
                }
                y = step_or_restart(table, &mut rng, y)?.0;
            }
            Ok(hits)
        })
        .collect::<Result<_>>()?;
    Ok((0..sets.len())
        .map(|i| {
            let means: Vec<f64> = counts
                .iter()
                .map(|c| c[i] as f64 / per_chain as f64)
                .collect();
            let (value, std_error) = batch_mean(&means);
            MeasureEstimate {
                value,
                std_error,
                n_steps: per_chain * BATCHES as u64,
            }
        })
        .collect())
}

/// Fitted normalizing sequence `a(n)`.
///
/// Power model: `a(n) = c n^alpha`. Log-corrected model (`p = 1`):
/// `a(n) = n / (slope ln n + intercept)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingModel {
    pub c: f64,
    /// Exponent of a free log-log fit (diagnostic).
    pub alpha_hat: f64,
    /// Exponent used by [`gamma_scale`].
    pub alpha: f64,
    pub log_correction: bool,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(n, â(n), standard error)` behind the fit.
    pub points: Vec<(f64, f64, f64)>,
}

impl ScalingModel {
    /// Exact power law `a(n) = c n^alpha`.
    pub fn power(c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0 && alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!(
                "invalid power model c = {c}, alpha = {alpha}"
            )));
        }
        Ok(ScalingModel {
            c,
            alpha_hat: alpha,
            alpha,
            log_correction: false,
            slope: 0.0,
            intercept: 0.0,
            r_squared: 1.0,
            points: Vec::new(),
        })
    }

    /// `a(n) = n / (slope ln n + intercept)`.
    pub fn log_corrected(slope: f64, intercept: f64) -> Result<Self> {
        if !(slope > 0.0 && intercept.is_finite()) {
            return Err(invalid(format!(
                "invalid log-corrected model {slope} ln n + {intercept}"
            )));
        }
        Ok(ScalingModel {
            c: 1.0 / slope,
            alpha_hat: 1.0,
            alpha: 1.0,
            log_correction: true,
            slope,
            intercept,
            r_squared: 1.0,
            points: Vec::new(),
        })
    }

    pub fn a(&self, n: f64) -> f64 {
        if self.log_correction {
            n / (self.slope * n.ln() + self.intercept)
        } else {
            self.c * n.powf(self.alpha)
        }
    }

    /// Fit to `(n, â(n))` pairs. With `alpha` given, the power model keeps
    /// that exponent and fits `c` only.
    pub fn fit(
        points: &[(f64, f64, f64)],
        alpha: Option<f64>,
        log_correction: bool,
    ) -> Result<Self> {
        if points.len() < 3 {
            return Err(invalid("need at least three grid points"));
        }
        let (n_min, n_max) = points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
        if n_max < 100.0 * n_min {
            return Err(invalid("n grid must span at least two decades"));
        }
        let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
        let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
        let (free_slope, _, free_r2) = least_squares(&lx, &ly);
        let mut model = if log_correction {
            let ratio: Vec<f64> = points.iter().map(|p| p.0 / p.1).collect();
            let (slope, intercept, r2) = least_squares(&lx, &ratio);
            let mut m = ScalingModel::log_corrected(slope, intercept)?;
            m.r_squared = r2;
            m
        } else {
            let alpha = alpha.unwrap_or(free_slope);
            let lc = lx.iter().zip(&ly).map(|(x, y)| y - alpha * x).sum::<f64>() / lx.len() as f64;
            let mut m = ScalingModel::power(lc.exp(), alpha.clamp(f64::MIN_POSITIVE, 1.0))?;
            m.r_squared = free_r2;
            m
        };
        model.alpha_hat = free_slope;
        model.points = points.to_vec();
        if !(model.r_squared >= 0.99) {
            return Err(Error::FitRejected {
                r_squared: model.r_squared,
            });
        }
        Ok(model)
    }
}

/// Ordinary least squares `y = slope x + intercept`, returning `(slope, intercept, R²)`.
pub(crate) fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}

/// `â(n)`: mean number of visits to `Y` at times `0..n` from uniform starts on
/// `Y`, for every `n` in the grid, with standard errors over trials.
pub fn darling_kac_means(
    table: &BoundaryTable,
    n_grid: &[u64],
    trials: u64,
    seed: u64,
) -> Result<Vec<(f64, f64, f64)>> {
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().ok_or_else(|| invalid("empty n grid"))?;
    let per_trial: Vec<Vec<u64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<u64>> {
            let mut rng = trial_rng(seed, STREAM_SCALING, t);
            let mut state = InducedState {
                y: uniform_on_y(&mut rng),
                clock: 0,
            };
            let mut out = Vec::with_capacity(grid.len());
            let mut visits = 0u64;
            let mut g = 0;
            loop {
                // A visit at `state.clock` counts for every n > clock.
                while g < grid.len() && grid[g] <= state.clock {
                    out.push(visits);
                    g += 1;
                }
                if g == grid.len() {
                    break;
                }
                visits += 1;
                match table.induced_step(state) {
                    Ok((next, _)) => state = next,
                    // The next visit lies beyond every cap, hence beyond n_max.
                    Err(Error::ExcursionOverflow { .. }) => state.clock = n_max,
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let tf = trials as f64;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let (s, s2) = per_trial.iter().fold((0.0, 0.0), |(a, b), v| {
                let x = v[i] as f64;
                (a + x, b + x * x)
            });
            let mean = s / tf;
            let var = (s2 / tf - mean * mean).max(0.0) * tf / (tf - 1.0).max(1.0);
            (n as f64, mean, (var / tf).sqrt())
        })
        .collect())
}

/// Darling-Kac estimate of `a_n` and its fit.
///
/// For `p > 1` the reported exponent `alpha_hat` comes from a free log-log
/// fit while `c` is fitted with the exponent fixed at `1/p`, since a small
/// exponent error is amplified by `γ(s) = (cs)^{1/α}` at small `s`. For
/// `p = 1` the log-corrected model is fitted.
pub fn estimate_normalizing_sequence(
    table: &BoundaryTable,
    n_grid: &[u64],
    trials: u64,
    seed: u64,
) -> Result<ScalingModel> {
    let params = table.params();
    let points = darling_kac_means(table, n_grid, trials, seed)?;
    if params.p() == 1.0 {
        ScalingModel::fit(&points, None, true)
    } else {
        ScalingModel::fit(&points, Some(params.alpha()), false)
    }
}

/// `γ(s) = 1 / b(1/s)` with `b` the inverse of the fitted `a`.
///
/// ```
/// use frep::measure::{gamma_scale, ScalingModel};
/// let m = ScalingModel::power(1.0, 0.5).unwrap();
/// assert!((gamma_scale(&m, 3.0).unwrap() - 9.0).abs() < 1e-12);
/// ```
pub fn gamma_scale(model: &ScalingModel, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain {
            what: "s",
            value: s,
        });
    }
    if !model.log_correction {
        return Ok((model.c * s).powf(1.0 / model.alpha));
    }
    // n / a(n) = slope ln n + intercept is minimal at ln n = 1 - intercept/slope;
    // a is increasing beyond that point.
    let target = 1.0 / s;
    let x_lo = (1.0 - model.intercept / model.slope).max(0.0);
    let a_at = |x: f64| x.exp() / (model.slope * x + model.intercept);
    if a_at(x_lo) >= target {
        // Below the fitted range: continue linearly through the turning point.
        return Ok(a_at(x_lo) / (target * x_lo.exp()));
    }
    let mut lo = x_lo;
    let mut hi = x_lo.max(1.0) * 2.0;
    while a_at(hi) < target {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::NoConvergence {
                what: "gamma_scale",
                lo,
                hi,
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if a_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok((-0.5 * (lo + hi)).exp())
}

/// `d_α = (Γ(1+α) Γ(1-α))^{-1/α} = (sin(πα)/(πα))^{1/α}`, with `d_1 = 1`.
pub fn d_alpha(alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let x = std::f64::consts::PI * alpha;
    (x.sin() / x).powf(1.0 / alpha)
}

/// `I(η) = ∫_η^1 dx / (x - T_1^{-1}(x))`, integrated in `u = x^{-p}` where the
/// integrand is bounded.
pub fn excursion_integral(params: &MapParams, eta: f64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain {
            what: "eta",
            value: eta,
        });
    }
    let p = params.p();
    let u_max = eta.powf(-p);
    let mut total = 0.0;
    let mut lo = 1.0f64;
    let mut failure = None;
    while lo < u_max {
        let hi = (lo * 10.0).min(u_max);
        let q = integrate(
            |u: f64| {
                let x = u.powf(-1.0 / p);
                match lower_gap(params, x) {
                    Ok(g) => x / (p * u * g),
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            lo,
            hi,
            0.0,
            1e-11,
            200,
        );
        total += q.value;
        lo = hi;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Result of [`wandering_stats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WanderingStats {
    /// `w_n(Y) = μ(Y) E_{μ_Y}[r_Y ∧ n]`.
    pub w_n: f64,
    pub w_n_se: f64,
    /// `E_{μ_Y}[r_{B_n}]` for `B_n = [0, c_n]` (only for `p = 1`).
    pub mean_hitting: Option<(f64, f64)>,
    /// Steps whose excursion overflowed the transit cap (chain restarted).
    pub censored: u64,
}

/// Wandering rate of `Y` from the stationary induced chain, and for `p = 1`
/// the mean first-entrance time to the peak cell `[0, c_n]`.
pub fn wandering_stats(
    table: &BoundaryTable,
    n: u64,
    samples: u64,
    seed: u64,
) -> Result<WanderingStats> {
    if n == 0 {
        return Err(invalid("n must be >= 1"));
    }
    let with_hitting = table.params().p() == 1.0;
    let per_chain = (samples / BATCHES as u64).max(1);
    let rows: Vec<(f64, f64, u64)> = (0..BATCHES as u64)
        .into_par_iter()
        .map(|chain| -> Result<(f64, f64, u64)> {
            let mut rng = trial_rng(seed, STREAM_WANDER, chain);
            let mut y = uniform_on_y(&mut rng);
            for _ in 0..DEFAULT_BURN_IN {
                y = step_or_restart(table, &mut rng, y)?.0;
            }
            let mut censored = 0u64;
            let mut sum = 0.0;
            // Clock at each sampled step, and whether T(y) ∈ [0, c_n] there.
            let mut clocks = Vec::new();
            let mut hits = Vec::new();
            let mut clock = 0u64;
            let mut i = 0u64;
            loop {
                let (next, r) = step_or_restart(table, &mut rng, y)?;
                let r = match r {
                    Some(r) => r,
                    None => {
                        censored += 1;
                        u64::MAX
                    }
                };
                if i < per_chain {
                    sum += r.min(n) as f64;
                }
                let hit = r > n;
                if with_hitting {
                    clocks.push(clock);
                    hits.push(hit);
                }
                clock = clock.saturating_add(r);
                y = next;
                i += 1;
                if i >= per_chain && (!with_hitting || hit) {
                    break;
                }
            }
            let mut hsum = 0.0;
            if with_hitting {
                let mut next_hit = None;
                for j in (0..clocks.len()).rev() {
                    if hits[j] {
                        next_hit = Some(clocks[j]);
                    }
                    if (j as u64) < per_chain {
                        let h = next_hit.expect("chain ends on a hit");
                        hsum += (h - clocks[j] + 1) as f64;
                    }
                }
            }
            Ok((sum / per_chain as f64, hsum / per_chain as f64, censored))
        })
        .collect::<Result<_>>()?;
    let (w_n, w_n_se) = batch_mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let mean_hitting =
        with_hitting.then(|| batch_mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>()));
    Ok(WanderingStats {
        w_n,
        w_n_se,
        mean_hitting,
        censored: rows.iter().map(|r| r.2).sum(),
    })
}

/// `Γ(1+α)Γ(1-α)` evaluated through the gamma function (cross-check of [`d_alpha`]).
pub fn gamma_product(alpha: f64) -> f64 {
    gamma(1.0 + alpha) * gamma(1.0 - alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsv::build_boundary_table;

    #[test]
    fn synthetic_power_law_fit() {
        let pts: Vec<_> = [1e2, 1e3, 1e4, 1e5]
            .iter()
            .map(|&n: &f64| (n, n.sqrt(), 0.0))
            .collect();
        let m = ScalingModel::fit(&pts, None, false).unwrap();
        assert!((m.c - 1.0).abs() < 1e-12 && (m.alpha_hat - 0.5).abs() < 1e-12);
        assert!((gamma_scale(&m, 0.1).unwrap() - 0.01).abs() < 1e-15);
        let z = ScalingModel::power((2.0 / std::f64::consts::PI).sqrt(), 0.5).unwrap();
        let s = 0.03;
        let want = 2.0 * s * s / std::f64::consts::PI;
        assert!((gamma_scale(&z, s).unwrap() / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_model_inverts() {
        let m = ScalingModel::log_corrected(0.7, 0.4).unwrap();
        for s in [1e-2, 1e-4, 1e-6] {
            let g = gamma_scale(&m, s).unwrap();
            // b(1/s) = 1/g must satisfy a(b) = 1/s.
            assert!((m.a(1.0 / g) * s - 1.0).abs() < 1e-10);
        }
        let pts: Vec<_> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&n: &f64| (n, m.a(n), 0.0))
            .collect();
        let f = ScalingModel::fit(&pts, None, true).unwrap();
        assert!((f.slope - 0.7).abs() < 1e-10 && (f.intercept - 0.4).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_noise() {
        let pts = vec![
            (1e2, 5.0, 0.0),
            (1e3, 1.0, 0.0),
            (1e4, 9.0, 0.0),
            (1e5, 2.0, 0.0),
        ];
        assert!(matches!(
            ScalingModel::fit(&pts, None, false),
            Err(Error::FitRejected { .. })
        ));
        let narrow = vec![(1e2, 1.0, 0.0), (2e2, 2.0, 0.0), (5e2, 3.0, 0.0)];
        assert!(ScalingModel::fit(&narrow, None, false).is_err());
    }

    #[test]
    fn d_alpha_values() {
        let pi = std::f64::consts::PI;
        assert!((d_alpha(0.5) - 4.0 / (pi * pi)).abs() < 1e-15);
        for a in [0.3, 0.5, 2.0 / 3.0, 0.9] {
            assert!((d_alpha(a) - gamma_product(a).powf(-1.0 / a)).abs() < 1e-12);
        }
        assert_eq!(d_alpha(1.0), 1.0);
    }

    #[test]
    fn excursion_integral_asymptotics() {
        for p in [1.5f64, 2.0, 3.0] {
            let mp = MapParams::new(p).unwrap();
            let alpha = 1.0 / p;
            let limit = alpha / 2f64.powf(p);
            let mut prev = 0.0;
            let mut scaled = 0.0;
            for eta in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
                let i = excursion_integral(&mp, eta).unwrap();
                assert!(i > prev);
                prev = i;
                scaled = i * eta.powf(p);
            }
            assert!(
                (scaled / limit - 1.0).abs() < 1e-3,
                "p={p}: {scaled} vs {limit}"
            );
        }
        let i = excursion_integral(&MapParams::new(2.0).unwrap(), 1e-6).unwrap();
        assert!((i / 1.25e11 - 1.0).abs() < 0.01, "{i}");
    }

    #[test]
    fn excursion_integral_matches_direct_quadrature() {
        // Direct integration in x away from the singularity.
        let mp = MapParams::new(2.0).unwrap();
        let direct = integrate(
            |x| 1.0 / lower_gap(&mp, x).unwrap(),
            0.2,
            1.0,
            0.0,
            1e-12,
            400,
        )
        .value;
        let via_u = excursion_integral(&mp, 0.2).unwrap();
        assert!((direct / via_u - 1.0).abs() < 1e-9, "{direct} {via_u}");
        // Decreasing in eta, finite at the right end.
        let a = excursion_integral(&mp, 0.5).unwrap();
        let b = excursion_integral(&mp, 0.9).unwrap();
        assert!(a > b && b > 0.0);
    }

    #[test]
    fn measure_of_y_is_one_and_additive() {
        let table = build_boundary_table(&MapParams::new(2.0).unwrap(), 4096).unwrap();
        let a = Interval::new(0.5, 0.6).unwrap();
        let b = Interval::new(0.6, 0.8).unwrap();
        let ab = Interval::new(0.5, 0.8).unwrap();
        let est = estimate_induced_measure(&table, &[INDUCING_SET, a, b, ab], 400_000, 10_000, 1)
            .unwrap();
        assert_eq!(est[0].value, 1.0);
        let diff = est[3].value - est[1].value - est[2].value;
        assert!(diff.abs() <= 3.0 * est[3].std_error + 1e-12);
        assert!(est[1].value > 0.0 && est[1].std_error > 0.0);
        assert!(estimate_induced_measure(&table, &[a], 1000, 10_000, 1).is_err());
        let outside = Interval::new(0.3, 0.6).unwrap();
        assert!(estimate_induced_measure(&table, &[outside], 400_000, 10_000, 1).is_err());
    }

    #[test]
    fn wandering_rate_monotone() {
        let table = build_boundary_table(&MapParams::new(2.0).unwrap(), 4096).unwrap();
        let w1 = wandering_stats(&table, 100, 200_000, 5).unwrap();
        let w2 = wandering_stats(&table, 10_000, 200_000, 5).unwrap();
        assert!(w2.w_n >= w1.w_n && w1.w_n >= 1.0);
        assert!(w1.mean_hitting.is_none());
    }
}
