//! Limit laws and limit point processes: Mittag-Leffler waiting times,
//! fractional and compound fractional Poisson processes, renewal processes
//! with an atom at zero, the `𝒥` family of Laplace transforms, and
//! empirical comparison tools.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Geometric, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::measure::d_alpha;
use crate::quad::integrate;

/// Laplace-transform comparison grid.
pub const LT_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
/// Event-count guard of the renewal samplers.
pub const RUNAWAY_LIMIT: usize = 100_000_000;

const SERIES_TERMS: usize = 400;
const SERIES_MAX_TERM: f64 = 1e3;

/// `E_α(-x)` for `x >= 0`.
///
/// Small arguments use the power series, as long as its largest term stays
/// below 1e3 (so cancellation costs at most three digits); everything else
/// uses the Laplace representation of the completely monotone function,
/// `E_α(-t^α) = ∫_0^∞ e^{-rt} K_α(r) dr`, rewritten in `w = r^α` so the
/// integrand is smooth and bounded.
#[derive(Debug, Clone)]
pub struct MittagLeffler {
    alpha: f64,
    inv_gamma: Vec<f64>,
}

impl MittagLeffler {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!(
                "Mittag-Leffler index {alpha} outside (0, 1]"
            )));
        }
        let inv_gamma = (0..SERIES_TERMS)
            .map(|k| {
                let z = alpha * k as f64 + 1.0;
                if z < 170.0 {
                    1.0 / gamma(z)
                } else {
                    (-ln_gamma(z)).exp()
                }
            })
            .collect();
        Ok(MittagLeffler { alpha, inv_gamma })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn series(&self, x: f64) -> Option<f64> {
        let mut sum = 0.0;
        let mut pow = 1.0;
        let mut max_term = 0.0f64;
        for (k, &c) in self.inv_gamma.iter().enumerate() {
            let term = pow * c;
            max_term = max_term.max(term);
            if max_term > SERIES_MAX_TERM {
                return None;
            }
            sum += if k % 2 == 0 { term } else { -term };
            if term < 1e-17 * max_term.max(1.0) && k > 2 {
                return Some(sum);
            }
            pow *= x;
        }
        None
    }

    fn integral(&self, x: f64) -> f64 {
        let a = self.alpha;
        let (s, c) = (a * PI).sin_cos();
        let t = x.powf(1.0 / a);
        let w_max = (60.0 / t).powf(a);
        let q = integrate(
            |w| (-t * w.powf(1.0 / a)).exp() / (w * w + 2.0 * w * c + 1.0),
            0.0,
            w_max,
            1e-14,
            1e-13,
            2000,
        );
        s / (a * PI) * q.value
    }

    /// `E_α(-x)`, `x >= 0`.
    pub fn eval_neg(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if self.alpha == 1.0 {
            return (-x).exp();
        }
        if !x.is_finite() {
            return 0.0;
        }
        self.series(x).unwrap_or_else(|| self.integral(x))
    }

    /// `P(H_α(λ) > t) = E_α(-λ t^α)`.
    pub fn survival(&self, lambda: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        self.eval_neg(lambda * t.powf(self.alpha)).clamp(0.0, 1.0)
    }

    pub fn cdf(&self, lambda: f64, t: f64) -> f64 {
        1.0 - self.survival(lambda, t)
    }
}

/// `E_α(z)` for `z <= 0`.
///
/// ```
/// use frep::laws::ml_function;
/// assert_eq!(ml_function(0.5, 0.0).unwrap(), 1.0);
/// assert!((ml_function(1.0, -2.0).unwrap() - (-2.0f64).exp()).abs() < 1e-15);
/// assert!((ml_function(0.5, -1.0).unwrap() - 0.4275835761558070).abs() < 1e-10);
/// ```
pub fn ml_function(alpha: f64, z: f64) -> Result<f64> {
    if !(z <= 0.0) {
        return Err(Error::Domain {
            what: "z",
            value: z,
        });
    }
    Ok(MittagLeffler::new(alpha)?.eval_neg(-z))
}

/// Positive `α`-stable variable with `E[e^{-sS}] = e^{-s^α}` (Kanter's
/// representation); the constant 1 when `α = 1`.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = PI * rng.random::<f64>();
    let e: f64 = rng.sample(Exp1);
    let a = ((alpha * u).sin().powf(alpha) * ((1.0 - alpha) * u).sin().powf(1.0 - alpha) / u.sin())
        .powf(1.0 / (1.0 - alpha));
    (a / e).powf((1.0 - alpha) / alpha)
}

/// `W_{α,θ}(λ)`: zero with probability `1-θ`, otherwise `H_α(λ)`.
pub fn sample_waiting<R: Rng + ?Sized>(alpha: f64, lambda: f64, theta: f64, rng: &mut R) -> f64 {
    if theta < 1.0 && rng.random::<f64>() >= theta {
        return 0.0;
    }
    let e: f64 = rng.sample(Exp1);
    if alpha >= 1.0 {
        return e / lambda;
    }
    (e / lambda).powf(1.0 / alpha) * sample_positive_stable(alpha, rng)
}

/// A limit law, or a limit point process (whose first-event law is then used
/// wherever a single law is needed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum LawSpec {
    /// Fractional Poisson process with `H_α(λ)` waits.
    Fpp {
        alpha: f64,
        lambda: f64,
    },
    /// FPP events carrying Geometric(θ) multiplicities.
    Cfpp {
        alpha: f64,
        lambda: f64,
        theta: f64,
    },
    /// Renewal process with `W_{α,θ}(λ)` waits.
    RppW {
        alpha: f64,
        theta: f64,
        lambda: f64,
    },
    /// Delayed renewal: first wait `H_α(λ)`, then `W_{α,θ}(λ)`.
    DrppW {
        alpha: f64,
        theta: f64,
        lambda: f64,
    },
    /// Renewal process with `𝔍̃_α` waits, τ-thinned and v-rescaled.
    RppJTilde {
        alpha: f64,
        tau: f64,
        v: f64,
    },
    /// Delayed renewal `(𝔍_α, 𝔍̃_α)`, τ-thinned and v-rescaled.
    DrppJ {
        alpha: f64,
        tau: f64,
        v: f64,
    },
    Ppp {
        lambda: f64,
    },
    MlH {
        alpha: f64,
        lambda: f64,
    },
    WMix {
        alpha: f64,
        theta: f64,
        lambda: f64,
    },
    J {
        alpha: f64,
    },
    JFrak {
        alpha: f64,
    },
    JTilde {
        alpha: f64,
    },
    Exp {
        lambda: f64,
    },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha = {alpha} outside (0, 1]")))
    }
}

fn check_positive(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} = {x} must be positive")))
    }
}

fn check_unit(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{what} = {x} outside (0, 1]")))
    }
}

fn check_j_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!(
            "the J family needs alpha in (0, 1), got {alpha}"
        )))
    }
}

impl LawSpec {
    pub fn validate(&self) -> Result<()> {
        use LawSpec::*;
        match *self {
            Fpp { alpha, lambda } | MlH { alpha, lambda } => {
                check_alpha(alpha)?;
                check_positive("lambda", lambda)
            }
            Cfpp {
                alpha,
                lambda,
                theta,
            }
            | RppW {
                alpha,
                theta,
                lambda,
            }
            | DrppW {
                alpha,
                theta,
                lambda,
            }
            | WMix {
                alpha,
                theta,
                lambda,
            } => {
                check_alpha(alpha)?;
                check_positive("lambda", lambda)?;
                check_unit("theta", theta)
            }
            RppJTilde { alpha, tau, v } | DrppJ { alpha, tau, v } => {
                check_j_alpha(alpha)?;
                check_unit("tau", tau)?;
                check_positive("v", v)
            }
            Ppp { lambda } | Exp { lambda } => check_positive("lambda", lambda),
            J { alpha } | JFrak { alpha } | JTilde { alpha } => check_j_alpha(alpha),
        }
    }

    /// Law of the first event (the law itself for single-variable tags).
    pub fn first_event(&self) -> LawSpec {
        use LawSpec::*;
        match *self {
            Fpp { alpha, lambda } | Cfpp { alpha, lambda, .. } | DrppW { alpha, lambda, .. } => {
                MlH { alpha, lambda }
            }
            RppW {
                alpha,
                theta,
                lambda,
            } => WMix {
                alpha,
                theta,
                lambda,
            },
            Ppp { lambda } => Exp { lambda },
            other => other,
        }
    }

    pub fn has_cdf(&self) -> bool {
        matches!(
            self.first_event(),
            LawSpec::MlH { .. } | LawSpec::WMix { .. } | LawSpec::Exp { .. }
        )
    }
}

/// Reference CDF of the first-event law, for tags that have one.
#[derive(Debug, Clone)]
pub struct ReferenceCdf {
    law: LawSpec,
    ml: Option<MittagLeffler>,
}

impl ReferenceCdf {
    pub fn new(spec: &LawSpec) -> Result<Self> {
        spec.validate()?;
        let law = spec.first_event();
        let ml = match law {
            LawSpec::MlH { alpha, .. } | LawSpec::WMix { alpha, .. } => {
                Some(MittagLeffler::new(alpha)?)
            }
            LawSpec::Exp { .. } => None,
            _ => return Err(invalid(format!("no closed-form CDF for {spec:?}"))),
        };
        Ok(ReferenceCdf { law, ml })
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match (self.law, &self.ml) {
            (LawSpec::MlH { lambda, .. }, Some(ml)) => ml.cdf(lambda, t),
            (LawSpec::WMix { theta, lambda, .. }, Some(ml)) => 1.0 - theta * ml.survival(lambda, t),
            (LawSpec::Exp { lambda }, _) => -(-lambda * t).exp_m1(),
            _ => unreachable!("constructor admits only laws with a CDF"),
        }
    }

    /// Left limit `F(t-)`; the only atom of these laws sits at 0.
    pub fn cdf_left(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            self.cdf(t)
        }
    }
}

/// `∫_0^1 y^{-α} e^{-sy} dy`, computed in `u = y^{1-α}`.
pub fn j_inner_integral(alpha: f64, s: f64) -> f64 {
    let k = 1.0 / (1.0 - alpha);
    integrate(|u| (-s * u.powf(k)).exp(), 0.0, 1.0, 1e-15, 1e-13, 200).value * k
}

fn lt_j(alpha: f64, s: f64) -> f64 {
    1.0 / ((-s).exp() + s * j_inner_integral(alpha, s))
}

fn lt_j_frak(alpha: f64, s: f64) -> f64 {
    lt_j(alpha, d_alpha(alpha) * s)
}

fn lt_j_tilde(alpha: f64, s: f64) -> f64 {
    1.0 - s.powf(alpha) * lt_j_frak(alpha, s) / gamma(1.0 + alpha)
}

/// Laplace transform `E[e^{-sX}]` of the first-event law of `spec`.
///
/// ```
/// use frep::laws::{reference_laplace, LawSpec};
/// let h = LawSpec::MlH { alpha: 0.5, lambda: 1.0 };
/// assert_eq!(reference_laplace(&h, 0.0).unwrap(), 1.0);
/// assert!((reference_laplace(&h, 4.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
/// ```
pub fn reference_laplace(spec: &LawSpec, s: f64) -> Result<f64> {
    use LawSpec::*;
    spec.validate()?;
    if !(s >= 0.0 && s.is_finite()) {
        return Err(Error::Domain {
            what: "s",
            value: s,
        });
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    Ok(match spec.first_event() {
        MlH { alpha, lambda } => lambda / (lambda + s.powf(alpha)),
        WMix {
            alpha,
            theta,
            lambda,
        } => 1.0 - theta + theta * lambda / (lambda + s.powf(alpha)),
        Exp { lambda } => lambda / (lambda + s),
        J { alpha } => lt_j(alpha, s),
        JFrak { alpha } => lt_j_frak(alpha, s),
        JTilde { alpha } => lt_j_tilde(alpha, s),
        RppJTilde { alpha, tau, v } => {
            let lt = lt_j_tilde(alpha, v * s);
            tau * lt / (1.0 - (1.0 - tau) * lt)
        }
        DrppJ { alpha, tau, v } => {
            let lt = lt_j_tilde(alpha, v * s);
            lt_j_frak(alpha, v * s) * tau / (1.0 - (1.0 - tau) * lt)
        }
        Fpp { .. } | Cfpp { .. } | RppW { .. } | DrppW { .. } | Ppp { .. } => {
            unreachable!("first_event maps processes to laws")
        }
    })
}

/// Draw from a single-variable law (or the waiting law of a process).
pub fn sample_law<R: Rng + ?Sized>(spec: &LawSpec, rng: &mut R) -> Result<f64> {
    use LawSpec::*;
    Ok(match *spec {
        MlH { alpha, lambda } | Fpp { alpha, lambda } => sample_waiting(alpha, lambda, 1.0, rng),
        WMix {
            alpha,
            theta,
            lambda,
        }
        | RppW {
            alpha,
            theta,
            lambda,
        } => sample_waiting(alpha, lambda, theta, rng),
        Exp { lambda } | Ppp { lambda } => rng.sample::<f64, _>(Exp1) / lambda,
        _ => {
            return Err(invalid(format!(
                "no sampler for {spec:?}; compare it through its Laplace transform"
            )))
        }
    })
}

/// One realisation of a point process on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSample {
    pub times: Vec<f64>,
    pub marks: Vec<u32>,
    pub horizon: f64,
}

impl EventSample {
    pub fn empty(horizon: f64) -> Self {
        EventSample {
            times: Vec::new(),
            marks: Vec::new(),
            horizon,
        }
    }

    /// Appends an event, merging it into the last one when the times coincide.
    pub fn push(&mut self, t: f64, mark: u32) {
        match self.times.last() {
            Some(&last) if last == t => *self.marks.last_mut().expect("marks track times") += mark,
            _ => {
                self.times.push(t);
                self.marks.push(mark);
            }
        }
    }

    /// `N[0, t]` counted with multiplicity.
    pub fn count(&self, t: f64) -> u64 {
        self.times
            .iter()
            .zip(&self.marks)
            .take_while(|(&s, _)| s <= t)
            .map(|(_, &m)| m as u64)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.marks.iter().map(|&m| m as u64).sum()
    }
}

/// Renewal-type processes on `[0, horizon]`; zero waits become multiplicities.
pub fn sample_renewal_process<R: Rng + ?Sized>(
    spec: &LawSpec,
    horizon: f64,
    rng: &mut R,
) -> Result<EventSample> {
    use LawSpec::*;
    spec.validate()?;
    if !(horizon > 0.0) {
        return Err(invalid(format!("horizon {horizon} must be positive")));
    }
    let (first, rest, theta_marks) = match *spec {
        Fpp { alpha, lambda } => (MlH { alpha, lambda }, MlH { alpha, lambda }, 1.0),
        Ppp { lambda } => (Exp { lambda }, Exp { lambda }, 1.0),
        Cfpp {
            alpha,
            lambda,
            theta,
        } => (MlH { alpha, lambda }, MlH { alpha, lambda }, theta),
        RppW {
            alpha,
            theta,
            lambda,
        } => (
            WMix {
                alpha,
                theta,
                lambda,
            },
            WMix {
                alpha,
                theta,
                lambda,
            },
            1.0,
        ),
        DrppW {
            alpha,
            theta,
            lambda,
        } => (
            MlH { alpha, lambda },
            WMix {
                alpha,
                theta,
                lambda,
            },
            1.0,
        ),
        _ => return Err(invalid(format!("no renewal sampler for {spec:?}"))),
    };
    let geometric = if theta_marks < 1.0 {
        Some(Geometric::new(theta_marks).map_err(|e| invalid(e.to_string()))?)
    } else {
        None
    };
    let mut out = EventSample::empty(horizon);
    let mut t = sample_law(&first, rng)?;
    while t <= horizon {
        let mark = match &geometric {
            Some(g) => 1 + g.sample(rng) as u32,
            None => 1,
        };
        out.push(t, mark);
        if out.times.len() > RUNAWAY_LIMIT {
            return Err(Error::Runaway {
                limit: RUNAWAY_LIMIT,
            });
        }
        t += sample_law(&rest, rng)?;
    }
    Ok(out)
}

/// τ-thinning (each unit of multiplicity kept independently) and v-rescaling.
pub fn thin_rescale<R: Rng + ?Sized>(
    sample: &EventSample,
    tau: f64,
    v: f64,
    rng: &mut R,
) -> Result<EventSample> {
    check_unit("tau", tau)?;
    check_positive("v", v)?;
    let mut out = EventSample::empty(sample.horizon * v);
    for (&t, &m) in sample.times.iter().zip(&sample.marks) {
        let kept = if tau == 1.0 {
            m
        } else {
            Binomial::new(m as u64, tau)
                .map_err(|e| invalid(e.to_string()))?
                .sample(rng) as u32
        };
        if kept > 0 {
            out.push(t * v, kept);
        }
    }
    Ok(out)
}

/// Mean of `e^{-sx}` with standard error; `censored` samples (known only to
/// exceed the horizon) contribute 0.
///
/// ```
/// use frep::laws::empirical_laplace;
/// let (v, _) = empirical_laplace(&[1.0, 1.0, 1.0], 0, 1.0);
/// assert!((v - (-1.0f64).exp()).abs() < 1e-15);
/// ```
pub fn empirical_laplace(samples: &[f64], censored: usize, s: f64) -> (f64, f64) {
    let n = (samples.len() + censored) as f64;
    let (sum, sum2) = samples.iter().fold((0.0, 0.0), |(a, b), &x| {
        let e = (-s * x).exp();
        (a + e, b + e * e)
    });
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Joint and product-of-marginal Laplace transforms of pairs, and the
/// standard error of their difference (delta method).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLaplace {
    pub joint: f64,
    pub product: f64,
    pub std_error: f64,
}

pub fn empirical_laplace_joint(pairs: &[(f64, f64)], s1: f64, s2: f64) -> JointLaplace {
    let n = pairs.len() as f64;
    let vals: Vec<(f64, f64)> = pairs
        .iter()
        .map(|&(a, b)| ((-s1 * a).exp(), (-s2 * b).exp()))
        .collect();
    let m1 = vals.iter().map(|v| v.0).sum::<f64>() / n;
    let m2 = vals.iter().map(|v| v.1).sum::<f64>() / n;
    let joint = vals.iter().map(|v| v.0 * v.1).sum::<f64>() / n;
    // Influence function of joint - m1 m2.
    let var = vals
        .iter()
        .map(|&(a, b)| {
            let z = a * b - joint - m2 * (a - m1) - m1 * (b - m2);
            z * z
        })
        .sum::<f64>()
        / n;
    JointLaplace {
        joint,
        product: m1 * m2,
        std_error: (var / n).sqrt(),
    }
}

/// Kolmogorov-Smirnov distance of right-censored samples to a CDF. `sorted`
/// holds the observed values in increasing order; `censored` more samples
/// are known to exceed every observed value. Ties and atoms are handled by
/// comparing both one-sided limits at each distinct value.
pub fn ks_statistic(
    sorted: &[f64],
    censored: usize,
    cdf: impl Fn(f64) -> f64,
    cdf_left: impl Fn(f64) -> f64,
) -> f64 {
    let n = (sorted.len() + censored) as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n - cdf_left(v)).abs());
        d = d.max((j as f64 / n - cdf(v)).abs());
        i = j;
    }
    d
}

/// Two-sample Kolmogorov-Smirnov distance (ties allowed).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() || j < b.len() {
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] == v {
            i += 1;
        }
        while j < b.len() && b[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// KS distance (when the law has a CDF) and Laplace-transform distance over [`LT_GRID`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance {
    pub ks: Option<f64>,
    pub lt: f64,
}

pub fn distribution_distance(samples: &[f64], censored: usize, spec: &LawSpec) -> Result<Distance> {
    lt_and_ks(samples, censored, spec, &LT_GRID)
}

/// As [`distribution_distance`] with a caller-chosen s-grid.
pub fn lt_and_ks(
    samples: &[f64],
    censored: usize,
    spec: &LawSpec,
    s_grid: &[f64],
) -> Result<Distance> {
    if samples.len() + censored < 100 {
        return Err(invalid("distribution_distance needs at least 100 samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let ks = if spec.has_cdf() {
        let r = ReferenceCdf::new(spec)?;
        Some(ks_statistic(
            &sorted,
            censored,
            |t| r.cdf(t),
            |t| r.cdf_left(t),
        ))
    } else {
        None
    };
    let mut lt = 0.0f64;
    for &s in s_grid {
        lt =
            lt.max((empirical_laplace(&sorted, censored, s).0 - reference_laplace(spec, s)?).abs());
    }
    Ok(Distance { ks, lt })
}

/// Pearson chi-square of a multiplicity histogram (`hist[k]` = clusters of
/// size `k`, `hist[0]` ignored) against Geometric(θ) on `{1, 2, …}`. Cells are
/// merged from the right until every expected count is at least 5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn geometric_chi_square(hist: &[u64], theta: f64) -> Result<ChiSquareTest> {
    check_unit("theta", theta)?;
    let total: u64 = hist.iter().skip(1).sum();
    if total == 0 {
        return Err(invalid("empty histogram"));
    }
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut k = 1usize;
    let mut tail_prob = 1.0;
    loop {
        let pk = theta * (1.0 - theta).powi(k as i32 - 1);
        if n * (tail_prob - pk) < 5.0 || pk == 0.0 {
            let observed: u64 = hist.iter().skip(k).sum();
            cells.push((observed as f64, n * tail_prob));
            break;
        }
        cells.push((hist.get(k).copied().unwrap_or(0) as f64, n * pk));
        tail_prob -= pk;
        k += 1;
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64)
            .map_err(|e| invalid(e.to_string()))?
            .cdf(statistic)
    };
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value,
    })
}

/// Counts on `[0, horizon]` from the two constructions of FPP(1/2, λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorCheck {
    pub ks_counts: f64,
    pub mean_subordinator: f64,
    pub mean_renewal: f64,
    pub trials: u64,
}

/// `N_λ(√2 · max_{s ≤ horizon} B_s)` on an Euler grid versus the renewal FPP(1/2, λ).
pub fn fpp_subordinator_crosscheck<R: Rng + ?Sized>(
    lambda: f64,
    horizon: f64,
    dt: f64,
    trials: u64,
    rng: &mut R,
) -> Result<SubordinatorCheck> {
    check_positive("lambda", lambda)?;
    if !(horizon >= 0.0 && dt > 0.0 && dt <= 1e-4) {
        return Err(invalid("need horizon >= 0 and 0 < dt <= 1e-4"));
    }
    let steps = (horizon / dt).ceil() as u64;
    let sd = if steps > 0 {
        (horizon / steps as f64).sqrt()
    } else {
        0.0
    };
    let mut sub = Vec::with_capacity(trials as usize);
    let mut ren = Vec::with_capacity(trials as usize);
    for _ in 0..trials {
        let (mut b, mut m) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            b += sd * rng.sample::<f64, _>(StandardNormal);
            m = m.max(b);
        }
        let mean = lambda * std::f64::consts::SQRT_2 * m;
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| invalid(e.to_string()))?
                .sample(rng)
        } else {
            0.0
        };
        sub.push(n);
        ren.push(if horizon > 0.0 {
            sample_renewal_process(&LawSpec::Fpp { alpha: 0.5, lambda }, horizon, rng)?.total()
                as f64
        } else {
            0.0
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(SubordinatorCheck {
        ks_counts: ks_two_sample(&sub, &ren),
        mean_subordinator: mean(&sub),
        mean_renewal: mean(&ren),
        trials,
    })
}
