//! The lazy-walk ℤ-extension of a Bernoulli shift: returns to a cylinder at
//! level 0, its wandering rate, and the inverse-subordinator picture of the
//! fractional Poisson process.

use std::time::Duration;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::experiments::{ExperimentConfig, SCHEMA};
use crate::laws::{
    fpp_subordinator_crosscheck, ks_two_sample, lt_and_ks, sample_renewal_process, Distance,
    LawSpec, SubordinatorCheck,
};
use crate::measure::batch_mean;
use crate::rng::trial_rng;

/// Variance of the lazy step law `P(0) = 1/2, P(±1) = 1/4`.
pub const LAZY_VARIANCE: f64 = 0.5;

const STREAM_RETURNS: u64 = 0x7a72;
const STREAM_COUNTS: u64 = 0x7a63;
const STREAM_WALK: u64 = 0x7a77;
const STREAM_SUB: u64 = 0x7a73;

/// Mass of one step under the lazy law.
pub fn step_mass(step: i8) -> Result<f64> {
    match step {
        0 => Ok(0.5),
        -1 | 1 => Ok(0.25),
        _ => Err(invalid(format!("step {step} outside {{-1, 0, 1}}"))),
    }
}

/// `ν([w] × {0})`.
///
/// ```
/// use frep::zext::cylinder_measure;
/// assert_eq!(cylinder_measure(&[1, 0, 1, 0]).unwrap(), 1.0 / 64.0);
/// ```
pub fn cylinder_measure(word: &[i8]) -> Result<f64> {
    word.iter().map(|&s| step_mass(s)).product()
}

/// `γ(s) = 2 s² / (π σ²)`.
pub fn zext_gamma(s: f64, variance: f64) -> f64 {
    2.0 * s * s / (std::f64::consts::PI * variance)
}

/// Lazy steps drawn two bits at a time.
struct Steps<'a, R: RngCore> {
    rng: &'a mut R,
    bits: u64,
    left: u32,
}

impl<'a, R: RngCore> Steps<'a, R> {
    fn new(rng: &'a mut R) -> Self {
        Steps {
            rng,
            bits: 0,
            left: 0,
        }
    }

    #[inline]
    fn next(&mut self) -> i8 {
        if self.left == 0 {
            self.bits = self.rng.next_u64();
            self.left = 32;
        }
        let b = self.bits & 3;
        self.bits >>= 2;
        self.left -= 1;
        match b {
            0 => -1,
            1 => 1,
            _ => 0,
        }
    }
}

/// Return times to `[w] × {0}` of one orbit started in it, up to `need` events
/// or the raw time `limit`.
pub fn zext_returns<R: RngCore>(word: &[i8], limit: u64, need: usize, rng: &mut R) -> Vec<u64> {
    let m = word.len();
    let mut steps = Steps::new(rng);
    // buf[k] = ω_k for the steps generated so far.
    let mut buf: Vec<i8> = word.to_vec();
    let mut out = Vec::new();
    let mut level = 0i64;
    let mut k = 0u64;
    while k < limit && out.len() < need {
        if buf.len() <= k as usize {
            buf.push(steps.next());
        }
        level += i64::from(buf[k as usize]);
        k += 1;
        if level == 0 {
            while buf.len() < k as usize + m {
                buf.push(steps.next());
            }
            if buf[k as usize..k as usize + m] == *word {
                out.push(k);
            }
        }
    }
    out
}

/// First return time to level 0 from level 0, capped at `cap`.
pub fn level_return<R: RngCore>(cap: u64, rng: &mut R) -> u64 {
    let mut steps = Steps::new(rng);
    let mut level = 0i64;
    for k in 1..=cap {
        level += i64::from(steps.next());
        if level == 0 {
            return k;
        }
    }
    cap
}

/// `w_n(Y)` of `Y = Ω × {0}` against `2√2/√π · σ√n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WanderingCheck {
    pub n: u64,
    pub w_n: f64,
    pub w_n_se: f64,
    /// `w_n / (σ √n)`.
    pub ratio: f64,
    pub target: f64,
}

/// `P(r_0 > k) √k / σ` against `√(2/π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub k: u64,
    pub survival: f64,
    pub scaled: f64,
    pub target: f64,
}

/// Report of a `zext` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZextReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub word: Vec<i8>,
    pub nu: f64,
    pub variance: f64,
    pub gamma: f64,
    pub raw_horizon: u64,
    pub trials: u64,
    pub reference: LawSpec,
    pub first_return: Distance,
    pub first_return_observed: u64,
    /// Two-sample KS of `min(N[0, 1], d)` against the same for simulated FPP.
    pub counts_ks: f64,
    pub wandering: WanderingCheck,
    pub tail: Vec<TailRow>,
    pub subordinator: SubordinatorCheck,
    pub flags: Vec<String>,
    #[serde(skip)]
    pub first_samples: Vec<f64>,
    #[serde(skip)]
    pub runtime: Duration,
}

/// Runs the ℤ-extension experiment of `cfg` (`zext_word`, `trials`, `horizon`,
/// `d_max`, `wander_*`, `subordinator_trials`).
pub fn run_zext(cfg: &ExperimentConfig) -> Result<ZextReport> {
    let started = std::time::Instant::now();
    let seed = cfg.require_seed()?;
    let word = cfg.zext_word.clone();
    if word.is_empty() {
        return Err(Error::Config("zext_word must not be empty".into()));
    }
    let nu = cylinder_measure(&word)?;
    if nu < 1e-6 {
        return Err(invalid(format!(
            "cylinder measure {nu:.2e} is below 1e-6; returns are out of reach"
        )));
    }
    if cfg.trials < 1000 {
        return Err(Error::Config("zext needs at least 1000 trials".into()));
    }
    let variance = LAZY_VARIANCE;
    let gamma_nu = zext_gamma(nu, variance);
    let raw_horizon = (cfg.horizon / gamma_nu) as u64;
    let count_time = 1.0f64.min(cfg.horizon);
    let need = cfg.d_max.max(3);

    let runs: Vec<Vec<u64>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            zext_returns(
                &word,
                raw_horizon,
                need,
                &mut trial_rng(seed, STREAM_RETURNS, i),
            )
        })
        .collect();
    let first_samples: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.first().map(|&k| k as f64 * gamma_nu))
        .collect();
    let lam = gamma(1.5);
    let reference = LawSpec::MlH {
        alpha: 0.5,
        lambda: lam,
    };
    let censored = cfg.trials as usize - first_samples.len();
    let first_return = lt_and_ks(&first_samples, censored, &reference, &cfg.lt_grid)?;

    let cap = need as f64;
    let counts: Vec<f64> = runs
        .iter()
        .map(|r| {
            (r.iter()
                .filter(|&&k| k as f64 * gamma_nu <= count_time)
                .count() as f64)
                .min(cap)
        })
        .collect();
    let fpp = LawSpec::Fpp {
        alpha: 0.5,
        lambda: lam,
    };
    let fpp_counts: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            sample_renewal_process(&fpp, count_time, &mut trial_rng(seed, STREAM_COUNTS, i))
                .map(|s| (s.total() as f64).min(cap))
        })
        .collect::<Result<_>>()?;
    let counts_ks = ks_two_sample(&counts, &fpp_counts);

    let n = cfg.wander_n;
    let returns: Vec<u64> = (0..cfg.wander_trials)
        .into_par_iter()
        .map(|i| level_return(n, &mut trial_rng(seed, STREAM_WALK, i)))
        .collect();
    // Batch means over 20 contiguous blocks.
    let block = (returns.len() / 20).max(1);
    let means: Vec<f64> = returns
        .chunks(block)
        .map(|c| c.iter().map(|&r| r as f64).sum::<f64>() / c.len() as f64)
        .collect();
    let (w_n, w_n_se) = batch_mean(&means);
    let sigma = variance.sqrt();
    let wandering = WanderingCheck {
        n,
        w_n,
        w_n_se,
        ratio: w_n / (sigma * (n as f64).sqrt()),
        target: 2.0 * std::f64::consts::SQRT_2 / std::f64::consts::PI.sqrt(),
    };
    let tail = [10u64, 100, 1000, n / 2]
        .into_iter()
        .filter(|&k| k > 0 && k < n)
        .map(|k| {
            let survival = returns.iter().filter(|&&r| r > k).count() as f64 / returns.len() as f64;
            TailRow {
                k,
                survival,
                scaled: survival * (k as f64).sqrt() / sigma,
                target: (2.0 / std::f64::consts::PI).sqrt(),
            }
        })
        .collect();
    let subordinator = fpp_subordinator_crosscheck(
        lam,
        1.0,
        1e-4,
        cfg.subordinator_trials,
        &mut trial_rng(seed, STREAM_SUB, 0),
    )?;

    let mut flags = Vec::new();
    if let Some(ks) = first_return.ks {
        if ks > cfg.ks_tolerance {
            flags.push(format!(
                "first return KS {ks:.4} exceeds {}",
                cfg.ks_tolerance
            ));
        }
    }
    if (wandering.ratio / wandering.target - 1.0).abs() > 0.05 {
        flags.push(format!(
            "wandering ratio {:.4} vs {:.4}",
            wandering.ratio, wandering.target
        ));
    }
    if subordinator.ks_counts > 0.02 {
        flags.push(format!(
            "subordinator KS {:.4} exceeds 0.02",
            subordinator.ks_counts
        ));
    }
    Ok(ZextReport {
        schema: SCHEMA.into(),
        config: cfg.clone(),
        word,
        nu,
        variance,
        gamma: gamma_nu,
        raw_horizon,
        trials: cfg.trials,
        reference,
        first_return,
        first_return_observed: first_samples.len() as u64,
        counts_ks,
        wandering,
        tail,
        subordinator,
        flags,
        first_samples,
        runtime: started.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn step_law_is_lazy_and_centred() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = Steps::new(&mut rng);
        let n = 400_000;
        let (mut zeros, mut sum, mut sq) = (0usize, 0i64, 0i64);
        for _ in 0..n {
            let x = s.next();
            zeros += usize::from(x == 0);
            sum += i64::from(x);
            sq += i64::from(x * x);
        }
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.005);
        assert!((sum as f64 / n as f64).abs() < 0.005);
        assert!((sq as f64 / n as f64 - LAZY_VARIANCE).abs() < 0.005);
    }

    #[test]
    fn returns_respect_the_word_excursion() {
        // (1, 0, 0, -1) first revisits level 0 at its last step.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let r = zext_returns(&[1, 0, 0, -1], 1000, 5, &mut rng);
            assert!(r.iter().all(|&k| k >= 4));
            assert!(r.windows(2).all(|w| w[1] - w[0] >= 4));
        }
    }

    #[test]
    fn gamma_and_measure() {
        assert_eq!(cylinder_measure(&[0, 0]).unwrap(), 0.25);
        assert!(cylinder_measure(&[2]).is_err());
        assert!((zext_gamma(0.5, 0.5) - 1.0 / std::f64::consts::PI).abs() < 1e-15);
    }
}
