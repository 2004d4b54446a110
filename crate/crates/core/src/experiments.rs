//! End-to-end rare-event experiments on the LSV map: shrinking targets,
//! normalised return and hitting processes, and their comparison with the
//! predicted limit laws.

use std::str::FromStr;
use std::time::Duration;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fractional::{hitting_from_return, uniform_grid, GridFunction};
use crate::laws::{
    empirical_laplace_joint, geometric_chi_square, lt_and_ks, reference_laplace, ChiSquareTest,
    Distance, JointLaplace, LawSpec,
};
use crate::lsv::{build_boundary_table, BoundaryTable, InducedState, MapParams, SymbolWord};
use crate::measure::{
    estimate_induced_measure, estimate_normalizing_sequence, gamma_scale, wandering_stats,
    MeasureEstimate, ScalingModel, DEFAULT_BURN_IN,
};
use crate::rng::trial_rng;
use crate::targets::{
    cylinder_of_point, generic_anchor, periodic_target, preimage_component, split_annulus,
    tau_of_point, Interval, IntervalTarget, PointClass,
};

/// Schema tag of every JSON report.
pub const SCHEMA: &str = "frep-report-v1";

const STREAM_ANCHOR: u64 = 0x616e_6368;
const STREAM_SCALE: u64 = 0x7363_6c65;
const STREAM_MU: u64 = 0x6d75_6d75;
const STREAM_COND: u64 = 0x636f_6e64;
/// Trial streams are `STREAM_TRIALS + 2 * depth_index + mode`.
const STREAM_TRIALS: u64 = 0x1000;

/// Laplace variables of the acceptance comparisons.
pub const DEFAULT_LT_GRID: [f64; 3] = [0.5, 1.0, 2.0];
/// Points of every exported ECDF.
pub const ECDF_POINTS: usize = 201;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Generic,
    Periodic,
    Preimage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Return,
    Hitting,
    Both,
}

impl Mode {
    fn runs(self) -> &'static [Mode] {
        match self {
            Mode::Return => &[Mode::Return],
            Mode::Hitting => &[Mode::Hitting],
            Mode::Both => &[Mode::Return, Mode::Hitting],
        }
    }
}

/// Empirical Darling-Kac fit, or fixed constants of `a(n) = c n^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingChoice {
    Empirical,
    Override { c: f64, alpha: f64 },
}

/// Flat `key = value` experiment configuration. See [`CONFIG_KEYS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub p: f64,
    pub point: PointKind,
    /// `random` or a number (generic), a period word (periodic), a
    /// preimage word, possibly `none` (preimage).
    pub anchor: String,
    pub depths: Vec<usize>,
    pub mode: Mode,
    pub d_max: usize,
    pub trials: u64,
    pub horizon: f64,
    pub seed: Option<u64>,
    pub scaling: ScalingChoice,
    pub scaling_trials: u64,
    /// Empty: a default grid depending on `p`.
    pub scaling_grid: Vec<u64>,
    pub measure_steps: u64,
    pub burn_in: u64,
    /// Worker threads (0 = all cores). Never affects results.
    #[serde(skip)]
    pub workers: usize,
    /// Raw-time gap below which events merge into one cluster (`None`: the
    /// period for periodic targets, 0 otherwise).
    pub cluster_window: Option<u64>,
    pub table_depth: usize,
    pub lt_grid: Vec<f64>,
    pub ks_tolerance: f64,
    pub lt_tolerance: f64,
    pub censor_tolerance: f64,
    pub condition_samples: u64,
    pub zext_word: Vec<i8>,
    pub wander_n: u64,
    pub wander_trials: u64,
    pub subordinator_trials: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 2.0,
            point: PointKind::Generic,
            anchor: "random".into(),
            depths: vec![6, 8, 10],
            mode: Mode::Return,
            d_max: 2,
            trials: 20_000,
            horizon: 5.0,
            seed: None,
            scaling: ScalingChoice::Empirical,
            scaling_trials: 10_000,
            scaling_grid: Vec::new(),
            measure_steps: 20_000_000,
            burn_in: DEFAULT_BURN_IN,
            workers: 0,
            cluster_window: None,
            table_depth: 4096,
            lt_grid: DEFAULT_LT_GRID.to_vec(),
            ks_tolerance: 0.05,
            lt_tolerance: 0.05,
            censor_tolerance: 0.2,
            condition_samples: 5000,
            zext_word: vec![1, 0, 0, -1],
            wander_n: 10_000,
            wander_trials: 200_000,
            subordinator_trials: 10_000,
        }
    }
}

/// Recognised configuration keys with a one-line description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("p", "LSV exponent p >= 1"),
    ("point", "generic | periodic | preimage"),
    (
        "anchor",
        "generic: random or x; periodic: period word; preimage: word or none",
    ),
    ("depths", "comma-separated target depths n"),
    ("mode", "return | hitting | both"),
    (
        "d_max",
        "number of events per trial compared with the limit",
    ),
    ("trials", "trials per depth and mode"),
    ("horizon", "normalised time horizon"),
    ("seed", "master seed"),
    ("scaling", "empirical, or c,alpha for a(n) = c n^alpha"),
    ("scaling_trials", "trials of the Darling-Kac estimate"),
    (
        "scaling_grid",
        "comma-separated n of the Darling-Kac estimate",
    ),
    (
        "measure_steps",
        "induced-chain steps behind each measure estimate",
    ),
    ("burn_in", "burn-in of each measure chain"),
    ("workers", "worker threads, 0 = all cores"),
    ("cluster_window", "auto or a raw-time gap"),
    ("table_depth", "boundary table size K"),
    ("lt_grid", "comma-separated Laplace variables"),
    ("ks_tolerance", "flag threshold on the deepest KS distance"),
    (
        "lt_tolerance",
        "flag threshold on the deepest Laplace distance",
    ),
    (
        "censor_tolerance",
        "flag threshold on the censored fraction",
    ),
    (
        "condition_samples",
        "samples per depth of the condition proxies",
    ),
    ("zext_word", "step word of the Z-extension target"),
    ("wander_n", "n of the Z-extension wandering rate"),
    ("wander_trials", "trials of the Z-extension wandering rate"),
    (
        "subordinator_trials",
        "trials of the FPP subordinator cross-check",
    ),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults; `#` starts a comment.
    ///
    /// ```
    /// use frep::experiments::ExperimentConfig;
    /// let cfg = ExperimentConfig::from_kv_str("p = 1.5\ndepths = 4, 6 # shallow\n").unwrap();
    /// assert_eq!(cfg.p, 1.5);
    /// assert_eq!(cfg.depths, vec![4, 6]);
    /// assert!(ExperimentConfig::from_kv_str("colour = red").is_err());
    /// ```
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    /// Sets one key (used for command-line overrides as well).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "p" => self.p = parse(key, value)?,
            "point" => {
                self.point = match value {
                    "generic" => PointKind::Generic,
                    "periodic" => PointKind::Periodic,
                    "preimage" => PointKind::Preimage,
                    _ => return Err(Error::Config(format!("point: unknown kind {value:?}"))),
                }
            }
            "anchor" => self.anchor = value.to_string(),
            "depths" => self.depths = parse_list(key, value)?,
            "mode" => {
                self.mode = match value {
                    "return" => Mode::Return,
                    "hitting" => Mode::Hitting,
                    "both" => Mode::Both,
                    _ => return Err(Error::Config(format!("mode: unknown mode {value:?}"))),
                }
            }
            "d_max" => self.d_max = parse(key, value)?,
            "trials" => self.trials = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "seed" => self.seed = Some(parse(key, value)?),
            "scaling" => {
                self.scaling = if value == "empirical" {
                    ScalingChoice::Empirical
                } else {
                    match parse_list::<f64>(key, value)?.as_slice() {
                        &[c, alpha] => ScalingChoice::Override { c, alpha },
                        _ => {
                            return Err(Error::Config(
                                "scaling: expected empirical or c,alpha".into(),
                            ))
                        }
                    }
                }
            }
            "scaling_trials" => self.scaling_trials = parse(key, value)?,
            "scaling_grid" => self.scaling_grid = parse_list(key, value)?,
            "measure_steps" => self.measure_steps = parse(key, value)?,
            "burn_in" => self.burn_in = parse(key, value)?,
            "workers" => self.workers = parse(key, value)?,
            "cluster_window" => {
                self.cluster_window = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "table_depth" => self.table_depth = parse(key, value)?,
            "lt_grid" => self.lt_grid = parse_list(key, value)?,
            "ks_tolerance" => self.ks_tolerance = parse(key, value)?,
            "lt_tolerance" => self.lt_tolerance = parse(key, value)?,
            "censor_tolerance" => self.censor_tolerance = parse(key, value)?,
            "condition_samples" => self.condition_samples = parse(key, value)?,
            "zext_word" => self.zext_word = parse_list(key, value)?,
            "wander_n" => self.wander_n = parse(key, value)?,
            "wander_trials" => self.wander_trials = parse(key, value)?,
            "subordinator_trials" => self.subordinator_trials = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required".into()))
    }

    fn validate(&self) -> Result<()> {
        MapParams::new(self.p)?;
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::Config(
                "depths must be a non-empty list of positive integers".into(),
            ));
        }
        if self.d_max == 0 || self.trials == 0 || !(self.horizon > 0.0) {
            return Err(Error::Config(
                "d_max, trials and horizon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Resolved anchor of the target family.
#[derive(Debug, Clone, PartialEq)]
pub enum Anchor {
    Generic(f64),
    Periodic(SymbolWord),
    Preimage(SymbolWord),
}

fn parse_word(text: &str) -> Result<SymbolWord> {
    if text == "none" || text.is_empty() {
        return SymbolWord::new(Vec::new());
    }
    SymbolWord::new(parse_list("anchor", text)?)
}

/// Resolves the configured anchor; a random generic anchor is drawn from the
/// seed so that it is non-grazing down to the deepest depth.
pub fn resolve_anchor(cfg: &ExperimentConfig, table: &BoundaryTable, seed: u64) -> Result<Anchor> {
    Ok(match cfg.point {
        PointKind::Generic => {
            let x = if cfg.anchor == "random" {
                let depth = cfg.depths.iter().copied().max().unwrap_or(1);
                generic_anchor(table, &mut trial_rng(seed, STREAM_ANCHOR, 0), depth)?
            } else {
                parse("anchor", &cfg.anchor)?
            };
            Anchor::Generic(x)
        }
        PointKind::Periodic => Anchor::Periodic(parse_word(&cfg.anchor)?),
        PointKind::Preimage => Anchor::Preimage(parse_word(&cfg.anchor)?),
    })
}

/// Depth-`n` target of the anchor; it must lie in `Y`.
pub fn build_target(table: &BoundaryTable, anchor: &Anchor, n: usize) -> Result<IntervalTarget> {
    let target = match anchor {
        Anchor::Generic(x) => cylinder_of_point(table, *x, n)?,
        Anchor::Periodic(w) => periodic_target(table, w, n)?,
        Anchor::Preimage(w) => preimage_component(table, w, n)?,
    };
    if !target.within_inducing_set() {
        return Err(Error::TargetOutsideInducingSet {
            lo: target.lo(),
            hi: target.hi(),
        });
    }
    Ok(target)
}

/// Default Darling-Kac grid: three decades, shorter for `p = 1` where the
/// estimate is costlier per unit of `n`.
pub fn default_scaling_grid(p: f64) -> Vec<u64> {
    if p == 1.0 {
        vec![1_000, 3_000, 10_000, 30_000, 100_000]
    } else {
        vec![1_000, 3_000, 10_000, 30_000, 100_000, 300_000, 1_000_000]
    }
}

/// Fitted (or overridden) normalizing sequence.
pub fn scaling_model(
    cfg: &ExperimentConfig,
    table: &BoundaryTable,
    seed: u64,
) -> Result<ScalingModel> {
    match cfg.scaling {
        ScalingChoice::Override { c, alpha } => ScalingModel::power(c, alpha),
        ScalingChoice::Empirical => {
            let grid = if cfg.scaling_grid.is_empty() {
                default_scaling_grid(cfg.p)
            } else {
                cfg.scaling_grid.clone()
            };
            estimate_normalizing_sequence(
                table,
                &grid,
                cfg.scaling_trials,
                crate::rng::mix64(seed ^ STREAM_SCALE),
            )
        }
    }
}

/// Predicted limits for a target class: the cluster (merged) process and
/// the law of the first unmerged event.
pub fn predicted_limits(
    alpha: f64,
    class: &PointClass,
    mode: Mode,
    q_ratio: f64,
) -> (LawSpec, LawSpec) {
    let lam = gamma(1.0 + alpha);
    let theta = class.extremal_index();
    let ret = mode == Mode::Return;
    if alpha == 1.0 {
        return match class {
            PointClass::Periodic { .. } => (
                LawSpec::Cfpp {
                    alpha,
                    lambda: theta,
                    theta,
                },
                if ret {
                    LawSpec::WMix {
                        alpha,
                        theta,
                        lambda: theta,
                    }
                } else {
                    LawSpec::Exp { lambda: theta }
                },
            ),
            _ => (LawSpec::Ppp { lambda: 1.0 }, LawSpec::Exp { lambda: 1.0 }),
        };
    }
    match class {
        PointClass::Generic { .. } => (
            LawSpec::Fpp { alpha, lambda: lam },
            LawSpec::MlH { alpha, lambda: lam },
        ),
        PointClass::Periodic { .. } => (
            LawSpec::Cfpp {
                alpha,
                lambda: theta * lam,
                theta,
            },
            if ret {
                LawSpec::WMix {
                    alpha,
                    theta,
                    lambda: theta * lam,
                }
            } else {
                LawSpec::MlH {
                    alpha,
                    lambda: theta * lam,
                }
            },
        ),
        PointClass::PreimageZero { .. } => {
            let (tau, v) = (q_ratio, q_ratio.powf(1.0 / alpha));
            let spec = if ret {
                LawSpec::RppJTilde { alpha, tau, v }
            } else {
                LawSpec::DrppJ { alpha, tau, v }
            };
            (spec, spec)
        }
    }
}

/// Laplace transform of the `d`-th event of a cluster process, when known.
pub fn level_laplace(spec: &LawSpec, d: usize, s: f64) -> Result<Option<f64>> {
    if d == 1 {
        return reference_laplace(spec, s).map(Some);
    }
    Ok(match spec {
        LawSpec::Fpp { .. } | LawSpec::Cfpp { .. } | LawSpec::Ppp { .. } => {
            Some(reference_laplace(spec, s)?.powi(d as i32))
        }
        _ => None,
    })
}

/// One merged cluster of raw events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub clock: u64,
    pub size: u32,
    /// Position of the entry that opened the cluster.
    pub entry: f64,
}

/// Raw outcome of one trial of the induced chain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialOutcome {
    /// First (unmerged) event.
    pub first_event: Option<u64>,
    /// Clusters after the initial one (return mode) in time order.
    pub clusters: Vec<Cluster>,
    /// Whether the last cluster is known to be complete.
    pub last_complete: bool,
    /// Clock of an excursion overflow inside the horizon.
    pub overflow: Option<u64>,
}

/// Runs the induced chain from `start` until `need` clusters are complete
/// or the raw clock passes `raw_limit`. In return mode time 0 counts as an
/// event, so returns within `window` of it belong to the initial cluster
/// and are not listed.
pub fn simulate_trial(
    table: &BoundaryTable,
    target: &Interval,
    start: f64,
    return_mode: bool,
    raw_limit: u64,
    window: u64,
    need: usize,
) -> Result<TrialOutcome> {
    let k_cap = table.options().k_cap;
    let mut out = TrialOutcome::default();
    let mut state = InducedState { y: start, clock: 0 };
    let mut last = return_mode.then_some(0u64);
    let mut in_initial = return_mode;
    loop {
        state = match table.induced_step(state) {
            Ok((s, _)) => s,
            Err(Error::ExcursionOverflow { .. }) => {
                if state.clock.saturating_add(k_cap) < raw_limit {
                    out.overflow = Some(state.clock);
                }
                out.last_complete = true;
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let c = state.clock;
        if c > raw_limit {
            break;
        }
        if target.contains(state.y) {
            out.first_event.get_or_insert(c);
            match last {
                Some(l) if c - l <= window => {
                    if !in_initial {
                        if let Some(cl) = out.clusters.last_mut() {
                            cl.size += 1;
                        }
                    }
                }
                _ => {
                    in_initial = false;
                    if out.clusters.len() == need {
                        out.last_complete = true;
                        return Ok(out);
                    }
                    out.clusters.push(Cluster {
                        clock: c,
                        size: 1,
                        entry: state.y,
                    });
                }
            }
            last = Some(c);
        } else if out.clusters.len() == need && last.is_some_and(|l| c > l + window) {
            out.last_complete = true;
            return Ok(out);
        }
    }
    out.last_complete = last.is_some_and(|l| state.clock > l + window);
    Ok(out)
}

/// Normalised samples of one depth and mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModeSamples {
    /// `levels[d-1]`: observed times of the `d`-th cluster.
    pub levels: Vec<Vec<f64>>,
    /// Observed first unmerged event times.
    pub first_event: Vec<f64>,
    /// Trials per sample list (observed + censored).
    pub trials: u64,
    /// Cluster multiplicities (`hist[k]` = complete clusters of size `k`).
    pub multiplicity: Vec<u64>,
    /// `(W_1, min(W_2, H/2))` over trials with `W_1 ≤ H/2`.
    pub pairs: Vec<(f64, f64)>,
    /// Normalised entry positions `(y - lo)/(hi - lo)` of the first cluster.
    pub entries: Vec<f64>,
    pub overflow: u64,
}

/// Runs `trials` trials of one depth and mode. Trial `i` uses stream
/// `trial_rng(seed, stream, i)`, so the result does not depend on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn collect_samples(
    table: &BoundaryTable,
    target: &Interval,
    mode: Mode,
    gamma_n: f64,
    horizon: f64,
    window: u64,
    d_max: usize,
    trials: u64,
    seed: u64,
    stream: u64,
) -> Result<ModeSamples> {
    let return_mode = match mode {
        Mode::Return => true,
        Mode::Hitting => false,
        Mode::Both => return Err(invalid("collect_samples needs a single mode")),
    };
    let raw_limit = (horizon / gamma_n).min(u64::MAX as f64 / 2.0) as u64;
    let need = d_max.max(2);
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, stream, i);
            let start = if return_mode {
                rng.random_range(target.lo..=target.hi)
            } else {
                rng.random_range(0.5..=1.0)
            };
            simulate_trial(table, target, start, return_mode, raw_limit, window, need)
        })
        .collect::<Result<_>>()?;
    let mut out = ModeSamples {
        levels: vec![Vec::new(); d_max],
        trials,
        ..Default::default()
    };
    let half = horizon / 2.0;
    for o in &outcomes {
        if o.overflow.is_some() {
            out.overflow += 1;
        }
        if let Some(c) = o.first_event {
            // Returns inside the initial cluster are below the resolution of the
            // normalised clock; they realise the atom at 0 of the limit law.
            let t = if return_mode && c <= window {
                0.0
            } else {
                c as f64 * gamma_n
            };
            out.first_event.push(t);
        }
        for (d, cl) in o.clusters.iter().take(d_max).enumerate() {
            out.levels[d].push(cl.clock as f64 * gamma_n);
        }
        let complete = o
            .clusters
            .len()
            .saturating_sub(usize::from(!o.last_complete));
        for cl in &o.clusters[..complete] {
            let k = cl.size as usize;
            if out.multiplicity.len() <= k {
                out.multiplicity.resize(k + 1, 0);
            }
            out.multiplicity[k] += 1;
        }
        if let Some(cl) = o.clusters.first() {
            out.entries.push((cl.entry - target.lo) / target.length());
            let w1 = cl.clock as f64 * gamma_n;
            if w1 <= half && o.overflow.is_none() {
                let w2 = o
                    .clusters
                    .get(1)
                    .map_or(half, |c2| (c2.clock - cl.clock) as f64 * gamma_n);
                out.pairs.push((w1, w2.min(half)));
            }
        }
    }
    Ok(out)
}

/// Empirical CDF rows `(t, F̂(t), SE)` on `points` equally spaced times of
/// `[0, horizon]`; `trials - samples.len()` samples are censored beyond it.
pub fn ecdf_table(
    samples: &[f64],
    trials: u64,
    horizon: f64,
    points: usize,
) -> Vec<(f64, f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = trials.max(1) as f64;
    let steps = points.max(2) - 1;
    (0..=steps)
        .map(|i| {
            let t = horizon * i as f64 / steps as f64;
            let f = sorted.partition_point(|&x| x <= t) as f64 / n;
            (t, f, (f * (1.0 - f) / n).sqrt())
        })
        .collect()
}

/// Distance of a normalised sample to a predicted law.
pub fn compare_to_limit(
    samples: &[f64],
    trials: u64,
    spec: &LawSpec,
    s_grid: &[f64],
) -> Result<Distance> {
    let censored = trials as usize - samples.len();
    lt_and_ks(samples, censored, spec, s_grid)
}

/// Largest Laplace distance of the `d`-th event over `s_grid`, when the
/// transform of the predicted `d`-th event is known.
fn level_lt(
    samples: &[f64],
    trials: u64,
    spec: &LawSpec,
    d: usize,
    s_grid: &[f64],
) -> Result<Option<f64>> {
    let censored = trials as usize - samples.len();
    let mut worst = 0.0f64;
    for &s in s_grid {
        match level_laplace(spec, d, s)? {
            Some(r) => {
                worst =
                    worst.max((crate::laws::empirical_laplace(samples, censored, s).0 - r).abs())
            }
            None => return Ok(None),
        }
    }
    Ok(Some(worst))
}

/// Distances of the `d`-th cluster time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub d: usize,
    pub observed: u64,
    pub ks: Option<f64>,
    pub lt: Option<f64>,
}

/// Results of one mode at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: Mode,
    /// Predicted cluster process.
    pub reference: LawSpec,
    /// Predicted law of the first unmerged event.
    pub first_event_reference: LawSpec,
    pub trials: u64,
    /// Trials cut short by an excursion overflow inside the horizon.
    pub censored: u64,
    pub levels: Vec<LevelStats>,
    pub first_event: Distance,
    pub multiplicity: Vec<u64>,
    pub chi_square: Option<ChiSquareTest>,
    pub independence: Option<JointLaplace>,
    /// Normalised re-entry positions: sup over 10 bins of |density - 1|.
    pub reentry_sup: f64,
    /// Distance used for flags: KS of the first event when available, otherwise Laplace.
    pub primary: f64,
    #[serde(skip)]
    pub samples: ModeSamples,
}

impl ModeRun {
    /// ECDF rows of the `d`-th cluster time (`d = 0`: first unmerged event).
    pub fn ecdf(&self, d: usize, horizon: f64) -> Vec<(f64, f64, f64)> {
        let s = if d == 0 {
            &self.samples.first_event
        } else {
            &self.samples.levels[d - 1]
        };
        ecdf_table(s, self.trials, horizon, ECDF_POINTS)
    }
}

/// sup over `bins` equal bins of `|empirical density / uniform - 1|`.
pub fn uniform_sup_deviation(positions: &[f64], bins: usize) -> f64 {
    if positions.is_empty() {
        return f64::NAN;
    }
    let mut h = vec![0u64; bins];
    for &u in positions {
        h[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = positions.len() as f64 / bins as f64;
    h.iter()
        .map(|&c| (c as f64 / expected - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `sup_t |F_hit(t) - Γ(1+α) I^α(1 - F_ret)(t)|` on a uniform grid of `[0, horizon]`.
pub fn closure_distance(
    ret: &ModeSamples,
    hit: &ModeSamples,
    alpha: f64,
    horizon: f64,
) -> Result<f64> {
    let grid = uniform_grid(horizon / 400.0, horizon)?;
    let ecdf = |s: &ModeSamples| -> Result<GridFunction> {
        let mut sorted = s.first_event.clone();
        sorted.sort_by(f64::total_cmp);
        let n = s.trials as f64;
        GridFunction::from_fn(&grid, |t| sorted.partition_point(|&x| x <= t) as f64 / n)
    };
    let g0 = GridFunction::from_fn(&grid, |_| 1.0)?;
    let pred = hitting_from_return(&g0, &ecdf(ret)?, alpha)?;
    let emp = ecdf(hit)?;
    Ok(pred
        .values()
        .iter()
        .zip(emp.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Everything measured at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub n: usize,
    pub interval: Interval,
    pub word: Vec<u64>,
    pub mu: MeasureEstimate,
    pub gamma: f64,
    pub raw_horizon: u64,
    pub cluster_window: u64,
    pub theta_predicted: f64,
    /// `μ̂(Q)/μ̂(B)` with its standard error (periodic targets).
    pub theta_hat: Option<(f64, f64)>,
    /// `μ̂(B)/μ̂(E_n)` (preimage targets).
    pub q_hat: Option<(f64, f64)>,
    /// `γ(μ̂(E_n)) E_{μ_Y}[r_{[0, c_n]}]` (preimage targets, `p = 1`).
    pub hitting_scale_ratio: Option<f64>,
    pub runs: Vec<ModeRun>,
    pub closure: Option<f64>,
}

/// Full report of a `repp` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: String,
    pub config: ExperimentConfig,
    pub anchor: f64,
    pub scaling: ScalingModel,
    pub depths: Vec<DepthReport>,
    /// Whether the primary distance is non-increasing in `n` up to the KS
    /// noise scale `1/sqrt(trials)`, per mode.
    pub monotone: Vec<bool>,
    /// Tripped acceptance flags (empty on success).
    pub flags: Vec<String>,
    #[serde(skip)]
    pub runtime: Duration,
}

fn ratio_with_se(num: &MeasureEstimate, den: &MeasureEstimate) -> (f64, f64) {
    let r = num.value / den.value;
    let rel = ((num.std_error / num.value).powi(2) + (den.std_error / den.value).powi(2)).sqrt();
    (r, r * rel)
}

/// Runs the full shrinking-target experiment described by `cfg`.
pub fn run_repp(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let started = std::time::Instant::now();
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let params = MapParams::new(cfg.p)?;
    let alpha = params.alpha();
    let table = build_boundary_table(&params, cfg.table_depth)?;
    let anchor = resolve_anchor(cfg, &table, seed)?;
    let model = scaling_model(cfg, &table, seed)?;
    let mut depths = Vec::with_capacity(cfg.depths.len());
    for (di, &n) in cfg.depths.iter().enumerate() {
        let target = build_target(&table, &anchor, n)?;
        let mut sets = vec![target.interval];
        let mut split = None;
        if let PointClass::Periodic { q, .. } = target.point_class {
            let s = split_annulus(&table, &target, q)?;
            sets.extend(s.q.iter().copied());
            split = Some(s);
        }
        if let PointClass::PreimageZero { .. } = target.point_class {
            sets.push(Interval::new(0.5, 0.5 * (1.0 + table.boundary(n as u64)))?);
        }
        let mu_seed = crate::rng::mix64(seed ^ STREAM_MU ^ (di as u64).wrapping_mul(0x9e37));
        let est = estimate_induced_measure(&table, &sets, cfg.measure_steps, cfg.burn_in, mu_seed)?;
        let mu = est[0];
        if mu.value <= 0.0 {
            return Err(invalid(format!(
                "depth {n}: target never visited in {} steps",
                cfg.measure_steps
            )));
        }
        let theta_hat = split.as_ref().map(|_| {
            let q_mass = MeasureEstimate {
                value: est[1..].iter().map(|e| e.value).sum(),
                std_error: est[1..]
                    .iter()
                    .map(|e| e.std_error * e.std_error)
                    .sum::<f64>()
                    .sqrt(),
                n_steps: mu.n_steps,
            };
            ratio_with_se(&q_mass, &mu)
        });
        let q_hat = match target.point_class {
            PointClass::PreimageZero { k: 0, .. } => Some((1.0, 0.0)),
            PointClass::PreimageZero { .. } => Some(ratio_with_se(&mu, &est[1])),
            _ => None,
        };
        let gamma_n = gamma_scale(&model, mu.value)?;
        let hitting_scale_ratio = match target.point_class {
            PointClass::PreimageZero { .. } if cfg.p == 1.0 => {
                let e_n = if q_hat == Some((1.0, 0.0)) {
                    mu.value
                } else {
                    est[1].value
                };
                let w = wandering_stats(
                    &table,
                    n as u64,
                    cfg.condition_samples.max(1000),
                    mu_seed ^ 1,
                )?;
                w.mean_hitting
                    .map(|(m, _)| gamma_scale(&model, e_n).map(|g| g * m))
                    .transpose()?
            }
            _ => None,
        };
        let window = cfg.cluster_window.unwrap_or(match target.point_class {
            PointClass::Periodic { q, .. } => q as u64,
            _ => 0,
        });
        let q_ratio = q_hat.map_or(1.0, |q| q.0.min(1.0));
        let mut runs = Vec::new();
        for &mode in cfg.mode.runs() {
            let stream = STREAM_TRIALS + 2 * di as u64 + u64::from(mode == Mode::Hitting);
            let samples = collect_samples(
                &table,
                &target.interval,
                mode,
                gamma_n,
                cfg.horizon,
                window,
                cfg.d_max,
                cfg.trials,
                seed,
                stream,
            )?;
            let (reference, first_ref) =
                predicted_limits(alpha, &target.point_class, mode, q_ratio);
            let first_event =
                compare_to_limit(&samples.first_event, cfg.trials, &first_ref, &cfg.lt_grid)?;
            let mut levels = Vec::with_capacity(cfg.d_max);
            for d in 1..=cfg.d_max {
                let s = &samples.levels[d - 1];
                let ks = if d == 1 && reference.has_cdf() {
                    compare_to_limit(s, cfg.trials, &reference, &cfg.lt_grid)?.ks
                } else {
                    None
                };
                let lt = level_lt(s, cfg.trials, &reference, d, &cfg.lt_grid)?;
                levels.push(LevelStats {
                    d,
                    observed: s.len() as u64,
                    ks,
                    lt,
                });
            }
            let chi_square = match target.point_class {
                PointClass::Periodic { .. } if samples.multiplicity.iter().sum::<u64>() > 0 => {
                    Some(geometric_chi_square(
                        &samples.multiplicity,
                        target.point_class.extremal_index(),
                    )?)
                }
                _ => None,
            };
            let independence = (samples.pairs.len() >= 100)
                .then(|| empirical_laplace_joint(&samples.pairs, 1.0, 1.0));
            let primary = first_event.ks.unwrap_or(first_event.lt);
            runs.push(ModeRun {
                mode,
                reference,
                first_event_reference: first_ref,
                trials: cfg.trials,
                censored: samples.overflow,
                levels,
                first_event,
                multiplicity: samples.multiplicity.clone(),
                chi_square,
                independence,
                reentry_sup: uniform_sup_deviation(&samples.entries, 10),
                primary,
                samples,
            });
        }
        let closure = if runs.len() == 2 {
            Some(closure_distance(
                &runs[0].samples,
                &runs[1].samples,
                alpha,
                cfg.horizon,
            )?)
        } else {
            None
        };
        depths.push(DepthReport {
            n,
            interval: target.interval,
            word: target.word.symbols().to_vec(),
            mu,
            gamma: gamma_n,
            raw_horizon: (cfg.horizon / gamma_n).min(u64::MAX as f64 / 2.0) as u64,
            cluster_window: window,
            theta_predicted: target.point_class.extremal_index(),
            theta_hat,
            q_hat,
            hitting_scale_ratio,
            runs,
            closure,
        });
    }
    let noise = 1.0 / (cfg.trials as f64).sqrt();
    let monotone: Vec<bool> = (0..cfg.mode.runs().len())
        .map(|m| {
            depths
                .windows(2)
                .all(|w| w[1].runs[m].primary <= w[0].runs[m].primary + noise)
        })
        .collect();
    let mut flags = Vec::new();
    for d in &depths {
        for r in &d.runs {
            if r.censored as f64 > cfg.censor_tolerance * r.trials as f64 {
                flags.push(format!(
                    "n={} {:?}: {} of {} trials censored",
                    d.n, r.mode, r.censored, r.trials
                ));
            }
        }
    }
    if let Some(last) = depths.last() {
        for r in &last.runs {
            let tol = if r.first_event.ks.is_some() {
                cfg.ks_tolerance
            } else {
                cfg.lt_tolerance
            };
            if r.primary > tol {
                flags.push(format!(
                    "n={} {:?}: distance {:.4} exceeds {tol}",
                    last.n, r.mode, r.primary
                ));
            }
            if let Some(c) = r.chi_square {
                if c.p_value < 0.01 {
                    flags.push(format!(
                        "n={} {:?}: multiplicity chi-square p = {:.2e}",
                        last.n, r.mode, c.p_value
                    ));
                }
            }
        }
        if let Some((t, _)) = last.theta_hat {
            if (t - last.theta_predicted).abs() > 0.05 {
                flags.push(format!(
                    "n={}: extremal index {t:.4} vs {:.4}",
                    last.n, last.theta_predicted
                ));
            }
        }
    }
    for (m, ok) in monotone.iter().enumerate() {
        if !ok {
            flags.push(format!(
                "{:?}: distance not monotone in n",
                cfg.mode.runs()[m]
            ));
        }
    }
    let anchor_point = build_target(&table, &anchor, cfg.depths[0])?
        .point_class
        .anchor();
    Ok(ExperimentReport {
        schema: SCHEMA.into(),
        config: cfg.clone(),
        anchor: anchor_point,
        scaling: model,
        depths,
        monotone,
        flags,
        runtime: started.elapsed(),
    })
}

/// Preimage depth `k` against the thinned reference and FPP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub k: usize,
    pub n: usize,
    pub q_hat: (f64, f64),
    /// Laplace distance of the thinned `𝔍̃` reference to `H_α(Γ(1+α))`.
    pub reference_vs_fpp: f64,
    /// Laplace distances of the empirical return times (when trials > 0).
    pub empirical_vs_reference: Option<f64>,
    pub empirical_vs_fpp: Option<f64>,
}

fn lt_gap(a: &LawSpec, b: &LawSpec, s_grid: &[f64]) -> Result<f64> {
    let mut d = 0.0f64;
    for &s in s_grid {
        d = d.max((reference_laplace(a, s)? - reference_laplace(b, s)?).abs());
    }
    Ok(d)
}

/// Return-mode references for the preimages `z_k = T_2^{-k}(1/2)` (word `0^k`),
/// `k = 0..=k_max`, at the deepest configured depth. `Q̂_k` is measured; with
/// `trials > 0` the empirical return times are compared as well.
pub fn preimage_trend(cfg: &ExperimentConfig, k_max: usize, trials: u64) -> Result<Vec<TrendRow>> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let params = MapParams::new(cfg.p)?;
    let alpha = params.alpha();
    if alpha == 1.0 {
        return Err(invalid("the thinned 𝔍̃ references need p > 1"));
    }
    let table = build_boundary_table(&params, cfg.table_depth)?;
    let n = *cfg.depths.iter().max().expect("validated");
    let e_n = Interval::new(0.5, 0.5 * (1.0 + table.boundary(n as u64)))?;
    let targets: Vec<IntervalTarget> = (0..=k_max)
        .map(|k| build_target(&table, &Anchor::Preimage(SymbolWord::new(vec![0; k])?), n))
        .collect::<Result<_>>()?;
    let mut sets = vec![e_n];
    sets.extend(targets.iter().map(|t| t.interval));
    let est = estimate_induced_measure(
        &table,
        &sets,
        cfg.measure_steps,
        cfg.burn_in,
        crate::rng::mix64(seed ^ STREAM_MU),
    )?;
    let model = if trials > 0 {
        Some(scaling_model(cfg, &table, seed)?)
    } else {
        None
    };
    let fpp = LawSpec::MlH {
        alpha,
        lambda: gamma(1.0 + alpha),
    };
    let mut rows = Vec::new();
    for (k, target) in targets.iter().enumerate() {
        let q_hat = if k == 0 {
            (1.0, 0.0)
        } else {
            ratio_with_se(&est[k + 1], &est[0])
        };
        let (reference, _) =
            predicted_limits(alpha, &target.point_class, Mode::Return, q_hat.0.min(1.0));
        let reference_vs_fpp = lt_gap(&reference, &fpp, &cfg.lt_grid)?;
        let (mut empirical_vs_reference, mut empirical_vs_fpp) = (None, None);
        if let Some(model) = &model {
            let gamma_n = gamma_scale(model, est[k + 1].value)?;
            let stream = STREAM_TRIALS + 0x100 + k as u64;
            let s = collect_samples(
                &table,
                &target.interval,
                Mode::Return,
                gamma_n,
                cfg.horizon,
                0,
                1,
                trials,
                seed,
                stream,
            )?;
            empirical_vs_reference =
                Some(compare_to_limit(&s.first_event, trials, &reference, &cfg.lt_grid)?.lt);
            empirical_vs_fpp =
                Some(compare_to_limit(&s.first_event, trials, &fpp, &cfg.lt_grid)?.lt);
        }
        rows.push(TrendRow {
            k,
            n,
            q_hat,
            reference_vs_fpp,
            empirical_vs_reference,
            empirical_vs_fpp,
        });
    }
    Ok(rows)
}

/// `θ̂_n = μ̂(Q(B_n))/μ̂(B_n)` for the periodic point coded by `period`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalIndexRow {
    pub n: usize,
    pub theta_hat: f64,
    pub std_error: f64,
    pub theta: f64,
}

pub fn estimate_extremal_index(
    table: &BoundaryTable,
    period: &SymbolWord,
    depths: &[usize],
    steps: u64,
    burn_in: u64,
    seed: u64,
) -> Result<Vec<ExtremalIndexRow>> {
    depths
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let target = periodic_target(table, period, n)?;
            if !target.within_inducing_set() {
                return Err(Error::TargetOutsideInducingSet {
                    lo: target.lo(),
                    hi: target.hi(),
                });
            }
            let split = split_annulus(table, &target, period.len())?;
            let mut sets = vec![target.interval];
            sets.extend(split.q.iter().copied());
            let est = estimate_induced_measure(
                table,
                &sets,
                steps,
                burn_in,
                crate::rng::mix64(seed ^ i as u64),
            )?;
            let q_mass = MeasureEstimate {
                value: est[1..].iter().map(|e| e.value).sum(),
                std_error: est[1..]
                    .iter()
                    .map(|e| e.std_error * e.std_error)
                    .sum::<f64>()
                    .sqrt(),
                n_steps: est[0].n_steps,
            };
            let (theta_hat, std_error) = ratio_with_se(&q_mass, &est[0]);
            Ok(ExtremalIndexRow {
                n,
                theta_hat,
                std_error,
                theta: target.point_class.extremal_index(),
            })
        })
        .collect()
}

/// Numerical proxies of the short-return and mixing conditions at one depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub n: usize,
    pub mu: f64,
    pub gamma: f64,
    /// Extremal index estimate (periodic targets).
    pub theta_hat: Option<f64>,
    /// Median of `γ(μ(B_n)) τ_n` over `B_n`; should tend to 0.
    pub tau_median: f64,
    /// `μ_Q(r_B < τ_n)`; should tend to 0.
    pub early_return_escape: f64,
    /// `μ_U(r_B > τ_n)` (periodic targets); should tend to 0.
    pub late_return_core: Option<f64>,
    /// sup-norm deviation of the re-entry density from uniform.
    pub reentry_sup: f64,
}

/// Condition proxies for every configured depth. The structural condition
/// on the target sets is not tested numerically.
pub fn check_a_conditions(cfg: &ExperimentConfig) -> Result<Vec<ConditionRow>> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let params = MapParams::new(cfg.p)?;
    let table = build_boundary_table(&params, cfg.table_depth)?;
    let anchor = resolve_anchor(cfg, &table, seed)?;
    let model = scaling_model(cfg, &table, seed)?;
    let m = cfg.condition_samples;
    let mut rows = Vec::new();
    for (di, &n) in cfg.depths.iter().enumerate() {
        let target = build_target(&table, &anchor, n)?;
        let b = target.interval;
        let (u, q_parts) = match target.point_class {
            PointClass::Periodic { q, .. } => {
                let s = split_annulus(&table, &target, q)?;
                (Some(s.u), s.q)
            }
            _ => (None, vec![b]),
        };
        let mut sets = vec![b];
        sets.extend(q_parts.iter().copied());
        let est = estimate_induced_measure(
            &table,
            &sets,
            cfg.measure_steps,
            cfg.burn_in,
            crate::rng::mix64(seed ^ STREAM_MU ^ (di as u64).wrapping_mul(0x9e37)),
        )?;
        let mu = est[0].value;
        let gamma_n = gamma_scale(&model, mu)?;
        let theta_hat = u.map(|_| est[1..].iter().map(|e| e.value).sum::<f64>() / mu);
        let stream = STREAM_COND + 4 * di as u64;
        let raw_limit = (cfg.horizon / gamma_n) as u64;

        let mut taus: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let y = trial_rng(seed, stream, i).random_range(b.lo..=b.hi);
                tau_of_point(&table, y, n).map(|t| t as f64 * gamma_n)
            })
            .collect::<Result<_>>()?;
        taus.sort_by(f64::total_cmp);
        let tau_median = taus[taus.len() / 2];

        // Return before τ_n(y) starting from a uniform point of a union of intervals.
        let early = |parts: &[Interval], s: u64, late: bool| -> Result<f64> {
            let total: f64 = parts.iter().map(Interval::length).sum();
            let hits: u64 = (0..m)
                .into_par_iter()
                .map(|i| -> Result<u64> {
                    let mut rng = trial_rng(seed, s, i);
                    let mut r = rng.random_range(0.0..total);
                    let mut y = parts[0].lo;
                    for p in parts {
                        if r <= p.length() {
                            y = p.lo + r;
                            break;
                        }
                        r -= p.length();
                    }
                    let tau = tau_of_point(&table, y, n)?;
                    let o = simulate_trial(&table, &b, y, false, tau.max(1), 0, 1)?;
                    let returned = o.first_event.is_some_and(|c| c < tau);
                    Ok(u64::from(if late {
                        o.first_event.map_or(true, |c| c > tau)
                    } else {
                        returned
                    }))
                })
                .sum::<Result<u64>>()?;
            Ok(hits as f64 / m as f64)
        };
        let early_return_escape = early(&q_parts, stream + 1, false)?;
        let late_return_core = match u {
            Some(u) => Some(early(&[u], stream + 2, true)?),
            None => None,
        };
        let window = match target.point_class {
            PointClass::Periodic { q, .. } => q as u64,
            _ => 0,
        };
        let entries: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| -> Result<Option<f64>> {
                let y = trial_rng(seed, stream + 3, i).random_range(b.lo..=b.hi);
                let o = simulate_trial(&table, &b, y, true, raw_limit, window, 1)?;
                Ok(o.clusters.first().map(|c| (c.entry - b.lo) / b.length()))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        rows.push(ConditionRow {
            n,
            mu,
            gamma: gamma_n,
            theta_hat,
            tau_median,
            early_return_escape,
            late_return_core,
            reentry_sup: uniform_sup_deviation(&entries, 10),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(p: f64) -> BoundaryTable {
        build_boundary_table(&MapParams::new(p).unwrap(), 4096).unwrap()
    }

    #[test]
    fn config_round_trip_and_errors() {
        let cfg = ExperimentConfig::from_kv_str(
            "p=1.5\npoint=periodic\nanchor=0\nmode=both\nscaling=1.2,0.6667\ncluster_window=auto\nseed=9\n",
        )
        .unwrap();
        assert_eq!(cfg.point, PointKind::Periodic);
        assert_eq!(cfg.mode, Mode::Both);
        assert_eq!(
            cfg.scaling,
            ScalingChoice::Override {
                c: 1.2,
                alpha: 0.6667
            }
        );
        assert_eq!(cfg.seed, Some(9));
        assert!(ExperimentConfig::from_kv_str("p").is_err());
        assert!(ExperimentConfig::from_kv_str("mode=sideways").is_err());
        assert!(ExperimentConfig::default().require_seed().is_err());
    }

    #[test]
    fn preimage_outside_inducing_set_is_rejected() {
        let t = table(2.0);
        let w = SymbolWord::new(vec![1]).unwrap();
        assert!(matches!(
            build_target(&t, &Anchor::Preimage(w), 20),
            Err(Error::TargetOutsideInducingSet { .. })
        ));
    }

    #[test]
    fn simulate_trial_merges_immediate_returns() {
        // Near x = 1 points of U return after one step: the initial cluster absorbs them.
        let t = table(2.0);
        let b = Interval::new(1.0 - 2f64.powi(-8), 1.0).unwrap();
        let start = 1.0 - 2f64.powi(-12);
        let o = simulate_trial(&t, &b, start, true, 10_000_000, 1, 1).unwrap();
        assert_eq!(o.first_event, Some(1));
        assert!(o.clusters.iter().all(|c| c.clock > 4));
        let o0 = simulate_trial(&t, &b, start, true, 10_000_000, 0, 1).unwrap();
        assert_eq!(o0.clusters[0].clock, 1);
    }

    #[test]
    fn ecdf_rows() {
        let rows = ecdf_table(&[0.5, 1.5], 4, 2.0, 5);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[0], (0.0, 0.0, 0.0));
        assert_eq!(rows[2].1, 0.25);
        assert_eq!(rows[4].1, 0.5);
        assert!((rows[4].2 - (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn uniform_deviation() {
        let u: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(uniform_sup_deviation(&u, 10) < 1e-12);
        assert!((uniform_sup_deviation(&[0.05; 10], 10) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn level_transforms() {
        let f = LawSpec::Fpp {
            alpha: 0.5,
            lambda: 1.0,
        };
        let one = level_laplace(&f, 1, 4.0).unwrap().unwrap();
        assert!((one - 1.0 / 3.0).abs() < 1e-15);
        assert!((level_laplace(&f, 2, 4.0).unwrap().unwrap() - 1.0 / 9.0).abs() < 1e-15);
        let j = LawSpec::RppJTilde {
            alpha: 0.5,
            tau: 1.0,
            v: 1.0,
        };
        assert!(level_laplace(&j, 2, 1.0).unwrap().is_none());
    }
}
