use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use frep::experiments::{
    check_a_conditions, run_repp, ExperimentConfig, ExperimentReport, Mode, CONFIG_KEYS,
    ECDF_POINTS, SCHEMA,
};
use frep::fractional::{
    fixed_point_law, fixed_point_residual, kf_residual, simulate_count_table, uniform_grid,
    FixedPointSource,
};
use frep::laws::{ks_statistic, sample_law, LawSpec, ReferenceCdf};
use frep::lsv::{build_boundary_table, MapParams};
use frep::measure::{
    estimate_induced_measure, estimate_normalizing_sequence, BATCHES, DEFAULT_BURN_IN,
};
use frep::rng::{trial_rng, with_workers};
use frep::targets::Interval;
use frep::zext::run_zext;

#[derive(Parser)]
#[command(
    name = "frep",
    version,
    about = "Rare-event point processes of intermittent maps"
)]
struct Cli {
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "frep-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cell boundaries c_k of the LSV map.
    Boundaries {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 100)]
        k: usize,
    },
    /// Induced-chain estimate of mu on intervals of [1/2, 1].
    Measure {
        #[arg(long)]
        p: f64,
        /// Interval as lo,hi (repeatable).
        #[arg(long = "interval", required = true)]
        intervals: Vec<String>,
        #[arg(long, default_value_t = 20_000_000)]
        steps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Darling-Kac estimate of a_n and the fitted normalizing sequence.
    Scaling {
        #[arg(long)]
        p: f64,
        /// Comma-separated n (default: three decades or more).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Shrinking-target return/hitting experiment.
    Repp(ConfigArgs),
    /// Numerical proxies of the short-return and mixing conditions.
    Conditions(ConfigArgs),
    /// Residual of the compound fixed-point equation.
    Fixedpoint {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.5)]
        s2: f64,
        /// analytic, candidate, exp, or mc (Monte Carlo of the candidate law).
        #[arg(long, default_value = "analytic")]
        source: String,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2e-3)]
        tolerance: f64,
    },
    /// Kolmogorov-Feller residual of a simulated fractional Poisson process.
    Kf {
        #[arg(long)]
        alpha: f64,
        /// Default Gamma(1 + alpha).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        trials: u64,
        #[arg(long, default_value_t = 3.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 3)]
        d_max: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
    },
    /// Lazy-walk Z-extension experiment.
    Zext(ConfigArgs),
    /// Mittag-Leffler sampler checks against closed-form CDFs.
    LawsSelftest {
        #[arg(long, default_value_t = 1_000_000)]
        draws: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key (repeatable), e.g. --set depths=8,10.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Master seed (required for repp and zext).
    #[arg(long)]
    seed: Option<u64>,
    /// Print the recognised config keys and exit.
    #[arg(long)]
    list_keys: bool,
}

impl ConfigArgs {
    fn load(&self, workers: usize) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_kv_str(&text)?
            }
            None => ExperimentConfig::default(),
        };
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set {kv}: expected KEY=VALUE"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        cfg.workers = workers;
        Ok(cfg)
    }
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn ecdf_rows(rows: &[(f64, f64, f64)]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|(t, f, se)| vec![t.to_string(), f.to_string(), se.to_string()])
        .collect()
}

fn mode_tag(m: Mode) -> &'static str {
    match m {
        Mode::Return => "return",
        Mode::Hitting => "hitting",
        Mode::Both => "both",
    }
}

fn write_repp(dir: &Path, report: &ExperimentReport) -> Result<()> {
    let h = report.config.horizon;
    for d in &report.depths {
        for r in &d.runs {
            let tag = format!("n{}_{}", d.n, mode_tag(r.mode));
            write_csv(
                dir,
                &format!("ecdf_{tag}_first.csv"),
                &["t", "F", "SE"],
                ecdf_rows(&r.ecdf(0, h)),
            )?;
            for lvl in 1..=report.config.d_max {
                write_csv(
                    dir,
                    &format!("ecdf_{tag}_d{lvl}.csv"),
                    &["t", "F", "SE"],
                    ecdf_rows(&r.ecdf(lvl, h)),
                )?;
            }
            let hist = r
                .multiplicity
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| vec![k.to_string(), c.to_string()]);
            write_csv(
                dir,
                &format!("multiplicity_{tag}.csv"),
                &["size", "clusters"],
                hist,
            )?;
        }
    }
    write_json(dir, "report.json", &serde_json::to_value(report)?)
}

fn flagged(flags: &[String]) -> ExitCode {
    for f in flags {
        eprintln!("flag: {f}");
    }
    if flags.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out = cli.out.as_path();
    match cli.command {
        Command::Boundaries { p, k } => {
            let table = build_boundary_table(&MapParams::new(p)?, k)?;
            let rows = table
                .exact()
                .iter()
                .enumerate()
                .map(|(i, c)| vec![i.to_string(), format!("{c:.17e}")]);
            write_csv(out, "boundaries.csv", &["k", "c_k"], rows)?;
            let tail = table.tail_fit();
            write_json(
                out,
                "boundaries.json",
                &json!({ "schema": SCHEMA, "p": p, "k_max": k, "tail_fit": tail }),
            )?;
            println!("c_{k} = {:.17e}", table.boundary(k as u64));
            Ok(ExitCode::SUCCESS)
        }
        Command::Measure {
            p,
            intervals,
            steps,
            seed,
        } => {
            let table = build_boundary_table(&MapParams::new(p)?, 4096)?;
            let sets = intervals
                .iter()
                .map(|s| {
                    let (lo, hi) = s
                        .split_once(',')
                        .with_context(|| format!("--interval {s}: expected lo,hi"))?;
                    Ok(Interval::new(lo.trim().parse()?, hi.trim().parse()?)?)
                })
                .collect::<Result<Vec<_>>>()?;
            let est = estimate_induced_measure(&table, &sets, steps, DEFAULT_BURN_IN, seed)?;
            for (s, e) in sets.iter().zip(&est) {
                println!(
                    "mu[{}, {}] = {:.6e} +- {:.1e}",
                    s.lo, s.hi, e.value, e.std_error
                );
            }
            write_json(
                out,
                "measure.json",
                &json!({ "schema": SCHEMA, "p": p, "sets": sets, "estimates": est }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Scaling {
            p,
            grid,
            trials,
            seed,
        } => {
            let table = build_boundary_table(&MapParams::new(p)?, 4096)?;
            let grid: Vec<u64> = match grid {
                Some(g) => g
                    .split(',')
                    .map(|x| x.trim().parse())
                    .collect::<std::result::Result<_, _>>()?,
                None => frep::experiments::default_scaling_grid(p),
            };
            let model = estimate_normalizing_sequence(&table, &grid, trials, seed)?;
            let rows = model
                .points
                .iter()
                .map(|(n, a, se)| vec![n.to_string(), a.to_string(), se.to_string()]);
            write_csv(out, "darling_kac.csv", &["n", "a_hat", "SE"], rows)?;
            println!(
                "c = {:.5}, alpha_hat = {:.5}, R^2 = {:.6}",
                model.c, model.alpha_hat, model.r_squared
            );
            write_json(
                out,
                "scaling.json",
                &json!({ "schema": SCHEMA, "p": p, "model": model }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Repp(args) | Command::Zext(args) | Command::Conditions(args) if args.list_keys => {
            for (k, d) in CONFIG_KEYS {
                println!("{k:20} {d}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Repp(args) => {
            let cfg = args.load(cli.workers)?;
            if cfg.seed.is_none() {
                bail!("repp requires --seed");
            }
            let report = with_workers(cli.workers, || run_repp(&cfg))?;
            write_repp(out, &report)?;
            for d in &report.depths {
                for r in &d.runs {
                    println!(
                        "n={:<8} mu={:.3e} {:<8} first-event KS={} LT={:.4}",
                        d.n,
                        d.mu.value,
                        mode_tag(r.mode),
                        r.first_event.ks.map_or("-".into(), |k| format!("{k:.4}")),
                        r.first_event.lt
                    );
                }
            }
            Ok(flagged(&report.flags))
        }
        Command::Conditions(args) => {
            let cfg = args.load(cli.workers)?;
            if cfg.seed.is_none() {
                bail!("conditions requires --seed");
            }
            let rows = with_workers(cli.workers, || check_a_conditions(&cfg))?;
            for r in &rows {
                println!(
                    "n={:<6} tau_median={:.3e} early_escape={:.4} late_core={} reentry_sup={:.3}",
                    r.n,
                    r.tau_median,
                    r.early_return_escape,
                    r.late_return_core.map_or("-".into(), |x| format!("{x:.4}")),
                    r.reentry_sup
                );
            }
            write_json(
                out,
                "conditions.json",
                &json!({ "schema": SCHEMA, "config": cfg, "rows": rows, "structural": "structural, not tested" }),
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixedpoint {
            alpha,
            theta,
            d,
            step,
            t_max,
            s2,
            source,
            trials,
            seed,
            tolerance,
        } => {
            let grid = uniform_grid(step, t_max)?;
            let law = fixed_point_law(alpha, theta);
            let src = match source.as_str() {
                "analytic" => FixedPointSource::Analytic,
                "candidate" => FixedPointSource::Cdf(law),
                "exp" => FixedPointSource::Cdf(LawSpec::Exp { lambda: 1.0 }),
                "mc" => FixedPointSource::MonteCarlo { law, trials, seed },
                other => bail!("unknown source {other:?}"),
            };
            let residual = with_workers(cli.workers, || {
                fixed_point_residual(alpha, theta, d, &grid, s2, src)
            })?;
            println!("residual = {residual:.3e}");
            write_json(
                out,
                "fixedpoint.json",
                &json!({ "schema": SCHEMA, "alpha": alpha, "theta": theta, "d": d, "step": step,
                         "t_max": t_max, "s2": s2, "source": source, "residual": residual }),
            )?;
            let flags = if residual > tolerance {
                vec![format!("residual {residual:.3e} > {tolerance}")]
            } else {
                vec![]
            };
            Ok(flagged(&flags))
        }
        Command::Kf {
            alpha,
            lambda,
            trials,
            t_max,
            step,
            d_max,
            seed,
            tolerance,
        } => {
            let lambda = lambda.unwrap_or_else(|| statrs::function::gamma::gamma(1.0 + alpha));
            let grid = uniform_grid(step, t_max)?;
            let spec = if alpha == 1.0 {
                LawSpec::Ppp { lambda }
            } else {
                LawSpec::Fpp { alpha, lambda }
            };
            let report = with_workers(cli.workers, || {
                let counts = simulate_count_table(&spec, &grid, d_max, trials, BATCHES, seed)?;
                kf_residual(&counts, alpha, lambda)
            })?;
            println!(
                "residual = {:.3e} (SE {:.1e})",
                report.residual, report.std_error
            );
            write_json(
                out,
                "kf.json",
                &json!({ "schema": SCHEMA, "alpha": alpha, "lambda": lambda, "trials": trials, "report": report }),
            )?;
            let flags = if report.residual > tolerance {
                vec![format!("residual {:.3e} > {tolerance}", report.residual)]
            } else {
                vec![]
            };
            Ok(flagged(&flags))
        }
        Command::Zext(args) => {
            let cfg = args.load(cli.workers)?;
            if cfg.seed.is_none() {
                bail!("zext requires --seed");
            }
            let report = with_workers(cli.workers, || run_zext(&cfg))?;
            let rows = frep::experiments::ecdf_table(
                &report.first_samples,
                report.trials,
                cfg.horizon,
                ECDF_POINTS,
            );
            write_csv(
                out,
                "ecdf_first_return.csv",
                &["t", "F", "SE"],
                ecdf_rows(&rows),
            )?;
            write_json(out, "report.json", &serde_json::to_value(&report)?)?;
            println!(
                "first return KS={} LT={:.4}; w_n/(sigma sqrt n)={:.4} (target {:.4}); subordinator KS={:.4}",
                report.first_return.ks.map_or("-".into(), |k| format!("{k:.4}")),
                report.first_return.lt,
                report.wandering.ratio,
                report.wandering.target,
                report.subordinator.ks_counts
            );
            Ok(flagged(&report.flags))
        }
        Command::LawsSelftest { draws, seed } => {
            let gamma15 = statrs::function::gamma::gamma(1.5);
            let cases = [(0.5, 1.0), (0.75, 1.0), (0.5, gamma15), (1.0, 1.0)];
            let mut results = Vec::new();
            let mut flags = Vec::new();
            for (i, &(alpha, lambda)) in cases.iter().enumerate() {
                let spec = LawSpec::MlH { alpha, lambda };
                let chunk = draws / BATCHES as u64;
                let mut xs: Vec<f64> = with_workers(cli.workers, || {
                    use rayon::prelude::*;
                    (0..BATCHES as u64)
                        .into_par_iter()
                        .map(|b| {
                            let mut rng = trial_rng(seed, i as u64, b);
                            (0..chunk)
                                .map(|_| sample_law(&spec, &mut rng))
                                .collect::<frep::Result<Vec<f64>>>()
                        })
                        .collect::<frep::Result<Vec<Vec<f64>>>>()
                })?
                .concat();
                xs.sort_by(f64::total_cmp);
                let cdf = ReferenceCdf::new(&spec)?;
                let ks = ks_statistic(&xs, 0, |t| cdf.cdf(t), |t| cdf.cdf_left(t));
                println!("H({alpha}, {lambda:.4}): KS = {ks:.5}");
                if ks > 0.005 {
                    flags.push(format!("H({alpha}, {lambda}) KS {ks:.5} > 0.005"));
                }
                results
                    .push(json!({ "alpha": alpha, "lambda": lambda, "draws": xs.len(), "ks": ks }));
            }
            write_json(
                out,
                "laws_selftest.json",
                &json!({ "schema": SCHEMA, "cases": results, "flags": flags }),
            )?;
            Ok(flagged(&flags))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
