// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use canard_core::retmap::{graph_sample, landmarks, ReturnMap};
use canard_core::system::{validate_genericity, CosineOval};
use canard_core::wayinout::{
    balance_point, derivative_asymptotics, jump_height_on_section, slow_manifold_error, FoldEnd, JumpDirection,
};
use canard_core::windows::{find_windows, scaling_report, ScalingRow};
use canard_core::{Error, RunConfig};

use report::Writer;

#[derive(Parser)]
#[command(
    name = "canard",
    version,
    about = "Return maps and canard windows of slow-fast systems on the torus"
)]
struct Cli {
    /// JSON run config; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the genericity conditions of the configured system.
    Validate,
    /// Sample the graph of the return map at one eps.
    Graph {
        #[arg(long)]
        eps: f64,
    },
    /// Locate canard windows and fit their scalings.
    Windows {
        #[arg(long)]
        n_min: Option<u32>,
        #[arg(long)]
        n_max: Option<u32>,
    },
    /// Run the property suite.
    Verify {
        /// Comma-separated subset of shape, monotonicity, convexity, balance, derivative.
        #[arg(long, value_delimiter = ',')]
        subset: Vec<String>,
        /// Multiply every tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// Balance point, derivative asymptotics and slow-manifold error.
    Balance {
        /// eps values for the derivative fit.
        #[arg(long, value_delimiter = ',', default_value = "0.16,0.08,0.04,0.02")]
        eps: Vec<f64>,
    },
    /// Jump heights of canards near the maximal canard.
    Sweep {
        #[arg(long)]
        eps: f64,
        /// Number of starting points, split between the two sides of the
        /// maximal canard.
        #[arg(long, default_value_t = 40)]
        samples: usize,
    },
}

enum Failure {
    Usage(String),
    Property(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            e if e.is_numerical() => Failure::Numerical(e.to_string()),
            e => Failure::Property(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("i/o: {e}"))
    }
}

type Outcome = Result<bool, Failure>;

#[derive(Serialize)]
struct GraphReport<'a, L> {
    landmarks: L,
    rows: &'a [canard_core::retmap::GraphRow],
}

#[derive(Serialize)]
struct JumpRow {
    x0: f64,
    /// Empty when the trajectory stays in the tube to the top of the strip.
    y_plus: Option<f64>,
    direction: Option<JumpDirection>,
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            Ok(RunConfig::from_json(&text)?)
        }
    }
}

fn positive_eps(eps: f64) -> Result<(), Failure> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--eps must be positive, got {eps}")))
    }
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = load_config(cli.config.as_ref())?;
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    if let Cmd::Verify { tol_scale, .. } = &cli.cmd {
        if !(*tol_scale > 0.0) {
            return Err(Failure::Usage(format!("--tol-scale must be positive, got {tol_scale}")));
        }
        cfg.system.tolerances = cfg.system.tolerances.scaled(*tol_scale);
        cfg.integrator.rel_tol *= tol_scale;
        cfg.integrator.abs_tol *= tol_scale;
    }
    if let Cmd::Windows { n_min, n_max } = &cli.cmd {
        cfg.windows.n_min = n_min.unwrap_or(cfg.windows.n_min);
        cfg.windows.n_max = n_max.unwrap_or(cfg.windows.n_max);
        cfg.validate()?;
    }
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let w = Writer::new(&dir, &cfg)?;

    match cli.cmd {
        Cmd::Validate => {
            let sys = CosineOval::new(cfg.system.k, cfg.system.g_amp);
            let rep = validate_genericity(&sys, cfg.system.tolerances.curve);
            let ok = rep.all_passed();
            for c in rep.failures() {
                eprintln!("condition {} ({}) failed: {}", c.id, c.name, c.detail);
            }
            w.json("validate.json", "validate", rep)?;
            Ok(ok)
        }
        Cmd::Graph { eps } => {
            positive_eps(eps)?;
            let m = cfg.model()?;
            let s = cfg.map_settings();
            let rows = graph_sample(&m, eps, &s)?;
            let lm = landmarks(&m, eps, &s)?;
            w.csv("graph.csv", &rows)?;
            w.json(
                "graph.json",
                "graph",
                GraphReport {
                    landmarks: lm,
                    rows: &rows,
                },
            )?;
            Ok(true)
        }
        Cmd::Windows { .. } => {
            let m = cfg.model()?;
            let ws = cfg.window_settings();
            let range = (cfg.windows.n_min as i64, cfg.windows.n_max as i64);
            let found = find_windows(&m, range, (cfg.windows.eps_min, cfg.windows.eps_max), &ws)?;
            let sc = scaling_report(&found);
            let rows: Vec<ScalingRow> = sc.rows.clone();
            w.csv("scaling.csv", &rows)?;
            #[derive(Serialize)]
            struct Windows<T, S> {
                windows: T,
                scaling: S,
            }
            w.json(
                "windows.json",
                "windows",
                Windows {
                    windows: &found,
                    scaling: &sc,
                },
            )?;
            Ok(!found.is_empty())
        }
        Cmd::Verify { subset, .. } => {
            if let Some(bad) = subset.iter().find(|s| !verify::PROPERTIES.contains(&s.as_str())) {
                return Err(Failure::Usage(format!("unknown property {bad:?}")));
            }
            let m = cfg.model()?;
            let res = verify::run(&cfg, &m, &subset)?;
            for r in &res {
                println!("{:<13} {} {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
            }
            let ok = res.iter().all(|r| r.passed);
            w.json("verify.json", "verify", &res)?;
            Ok(ok)
        }
        Cmd::Balance { eps } => {
            for &e in &eps {
                positive_eps(e)?;
            }
            let m = cfg.model()?;
            let b = balance_point(&m, cfg.system.tolerances.quad)?;
            let d = derivative_asymptotics(&m, &eps, &cfg.map_settings())?;
            let sm = slow_manifold_error(&m, &[0.02, 0.01, 0.005, 0.0025], FoldEnd::Lower, &cfg.integrator)?;
            #[derive(Serialize)]
            struct Balance<A, B, C> {
                balance: A,
                derivative: B,
                slow_manifold: C,
            }
            w.json(
                "balance.json",
                "balance",
                Balance {
                    balance: &b,
                    derivative: &d,
                    slow_manifold: &sm,
                },
            )?;
            Ok(true)
        }
        Cmd::Sweep { eps, samples } => {
            positive_eps(eps)?;
            if samples == 0 {
                return Err(Failure::Usage("--samples must be positive".into()));
            }
            let m = cfg.model()?;
            let rm = ReturnMap::new(&m, eps, cfg.map_settings())?;
            let u0 = rm.maximal_canard()?;
            let (lo, hi) = m.geometry.j_plus();
            // log-spaced chart offsets on both sides of the maximal canard;
            // starting on J+ keeps the way-out resolved at small offsets
            let half = samples.div_ceil(2);
            let mut us = Vec::with_capacity(2 * half);
            for i in 0..half {
                let d = 10f64.powf(-12.0 + 12.0 * i as f64 / (half.max(2) - 1) as f64);
                us.push((u0 - d * (u0 - lo)).max(lo));
                us.push((u0 + d * (hi - u0)).min(hi));
            }
            us.sort_by(f64::total_cmp);
            let mut rows = Vec::with_capacity(us.len());
            for u in us {
                let x0 = rm.chart(u)?.x;
                let j = match jump_height_on_section(&m, eps, u, cfg.tube, &cfg.integrator) {
                    Ok(j) => Some(j),
                    Err(Error::NeverExits) => None,
                    Err(e) => return Err(e.into()),
                };
                rows.push(JumpRow {
                    x0,
                    y_plus: j.map(|j| j.y_plus),
                    direction: j.map(|j| j.direction),
                });
            }
            w.csv("jumps.csv", &rows)?;
            w.json("sweep.json", "sweep", &rows)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            let (code, msg) = match f {
                Failure::Property(m) => (1, m),
                Failure::Usage(m) => (2, m),
                Failure::Numerical(m) => (3, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
