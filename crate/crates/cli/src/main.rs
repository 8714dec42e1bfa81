use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Parser, Subcommand};
use vidlaw::dynamics::SYSTEM_NAMES;
use vidlaw_cli::{
    default_run_id, discover, evaluate_model, exit, failure, generate, parse_seeds, resolve, run_root, sibling_config, sweep,
    usage, CliConfig, CliError,
};

#[derive(Parser)]
#[command(name = "vidlaw", version, about = "Discover governing equations from videos of dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON config file layered over the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a dotted key, e.g. `--set regress.lambda_sp=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a built-in system and render it to a sequence file.
    Gen {
        #[arg(long)]
        system: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
        /// Grid side for field systems.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Gaussian pixel noise sigma.
        #[arg(long)]
        noise: Option<f64>,
        /// `object` or `modes`.
        #[arg(long)]
        style: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the discovery loop on a sequence file.
    Discover {
        #[arg(long = "in")]
        input: PathBuf,
        /// `object`, `pixel` or `representation`.
        #[arg(long)]
        mode: Option<String>,
        /// Subprocess command or http(s) URL consulted each iteration.
        #[arg(long)]
        advisor: Option<String>,
        #[arg(long)]
        run_id: Option<String>,
        /// Defaults to $P2P_RUN_ROOT, then ./runs.
        #[arg(long)]
        run_root: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recompute metrics of a stored model against stored variables.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Trajectory CSV, or a field sequence for pixel-mode models.
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
        /// Where to write metrics.json and plots.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Generate and discover once per seed and tabulate mean ± std.
    Sweep {
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        /// Number of seeds (0..n).
        #[arg(long, conflicts_with = "seed_list")]
        seeds: Option<u64>,
        /// Explicit comma-separated seeds.
        #[arg(long)]
        seed_list: Option<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn load(args: &ConfigArgs, extra: Vec<String>) -> Result<CliConfig, CliError> {
    let mut sets = extra;
    sets.extend(args.set.iter().cloned());
    resolve(args.config.as_deref(), &sets).map_err(usage)
}

fn json_str(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

fn check_system(name: &str) -> Result<(), CliError> {
    if SYSTEM_NAMES.contains(&name) {
        Ok(())
    } else {
        Err(usage(anyhow!("unknown system `{name}`; valid systems: {}", SYSTEM_NAMES.join(", "))))
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Gen { system, out, steps, dt, grid, seed, noise, style, cfg } => {
            check_system(&system)?;
            let mut extra = vec![format!("dynamics.system={}", json_str(&system))];
            extra.extend(steps.map(|v| format!("dynamics.steps={v}")));
            extra.extend(dt.map(|v| format!("dynamics.dt={v}")));
            extra.extend(grid.map(|v| format!("dynamics.grid={v}")));
            extra.extend(seed.map(|v| format!("dynamics.seed={v}")));
            extra.extend(seed.map(|v| format!("render.seed={v}")));
            extra.extend(noise.map(|v| format!("render.noise_sigma={v}")));
            extra.extend(style.map(|v| format!("render.style={}", json_str(&v))));
            let c = load(&cfg, extra)?;
            let g = generate(&c, &out).map_err(failure)?;
            for e in &g.equations {
                println!("{e}");
            }
            eprintln!("wrote {} frames to {} and {}", g.frames, g.sequence.display(), g.truth.display());
            Ok(exit::OK)
        }
        Command::Discover { input, mode, advisor, run_id, run_root: root, cfg } => {
            let mut extra = Vec::new();
            extra.extend(mode.map(|m| format!("planner.mode={}", json_str(&m))));
            extra.extend(advisor.map(|a| format!("planner.advisor={}", json_str(&a))));
            let c = load(&cfg, extra)?;
            if !input.exists() {
                return Err(usage(anyhow!("input {} does not exist", input.display())));
            }
            let root = run_root(root.as_deref());
            let id = run_id.unwrap_or_else(|| default_run_id(&root, &input, c.planner.mode));
            let out = discover(&input, &c, &root.join(&id)).map_err(failure)?;
            for e in &out.summary.equations {
                println!("{e}");
            }
            if let Some(m) = &out.summary.metrics {
                println!("r2 {:.6}  r2@{} {:.6}  rmse {:.3e}  vps {}  l0 {}", m.r2, m.horizon, m.r2_extrapolation, m.rmse, m.vps, m.l0);
            }
            if let Some(e) = &out.summary.error {
                eprintln!("error: {e}");
            }
            eprintln!("{} after {} iteration(s); run directory {}", out.summary.termination_reason.as_str(), out.summary.iterations, out.run_dir.display());
            Ok(out.exit_code())
        }
        Command::Eval { model, truth, horizon, out_dir, cfg } => {
            let mut args = cfg;
            if args.config.is_none() {
                args.config = sibling_config(&model);
            }
            let c = load(&args, horizon.map(|h| format!("evaluate.horizon={h}")).into_iter().collect())?;
            if !model.exists() {
                return Err(usage(anyhow!("model file {} does not exist", model.display())));
            }
            if !truth.exists() {
                return Err(usage(anyhow!("truth file {} does not exist", truth.display())));
            }
            let r = evaluate_model(&model, &truth, &c, out_dir.as_deref()).map_err(failure)?;
            println!("{}", serde_json::to_string_pretty(&r).map_err(|e| failure(e.into()))?);
            Ok(exit::OK)
        }
        Command::Sweep { system, mode, seeds, seed_list, jobs, out, cfg } => {
            let mut extra = Vec::new();
            if let Some(s) = &system {
                check_system(s)?;
                extra.push(format!("dynamics.system={}", json_str(s)));
            }
            extra.extend(mode.map(|m| format!("planner.mode={}", json_str(&m))));
            let c = load(&cfg, extra)?;
            let seeds = parse_seeds(seed_list.as_deref(), seeds).map_err(usage)?;
            let rows = sweep(&c, &seeds, jobs, &out).map_err(failure)?;
            print!("{}", std::fs::read_to_string(out.join("summary.md")).unwrap_or_default());
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            if failed > 0 {
                eprintln!("{failed} of {} seed(s) failed; see {}", rows.len(), out.join("sweep.csv").display());
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
