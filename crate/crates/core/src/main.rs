use clap::{Args, Parser, Subcommand};
use homogsim::cli::{
    self, CliError, ExperimentConfig,
};
use homogsim::population::SweepAxis;
use homogsim::training::LoopVariant;
use std::path::PathBuf;
use std::process::ExitCode;

/// Deterministic experiment runner for the human-AI interaction model.
#[derive(Parser)]
#[command(name = "homogsim", version, about)]
struct Cli {
    /// JSON config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

/// Model-parameter overrides shared by the analytic subcommands.
#[derive(Args, Default)]
struct ModelOverrides {
    #[arg(long)]
    mu_pop: Option<f64>,
    #[arg(long)]
    sigma_pop: Option<f64>,
    #[arg(long)]
    mu_ai: Option<f64>,
    #[arg(long)]
    sigma_ai: Option<f64>,
    /// Interaction cost per nat (gamma).
    #[arg(long)]
    gamma: Option<f64>,
    /// Manual-completion cost; "inf" disables the manual option.
    #[arg(long)]
    cap_gamma: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
}

impl ModelOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        let m = &mut cfg.model;
        if let Some(v) = self.mu_pop {
            m.mu_pop = v;
        }
        if let Some(v) = self.sigma_pop {
            m.sigma_pop = v;
        }
        if let Some(v) = self.mu_ai {
            m.mu_ai = v;
        }
        if let Some(v) = self.sigma_ai {
            m.sigma_ai = v;
        }
        if let Some(v) = self.gamma {
            m.cost_interact = v;
            cfg.loop_section.gamma = v;
        }
        if let Some(v) = &self.cap_gamma {
            let parsed = parse_maybe_inf(v)?;
            m.cost_manual = parsed;
            cfg.loop_section.cap_gamma = parsed;
        }
        if let Some(v) = self.temperature {
            m.temperature = v;
        }
        Ok(())
    }
}

fn parse_maybe_inf(s: &str) -> Result<f64, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
        other => other
            .parse::<f64>()
            .map_err(|e| CliError::Config(format!("bad number {other:?}: {e}"))),
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-user decisions over an evenly spaced preference range (CSV).
    SolveUser {
        #[arg(long, default_value_t = -4.0)]
        theta_min: f64,
        #[arg(long, default_value_t = 4.0)]
        theta_max: f64,
        #[arg(long, default_value_t = 401)]
        steps: usize,
        #[command(flatten)]
        overrides: ModelOverrides,
    },
    /// Population statistics along one parameter axis (CSV + optional SVG).
    Sweep {
        /// gamma | sigma-ai-sq | cap-gamma | temperature
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        overrides: ModelOverrides,
    },
    /// Self-training loop trajectory (CSV + optional SVG / prior dump).
    Loop {
        /// ex-ante | ex-post
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        m_q: Option<usize>,
        /// Dump every prior to a companion CSV.
        #[arg(long)]
        snapshots: bool,
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        overrides: ModelOverrides,
    },
    /// Three-point mass-at-zero recursion (CSV + optional SVG).
    ThreePoint {
        #[arg(long)]
        theta_bar: Option<f64>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        /// Freeze the unique users' noise at this level instead of
        /// re-solving each step.
        #[arg(long)]
        frozen_sigma: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
    /// Run the built-in numerical validation suite.
    Check,
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = load_config(&cli.config)?;
    match cli.cmd {
        Cmd::SolveUser {
            theta_min,
            theta_max,
            steps,
            overrides,
        } => {
            overrides.apply(&mut config)?;
            let path = cli::run_solve_user(&config, theta_min, theta_max, steps, &cli.out)?;
            println!("wrote {}", path.display());
        }
        Cmd::Sweep {
            axis,
            values,
            svg,
            overrides,
        } => {
            overrides.apply(&mut config)?;
            if let Some(axis) = axis {
                config.sweep.axis = Some(match axis.as_str() {
                    "gamma" => SweepAxis::Gamma,
                    "sigma-ai-sq" | "sigma_ai_sq" => SweepAxis::SigmaAiSq,
                    "cap-gamma" | "cap_gamma" => SweepAxis::CapGamma,
                    "temperature" => SweepAxis::Temperature,
                    other => return Err(CliError::Config(format!("unknown axis {other:?}"))),
                });
            }
            if let Some(values) = values {
                config.sweep.values = values
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| CliError::Config(format!("bad value {v:?}: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            for path in cli::run_sweep(&config, svg, &cli.out)? {
                println!("wrote {}", path.display());
            }
        }
        Cmd::Loop {
            variant,
            iterations,
            m,
            m_q,
            snapshots,
            svg,
            overrides,
        } => {
            overrides.apply(&mut config)?;
            if let Some(v) = variant {
                config.loop_section.variant = match v.as_str() {
                    "ex-ante" | "exante" | "ex_ante" => LoopVariant::ExAnte,
                    "ex-post" | "expost" | "ex_post" => LoopVariant::ExPost,
                    other => return Err(CliError::Config(format!("unknown variant {other:?}"))),
                };
            }
            if let Some(v) = iterations {
                config.loop_section.iterations = v;
            }
            if let Some(v) = m {
                config.loop_section.m = v;
            }
            if let Some(v) = m_q {
                config.loop_section.m_q = v;
            }
            if snapshots {
                config.loop_section.snapshot_priors = true;
            }
            for path in cli::run_loop_cmd(&config, svg, &cli.out)? {
                println!("wrote {}", path.display());
            }
        }
        Cmd::ThreePoint {
            theta_bar,
            p0,
            gamma,
            frozen_sigma,
            iterations,
            svg,
        } => {
            let tp = &mut config.three_point;
            if let Some(v) = theta_bar {
                tp.theta_bar = v;
            }
            if let Some(v) = p0 {
                tp.p0 = v;
            }
            if let Some(v) = gamma {
                tp.gamma = v;
            }
            if let Some(v) = frozen_sigma {
                tp.frozen_sigma = Some(v);
            }
            if let Some(v) = iterations {
                tp.iterations = v;
            }
            for path in cli::run_three_point_cmd(&config, svg, &cli.out)? {
                println!("wrote {}", path.display());
            }
        }
        Cmd::Check => {
            let results = cli::run_checks();
            let failures = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                let status = if r.passed { "PASS" } else { "FAIL" };
                if r.detail.is_empty() {
                    println!("{status} {}", r.name);
                } else {
                    println!("{status} {} ({})", r.name, r.detail);
                }
            }
            if failures > 0 {
                return Err(CliError::CheckFailed { failures });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
