//! `gridcomp`: solve, simulate and verify joint energy trading and CoMP
//! beamforming instances described by JSON config files.

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gridcomp_core::config::{ChannelMode, ChannelsConfig, Config, SimulationConfig};
use gridcomp_core::duality::solve_weighted_downlink;
use gridcomp_core::oracle::{grid_search_two_bs, single_user_closed_forms};
use gridcomp_core::scenario::{load_renewable_csv, run_timeline, solve_scheme, InfeasiblePolicy};
use gridcomp_core::{check_feasible, check_zf_feasible, Error, Feasibility, Scheme, WeightedNoise};

use report::{Check, FeasibilityReport, SimulateReport, SolveReport, VerifyReport};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

/// Tolerance on closed-form comparisons in `verify`.
const CLOSED_FORM_TOL: f64 = 1e-8;
/// Cost tolerance against the grid search in `verify`, per unit of grid step.
const GRID_TOL_PER_STEP: f64 = 5.0;

#[derive(Parser)]
#[command(
    name = "gridcomp",
    version,
    about = "Joint energy trading and cooperative beamforming for smart-grid powered CoMP clusters",
    after_help = "Exit codes:\n  0  success (converged, feasible, or all checks passed)\n  1  config, I/O or usage error, including the verify size guard\n  2  infeasible: the QoS targets cannot be met within the power caps\n  3  the solver did not converge within its budget\n  4  verify: a solver-vs-oracle delta exceeded its tolerance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print the solution as JSON.
    Solve {
        config: PathBuf,
        #[arg(long, default_value = "optimal")]
        scheme: Scheme,
        /// Also write the JSON report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run every block of a renewable timeline and write the report CSVs.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "synthetic")]
        renewables: Renewables,
        /// Harvest trace with header `block,bs_id,energy` (for `--renewables csv`).
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Directory receiving `blocks.csv` and `summary.csv`.
        #[arg(long)]
        out: PathBuf,
        /// Fresh channels per block, or one fixed set reused by every block.
        #[arg(long)]
        channels: Option<ChannelMode>,
        /// Draws in the fixed channel set.
        #[arg(long)]
        realizations: Option<usize>,
        /// Synthetic blocks to generate.
        #[arg(long)]
        blocks: Option<usize>,
        /// What to do with blocks whose targets cannot be met: skip, error or record-infeasible.
        #[arg(long)]
        policy: Option<InfeasiblePolicy>,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-check the solver against independent references on a single-MT instance.
    Verify {
        config: PathBuf,
        /// Grid step of the two-BS brute-force search.
        #[arg(long, default_value_t = 1e-3)]
        grid_step: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Decide whether the power caps can meet every QoS target.
    Feasibility {
        config: PathBuf,
        /// Check the zero-forcing problem instead of the general one.
        #[arg(long)]
        zf: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Replace every seed in the config (layout and synthetic renewables).
    #[arg(long)]
    seed: Option<u64>,
    /// Relative duality gap that counts as converged.
    #[arg(long)]
    tol: Option<f64>,
    /// Ellipsoid iteration budget.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Renewables {
    Synthetic,
    Csv,
}

impl Common {
    fn load(&self, path: &Path) -> anyhow::Result<Config> {
        let mut config = Config::from_path(path)?;
        if let Some(seed) = self.seed {
            config.reseed(seed);
        }
        if let Some(tol) = self.tol {
            config.solver.tol = Some(tol);
        }
        if let Some(max_iter) = self.max_iter {
            config.solver.max_iter = Some(max_iter);
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    // Usage errors share exit code 1 with config errors; clap's default is 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(e) if e.is_infeasible() => EXIT_INFEASIBLE,
        Some(Error::NotConverged { .. } | Error::FixedPointDiverged { .. }) => EXIT_NOT_CONVERGED,
        _ => EXIT_ERROR,
    }
}

/// Print a report on stdout. A reader that hangs up early is not an error.
fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<String> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
        _ => {}
    }
    Ok(text)
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Solve {
            config,
            scheme,
            out,
            common,
        } => {
            let config = common.load(&config)?;
            let instance = config.instance()?;
            let outcome = solve_scheme(&instance, scheme, &config.solver.solver_options())?;
            let text = print_json(&SolveReport::new(&instance, &outcome))?;
            if let Some(path) = out {
                fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(if outcome.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
        }
        Command::Simulate {
            config,
            renewables,
            csv,
            out,
            channels,
            realizations,
            blocks,
            policy,
            common,
        } => {
            let mut config = common.load(&config)?;
            let sim = config.simulation.get_or_insert(SimulationConfig {
                blocks: 24,
                channel_mode: ChannelMode::default(),
                realizations: 1,
                policy: InfeasiblePolicy::default(),
                schemes: None,
                synthetic: None,
            });
            if let Some(mode) = channels {
                sim.channel_mode = mode;
            }
            if let Some(n) = realizations {
                sim.realizations = n;
            }
            if let Some(n) = blocks {
                sim.blocks = n;
                if let Some(s) = sim.synthetic.as_mut() {
                    s.blocks = n;
                }
            }
            if let Some(p) = policy {
                sim.policy = p;
            }
            config.validate()?;
            let instance = config.instance()?;
            let series = match renewables {
                Renewables::Synthetic => {
                    let seed = common.seed.unwrap_or(match &config.channels {
                        ChannelsConfig::Layout(l) => l.seed,
                        ChannelsConfig::Explicit(_) => 0,
                    });
                    config.synthetic_renewables(seed).generate()?
                }
                Renewables::Csv => {
                    let Some(path) = csv else {
                        bail!("--renewables csv needs --csv <path>");
                    };
                    load_renewable_csv(&path, Some(instance.n_bs()))?
                }
            };
            let report = run_timeline(&instance, &series, &config.timeline_options())?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let blocks_path = out.join("blocks.csv");
            let summary_path = out.join("summary.csv");
            let create = |p: &Path| fs::File::create(p).with_context(|| format!("creating {}", p.display()));
            report.write_blocks_csv(create(&blocks_path)?)?;
            report.write_summary_csv(create(&summary_path)?)?;
            print_json(&SimulateReport {
                blocks: report.blocks.len(),
                blocks_csv: blocks_path.display().to_string(),
                summary_csv: summary_path.display().to_string(),
                summary: report.summary(),
            })?;
            Ok(EXIT_OK)
        }
        Command::Verify {
            config,
            grid_step,
            common,
        } => verify(&common.load(&config)?, grid_step),
        Command::Feasibility { config, zf, common } => {
            let config = common.load(&config)?;
            let instance = config.instance()?;
            let opts = config.solver.feasibility_options();
            let verdict = if zf {
                check_zf_feasible(&instance, &opts)?
            } else {
                check_feasible(&instance, &opts)?
            };
            print_json(&FeasibilityReport::new(&verdict, zf))?;
            Ok(match verdict {
                Feasibility::Feasible { .. } => EXIT_OK,
                Feasibility::Infeasible { .. } => EXIT_INFEASIBLE,
            })
        }
    }
}

fn verify(config: &Config, grid_step: f64) -> anyhow::Result<u8> {
    let instance = config.instance()?;
    if instance.n_mt() != 1 {
        bail!(
            "verify needs a single-MT instance (K = 1); this one has K = {}",
            instance.n_mt()
        );
    }
    let opts = config.solver.solver_options();
    let joint = solve_scheme(&instance, Scheme::Optimal, &opts)?;
    let mut checks = vec![Check::new("duality gap", joint.relative_gap(), opts.gap_tol)];

    // The general inner solver against the single-MT closed forms at the
    // solver's own dual point.
    let reference = single_user_closed_forms(&instance, &joint.dual_mu, &joint.dual_nu)?;
    let noise = WeightedNoise::from_duals(&joint.dual_mu, &joint.dual_nu, instance.cluster.pa_efficiency)?;
    let (uplink, beams) = solve_weighted_downlink(&instance.channels, &instance.qos, &noise, &opts.fixed_point)?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    checks.push(Check::new(
        "uplink power vs closed form",
        rel(uplink.lambda[0], reference.lambda),
        CLOSED_FORM_TOL,
    ));
    let tx_delta = beams
        .tx_powers()
        .iter()
        .zip(&reference.tx)
        .map(|(a, b)| rel(*a, *b))
        .fold(0.0, f64::max);
    checks.push(Check::new("per-BS power vs closed form", tx_delta, CLOSED_FORM_TOL));

    if instance.n_bs() == 2 && instance.cluster.n_ant == 1 {
        let grid = grid_search_two_bs(&instance, grid_step)?;
        checks.push(Check::new(
            "cost vs grid search",
            (joint.cost - grid.cost).abs(),
            GRID_TOL_PER_STEP * grid_step,
        ));
    }
    let pass = checks.iter().all(|c| c.pass);
    print_json(&VerifyReport { pass, checks })?;
    Ok(if pass { EXIT_OK } else { EXIT_MISMATCH })
}
