use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rankmfg::config::Config;
use rankmfg::fictitious::{run_fp, FpParams, InitialGuess, StopReason};
use rankmfg::hjb::{gibbs_policy, solve_hjb_backward};
use rankmfg::io::{
    output_path, pair_columns, read_progress_csv, regime_columns, write_grid_csv, write_iterations_csv, write_json,
    write_table_csv, RunManifest,
};
use rankmfg::limit::{eta_sweep, solve_hjbvi, verify_relaxed_equilibrium, viscosity_residual, VerifyOptions};
use rankmfg::montecarlo::{deviation_test, simulate_population, DeviationConfig, SimConfig};
use rankmfg::{validate_model, AggregateProgress, Error, GridFunction, ModelSpec, TimeGrid};

const EXIT_INVALID: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(name = "rankmfg", version, about = "Rank-based mean-field race solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Write every n-th grid node to trajectory files.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    stride: u64,
}

#[derive(Args)]
struct FpArgs {
    /// Entropy weight; overrides the config.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: Option<u64>,
    /// Exploitability tolerance; 0 runs all iterations.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the modelling assumptions.
    Validate {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Solve the regularized HJB system against a given progress curve.
    SolveHjb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        eta: Option<f64>,
        /// Progress CSV (columns t,rho); default is the slowest-regime curve.
        #[arg(long)]
        rho: Option<PathBuf>,
    },
    /// Solve the obstacle problem against a given progress curve.
    SolveVi {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rho: Option<PathBuf>,
    },
    /// Run fictitious play for the regularized equilibrium.
    Fp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fp: FpArgs,
    },
    /// Run fictitious play along a decreasing sequence of eta.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.2,0.1,0.05,0.02")]
        etas: Vec<f64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        max_iters: Option<u64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Simulate a finite population under the equilibrium policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fp: FpArgs,
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Also estimate deviation gains with this many agents per strategy.
        #[arg(long, default_value_t = 0)]
        deviants: u64,
    },
    /// Check the relaxed-equilibrium conditions at a small eta.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fp: FpArgs,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Support threshold; default 10 h u_max r.
        #[arg(long)]
        nu: Option<f64>,
    },
}

enum Failure {
    Invalid(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Run {
    config: Config,
    spec: ModelSpec,
    grid: TimeGrid,
    out: PathBuf,
    stride: usize,
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn start(name: &str, common: &Common, seed: Option<u64>) -> std::result::Result<Self, Failure> {
        let started = Instant::now();
        let (config, bytes) = Config::load(&common.config)?;
        let spec = config.model()?;
        let report = validate_model(&spec);
        if !report.passed() {
            return Err(Failure::Invalid(report.to_string()));
        }
        let grid = config.time_grid(&spec)?;
        let manifest = RunManifest::new(name, &common.config, &bytes, seed.unwrap_or(config.seed));
        Ok(Self {
            config,
            spec,
            grid,
            out: common.out.clone(),
            stride: common.stride as usize,
            manifest,
            started,
        })
    }

    fn path(&mut self, name: &str) -> rankmfg::Result<PathBuf> {
        let p = output_path(&self.out, name)?;
        self.manifest.outputs.push(name.to_string());
        Ok(p)
    }

    fn write_grid(&mut self, name: &str, columns: &[String], data: &[&GridFunction]) -> rankmfg::Result<()> {
        let p = self.path(name)?;
        write_grid_csv(&p, columns, data, self.stride)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> rankmfg::Result<()> {
        let p = self.path(name)?;
        write_json(&p, value)
    }

    fn fp_params(&self, args: Option<&FpArgs>) -> FpParams {
        let mut p = self.config.fp_params();
        if let Some(a) = args {
            if let Some(n) = a.max_iters {
                p.max_iters = n as usize;
            }
            if a.tol.is_some() {
                p.tol_exploit = a.tol;
            }
        }
        p
    }

    fn eta(&self, args: Option<&FpArgs>) -> f64 {
        args.and_then(|a| a.eta).unwrap_or(self.config.eta)
    }

    fn progress(&self, rho: Option<&Path>) -> rankmfg::Result<AggregateProgress> {
        match rho {
            Some(p) => read_progress_csv(p, &self.grid),
            None => InitialGuess::SlowestRegime.build(&self.spec, &self.grid),
        }
    }

    fn finish(mut self) -> Outcome {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let p = output_path(&self.out, "manifest.json")?;
        write_json(&p, &self.manifest)?;
        println!(
            "wrote {} file(s) to {}",
            self.manifest.outputs.len() + 1,
            self.out.display()
        );
        Ok(())
    }
}

#[derive(Serialize)]
struct FpSummary {
    eta: f64,
    stop: &'static str,
    iterations: usize,
    final_exploitability: f64,
    final_payoff: f64,
    rate_constant: Option<f64>,
    rate_r_squared: Option<f64>,
    rate_exponent: Option<f64>,
    divergence_warning: bool,
    tail_bound: f64,
    initial_value: Vec<f64>,
    initial_distribution: Vec<f64>,
}

fn stop_name(s: StopReason) -> &'static str {
    match s {
        StopReason::Exploitability => "exploitability",
        StopReason::RhoChange => "rho_change",
        StopReason::MaxIterations => "max_iterations",
    }
}

fn cmd_validate(config: &Path) -> Outcome {
    let (config, _) = Config::load(config)?;
    let spec = config.model()?;
    let report = validate_model(&spec);
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Invalid(String::new()))
    }
}

fn cmd_solve_hjb(common: &Common, eta: Option<f64>, rho: Option<&Path>) -> Outcome {
    let mut run = Run::start("solve-hjb", common, None)?;
    let eta = eta.unwrap_or(run.config.eta);
    let rho = run.progress(rho)?;
    let value = solve_hjb_backward(&run.spec, eta, &rho, &run.grid)?;
    let policy = gibbs_policy(&value, &run.spec, eta)?;
    let k = run.spec.regimes();
    println!("V(0) = {:?}", value.initial());
    println!("initial distribution = {:?}", policy.initial);
    run.write_grid("value.csv", &regime_columns("V", k), &[&value.values])?;
    run.write_grid("policy.csv", &pair_columns("pi", k), &[&policy.rates])?;
    run.finish()
}

#[derive(Serialize)]
struct ViSummary {
    initial_value: Vec<f64>,
    sup_min_branch: f64,
    min_obstacle: f64,
}

fn cmd_solve_vi(common: &Common, rho: Option<&Path>) -> Outcome {
    let mut run = Run::start("solve-vi", common, None)?;
    let rho = run.progress(rho)?;
    let value = solve_hjbvi(&run.spec, &rho, &run.grid)?;
    let r = viscosity_residual(&value, &run.spec, &rho)?;
    println!("V(0) = {:?}", value.initial());
    println!("viscosity residual = {:.3e}", r.sup_min_branch);
    let k = run.spec.regimes();
    run.write_grid("value.csv", &regime_columns("V", k), &[&value.values])?;
    run.write_grid("residual.csv", &regime_columns("r", k), &[&r.min_branch])?;
    run.write_json(
        "vi.json",
        &ViSummary {
            initial_value: value.initial().to_vec(),
            sup_min_branch: r.sup_min_branch,
            min_obstacle: r.min_obstacle,
        },
    )?;
    run.finish()
}

fn cmd_fp(common: &Common, args: &FpArgs) -> Outcome {
    let mut run = Run::start("fp", common, None)?;
    let eta = run.eta(Some(args));
    let params = run.fp_params(Some(args));
    let (state, report, eq) = run_fp(&run.spec, eta, &run.grid, &params)?;
    let k = run.spec.regimes();
    let last = state.history.last().map_or(f64::NAN, |r| r.exploitability);
    println!(
        "stopped after {} iteration(s) ({}): exploitability {:.3e}, payoff {:.8}",
        report.iterations,
        stop_name(report.stop),
        last,
        report.final_payoff
    );
    if report.divergence_warning {
        eprintln!("warning: exploitability did not decrease for a long run of iterations");
    }
    let p = run.path("iterations.csv")?;
    write_iterations_csv(&p, &state.history)?;
    run.write_grid("rho.csv", &["rho".to_string()], &[eq.rho.as_grid_function()])?;
    run.write_grid("value.csv", &regime_columns("V", k), &[&eq.value.values])?;
    run.write_grid("policy.csv", &pair_columns("pi", k), &[&eq.policy.rates])?;
    let mut names = regime_columns("m", k);
    names.extend(pair_columns("w", k));
    run.write_grid("mass.csv", &names, &[&eq.average.mass, &eq.average.flux])?;
    let summary = FpSummary {
        eta,
        stop: stop_name(report.stop),
        iterations: report.iterations,
        final_exploitability: last,
        final_payoff: report.final_payoff,
        rate_constant: report.rate.as_ref().map(|r| r.constant),
        rate_r_squared: report.rate.as_ref().map(|r| r.r_squared),
        rate_exponent: report.rate.as_ref().and_then(|r| r.power_exponent),
        divergence_warning: report.divergence_warning,
        tail_bound: report.tail_bound,
        initial_value: eq.value.initial().to_vec(),
        initial_distribution: eq.policy.initial.clone(),
    };
    run.write_json("fp.json", &summary)?;
    run.finish()
}

#[derive(Serialize)]
struct SweepRow {
    eta: f64,
    status: String,
    iterations: Option<usize>,
    gap: Option<f64>,
    initial_value: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct SweepSummary {
    entries: Vec<SweepRow>,
    cauchy: Vec<f64>,
    gap_non_increasing: bool,
    flagged_etas: Vec<f64>,
}

fn cmd_sweep(common: &Common, etas: &[f64], max_iters: Option<u64>, tol: Option<f64>) -> Outcome {
    let mut run = Run::start("sweep", common, None)?;
    let mut params = run.fp_params(None);
    if let Some(n) = max_iters {
        params.max_iters = n as usize;
    }
    if tol.is_some() {
        params.tol_exploit = tol;
    }
    let report = eta_sweep(&run.spec, etas, &run.grid, &params)?;
    let k = run.spec.regimes();
    let mut table = Vec::new();
    let mut entries = Vec::new();
    for e in &report.entries {
        match &e.outcome {
            Ok(r) => {
                println!(
                    "eta {:<8} gap {:.4e}  ({} iterations)",
                    e.eta, r.gap, r.report.iterations
                );
                table.push(vec![e.eta, r.gap, r.report.iterations as f64, r.report.final_payoff]);
                let dir = format!("eta_{}", e.eta);
                run.write_grid(
                    &format!("{dir}/rho.csv"),
                    &["rho".to_string()],
                    &[r.equilibrium.rho.as_grid_function()],
                )?;
                run.write_grid(
                    &format!("{dir}/value.csv"),
                    &regime_columns("V", k),
                    &[&r.equilibrium.value.values],
                )?;
                run.write_grid(&format!("{dir}/vi_value.csv"), &regime_columns("V", k), &[&r.vi.values])?;
                entries.push(SweepRow {
                    eta: e.eta,
                    status: "ok".into(),
                    iterations: Some(r.report.iterations),
                    gap: Some(r.gap),
                    initial_value: Some(r.equilibrium.value.initial().to_vec()),
                });
            }
            Err(msg) => {
                println!("eta {:<8} failed: {msg}", e.eta);
                entries.push(SweepRow {
                    eta: e.eta,
                    status: msg.clone(),
                    iterations: None,
                    gap: None,
                    initial_value: None,
                });
            }
        }
    }
    if !report.gap_non_increasing() {
        eprintln!("warning: the HJB/obstacle gap grew along the sweep");
    }
    let p = run.path("gaps.csv")?;
    write_table_csv(&p, &["eta", "gap", "iterations", "final_payoff"], &table, &[2])?;
    let summary = SweepSummary {
        entries,
        cauchy: report.cauchy.clone(),
        gap_non_increasing: report.gap_non_increasing(),
        flagged_etas: report.flagged.iter().map(|&i| report.entries[i].eta).collect(),
    };
    run.write_json("sweep.json", &summary)?;
    run.finish()
}

fn cmd_simulate(common: &Common, args: &FpArgs, samples: u64, seed: Option<u64>, deviants: u64) -> Outcome {
    let mut run = Run::start("simulate", common, seed)?;
    let eta = run.eta(Some(args));
    let params = run.fp_params(Some(args));
    let (_, _, eq) = run_fp(&run.spec, eta, &run.grid, &params)?;
    let sim = simulate_population(
        &SimConfig {
            n_agents: samples as usize,
            seed: run.manifest.seed,
            policy: eq.policy.clone(),
            grid: run.grid,
            record_stride: run.stride,
        },
        &run.spec,
    )?;
    println!("sup rho gap = {:.4e}", sim.sup_gap_rho);
    println!("sup mass gap = {:.4e}", sim.sup_gap_mass);
    let k = run.spec.regimes();
    run.write_grid(
        "sim_rho.csv",
        &["rho".into(), "rho_ode".into()],
        &[&sim.rho, &sim.ode_rho],
    )?;
    let mut names = regime_columns("m", k);
    names.extend(regime_columns("m_ode", k));
    run.write_grid("sim_mass.csv", &names, &[&sim.mass, &sim.ode_mass])?;
    run.write_json("simulation.json", &sim.summary())?;
    if deviants > 0 {
        let dev = deviation_test(
            &run.spec,
            &eq,
            &DeviationConfig {
                n_population: samples as usize,
                n_deviants: deviants as usize,
                seed: run.manifest.seed,
                extra_paths: Vec::new(),
            },
        )?;
        println!(
            "max deviation gain = {:.4e} (se {:.2e})",
            dev.max_gain, dev.max_gain_std_error
        );
        run.write_json("deviation.json", &dev)?;
    }
    run.finish()
}

fn cmd_verify(common: &Common, args: &FpArgs, samples: u64, seed: Option<u64>, nu: Option<f64>) -> Outcome {
    let mut run = Run::start("verify", common, seed)?;
    let eta = run.eta(Some(args));
    let params = run.fp_params(Some(args));
    let options = VerifyOptions {
        sample_count: samples as usize,
        seed: run.manifest.seed,
        nu,
        ..VerifyOptions::default()
    };
    let v = verify_relaxed_equilibrium(&run.spec, eta, &run.grid, &params, &options)?;
    let r = &v.report;
    println!("support = {:?}", r.support);
    println!(
        "Y within {:.3} on {:.4} of paths, non-increasing on {:.4}",
        r.y_tol, r.fraction_within_y_tol, r.fraction_non_increasing
    );
    println!(
        "rho gap (average effort) = {:.4e}, rho gap (survival) = {:.4e}",
        r.rho_gap_average_effort, r.rho_gap_survival
    );
    let k = run.spec.regimes();
    run.write_grid("vi_value.csv", &regime_columns("V", k), &[&v.vi.values])?;
    run.write_json("verification.json", r)?;
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate { config } => cmd_validate(config),
        Command::SolveHjb { common, eta, rho } => cmd_solve_hjb(common, *eta, rho.as_deref()),
        Command::SolveVi { common, rho } => cmd_solve_vi(common, rho.as_deref()),
        Command::Fp { common, fp } => cmd_fp(common, fp),
        Command::Sweep {
            common,
            etas,
            max_iters,
            tol,
        } => cmd_sweep(common, etas, *max_iters, *tol),
        Command::Simulate {
            common,
            fp,
            samples,
            seed,
            deviants,
        } => cmd_simulate(common, fp, *samples, *seed, *deviants),
        Command::Verify {
            common,
            fp,
            samples,
            seed,
            nu,
        } => cmd_verify(common, fp, *samples, *seed, *nu),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            if !msg.is_empty() {
                eprint!("{msg}");
            }
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Parse { .. } | Error::Config(_) | Error::GridMismatch(_) => ExitCode::from(EXIT_USAGE),
                Error::Io { .. } => ExitCode::from(EXIT_USAGE),
                _ => ExitCode::from(EXIT_SOLVER),
            }
        }
    }
}
