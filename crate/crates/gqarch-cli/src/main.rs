//! Command-line front end: simulate paths, fit the model, run replication
//! studies and feasibility or memory diagnostics.
//!
//! Every subcommand accepts `--config FILE` with flat `key = value` lines;
//! explicit flags override file values, and unknown keys fail the run.
//! Output files begin with a `# key = value` block echoing the resolved
//! settings. Exit codes: 0 success, 2 usage or configuration problems,
//! 3 unreadable or malformed data, 4 numerical failures.

use clap::{Parser, Subcommand};
use gqarch::simulator::fmt_f64;
use gqarch::{
    acf_squares, b2_of, check_feasibility_with, estimate, info_matrices, load_series,
    memory_slope_from_acf, run_mc, simulate, write_series, Error, Innovation, McDesign,
    OptimOptions, PastMode, Result, SimConfig, StartStrategy, Theta,
};
use gqarch::params::{COORD_NAMES, K4_ROSENTHAL};
use gqarch_cli::config::Resolver;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gqarch", version, about = "Long-memory GQARCH simulation and estimation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a return path and write it as a series file
    Simulate(SimulateArgs),
    /// Fit the model to a series file by QML
    Estimate(EstimateArgs),
    /// Bias/RMSE replication study over a (omega0, d0, n) grid
    Mc(McArgs),
    /// Autocorrelation of squared returns and the implied memory slope
    Diagnose(DiagnoseArgs),
    /// Moment-condition check for a parameter point
    Feasibility(FeasibilityArgs),
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Observations to generate (burn-in of the same length is implied)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// normal, student:NU or rademacher
    #[arg(long)]
    innovation: Option<String>,
    /// Keep the burn-in block in the output (true/false)
    #[arg(long, value_name = "BOOL")]
    keep_presample: Option<bool>,
    /// Simulate even if the stationarity condition fails (true/false)
    #[arg(long, value_name = "BOOL")]
    force: Option<bool>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Series file to fit
    #[arg(long, visible_alias = "in")]
    input: Option<String>,
    /// finite-past, presample or truncated:BETA
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for the multistart design
    #[arg(long)]
    opt_seed: Option<u64>,
    /// Refine the winner with projected gradient steps (true/false)
    #[arg(long, value_name = "BOOL")]
    use_gradient: Option<bool>,
    /// CSV output file for the fit row; report always goes to stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct McArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a0: Option<f64>,
    #[arg(long)]
    c0: Option<f64>,
    /// Comma-separated omega values of the design grid
    #[arg(long)]
    omega0: Option<String>,
    /// Comma-separated d values of the design grid
    #[arg(long)]
    d0: Option<String>,
    /// Comma-separated sample sizes
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    innovation: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Thread count; library default when omitted
    #[arg(long)]
    workers: Option<usize>,
    /// CSV output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DiagnoseArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Series file to diagnose
    #[arg(long, visible_alias = "in")]
    input: Option<String>,
    #[arg(long)]
    max_lag: Option<usize>,
    /// First lag of the slope fit (the fit runs over lag_lo..=max_lag)
    #[arg(long)]
    lag_lo: Option<usize>,
    /// CSV output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct FeasibilityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Innovation law fixing the fourth moment of the check
    #[arg(long)]
    innovation: Option<String>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParam(_) | Error::InvalidConfig(_) | Error::InfeasibleBox { .. } => 2,
        Error::Io(_) | Error::Parse { .. } | Error::EmptySeries | Error::PresampleMissing => 3,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Mc(a) => cmd_mc(a),
        Cmd::Diagnose(a) => cmd_diagnose(a),
        Cmd::Feasibility(a) => cmd_feasibility(a),
    }
}

fn parse_innovation(tok: &str) -> Result<Innovation> {
    match tok {
        "normal" => Ok(Innovation::StandardNormal),
        "rademacher" => Ok(Innovation::Rademacher),
        _ => tok
            .strip_prefix("student:")
            .and_then(|nu| nu.parse::<f64>().ok())
            .map(|nu| Innovation::StudentT { nu })
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown innovation {tok:?}; expected normal, student:NU or rademacher"
                ))
            }),
    }
}

fn parse_mode(tok: &str) -> Result<PastMode> {
    match tok {
        "finite-past" => Ok(PastMode::FinitePast),
        "presample" => Ok(PastMode::Presample),
        _ => tok
            .strip_prefix("truncated:")
            .and_then(|b| b.parse::<f64>().ok())
            .map(|beta| PastMode::Truncated { beta })
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown past mode {tok:?}; expected finite-past, presample or truncated:BETA"
                ))
            }),
    }
}

fn parse_list<T>(what: &str, tok: &str) -> Result<Vec<T>>
where
    T: std::str::FromStr,
{
    tok.split(',')
        .map(|p| {
            p.trim().parse::<T>().map_err(|_| {
                Error::InvalidConfig(format!("cannot parse {p:?} in {what} list {tok:?}"))
            })
        })
        .collect()
}

/// Writes `content` to the file or to stdout.
fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut r = Resolver::new("simulate", args.config.as_deref())?;
    let n = r.take("n", args.n, 1000)?;
    let seed = r.take("seed", args.seed, 1)?;
    let gamma = r.take_required("gamma", args.gamma)?;
    let omega = r.take_required("omega", args.omega)?;
    let a = r.take_required("a", args.a)?;
    let d = r.take_required("d", args.d)?;
    let c = r.take_required("c", args.c)?;
    let innovation_tok = r.take("innovation", args.innovation, "normal".into())?;
    let keep_presample = r.take("keep_presample", args.keep_presample, false)?;
    let force = r.take("force", args.force, false)?;
    let rc = r.finish()?;

    let theta = Theta::new(gamma, omega, a, d, c)?;
    let cfg = SimConfig {
        n,
        seed,
        innovation: parse_innovation(&innovation_tok)?,
        keep_presample,
        force,
    };
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    let path = simulate(&theta, &cfg)?;

    let mut buf = Vec::new();
    write_series(&mut buf, &path, &rc.comment_lines())?;
    match args.out.as_deref() {
        Some(p) => std::fs::write(p, &buf)?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let mut r = Resolver::new("estimate", args.config.as_deref())?;
    let input: String = r.take_required("input", args.input)?;
    let mode_tok = r.take("mode", args.mode, "finite-past".into())?;
    let starts = r.take("starts", args.starts, 5)?;
    let max_iters = r.take("max_iters", args.max_iters, 2000)?;
    let opt_seed = r.take("opt_seed", args.opt_seed, 0)?;
    let use_gradient = r.take("use_gradient", args.use_gradient, false)?;
    let rc = r.finish()?;

    let mode = parse_mode(&mode_tok)?;
    let series = load_series(Path::new(&input))?;
    let opts = OptimOptions {
        starts,
        max_iters,
        use_gradient,
        start_strategy: StartStrategy::LatinHypercube { seed: opt_seed },
        ..Default::default()
    };
    let fit = estimate(&series, mode, &opts)?;
    let info = match info_matrices(&fit.theta_hat, &series, mode) {
        Ok(i) => Some(i),
        Err(e @ Error::SingularInfo { .. }) => {
            eprintln!("warning: standard errors unavailable: {e}");
            None
        }
        Err(e) => return Err(e),
    };

    let th = fit.theta_hat.to_array();
    let se = info.as_ref().map(|i| i.se).unwrap_or([f64::NAN; 5]);
    let b2 = b2_of(&fit.theta_hat);

    println!(
        "n = {} observations, mode = {}, window = {}",
        series.n(),
        mode_tok,
        mode.window(series.n())?
    );
    println!(
        "objective = {:.6}  converged = {}  iterations = {}  starts = {}",
        fit.objective,
        if fit.converged { "yes" } else { "no" },
        fit.iterations,
        fit.starts_used
    );
    println!("{:>6}  {:>12}  {:>12}", "", "estimate", "std.err");
    for i in 0..5 {
        println!("{:>6}  {:>12.6}  {:>12.6}", COORD_NAMES[i], th[i], se[i]);
    }
    match &info {
        Some(i) => println!(
            "kappa4_hat = {:.4}  b2 = {:.6}  condition = {:.3e}",
            i.kappa4_hat, b2, i.condition_number
        ),
        None => println!("kappa4_hat = nan  b2 = {b2:.6}  condition = nan"),
    }
    for w in &fit.warnings {
        println!("warning: {w}");
    }

    if let Some(out) = args.out.as_deref() {
        let mut csv = rc.comment_block();
        csv += "n,mode,gamma_hat,omega_hat,a_hat,d_hat,c_hat,";
        csv += "se_gamma,se_omega,se_a,se_d,se_c,";
        csv += "objective,kappa4_hat,b2,converged,iterations,starts_used,effective_n,floor_activated\n";
        let kappa4 = info.as_ref().map(|i| i.kappa4_hat).unwrap_or(f64::NAN);
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            series.n(),
            mode_tok,
            fmt_f64(th[0]),
            fmt_f64(th[1]),
            fmt_f64(th[2]),
            fmt_f64(th[3]),
            fmt_f64(th[4]),
            fmt_f64(se[0]),
            fmt_f64(se[1]),
            fmt_f64(se[2]),
            fmt_f64(se[3]),
            fmt_f64(se[4]),
            fmt_f64(fit.objective),
            fmt_f64(kappa4),
            fmt_f64(b2),
            fit.converged,
            fit.iterations,
            fit.starts_used,
            mode.window(series.n())?,
            fit.floor_activated,
        );
        emit(Some(out), &csv)?;
    }
    Ok(())
}

fn cmd_mc(args: McArgs) -> Result<()> {
    let mut r = Resolver::new("mc", args.config.as_deref())?;
    let gamma0 = r.take("gamma0", args.gamma0, 0.1)?;
    let a0 = r.take("a0", args.a0, 0.05)?;
    let c0 = r.take("c0", args.c0, 0.2)?;
    let omega0_tok: String = r.take_required("omega0", args.omega0)?;
    let d0_tok: String = r.take_required("d0", args.d0)?;
    let n_tok: String = r.take_required("n", args.n)?;
    let reps = r.take_required("reps", args.reps)?;
    let mode_tok = r.take("mode", args.mode, "finite-past".into())?;
    let innovation_tok = r.take("innovation", args.innovation, "normal".into())?;
    let seed = r.take("seed", args.seed, 1)?;
    let starts = r.take("starts", args.starts, 5)?;
    let max_iters = r.take("max_iters", args.max_iters, 2000)?;
    let workers = r.take_opt("workers", args.workers)?;
    let rc = r.finish()?;

    let omega0s: Vec<f64> = parse_list("omega0", &omega0_tok)?;
    let d0s: Vec<f64> = parse_list("d0", &d0_tok)?;
    let n_list: Vec<usize> = parse_list("n", &n_tok)?;
    let mut theta_grid = Vec::new();
    for &w0 in &omega0s {
        for &dv in &d0s {
            theta_grid.push(Theta::new(gamma0, w0, a0, dv, c0)?);
        }
    }
    let design = McDesign {
        theta_grid,
        n_list,
        reps,
        mode: parse_mode(&mode_tok)?,
        innovation: parse_innovation(&innovation_tok)?,
        seed,
        opts: OptimOptions { starts, max_iters, ..Default::default() },
    };
    let report = run_mc(&design, workers)?;

    let mut csv = rc.comment_block();
    csv += "omega0,d0,n,reps,rmse_gamma,rmse_omega,rmse_a,rmse_d,rmse_c,";
    csv += "bias_gamma,bias_omega,bias_a,bias_d,bias_c,failures,seed\n";
    for cell in &report.cells {
        csv += &format!(
            "{},{},{},{}",
            fmt_f64(cell.theta0.omega),
            fmt_f64(cell.theta0.d),
            cell.n,
            reps
        );
        for v in cell.rmse.iter().chain(&cell.bias) {
            csv += &format!(",{}", fmt_f64(*v));
        }
        csv += &format!(",{},{seed}\n", cell.failures);
    }
    emit(args.out.as_deref(), &csv)?;

    if args.out.is_some() {
        println!(
            "rmse over {} reps, mode = {}, gamma0 = {}, a0 = {}, c0 = {}, wall = {:.1}s",
            reps, mode_tok, gamma0, a0, c0, report.wall_time_s
        );
        println!(
            "{:>22}  {:>8} {:>8} {:>8} {:>8} {:>8}  {:>4}",
            "", "gamma", "omega", "a", "d", "c", "fail"
        );
        // One block per omega0, rows ordered by (n, d0) as in the report
        // tables this mirrors.
        for &w0 in &omega0s {
            println!("omega0 = {w0}");
            let mut block: Vec<_> = report
                .cells
                .iter()
                .filter(|cell| cell.theta0.omega == w0)
                .collect();
            block.sort_by(|x, y| {
                (x.n, x.theta0.d).partial_cmp(&(y.n, y.theta0.d)).unwrap()
            });
            for cell in block {
                println!(
                    "{:>22}  {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  {:>4}",
                    format!("n = {}, d0 = {}", cell.n, cell.theta0.d),
                    cell.rmse[0],
                    cell.rmse[1],
                    cell.rmse[2],
                    cell.rmse[3],
                    cell.rmse[4],
                    cell.failures,
                );
            }
        }
    }
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let mut r = Resolver::new("diagnose", args.config.as_deref())?;
    let input: String = r.take_required("input", args.input)?;
    let max_lag = r.take("max_lag", args.max_lag, 50)?;
    let lag_lo = r.take("lag_lo", args.lag_lo, 2)?;
    let rc = r.finish()?;
    if !(2 <= lag_lo && lag_lo < max_lag) {
        return Err(Error::InvalidConfig(format!(
            "slope fit needs 2 <= lag_lo < max_lag, got lag_lo {lag_lo}, max_lag {max_lag}"
        )));
    }

    let series = load_series(Path::new(&input))?;
    let acf = acf_squares(&series.observations, max_lag)?;
    let slope = memory_slope_from_acf(&acf, lag_lo);

    // The autocovariance table is written even when the slope fit fails,
    // so the offending lags can be inspected.
    let mut csv = rc.comment_block();
    if let Ok(ms) = &slope {
        csv += &format!("# slope = {}\n", fmt_f64(ms.slope));
        csv += &format!("# d_implied = {}\n", fmt_f64(ms.d_implied));
        csv += &format!("# fit_lags = {}..={} ({} lags)\n", lag_lo, max_lag, ms.lags);
    }
    csv += "lag,autocov\n";
    for (lag, cov) in acf.iter().enumerate() {
        csv += &format!("{lag},{}\n", fmt_f64(*cov));
    }
    emit(args.out.as_deref(), &csv)?;

    let ms = slope?;
    if args.out.is_some() {
        println!(
            "n = {}, fit lags {}..={}, slope = {:.4}, d_implied = {:.4}",
            series.n(),
            lag_lo,
            max_lag,
            ms.slope,
            ms.d_implied
        );
    }
    Ok(())
}

fn cmd_feasibility(args: FeasibilityArgs) -> Result<()> {
    let mut r = Resolver::new("feasibility", args.config.as_deref())?;
    let gamma = r.take_required("gamma", args.gamma)?;
    let omega = r.take_required("omega", args.omega)?;
    let a = r.take_required("a", args.a)?;
    let d = r.take_required("d", args.d)?;
    let c = r.take_required("c", args.c)?;
    let innovation_tok = r.take("innovation", args.innovation, "normal".into())?;
    r.finish()?;

    let theta = Theta::new(gamma, omega, a, d, c)?;
    let innovation = parse_innovation(&innovation_tok)?;
    println!("theta: {theta}");
    match innovation.mu4() {
        Some(mu4) => {
            let rep = check_feasibility_with(&theta, mu4, K4_ROSENTHAL);
            println!("b2 = {}", fmt_f64(rep.b2));
            println!(
                "l2 (b2 < 1 - gamma): {}, slack = {}",
                if rep.l2_ok { "satisfied" } else { "violated" },
                fmt_f64(rep.slack_l2)
            );
            println!(
                "l4 (k4 * mu4 * b2^2 < 1 - gamma, mu4 = {}): {}, slack = {}",
                mu4,
                if rep.l4_ok { "satisfied" } else { "violated" },
                fmt_f64(rep.slack_l4)
            );
            println!(
                "feasible for simulation: {}",
                if rep.l2_ok { "yes" } else { "no" }
            );
        }
        None => {
            let rep = check_feasibility_with(&theta, f64::INFINITY, K4_ROSENTHAL);
            println!("b2 = {}", fmt_f64(rep.b2));
            println!(
                "l2 (b2 < 1 - gamma): {}, slack = {}",
                if rep.l2_ok { "satisfied" } else { "violated" },
                fmt_f64(rep.slack_l2)
            );
            println!(
                "l4: fourth moment of {innovation_tok} innovations is infinite; condition cannot be met"
            );
            println!(
                "feasible for simulation: {}",
                if rep.l2_ok { "yes" } else { "no" }
            );
        }
    }
    Ok(())
}
