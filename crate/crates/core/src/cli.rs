//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, SEED_ENV};
use crate::counterexample::{mc_divergence_estimate, DivergenceRow};
use crate::rates::{fit_loglog, heat_demo, ms_error_sweep, pathwise_error_sweep, theta_max, ErrorTable, RateFit};
use crate::{Error, Result};

/// First line of every CSV file written by this tool.
pub const CSV_SCHEMA: &str = "# splitflow-v1";

#[derive(Debug, Parser)]
#[command(name = "splitflow", version, about = "Splitting-scheme convergence experiments")]
struct Cli {
    /// JSON config layered over the experiment defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config and the SPLITFLOW_SEED variable.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Output directory for CSV and JSON files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Deterministic final-time mean-square error sweep.
    MsSweep,
    /// Monte Carlo sweep of the pathwise Holder-norm error.
    PathSweep,
    /// Stochastic heat equation with spatial error norms.
    HeatDemo,
    /// Divergence of the scheme for the translation-semigroup example.
    Counterexample,
    /// Log-log fit of the `n` and `error` columns of a CSV file.
    Fit { csv: PathBuf },
    /// Quick consistency checks on closed-form values.
    Selftest,
}

#[derive(Debug, Serialize)]
struct Summary {
    experiment: String,
    theta_max: Option<f64>,
    slope: Option<f64>,
    r2: Option<f64>,
    pass: bool,
    runtime_s: f64,
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 2 for violated constraints, 3 for numerical failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let experiment = match &cli.command {
        Command::MsSweep => Experiment::MsSweep,
        Command::PathSweep => Experiment::PathSweep,
        Command::HeatDemo => Experiment::HeatDemo,
        Command::Counterexample => Experiment::Counterexample,
        Command::Fit { csv } => return fit_file(csv, cli.out.as_deref()),
        Command::Selftest => return Ok(selftest()),
    };
    let text = cli.config.as_ref().map(fs::read_to_string).transpose()?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let mut cfg = ExperimentConfig::load(experiment, text.as_deref(), env_seed.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    fs::create_dir_all(&out)?;
    let start = Instant::now();
    let name = experiment.name();
    let csv_path = out.join(format!("{name}.csv"));
    let (theta, fit, pass) = match experiment {
        Experiment::MsSweep => {
            let sweep = cfg.sweep()?;
            let table = ms_error_sweep(&sweep)?;
            write_table(&csv_path, &table)?;
            let fit = table.fit()?;
            let target = theta_max(cfg.norm.alpha, cfg.model.beta, 0.0)?;
            let pass = (fit.slope - target).abs() <= cfg.bands.deterministic;
            (Some(table.theta_max), Some(fit), pass)
        }
        Experiment::PathSweep => {
            let sweep = cfg.sweep()?;
            let table = pathwise_error_sweep(&sweep)?;
            write_table(&csv_path, &table)?;
            let fit = table.fit()?;
            let pass = fit.slope >= table.theta_max - cfg.bands.monte_carlo;
            (Some(table.theta_max), Some(fit), pass)
        }
        Experiment::HeatDemo => {
            let sweep = cfg.sweep()?;
            let (table, fit) = heat_demo(&sweep, None)?;
            write_table(&csv_path, &table)?;
            let pass = (fit.slope - table.theta_max).abs() <= cfg.bands.monte_carlo;
            (Some(table.theta_max), Some(fit), pass)
        }
        Experiment::Counterexample => {
            let rows = mc_divergence_estimate(&cfg.divergence()?)?;
            write_divergence(&csv_path, &rows)?;
            let increasing = rows.windows(2).all(|w| w[1].mc_estimate > w[0].mc_estimate);
            let above = rows
                .iter()
                .all(|r| r.subwindow_quantity + crate::rates::Z_CI * r.subwindow_se >= r.lower_bound);
            (None, None, increasing && above)
        }
    };
    let summary = Summary {
        experiment: name.into(),
        theta_max: theta,
        slope: fit.as_ref().map(|f| f.slope),
        r2: fit.as_ref().map(|f| f.r2),
        pass,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    emit_summary(&out.join(format!("{name}.json")), &summary)?;
    Ok(0)
}

fn emit_summary(path: &Path, summary: &Summary) -> Result<()> {
    let text = serde_json::to_string_pretty(summary)?;
    fs::write(path, format!("{text}\n"))?;
    println!("{text}");
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    use std::io::Write;
    let mut file = fs::File::create(path)?;
    writeln!(file, "{CSV_SCHEMA}")?;
    Ok(csv::Writer::from_writer(file))
}

/// Columns: `n, error, ci_low, ci_high, bound_theta1, bound_theta2`.
pub fn write_table(path: &Path, table: &ErrorTable) -> Result<()> {
    let mut w = csv_writer(path)?;
    for row in &table.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DivergenceCsvRow {
    n: u32,
    mc_estimate: f64,
    ci_low: f64,
    ci_high: f64,
    subwindow_quantity: f64,
    lower_bound: f64,
    exact_moment: f64,
}

/// Columns: `n, mc_estimate, ci_low, ci_high, subwindow_quantity, lower_bound, exact_moment`.
pub fn write_divergence(path: &Path, rows: &[DivergenceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(DivergenceCsvRow {
            n: r.n,
            mc_estimate: r.mc_estimate,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            subwindow_quantity: r.subwindow_quantity,
            lower_bound: r.lower_bound,
            exact_moment: r.exact_moment,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `(n, value)` pairs from a CSV file written by this tool. The value
/// column is `error` when present and the second column otherwise.
pub fn read_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let n_col = col("n").ok_or_else(|| Error::invalid("CSV has no `n` column"))?;
    let v_col = col("error").unwrap_or(if n_col == 0 { 1 } else { 0 });
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad value in row {:?}", rec.position())))
        };
        points.push((parse(n_col)?, parse(v_col)?));
    }
    Ok(points)
}

fn fit_file(path: &Path, out: Option<&Path>) -> Result<i32> {
    let start = Instant::now();
    let points = read_points(path)?;
    let fit: RateFit = fit_loglog(&points)?;
    let summary = Summary {
        experiment: "fit".into(),
        theta_max: None,
        slope: Some(fit.slope),
        r2: Some(fit.r2),
        pass: true,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            emit_summary(&dir.join("fit.json"), &summary)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&summary)?),
    }
    Ok(0)
}

fn selftest() -> i32 {
    use crate::counterexample::{divergence_threshold, gaussian_abs_moment};
    use crate::gamma::{convolution_variance, discretized_mode_sq, error_mode_sq};
    use crate::norms::spatial_field;
    use crate::spectral::{dirichlet_spectrum, discretized_semigroup_factor, fractional_weight, semigroup_factor};
    use std::f64::consts::{PI, SQRT_2};

    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    let checks: Vec<(&str, bool)> = vec![
        ("dirichlet eigenvalue", dirichlet_spectrum(3).is_ok_and(|s| close(s.eigenvalue(2), -9.0 * PI * PI))),
        ("semigroup at zero", semigroup_factor(-3.0, 0.0) == 1.0),
        ("semigroup law", close(semigroup_factor(-1.0, 0.3) * semigroup_factor(-1.0, 0.4), semigroup_factor(-1.0, 0.7))),
        (
            "staircase ceiling",
            discretized_semigroup_factor(-1.0, 0.3, 2, 1.0).is_ok_and(|v| close(v, (-0.5f64).exp())),
        ),
        ("fractional weight", fractional_weight(-PI * PI, 0.0, 0.5).is_ok_and(|v| close(v, PI))),
        ("zero-mode variance", convolution_variance(0.0, 0.7) == 0.7),
        ("single-cell second moment", close(discretized_mode_sq(-1.0, 1, 1.0, 1.0), (-2.0f64).exp())),
        ("zero-mode error", error_mode_sq(0.0, 4, 1.0, 1.0) == 0.0),
        ("theta max", theta_max(0.0, 0.0, 0.0).is_ok_and(|t| t == 0.5)),
        ("gaussian moments", close(gaussian_abs_moment(2.0), 1.0) && close(gaussian_abs_moment(4.0), 3.0)),
        ("divergence threshold", divergence_threshold(1.0, 3.0, 0.25).is_ok_and(|t| close(t, 12.0))),
        (
            "power-law fit",
            fit_loglog(&[(2.0, 0.5f64.sqrt()), (4.0, 0.5), (8.0, 0.125f64.sqrt())]).is_ok_and(|f| close(f.slope, 0.5)),
        ),
        ("field midpoint", spatial_field(&[1.0], 8).is_ok_and(|f| close(f[4], SQRT_2) && f[0] == 0.0)),
    ];
    let mut ok = true;
    for (name, pass) in &checks {
        println!("{} {name}", if *pass { "ok  " } else { "FAIL" });
        ok &= pass;
    }
    if ok {
        0
    } else {
        1
    }
}
