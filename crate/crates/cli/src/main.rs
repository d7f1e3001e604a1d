//! Single-binary front end: ingestion, simulation, estimation, diagnostics,
//! and the two market-structure applications, with a manifest per run so any
//! output can be reproduced exactly from its directory.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveTime;
use clap::{Args, Parser, Subcommand};

use subclock_core::durations::{
    simulate_exponential, simulate_msmd, simulate_tmsmd, DurationModelParams, ExpParams,
    MsmdParams, TmsmdParams,
};
use subclock_core::inference::{
    bootstrap_se, fit_exponential, fit_gaussian, fit_msmd, fit_tmsmd, select_kbar, FitOptions,
    GaussianParams,
};
use subclock_core::io;
use subclock_core::market::{
    cumulative_response, inforce_series, lagged_response, price_changing_events, vol_curve,
    DEFAULT_ANNUAL_MS, DEFAULT_PRICE_REF,
};
use subclock_core::stats::{
    acf, chi2_critical, chi_squared_gof, exponential_quantile, gaussian_quantile,
    kl_divergence_floored, ljung_box, qq_points, DiscretePmf,
};
use subclock_core::subordination::{
    clamp_to_support, simulate_clock_returns, SupportSet, DEFAULT_TICK_SIZE,
};
use subclock_core::ticks::{
    aggregate_ms, clock_returns, durations as tick_durations, parse_calendar, parse_ticks,
    slice_windows, TickSeries, DEFAULT_WINDOW_MS,
};

const OUT_DIR_ENV: &str = "SUBCLOCK_OUT_DIR";

#[derive(Parser)]
#[command(name = "subclock", version, about = "Inter-trade duration models and subordinated return diagnostics")]
struct Cli {
    /// key=value file supplying defaults for any long flag of the subcommand
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory (or set SUBCLOCK_OUT_DIR); created if missing
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArgs {
    fn resolve(&self) -> Result<PathBuf, String> {
        let dir = self
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .ok_or_else(|| format!("no output directory: pass --out or set {OUT_DIR_ENV}"))?;
        fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        Ok(dir)
    }
}

#[derive(Args, Clone)]
struct MsmdArgs {
    #[arg(long)]
    kbar: usize,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    gamma_kbar: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    m0: f64,
}

impl MsmdArgs {
    fn params(&self) -> Result<MsmdParams, String> {
        MsmdParams::new(self.kbar, self.lambda, self.gamma_kbar, self.b, self.m0)
            .map_err(|e| e.to_string())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw ticks, aggregate per millisecond, extract durations
    Ingest {
        #[arg(long)]
        ticks: PathBuf,
        /// Announcement calendar; adds active/passive window slicing
        #[arg(long)]
        calendar: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_WINDOW_MS)]
        window_ms: i64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate duration series or compound clock-time returns
    Simulate {
        #[command(subcommand)]
        model: SimulateCommand,
    },
    /// Fit a model to data and emit the estimates as JSON
    Estimate {
        #[command(subcommand)]
        model: EstimateCommand,
    },
    /// Goodness-of-fit tables comparing two tick series across window sizes
    Gof {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sim: PathBuf,
        /// Comma-separated window sizes in ms
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,5000,10000,30000")]
        tau: Vec<f64>,
        /// Ljung-Box lag count on squared returns
        #[arg(long, default_value_t = 20)]
        lags: usize,
        /// Clamp simulated returns outside the data support to zero
        #[arg(long, default_value_t = false)]
        clamp: bool,
        #[arg(long, default_value_t = DEFAULT_TICK_SIZE)]
        tick_size: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Sample autocorrelation of a single-column series
    Acf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        max_lag: usize,
        /// Square the series first (volatility clustering view)
        #[arg(long, default_value_t = false)]
        squared: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quantile-quantile points of a sample against a reference distribution
    Qq {
        #[arg(long)]
        input: PathBuf,
        /// exp or gaussian
        #[arg(long)]
        dist: String,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 99)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Baseline-intensity sweep: trade rate vs annualized volatility curve
    Volmap {
        #[command(flatten)]
        msmd: MsmdArgs,
        #[arg(long)]
        nu_max: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0.01)]
        lambda_min: f64,
        #[arg(long, default_value_t = 6.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[arg(long, default_value_t = 1000.0)]
        tau: f64,
        #[arg(long, default_value_t = 2000)]
        n_windows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_PRICE_REF)]
        price_ref: f64,
        #[arg(long, default_value_t = DEFAULT_TICK_SIZE)]
        tick_size: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Millisecond lead-lag response between two tick series
    Leadlag {
        #[arg(long)]
        leader: PathBuf,
        #[arg(long)]
        follower: PathBuf,
        #[arg(long, default_value_t = 30)]
        max_lag: i64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Re-run a previous command from its manifest
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Redirect outputs; defaults to the manifest's directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SimulateCommand {
    Exp {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    Msmd {
        #[command(flatten)]
        msmd: MsmdArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the latent multiplier path
        #[arg(long, default_value_t = false)]
        latent: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    Tmsmd {
        #[command(flatten)]
        msmd: MsmdArgs,
        #[arg(long)]
        nu_max: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Compound clock-time returns over fixed windows
    Clock {
        /// exp, msmd, or tmsmd
        #[arg(long)]
        model: String,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        kbar: Option<usize>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        gamma_kbar: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        m0: Option<f64>,
        #[arg(long)]
        nu_max: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        n_windows: usize,
        #[arg(long, default_value_t = DEFAULT_TICK_SIZE)]
        tick_size: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand)]
enum EstimateCommand {
    Exp {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    Msmd {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kbar: Option<usize>,
        /// Inclusive range a..b fitted per candidate, e.g. 1..5
        #[arg(long)]
        kbar_range: Option<String>,
        /// Calibrate the truncation and report a tmsmd fit
        #[arg(long, default_value_t = false)]
        truncated: bool,
        /// Bootstrap replications for standard errors
        #[arg(long)]
        bootstrap: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    Gaussian {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

fn read_series_column(path: &Path) -> Result<Vec<f64>, String> {
    let content = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut values = Vec::new();
    for (i, line) in content.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        let v: f64 = field
            .parse()
            .map_err(|e| format!("{} line {}: {e}", path.display(), i + 1))?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(format!("{}: no data rows", path.display()));
    }
    Ok(values)
}

fn load_ticks(path: &Path) -> Result<TickSeries, String> {
    let (raw, _) = parse_ticks(path).map_err(|e| e.to_string())?;
    if raw.is_empty() {
        return Err(format!("{}: no tick rows", path.display()));
    }
    Ok(aggregate_ms(&raw))
}

fn write_manifest(dir: &Path, argv: &[String], outputs: &[String]) -> Result<(), String> {
    let manifest = serde_json::json!({ "argv": argv, "outputs": outputs });
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| e.to_string())?;
    fs::write(dir.join("manifest.json"), text + "\n").map_err(|e| e.to_string())
}

/// Applies `key=value` defaults from a config file: each key becomes --key
/// value unless that flag already appears on the command line.
fn apply_config(mut argv: Vec<String>) -> Result<Vec<String>, String> {
    let pos = argv.iter().position(|a| a == "--config");
    let Some(pos) = pos else { return Ok(argv) };
    let path = argv
        .get(pos + 1)
        .cloned()
        .ok_or("--config requires a file path")?;
    let content =
        fs::read_to_string(&path).map_err(|e| format!("config {path}: {e}"))?;
    for (i, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(format!("config {path} line {}: expected key=value", i + 1))?;
        let flag = format!("--{}", key.trim());
        if !argv.iter().any(|a| *a == flag) {
            argv.push(flag);
            argv.push(value.trim().to_string());
        }
    }
    Ok(argv)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(argv: Vec<String>) -> Result<(), String> {
    let argv = apply_config(argv)?;
    let cli = Cli::try_parse_from(&argv).map_err(|e| e.to_string())?;
    dispatch(cli.command, &argv[1..])
}

fn dispatch(command: Command, argv: &[String]) -> Result<(), String> {
    match command {
        Command::Ingest {
            ticks,
            calendar,
            window_ms,
            out,
        } => cmd_ingest(&ticks, calendar.as_deref(), window_ms, &out, argv),
        Command::Simulate { model } => cmd_simulate(model, argv),
        Command::Estimate { model } => cmd_estimate(model, argv),
        Command::Gof {
            data,
            sim,
            tau,
            lags,
            clamp,
            tick_size,
            out,
        } => cmd_gof(&data, &sim, &tau, lags, clamp, tick_size, &out, argv),
        Command::Acf {
            input,
            max_lag,
            squared,
            out,
        } => cmd_acf(&input, max_lag, squared, &out, argv),
        Command::Qq {
            input,
            dist,
            nu,
            mu,
            sigma,
            points,
            out,
        } => cmd_qq(&input, &dist, nu, mu, sigma, points, &out, argv),
        Command::Volmap {
            msmd,
            nu_max,
            mu,
            sigma,
            lambda_min,
            lambda_max,
            points,
            tau,
            n_windows,
            seed,
            price_ref,
            tick_size,
            out,
        } => cmd_volmap(
            &msmd, nu_max, mu, sigma, lambda_min, lambda_max, points, tau, n_windows, seed,
            price_ref, tick_size, &out, argv,
        ),
        Command::Leadlag {
            leader,
            follower,
            max_lag,
            out,
        } => cmd_leadlag(&leader, &follower, max_lag, &out, argv),
        Command::Replay { manifest, out } => cmd_replay(&manifest, out),
    }
}

fn cmd_ingest(
    ticks_path: &Path,
    calendar_path: Option<&Path>,
    window_ms: i64,
    out: &OutArgs,
    argv: &[String],
) -> Result<(), String> {
    let (raw, sorted_warning) = parse_ticks(ticks_path).map_err(|e| e.to_string())?;
    if raw.len() < 2 {
        return Err("need at least 2 tick rows".into());
    }
    if sorted_warning {
        eprintln!("warning: input was not sorted by timestamp; sorting");
    }
    let series = aggregate_ms(&raw);
    let durations = tick_durations(&series).map_err(|e| e.to_string())?;
    let calendar = calendar_path
        .map(|p| parse_calendar(p).map_err(|e| e.to_string()))
        .transpose()?;

    let dir = out.resolve()?;
    let mut outputs = Vec::new();

    let ticks_out = dir.join("ticks_ms.csv");
    let mut body = String::from("timestamp_ms,price\n");
    for r in &series.records {
        body.push_str(&format!("{},{}\n", r.timestamp_ms, r.price));
    }
    fs::write(&ticks_out, body).map_err(|e| e.to_string())?;
    outputs.push("ticks_ms.csv".to_string());

    io::write_duration_series(&durations, &dir.join("durations.csv"))
        .map_err(|e| e.to_string())?;
    outputs.push("durations.csv".to_string());

    let mut summary = serde_json::json!({
        "n_raw": raw.len(),
        "n_aggregated": series.len(),
        "sorted_warning": sorted_warning,
        "first_ms": series.first_ms(),
        "last_ms": series.last_ms(),
    });
    if let Some(calendar) = calendar {
        let times = [
            NaiveTime::from_hms_opt(8, 30, 0).unwrap(),
            NaiveTime::from_hms_opt(10, 0, 0).unwrap(),
        ];
        let slices =
            slice_windows(&series, &calendar, window_ms, &times).map_err(|e| e.to_string())?;
        let mut body = String::from("kind,start_ms,n_ticks,truncated\n");
        for s in &slices {
            let kind = match s.kind {
                subclock_core::ticks::WindowKind::Active => "active",
                subclock_core::ticks::WindowKind::Passive => "passive",
            };
            body.push_str(&format!(
                "{kind},{},{},{}\n",
                s.start_ms,
                s.ticks.len(),
                s.truncated
            ));
        }
        fs::write(dir.join("windows.csv"), body).map_err(|e| e.to_string())?;
        outputs.push("windows.csv".to_string());
        summary["n_windows"] = serde_json::json!(slices.len());
    }
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())? + "\n",
    )
    .map_err(|e| e.to_string())?;
    outputs.push("summary.json".to_string());
    write_manifest(&dir, argv, &outputs)
}

fn cmd_simulate(model: SimulateCommand, argv: &[String]) -> Result<(), String> {
    match model {
        SimulateCommand::Exp { nu, n, seed, out } => {
            let params = ExpParams::new(nu).map_err(|e| e.to_string())?;
            let series = simulate_exponential(&params, n, seed).map_err(|e| e.to_string())?;
            let dir = out.resolve()?;
            io::write_duration_series(&series, &dir.join("durations.csv"))
                .map_err(|e| e.to_string())?;
            write_manifest(&dir, argv, &["durations.csv".to_string()])
        }
        SimulateCommand::Msmd {
            msmd,
            n,
            seed,
            latent,
            out,
        } => {
            let params = msmd.params()?;
            let (series, path) = simulate_msmd(&params, n, seed).map_err(|e| e.to_string())?;
            let dir = out.resolve()?;
            let mut outputs = vec!["durations.csv".to_string()];
            io::write_duration_series(&series, &dir.join("durations.csv"))
                .map_err(|e| e.to_string())?;
            if latent {
                io::write_latent_path(&path, &dir.join("latent.csv"))
                    .map_err(|e| e.to_string())?;
                outputs.push("latent.csv".to_string());
            }
            write_manifest(&dir, argv, &outputs)
        }
        SimulateCommand::Tmsmd {
            msmd,
            nu_max,
            n,
            seed,
            out,
        } => {
            let params = TmsmdParams::new(msmd.params()?, nu_max).map_err(|e| e.to_string())?;
            let series = simulate_tmsmd(&params, n, seed).map_err(|e| e.to_string())?;
            let dir = out.resolve()?;
            io::write_duration_series(&series, &dir.join("durations.csv"))
                .map_err(|e| e.to_string())?;
            write_manifest(&dir, argv, &["durations.csv".to_string()])
        }
        SimulateCommand::Clock {
            model,
            nu,
            kbar,
            lambda,
            gamma_kbar,
            b,
            m0,
            nu_max,
            mu,
            sigma,
            tau,
            n_windows,
            tick_size,
            seed,
            out,
        } => {
            let need = |v: Option<f64>, name: &str| {
                v.ok_or(format!("--{name} is required for model {model}"))
            };
            let msmd_params = || -> Result<MsmdParams, String> {
                let kbar = kbar.ok_or("--kbar is required")?;
                MsmdParams::new(
                    kbar,
                    need(lambda, "lambda")?,
                    need(gamma_kbar, "gamma-kbar")?,
                    need(b, "b")?,
                    need(m0, "m0")?,
                )
                .map_err(|e| e.to_string())
            };
            let model_params = match model.as_str() {
                "exp" => DurationModelParams::Exponential(
                    ExpParams::new(need(nu, "nu")?).map_err(|e| e.to_string())?,
                ),
                "msmd" => DurationModelParams::Msmd(msmd_params()?),
                "tmsmd" => DurationModelParams::Tmsmd(
                    TmsmdParams::new(msmd_params()?, need(nu_max, "nu-max")?)
                        .map_err(|e| e.to_string())?,
                ),
                other => return Err(format!("unknown model {other}; use exp, msmd, or tmsmd")),
            };
            let g = GaussianParams::new(mu, sigma).map_err(|e| e.to_string())?;
            let sim =
                simulate_clock_returns(&model_params, &g, tau, n_windows, seed, None, tick_size)
                    .map_err(|e| e.to_string())?;
            let dir = out.resolve()?;
            io::write_compound_simulation(&sim, &dir.join("clock.csv"), &dir.join("clock.json"))
                .map_err(|e| e.to_string())?;
            write_manifest(
                &dir,
                argv,
                &["clock.csv".to_string(), "clock.json".to_string()],
            )
        }
    }
}

fn parse_kbar_range(s: &str) -> Result<Vec<usize>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or(format!("bad --kbar-range {s}; expected a..b"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start {a}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end {b}"))?;
    if a == 0 || b < a {
        return Err(format!("bad --kbar-range {s}; need 1 <= a <= b"));
    }
    Ok((a..=b).collect())
}

fn cmd_estimate(model: EstimateCommand, argv: &[String]) -> Result<(), String> {
    match model {
        EstimateCommand::Exp { input, out } => {
            let series = io::read_duration_series(&input).map_err(|e| e.to_string())?;
            let fit = fit_exponential(&series).map_err(|e| e.to_string())?;
            let dir = out.resolve()?;
            fs::write(
                dir.join("fit.json"),
                serde_json::to_string_pretty(&fit).map_err(|e| e.to_string())? + "\n",
            )
            .map_err(|e| e.to_string())?;
            write_manifest(&dir, argv, &["fit.json".to_string()])
        }
        EstimateCommand::Msmd {
            input,
            kbar,
            kbar_range,
            truncated,
            bootstrap,
            seed,
            out,
        } => {
            let series = io::read_duration_series(&input).map_err(|e| e.to_string())?;
            let options = FitOptions::default();
            let dir = out.resolve()?;
            if let Some(range) = kbar_range {
                let rows = select_kbar(&series, &parse_kbar_range(&range)?, &options);
                io::write_kbar_table(&rows, &dir.join("kbar_table.csv"))
                    .map_err(|e| e.to_string())?;
                return write_manifest(&dir, argv, &["kbar_table.csv".to_string()]);
            }
            let kbar = kbar.ok_or("pass --kbar or --kbar-range")?;
            let mut fit = if truncated {
                fit_tmsmd(&series, kbar, &options).map_err(|e| e.to_string())?
            } else {
                fit_msmd(&series, kbar, &options).map_err(|e| e.to_string())?
            };
            if let Some(n_boot) = bootstrap {
                let se = bootstrap_se(&fit, series.len(), n_boot, seed)
                    .map_err(|e| e.to_string())?;
                fit.se = Some(se);
            }
            fs::write(
                dir.join("fit.json"),
                serde_json::to_string_pretty(&fit).map_err(|e| e.to_string())? + "\n",
            )
            .map_err(|e| e.to_string())?;
            write_manifest(&dir, argv, &["fit.json".to_string()])
        }
        EstimateCommand::Gaussian { input, out } => {
            let values = read_series_column(&input)?;
            let g = fit_gaussian(&values).map_err(|e| e.to_string())?;
            let dir = out.resolve()?;
            let json = serde_json::json!({
                "model": "gaussian",
                "params": { "mu": g.mu, "sigma": g.sigma },
                "n_obs": values.len(),
            });
            fs::write(
                dir.join("fit.json"),
                serde_json::to_string_pretty(&json).map_err(|e| e.to_string())? + "\n",
            )
            .map_err(|e| e.to_string())?;
            write_manifest(&dir, argv, &["fit.json".to_string()])
        }
    }
}

fn pmf_on_support(sample: &[f64], support: &[f64]) -> Result<DiscretePmf, String> {
    let mut counts = vec![0usize; support.len()];
    for &v in sample {
        let idx = support
            .binary_search_by(|s| s.partial_cmp(&v).unwrap())
            .map_err(|_| format!("value {v} missing from the shared support"))?;
        counts[idx] += 1;
    }
    let n = sample.len() as f64;
    let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    DiscretePmf::new(support.to_vec(), probs).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gof(
    data_path: &Path,
    sim_path: &Path,
    taus: &[f64],
    lags: usize,
    clamp: bool,
    tick_size: f64,
    out: &OutArgs,
    argv: &[String],
) -> Result<(), String> {
    let data = load_ticks(data_path)?;
    let sim = load_ticks(sim_path)?;
    let mut rows = Vec::new();
    for &tau in taus {
        let r_data = clock_returns(&data, tau as i64).map_err(|e| e.to_string())?;
        let mut r_sim = clock_returns(&sim, tau as i64).map_err(|e| e.to_string())?;
        let support = SupportSet::from_returns(&r_data, tick_size).map_err(|e| e.to_string())?;
        let mismatched = r_sim.iter().any(|&r| !support.contains(r));
        if mismatched {
            if !clamp {
                return Err(format!(
                    "tau {tau}: simulated returns fall outside the data support; \
                     re-run with --clamp to map them to zero"
                ));
            }
            let (clamped, report) = clamp_to_support(&r_sim, &support);
            r_sim = clamped;
            eprintln!(
                "tau {tau}: clamped {} of {} simulated returns",
                report.adjusted, report.total
            );
        }
        let mut union: Vec<f64> = r_data.iter().chain(r_sim.iter()).copied().collect();
        union.sort_by(|a, b| a.partial_cmp(b).unwrap());
        union.dedup();
        let f = pmf_on_support(&r_data, &union)?;
        let g = pmf_on_support(&r_sim, &union)?;
        let (chi2, df) =
            chi_squared_gof(&f, r_data.len(), &g, r_sim.len()).map_err(|e| e.to_string())?;
        let crit = chi2_critical(0.95, df).map_err(|e| e.to_string())?;
        let (kl, floor) = kl_divergence_floored(&f, &g, r_sim.len()).map_err(|e| e.to_string())?;
        let sq_data: Vec<f64> = r_data.iter().map(|r| r * r).collect();
        let sq_sim: Vec<f64> = r_sim.iter().map(|r| r * r).collect();
        let (lb_data, _) = ljung_box(&sq_data, lags).map_err(|e| e.to_string())?;
        let (lb_sim, _) = ljung_box(&sq_sim, lags).map_err(|e| e.to_string())?;
        rows.push(format!(
            "{tau},{},{},{chi2},{df},{crit},{kl},{floor},{lb_data},{lb_sim}",
            r_data.len(),
            r_sim.len()
        ));
    }
    let dir = out.resolve()?;
    let mut body =
        String::from("tau,n_data,n_sim,chi2,df,chi2_crit_5pct,kl,kl_floor,lb_sq_data,lb_sq_sim\n");
    for row in rows {
        body.push_str(&row);
        body.push('\n');
    }
    fs::write(dir.join("gof.csv"), body).map_err(|e| e.to_string())?;
    write_manifest(&dir, argv, &["gof.csv".to_string()])
}

fn cmd_acf(
    input: &Path,
    max_lag: usize,
    squared: bool,
    out: &OutArgs,
    argv: &[String],
) -> Result<(), String> {
    let mut values = read_series_column(input)?;
    if squared {
        for v in values.iter_mut() {
            *v *= *v;
        }
    }
    let result = acf(&values, max_lag).map_err(|e| e.to_string())?;
    let dir = out.resolve()?;
    io::write_acf(&result, &dir.join("acf.csv")).map_err(|e| e.to_string())?;
    write_manifest(&dir, argv, &["acf.csv".to_string()])
}

#[allow(clippy::too_many_arguments)]
fn cmd_qq(
    input: &Path,
    dist: &str,
    nu: Option<f64>,
    mu: Option<f64>,
    sigma: Option<f64>,
    points: usize,
    out: &OutArgs,
    argv: &[String],
) -> Result<(), String> {
    let values = read_series_column(input)?;
    let pts = match dist {
        "exp" => {
            let nu = nu.ok_or("--nu is required for dist exp")?;
            qq_points(&values, exponential_quantile(nu), points)
        }
        "gaussian" => {
            let mu = mu.ok_or("--mu is required for dist gaussian")?;
            let sigma = sigma.ok_or("--sigma is required for dist gaussian")?;
            qq_points(&values, gaussian_quantile(mu, sigma), points)
        }
        other => return Err(format!("unknown dist {other}; use exp or gaussian")),
    }
    .map_err(|e| e.to_string())?;
    let dir = out.resolve()?;
    io::write_qq(&pts, &dir.join("qq.csv")).map_err(|e| e.to_string())?;
    write_manifest(&dir, argv, &["qq.csv".to_string()])
}

#[allow(clippy::too_many_arguments)]
fn cmd_volmap(
    msmd: &MsmdArgs,
    nu_max: f64,
    mu: f64,
    sigma: f64,
    lambda_min: f64,
    lambda_max: f64,
    points: usize,
    tau: f64,
    n_windows: usize,
    seed: u64,
    price_ref: f64,
    tick_size: f64,
    out: &OutArgs,
    argv: &[String],
) -> Result<(), String> {
    if points < 4 {
        return Err("--points must be at least 4".into());
    }
    if !(lambda_min > 0.0) || lambda_max <= lambda_min {
        return Err("need 0 < lambda-min < lambda-max".into());
    }
    let base = TmsmdParams::new(msmd.params()?, nu_max).map_err(|e| e.to_string())?;
    let g = GaussianParams::new(mu, sigma).map_err(|e| e.to_string())?;
    // Log-spaced grid: the sweep spans nearly three decades of intensity.
    let ratio = lambda_max / lambda_min;
    let grid: Vec<f64> = (0..points)
        .map(|i| lambda_min * ratio.powf(i as f64 / (points - 1) as f64))
        .collect();
    let curve = vol_curve(
        &base,
        &g,
        &grid,
        tau,
        n_windows,
        seed,
        price_ref,
        DEFAULT_ANNUAL_MS,
        tick_size,
    )
    .map_err(|e| e.to_string())?;
    let dir = out.resolve()?;
    io::write_vol_curve(&curve, &dir.join("volmap.csv"), &dir.join("cubic.json"))
        .map_err(|e| e.to_string())?;
    write_manifest(
        &dir,
        argv,
        &["volmap.csv".to_string(), "cubic.json".to_string()],
    )
}

fn cmd_leadlag(
    leader_path: &Path,
    follower_path: &Path,
    max_lag: i64,
    out: &OutArgs,
    argv: &[String],
) -> Result<(), String> {
    let leader = load_ticks(leader_path)?;
    let follower = load_ticks(follower_path)?;
    let t0 = leader
        .first_ms()
        .ok_or("empty leader series")?
        .max(follower.first_ms().ok_or("empty follower series")?);
    let t1 = leader
        .last_ms()
        .unwrap()
        .min(follower.last_ms().unwrap())
        + 1;
    if t1 <= t0 {
        return Err("leader and follower series do not overlap".into());
    }
    let leader_if = inforce_series(&leader, t0, t1).map_err(|e| e.to_string())?;
    let follower_if = inforce_series(&follower, t0, t1).map_err(|e| e.to_string())?;
    let events = price_changing_events(&leader_if);
    let resp = lagged_response(&events, &follower_if, max_lag).map_err(|e| e.to_string())?;
    let cum = cumulative_response(&resp);
    let dir = out.resolve()?;
    io::write_lag_response(&resp, &dir.join("response.csv")).map_err(|e| e.to_string())?;
    io::write_cumulative_response(&cum, &dir.join("cumulative.csv"))
        .map_err(|e| e.to_string())?;
    let summary = serde_json::json!({
        "n_events": resp.n_events,
        "n_skipped": resp.n_skipped,
        "ratio": cum.ratio,
        "ratio_is_infinite": cum.ratio.is_none(),
        "t_f": max_lag,
    });
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())? + "\n",
    )
    .map_err(|e| e.to_string())?;
    write_manifest(
        &dir,
        argv,
        &[
            "response.csv".to_string(),
            "cumulative.csv".to_string(),
            "summary.json".to_string(),
        ],
    )
}

fn cmd_replay(manifest_path: &Path, out_override: Option<PathBuf>) -> Result<(), String> {
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| format!("{}: {e}", manifest_path.display()))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let stored: Vec<String> = manifest["argv"]
        .as_array()
        .ok_or("manifest has no argv array")?
        .iter()
        .map(|v| v.as_str().map(String::from).ok_or("non-string argv entry"))
        .collect::<Result<_, _>>()?;
    let mut argv: Vec<String> = vec!["subclock".to_string()];
    argv.extend(stored);
    let out_dir = out_override.unwrap_or_else(|| {
        manifest_path
            .parent()
            .unwrap_or(Path::new("."))
            .to_path_buf()
    });
    // Replace the recorded output directory with the requested one.
    let mut replaced = false;
    for i in 0..argv.len() {
        if argv[i] == "--out" && i + 1 < argv.len() {
            argv[i + 1] = out_dir.display().to_string();
            replaced = true;
        }
    }
    if !replaced {
        argv.push("--out".to_string());
        argv.push(out_dir.display().to_string());
    }
    // Guard against a replay manifest pointing at itself.
    let mut seen = BTreeSet::new();
    for a in &argv {
        seen.insert(a.clone());
    }
    if seen.contains("replay") && argv.get(1).map(String::as_str) == Some("replay") {
        return Err("manifest records a replay command; refusing to recurse".into());
    }
    run(argv)
}
